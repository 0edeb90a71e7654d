"""On-policy trainer: batch collection, advantage estimation, clipped updates.

Episodes are collected in lockstep across segments so the policy and value
forward passes batch across episodes; the per-episode signal chain itself is
stepped by the same scalar environment path used everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, adam_step, backward, clip_global_norm
from .dataset import DatasetSplit, LabeledSegment
from .env import EnvConfig, SmfEnv, evaluate_policy, scale_time
from .errors import ConfigError, DataError, TrainingAbort
from .nets import GaussianPolicy, NetConfig, ValueNet

ESTIMATORS = ("gae", "terminal")


@dataclass
class PpoConfig:
    batch_transitions: int = 500
    minibatches: int = 4
    epochs: int = 4
    lr: float = 1e-4
    clip_eps: float = 0.2
    grad_clip: float = 0.5
    gae_lambda: float = 0.95
    gamma: float = 1.0
    total_steps: int = 100_000
    advantage_estimator: str = "gae"
    value_coef: float = 0.5
    eval_every: int = 5000

    def validate(self) -> None:
        if self.batch_transitions < 1 or self.batch_transitions % self.minibatches != 0:
            raise ConfigError("batch_transitions must be a positive multiple of minibatches")
        if not 0.0 < self.clip_eps < 1.0:
            raise ConfigError("clip_eps must be in (0, 1)")
        if self.epochs < 1 or self.minibatches < 1:
            raise ConfigError("epochs and minibatches must be >= 1")
        if self.lr <= 0 or self.grad_clip <= 0 or self.value_coef < 0:
            raise ConfigError("lr and grad_clip must be positive, value_coef >= 0")
        if not 0.0 <= self.gae_lambda <= 1.0 or not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gae_lambda and gamma must be in [0, 1]")
        if self.advantage_estimator not in ESTIMATORS:
            raise ConfigError(f"advantage_estimator must be one of {ESTIMATORS}")
        if self.total_steps < 0 or self.eval_every < 1:
            raise ConfigError("total_steps must be >= 0 and eval_every >= 1")


@dataclass
class AdvantageBatch:
    """Batch-aligned transition arrays; old_logps were recorded under the
    policy that generated the actions."""

    signals: np.ndarray      # [M, L]
    times: np.ndarray        # [M], already scaled to (0, 1]
    actions: np.ndarray      # [M, H]
    old_logps: np.ndarray    # [M]
    returns: np.ndarray      # [M]
    advantages: np.ndarray   # [M]
    episode_rewards: np.ndarray  # [episodes], terminal rewards, for reporting

    def __len__(self) -> int:
        return self.signals.shape[0]


def compute_gae(rewards: np.ndarray, values: np.ndarray,
                gamma: float, lam: float) -> np.ndarray:
    """Generalised advantage estimates for one episode's aligned arrays.

    delta_t = r_t + gamma*V(s_{t+1}) - V(s_t) with V past the horizon taken
    as 0; A_t = sum_l (gamma*lam)^l delta_{t+l}.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1:
        raise DataError("compute_gae: rewards and values must be equal-length 1-D arrays")
    n = rewards.shape[0]
    adv = np.empty(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        next_v = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_v - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
    return adv


def collect_batch(policy: GaussianPolicy, value: ValueNet, env_config: EnvConfig,
                  segments: list[LabeledSegment], n: int,
                  rng: np.random.Generator, cfg: PpoConfig) -> AdvantageBatch:
    """Roll out whole episodes until at least `n` transitions are gathered.

    `n` is rounded up to a whole-episode multiple, so 500 requested
    transitions with episode length 3 yields 501.
    """
    if not segments:
        raise DataError("collect_batch: empty segment list")
    n_len = env_config.episode_len
    h = env_config.template_len
    episodes = -(-n // n_len)  # ceil
    idx = rng.integers(0, len(segments), size=episodes)
    envs = [SmfEnv(env_config) for _ in range(episodes)]
    signals = np.stack([envs[i].reset(segments[idx[i]]).signal for i in range(episodes)])

    sig_steps = np.empty((episodes, n_len, env_config.signal_len))
    act_steps = np.empty((episodes, n_len, h))
    logp_steps = np.empty((episodes, n_len))
    term_rewards = np.empty(episodes)

    for t in range(1, n_len + 1):
        times = np.full(episodes, scale_time(t, n_len))
        actions, logps = policy.sample_actions(signals, times, rng)
        sig_steps[:, t - 1] = signals
        act_steps[:, t - 1] = actions
        logp_steps[:, t - 1] = logps
        for i, env in enumerate(envs):
            state, reward, done, _ = env.step(actions[i])
            signals[i] = state.signal
            if done:
                term_rewards[i] = reward

    flat_sig = sig_steps.reshape(episodes * n_len, env_config.signal_len)
    flat_times = np.tile(
        np.array([scale_time(t, n_len) for t in range(1, n_len + 1)]), episodes
    )
    values = value.values(flat_sig, flat_times).reshape(episodes, n_len)

    advantages = np.empty((episodes, n_len))
    returns = np.empty((episodes, n_len))
    for i in range(episodes):
        rew = np.zeros(n_len)
        rew[-1] = term_rewards[i]
        if cfg.advantage_estimator == "terminal":
            advantages[i] = term_rewards[i] - values[i]
            returns[i] = term_rewards[i]
        else:
            advantages[i] = compute_gae(rew, values[i], cfg.gamma, cfg.gae_lambda)
            returns[i] = advantages[i] + values[i]

    return AdvantageBatch(
        signals=flat_sig,
        times=flat_times,
        actions=act_steps.reshape(episodes * n_len, h),
        old_logps=logp_steps.reshape(episodes * n_len),
        returns=returns.reshape(-1),
        advantages=advantages.reshape(-1),
        episode_rewards=term_rewards,
    )


def ppo_surrogate_loss(policy: GaussianPolicy, signals: np.ndarray, times: np.ndarray,
                       actions: np.ndarray, old_logps: np.ndarray,
                       advantages: np.ndarray, clip_eps: float) -> tuple[Tensor, np.ndarray]:
    """Negative clipped surrogate (to minimize) and the ratio array."""
    mu, log_sigma = policy.forward(signals, times)
    logp = policy.log_prob_given_heads(mu, log_sigma, actions)
    ratio = ad.exp(ad.sub(logp, Tensor(old_logps)))
    adv = Tensor(advantages)
    unclipped = ad.mul(ratio, adv)
    clipped = ad.mul(ad.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), adv)
    loss = ad.neg(ad.mean_all(ad.minimum(unclipped, clipped)))
    return loss, ratio.data


def ppo_update(policy: GaussianPolicy, value: ValueNet, batch: AdvantageBatch,
               cfg: PpoConfig, rng: np.random.Generator) -> dict:
    """Clipped-surrogate policy epochs plus value regression toward returns."""
    m = len(batch)
    adv = batch.advantages
    adv_std = (adv - adv.mean()) / (adv.std() + 1e-8)

    policy_losses, value_losses, clip_fracs, ratio_means = [], [], [], []
    for _ in range(cfg.epochs):
        order = rng.permutation(m)
        for chunk in np.array_split(order, cfg.minibatches):
            with Tape():
                loss, ratios = ppo_surrogate_loss(
                    policy, batch.signals[chunk], batch.times[chunk],
                    batch.actions[chunk], batch.old_logps[chunk],
                    adv_std[chunk], cfg.clip_eps,
                )
                if not np.isfinite(loss.data):
                    raise TrainingAbort(
                        f"policy loss became non-finite (ratio range "
                        f"{ratios.min():.3g}..{ratios.max():.3g})"
                    )
                backward(loss)
            clip_global_norm(policy.store, cfg.grad_clip)
            adam_step(policy.store, cfg.lr)
            policy_losses.append(float(loss.data))
            clip_fracs.append(float(np.mean(np.abs(ratios - 1.0) > cfg.clip_eps)))
            ratio_means.append(float(ratios.mean()))

            with Tape():
                v = value.forward(batch.signals[chunk], batch.times[chunk])
                v_loss = ad.mul_const(
                    ad.mean_all(ad.square(ad.sub(v, Tensor(batch.returns[chunk])))),
                    cfg.value_coef,
                )
                if not np.isfinite(v_loss.data):
                    raise TrainingAbort("value loss became non-finite")
                backward(v_loss)
            clip_global_norm(value.store, cfg.grad_clip)
            adam_step(value.store, cfg.lr)
            value_losses.append(float(v_loss.data))

    return {
        "policy_loss": float(np.mean(policy_losses)),
        "value_loss": float(np.mean(value_losses)),
        "clip_fraction": float(np.mean(clip_fracs)),
        "ratio_mean": float(np.mean(ratio_means)),
    }


def train_ppo(env_config: EnvConfig, data: DatasetSplit, cfg: PpoConfig, seed: int,
              net_config: NetConfig | None = None,
              ) -> tuple[GaussianPolicy, ValueNet, list[dict]]:
    """Alternate collection and updates until total_steps transitions are seen.

    Returns the trained nets and a metric trace with one row per periodic
    deterministic evaluation on the test split.
    """
    env_config.validate()
    cfg.validate()
    if net_config is None:
        net_config = NetConfig(
            signal_len=env_config.signal_len, template_len=env_config.template_len
        )
    if not data.train or not data.test:
        raise DataError("train_ppo: empty train or test split")
    rng = np.random.Generator(np.random.PCG64(seed))
    policy = GaussianPolicy.build(net_config, rng, squash=False)
    value = ValueNet.build(net_config, rng)

    trace: list[dict] = []
    steps = 0
    next_eval = cfg.eval_every
    reward_window: list[float] = []

    def emit(step: int) -> None:
        precision, recall, f1, _ = evaluate_policy(policy, data.test, env_config)
        mean_r = float(np.mean(reward_window)) if reward_window else 0.0
        trace.append({
            "step": step, "mean_reward": mean_r,
            "precision": precision, "recall": recall, "f1": f1,
        })
        reward_window.clear()

    while steps < cfg.total_steps:
        batch = collect_batch(
            policy, value, env_config, data.train, cfg.batch_transitions, rng, cfg
        )
        ppo_update(policy, value, batch, cfg, rng)
        steps += len(batch)
        reward_window.extend(batch.episode_rewards.tolist())
        while steps >= next_eval:
            emit(min(steps, next_eval))
            next_eval += cfg.eval_every
    if cfg.total_steps > 0 and (not trace or trace[-1]["step"] < steps):
        emit(steps)
    return policy, value, trace
