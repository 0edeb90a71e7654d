"""Off-policy trainer: replay buffer, soft Bellman critics, entropy-regularized
policy updates, and Polyak-averaged target networks.

Stepping and updates interleave on a single thread; update order within a
round is fixed (targets, critic regression, policy step, Polyak) so runs are
reproducible from the seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tape, Tensor, adam_step, backward
from .dataset import DatasetSplit
from .env import EnvConfig, SmfEnv, Transition, evaluate_policy, scale_time
from .errors import ConfigError, DataError, DimensionError, LifecycleError, TrainingAbort
from .nets import GaussianPolicy, NetConfig, QNet


@dataclass
class SacConfig:
    update_every: int = 2
    batch_size: int = 512
    lr: float = 1e-4
    alpha: float = 0.2
    polyak_tau: float = 0.005
    buffer_capacity: int = 100_000
    warmup_steps: int = 1000
    total_steps: int = 100_000
    twin_q: bool = True
    eval_every: int = 5000

    def validate(self) -> None:
        if not 0.0 < self.polyak_tau <= 1.0:
            raise ConfigError("polyak_tau must be in (0, 1]")
        if self.batch_size < 1 or self.batch_size > self.buffer_capacity:
            raise ConfigError("batch_size must be in [1, buffer_capacity]")
        if self.update_every < 1 or self.warmup_steps < 0 or self.total_steps < 0:
            raise ConfigError("update_every must be >= 1; step counts must be >= 0")
        if self.lr <= 0 or self.alpha < 0:
            raise ConfigError("lr must be positive and alpha >= 0")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")


class ReplayBuffer:
    """Fixed-capacity ring of single-step transitions with uniform sampling."""

    def __init__(self, capacity: int, signal_len: int, template_len: int):
        if capacity < 1:
            raise ConfigError("buffer capacity must be >= 1")
        self.capacity = capacity
        self.size = 0
        self.cursor = 0
        self.signals = np.empty((capacity, signal_len))
        self.times = np.empty(capacity)
        self.actions = np.empty((capacity, template_len))
        self.rewards = np.empty(capacity)
        self.next_signals = np.empty((capacity, signal_len))
        self.next_times = np.empty(capacity)
        self.dones = np.empty(capacity)

    def push(self, tr: Transition, episode_len: int) -> None:
        i = self.cursor
        self.signals[i] = tr.state.signal
        self.times[i] = scale_time(tr.state.t, episode_len)
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        self.next_signals[i] = tr.next_state.signal
        self.next_times[i] = scale_time(tr.next_state.t, episode_len)
        self.dones[i] = 1.0 if tr.done else 0.0
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Uniform i.i.d. draw with replacement over stored items.

        `n` may exceed the stored count (draws repeat); the trainer separately
        waits until the buffer holds a full batch before updating.
        """
        if self.size < 1:
            raise LifecycleError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=n)
        return {
            "signals": self.signals[idx],
            "times": self.times[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_signals": self.next_signals[idx],
            "next_times": self.next_times[idx],
            "dones": self.dones[idx],
        }


def q_target(batch: dict[str, np.ndarray], policy: GaussianPolicy,
             q1_targ: QNet, q2_targ: QNet, alpha: float,
             rng: np.random.Generator) -> np.ndarray:
    """Soft Bellman target: r + (1-done) * (min target Q(s', a') - alpha*logpi).

    The next action is sampled fresh from the current policy, without
    gradients; terminal transitions reduce to the reward alone.
    """
    mu, log_sigma = policy.forward(batch["next_signals"], batch["next_times"])
    noise = rng.standard_normal(mu.data.shape)
    a_next, logp_next = policy.reparam_sample(mu, log_sigma, noise)
    q1 = q1_targ.values(batch["next_signals"], batch["next_times"], a_next.data)
    q2 = q2_targ.values(batch["next_signals"], batch["next_times"], a_next.data)
    q_min = np.minimum(q1, q2)
    return batch["rewards"] + (1.0 - batch["dones"]) * (q_min - alpha * logp_next.data)


def q_update(q1: QNet, q2: QNet, batch: dict[str, np.ndarray],
             y: np.ndarray, lr: float) -> float:
    """Regress both critics onto the shared target; one Adam step each."""
    with Tape():
        p1 = q1.forward(batch["signals"], batch["times"], batch["actions"])
        p2 = q2.forward(batch["signals"], batch["times"], batch["actions"])
        l1 = ad.mean_all(ad.square(ad.sub(p1, Tensor(y))))
        l2 = ad.mean_all(ad.square(ad.sub(p2, Tensor(y))))
        total = ad.add(l1, l2)
        if not np.isfinite(total.data):
            raise TrainingAbort("critic loss became non-finite")
        backward(total)
    adam_step(q1.store, lr)
    adam_step(q2.store, lr)
    return float(0.5 * (l1.data + l2.data))


def sac_policy_update(policy: GaussianPolicy, q1: QNet, q2: QNet,
                      batch: dict[str, np.ndarray], alpha: float, lr: float,
                      rng: np.random.Generator) -> float:
    """Minimize E[alpha*logpi(a|s) - min Q(s, a)] over reparameterized actions."""
    q1.store.set_requires_grad(False)
    q2.store.set_requires_grad(False)
    try:
        with Tape():
            mu, log_sigma = policy.forward(batch["signals"], batch["times"])
            noise = rng.standard_normal(mu.data.shape)
            a, logp = policy.reparam_sample(mu, log_sigma, noise)
            qa = q1.forward(batch["signals"], batch["times"], a)
            qb = q2.forward(batch["signals"], batch["times"], a)
            loss = ad.mean_all(ad.sub(ad.mul_const(logp, alpha), ad.minimum(qa, qb)))
            if not np.isfinite(loss.data):
                raise TrainingAbort("policy loss became non-finite")
            backward(loss)
    finally:
        q1.store.set_requires_grad(True)
        q2.store.set_requires_grad(True)
    adam_step(policy.store, lr)
    return float(loss.data)


def polyak_update(target: ParamStore, online: ParamStore, tau: float = 0.005) -> None:
    """target <- (1 - tau)*target + tau*online for every parameter array."""
    for name, t in target.items():
        src = online.params.get(name)
        if src is None or src.data.shape != t.data.shape:
            raise DimensionError(f"polyak_update: parameter {name!r} missing or mismatched")
        t.data *= 1.0 - tau
        t.data += tau * src.data


def train_sac(env_config: EnvConfig, data: DatasetSplit, cfg: SacConfig, seed: int,
              net_config: NetConfig | None = None,
              ) -> tuple[GaussianPolicy, dict[str, QNet], list[dict]]:
    """Step the environment with policy actions (uniform random during warmup),
    updating every `update_every` steps from replayed batches.

    Returns the policy, the critic dict (q1, q2, q1_target, q2_target), and
    the metric trace.
    """
    env_config.validate()
    cfg.validate()
    if net_config is None:
        net_config = NetConfig(
            signal_len=env_config.signal_len, template_len=env_config.template_len
        )
    if not data.train or not data.test:
        raise DataError("train_sac: empty train or test split")
    rng = np.random.Generator(np.random.PCG64(seed))
    policy = GaussianPolicy.build(net_config, rng, squash=True)
    q1 = QNet.build(net_config, rng)
    q2 = QNet.build(net_config, rng)
    q1_targ = QNet.build(net_config, rng)
    q2_targ = QNet.build(net_config, rng)
    q1_targ.store.copy_values_from(q1.store)
    q2_targ.store.copy_values_from(q2.store)

    buf = ReplayBuffer(cfg.buffer_capacity, env_config.signal_len, env_config.template_len)
    env = SmfEnv(env_config)

    trace: list[dict] = []
    reward_window: list[float] = []
    steps = 0
    next_eval = cfg.eval_every

    def emit(step: int) -> None:
        precision, recall, f1, _ = evaluate_policy(policy, data.test, env_config)
        mean_r = float(np.mean(reward_window)) if reward_window else 0.0
        trace.append({
            "step": step, "mean_reward": mean_r,
            "precision": precision, "recall": recall, "f1": f1,
        })
        reward_window.clear()

    state = None
    while steps < cfg.total_steps:
        if state is None:
            segment = data.train[int(rng.integers(0, len(data.train)))]
            state = env.reset(segment)
        if steps < cfg.warmup_steps:
            action = rng.uniform(-1.0, 1.0, env_config.template_len)
        else:
            action, _ = policy.act(state.signal, scale_time(state.t, env_config.episode_len), rng)
        next_state, reward, done, _ = env.step(action)
        buf.push(
            Transition(state=state, action=action, reward=reward,
                       next_state=next_state, done=done),
            env_config.episode_len,
        )
        steps += 1
        state = None if done else next_state
        if done:
            reward_window.append(reward)

        if steps > cfg.warmup_steps and buf.size >= cfg.batch_size \
                and steps % cfg.update_every == 0:
            batch = buf.sample(cfg.batch_size, rng)
            if cfg.twin_q:
                y = q_target(batch, policy, q1_targ, q2_targ, cfg.alpha, rng)
            else:
                y = q_target(batch, policy, q1_targ, q1_targ, cfg.alpha, rng)
            q_update(q1, q2, batch, y, cfg.lr)
            if cfg.twin_q:
                sac_policy_update(policy, q1, q2, batch, cfg.alpha, cfg.lr, rng)
            else:
                sac_policy_update(policy, q1, q1, batch, cfg.alpha, cfg.lr, rng)
            polyak_update(q1_targ.store, q1.store, cfg.polyak_tau)
            polyak_update(q2_targ.store, q2.store, cfg.polyak_tau)

        if steps >= next_eval:
            emit(next_eval)
            next_eval += cfg.eval_every
    if cfg.total_steps > 0 and (not trace or trace[-1]["step"] < steps):
        emit(steps)

    critics = {"q1": q1, "q2": q2, "q1_target": q1_targ, "q2_target": q2_targ}
    return policy, critics, trace
