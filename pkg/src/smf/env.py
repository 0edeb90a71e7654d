"""The sequential matched-filter decision process.

An episode applies N policy-chosen templates to a segment; the signal after
each correlation (max-abs normalized) becomes the next state. Peaks are
extracted and scored only after the final step, so rewards are zero until
then.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledSegment
from .errors import ConfigError, DataError, LifecycleError
from .signal_ops import (
    DetectionOutcome,
    correlate,
    find_peaks,
    match_peaks,
    normalize_maxabs,
    reward_f1,
    reward_linear,
)

REWARD_KINDS = ("linear", "f1")


@dataclass
class EnvConfig:
    episode_len: int = 3
    template_len: int = 8
    signal_len: int = 250
    height: float = 0.5
    distance: int = 30
    tol: int = 5
    reward_kind: str = "linear"

    def validate(self) -> None:
        if self.episode_len < 1:
            raise ConfigError("episode_len must be >= 1")
        if self.template_len < 1:
            raise ConfigError("template_len must be >= 1")
        if self.signal_len < self.template_len:
            raise ConfigError("signal_len must be >= template_len")
        if self.distance < 1:
            raise ConfigError("distance must be >= 1")
        if self.tol < 0:
            raise ConfigError("tol must be >= 0")
        if self.reward_kind not in REWARD_KINDS:
            raise ConfigError(f"reward_kind must be one of {REWARD_KINDS}")


@dataclass
class State:
    signal: np.ndarray
    t: int  # 1-based step index within the episode


@dataclass
class Transition:
    state: State
    action: np.ndarray
    reward: float
    next_state: State
    done: bool


@dataclass
class Episode:
    segment_id: str
    transitions: list[Transition] = field(default_factory=list)
    outcome: DetectionOutcome | None = None

    @property
    def total_reward(self) -> float:
        return sum(tr.reward for tr in self.transitions)


def scale_time(t: int, episode_len: int) -> float:
    """Step index as fed to the networks: t/N, in (0, 1]."""
    return t / episode_len


class SmfEnv:
    """One environment instance; holds the current episode's signal and truth."""

    def __init__(self, config: EnvConfig):
        config.validate()
        self.config = config
        self._signal: np.ndarray | None = None
        self._truth: list[int] = []
        self._t = 0
        self._active = False

    def reset(self, segment: LabeledSegment) -> State:
        if segment.signal.shape != (self.config.signal_len,):
            raise DataError(
                f"segment length {segment.signal.shape} does not match "
                f"configured signal_len {self.config.signal_len}"
            )
        self._signal = normalize_maxabs(segment.signal)
        self._truth = list(segment.peaks)
        self._t = 1
        self._active = True
        return State(signal=self._signal, t=1)

    def step(self, action: np.ndarray) -> tuple[State, float, bool, DetectionOutcome | None]:
        if not self._active:
            raise LifecycleError("step() called on an inactive episode; call reset() first")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.config.template_len,):
            raise DataError(
                f"template shape {action.shape} does not match H={self.config.template_len}"
            )
        nxt = normalize_maxabs(correlate(self._signal, action))
        self._t += 1
        self._signal = nxt
        done = self._t > self.config.episode_len
        if done:
            self._active = False
            preds = find_peaks(nxt, self.config.height, self.config.distance)
            outcome = match_peaks(preds, self._truth, self.config.tol)
            if self.config.reward_kind == "linear":
                reward = reward_linear(outcome)
            else:
                reward = reward_f1(outcome)
            state = State(signal=nxt, t=self.config.episode_len)
            return state, reward, True, outcome
        return State(signal=nxt, t=self._t), 0.0, False, None


def rollout(env: SmfEnv, segment: LabeledSegment, policy, rng: np.random.Generator,
            deterministic: bool = False) -> Episode:
    """Run one full episode; the policy's mean action is used when deterministic."""
    cfg = env.config
    state = env.reset(segment)
    episode = Episode(segment_id=segment.id)
    for t in range(1, cfg.episode_len + 1):
        sig = state.signal[None, :]
        times = np.array([scale_time(t, cfg.episode_len)])
        if deterministic:
            action = policy.mean_actions(sig, times)[0]
        else:
            action, _ = policy.sample_actions(sig, times, rng)
            action = action[0]
        nxt, reward, done, outcome = env.step(action)
        episode.transitions.append(
            Transition(state=state, action=action, reward=reward, next_state=nxt, done=done)
        )
        state = nxt
    episode.outcome = outcome
    return episode


def evaluate_policy(policy, segments: list[LabeledSegment], config: EnvConfig):
    """Deterministic (mean-action) detection over segments, stepped in lockstep.

    Returns (micro precision, micro recall, micro F-1, per-segment outcomes).
    Batched forward passes only affect speed; each segment's signal chain is
    computed by the same scalar correlate/normalize path as a lone rollout.
    """
    from .signal_ops import metrics, sum_outcomes  # local import avoids cycle noise

    envs = [SmfEnv(config) for _ in segments]
    signals = np.stack([env.reset(seg).signal for env, seg in zip(envs, segments)])
    outcomes: list[DetectionOutcome] = [None] * len(segments)
    for t in range(1, config.episode_len + 1):
        times = np.full(len(segments), scale_time(t, config.episode_len))
        actions = policy.mean_actions(signals, times)
        for i, env in enumerate(envs):
            state, _, done, outcome = env.step(actions[i])
            signals[i] = state.signal
            if done:
                outcomes[i] = outcome
    precision, recall, f1 = metrics(sum_outcomes(outcomes))
    return precision, recall, f1, outcomes
