"""Network topologies: shared conv trunk, Gaussian policy head, value and Q heads.

All three nets consume a signal of length L plus the scaled step index; the Q
net additionally concatenates the template into the fused feature vector. The
code paths below run identically with or without an active autodiff tape, so
sampling during rollouts and the differentiable training passes share bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .errors import ConfigError, DimensionError

LOG_SIGMA_MIN = -20.0
LOG_SIGMA_MAX = 2.0
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class NetConfig:
    signal_len: int = 250
    template_len: int = 8
    conv1: tuple[int, int, int] = (32, 8, 4)  # (channels, kernel, stride)
    conv2: tuple[int, int, int] = (32, 4, 2)
    feat_dim: int = 128
    hidden_dim: int = 128

    def conv1_out_len(self) -> int:
        _, k, s = self.conv1
        return (self.signal_len - k) // s + 1

    def conv2_out_len(self) -> int:
        _, k, s = self.conv2
        return (self.conv1_out_len() - k) // s + 1

    def flatten_dim(self) -> int:
        return self.conv2[0] * self.conv2_out_len()

    def validate(self) -> None:
        for name, (c, k, s) in (("conv1", self.conv1), ("conv2", self.conv2)):
            if c < 1 or k < 1 or s < 1:
                raise ConfigError(f"{name} sizes must be positive, got {(c, k, s)}")
        if self.signal_len < self.conv1[1]:
            raise ConfigError("signal shorter than the first kernel")
        if self.conv1_out_len() < self.conv2[1]:
            raise ConfigError("first conv output shorter than the second kernel")
        if self.feat_dim < 1 or self.hidden_dim < 1 or self.template_len < 1:
            raise ConfigError("feature, hidden, and template sizes must be positive")


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((rows, cols))
    flat = a if rows >= cols else a.T
    q, r = np.linalg.qr(flat)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    q = q * d
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def _init_trunk(store: ParamStore, cfg: NetConfig, rng: np.random.Generator) -> None:
    c1, k1, _ = cfg.conv1
    c2, k2, _ = cfg.conv2
    store.add("conv1.w", _orthogonal(rng, c1, k1, np.sqrt(2.0)).reshape(c1, 1, k1))
    store.add("conv1.b", np.zeros(c1))
    store.add("conv2.w", _orthogonal(rng, c2, c1 * k2, np.sqrt(2.0)).reshape(c2, c1, k2))
    store.add("conv2.b", np.zeros(c2))
    store.add("fc1.w", _orthogonal(rng, cfg.feat_dim, cfg.flatten_dim(), np.sqrt(2.0)))
    store.add("fc1.b", np.zeros(cfg.feat_dim))


def _forward_trunk(store: ParamStore, cfg: NetConfig, signals: np.ndarray) -> Tensor:
    # channels-last throughout: flattening the conv stack output is then free
    if signals.ndim != 2 or signals.shape[1] != cfg.signal_len:
        raise DimensionError(f"expected signals [batch, {cfg.signal_len}], got {signals.shape}")
    x = Tensor(signals[:, :, None])
    h = ad.relu(ad.conv1d_cl(x, store["conv1.w"], store["conv1.b"], cfg.conv1[2]))
    h = ad.relu(ad.conv1d_cl(h, store["conv2.w"], store["conv2.b"], cfg.conv2[2]))
    h = ad.reshape(h, (signals.shape[0], cfg.flatten_dim()))
    return ad.relu(ad.linear(h, store["fc1.w"], store["fc1.b"]))


def _fuse(store: ParamStore, feat: Tensor, extras: list[Tensor]) -> Tensor:
    joined = ad.concat([feat] + extras)
    return ad.relu(ad.linear(joined, store["fc2.w"], store["fc2.b"]))


def _times_column(times: np.ndarray, batch: int) -> Tensor:
    times = np.asarray(times, dtype=np.float64).reshape(batch, 1)
    return Tensor(times)


class GaussianPolicy:
    """Diagonal Gaussian template policy; optionally tanh-squashed (SAC)."""

    def __init__(self, config: NetConfig, store: ParamStore, squash: bool):
        self.config = config
        self.store = store
        self.squash = squash

    @classmethod
    def build(cls, config: NetConfig, rng: np.random.Generator, squash: bool) -> "GaussianPolicy":
        config.validate()
        store = ParamStore()
        _init_trunk(store, config, rng)
        store.add("fc2.w", _orthogonal(rng, config.hidden_dim, config.feat_dim + 1, np.sqrt(2.0)))
        store.add("fc2.b", np.zeros(config.hidden_dim))
        store.add("mu.w", _orthogonal(rng, config.template_len, config.hidden_dim, 0.01))
        store.add("mu.b", np.zeros(config.template_len))
        store.add("log_sigma.w", _orthogonal(rng, config.template_len, config.hidden_dim, 0.01))
        store.add("log_sigma.b", np.zeros(config.template_len))
        return cls(config, store, squash)

    def forward(self, signals: np.ndarray, times: np.ndarray) -> tuple[Tensor, Tensor]:
        feat = _forward_trunk(self.store, self.config, signals)
        g = _fuse(self.store, feat, [_times_column(times, signals.shape[0])])
        mu = ad.linear(g, self.store["mu.w"], self.store["mu.b"])
        log_sigma = ad.clip(
            ad.linear(g, self.store["log_sigma.w"], self.store["log_sigma.b"]),
            LOG_SIGMA_MIN, LOG_SIGMA_MAX,
        )
        return mu, log_sigma

    # -- sampling ---------------------------------------------------------

    def reparam_sample(self, mu: Tensor, log_sigma: Tensor,
                       noise: np.ndarray) -> tuple[Tensor, Tensor]:
        """Differentiable action + log-prob from fixed standard-normal noise."""
        u = ad.gaussian_reparam_sample(mu, log_sigma, Tensor(noise))
        h = mu.data.shape[1]
        base_const = -(0.5 * (noise * noise).sum(axis=1) + 0.5 * h * _LOG_2PI)
        base = ad.add(ad.neg(ad.sum_last(log_sigma)), Tensor(base_const))
        if not self.squash:
            return u, base
        a = ad.tanh(u)
        logp = ad.sub(base, ad.sum_last(ad.squash_log_jac(u)))
        return a, logp

    def sample_actions(self, signals: np.ndarray, times: np.ndarray,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        mu, log_sigma = self.forward(signals, times)
        noise = rng.standard_normal(mu.data.shape)
        a, logp = self.reparam_sample(mu, log_sigma, noise)
        if not self.squash:
            # evaluate the density the same way a later recomputation will, so
            # recorded log-probs reproduce bit for bit (importance ratios == 1)
            logp = self.log_prob_given_heads(mu, log_sigma, a.data)
        return a.data, logp.data

    def mean_actions(self, signals: np.ndarray, times: np.ndarray) -> np.ndarray:
        mu, _ = self.forward(signals, times)
        return np.tanh(mu.data) if self.squash else mu.data.copy()

    def act(self, signal: np.ndarray, time_scaled: float,
            rng: np.random.Generator) -> tuple[np.ndarray, float]:
        a, logp = self.sample_actions(signal[None, :], np.array([time_scaled]), rng)
        return a[0], float(logp[0])

    # -- densities --------------------------------------------------------

    def log_prob_given_heads(self, mu: Tensor, log_sigma: Tensor,
                             actions: np.ndarray) -> Tensor:
        """Differentiable log-density of stored actions; [batch]."""
        if not self.squash:
            return ad.diag_gaussian_logp(mu, log_sigma, Tensor(actions))
        if np.any(np.abs(actions) >= 1.0):
            raise ValueError("squashed log_prob requires |a| < 1 componentwise")
        u_np = np.arctanh(actions)
        gauss = ad.diag_gaussian_logp(mu, log_sigma, Tensor(u_np))
        # log(1 - tanh(u)^2) in its stable form, same expression squash_log_jac uses
        jac = (2.0 * (np.log(2.0) - u_np - np.logaddexp(0.0, -2.0 * u_np))).sum(axis=1)
        return ad.sub(gauss, Tensor(jac))

    def log_prob(self, signals: np.ndarray, times: np.ndarray,
                 actions: np.ndarray) -> np.ndarray:
        mu, log_sigma = self.forward(signals, times)
        return self.log_prob_given_heads(mu, log_sigma, actions).data


class ValueNet:
    """State -> scalar expected episode return."""

    def __init__(self, config: NetConfig, store: ParamStore):
        self.config = config
        self.store = store

    @classmethod
    def build(cls, config: NetConfig, rng: np.random.Generator) -> "ValueNet":
        config.validate()
        store = ParamStore()
        _init_trunk(store, config, rng)
        store.add("fc2.w", _orthogonal(rng, config.hidden_dim, config.feat_dim + 1, np.sqrt(2.0)))
        store.add("fc2.b", np.zeros(config.hidden_dim))
        store.add("head.w", _orthogonal(rng, 1, config.hidden_dim, 1.0))
        store.add("head.b", np.zeros(1))
        return cls(config, store)

    def forward(self, signals: np.ndarray, times: np.ndarray) -> Tensor:
        feat = _forward_trunk(self.store, self.config, signals)
        g = _fuse(self.store, feat, [_times_column(times, signals.shape[0])])
        v = ad.linear(g, self.store["head.w"], self.store["head.b"])
        return ad.reshape(v, (signals.shape[0],))

    def values(self, signals: np.ndarray, times: np.ndarray) -> np.ndarray:
        return self.forward(signals, times).data


class QNet:
    """(State, template) -> scalar value; template joins the fused features."""

    def __init__(self, config: NetConfig, store: ParamStore):
        self.config = config
        self.store = store

    @classmethod
    def build(cls, config: NetConfig, rng: np.random.Generator) -> "QNet":
        config.validate()
        store = ParamStore()
        _init_trunk(store, config, rng)
        in_dim = config.feat_dim + 1 + config.template_len
        store.add("fc2.w", _orthogonal(rng, config.hidden_dim, in_dim, np.sqrt(2.0)))
        store.add("fc2.b", np.zeros(config.hidden_dim))
        store.add("head.w", _orthogonal(rng, 1, config.hidden_dim, 1.0))
        store.add("head.b", np.zeros(1))
        return cls(config, store)

    def forward(self, signals: np.ndarray, times: np.ndarray, actions) -> Tensor:
        a = actions if isinstance(actions, Tensor) else Tensor(np.asarray(actions))
        if a.data.shape != (signals.shape[0], self.config.template_len):
            raise DimensionError(
                f"actions shape {a.data.shape} does not match "
                f"[batch, {self.config.template_len}]"
            )
        feat = _forward_trunk(self.store, self.config, signals)
        g = _fuse(self.store, feat, [_times_column(times, signals.shape[0]), a])
        q = ad.linear(g, self.store["head.w"], self.store["head.b"])
        return ad.reshape(q, (signals.shape[0],))

    def values(self, signals: np.ndarray, times: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return self.forward(signals, times, actions).data
