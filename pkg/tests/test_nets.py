"""Tests for the network topologies, the Gaussian head, and serialization."""

import numpy as np
import pytest

from smf.autodiff import Tape, Tensor, backward
from smf.env import EnvConfig
from smf.errors import ModelFileError
from smf.model_io import ModelBundle, load_model, save_model
from smf.nets import LOG_SIGMA_MAX, LOG_SIGMA_MIN, GaussianPolicy, NetConfig, QNet, ValueNet

from helpers import check_directional, rel_err

_LOG_2PI = float(np.log(2.0 * np.pi))


def expected_param_count(cfg: NetConfig, extras: int, heads: list[int]) -> int:
    """Independent count from layer shapes."""
    c1, k1, _ = cfg.conv1
    c2, k2, _ = cfg.conv2
    total = c1 * 1 * k1 + c1
    total += c2 * c1 * k2 + c2
    total += cfg.feat_dim * cfg.flatten_dim() + cfg.feat_dim
    total += cfg.hidden_dim * (cfg.feat_dim + extras) + cfg.hidden_dim
    for out in heads:
        total += out * cfg.hidden_dim + out
    return total


def build_all(seed=0, squash=False):
    cfg = NetConfig()
    rng = np.random.default_rng(seed)
    return (
        cfg,
        GaussianPolicy.build(cfg, rng, squash=squash),
        ValueNet.build(cfg, rng),
        QNet.build(cfg, rng),
    )


def states(batch=3, seed=1):
    rng = np.random.default_rng(seed)
    sig = rng.standard_normal((batch, 250))
    sig /= np.abs(sig).max(axis=1, keepdims=True)
    times = np.full(batch, 2 / 3)
    return sig, times


class TestParameterCounts:
    def test_policy_count_matches_shape_arithmetic(self):
        cfg, policy, value, q = build_all()
        assert policy.store.n_params() == expected_param_count(cfg, 1, [8, 8])
        assert policy.store.n_params() == 142032
        assert 130_000 <= policy.store.n_params() <= 170_000

    def test_value_and_q_counts(self):
        cfg, policy, value, q = build_all()
        assert value.store.n_params() == expected_param_count(cfg, 1, [1])
        assert q.store.n_params() == expected_param_count(cfg, 1 + 8, [1])
        # "around 140k" for each SAC net
        assert 120_000 <= policy.store.n_params() <= 180_000
        assert 120_000 <= q.store.n_params() <= 180_000


class TestPolicyForward:
    def test_zeroed_heads_give_zero_mu(self):
        _, policy, _, _ = build_all()
        policy.store["mu.w"].data[:] = 0.0
        policy.store["mu.b"].data[:] = 0.0
        sig, times = states()
        mu, _ = policy.forward(sig, times)
        np.testing.assert_array_equal(mu.data, np.zeros((3, 8)))

    def test_identical_states_identical_rows(self):
        _, policy, _, _ = build_all()
        sig, times = states(batch=1)
        rep = np.repeat(sig, 4, axis=0)
        mu, ls = policy.forward(rep, np.full(4, times[0]))
        for row in range(1, 4):
            np.testing.assert_array_equal(mu.data[row], mu.data[0])
            np.testing.assert_array_equal(ls.data[row], ls.data[0])

    def test_log_sigma_clamped(self):
        _, policy, _, _ = build_all()
        policy.store["log_sigma.b"].data[:] = 100.0
        sig, times = states()
        _, ls = policy.forward(sig, times)
        assert np.all(ls.data <= LOG_SIGMA_MAX)
        policy.store["log_sigma.b"].data[:] = -100.0
        _, ls = policy.forward(sig, times)
        assert np.all(ls.data >= LOG_SIGMA_MIN)


class TestActAndLogProb:
    def test_sigma_floor_makes_act_deterministic(self):
        _, policy, _, _ = build_all()
        policy.store["log_sigma.w"].data[:] = 0.0
        policy.store["log_sigma.b"].data[:] = LOG_SIGMA_MIN
        sig, times = states(batch=1)
        a, _ = policy.act(sig[0], times[0], np.random.default_rng(0))
        mu, _ = policy.forward(sig, times)
        np.testing.assert_allclose(a, mu.data[0], atol=1e-8)

    def test_logp_at_mean_matches_closed_form(self):
        _, policy, _, _ = build_all()
        sig, times = states(batch=2)
        mu, ls = policy.forward(sig, times)
        logp = policy.log_prob(sig, times, mu.data)
        expect = -ls.data.sum(axis=1) - 0.5 * 8 * _LOG_2PI
        np.testing.assert_allclose(logp, expect, rtol=1e-12)

    @pytest.mark.parametrize("squash", [False, True])
    def test_act_log_prob_round_trip(self, squash):
        _, policy, _, _ = build_all(squash=squash)
        sig, times = states(batch=5)
        rng = np.random.default_rng(3)
        actions, logps = policy.sample_actions(sig, times, rng)
        recomputed = policy.log_prob(sig, times, actions)
        np.testing.assert_allclose(recomputed, logps, atol=1e-9)

    def test_squashed_actions_bounded(self):
        _, policy, _, _ = build_all(squash=True)
        policy.store["mu.b"].data[:] = 3.0  # push means far out
        sig, times = states(batch=4)
        actions, _ = policy.sample_actions(sig, times, np.random.default_rng(4))
        assert np.all(np.abs(actions) < 1.0)

    def test_squashed_log_prob_rejects_saturated_actions(self):
        _, policy, _, _ = build_all(squash=True)
        sig, times = states(batch=1)
        with pytest.raises(ValueError):
            policy.log_prob(sig, times, np.ones((1, 8)))

    def test_logp_gradient_zero_at_mean(self):
        _, policy, _, _ = build_all()
        sig, times = states(batch=1)
        mu_val = policy.forward(sig, times)[0].data.copy()
        mu = Tensor(mu_val, requires_grad=True)
        ls = Tensor(np.zeros((1, 8)))
        from smf.autodiff import diag_gaussian_logp, sum_all
        with Tape():
            backward(sum_all(diag_gaussian_logp(mu, ls, Tensor(mu_val))))
        np.testing.assert_allclose(mu.grad, np.zeros((1, 8)), atol=1e-15)


class TestValueAndQ:
    def test_zero_head_gives_zero(self):
        _, _, value, q = build_all()
        value.store["head.w"].data[:] = 0.0
        q.store["head.w"].data[:] = 0.0
        sig, times = states()
        np.testing.assert_array_equal(value.values(sig, times), np.zeros(3))
        np.testing.assert_array_equal(q.values(sig, times, np.zeros((3, 8))), np.zeros(3))

    def test_batch_permutation_equivariance(self):
        _, _, value, q = build_all()
        sig, times = states(batch=5)
        actions = np.random.default_rng(5).standard_normal((5, 8))
        v = value.values(sig, times)
        qv = q.values(sig, times, actions)
        perm = np.array([3, 1, 4, 0, 2])
        np.testing.assert_allclose(value.values(sig[perm], times[perm]), v[perm], rtol=1e-12)
        np.testing.assert_allclose(
            q.values(sig[perm], times[perm], actions[perm]), qv[perm], rtol=1e-12
        )

    def test_full_net_gradients_match_fd(self):
        cfg = NetConfig(signal_len=40, conv1=(4, 8, 4), conv2=(4, 4, 2),
                        feat_dim=16, hidden_dim=16)
        rng = np.random.default_rng(6)
        policy = GaussianPolicy.build(cfg, rng, squash=False)
        value = ValueNet.build(cfg, rng)
        q = QNet.build(cfg, rng)
        sig = rng.standard_normal((3, 40))
        times = np.full(3, 1.0)
        actions = rng.standard_normal((3, 8))

        from smf import autodiff as ad
        check_directional(
            lambda: ad.mean_all(ad.add(*policy.forward(sig, times))),
            list(t for _, t in policy.store.items()), rng, n_dirs=6, tol=1e-5,
        )
        check_directional(
            lambda: ad.mean_all(value.forward(sig, times)),
            list(t for _, t in value.store.items()), rng, n_dirs=6, tol=1e-5,
        )
        check_directional(
            lambda: ad.mean_all(q.forward(sig, times, actions)),
            list(t for _, t in q.store.items()), rng, n_dirs=6, tol=1e-5,
        )


class TestDistributionProperties:
    def test_density_integrates_to_one_on_2d_slice(self):
        # Monte-Carlo integral over dims (0, 1) with the rest pinned at the mean
        _, policy, _, _ = build_all()
        sig, times = states(batch=1)
        mu, ls = policy.forward(sig, times)
        mu0, sigma0 = mu.data[0], np.exp(ls.data[0])
        rng = np.random.default_rng(7)
        n = 40_000
        span = 6.0
        lo = mu0[:2] - span * sigma0[:2]
        hi = mu0[:2] + span * sigma0[:2]
        pts = rng.uniform(lo, hi, size=(n, 2))
        z = (pts - mu0[:2]) / sigma0[:2]
        dens2 = np.exp(-0.5 * (z ** 2).sum(axis=1)) / (2 * np.pi * sigma0[0] * sigma0[1])
        area = float(np.prod(hi - lo))
        est = dens2.mean() * area
        se = dens2.std(ddof=1) * area / np.sqrt(n)
        assert abs(est - 1.0) <= 3.0 * se

    def test_entropy_closed_form_matches_sampling(self):
        _, policy, _, _ = build_all()
        sig, times = states(batch=1)
        _, ls = policy.forward(sig, times)
        h = 8
        closed = ls.data[0].sum() + 0.5 * h * (1.0 + _LOG_2PI)
        rng = np.random.default_rng(8)
        n = 20_000
        rep_sig = np.repeat(sig, 1, axis=0)
        logps = []
        for _ in range(20):
            _, lp = policy.sample_actions(np.repeat(sig, 1000, axis=0),
                                          np.full(1000, times[0]), rng)
            logps.append(lp)
        logps = np.concatenate(logps)
        est = -logps.mean()
        se = logps.std(ddof=1) / np.sqrt(n)
        assert abs(est - closed) <= 4.0 * se + 1e-9


class TestSerialization:
    def _bundle(self, squash=False, algo="ppo"):
        cfg, policy, value, q = build_all(seed=9, squash=squash)
        return cfg, policy, ModelBundle(
            algo=algo, env=EnvConfig(), net=cfg,
            split={"ratio": 0.7, "seed": 1},
            stores={"policy": policy.store, "value": value.store},
        )

    def test_round_trip_bit_exact(self, tmp_path):
        cfg, policy, bundle = self._bundle()
        path = tmp_path / "model.smf"
        save_model(path, bundle)
        loaded = load_model(path)
        sig, times = states()
        mu0, ls0 = policy.forward(sig, times)
        mu1, ls1 = loaded.policy().forward(sig, times)
        assert mu0.data.tobytes() == mu1.data.tobytes()
        assert ls0.data.tobytes() == ls1.data.tobytes()
        assert loaded.env == EnvConfig()
        assert loaded.net == cfg

    def test_truncated_file_rejected(self, tmp_path):
        _, _, bundle = self._bundle()
        path = tmp_path / "model.smf"
        save_model(path, bundle)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) // 2])
        with pytest.raises(ModelFileError, match="truncated"):
            load_model(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "model.smf"
        path.write_bytes(b"NOPE" + bytes(64))
        with pytest.raises(ModelFileError, match="magic"):
            load_model(path)

    def test_algo_mismatch_rejected(self, tmp_path):
        _, _, bundle = self._bundle(squash=True, algo="sac")
        path = tmp_path / "model.smf"
        save_model(path, bundle)
        with pytest.raises(ModelFileError, match="sac"):
            load_model(path, expect_algo="ppo")
