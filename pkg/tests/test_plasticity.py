import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from neurosteer.plasticity import (
    EligibilityState,
    PreSpikeHistory,
    RewardState,
    RStdpLearner,
    StdpParams,
    accumulate_eligibility,
    apply_reward,
    compute_reward,
    stdp_kernel,
)
from neurosteer.snn import N_AXO, N_DEND, NetworkConfig, NetworkState, SynapsePair, network_step

DT = 1e-3


# ---------------------------------------------------------------- kernel


def test_kernel_unit_points():
    T = 0.02
    assert stdp_kernel(0.3, 0.3, T) == 1.0
    assert stdp_kernel(0.0, T, T) == math.exp(-1.0)
    assert stdp_kernel(0.1, 0.05, T) == 0.0


def test_kernel_vectorized():
    k = stdp_kernel(np.zeros(3), np.array([-0.01, 0.0, 0.02]), 0.02)
    assert np.array_equal(k, [0.0, 1.0, math.exp(-1.0)])


@given(st.floats(0.0, 0.05), st.floats(0.0, 0.05))
def test_kernel_monotone_in_delay(a, b):
    assume(b - a > 1e-9)  # below this exp() cannot resolve the difference
    assert stdp_kernel(0.0, a, 0.02) > stdp_kernel(0.0, b, 0.02)


def test_params_validation_and_roundtrip():
    p = StdpParams(T=0.03, eta=0.5)
    assert StdpParams.from_dict(p.to_dict()) == p
    for bad in ({"T": 0.0}, {"elig_tau": -1.0}, {"eta": -1e-9}, {"pair_window": 0.0}, {"e_scale": 0.0}):
        with pytest.raises(ValueError):
            StdpParams(**bad)
    with pytest.raises(ValueError):
        StdpParams.from_dict({"tau": 1.0})


# ---------------------------------------------------------------- pre-spike history


def test_history_matches_brute_force():
    p = StdpParams()
    rng = np.random.default_rng(0)
    spikes = rng.poisson(0.3, (400, 5)).astype(float)
    h = PreSpikeHistory(p, DT, n=5)
    max_lag = int(round(p.pair_window / DT))
    for t in range(len(spikes)):
        h.push(spikes[t])
        lags = np.arange(0, min(t, max_lag) + 1)
        brute = (spikes[t - lags] * np.exp(-lags * DT / p.T)[:, None]).sum(0)
        assert np.allclose(h.kernel_sum(), brute, rtol=1e-9, atol=1e-12)


def test_history_forgets_old_spikes():
    p = StdpParams()
    h = PreSpikeHistory(p, DT, n=1)
    h.push(np.ones(1))
    for _ in range(int(round(p.pair_window / DT))):
        h.push(np.zeros(1))
    assert h.kernel_sum()[0] > 0
    h.push(np.zeros(1))
    assert h.kernel_sum()[0] == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------- eligibility


def zeros(n):
    return np.zeros(n)


def test_no_spikes_pure_decay():
    p = StdpParams()
    rng = np.random.default_rng(1)
    e = EligibilityState(rng.normal(size=(N_DEND, N_AXO)), rng.normal(size=(N_DEND, N_AXO)))
    e0 = EligibilityState(e.e_exc.copy(), e.e_inh.copy())
    accumulate_eligibility(e, zeros(N_DEND), rng.random(N_AXO), zeros(N_AXO), zeros(N_AXO), p, DT)
    f = math.exp(-DT / p.elig_tau)
    assert np.array_equal(e.e_exc, e0.e_exc * f)
    assert np.array_equal(e.e_inh, e0.e_inh * f)


def test_single_pair_bookkeeping():
    p = StdpParams()
    i, j = 13, 4
    u_a = np.linspace(0.5, 2.0, N_AXO)
    h = PreSpikeHistory(p, DT)
    pre = zeros(N_DEND)
    pre[i] = 1.0
    h.push(pre)
    post = zeros(N_AXO)
    post[j] = 1.0
    e = EligibilityState.zeros()
    accumulate_eligibility(e, h.kernel_sum(), u_a, post, zeros(N_AXO), p, DT)
    assert e.e_exc[i, j] == u_a[j]
    assert np.count_nonzero(e.e_exc) == 1
    assert not np.any(e.e_inh)


def test_correlated_100hz_fixed_point():
    # pre and post fire together every 10 ms; the trace converges to the
    # geometric-series fixed point gain / (1 - exp(-ISI / elig_tau))
    p = StdpParams()
    u_a = np.full(N_AXO, 0.7)
    h = PreSpikeHistory(p, DT)
    e = EligibilityState.zeros()
    pre = np.zeros(N_DEND)
    pre[0] = 1.0
    post = np.zeros(N_AXO)
    post[0] = 1.0
    history = []
    for k in range(6000):
        fire = k % 10 == 0
        h.push(pre if fire else zeros(N_DEND))
        accumulate_eligibility(e, h.kernel_sum(), u_a, post if fire else zeros(N_AXO), zeros(N_AXO), p, DT)
        if fire:
            history.append(e.e_exc[0, 0])
    # gain per pairing: the simultaneous pair plus the earlier pre spikes still in the window
    lags = np.arange(0, 51, 10) * DT
    gain = 0.7 * np.exp(-lags / p.T).sum()
    fixed = gain / (1.0 - math.exp(-10 * DT / p.elig_tau))
    assert history[-1] == pytest.approx(fixed, rel=1e-9)
    # after 1 s the trace is already within 1% of it
    assert history[100] == pytest.approx(fixed, rel=1e-2)


def test_locality_of_eligibility():
    p = StdpParams()
    rng = np.random.default_rng(2)
    h = PreSpikeHistory(p, DT)
    e = EligibilityState.zeros()
    silent_pre, silent_post = 7, 11
    for _ in range(200):
        pre = rng.poisson(0.5, N_DEND).astype(float)
        pre[silent_pre] = 0.0
        post = rng.poisson(0.5, N_AXO).astype(float)
        post[silent_post] = 0.0
        h.push(pre)
        accumulate_eligibility(e, h.kernel_sum(), rng.random(N_AXO), post, post, p, DT)
    assert not np.any(e.e_exc[silent_pre]) and not np.any(e.e_exc[:, silent_post])
    assert np.all(np.isfinite(e.e_exc))


# ---------------------------------------------------------------- reward


def test_reward_examples():
    rs = RewardState(0.3, 0.0, 0.01)
    r, rs = compute_reward(0.3, rs)
    assert r == 0.0
    r, rs = compute_reward(-0.29, rs)
    assert r == pytest.approx(1.0)
    r, rs = compute_reward(0.35, rs)
    assert r == -1.0
    assert rs.prev_abs_ey == 0.35
    with pytest.raises(ValueError):
        compute_reward(math.nan, rs)


@given(st.floats(-5, 5), st.floats(0, 5))
def test_reward_clipped(e, prev):
    r, rs = compute_reward(e, RewardState(prev, 0.0, 0.01))
    assert -1.0 <= r <= 1.0
    assert rs.r == r and rs.prev_abs_ey == abs(e)


def test_apply_reward_examples():
    rng = np.random.default_rng(3)
    pair = SynapsePair(rng.random((N_DEND, N_AXO)), rng.random((N_DEND, N_AXO)), 1.0)
    e = EligibilityState(rng.random((N_DEND, N_AXO)), rng.random((N_DEND, N_AXO)))
    before = pair.copy()
    apply_reward(pair, e, 0.0, 0.1)
    apply_reward(pair, e, 1.0, 0.0)
    assert np.array_equal(pair.w_e, before.w_e) and np.array_equal(pair.w_i, before.w_i)

    single = EligibilityState.zeros()
    single.e_exc[2, 3] = 0.25
    apply_reward(pair, single, 1.0, 0.4)
    diff = pair.w_e - before.w_e
    assert diff[2, 3] == pytest.approx(min(0.1, 1.0 - before.w_e[2, 3]))
    diff[2, 3] = 0.0
    assert not np.any(diff) and np.array_equal(pair.w_i, before.w_i)


@given(st.floats(-1, 1), st.floats(0, 10))
def test_apply_reward_keeps_bounds(r, eta):
    rng = np.random.default_rng(4)
    pair = SynapsePair(rng.random((N_DEND, N_AXO)), rng.random((N_DEND, N_AXO)), 1.0)
    e = EligibilityState(rng.normal(size=(N_DEND, N_AXO)), rng.normal(size=(N_DEND, N_AXO)))
    apply_reward(pair, e, r, eta)
    for w in (pair.w_e, pair.w_i):
        assert w.min() >= 0.0 and w.max() <= 1.0


def test_learner_zero_eta_leaves_weights_and_dynamics():
    rng = np.random.default_rng(5)
    cfg = NetworkConfig().with_decoder(rate_gain=0.05)
    pair = SynapsePair(rng.random((N_DEND, N_AXO)) * 300, rng.random((N_DEND, N_AXO)) * 300, 3000.0)
    frozen = pair.copy()
    a, b = NetworkState.create(cfg, seed=2), NetworkState.create(cfg, seed=2)
    learner = RStdpLearner(StdpParams(eta=0.0), DT, e_y0=0.5)
    for k in range(300):
        x = (0.5 * math.cos(k / 30), 0.1, 0.01, 15.0)
        _, da = network_step(a, x, pair)
        learner.step(a, pair, x[0])
        _, db = network_step(b, x, frozen)
        assert da == db
    assert np.array_equal(pair.w_e, frozen.w_e)
    assert np.any(learner.elig.e_exc)


def test_learner_moves_weights_with_reward():
    rng = np.random.default_rng(6)
    cfg = NetworkConfig().with_decoder(rate_gain=0.05)
    pair = SynapsePair(rng.random((N_DEND, N_AXO)) * 300, rng.random((N_DEND, N_AXO)) * 300, 3000.0)
    before = pair.copy()
    net = NetworkState.create(cfg, seed=2)
    learner = RStdpLearner(StdpParams(eta=1e-12), DT, e_y0=1.0)
    for k in range(200):
        e_y = 1.0 - (k + 1) * 1e-3
        network_step(net, (e_y, 0.0, 0.0, 15.0), pair)
        r = learner.step(net, pair, e_y)
        assert r == pytest.approx(0.1)
    assert np.all(pair.w_e >= before.w_e) and np.any(pair.w_e > before.w_e)
