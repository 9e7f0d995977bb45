import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurosteer.snn import (
    N_AXO,
    N_DEND,
    LifParams,
    LifPopulation,
    NetworkConfig,
    NetworkState,
    PopulationCode,
    SteeringDecoder,
    SynapsePair,
    curvature_from_radius,
    decode_steering,
    encode,
    lif_step,
    load_weights,
    mirror_rows,
    network_step,
    save_weights,
    steady_trace,
    synapse_currents,
)


def run_const(params, c, steps, u0=0.0):
    pop = LifPopulation.create(1, u0=u0)
    counts = []
    for _ in range(steps):
        lif_step(pop, params, [c])
        counts.append(pop.spikes[0])
    return np.array(counts), pop


def spike_times(counts, dt):
    # step index at which each spike was emitted (end of step)
    return np.repeat(np.arange(1, len(counts) + 1), counts.astype(int)) * dt


# ---------------------------------------------------------------- lif_step


def test_zero_input_stays_at_rest():
    counts, pop = run_const(LifParams(), 0.0, 100)
    assert counts.sum() == 0
    assert pop.u[0] == 0.0


def test_first_spike_time_analytic():
    p = LifParams(tau=100.0, u_th=1.0, dt=1e-3)
    counts, _ = run_const(p, 2.0, 20)
    t_first = spike_times(counts, p.dt)[0]
    assert abs(t_first - math.log(2.0) / 100.0) <= p.dt


def test_subthreshold_never_spikes_and_converges():
    p = LifParams()
    counts, pop = run_const(p, 0.5, 2000)
    assert counts.sum() == 0
    assert pop.u[0] == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("mult", [1.5, 2.0, 4.0, 10.0])
def test_isi_matches_analytic(mult):
    p = LifParams(tau=100.0)
    c = mult * p.u_th
    counts, _ = run_const(p, c, 3000)
    t = spike_times(counts, p.dt)
    expected = -math.log(1.0 - p.u_th / c) / p.tau
    # every interval is a difference of step-quantized times
    assert np.all(np.abs(np.diff(t) - expected) <= p.dt + 1e-12)
    # the long-run mean is exact
    assert (t[-1] - t[0]) / (len(t) - 1) == pytest.approx(expected, rel=1e-2)


def test_multi_spike_count_matches_rate():
    p = LifParams(tau=900.0)
    counts, _ = run_const(p, 40.0, 2000)
    assert counts.max() > 1
    assert counts.sum() / 2.0 == pytest.approx(float(p.rate(40.0)), rel=1e-3)


@given(st.floats(-5.0, 50.0), st.floats(0.0, 0.999))
@settings(max_examples=200, deadline=None)
def test_membrane_never_exceeds_threshold(c, u0):
    p = LifParams(tau=900.0)
    pop = LifPopulation.create(1, u0=u0)
    for _ in range(5):
        lif_step(pop, p, [c])
        assert pop.u[0] <= p.u_th


def test_non_finite_current_rejected():
    pop = LifPopulation.create(3)
    with pytest.raises(ValueError):
        lif_step(pop, LifParams(), [0.0, np.nan, 1.0])
    with pytest.raises(ValueError):
        lif_step(pop, LifParams(), [np.inf, 0.0, 1.0])


def test_dt_mismatch_rejected():
    with pytest.raises(ValueError):
        lif_step(LifPopulation.create(1), LifParams(), [1.0], dt=2e-3)


def test_lif_params_validation():
    with pytest.raises(ValueError):
        LifParams(tau=-1.0)
    with pytest.raises(ValueError):
        LifParams(tau=2000.0, dt=1e-3)


def test_trace_decays_then_adds():
    p = LifParams(tau=100.0)
    pop = LifPopulation.create(1, trace_tau=0.02)
    pop.trace[:] = 1.0
    lif_step(pop, p, [0.0])
    assert pop.trace[0] == pytest.approx(math.exp(-1e-3 / 0.02), abs=1e-15)


def test_steady_trace_matches_simulation():
    p = LifParams(tau=900.0)
    c = 3.0
    pop = LifPopulation.create(1, trace_tau=0.01)
    acc = 0.0
    for k in range(3000):
        lif_step(pop, p, [c])
        if k >= 1000:
            acc += pop.trace[0]
    sim = acc / 2000
    assert sim == pytest.approx(float(steady_trace(p.rate(c), p.dt, 0.01)), rel=1e-2)


# ---------------------------------------------------------------- encoding


def test_encode_peak_and_one_sigma():
    code = PopulationCode(-2.0, 2.0)
    c = code.centers
    a = encode(c[5], code)
    assert a[5] == code.gain
    assert a[4] == pytest.approx(a[6], rel=1e-12)
    b = encode(c[5] + code.width, code)
    assert b[5] == pytest.approx(code.gain * math.exp(-0.5), rel=1e-12)


def test_encode_midpoint_palindrome():
    code = PopulationCode(-0.5, 0.5)
    a = encode(0.0, code)
    assert np.array_equal(a, a[::-1])


@given(st.floats(-3.0, 3.0))
def test_encode_mirror_exact(v):
    code = PopulationCode(-2.0, 2.0)
    assert np.array_equal(encode(-v, code), encode(v, code)[::-1])


@given(st.floats(-2.0, 2.0))
def test_encode_max_equals_gain_only_at_centers(v):
    code = PopulationCode(-2.0, 2.0)
    a = encode(v, code)
    gap = np.abs(code.centers - v).min()
    if gap == 0.0:
        assert a.max() == code.gain
    elif gap > 1e-6:  # closer than this, exp() rounds to 1 in double precision
        assert a.max() < code.gain


def test_population_code_validation():
    with pytest.raises(ValueError):
        PopulationCode(1.0, 1.0)
    with pytest.raises(ValueError):
        PopulationCode(0.0, 1.0, sigma=-1.0)


def test_curvature_from_radius():
    assert curvature_from_radius(math.inf) == 0.0
    assert curvature_from_radius(100.0) == 0.01
    assert curvature_from_radius(-50.0) == -0.02
    with pytest.raises(ValueError):
        curvature_from_radius(0.0)


# ---------------------------------------------------------------- synapses


def nested_loop(u_d, u_a, w):
    out = np.zeros(len(u_a))
    for j in range(len(u_a)):
        s = 0.0
        for i in range(len(u_d)):
            s += u_d[i] * w[i, j]
        out[j] = u_a[j] * s
    return out


def test_synapse_basis_probe():
    w = np.arange(N_DEND * N_AXO, dtype=float).reshape(N_DEND, N_AXO)
    u_d = np.zeros(N_DEND)
    u_a = np.zeros(N_AXO)
    u_d[7], u_a[3] = 1.0, 1.0
    c = synapse_currents(u_d, u_a, w)
    assert c[3] == w[7, 3]
    assert np.count_nonzero(c) == 1


def test_synapse_zero_dendrites():
    rng = np.random.default_rng(0)
    assert np.all(synapse_currents(np.zeros(N_DEND), rng.random(N_AXO), rng.random((N_DEND, N_AXO))) == 0)


def test_synapse_dimension_mismatch():
    with pytest.raises(ValueError):
        synapse_currents(np.ones(59), np.ones(N_AXO), np.ones((N_DEND, N_AXO)))


def test_synapse_bilinear():
    rng = np.random.default_rng(1)
    w = rng.random((N_DEND, N_AXO))
    a, b = rng.random(N_DEND), rng.random(N_DEND)
    ua, ub = rng.random(N_AXO), rng.random(N_AXO)
    lhs = synapse_currents(2.0 * a + 3.0 * b, ua, w)
    rhs = 2.0 * synapse_currents(a, ua, w) + 3.0 * synapse_currents(b, ua, w)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=0)
    assert np.allclose(synapse_currents(a, ua * ub, w), ub * synapse_currents(a, ua, w), rtol=1e-12, atol=0)


def test_synapse_pair_clamps_and_validates():
    p = SynapsePair(np.full((N_DEND, N_AXO), -1.0), np.full((N_DEND, N_AXO), 5.0), 2.0)
    assert p.w_e.min() == 0.0 and p.w_i.max() == 2.0
    with pytest.raises(ValueError):
        SynapsePair(np.zeros((2, 2)), np.zeros((2, 2)), 1.0)


def test_mirror_rows_is_involution():
    w = np.random.default_rng(2).random((N_DEND, N_AXO))
    assert np.array_equal(mirror_rows(mirror_rows(w)), w)
    assert np.array_equal(mirror_rows(w)[0], w[19])


# ---------------------------------------------------------------- decoder and network


def test_decode_steering():
    dec = SteeringDecoder(delta_max=0.5, rate_gain=0.1)
    assert decode_steering([3.0, 3.0], dec) == 0.0
    assert decode_steering([5.0, 3.0], dec) == pytest.approx(0.2)
    assert decode_steering([1e9, 0.0], dec) == 0.5
    assert decode_steering([0.0, 1e9], dec) == -0.5


def random_inputs(rng, n):
    return np.column_stack(
        [rng.uniform(-2, 2, n), rng.uniform(-0.5, 0.5, n), rng.uniform(-0.05, 0.05, n), rng.uniform(0, 40, n)]
    )


def random_pair(rng, scale=300.0):
    return SynapsePair(rng.random((N_DEND, N_AXO)) * scale, rng.random((N_DEND, N_AXO)) * scale, 10 * scale)


def drive(cfg, pair, X, seed=0):
    net = NetworkState.create(cfg, seed=seed)
    out = []
    for x in X:
        out.append(network_step(net, tuple(x), pair)[1])
    return np.array(out), net


def test_zero_weights_zero_steering():
    cfg = NetworkConfig().with_decoder(rate_gain=0.05)
    d, _ = drive(cfg, SynapsePair.zeros(), random_inputs(np.random.default_rng(3), 300))
    assert np.all(d == 0.0)


def test_swapped_weights_negate_steering():
    rng = np.random.default_rng(4)
    cfg = NetworkConfig().with_decoder(rate_gain=0.05)
    pair = random_pair(rng)
    X = random_inputs(rng, 500)
    a, _ = drive(cfg, pair, X, seed=7)
    b, _ = drive(cfg, pair.swapped(), X, seed=7)
    assert np.any(a != 0.0)
    assert np.array_equal(a, -b)


def test_network_determinism():
    rng = np.random.default_rng(5)
    cfg = NetworkConfig().with_decoder(rate_gain=0.05)
    pair = random_pair(rng)
    X = random_inputs(rng, 200)
    n1, n2 = NetworkState.create(cfg, seed=3), NetworkState.create(cfg, seed=3)
    for x in X:
        network_step(n1, tuple(x), pair)
        network_step(n2, tuple(x), pair)
        assert np.array_equal(n1.raster(), n2.raster())


def test_network_batch_matches_single():
    rng = np.random.default_rng(6)
    cfg = NetworkConfig().with_decoder(rate_gain=0.05)
    pair = random_pair(rng)
    X = random_inputs(rng, 3)
    batch = NetworkState.create(cfg, (3,), seed=1)
    singles = [NetworkState.create(cfg, seed=1) for _ in range(3)]
    for _ in range(50):
        _, db = network_step(batch, tuple(X.T), pair)
        ds = [network_step(s, tuple(x), pair)[1] for s, x in zip(singles, X)]
        assert np.allclose(db, ds, rtol=1e-12, atol=1e-15)


def test_network_views_and_size():
    net = NetworkState.create(NetworkConfig())
    assert net.n_neurons == 122
    assert net.dend.n == 60 and net.axo.n == 20 and net.agon.n == 20 and net.antag.n == 20
    assert np.array_equal(net.agon.u, net.antag.u)


def test_weight_file_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    pair = random_pair(rng)
    cfg = NetworkConfig().with_decoder(rate_gain=0.0123)
    f = tmp_path / "w.json"
    save_weights(f, pair, cfg)
    p2, c2 = load_weights(f)
    assert np.array_equal(p2.w_e, pair.w_e) and np.array_equal(p2.w_i, pair.w_i)
    assert p2.w_max == pair.w_max
    assert c2.to_dict() == cfg.to_dict()
