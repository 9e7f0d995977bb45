import numpy as np
import pytest
from scipy.optimize import nnls

from neurosteer.pcwp import GainSchedule
from neurosteer.pretrain import (
    PretrainConfig,
    antisymmetrize,
    features,
    fit_weights,
    pretrain,
    sample_grid,
    steady_activities,
)
from neurosteer.snn import N_AXO, N_DEND, NetworkConfig, NetworkState, SynapsePair, mirror_rows, network_step

CFG = NetworkConfig()
GS = GainSchedule.default()


def test_samples_inside_box_and_saturated():
    s = sample_grid(CFG, 2000, GS)
    assert len(s) == 2000
    assert np.abs(s.delta).max() <= GS.delta_max
    assert np.array_equal(s.delta, np.clip(s.raw, -GS.delta_max, GS.delta_max))
    lo = [c.lo for c in CFG.codes]
    hi = [c.hi for c in CFG.codes]
    assert np.all(s.X >= lo) and np.all(s.X <= hi)
    assert np.array_equal(sample_grid(CFG, 50, GS).X, sample_grid(CFG, 50, GS).X)


def test_empty_sample_set_rejected():
    assert len(sample_grid(CFG, 0, GS)) == 0
    with pytest.raises(ValueError):
        fit_weights(np.empty((0, N_DEND * N_AXO)), np.empty(0))
    with pytest.raises(ValueError):
        pretrain(GS, pc=PretrainConfig(n_samples=0))


def test_zero_target_gives_zero_weights():
    s = sample_grid(CFG, 300, GS)
    F = features(*steady_activities(CFG, *s.X.T))
    a, b = fit_weights(F, np.zeros(len(F)))
    assert not np.any(a) and not np.any(b)


def test_single_one_hot_sample():
    # one equation, one active feature: the weight solves it exactly up to the ridge
    u_d = np.zeros(N_DEND)
    u_a = np.zeros(N_AXO)
    u_d[7], u_a[3] = 2.0, 1.5
    a, b = fit_weights(features(u_d, u_a), [0.3], lam=1e-12)
    assert a[7, 3] == pytest.approx(0.3 / (2.0 * 1.5), rel=1e-9)
    assert np.count_nonzero(a) == 1 and not np.any(b)
    a, b = fit_weights(features(u_d, u_a), [-0.3], lam=1e-12)
    assert b[7, 3] == pytest.approx(0.1, rel=1e-9) and not np.any(a)


def test_sign_split_matches_nonnegative_solver():
    # independent oracle: the joint nonnegative ridge problem solved by NNLS
    # on a problem with few active features (the others are zero columns)
    rng = np.random.default_rng(0)
    active = rng.choice(N_DEND * N_AXO, 12, replace=False)
    F = np.zeros((80, N_DEND * N_AXO))
    F[:, active] = rng.random((80, 12))
    y = rng.normal(size=80)
    lam = 1e-2
    a, b = fit_weights(F, y, lam)
    lam_abs = lam * np.trace(F.T @ F) / F.shape[1]
    Fa = F[:, active]
    A = np.vstack([np.hstack([Fa, -Fa]), np.sqrt(lam_abs) * np.eye(24)])
    x, _ = nnls(A, np.concatenate([y, np.zeros(24)]))
    assert np.allclose(a.ravel()[active], x[:12], atol=1e-9)
    assert np.allclose(b.ravel()[active], x[12:], atol=1e-9)
    assert np.count_nonzero(a) + np.count_nonzero(b) <= 12


def test_antisymmetrize_exact():
    rng = np.random.default_rng(1)
    a, b = antisymmetrize(rng.random((N_DEND, N_AXO)), rng.random((N_DEND, N_AXO)))
    assert np.array_equal(b, mirror_rows(a))
    assert a.min() >= 0 and b.min() >= 0


def test_steady_activities_match_spiking():
    rng = np.random.default_rng(2)
    x = (0.7, -0.12, 0.013, 17.0)
    u_d, u_a = steady_activities(CFG, *x)
    net = NetworkState.create(CFG, seed=int(rng.integers(1000)))
    acc = np.zeros(N_DEND + N_AXO)
    pair = SynapsePair.zeros()
    for k in range(2000):
        network_step(net, x, pair)
        if k >= 1000:
            acc += net.inp.trace
    sim = acc / 1000
    expect = np.concatenate([u_d, u_a])
    active = expect > 0.05 * expect.max()
    assert np.all(sim[~active] <= 0.05 * expect.max() + 1e-12)
    assert np.allclose(sim[active], expect[active], rtol=0.05)


def test_pretrain_properties(pretrained):
    p = pretrained.pair
    assert p.w_e.min() >= 0 and p.w_i.min() >= 0
    assert p.w_e.max() <= p.w_max and p.w_i.max() <= p.w_max
    assert np.array_equal(p.w_i, mirror_rows(p.w_e))
    r = pretrained.report
    assert {"residual_rms", "residual_max", "n_samples", "lambda"} <= set(r)
    assert r["residual_max"] <= PretrainConfig().residual_warn


def test_pretrain_deterministic_files(pretrained, weights_file, tmp_path):
    again = pretrain(GS)
    f = tmp_path / "w.json"
    again.save(f)
    assert f.read_bytes() == weights_file.read_bytes()


def test_residual_warning():
    with pytest.warns(RuntimeWarning):
        pretrain(GS, pc=PretrainConfig(n_samples=400, residual_warn=1e-9, n_calibration=16))


def test_config_roundtrip_and_unknown_keys():
    pc = PretrainConfig(n_samples=100, lam=1e-5)
    assert PretrainConfig.from_dict(pc.to_dict()) == pc
    with pytest.raises(ValueError):
        PretrainConfig.from_dict({"bogus": 1})
