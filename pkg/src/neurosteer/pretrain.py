"""Pre-training: fit W_e / W_i so the spiking network reproduces PCwP.

The fit works at rate equilibrium.  For held inputs every input neuron
settles to a known trace level (LIF rate formula plus the trace fixed
point), so the network's drive difference is linear in the weights over
the 1200 features ``u_d[i] * u_a[j]``.  The nonlinear hidden/output stages
are absorbed by the decoder gain, calibrated first on the analytic
rate chain and then on a short spiking simulation of held-out points.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .pcwp import GainSchedule, pcwp_raw
from .snn import (
    N_AXO,
    N_DEND,
    NetworkConfig,
    NetworkState,
    SynapsePair,
    encode_inputs,
    mirror_rows,
    network_step,
    save_weights,
    steady_trace,
    synapse_currents,
)


@dataclass
class Samples:
    X: np.ndarray  # (n, 4): e_y, e_psi, kappa, u
    delta: np.ndarray  # PCwP steering, saturated
    raw: np.ndarray  # PCwP steering before saturation

    def __len__(self):
        return len(self.X)


def input_box(cfg: NetworkConfig) -> tuple[np.ndarray, np.ndarray]:
    """(lo, hi) of the encoded ranges of e_y, e_psi, kappa and u."""
    return np.array([c.lo for c in cfg.codes]), np.array([c.hi for c in cfg.codes])


def label(X, gs: GainSchedule) -> Samples:
    X = np.asarray(X, float).reshape(-1, 4)
    raw = pcwp_raw(X[:, 0], X[:, 1], X[:, 2], X[:, 3], gs)
    return Samples(X, np.clip(raw, -gs.delta_max, gs.delta_max), raw)


def sample_grid(cfg: NetworkConfig, n_samples: int, gs: GainSchedule, seed: int = 0) -> Samples:
    """Scrambled Halton points over the input box, labeled by PCwP."""
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    lo, hi = input_box(cfg)
    if n_samples == 0:
        return label(np.empty((0, 4)), gs)
    X = qmc.scale(qmc.Halton(4, seed=seed).random(n_samples), lo, hi)
    return label(X, gs)


def regular_grid(cfg: NetworkConfig, per_axis: int, gs: GainSchedule) -> Samples:
    """Cell-centred ``per_axis**4`` grid over the input box (held-out set)."""
    lo, hi = input_box(cfg)
    axes = [lo[k] + (hi[k] - lo[k]) * (np.arange(per_axis) + 0.5) / per_axis for k in range(4)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
    return label(X, gs)


def steady_activities(cfg: NetworkConfig, e_y, e_psi, kappa, u):
    """Equilibrium traces (u_d, u_a) of the input populations for held inputs."""
    dend_c, axo_c = encode_inputs(cfg, e_y, e_psi, kappa, u)
    lif = cfg.input_lif
    return (
        steady_trace(lif.rate(dend_c), cfg.dt, cfg.input_trace_tau),
        steady_trace(lif.rate(axo_c), cfg.dt, cfg.input_trace_tau),
    )


def features(u_d, u_a) -> np.ndarray:
    """Row-major products ``u_d[i] * u_a[j]``, shape (n, 1200)."""
    u_d = np.atleast_2d(u_d)
    u_a = np.atleast_2d(u_a)
    return (u_d[:, :, None] * u_a[:, None, :]).reshape(len(u_d), -1)


def fit_weights(F, target, lam: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Nonnegative ridge fit of ``F @ (w_e - w_i) ~ target``.

    Solves ``min |F (a - b) - y|^2 + lam_abs (|a|^2 + |b|^2)`` over a, b >= 0.
    Any optimum has disjoint supports (shrinking a shared entry of a and b
    keeps a - b and lowers the penalty), so the problem reduces to ordinary
    ridge regression on ``d = a - b`` followed by a sign split.  ``lam`` is
    relative to the mean diagonal of the Gram matrix.
    Returns ``(w_e, w_i)`` as 60x20 matrices in fit units.
    """
    F = np.asarray(F, float)
    y = np.asarray(target, float)
    if len(F) == 0:
        raise ValueError("cannot fit weights to an empty sample set")
    if F.ndim != 2 or F.shape[1] != N_DEND * N_AXO or len(y) != len(F):
        raise ValueError(f"expected features (n, {N_DEND * N_AXO}) and n targets")
    G = F.T @ F
    lam_abs = lam * np.trace(G) / G.shape[0]
    d = np.linalg.solve(G + lam_abs * np.eye(G.shape[0]), F.T @ y).reshape(N_DEND, N_AXO)
    return np.maximum(d, 0.0), np.maximum(-d, 0.0)


def antisymmetrize(w_e, w_i):
    """Project the fit onto mirror-antisymmetric steering, exactly.

    Afterwards ``w_i == mirror_rows(w_e)`` holds bit for bit, so mirrored
    inputs yield exactly negated steering.
    """
    d = w_e - w_i
    d = 0.5 * (d - mirror_rows(d))
    return np.maximum(d, 0.0), np.maximum(-d, 0.0)


# ---------------------------------------------------------------- full pipeline


@dataclass(frozen=True)
class PretrainConfig:
    n_samples: int = 20_000
    lam: float = 1e-6
    w_max_factor: float = 10.0
    drive_scale: float = 0.001  # rad of steering per unit of hidden drive difference
    output_base_drive: float = 16.0  # weakest summed hidden drive into an output neuron
    common_mode: float = 0.05  # weight added to both matrices, as a fraction of the largest fitted weight
    n_calibration: int = 256
    calibration_time: float = 2.0
    seed: int = 0
    residual_warn: float = 0.01  # rad

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> PretrainConfig:
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown pretrain keys: {sorted(unknown)}")
        return cls(**{k: type(getattr(cls(), k))(v) for k, v in d.items()})


@dataclass
class PretrainResult:
    pair: SynapsePair
    cfg: NetworkConfig
    report: dict = field(default_factory=dict)

    def save(self, weights_path, report_path=None) -> None:
        save_weights(weights_path, self.pair, self.cfg, {"fit_report": self.report})
        if report_path is not None:
            Path(report_path).write_text(json.dumps(self.report, indent=1))


def hidden_traces(cfg: NetworkConfig, u_d, u_a, w) -> np.ndarray:
    """Equilibrium summed hidden trace of one set for held inputs."""
    rate = cfg.hidden_lif.rate(cfg.hidden_bias + synapse_currents(u_d, u_a, w))
    return steady_trace(rate, cfg.dt, cfg.hidden_trace_tau).sum(-1)


def rate_chain(cfg: NetworkConfig, pair: SynapsePair, X) -> np.ndarray:
    """Output trace difference predicted at equilibrium (before rate_gain)."""
    u_d, u_a = steady_activities(cfg, X[:, 0], X[:, 1], X[:, 2], X[:, 3])
    lif = cfg.output_lif
    tau = cfg.decoder.output_trace_tau

    def out(w):
        return steady_trace(lif.rate(cfg.output_gain * hidden_traces(cfg, u_d, u_a, w)), cfg.dt, tau)

    return out(pair.w_e) - out(pair.w_i)


def held_input_steering(cfg: NetworkConfig, pair: SynapsePair, X, duration=2.0, average=1.0, seed=1, chunk=2000):
    """Mean decoded steering over the last ``average`` s of ``duration`` s.

    Every row of ``X`` is an independent network held at that input;
    rows are simulated as one batch (in chunks to bound memory).
    """
    X = np.asarray(X, float)
    n_steps = int(round(duration / cfg.dt))
    n_avg = int(round(average / cfg.dt))
    out = np.empty(len(X))
    for a in range(0, len(X), chunk):
        x = X[a : a + chunk]
        net = NetworkState.create(cfg, (len(x),), seed=seed)
        inputs = (x[:, 0], x[:, 1], x[:, 2], x[:, 3])
        acc = np.zeros(len(x))
        for k in range(n_steps):
            _, delta = network_step(net, inputs, pair)
            if k >= n_steps - n_avg:
                acc += delta
        out[a : a + chunk] = acc / n_avg
    return out


def _lsq_gain(pred, target) -> float:
    den = float(np.dot(pred, pred))
    return float(np.dot(pred, target) / den) if den > 0 else 1.0


def pretrain(gs: GainSchedule, cfg: NetworkConfig | None = None, pc: PretrainConfig | None = None) -> PretrainResult:
    """Fit the synapse pair and calibrate the readout for schedule ``gs``."""
    cfg = cfg or NetworkConfig()
    pc = pc or PretrainConfig()
    cfg = cfg.with_decoder(delta_max=gs.delta_max)

    smp = sample_grid(cfg, pc.n_samples, gs, seed=pc.seed)
    if len(smp) == 0:
        raise ValueError("cannot pretrain on an empty sample set")
    u_d, u_a = steady_activities(cfg, *smp.X.T)
    F = features(u_d, u_a)
    # the decoder clamp reproduces saturation, so the fit targets the raw law
    a, b = fit_weights(F, smp.raw, pc.lam)
    a, b = antisymmetrize(a / pc.drive_scale, b / pc.drive_scale)
    peak = max(a.max(), b.max())
    if peak == 0.0:
        pair = SynapsePair.zeros()
        return PretrainResult(pair, cfg, _report(pc, smp, np.zeros(len(smp)), 0.0, 1.0, cfg))
    w0 = pc.common_mode * peak
    a, b = a + w0, b + w0
    pair = SynapsePair(a, b, pc.w_max_factor * (peak + w0))

    base = np.minimum(hidden_traces(cfg, u_d, u_a, a), hidden_traces(cfg, u_d, u_a, b)).min()
    cfg = replace(cfg, output_gain=float(pc.output_base_drive / base))
    chain = rate_chain(cfg, pair, smp.X)
    gain = _lsq_gain(chain, smp.raw)
    cfg = cfg.with_decoder(rate_gain=gain)

    # correct the equilibrium gain for spike-level effects on held-out inputs
    lo, hi = input_box(cfg)
    Xc = qmc.scale(qmc.Halton(4, seed=pc.seed + 1).random(pc.n_calibration), lo, hi)
    held = label(Xc, gs)
    sim = held_input_steering(cfg, pair, Xc, pc.calibration_time, pc.calibration_time / 2, seed=pc.seed + 1)
    inside = np.abs(held.delta) < 0.9 * gs.delta_max
    spike_gain = _lsq_gain(sim[inside], held.delta[inside]) if inside.any() else 1.0
    cfg = cfg.with_decoder(rate_gain=gain * spike_gain)

    pred = np.clip(gain * chain, -gs.delta_max, gs.delta_max)
    report = _report(pc, smp, pred - smp.delta, gain, spike_gain, cfg)
    if report["residual_max"] > pc.residual_warn:
        warnings.warn(f"pretraining residual above {pc.residual_warn} rad: {report}", RuntimeWarning, stacklevel=2)
    return PretrainResult(pair, cfg, report)


def _report(pc: PretrainConfig, smp: Samples, resid, gain, spike_gain, cfg) -> dict:
    resid = np.asarray(resid)
    return {
        "residual_rms": float(math.sqrt(np.mean(resid**2))) if len(resid) else 0.0,
        "residual_max": float(np.abs(resid).max()) if len(resid) else 0.0,
        "n_samples": len(smp),
        "lambda": pc.lam,
        "equilibrium_gain": gain,
        "spiking_correction": spike_gain,
        "rate_gain": cfg.decoder.rate_gain,
        "output_gain": cfg.output_gain,
    }
