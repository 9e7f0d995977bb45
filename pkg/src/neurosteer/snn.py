"""Spiking steering network: LIF populations, Gaussian population codes,
the axo-axonic (bilinear) synapse and the two-neuron steering readout.

Topology (122 neurons)::

    e_y, e_psi, kappa --> 3 x 20 dendritic input neurons --+
                                                           |  W_e --> 20 agonist  --> output +
    u ------------------> 20 axo-axonic input neurons -----+  W_i --> 20 antagonist --> output -

Hidden neuron ``j`` of each set receives ``u_a[j] * sum_i u_d[i] W[i, j]``,
so summing over a set recovers the scalar bilinear form ``u_d W u_a``.
Activities are exponentially filtered spike traces.

All state arrays carry arbitrary leading batch dimensions, so the same code
runs one closed-loop controller or ten thousand held-input evaluations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

N_PER_VAR = 20
N_DEND = 3 * N_PER_VAR
N_AXO = N_PER_VAR
N_HIDDEN = 2 * N_PER_VAR
N_OUT = 2
N_TOTAL = N_DEND + N_AXO + N_HIDDEN + N_OUT
INPUT_NAMES = ("e_y", "e_psi", "kappa", "u")


# ---------------------------------------------------------------- neurons


@dataclass(frozen=True)
class LifParams:
    tau: float = 100.0  # 1/s
    u_th: float = 1.0
    dt: float = 1e-3

    def __post_init__(self):
        if not (self.tau > 0 and self.u_th > 0 and self.dt > 0):
            raise ValueError("tau, u_th and dt must be positive")
        if not self.dt * self.tau < 1.0:
            raise ValueError(f"dt * tau = {self.dt * self.tau:g} must stay below 1")

    def rate(self, current):
        """Firing rate (Hz) under constant ``current``: 1 / ISI of the LIF."""
        c = np.asarray(current, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = self.tau / np.log(c / (c - self.u_th))
        return np.where(c > self.u_th, r, 0.0)

    def isi(self, current):
        """Inter-spike interval (s) under constant supra-threshold ``current``."""
        c = np.asarray(current, dtype=float)
        return -np.log1p(-self.u_th / c) / self.tau


@dataclass
class LifPopulation:
    u: np.ndarray
    trace: np.ndarray
    spikes: np.ndarray  # spikes emitted during the last step
    trace_tau: float = 0.02

    @classmethod
    def create(cls, n: int, trace_tau: float = 0.02, batch: tuple = (), u0=None) -> LifPopulation:
        if not trace_tau > 0:
            raise ValueError("trace_tau must be positive")
        shape = tuple(batch) + (n,)
        u = np.zeros(shape) if u0 is None else np.broadcast_to(np.asarray(u0, float), shape).copy()
        return cls(u=u, trace=np.zeros(shape), spikes=np.zeros(shape), trace_tau=float(trace_tau))

    @property
    def n(self) -> int:
        return self.u.shape[-1]

    @property
    def spiked(self) -> np.ndarray:
        return self.spikes > 0

    def copy(self) -> LifPopulation:
        return LifPopulation(self.u.copy(), self.trace.copy(), self.spikes.copy(), self.trace_tau)


def lif_step(pop: LifPopulation, params: LifParams, current, dt: float | None = None) -> LifPopulation:
    """Advance ``pop`` one step under ``current`` held constant over the step.

    The membrane equation is integrated in closed form, including the exact
    crossing time(s) within the step, so firing rates do not depend on dt.
    A neuron may fire more than once per step at very high drive; ``spikes``
    holds the count.  Each spike adds 1 to the activity trace after the
    trace has decayed by ``exp(-dt / trace_tau)``.  Mutates and returns ``pop``.
    """
    dt = params.dt if dt is None else dt
    if dt != params.dt:
        raise ValueError("dt must match the population's LifParams.dt")
    c = np.asarray(current, dtype=float)
    if not math.isfinite(float(c.sum())) and not np.all(np.isfinite(c)):
        raise ValueError("non-finite input current (encoder or synapse fault)")
    tau_dt, u_th = params.tau * dt, params.u_th
    u0 = pop.u
    u_free = c + (u0 - c) * math.exp(-tau_dt)
    fire = u_free > u_th
    if fire.any():
        # a neuron can only cross if c > u_th; the others get a dummy drive
        cs = np.where(fire, c, 2.0 * u_th)
        above = cs - u_th
        t1 = np.log((cs - u0) / above)  # first crossing, in units of 1/tau
        period = np.log(cs / above)
        n = np.maximum(np.floor((tau_dt - t1) / period) + 1.0, 1.0)
        u_fired = np.minimum(cs * -np.expm1(t1 + (n - 1.0) * period - tau_dt), u_th)
        pop.u[...] = np.where(fire, u_fired, u_free)
        pop.spikes[...] = np.where(fire, n, 0.0)
    else:
        pop.u[...] = u_free
        pop.spikes[...] = 0.0
    pop.trace *= math.exp(-dt / pop.trace_tau)
    pop.trace += pop.spikes
    return pop


def steady_trace(rate, dt: float, trace_tau: float):
    """Time-averaged trace of a neuron firing at ``rate`` Hz."""
    return np.asarray(rate) * dt / -math.expm1(-dt / trace_tau)


# ---------------------------------------------------------------- encoding


@dataclass(frozen=True)
class PopulationCode:
    lo: float
    hi: float
    n: int = N_PER_VAR
    gain: float = 2.0
    sigma: float | None = None  # defaults to 1.5 x the center spacing

    def __post_init__(self):
        if not self.hi > self.lo or self.n < 2:
            raise ValueError("need hi > lo and at least two neurons")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "_centers", self._make_centers())

    def _make_centers(self) -> np.ndarray:
        k = np.arange(self.n)
        c = self.lo + (self.hi - self.lo) * k / (self.n - 1)
        if self.lo == -self.hi:
            # exact mirror symmetry, so that encode(-v) is encode(v) reversed
            half = self.n // 2
            c[self.n - half :] = -c[:half][::-1]
            if self.n % 2:
                c[half] = 0.0
        return c

    @property
    def centers(self) -> np.ndarray:
        return self._centers.copy()

    @property
    def width(self) -> float:
        return self.sigma if self.sigma is not None else 1.5 * self.spacing

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "n": self.n, "gain": self.gain, "sigma": self.width}


def encode(value, code: PopulationCode) -> np.ndarray:
    """Gaussian tuning-curve currents, shape ``value.shape + (n,)``."""
    v = np.asarray(value, dtype=float)[..., None]
    d = v - code._centers
    return code.gain * np.exp(-(d * d) * (0.5 / code.width**2))


def curvature_from_radius(R: float) -> float:
    """Signed curvature (left-positive) of a signed radius; ``inf`` is straight."""
    if R == 0:
        raise ValueError("zero radius is degenerate geometry")
    if math.isinf(R):
        return 0.0
    return 1.0 / R


# ---------------------------------------------------------------- synapses


@dataclass
class SynapsePair:
    w_e: np.ndarray
    w_i: np.ndarray
    w_max: float

    def __post_init__(self):
        self.w_e = np.array(self.w_e, dtype=float)
        self.w_i = np.array(self.w_i, dtype=float)
        if self.w_e.shape != (N_DEND, N_AXO) or self.w_i.shape != (N_DEND, N_AXO):
            raise ValueError(f"weight matrices must be {N_DEND}x{N_AXO}")
        if not self.w_max > 0:
            raise ValueError("w_max must be positive")
        self.clamp()

    @classmethod
    def zeros(cls, w_max: float = 1.0) -> SynapsePair:
        return cls(np.zeros((N_DEND, N_AXO)), np.zeros((N_DEND, N_AXO)), w_max)

    def clamp(self) -> SynapsePair:
        np.clip(self.w_e, 0.0, self.w_max, out=self.w_e)
        np.clip(self.w_i, 0.0, self.w_max, out=self.w_i)
        return self

    def copy(self) -> SynapsePair:
        return SynapsePair(self.w_e.copy(), self.w_i.copy(), self.w_max)

    def swapped(self) -> SynapsePair:
        return SynapsePair(self.w_i.copy(), self.w_e.copy(), self.w_max)


def _mirror_halves(n_rows: int):
    """Row indices (lo, hi) pairing each dendritic neuron with its mirror image."""
    k = np.arange(N_PER_VAR // 2)
    lo = np.concatenate([b * N_PER_VAR + k for b in range(n_rows // N_PER_VAR)])
    hi = np.concatenate([b * N_PER_VAR + N_PER_VAR - 1 - k for b in range(n_rows // N_PER_VAR)])
    return lo, hi


_LO, _HI = _mirror_halves(N_DEND)


def synapse_currents(u_d, u_a, w) -> np.ndarray:
    """Hidden-neuron currents ``c_j = u_a[j] * sum_i u_d[i] w[i, j]``.

    For the 60-row dendritic layout the sum is split into the two mirror
    halves, ``u_d[lo] @ w[lo] + u_d[hi] @ w[hi]``.  Mirroring the inputs and
    swapping ``w_e`` with the mirrored ``w_i`` then reproduces the other
    matrix's partial products operand for operand, so the agonist and
    antagonist currents trade places bit for bit.
    """
    u_d = np.asarray(u_d, dtype=float)
    u_a = np.asarray(u_a, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or u_d.shape[-1] != w.shape[0] or u_a.shape[-1] != w.shape[1]:
        raise ValueError(f"dimension mismatch: u_d {u_d.shape}, u_a {u_a.shape}, w {w.shape}")
    if w.shape[0] != N_DEND:
        return u_a * (u_d @ w)
    return u_a * (u_d[..., _LO] @ w[_LO] + u_d[..., _HI] @ w[_HI])


def mirror_rows(w) -> np.ndarray:
    """``w`` with each dendritic population's rows reversed (input sign flip)."""
    w = np.asarray(w)
    idx = np.concatenate([b * N_PER_VAR + np.arange(N_PER_VAR)[::-1] for b in range(N_DEND // N_PER_VAR)])
    return w[idx]


# ---------------------------------------------------------------- readout


@dataclass(frozen=True)
class SteeringDecoder:
    delta_max: float = 0.52
    rate_gain: float = 1.0
    output_trace_tau: float = 0.01

    def to_dict(self) -> dict:
        return {"delta_max": self.delta_max, "rate_gain": self.rate_gain, "output_trace_tau": self.output_trace_tau}


def decode_steering(output_traces, dec: SteeringDecoder):
    """Agonist minus antagonist output activity, scaled and saturated."""
    t = np.asarray(output_traces, dtype=float)
    d = dec.rate_gain * (t[..., 0] - t[..., 1])
    d = np.minimum(np.maximum(d, -dec.delta_max), dec.delta_max)
    return float(d) if d.ndim == 0 else d


# ---------------------------------------------------------------- network


def default_codes() -> tuple[PopulationCode, ...]:
    return (
        PopulationCode(-2.0, 2.0),
        PopulationCode(-0.5, 0.5),
        PopulationCode(-0.05, 0.05),
        PopulationCode(0.0, 40.0),
    )


@dataclass(frozen=True)
class NetworkConfig:
    codes: tuple[PopulationCode, ...] = field(default_factory=default_codes)
    dt: float = 1e-3
    input_tau: float = 900.0
    input_bias: float = 1.5
    input_trace_tau: float = 0.01
    hidden_tau: float = 900.0
    hidden_bias: float = 2.0
    hidden_trace_tau: float = 0.01
    output_tau: float = 900.0
    output_gain: float = 3e-4
    u_th: float = 1.0
    decoder: SteeringDecoder = field(default_factory=SteeringDecoder)

    def __post_init__(self):
        if len(self.codes) != 4 or any(c.n != N_PER_VAR for c in self.codes):
            raise ValueError(f"need four population codes of {N_PER_VAR} neurons")
        for name, tau in (("input", self.input_tau), ("hidden", self.hidden_tau), ("output", self.output_tau)):
            object.__setattr__(self, f"{name}_lif", LifParams(tau, self.u_th, self.dt))
        object.__setattr__(self, "_centers", np.stack([c._centers for c in self.codes]))
        object.__setattr__(self, "_gains", np.array([[c.gain] for c in self.codes]))
        object.__setattr__(self, "_inv_two_var", np.array([[0.5 / c.width**2] for c in self.codes]))

    def with_decoder(self, **kw) -> NetworkConfig:
        return replace(self, decoder=replace(self.decoder, **kw))

    def to_dict(self) -> dict:
        d = {
            k: getattr(self, k)
            for k in (
                "dt", "input_tau", "input_bias", "input_trace_tau", "hidden_tau", "hidden_bias",
                "hidden_trace_tau", "output_tau", "output_gain", "u_th",
            )
        }
        d["codes"] = {name: c.to_dict() for name, c in zip(INPUT_NAMES, self.codes)}
        d["decoder"] = self.decoder.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> NetworkConfig:
        kw = {k: float(v) for k, v in d.items() if k not in ("codes", "decoder")}
        if "codes" in d:
            kw["codes"] = tuple(
                PopulationCode(float(c["lo"]), float(c["hi"]), int(c["n"]), float(c["gain"]), float(c["sigma"]))
                for c in (d["codes"][name] for name in INPUT_NAMES)
            )
        if "decoder" in d:
            kw["decoder"] = SteeringDecoder(**{k: float(v) for k, v in d["decoder"].items()})
        return cls(**kw)


def _input_currents(cfg: NetworkConfig, e_y, e_psi, kappa, u) -> np.ndarray:
    """Currents of all 80 input neurons, ``(..., 80)``, bias included."""
    v = np.stack(np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (e_y, e_psi, kappa, u))), axis=-1)
    d = v[..., None] - cfg._centers
    c = cfg._gains * np.exp(-(d * d) * cfg._inv_two_var) + cfg.input_bias
    return c.reshape(v.shape[:-1] + (N_DEND + N_AXO,))


def encode_inputs(cfg: NetworkConfig, e_y, e_psi, kappa, u):
    """Dendritic (..., 60) and axo-axonic (..., 20) input currents, bias included."""
    c = _input_currents(cfg, e_y, e_psi, kappa, u)
    return c[..., :N_DEND], c[..., N_DEND:]


@dataclass
class NetworkState:
    """Mutable network state.

    The 80 input neurons and the 40 hidden neurons are each stepped as one
    population; ``dend``/``axo`` and ``agon``/``antag`` are views into them.
    """

    cfg: NetworkConfig
    inp: LifPopulation
    hid: LifPopulation
    out: LifPopulation
    t: int = 0

    @classmethod
    def create(cls, cfg: NetworkConfig, batch: tuple = (), seed: int | None = 0) -> NetworkState:
        """Fresh network with membrane potentials drawn uniformly below threshold.

        The draws respect the network's symmetries: each dendritic population
        is a palindrome (mirror inputs map onto mirror neurons) and the
        agonist/antagonist sets, like the two outputs, start identical.
        """
        rng = np.random.default_rng(seed)
        u_th = cfg.u_th
        if seed is None:
            i0 = np.zeros(N_DEND + N_AXO)
            h0 = np.zeros(N_HIDDEN)
            o0 = np.zeros(N_OUT)
        else:
            half = rng.uniform(0.0, u_th, (3, N_PER_VAR // 2))
            d0 = np.concatenate([np.concatenate([h, h[::-1]]) for h in half])
            i0 = np.concatenate([d0, rng.uniform(0.0, u_th, N_AXO)])
            h = rng.uniform(0.0, u_th, N_PER_VAR)
            h0 = np.concatenate([h, h])
            o0 = np.full(N_OUT, rng.uniform(0.0, u_th))
        return cls(
            cfg,
            LifPopulation.create(N_DEND + N_AXO, cfg.input_trace_tau, batch, i0),
            LifPopulation.create(N_HIDDEN, cfg.hidden_trace_tau, batch, h0),
            LifPopulation.create(N_OUT, cfg.decoder.output_trace_tau, batch, o0),
        )

    def _view(self, pop: LifPopulation, a: int, b: int) -> LifPopulation:
        return LifPopulation(pop.u[..., a:b], pop.trace[..., a:b], pop.spikes[..., a:b], pop.trace_tau)

    @property
    def dend(self) -> LifPopulation:
        return self._view(self.inp, 0, N_DEND)

    @property
    def axo(self) -> LifPopulation:
        return self._view(self.inp, N_DEND, N_DEND + N_AXO)

    @property
    def agon(self) -> LifPopulation:
        return self._view(self.hid, 0, N_PER_VAR)

    @property
    def antag(self) -> LifPopulation:
        return self._view(self.hid, N_PER_VAR, N_HIDDEN)

    def copy(self) -> NetworkState:
        return NetworkState(self.cfg, self.inp.copy(), self.hid.copy(), self.out.copy(), self.t)

    @property
    def n_neurons(self) -> int:
        return self.inp.n + self.hid.n + self.out.n

    def raster(self) -> np.ndarray:
        """Spike counts of all 122 neurons in the last step."""
        return np.concatenate([self.inp.spikes, self.hid.spikes, self.out.spikes], axis=-1)


def network_step(net: NetworkState, inputs, pair: SynapsePair, dt: float | None = None):
    """One control step: encode, propagate spikes through all layers, decode.

    ``inputs`` is ``(e_y, e_psi, kappa, u)``; scalars or arrays matching the
    batch shape.  Returns ``(net, delta)``; ``net`` is updated in place.
    """
    cfg = net.cfg
    dt = cfg.dt if dt is None else dt
    lif_step(net.inp, cfg.input_lif, _input_currents(cfg, *inputs), dt)
    tr = net.inp.trace
    u_d, u_a = tr[..., :N_DEND], tr[..., N_DEND:]
    drive = np.concatenate([synapse_currents(u_d, u_a, pair.w_e), synapse_currents(u_d, u_a, pair.w_i)], axis=-1)
    lif_step(net.hid, cfg.hidden_lif, drive + cfg.hidden_bias, dt)
    h = net.hid.trace
    sums = np.stack([h[..., :N_PER_VAR].sum(-1), h[..., N_PER_VAR:].sum(-1)], axis=-1)
    lif_step(net.out, cfg.output_lif, cfg.output_gain * sums, dt)
    net.t += 1
    return net, decode_steering(net.out.trace, cfg.decoder)


# ---------------------------------------------------------------- weight files


def save_weights(path, pair: SynapsePair, cfg: NetworkConfig, extra: dict | None = None) -> None:
    doc = {
        "rows": N_DEND,
        "cols": N_AXO,
        "w_e": pair.w_e.ravel().tolist(),
        "w_i": pair.w_i.ravel().tolist(),
        "w_max": pair.w_max,
        "encoder_config": cfg.to_dict(),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1))


def load_weights(path) -> tuple[SynapsePair, NetworkConfig]:
    doc = json.loads(Path(path).read_text())
    rows, cols = int(doc["rows"]), int(doc["cols"])
    if (rows, cols) != (N_DEND, N_AXO):
        raise ValueError(f"weight file is {rows}x{cols}, expected {N_DEND}x{N_AXO}")
    w_e = np.asarray(doc["w_e"], dtype=float)
    w_i = np.asarray(doc["w_i"], dtype=float)
    if w_e.size != rows * cols or w_i.size != rows * cols:
        raise ValueError("weight arrays do not match rows x cols")
    pair = SynapsePair(w_e.reshape(rows, cols), w_i.reshape(rows, cols), float(doc["w_max"]))
    return pair, NetworkConfig.from_dict(doc.get("encoder_config", {}))
