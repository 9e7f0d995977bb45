"""Reward-modulated STDP: eligibility traces gated by a tracking-error reward.

Pairings of a dendritic (pre) spike with a later hidden (post) spike charge
a per-synapse eligibility trace, weighted by the causal STDP kernel and by
the axo-axonic activity gating that synapse.  A scalar reward derived from
the change in lateral error converts eligibility into weight change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .snn import N_AXO, N_DEND, NetworkState, SynapsePair


@dataclass(frozen=True)
class StdpParams:
    T: float = 0.02  # s
    elig_tau: float = 0.2  # s
    eta: float = 1e-13  # per unit of eligibility, which reaches ~1e8 at the network's firing rates
    pair_window: float = 0.05  # s
    e_scale: float = 0.01  # m of error change per control step for full reward

    def __post_init__(self):
        if not (self.T > 0 and self.elig_tau > 0 and self.pair_window > 0 and self.e_scale > 0):
            raise ValueError("T, elig_tau, pair_window and e_scale must be positive")
        if not self.eta >= 0:
            raise ValueError("eta must be non-negative")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("T", "elig_tau", "eta", "pair_window", "e_scale")}

    @classmethod
    def from_dict(cls, d: dict) -> StdpParams:
        unknown = set(d) - {"T", "elig_tau", "eta", "pair_window", "e_scale"}
        if unknown:
            raise ValueError(f"unknown learning keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


def stdp_kernel(t_pre, t_post, T: float):
    """``exp(-(t_post - t_pre) / T)`` for causal pairs, 0 for acausal ones."""
    lag = np.asarray(t_post, float) - np.asarray(t_pre, float)
    k = np.where(lag >= 0, np.exp(-np.maximum(lag, 0.0) / T), 0.0)
    return float(k) if k.ndim == 0 else k


@dataclass
class EligibilityState:
    e_exc: np.ndarray
    e_inh: np.ndarray

    @classmethod
    def zeros(cls) -> EligibilityState:
        return cls(np.zeros((N_DEND, N_AXO)), np.zeros((N_DEND, N_AXO)))


class PreSpikeHistory:
    """Dendritic spike counts of the last ``pair_window`` s.

    ``kernel_sum()`` is the STDP-weighted count of pre spikes a post spike
    emitted now would pair with: lag 0 included, lags beyond the window
    dropped.  Kept as a running sum so each step costs O(n).
    """

    def __init__(self, params: StdpParams, dt: float, n: int = N_DEND):
        self.depth = int(math.floor(params.pair_window / dt + 1e-9)) + 1
        self.decay = stdp_kernel(0.0, dt, params.T)
        self.tail = stdp_kernel(0.0, self.depth * dt, params.T)  # weight a spike would have on leaving
        self.buf = np.zeros((self.depth, n))
        self.head = 0
        self.sum = np.zeros(n)

    def push(self, spikes) -> None:
        old = self.buf[self.head]
        self.sum *= self.decay
        self.sum += spikes
        self.sum -= self.tail * old
        np.maximum(self.sum, 0.0, out=self.sum)  # guard against round-off below zero
        old[...] = spikes
        self.head = (self.head + 1) % self.depth

    def kernel_sum(self) -> np.ndarray:
        return self.sum


def accumulate_eligibility(
    elig: EligibilityState, pre_sum, u_a, post_exc, post_inh, params: StdpParams, dt: float
) -> EligibilityState:
    """Decay both traces by one step, then add this step's pairings.

    ``pre_sum`` is the kernel-weighted pre-spike count per dendritic neuron
    (see ``PreSpikeHistory``), ``u_a`` the axo-axonic traces and
    ``post_exc``/``post_inh`` the spike counts of agonist/antagonist hidden
    neurons.  Synapse (i, j) of a matrix gains ``pre_sum[i] * u_a[j]`` per
    post spike of hidden neuron j.  Mutates and returns ``elig``.
    """
    decay = math.exp(-dt / params.elig_tau)
    elig.e_exc *= decay
    elig.e_inh *= decay
    if np.any(post_exc):
        elig.e_exc += np.outer(pre_sum, u_a * post_exc)
    if np.any(post_inh):
        elig.e_inh += np.outer(pre_sum, u_a * post_inh)
    return elig


@dataclass
class RewardState:
    prev_abs_ey: float = 0.0
    r: float = 0.0
    e_scale: float = 0.01


def compute_reward(e_y: float, rs: RewardState) -> tuple[float, RewardState]:
    """Clipped improvement of |e_y| since the last call, in units of e_scale."""
    if not math.isfinite(e_y):
        raise ValueError("non-finite lateral error")
    a = abs(e_y)
    r = min(1.0, max(-1.0, (rs.prev_abs_ey - a) / rs.e_scale))
    return r, RewardState(a, r, rs.e_scale)


def apply_reward(pair: SynapsePair, elig: EligibilityState, r: float, eta: float) -> SynapsePair:
    """``w += eta * r * elig`` for both matrices, clamped to [0, w_max]. In place."""
    if eta == 0.0 or r == 0.0:
        return pair
    g = eta * r
    pair.w_e += g * elig.e_exc
    pair.w_i += g * elig.e_inh
    return pair.clamp()


class RStdpLearner:
    """Per-step glue between a running network and its synapse pair."""

    def __init__(self, params: StdpParams, dt: float, e_y0: float = 0.0):
        self.params = params
        self.dt = dt
        self.history = PreSpikeHistory(params, dt)
        self.elig = EligibilityState.zeros()
        self.reward = RewardState(abs(e_y0), 0.0, params.e_scale)

    def step(self, net: NetworkState, pair: SynapsePair, e_y: float) -> float:
        """Update eligibility from the step ``net`` just took; apply the reward for ``e_y``."""
        self.history.push(net.dend.spikes)
        accumulate_eligibility(
            self.elig,
            self.history.kernel_sum(),
            net.axo.trace,
            net.agon.spikes,
            net.antag.spikes,
            self.params,
            self.dt,
        )
        r, self.reward = compute_reward(e_y, self.reward)
        apply_reward(pair, self.elig, r, self.params.eta)
        return r
