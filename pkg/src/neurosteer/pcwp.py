"""Path control with preview: curvature feedforward plus preview-error feedback."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .vehicle import VehicleParams

DELTA_MAX = 0.52  # rad, road-wheel steering limit
BREAKPOINTS = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)

# Output of `python -m neurosteer.tuning` (default vehicle, preview and
# steering actuator): minimum-ITAE 1 m step with <= 1% overshoot and
# |a_y| <= 3 m/s^2.
_K_YE = (0.0946, 0.0650, 0.0574, 0.0574, 0.0574, 0.0507)
_K_PSIE = (0.5350, 0.3679, 0.3247, 0.3247, 0.4592, 0.5732)


@dataclass(frozen=True)
class ControlState:
    ydot: float = 0.0
    psidot: float = 0.0
    e_y: float = 0.0
    e_psi: float = 0.0


@dataclass(frozen=True)
class GainSchedule:
    breakpoints: tuple[float, ...]
    k_ye: tuple[float, ...]
    k_psie: tuple[float, ...]
    k_ff: tuple[float, ...]
    L: float
    delta_max: float = DELTA_MAX

    def __post_init__(self):
        n = len(self.breakpoints)
        if n == 0:
            raise ValueError("empty gain schedule")
        if not (len(self.k_ye) == len(self.k_psie) == len(self.k_ff) == n):
            raise ValueError("every gain needs one value per breakpoint")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite([self.k_ye, self.k_psie, self.k_ff])):
            raise ValueError("gains must be finite")
        if not self.L > 0:
            raise ValueError("wheelbase must be positive")
        # cached arrays for np.interp
        object.__setattr__(self, "_bp", np.asarray(self.breakpoints, float))
        object.__setattr__(self, "_g", np.asarray([self.k_ye, self.k_psie, self.k_ff], float))

    @classmethod
    def default(cls, vehicle: VehicleParams | None = None, breakpoints=BREAKPOINTS) -> GainSchedule:
        """Feedback gains from the offline tuning, feedforward ``k_ff = K u^2``."""
        vehicle = vehicle or VehicleParams()
        K = vehicle.understeer_gradient
        bp = tuple(float(b) for b in breakpoints)
        k_ye = tuple(np.interp(bp, BREAKPOINTS, _K_YE))
        k_psie = tuple(np.interp(bp, BREAKPOINTS, _K_PSIE))
        return cls(bp, k_ye, k_psie, tuple(K * b * b for b in bp), vehicle.L)

    def to_dict(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "k_ye": list(self.k_ye),
            "k_psie": list(self.k_psie),
            "k_ff": list(self.k_ff),
            "L": self.L,
            "delta_max": self.delta_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GainSchedule:
        return cls(
            tuple(map(float, d["breakpoints"])),
            tuple(map(float, d["k_ye"])),
            tuple(map(float, d["k_psie"])),
            tuple(map(float, d["k_ff"])),
            float(d["L"]),
            float(d.get("delta_max", DELTA_MAX)),
        )


def interp_gains(u, gs: GainSchedule):
    """(k_ye, k_psie, k_ff) at speed ``u``; linear between breakpoints, held at the ends.

    ``u`` may be an array, in which case each gain is an array of the same shape.
    """
    if np.any(np.asarray(u) < 0):
        raise ValueError("speed must be non-negative")
    bp, g = gs._bp, gs._g
    if np.ndim(u) == 0:
        u = float(u)
        return float(np.interp(u, bp, g[0])), float(np.interp(u, bp, g[1])), float(np.interp(u, bp, g[2]))
    return np.interp(u, bp, g[0]), np.interp(u, bp, g[1]), np.interp(u, bp, g[2])


def pcwp_raw(e_y, e_psi, kappa, u, gs: GainSchedule):
    """Unsaturated steering law: preview feedback plus curvature feedforward.

    Vectorizes over array inputs.
    """
    k_ye, k_psie, k_ff = interp_gains(u, gs)
    return k_ye * e_y + k_psie * e_psi + (gs.L + k_ff) * kappa


def pcwp_steering(x: ControlState, kappa: float, u: float, gs: GainSchedule) -> float:
    """Steering angle (rad) for control state ``x`` on a path of curvature ``kappa``.

    Lateral velocity and yaw rate carry zero weight in this law.
    """
    d = pcwp_raw(x.e_y, x.e_psi, kappa, u, gs)
    return float(np.clip(d, -gs.delta_max, gs.delta_max))
