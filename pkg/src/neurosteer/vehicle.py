"""Linear single-track (bicycle) lateral dynamics with a kinematic pose update.

States are integrated with a fixed-step RK4.  Longitudinal speed ``u`` is an
input held constant over each step; there is no longitudinal dynamics.
Sign convention: counterclockwise-positive yaw, left-positive lateral axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

U_MIN = 0.1  # m/s, the slip-angle expressions divide by u


@dataclass(frozen=True)
class VehicleParams:
    m: float = 1500.0
    Iz: float = 2500.0
    l_f: float = 1.2
    l_r: float = 1.5
    C_f: float = 80_000.0
    C_r: float = 100_000.0

    def __post_init__(self):
        for name in ("m", "Iz", "l_f", "l_r", "C_f", "C_r"):
            if not getattr(self, name) > 0:
                raise ValueError(f"vehicle parameter {name} must be positive")

    @property
    def L(self) -> float:
        return self.l_f + self.l_r

    @property
    def understeer_gradient(self) -> float:
        """K in rad s^2/m, so that steady-state steering is (L + K u^2) / R."""
        return self.m * (self.l_r * self.C_r - self.l_f * self.C_f) / (self.C_f * self.C_r * self.L)

    def steady_yaw_rate(self, delta: float, u: float) -> float:
        """Steady-state yaw rate under constant ``delta``: u delta / (L + K u^2)."""
        return u * delta / (self.L + self.understeer_gradient * u * u)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("m", "Iz", "l_f", "l_r", "C_f", "C_r")}


@dataclass(frozen=True)
class VehicleState:
    ydot: float = 0.0
    psidot: float = 0.0
    X: float = 0.0
    Y: float = 0.0
    psi: float = 0.0
    s: float = 0.0
    ay: float = 0.0

    def mirrored(self) -> VehicleState:
        """Reflection about the global X axis."""
        return replace(self, ydot=-self.ydot, psidot=-self.psidot, Y=-self.Y, psi=-self.psi, ay=-self.ay)


def _derivs(ydot, psidot, psi, delta, u, p: VehicleParams):
    alpha_f = delta - (ydot + p.l_f * psidot) / u
    alpha_r = -(ydot - p.l_r * psidot) / u
    F_f = p.C_f * alpha_f
    F_r = p.C_r * alpha_r
    ay = (F_f + F_r) / p.m
    d_ydot = ay - u * psidot
    d_psidot = (p.l_f * F_f - p.l_r * F_r) / p.Iz
    c, s = math.cos(psi), math.sin(psi)
    dX = u * c - ydot * s
    dY = u * s + ydot * c
    return d_ydot, d_psidot, dX, dY, psidot, ay


def bicycle_step(st: VehicleState, delta: float, u: float, p: VehicleParams, dt: float) -> VehicleState:
    """Advance the plant by ``dt`` under steering ``delta`` (rad) at speed ``u``.

    ``s`` accumulates ``u * dt``; ``ay`` is the lateral acceleration at the
    end of the step (``ẏ̇ + u ψ̇``).
    """
    if not u > U_MIN:
        raise ValueError(f"speed {u!r} m/s is below the single-track model limit of {U_MIN} m/s")
    if not dt > 0:
        raise ValueError("dt must be positive")

    y0, r0, X0, Y0, psi0 = st.ydot, st.psidot, st.X, st.Y, st.psi
    k1 = _derivs(y0, r0, psi0, delta, u, p)
    h = 0.5 * dt
    k2 = _derivs(y0 + h * k1[0], r0 + h * k1[1], psi0 + h * k1[4], delta, u, p)
    k3 = _derivs(y0 + h * k2[0], r0 + h * k2[1], psi0 + h * k2[4], delta, u, p)
    k4 = _derivs(y0 + dt * k3[0], r0 + dt * k3[1], psi0 + dt * k3[4], delta, u, p)
    w = dt / 6.0
    ydot = y0 + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    psidot = r0 + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    X = X0 + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    Y = Y0 + w * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    psi = psi0 + w * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
    ay = _derivs(ydot, psidot, psi, delta, u, p)[5]
    return VehicleState(ydot=ydot, psidot=psidot, X=X, Y=Y, psi=psi, s=st.s + u * dt, ay=ay)


@dataclass
class SteeringActuator:
    """Second-order steering system between the commanded and road-wheel angle.

    ``bandwidth`` (Hz) of 0 disables it (road-wheel angle = command).
    """

    bandwidth: float = 10.0
    damping: float = 0.8
    angle: float = 0.0
    rate: float = 0.0

    def reset(self, angle: float = 0.0) -> None:
        self.angle = angle
        self.rate = 0.0

    def step(self, command: float, dt: float) -> float:
        if self.bandwidth <= 0:
            self.angle = command
            return command
        wn = 2.0 * math.pi * self.bandwidth
        # semi-implicit Euler; stable for wn * dt < 2
        self.rate += dt * (wn * wn * (command - self.angle) - 2.0 * self.damping * wn * self.rate)
        self.angle += dt * self.rate
        return self.angle
