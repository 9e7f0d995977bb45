"""Offline tuning of the PCwP feedback gains on the single-track model.

For each breakpoint speed the 1 m lateral step is simulated through the
steering actuator and the (k_ye, k_psie) pair minimising the ITAE of the
lateral error is selected, subject to at most ``max_overshoot`` overshoot and a peak lateral
acceleration of ``ay_limit``.  The result is frozen into
``neurosteer.pcwp`` as the default schedule.
"""

from __future__ import annotations

import itertools

import numpy as np

from .track import PreviewConfig, path_errors, straight_path
from .vehicle import SteeringActuator, VehicleParams, VehicleState, bicycle_step


def simulate_step(
    k_ye, k_psie, u, vehicle=None, preview=None, duration=8.0, dt=2e-3, step=1.0, delta_max=0.52, actuator=None
):
    """Lateral error and lateral acceleration of a pure-feedback step response."""
    vehicle = vehicle or VehicleParams()
    actuator = SteeringActuator() if actuator is None else actuator
    actuator.reset()
    preview = preview or PreviewConfig()
    path = straight_path(u * duration + 100.0, offset=step, x0=-20.0)
    st = VehicleState()
    hint = None
    n = int(round(duration / dt))
    e_lat = np.empty(n)
    ay = np.empty(n)
    for k in range(n):
        e = path_errors(st, path, u, preview, hint)
        hint = e.index
        d = min(delta_max, max(-delta_max, k_ye * e.e_y + k_psie * e.e_psi))
        e_lat[k] = e.e_lat
        st = bicycle_step(st, actuator.step(d, dt), u, vehicle, dt)
        ay[k] = st.ay
    return e_lat, ay


def tune_feedback(u, vehicle=None, preview=None, ay_limit=3.0, max_overshoot=0.01, dt=2e-3):
    """Grid search over (k_ye, k_psie ratio); returns (k_ye, k_psie, itae)."""
    best = None
    t = np.arange(int(round(8.0 / dt))) * dt
    for k_ye, ratio in itertools.product(np.geomspace(0.01, 0.2, 25), np.geomspace(0.5, 32.0, 13)):
        k_psie = ratio * k_ye
        e, ay = simulate_step(k_ye, k_psie, u, vehicle, preview, dt=dt)
        if np.max(np.abs(ay)) > ay_limit or -e.min() > max_overshoot:
            continue
        itae = float(np.sum(t * np.abs(e)) * dt)
        if best is None or itae < best[2]:
            best = (float(k_ye), float(k_psie), itae)
    if best is None:
        raise RuntimeError(f"no admissible gains at u = {u} m/s")
    return best


def tune_schedule(breakpoints, vehicle=None, preview=None, **kw):
    return {float(u): tune_feedback(float(u), vehicle, preview, **kw) for u in breakpoints}


if __name__ == "__main__":
    from .pcwp import BREAKPOINTS

    for u, (k_ye, k_psie, itae) in tune_schedule(BREAKPOINTS).items():
        print(f"{u:5.1f}  k_ye={k_ye:.4f}  k_psie={k_psie:.4f}  itae={itae:.4f}")
