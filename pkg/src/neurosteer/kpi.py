"""Step-response and tracking KPIs.

Step KPIs act on the lateral response ``y = step - e_y`` (the vehicle's
displacement toward the new path):

* rise time: 10 % to 90 % of the step, first crossings, linearly interpolated
* settling time: first entry into the +-2 % band that is never left again
* overshoot: largest excursion beyond the target, % of the step
* undershoot: largest dip back below the target after it was first reached, %
* peak: largest |y|

Tracking KPIs are population statistics of |e_y| plus the RMS of the
central-difference lateral jerk.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

SETTLE_BAND = 0.02
MIN_SETTLED_FRACTION = 0.1  # final in-band stretch must cover this share of the record


@dataclass(frozen=True)
class StepKpis:
    peak: float
    overshoot: float
    undershoot: float
    rise_time: float | None
    settling_time: float | None
    settled: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrackKpis:
    rmse: float
    max: float
    mean: float
    sd: float
    jerk_rms: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def _first_crossing(y, level, dt) -> float | None:
    idx = np.flatnonzero(y >= level)
    if idx.size == 0:
        return None
    k = int(idx[0])
    if k == 0:
        return 0.0
    y0, y1 = y[k - 1], y[k]
    return (k - 1 + (level - y0) / (y1 - y0)) * dt


def compute_step_kpis(e_y, dt: float, step: float = 1.0) -> StepKpis:
    """KPIs of a lateral step of magnitude ``step`` from its error series."""
    e = np.asarray(e_y, float)
    if e.size == 0:
        raise ValueError("empty series")
    if step == 0.0:
        peak = float(np.max(np.abs(e)))
        return StepKpis(peak, 0.0, 0.0, 0.0, 0.0, True)
    # normalise so the response rises from 0 to 1
    y = (step - e) / step
    peak = float(np.max(np.abs(step - e)))
    overshoot = max(0.0, float(y.max()) - 1.0) * 100.0
    reached = np.flatnonzero(y >= 1.0)
    undershoot = 0.0
    if reached.size:
        undershoot = max(0.0, 1.0 - float(y[reached[0] :].min())) * 100.0

    t10 = _first_crossing(y, 0.1, dt)
    t90 = _first_crossing(y, 0.9, dt)
    rise = None if t10 is None or t90 is None else float(t90 - t10)

    outside = np.flatnonzero(np.abs(y - 1.0) > SETTLE_BAND)
    if outside.size == 0:
        settling, settled = 0.0, True
    else:
        last = int(outside[-1])
        settled = (len(y) - 1 - last) >= MIN_SETTLED_FRACTION * len(y)
        settling = (last + 1) * dt if settled else None
    return StepKpis(peak, overshoot, undershoot, rise, settling, settled)


def jerk(ay, dt: float) -> np.ndarray:
    """Central-difference derivative of the lateral acceleration."""
    ay = np.asarray(ay, float)
    if ay.size < 2:
        return np.zeros_like(ay)
    return np.gradient(ay, dt)


def compute_track_kpis(e_y, ay, dt: float) -> TrackKpis:
    e = np.abs(np.asarray(e_y, float))
    if e.size == 0:
        raise ValueError("empty series")
    mean = float(e.mean())
    sd = float(e.std())
    peak = float(e.max())
    # scaled by the peak so tiny errors do not underflow when squared
    rmse = peak * float(math.sqrt(np.mean((e / peak) ** 2))) if peak > 0 else 0.0
    j = jerk(ay, dt)
    return TrackKpis(rmse, peak, mean, sd, float(math.sqrt(np.mean(j * j))), int(e.size))
