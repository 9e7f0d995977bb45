"""Piecewise arc/straight centerlines and preview-point tracking errors.

Sign conventions used throughout the package:

* heading and curvature are counterclockwise-positive (left turns have κ > 0);
* lateral error is the position of the path relative to the vehicle,
  left-positive: a vehicle sitting 1 m left of the path sees ``e_lat = -1``;
* heading error is ``path heading - vehicle heading``.

With these conventions every PCwP gain is positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

OFF_TRACK_DISTANCE = 50.0  # m


class OffTrackError(RuntimeError):
    """The vehicle left the neighbourhood of the path (or ran past its end)."""


@dataclass(frozen=True)
class Arc:
    radius: float
    angle: float
    direction: int  # +1 left (counterclockwise), -1 right

    @property
    def length(self) -> float:
        return self.radius * self.angle

    @property
    def kappa(self) -> float:
        return self.direction / self.radius


@dataclass(frozen=True)
class TrackSpec:
    """Input of :func:`build_track`.

    ``straights`` has one entry per curve (the straight leading into it) plus
    an optional trailing straight.
    """

    curves: tuple[Arc, ...]
    straights: tuple[float, ...]
    spacing: float = 0.25
    start: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def segments(self) -> list[tuple[float, float]]:
        """(length, curvature) pairs in driving order."""
        if len(self.straights) not in (len(self.curves), len(self.curves) + 1):
            raise ValueError("need one straight per curve, plus an optional trailing straight")
        out = []
        for k, arc in enumerate(self.curves):
            if self.straights[k] > 0:
                out.append((float(self.straights[k]), 0.0))
            out.append((arc.length, arc.kappa))
        if len(self.straights) > len(self.curves) and self.straights[-1] > 0:
            out.append((float(self.straights[-1]), 0.0))
        return out

    @property
    def length(self) -> float:
        return sum(l for l, _ in self.segments())

    def repeated(self, laps: int) -> TrackSpec:
        """The same lap driven ``laps`` times back to back.

        A lap need not close geometrically: each repetition starts from the
        end pose of the previous one, so the curvature profile is periodic.
        """
        if laps < 1:
            raise ValueError("laps must be >= 1")
        n = len(self.curves)
        lead = list(self.straights[:n])
        trailing = self.straights[n] if len(self.straights) > n else 0.0
        merged: list[float] = []
        for k in range(laps):
            block = list(lead)
            if k > 0:
                # the trailing straight of a lap runs into the lead-in of the next
                block[0] += trailing
            merged.extend(block)
        merged.append(trailing)
        curves = list(self.curves) * laps
        return TrackSpec(tuple(curves), tuple(merged), self.spacing, self.start)

    def to_dict(self) -> dict:
        return {
            "spacing": self.spacing,
            "start": list(self.start),
            "curves": [[a.radius, a.angle, "left" if a.direction > 0 else "right"] for a in self.curves],
            "straights": list(self.straights),
        }

    @classmethod
    def from_dict(cls, d: dict) -> TrackSpec:
        curves = []
        for radius, angle, direction in d["curves"]:
            if isinstance(direction, str):
                direction = {"left": 1, "right": -1}[direction.lower()]
            curves.append(Arc(float(radius), float(angle), 1 if direction > 0 else -1))
        return cls(
            curves=tuple(curves),
            straights=tuple(float(x) for x in d["straights"]),
            spacing=float(d.get("spacing", 0.25)),
            start=tuple(d.get("start", (0.0, 0.0, 0.0))),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> TrackSpec:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class TrackPath:
    """Centerline sampled every ``spacing`` metres of arc length."""

    X: np.ndarray
    Y: np.ndarray
    psi: np.ndarray
    kappa: np.ndarray
    spacing: float
    total_length: float
    _lists: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.X)
        if not (len(self.Y) == len(self.psi) == len(self.kappa) == n) or n < 2:
            raise ValueError("track arrays must have equal length >= 2")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        self._lists = (self.X.tolist(), self.Y.tolist(), self.psi.tolist(), self.kappa.tolist())

    def __len__(self) -> int:
        return len(self.X)

    @property
    def s(self) -> np.ndarray:
        return np.arange(len(self.X)) * self.spacing

    def mirrored(self) -> TrackPath:
        return TrackPath(self.X.copy(), -self.Y, -self.psi, -self.kappa, self.spacing, self.total_length)

    def to_dict(self) -> dict:
        pts = np.column_stack([self.X, self.Y, self.psi, self.kappa]).tolist()
        return {"spacing": self.spacing, "total_length": self.total_length, "points": pts}

    @classmethod
    def from_dict(cls, d: dict) -> TrackPath:
        pts = np.asarray(d["points"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ValueError("track points must be [X, Y, psi, kappa] rows")
        spacing = float(d["spacing"])
        total = float(d.get("total_length", (len(pts) - 1) * spacing))
        return cls(pts[:, 0].copy(), pts[:, 1].copy(), pts[:, 2].copy(), pts[:, 3].copy(), spacing, total)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> TrackPath:
        return cls.from_dict(json.loads(Path(path).read_text()))


def straight_path(length: float, spacing: float = 0.25, offset: float = 0.0, x0: float = 0.0) -> TrackPath:
    """A straight line along +X at lateral position ``Y = offset``."""
    n = int(math.floor(length / spacing + 1e-9)) + 1
    X = x0 + np.arange(n) * spacing
    return TrackPath(X, np.full(n, float(offset)), np.zeros(n), np.zeros(n), spacing, float(length))


def build_track(spec: TrackSpec, min_radius: float = 0.0) -> TrackPath:
    """Sample the centerline of ``spec`` at uniform arc-length spacing.

    Poses are evaluated in closed form on each segment, so there is no
    accumulated integration drift.  ``min_radius`` is the caller's sanity
    floor (typically twice the wheelbase).
    """
    if not spec.spacing > 0:
        raise ValueError("spacing must be positive")
    for arc in spec.curves:
        if not arc.radius > 0:
            raise ValueError(f"non-positive curve radius {arc.radius!r}")
        if arc.radius <= min_radius:
            raise ValueError(f"curve radius {arc.radius} m is below the {min_radius} m floor")
        if not arc.angle > 0:
            raise ValueError("arc angles must be positive (use direction for the turn sense)")
    if any(s < 0 for s in spec.straights):
        raise ValueError("straight lengths must be non-negative")

    segs = spec.segments()
    total = sum(l for l, _ in segs)
    n = int(math.floor(total / spec.spacing + 1e-9)) + 1
    s = np.arange(n) * spec.spacing
    X = np.empty(n)
    Y = np.empty(n)
    psi = np.empty(n)
    kappa = np.empty(n)

    x0, y0, h0 = (float(v) for v in spec.start)
    seg_start = 0.0
    for k, (length, kap) in enumerate(segs):
        last = k == len(segs) - 1
        seg_end = seg_start + length
        mask = (s >= seg_start) & ((s < seg_end) | last)
        l = s[mask] - seg_start
        h = h0 + kap * l
        if kap == 0.0:
            X[mask] = x0 + l * math.cos(h0)
            Y[mask] = y0 + l * math.sin(h0)
        else:
            X[mask] = x0 + (np.sin(h) - math.sin(h0)) / kap
            Y[mask] = y0 - (np.cos(h) - math.cos(h0)) / kap
        psi[mask] = h
        kappa[mask] = kap
        # advance the segment start pose
        h1 = h0 + kap * length
        if kap == 0.0:
            x0, y0 = x0 + length * math.cos(h0), y0 + length * math.sin(h0)
        else:
            x0, y0 = x0 + (math.sin(h1) - math.sin(h0)) / kap, y0 - (math.cos(h1) - math.cos(h0)) / kap
        h0 = h1
        seg_start = seg_end
    return TrackPath(X, Y, psi, kappa, float(spec.spacing), float(total))


@dataclass(frozen=True)
class PreviewConfig:
    t_p: float = 0.5
    d_min: float = 2.0

    def __post_init__(self):
        if self.t_p < 0 or self.d_min < 0:
            raise ValueError("preview time and minimum distance must be non-negative")

    def distance(self, u: float) -> float:
        return max(self.d_min, u * self.t_p)


class PathErrors(NamedTuple):
    e_y: float  # lateral error at the preview point (controller input)
    e_psi: float
    kappa: float  # path curvature at the preview point
    e_lat: float  # lateral error at the vehicle
    station: float  # arc length of the projection onto the path
    index: int  # path segment holding the projection


def _wrap(a: float) -> float:
    # odd-symmetric wrap into (-pi, pi]; exact identity for small angles
    if a > math.pi:
        return a - 2.0 * math.pi * math.floor((a + math.pi) / (2.0 * math.pi))
    if a < -math.pi:
        return a + 2.0 * math.pi * math.floor((math.pi - a) / (2.0 * math.pi))
    return a


def locate(path: TrackPath, X: float, Y: float, hint: int | None = None) -> tuple[int, float]:
    """Segment index ``k`` and fraction ``t`` of the projection of (X, Y).

    With a ``hint`` the search walks locally from the previous match, which
    keeps the matched index monotone while driving forward.
    """
    xs, ys, _, _ = path._lists
    n = len(xs)
    if hint is None:
        d2 = (path.X - X) ** 2 + (path.Y - Y) ** 2
        k = int(np.argmin(d2))
    else:
        k = int(hint)
    k = min(max(k, 0), n - 2)

    def project(k):
        ax, ay = xs[k], ys[k]
        bx, by = xs[k + 1] - ax, ys[k + 1] - ay
        return ((X - ax) * bx + (Y - ay) * by) / (bx * bx + by * by)

    t = project(k)
    while t > 1.0 and k < n - 2:
        k += 1
        t = project(k)
    while t < 0.0 and k > 0:
        t_prev = project(k - 1)
        if t_prev > 1.0:  # between two segments on the outside of a corner
            break
        k -= 1
        t = t_prev
    if t > 1.0 and k == n - 2:
        raise OffTrackError("vehicle ran past the end of the path")
    return k, min(max(t, 0.0), 1.0)


def path_errors(st, path: TrackPath, u: float, pc: PreviewConfig, hint: int | None = None) -> PathErrors:
    """Tracking errors of vehicle state ``st`` against ``path``.

    The lateral error at the vehicle comes from the orthogonal projection
    onto the centerline polyline; the preview error extrapolates it along
    the heading error over the preview distance ``max(d_min, u t_p)``.
    Curvature is read from the path at the preview station.
    """
    xs, ys, hs, ks = path._lists
    k, t = locate(path, st.X, st.Y, hint)
    px = xs[k] + t * (xs[k + 1] - xs[k])
    py = ys[k] + t * (ys[k + 1] - ys[k])
    ph = hs[k] + t * (hs[k + 1] - hs[k])
    dx, dy = px - st.X, py - st.Y
    if dx * dx + dy * dy > OFF_TRACK_DISTANCE**2:
        raise OffTrackError(f"vehicle is more than {OFF_TRACK_DISTANCE} m from the path")
    e_lat = -math.sin(ph) * dx + math.cos(ph) * dy
    e_psi = _wrap(ph - st.psi)
    d = pc.distance(u)
    e_y = e_lat + d * math.sin(e_psi)

    station = (k + t) * path.spacing
    f = station / path.spacing + d / path.spacing
    j = int(f)
    if j >= len(ks) - 1:
        kappa = ks[-1]
    else:
        w = f - j
        kappa = ks[j] + w * (ks[j + 1] - ks[j])
    return PathErrors(e_y, e_psi, kappa, e_lat, station, k)


def preview_errors(st, path: TrackPath, u: float, pc: PreviewConfig, hint: int | None = None) -> tuple[float, float, float]:
    """(e_y, e_psi, kappa) at the preview point."""
    e = path_errors(st, path, u, pc, hint)
    return e.e_y, e.e_psi, e.kappa


REFERENCE_RADII = (30.0, 50.0, 75.0, 100.0, 150.0, 250.0, 400.0, 600.0)
REFERENCE_LENGTH = 4300.0


def reference_spec(n_curves: int = 20, length: float = REFERENCE_LENGTH, spacing: float = 0.25) -> TrackSpec:
    """The reference handling track: cycling radii, alternating direction.

    Arcs turn ``min(pi/2, 120 m / R)``; straights follow a fixed 60..180 m
    pattern rescaled so the lap is exactly ``length`` long.
    """
    curves = []
    for k in range(n_curves):
        R = REFERENCE_RADII[k % len(REFERENCE_RADII)]
        curves.append(Arc(R, round(min(math.pi / 2, 120.0 / R), 6), 1 if k % 2 == 0 else -1))
    arcs = sum(a.length for a in curves)
    if arcs >= length:
        raise ValueError("arcs alone exceed the requested lap length")
    pattern = [60.0 + 30.0 * ((3 * k) % 5) for k in range(n_curves + 1)]
    scale = (length - arcs) / sum(pattern)
    straights = [round(p * scale, 6) for p in pattern[:-1]]
    straights.append(length - arcs - sum(straights))
    return TrackSpec(tuple(curves), tuple(straights), spacing)


@dataclass(frozen=True)
class SpeedProfile:
    """Curvature-limited speed along the path, with acceleration limits."""

    ay_max: float = 6.0  # m/s^2
    ax_max: float = 2.0
    ax_min: float = -4.0
    u_max: float = 30.0
    u_min: float = 5.0

    def __post_init__(self):
        if not (self.ay_max > 0 and self.ax_max > 0 and self.ax_min < 0 and self.u_max >= self.u_min > 0):
            raise ValueError("invalid speed profile limits")

    def along(self, path: TrackPath) -> np.ndarray:
        """Speed at every path sample (m/s)."""
        with np.errstate(divide="ignore"):
            u = np.sqrt(self.ay_max / np.abs(path.kappa))
        u = np.clip(u, self.u_min, self.u_max)
        ds = path.spacing
        # backward pass: brake in time for every curve; forward pass: limited traction
        for k in range(len(u) - 2, -1, -1):
            u[k] = min(u[k], math.sqrt(u[k + 1] ** 2 - 2.0 * self.ax_min * ds))
        for k in range(1, len(u)):
            u[k] = min(u[k], math.sqrt(u[k - 1] ** 2 + 2.0 * self.ax_max * ds))
        return u

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("ay_max", "ax_max", "ax_min", "u_max", "u_min")}
