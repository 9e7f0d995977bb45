"""Closed-loop scenarios: the 1 m lateral step and laps of a handling track.

One loop serves every controller.  Each control step reads the tracking
errors at the current pose, asks the controller for a steering command,
passes it through the steering actuator and advances the plant by ``dt``.
The ``e_y`` column and every KPI use the lateral error at the vehicle; the
controllers see the preview-point error.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .kpi import compute_step_kpis, compute_track_kpis
from .pcwp import ControlState, GainSchedule, pcwp_steering
from .plasticity import RStdpLearner, StdpParams
from .snn import NetworkState, SynapsePair, load_weights, network_step, save_weights
from .track import (
    OffTrackError,
    PreviewConfig,
    SpeedProfile,
    TrackPath,
    TrackSpec,
    build_track,
    path_errors,
    straight_path,
)
from .vehicle import SteeringActuator, VehicleParams, VehicleState, bicycle_step

SCHEMA_VERSION = 1
COLUMNS = ("t", "X", "Y", "psi", "u", "e_y", "e_psi", "kappa", "delta", "ay", "jerk", "reward")
CONTROLLERS = ("pcwp", "snn-frozen", "snn-learning")
RUN_OUT = 100.0  # m of straight after the last lap, so the preview never leaves the path


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


class ScenarioAbort(RuntimeError):
    """The run stopped early (vehicle left the track)."""

    def __init__(self, message, lap=None, result=None):
        super().__init__(message)
        self.lap = lap
        self.result = result


def reference_track_file() -> Path:
    return Path(str(resources.files("neurosteer") / "data" / "reference_track.json"))


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "step"
    controller: str = "pcwp"
    dt: float = 1e-3
    seed: int = 0
    # step scenario
    step_offset: float = 1.0
    speed: float | None = 15.0  # constant speed; None on a track means the curvature profile
    duration: float = 8.0
    # track scenario
    track_file: str | None = None
    laps: int = 1
    profile: SpeedProfile = field(default_factory=SpeedProfile)
    # plant, preview and actuator
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    preview: PreviewConfig = field(default_factory=PreviewConfig)
    actuator_bandwidth: float = 10.0
    actuator_damping: float = 0.8
    control_decimation: int = 1
    # controllers
    pcwp: GainSchedule | None = None
    weights_file: str | None = None
    warmup: float = 0.5
    learning: StdpParams = field(default_factory=StdpParams)
    snapshot_every: int = 1  # laps between weight snapshots (learning runs)

    def __post_init__(self):
        if self.scenario not in ("step", "track"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"unknown controller {self.controller!r}; expected one of {CONTROLLERS}")
        if not (self.dt > 0 and self.duration > 0 and self.warmup >= 0):
            raise ConfigError("dt and duration must be positive, warmup non-negative")
        if self.laps < 1 or self.control_decimation < 1 or self.snapshot_every < 1:
            raise ConfigError("laps, control_decimation and snapshot_every must be >= 1")
        if self.speed is not None and not self.speed > 0.1:
            raise ConfigError("speed must exceed 0.1 m/s")
        if self.scenario == "step" and self.speed is None:
            raise ConfigError("the step scenario needs a constant speed")
        if self.controller != "pcwp" and not self.weights_file:
            raise ConfigError(f"controller {self.controller!r} needs a weights file")

    @property
    def gains(self) -> GainSchedule:
        return self.pcwp or GainSchedule.default(self.vehicle)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario,
            "controller": self.controller,
            "dt": self.dt,
            "seed": self.seed,
            "step": {"offset": self.step_offset, "duration": self.duration},
            "speed": self.speed,
            "track": {"file": self.track_file, "laps": self.laps, "profile": self.profile.to_dict()},
            "vehicle": self.vehicle.to_dict(),
            "preview": {"t_p": self.preview.t_p, "d_min": self.preview.d_min},
            "actuator": {"bandwidth": self.actuator_bandwidth, "damping": self.actuator_damping},
            "control_decimation": self.control_decimation,
            "pcwp": self.gains.to_dict(),
            "weights": self.weights_file,
            "warmup": self.warmup,
            "learning": self.learning.to_dict(),
            "snapshot_every": self.snapshot_every,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> ScenarioConfig:
        """Parse a config document; relative file paths resolve against ``base_dir``."""
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
        known = {
            "schema_version", "scenario", "controller", "dt", "seed", "step", "speed", "track", "vehicle",
            "preview", "actuator", "control_decimation", "pcwp", "weights", "warmup", "learning", "snapshot_every",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        def path(p):
            if p is None:
                return None
            p = Path(p)
            return str(p if p.is_absolute() or base_dir is None else Path(base_dir) / p)

        try:
            step = d.get("step", {})
            track = d.get("track", {})
            act = d.get("actuator", {})
            kw = dict(
                scenario=d.get("scenario", "step"),
                controller=d.get("controller", "pcwp"),
                dt=float(d.get("dt", 1e-3)),
                seed=int(d.get("seed", 0)),
                step_offset=float(step.get("offset", 1.0)),
                duration=float(step.get("duration", 8.0)),
                speed=None if d.get("speed", 15.0) is None else float(d.get("speed", 15.0)),
                track_file=path(track.get("file")),
                laps=int(track.get("laps", 1)),
                profile=SpeedProfile(**{k: float(v) for k, v in track.get("profile", {}).items()}),
                vehicle=VehicleParams(**{k: float(v) for k, v in d.get("vehicle", {}).items()}),
                preview=PreviewConfig(**{k: float(v) for k, v in d.get("preview", {}).items()}),
                actuator_bandwidth=float(act.get("bandwidth", 10.0)),
                actuator_damping=float(act.get("damping", 0.8)),
                control_decimation=int(d.get("control_decimation", 1)),
                pcwp=GainSchedule.from_dict(d["pcwp"]) if d.get("pcwp") else None,
                weights_file=path(d.get("weights")),
                warmup=float(d.get("warmup", 0.5)),
                learning=StdpParams.from_dict(d.get("learning", {})),
                snapshot_every=int(d.get("snapshot_every", 1)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg = cls(**kw)
        for f in (cfg.weights_file, cfg.track_file):
            if f is not None and not Path(f).is_file():
                raise ConfigError(f"file not found: {f}")
        return cfg

    @classmethod
    def load(cls, path) -> ScenarioConfig:
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc, base_dir=path.parent)


# ---------------------------------------------------------------- controllers


class PcwpController:
    learning = False

    def __init__(self, gs: GainSchedule):
        self.gs = gs

    def warm_up(self, inputs, steps: int) -> None:
        pass

    def __call__(self, e_y, e_psi, kappa, u) -> float:
        return pcwp_steering(ControlState(e_y=e_y, e_psi=e_psi), kappa, u, self.gs)

    def learn(self, e_lat: float) -> float:
        return 0.0


class SnnController:
    def __init__(self, pair: SynapsePair, net: NetworkState, learning: StdpParams | None = None):
        self.pair = pair
        self.net = net
        self.learning = learning is not None
        self.learner = RStdpLearner(learning, net.cfg.dt) if learning is not None else None

    def warm_up(self, inputs, steps: int) -> None:
        for _ in range(steps):
            network_step(self.net, inputs, self.pair)

    def __call__(self, e_y, e_psi, kappa, u) -> float:
        return network_step(self.net, (e_y, e_psi, kappa, u), self.pair)[1]

    def learn(self, e_lat: float) -> float:
        return self.learner.step(self.net, self.pair, e_lat)


def make_controller(cfg: ScenarioConfig):
    if cfg.controller == "pcwp":
        return PcwpController(cfg.gains)
    pair, ncfg = load_weights(cfg.weights_file)
    if not math.isclose(ncfg.dt, cfg.dt):
        raise ConfigError(f"network dt {ncfg.dt} differs from scenario dt {cfg.dt}")
    net = NetworkState.create(ncfg, seed=cfg.seed)
    return SnnController(pair, net, cfg.learning if cfg.controller == "snn-learning" else None)


# ---------------------------------------------------------------- runs


@dataclass
class RunResult:
    columns: dict  # column name -> np.ndarray
    kpis: dict
    snapshots: list = field(default_factory=list)  # (lap, SynapsePair)
    network: object = None

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(COLUMNS)
        cols = [self.columns[c].tolist() for c in COLUMNS]
        for row in zip(*cols):
            w.writerow([repr(v) for v in row])
        return buf.getvalue()

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "timeseries.csv").write_text(self.csv_text(), newline="")
        (out / "kpis.json").write_text(json.dumps(self.kpis, indent=1, sort_keys=True) + "\n")
        if self.snapshots and self.network is not None:
            for lap, pair in self.snapshots:
                save_weights(out / f"weights_lap{lap:03d}.json", pair, self.network.cfg, {"lap": lap})


def _load_track(cfg: ScenarioConfig) -> tuple[TrackPath, float]:
    """Unrolled path for ``cfg.laps`` laps and the length of one lap."""
    f = cfg.track_file or str(reference_track_file())
    doc = json.loads(Path(f).read_text())
    if "points" in doc:
        # a sampled path cannot be repeated seamlessly; drive it once per run
        if cfg.laps != 1:
            raise ConfigError("multi-lap runs need a track spec, not a sampled path")
        return TrackPath.from_dict(doc), float(doc["total_length"])
    spec = TrackSpec.from_dict(doc)
    lap = spec.length
    rep = spec.repeated(cfg.laps)
    straights = list(rep.straights)
    straights[-1] += RUN_OUT
    return build_track(replace(rep, straights=tuple(straights))), lap


def _simulate(cfg: ScenarioConfig, path: TrackPath, speed_at, end_station: float, max_steps: int, lap_length=None):
    """Shared closed loop.  Returns (columns, controller, snapshots, abort)."""
    ctrl = make_controller(cfg)
    vp, pc, dt = cfg.vehicle, cfg.preview, cfg.dt
    act = SteeringActuator(cfg.actuator_bandwidth, cfg.actuator_damping)
    if cfg.scenario == "step":
        st = VehicleState()
    else:
        st = VehicleState(X=float(path.X[0]), Y=float(path.Y[0]), psi=float(path.psi[0]))

    e = path_errors(st, path, speed_at(0.0), pc)
    # the network settles on the undisturbed situation before the run starts
    ctrl.warm_up((0.0, 0.0, e.kappa, speed_at(0.0)), int(round(cfg.warmup / dt)))
    if ctrl.learning:
        ctrl.learner.reward.prev_abs_ey = abs(e.e_y)

    rows = {c: [] for c in COLUMNS if c != "jerk"}
    stations = []
    snapshots = []
    hint = e.index
    delta = 0.0
    lap_done = 0
    abort = None
    for k in range(max_steps):
        u = speed_at(e.station)
        try:
            e = path_errors(st, path, u, pc, hint)
        except OffTrackError as exc:
            abort = str(exc)
            break
        hint = e.index
        if e.station >= end_station:
            if lap_length and ctrl.learning:
                snapshots.append((int(round(end_station / lap_length)), ctrl.pair.copy()))
            break
        if k % cfg.control_decimation == 0:
            delta = ctrl(e.e_y, e.e_psi, e.kappa, u)
        # the reward sees the same preview error the network is fed
        r = ctrl.learn(e.e_y) if ctrl.learning else 0.0
        st = bicycle_step(st, act.step(delta, dt), u, vp, dt)
        rows["t"].append(k * dt)
        rows["X"].append(st.X)
        rows["Y"].append(st.Y)
        rows["psi"].append(st.psi)
        rows["u"].append(u)
        rows["e_y"].append(e.e_lat)
        rows["e_psi"].append(e.e_psi)
        rows["kappa"].append(e.kappa)
        rows["delta"].append(delta)
        rows["ay"].append(st.ay)
        rows["reward"].append(r)
        stations.append(e.station)
        if lap_length and ctrl.learning:
            lap = int(e.station // lap_length)
            if lap > lap_done:
                lap_done = lap
                if lap % cfg.snapshot_every == 0:
                    snapshots.append((lap, ctrl.pair.copy()))
    cols = {c: np.asarray(v, float) for c, v in rows.items()}
    return cols, np.asarray(stations), ctrl, snapshots, abort


def _finish(cols, dt):
    from .kpi import jerk

    cols["jerk"] = jerk(cols["ay"], dt)
    return cols


def run_step(cfg: ScenarioConfig) -> RunResult:
    """The lateral step: the path jumps ``step_offset`` m to the left at t = 0."""
    if cfg.scenario != "step":
        raise ConfigError("run_step needs a step scenario")
    u = cfg.speed
    path = straight_path(u * cfg.duration + 200.0, offset=cfg.step_offset, x0=-50.0)
    n = int(round(cfg.duration / cfg.dt))
    cols, _, ctrl, _, abort = _simulate(cfg, path, lambda s: u, math.inf, n)
    cols = _finish(cols, cfg.dt)
    res = RunResult(cols, {}, network=getattr(ctrl, "net", None))
    if abort:
        raise ScenarioAbort(abort, result=res)
    kp = compute_step_kpis(cols["e_y"], cfg.dt, cfg.step_offset)
    res.kpis = {"scenario": "step", "controller": cfg.controller, "step": kp.to_dict(),
                "track": compute_track_kpis(cols["e_y"], cols["ay"], cfg.dt).to_dict()}
    return res


def run_track(cfg: ScenarioConfig) -> RunResult:
    """``cfg.laps`` consecutive laps; state and weights carry over between laps."""
    if cfg.scenario != "track":
        raise ConfigError("run_track needs a track scenario")
    path, lap_length = _load_track(cfg)
    end = cfg.laps * lap_length
    if cfg.speed is None:
        prof = cfg.profile.along(path).tolist()
        sp = path.spacing

        def speed_at(s):
            return prof[min(int(s / sp), len(prof) - 1)]
    else:
        def speed_at(s):
            return cfg.speed

    worst = cfg.speed or cfg.profile.u_min
    max_steps = int(2.0 * end / worst / cfg.dt) + 1
    cols, stations, ctrl, snaps, abort = _simulate(cfg, path, speed_at, end, max_steps, lap_length)
    cols = _finish(cols, cfg.dt)
    res = RunResult(cols, {}, snaps, getattr(ctrl, "net", None))
    lap_idx = np.floor(stations / lap_length).astype(int)
    if abort:
        lap = int(lap_idx[-1]) if len(lap_idx) else 0
        res.kpis = {"scenario": "track", "controller": cfg.controller, "aborted": abort, "lap": lap}
        raise ScenarioAbort(f"{abort} (lap {lap})", lap=lap, result=res)
    res.kpis = track_report(cols, lap_idx, cfg)
    return res


def track_report(cols, lap_idx, cfg: ScenarioConfig) -> dict:
    laps = []
    for lap in range(cfg.laps):
        m = lap_idx == lap
        if not m.any():
            continue
        k = compute_track_kpis(cols["e_y"][m], cols["ay"][m], cfg.dt).to_dict()
        k["lap"] = lap
        laps.append(k)
    m = lap_idx < cfg.laps
    return {
        "scenario": "track",
        "controller": cfg.controller,
        "track": compute_track_kpis(cols["e_y"][m], cols["ay"][m], cfg.dt).to_dict(),
        "laps": laps,
        "lap_rmse": [k["rmse"] for k in laps],
    }


def run(cfg: ScenarioConfig) -> RunResult:
    return run_step(cfg) if cfg.scenario == "step" else run_track(cfg)
