"""Command-line entry point: ``neurosteer {pretrain,run,compare,track-gen}``.

Exit status: 0 success, 2 configuration or usage error, 3 scenario aborted
(vehicle left the track), 1 anything else.  Failures print a one-line JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .pcwp import GainSchedule
from .pretrain import PretrainConfig, pretrain
from .scenario import SCHEMA_VERSION, ConfigError, ScenarioAbort, ScenarioConfig, reference_track_file, run
from .snn import NetworkConfig
from .track import TrackSpec, build_track
from .vehicle import VehicleParams

EXIT_CONFIG = 2
EXIT_ABORT = 3
EXIT_RUNTIME = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def _read_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return doc


def cmd_pretrain(args) -> int:
    """Config keys (all optional): vehicle, pcwp, network, pretrain."""
    doc = _read_json(args.config)
    if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    unknown = set(doc) - {"schema_version", "vehicle", "pcwp", "network", "pretrain"}
    if unknown:
        raise ConfigError(f"unknown pretrain config keys: {sorted(unknown)}")
    try:
        vehicle = VehicleParams(**doc.get("vehicle", {}))
        gs = GainSchedule.from_dict(doc["pcwp"]) if doc.get("pcwp") else GainSchedule.default(vehicle)
        net = NetworkConfig.from_dict(doc.get("network", {}))
        pc = PretrainConfig.from_dict(doc.get("pretrain", {}))
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    res = pretrain(gs, net, pc)
    report = args.report or str(Path(args.out).with_suffix("")) + "_fit.json"
    res.save(args.out, report)
    print(json.dumps(res.report))
    return 0


def cmd_run(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    try:
        res = run(cfg)
    except ScenarioAbort as exc:
        if exc.result is not None:
            exc.result.write(args.out_dir)
        raise
    res.write(args.out_dir)
    print(json.dumps(res.kpis.get("step") or res.kpis.get("track")))
    return 0


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            for i, x in enumerate(v):
                if isinstance(x, dict):
                    out.update(_flatten(x, f"{key}[{i}]."))
                elif isinstance(x, (int, float)) and not isinstance(x, bool):
                    out[f"{key}[{i}]"] = x
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            out[key] = v
    return out


def _kpis_of(src: str) -> dict:
    """KPIs from a run directory, a kpis.json file or a scenario config (run now)."""
    p = Path(src)
    if p.is_dir():
        return _read_json(p / "kpis.json")
    doc = _read_json(p)
    if "schema_version" in doc and "scenario" in doc:
        return run(ScenarioConfig.from_dict(doc, base_dir=p.parent)).kpis
    return doc


def compare_kpis(a: dict, b: dict) -> dict:
    fa, fb = _flatten(a), _flatten(b)
    rows = {}
    for k in sorted(set(fa) & set(fb)):
        va, vb = float(fa[k]), float(fb[k])
        rows[k] = {"a": va, "b": vb, "delta": vb - va, "rel": (vb - va) / abs(va) if va != 0 else None}
    return rows


def cmd_compare(args) -> int:
    threads = max(1, int(os.environ.get("NEUROSTEER_THREADS", "1") or 1))
    with ThreadPoolExecutor(max_workers=min(threads, 2)) as ex:
        ka, kb = ex.map(_kpis_of, args.runs)
    report = {"a": args.runs[0], "b": args.runs[1], "kpis": compare_kpis(ka, kb)}
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_track_gen(args) -> int:
    spec_path = args.spec or reference_track_file()
    try:
        spec = TrackSpec.from_dict(_read_json(spec_path))
        path = build_track(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad track spec {spec_path}: {exc}") from exc
    path.save(args.out)
    print(json.dumps({"total_length": path.total_length, "points": len(path), "curves": len(spec.curves)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="neurosteer", description="Spiking lateral controller workbench")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("pretrain", help="fit the synapse pair to the PCwP baseline")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="fit report path (default: <out>_fit.json)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="KPI deltas between two runs")
    p.add_argument("--runs", nargs=2, required=True, metavar=("A", "B"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("track-gen", help="sample a track spec into a path file")
    p.add_argument("--spec", help="track spec JSON (default: the reference track)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track_gen)
    return ap


def _fail(kind: str, code: int, message: str, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, str(exc))
    except ScenarioAbort as exc:
        return _fail("abort", EXIT_ABORT, str(exc), lap=exc.lap)
    except Exception as exc:  # noqa: BLE001 - last-resort reporting
        return _fail("runtime", EXIT_RUNTIME, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
