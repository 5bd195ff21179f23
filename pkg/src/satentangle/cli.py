"""Command-line front end.

    satentangle pass      --scenario S [--out DIR]
    satentangle simulate  --scenario S [--seed N] [--out DIR] [--duration S] [--workers K]
    satentangle analyze   --scenario S [--in DIR] --mode bell|fidelity|rates [--window-ps W]
    satentangle spacetime --scenario S [--out DIR] [--grid N]
    satentangle scenarios

Without ``--scenario`` the shipped reference scenario is used; the file name
of any shipped scenario (see ``satentangle scenarios``) also works. Exit codes:
0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, estimators, pipeline, spacetime, tagio
from ._atomic import atomic_open
from .eventsim import substream
from .geometry import EphemerisError, GeometryError, write_ephemeris
from .linkbudget import LinkBudgetError, write_attenuation
from .quantum import exact_fidelity
from .scenario import ScenarioError, load_scenario, reference_scenario, shipped_scenarios
from .timesync import SyncError

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
_BOOTSTRAP_STREAM = 3

TAGS1, TAGS2, TRUTH = "station1.ett", "station2.ett", "truth.csv"


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _load(args):
    try:
        if not args.scenario:
            scn = reference_scenario()
        elif not Path(args.scenario).exists() and args.scenario in shipped_scenarios():
            scn = reference_scenario(args.scenario)
        else:
            scn = load_scenario(args.scenario)
    except FileNotFoundError as exc:
        raise ConfigError(f"scenario file not found: {exc.filename}") from None
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from None
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        scn.seed = args.seed
    if getattr(args, "window_ps", None) is not None:
        if args.window_ps <= 0:
            raise ConfigError("--window-ps must be positive")
        scn.window_ps = float(args.window_ps)
    return scn


def _out_dir(args, scn) -> Path:
    out = Path(args.out if args.out else scn.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from None
    return out


def _write_json(path: Path, doc: dict) -> None:
    with atomic_open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _samples(scn):
    try:
        samples = scn.pass_samples()
    except (EphemerisError, OSError) as exc:
        raise DataError(str(exc)) from None
    if len(samples) < 2:
        raise DataError("scenario has no common pass above the cutoff")
    return samples


def cmd_pass(args) -> int:
    scn = _load(args)
    samples = _samples(scn)
    att = pipeline.pass_attenuation(scn, samples)
    out = _out_dir(args, scn)
    write_ephemeris(samples, out / "ephemeris.csv")
    write_attenuation(att, out / "attenuation.csv")
    total = np.array([a.total_db for a in att])
    i_min, i_max = int(np.argmin(total)), int(np.argmax(total))
    summary = {
        "scenario": scn.name,
        "duration_s": samples[-1].t - samples[0].t,
        "samples": len(samples),
        "min_total_db": float(total[i_min]),
        "min_total_at_s": att[i_min].t,
        "max_total_db": float(total[i_max]),
        "max_total_at_s": att[i_max].t,
        "max_total_sum_distance_km": samples[i_max].range1 + samples[i_max].range2,
    }
    _write_json(out / "pass_summary.json", summary)
    print(
        f"pass {summary['duration_s']:.0f} s, total attenuation "
        f"{summary['min_total_db']:.1f} dB to {summary['max_total_db']:.1f} dB"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    scn = _load(args)
    samples = _samples(scn)
    if args.duration is not None and args.duration <= 0:
        raise ConfigError("--duration must be positive")
    result, curves, cfgs = pipeline.simulate(scn, samples, duration=args.duration, workers=args.workers)
    out = _out_dir(args, scn)
    files = {"station1": out / TAGS1, "station2": out / TAGS2, "truth": out / TRUTH}
    tagio.write_tags(files["station1"], result.station1.tags)
    tagio.write_tags(files["station2"], result.station2.tags)
    tagio.write_truth(files["truth"], result.truth)
    exp1, exp2 = pipeline.expected_singles(scn, curves, result.duration)
    manifest = {
        "tool": "satentangle",
        "version": __version__,
        "command": "simulate",
        "seed": scn.seed,
        "duration_s": result.duration,
        "scenario": scn.resolved(),
        "resolved": {
            "source_state_fidelity": exact_fidelity(scn.source_state()),
            "handedness": [c.handedness_sign for c in cfgs],
            "propagation_placeholder_ps": [c.delay_ps for c in cfgs],
            "detector_efficiency_in_links": [scn.link_with_detectors(i).detector_efficiency for i in range(2)],
        },
        "counts": {
            "station1_tags": len(result.station1),
            "station2_tags": len(result.station2),
            "expected_detection_tags": [exp1, exp2],
            "truth_rows": len(result.truth),
            "pairs_detected_at_both": len(result.detected_pairs()),
        },
        "files": {k: {"path": p.name, "sha256": _sha256(p)} for k, p in files.items()},
    }
    _write_json(out / "manifest.json", manifest)
    print(
        f"simulated {result.duration:.1f} s: {len(result.station1)} / {len(result.station2)} tags, "
        f"{len(result.detected_pairs())} pairs detected at both stations"
    )
    return EXIT_OK


def _read_tags(path: Path):
    try:
        return tagio.read_tags(path)
    except FileNotFoundError:
        raise DataError(f"tag file not found: {path}") from None
    except tagio.TagFormatError as exc:
        raise DataError(str(exc)) from None


def cmd_analyze(args) -> int:
    scn = _load(args)
    src = Path(args.input if args.input else scn.output_dir)
    tags1 = _read_tags(Path(args.tags1) if args.tags1 else src / TAGS1)
    tags2 = _read_tags(Path(args.tags2) if args.tags2 else src / TAGS2)
    try:
        result = pipeline.analyze(tags1, tags2, scn, args.mode)
    except (pipeline.AnalysisError, SyncError, estimators.EstimatorError) as exc:
        raise DataError(str(exc)) from None
    except ValueError as exc:
        # unsorted streams and similar malformed input
        raise DataError(str(exc)) from None
    records = result.pop("records")
    if args.bootstrap:
        if args.mode != "bell":
            raise ConfigError("--bootstrap applies to bell mode only")
        rng = substream(scn.seed, _BOOTSTRAP_STREAM)
        try:
            result["bell"]["bootstrap_sigma_S"] = estimators.bootstrap_chsh(
                records, scn.angles[0], scn.angles[1], args.bootstrap, rng
            )
        except estimators.EstimatorError as exc:
            raise DataError(str(exc)) from None
    out = _out_dir(args, scn)
    tagio.write_coincidences(out / f"coincidences-{args.mode}.csv", records)
    result["scenario"] = scn.name
    _write_json(out / f"results-{args.mode}.json", result)
    if args.mode == "bell":
        b = result["bell"]
        print(f"S = {b['S']:.3f} +/- {b['sigma_S']:.3f} from {len(records)} coincidences")
    elif args.mode == "fidelity":
        f = result["fidelity"]
        used = sum(f["counts_hv"]) + sum(f["counts_diag"])
        print(f"F >= {f['F_low']:.3f} +/- {f['sigma']:.3f} from {used} of {len(records)} coincidences (matching bases)")
    else:
        print(f"{result['rates']['coincidences']} coincidences, {result['rates']['rate_hz']:.3f} Hz")
    return EXIT_OK


def cmd_spacetime(args) -> int:
    scn = _load(args)
    samples = _samples(scn)
    stations = [s.position for s in scn.stations]
    report = spacetime.loophole_report(samples, stations, scn.qrng, scn.measurement_lag_s, grid_points=args.grid)
    out = _out_dir(args, scn)
    doc = report.to_dict()
    doc["scenario"] = scn.name
    doc["setting_delay_range_s"] = [list(spacetime.delay_range(q)) for q in scn.qrng]
    _write_json(out / "spacetime.json", doc)
    worst = min(report.pairs.items(), key=lambda kv: kv[1].margin)
    verdict = "all spacelike" if report.all_spacelike else "NOT all spacelike"
    print(f"{verdict}; smallest margin {worst[0]} {worst[1].margin:.1f} km")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    for name in shipped_scenarios():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="satentangle", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, window=False):
        p.add_argument("--scenario", help="scenario JSON (default: shipped reference)")
        p.add_argument("--out", help="output directory (default: scenario output_dir)")
        if seed:
            p.add_argument("--seed", type=int, help="override the scenario seed")
        if window:
            p.add_argument("--window-ps", type=int, help="coincidence window in ps")

    p = sub.add_parser("scenarios", help="list the scenarios shipped with the package")
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("pass", help="pass geometry and attenuation")
    common(p)
    p.set_defaults(func=cmd_pass)

    p = sub.add_parser("simulate", help="time-tag streams for both stations")
    common(p, seed=True)
    p.add_argument("--duration", type=float, help="simulate only the first DURATION seconds of the pass")
    p.add_argument("--workers", type=int, default=1, help="worker threads (output does not depend on this)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="clock fit, coincidences and estimators")
    common(p, seed=True, window=True)
    p.add_argument("--mode", choices=("bell", "fidelity", "rates"), required=True)
    p.add_argument("--in", dest="input", help="directory holding station1.ett and station2.ett")
    p.add_argument("--tags1", help="station-1 tag file (overrides --in)")
    p.add_argument("--tags2", help="station-2 tag file (overrides --in)")
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples for a cross-check of sigma_S")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("spacetime", help="light-cone separation report")
    common(p)
    p.add_argument("--grid", type=int, default=0, help="interior setting delays checked besides the endpoints")
    p.set_defaults(func=cmd_spacetime)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GeometryError, LinkBudgetError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        where = f" ({exc.filename})" if exc.filename else ""
        print(f"I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
