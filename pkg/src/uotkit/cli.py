"""Command-line interface.

Commands: evaluate, attrs, stats, matp, distill-check, framerate,
validate. Flags are long-form only; a config file of `key=value` lines
can supply any flag (command line wins). Every command is deterministic
given identical inputs and --seed.

Exit codes: 0 success, 2 input/validation error, 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import matp as matp_mod
from . import metrics
from .attributes import full_attributes
from .errors import InternalError, UotkitError
from .gradcheck import KERNELS, run_suite

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _map_ordered(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _load_eval_inputs(args):
    root = Path(args.dataset)
    names = ds.load_manifest(root, args.subset)
    if not names:
        raise ds.DatasetError(f"split manifest {args.subset}.txt missing or empty under {root}")
    sequences = _map_ordered(lambda n: ds.load_sequence(root / n), sorted(names), args.threads)
    results = ds.load_results(args.results, args.tracker, sequences=sorted(names))
    return sequences, results


def cmd_evaluate(args) -> int:
    sequences, results = _load_eval_inputs(args)
    report = metrics.evaluate(
        sequences, results, protocol=args.protocol, tracker=args.tracker)
    report.attributes = metrics.attribute_breakdown(report, sequences, reference=args.reference)
    out = Path(args.output)
    _write_json(out / "report.json", report.to_json_dict())
    (out / "per_sequence.csv").write_text(report.per_sequence_csv(), encoding="utf-8")
    mean = report.mean
    print(
        f"{args.tracker} [{args.protocol}] "
        f"Pre {100 * mean['pre']:.1f}  nPre {100 * mean['npre']:.1f}  "
        f"AUC {100 * mean['auc']:.1f}  cAUC {100 * mean['cauc']:.1f}  "
        f"mACC {100 * mean['macc']:.1f}"
    )
    return EXIT_OK


def cmd_attrs(args) -> int:
    root = Path(args.dataset)
    names = ds.load_manifest(root, args.subset) if args.subset else None
    if names is None:
        names = list(dict.fromkeys(ds.load_manifest(root, "train") + ds.load_manifest(root, "test")))
    if not names:
        raise ds.DatasetError(f"no sequences listed under {root}")

    def one(name: str):
        seq = ds.load_sequence(root / name)
        attrs, warnings = full_attributes(seq, reference=args.reference)
        rendered = {
            code: (bool(v) if isinstance(v, bool) else v)
            for code, v in attrs.as_dict().items()
        }
        return name, {"attributes": rendered, "warnings": warnings}

    rows = _map_ordered(one, sorted(names), args.threads)
    _write_json(Path(args.output), {"reference": args.reference, "sequences": dict(rows)})
    total_warnings = sum(len(r[1]["warnings"]) for r in rows)
    print(f"attributes for {len(rows)} sequences, {total_warnings} conflict warning(s)")
    return EXIT_OK


def cmd_stats(args) -> int:
    stats = ds.dataset_stats(args.dataset)
    _write_json(Path(args.output), stats.to_json_dict())
    counts = stats.split_counts
    print(
        f"videos {stats.video_count} (train {counts.get('train', 0)}, "
        f"test {counts.get('test', 0)}), classes {stats.class_count}, "
        f"frames {stats.total_frames}"
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    issues = ds.validate_dataset(args.dataset)
    payload = [
        {"sequence": i.sequence, "severity": i.severity, "message": i.message}
        for i in issues
    ]
    if args.output:
        _write_json(Path(args.output), payload)
    for issue in issues:
        print(f"{issue.severity}: {issue.sequence}: {issue.message}")
    errors = sum(1 for i in issues if i.severity == "error")
    print(f"{len(issues)} issue(s), {errors} error(s)")
    return EXIT_INPUT if errors else EXIT_OK


def cmd_matp(args) -> int:
    params = matp_mod.MatpParams(
        grid_n=args.grid_n, top_n=args.top_n, alpha=args.alpha, conf=args.conf,
        threshold=args.threshold, iou_threshold=args.iou_threshold,
        search_factor=args.search_factor,
    )
    results = ds.load_results(args.results, args.tracker)
    if not results:
        raise ds.MissingResultError(f"no result files under {args.results}/{args.tracker}")
    maps_dir = Path(args.maps)
    out_dir = Path(args.output)
    summary = {}
    for name in sorted(results):
        raw = results[name]
        container = maps_dir / f"{name}.rmap"
        if not container.is_file():
            raise matp_mod.MatpError(f"{name}: missing response container {container}")
        maps = matp_mod.read_response_container(container)
        if maps.shape[0] != len(raw) - 1:
            raise matp_mod.MatpError(
                f"{name}: container has {maps.shape[0]} maps, expected "
                f"{len(raw) - 1} for a {len(raw)}-frame result")
        initial = raw.pred_box(0)
        trajectory, match_frames = matp_mod.matp_run_arrays(
            initial, maps, raw.boxes[1:], params)
        boxes = np.array([b.as_tuple() for b in trajectory])
        corrected = ds.TrackerResult(tracker=args.tracker, sequence=name, boxes=boxes)
        ds.write_result_file(corrected, out_dir / f"{name}.txt")
        summary[name] = {"frames": len(raw), "match_frames": match_frames}
    _write_json(out_dir / "matp_summary.json", summary)
    fired = sum(s["match_frames"] for s in summary.values())
    print(f"processed {len(summary)} sequence(s), match mode fired on {fired} frame(s)")
    return EXIT_OK


def cmd_framerate(args) -> int:
    root = Path(args.dataset)
    names = ds.load_manifest(root, args.subset)
    if not names:
        raise ds.DatasetError(f"split manifest {args.subset}.txt missing or empty under {root}")
    sequences = _map_ordered(lambda n: ds.load_sequence(root / n), sorted(names), args.threads)
    results = ds.load_results(args.results, args.tracker, sequences=sorted(names))
    factors = [int(f) for f in args.factors.split(",") if f.strip()]
    if not factors or any(f < 1 for f in factors):
        raise ValueError(f"factors must be positive integers, got {args.factors!r}")
    specs = [metrics.ResampleSpec(mode=args.mode, factor=f, seed=args.seed) for f in factors]
    points = metrics.framerate_stability(sequences, results, specs)
    _write_json(Path(args.output), {
        "tracker": args.tracker, "mode": args.mode, "seed": args.seed, "points": points,
    })
    rendered = "  ".join(f"x{p['factor']}: {100 * p['auc']:.1f}" for p in points)
    print(f"{args.tracker} stability ({args.mode}): {rendered}")
    return EXIT_OK


def cmd_distill_check(args) -> int:
    config = {
        "seed": args.seed,
        "trials": args.trials,
        "step": args.step,
        "tolerance": args.tolerance,
        "fkd_tolerance": args.fkd_tolerance,
        "kernels": list(KERNELS),
        "shapes": {},
    }
    if args.manifest:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        config.update({k: manifest[k] for k in config if k in manifest})
    report = run_suite(
        seed=config["seed"], trials=config["trials"], step=config["step"],
        tolerance=config["tolerance"], fkd_tolerance=config["fkd_tolerance"],
        shapes=config["shapes"], kernels=tuple(config["kernels"]),
    )
    _write_json(Path(args.output), report)
    for name, entry in report["kernels"].items():
        status = "pass" if entry["passed"] else "FAIL"
        print(f"{status}  {name}: max rel error {entry['max_rel_error']:.3e} "
              f"(tol {entry['tolerance']:.0e})")
    if not report["passed"]:
        print("gradient check FAILED", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value file supplying flag defaults")
    parser.add_argument("--threads", type=int, default=1, help="worker pool size")
    parser.add_argument("--seed", type=int, default=0, help="64-bit master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uotkit",
        description="Underwater single-object tracking evaluation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score a tracker's results")
    p.add_argument("--dataset")
    p.add_argument("--results")
    p.add_argument("--tracker")
    p.add_argument("--subset", default="test", choices=["test", "train"])
    p.add_argument("--protocol", default="cross_domain",
                   choices=["cross_domain", "within_domain"])
    p.add_argument("--reference", default="first", choices=["first", "previous"],
                   help="baseline frame for SV/ARV attribute rules")
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate, required_keys=("dataset", "results", "tracker", "output"))

    p = sub.add_parser("attrs", help="compute per-sequence attributes")
    p.add_argument("--dataset")
    p.add_argument("--subset", default=None, choices=["test", "train"])
    p.add_argument("--reference", default="first", choices=["first", "previous"])
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(func=cmd_attrs, required_keys=("dataset", "output"))

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--dataset")
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(func=cmd_stats, required_keys=("dataset", "output"))

    p = sub.add_parser("validate", help="report dataset problems")
    p.add_argument("--dataset")
    p.add_argument("--output", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_validate, required_keys=("dataset",))

    p = sub.add_parser("matp", help="post-process raw results with match processing")
    p.add_argument("--results")
    p.add_argument("--tracker")
    p.add_argument("--maps", help="directory of <sequence>.rmap containers")
    p.add_argument("--output")
    p.add_argument("--grid-n", type=int, default=16)
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--conf", type=float, default=0.6)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--search-factor", type=float, default=4.0)
    _add_common(p)
    p.set_defaults(func=cmd_matp, required_keys=("results", "tracker", "maps", "output"))

    p = sub.add_parser("framerate", help="frame-rate stability curve")
    p.add_argument("--dataset")
    p.add_argument("--results")
    p.add_argument("--tracker")
    p.add_argument("--subset", default="test", choices=["test", "train"])
    p.add_argument("--factors", default="1,2,5,10,30")
    p.add_argument("--mode", default="stride", choices=["stride", "random"])
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(func=cmd_framerate, required_keys=("dataset", "results", "tracker", "output"))

    p = sub.add_parser("distill-check", help="verify loss-kernel gradients")
    p.add_argument("--manifest", default=None, help="JSON config for the check suite")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--fkd-tolerance", type=float, default=1e-6)
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(func=cmd_distill_check, required_keys=("output",))

    return parser


_INT_KEYS = ("threads", "seed", "trials", "top_n", "grid_n")
_FLOAT_KEYS = ("alpha", "conf", "threshold", "iou_threshold", "search_factor",
               "step", "tolerance", "fkd_tolerance")


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse argv, then fill unset flags from the --config file.

    Config lines are `key=value` with the long flag name (dashes or
    underscores); a flag given on the command line always wins.
    """
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    for lineno, raw in enumerate(
            Path(args.config).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ds.ParseError(f"{args.config}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if not hasattr(args, key):
            raise ds.ParseError(f"{args.config}:{lineno}: unknown flag {key!r}")
        flag = "--" + key.replace("_", "-")
        if any(arg == flag or arg.startswith(flag + "=") for arg in argv):
            continue
        if key in _INT_KEYS:
            setattr(args, key, int(value))
        elif key in _FLOAT_KEYS:
            setattr(args, key, float(value))
        else:
            setattr(args, key, value)
    return args


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
        missing = [k for k in getattr(args, "required_keys", ()) if getattr(args, k) is None]
        if missing:
            rendered = ", ".join("--" + k.replace("_", "-") for k in missing)
            print(f"error: missing required flag(s): {rendered}", file=sys.stderr)
            return EXIT_INPUT
        return args.func(args)
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (UotkitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
