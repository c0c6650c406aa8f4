"""Command-line entry point: generate, extract, eval, render, train-toy, validate."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .core import TensorFormatError, _atomic_write_bytes, read_tensor
from .fields import AffordanceBundle
from .graphgen.extract import generate_graph
from .graphgen.graph import LaneGraph, read_graph, validate_graph, write_graph
from .pipeline import (RunConfig, evaluate_dataset, generate_dataset, load_bundle, render_svg, train_toy)
from .scene import library_dir

log = logging.getLogger("lanegraph")

EXIT_OK, EXIT_STRICT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory or file")
    p.add_argument("--verbose", "-v", action="store_true")


def _add_graphgen(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta-theta", type=float, help="direction gate in radians")
    p.add_argument("--theta-div", type=float, help="divergence threshold in radians")
    p.add_argument("--lookahead", type=int, help="lookahead steps for divergence detection")
    p.add_argument("--noise-flip", type=float, help="lane flip probability")
    p.add_argument("--noise-dir-sigma", type=float, help="direction jitter in radians")
    p.add_argument("--strict", action="store_true", help="exit 1 when the validator reports violations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lanegraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write training and evaluation samples")
    _add_common(p)
    p.add_argument("--library", help="layout library directory (defaults to the bundled one)")
    p.add_argument("--family", choices=("train", "test", "all"))
    p.add_argument("--samples", type=int, help="samples per layout")

    p = sub.add_parser("extract", help="extract a lane graph from affordance and direction tensors")
    _add_common(p)
    _add_graphgen(p)
    p.add_argument("sample", nargs="?", help="sample directory holding affordance.lgt and direction.lgt")
    p.add_argument("--affordance", help="3-channel affordance tensor")
    p.add_argument("--direction", help="9-channel direction tensor")
    p.add_argument("--render", help="also write an SVG overlay here")

    p = sub.add_parser("eval", help="extract and score every evaluation sample of a dataset")
    _add_common(p)
    _add_graphgen(p)
    p.add_argument("dataset")

    p = sub.add_parser("render", help="draw a sample and graph as SVG")
    _add_common(p)
    p.add_argument("sample", help="sample directory holding affordance.lgt and direction.lgt")
    p.add_argument("graph", nargs="?", help="graph JSON (defaults to none)")

    p = sub.add_parser("train-toy", help="fit the per-pixel learner on a dataset")
    _add_common(p)
    p.add_argument("dataset")
    p.add_argument("--iters", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--checkpoints", type=int)
    p.add_argument("--eval-samples", type=int)

    p = sub.add_parser("validate", help="check graph JSON files against the lane-network rules")
    p.add_argument("graphs", nargs="+")
    p.add_argument("--strict", action="store_true", help="exit 1 when any violation is found")
    p.add_argument("--verbose", "-v", action="store_true")
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            cfg = RunConfig.from_file(args.config)
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    keys = ("seed", "out", "library", "family", "samples", "noise_flip", "noise_dir_sigma",
            "delta_theta", "theta_div", "lookahead")
    overrides = {k: getattr(args, k, None) for k in keys}
    overrides.update({"toy_iters": getattr(args, "iters", None), "toy_batch": getattr(args, "batch", None),
                      "toy_checkpoints": getattr(args, "checkpoints", None),
                      "toy_eval_samples": getattr(args, "eval_samples", None)})
    cfg = cfg.override(**overrides)
    if cfg.samples < 0:
        raise UsageError("--samples must be >= 0")
    if not 0.0 <= cfg.noise_flip <= 0.5:
        raise UsageError("--noise-flip must lie in [0, 0.5]")
    return cfg


def _require_out(cfg: RunConfig, default: str | None = None) -> Path:
    out = cfg.out or default
    if not out:
        raise UsageError("--out is required")
    return Path(out)


def _report_violations(violations, strict: bool) -> int:
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_STRICT if violations and strict else EXIT_OK


def cmd_generate(args) -> int:
    cfg = _config(args)
    lib = Path(cfg.library) if cfg.library else library_dir()
    if not lib.is_dir():
        raise UsageError(f"layout library not found: {lib}")
    out = _require_out(cfg)
    counts = generate_dataset(cfg, out)
    print(f"wrote {counts['train']} train and {counts['eval']} eval samples from {counts['layouts']} layouts to {out}")
    return EXIT_OK


def _read_bundle(args) -> AffordanceBundle:
    try:
        if args.affordance or args.direction:
            if not (args.affordance and args.direction):
                raise UsageError("--affordance and --direction must be given together")
            return AffordanceBundle.from_maps(read_tensor(args.affordance), read_tensor(args.direction))
        if not args.sample:
            raise UsageError("give a sample directory or --affordance/--direction")
        return load_bundle(args.sample)
    except (OSError, TensorFormatError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"cannot read tensors: {exc}") from exc


def cmd_extract(args) -> int:
    cfg = _config(args)
    bundle = _read_bundle(args)
    out = _require_out(cfg)
    from .pipeline import extract

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        graph, _ = extract(bundle, cfg, cfg.seed)
    for msg in [str(w.message) for w in caught] + list(graph.warnings):
        print(f"warning: {msg}", file=sys.stderr)
    write_graph(graph, out)
    if args.render:
        _atomic_write_bytes(Path(args.render), render_svg(bundle, graph).encode("utf-8"))
    violations = validate_graph(graph)
    print(f"wrote {out}: {len(graph.vertices)} vertices, {len(graph.edges)} edges, {len(violations)} violations")
    return _report_violations(violations, args.strict)


def cmd_eval(args) -> int:
    cfg = _config(args)
    dataset = Path(args.dataset)
    if not dataset.is_dir():
        raise UsageError(f"dataset not found: {dataset}")
    out = _require_out(cfg, str(dataset / "results"))
    summary = evaluate_dataset(dataset, cfg, out)
    if "warning" in summary:
        print(f"warning: {summary['warning']}", file=sys.stderr)
    for s in summary["skipped"]:
        print(f"skipped {s['sample']}: {s['error']}", file=sys.stderr)
    for fam, r in summary["error_free"].items():
        print(f"{fam}: {r['count']}/{r['total']} error free ({100 * r['rate']:.1f}%)")
    print(f"violations: {summary['violations']}")
    return EXIT_STRICT if summary["violations"] and args.strict else EXIT_OK


def cmd_render(args) -> int:
    cfg = _config(args)
    try:
        bundle = load_bundle(args.sample)
        graph = read_graph(args.graph) if args.graph else LaneGraph()
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read inputs: {exc}") from exc
    out = _require_out(cfg)
    _atomic_write_bytes(out, render_svg(bundle, graph).encode("utf-8"))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_train_toy(args) -> int:
    cfg = _config(args)
    dataset = Path(args.dataset)
    if not (dataset / "train").is_dir():
        raise UsageError(f"no training samples under {dataset}")
    if cfg.toy_iters < 0:
        raise UsageError("--iters must be >= 0")
    out = _require_out(cfg)
    result = train_toy(dataset, cfg, out)
    if result["untrained"]:
        print("warning: untrained model, every output is 0.5 so no cell counts as positive", file=sys.stderr)
    last = result["curve"][-1]
    print(f"iters {result['iters']}: acc_pos {last['acc_pos']:.4f}, l1_neg {last['l1_neg']:.4f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    status = EXIT_OK
    for path in args.graphs:
        try:
            graph = read_graph(path)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read graph {path}: {exc}") from exc
        violations = validate_graph(graph)
        print(f"{path}: {len(violations)} violations")
        status = max(status, _report_violations(violations, args.strict))
    return status


COMMANDS = {"generate": cmd_generate, "extract": cmd_extract, "eval": cmd_eval, "render": cmd_render,
            "train-toy": cmd_train_toy, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
