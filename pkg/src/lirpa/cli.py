"""Command-line front end.

Subcommands load a graph document, run a bound strategy and emit a JSON
report on stdout (and optionally to a file). Exit codes: 0 success, 1 for
parse/usage problems with the inputs, 2 for domain errors during analysis.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from typing import Mapping

import numpy as np

from .backward import BoundStrategy, compute_bounds
from .errors import DomainError, GraphError
from .fusion import MarginSpec, flatness_score, fused_loss_report, margin_transform
from .graph import Graph, evaluate, parse_problem, topological_order
from .interval import IntervalBounds
from .perturb import LpBall, PerturbationSpec, sample_spec, spec_center
from .relaxation import ReluLowerMode

__all__ = ["main", "build_parser"]

_METHODS = {s.value: s for s in BoundStrategy}


def _fmt(value):
    """Round floats to 9 significant digits so reports diff byte-for-byte."""
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            return str(value)
        return float(f"{value:.9g}")
    if isinstance(value, (list, tuple)):
        return [_fmt(v) for v in value]
    if isinstance(value, dict):
        return {k: _fmt(v) for k, v in value.items()}
    return value


def _emit(report: dict, output: str | None) -> None:
    text = json.dumps(_fmt(report), indent=2)
    print(text)
    if output:
        with open(output, "w") as fh:
            fh.write(text + "\n")


def _load(path: str) -> tuple[Graph, dict[int, PerturbationSpec]]:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise GraphError(f"cannot read graph document: {exc}") from exc
    return parse_problem(text)


def _override_specs(
    specs: Mapping[int, PerturbationSpec], eps: float | None, p: float | None
) -> dict[int, PerturbationSpec]:
    out = dict(specs)
    for i, spec in out.items():
        if isinstance(spec, LpBall):
            out[i] = LpBall(
                spec.center,
                spec.eps if eps is None else eps,
                spec.p if p is None else p,
            )
    return out


def _interval_report(bounds: IntervalBounds) -> tuple[list, list]:
    return bounds.lower.tolist(), bounds.upper.tolist()


def _run_method(g, specs, method, relu_mode, out_coeff=None, target=None):
    strategy = _METHODS[method]
    start = time.perf_counter()
    _, box = compute_bounds(g, specs, strategy, target, out_coeff, relu_mode)
    elapsed = (time.perf_counter() - start) * 1000.0
    return box, elapsed


def cmd_bounds(args) -> int:
    g, specs = _load(args.graph)
    specs = _override_specs(specs, args.eps, args.p)
    relu_mode = ReluLowerMode(args.relu)
    box, elapsed = _run_method(g, specs, args.method, relu_mode)
    lower, upper = _interval_report(box)
    report = {"method": args.method, "lower": lower, "upper": upper}
    if args.all_nodes:
        strategy = _METHODS[args.method]
        nodes = {}
        for i in topological_order(g):
            _, node_box = compute_bounds(g, specs, strategy, i, None, relu_mode)
            lo, hi = _interval_report(node_box)
            nodes[str(i)] = {"lower": lo, "upper": hi}
        report["nodes"] = nodes
    if args.samples:
        rng = np.random.default_rng(args.seed)
        values = {i: sample_spec(specs[i], rng, args.samples) for i in g.input_ids}
        sampled = evaluate(g, values)[g.output]
        report["sampled_min"] = sampled.min(axis=1).tolist()
        report["sampled_max"] = sampled.max(axis=1).tolist()
    report["time_ms"] = elapsed
    _emit(report, args.output)
    return 0


def cmd_verify(args) -> int:
    g, specs = _load(args.graph)
    specs = _override_specs(specs, args.eps, args.p)
    k = g.nodes[g.output].dim
    if k < 2:
        raise GraphError(f"verification needs at least 2 classes, output dim is {k}")
    margin = MarginSpec(args.label, k)
    coeff = margin_transform(margin.label, margin.num_classes)
    box, elapsed = _run_method(g, specs, args.method, ReluLowerMode(args.relu), coeff)
    others = [i for i in range(k) if i != margin.label]
    certified = bool(np.all(box.lower[others] > 0.0))
    lower, upper = _interval_report(box)
    report = {
        "method": args.method,
        "lower": lower,
        "upper": upper,
        "verdict": "certified" if certified else "unknown",
        "margin_lowers": lower,
        "time_ms": elapsed,
    }
    _emit(report, args.output)
    return 0


def cmd_compare(args) -> int:
    g, specs = _load(args.graph)
    specs = _override_specs(specs, args.eps, args.p)
    relu_mode = ReluLowerMode(args.relu)
    rows = []
    for method in ("ibp", "forward", "backward", "ibp+backward"):
        box, elapsed = _run_method(g, specs, method, relu_mode)
        lower, upper = _interval_report(box)
        rows.append(
            {
                "method": method,
                "lower": lower,
                "upper": upper,
                "width": float(np.sum(box.upper - box.lower)),
                "time_ms": elapsed,
            }
        )
    rows.sort(key=lambda r: -r["width"])
    _emit({"methods": rows}, args.output)
    return 0


def cmd_fuse(args) -> int:
    g, specs = _load(args.graph)
    specs = _override_specs(specs, args.eps, args.p)
    k = g.nodes[g.output].dim
    margin = MarginSpec(args.label, k)
    start = time.perf_counter()
    report_obj = fused_loss_report(
        g, specs, margin, _METHODS[args.method], ReluLowerMode(args.relu)
    )
    elapsed = (time.perf_counter() - start) * 1000.0
    report = {
        "method": args.method,
        "fused_upper": report_obj.fused_upper,
        "unfused_upper": report_obj.unfused_upper,
        "margin_lowers": report_obj.margin_lowers.tolist(),
        "time_ms": elapsed,
    }
    _emit(report, args.output)
    return 0


def _flatness_batch(args, g, specs) -> list[tuple[dict[int, np.ndarray], int]]:
    if args.data:
        with open(args.data) as fh:
            entries = json.load(fh)
        batch = []
        for entry in entries:
            x = entry["x"]
            if isinstance(x, dict):
                values = {int(i): np.asarray(v, dtype=float) for i, v in x.items()}
            else:
                if len(g.input_ids) != 1:
                    raise GraphError("flat 'x' lists need a single-input graph")
                values = {g.input_ids[0]: np.asarray(x, dtype=float)}
            batch.append((values, int(entry["label"])))
        return batch
    if args.label is None:
        raise GraphError("flatness needs --label when no --data file is given")
    values = {i: spec_center(specs[i]) for i in g.input_ids}
    return [(values, args.label)]


def cmd_flatness(args) -> int:
    g, specs = _load(args.graph)
    batch = _flatness_batch(args, g, specs)
    start = time.perf_counter()
    score = flatness_score(g, args.eps_bar, batch, _METHODS[args.method], ReluLowerMode(args.relu))
    elapsed = (time.perf_counter() - start) * 1000.0
    _emit(
        {
            "eps_bar": args.eps_bar,
            "flatness": score,
            "batch_size": len(batch),
            "time_ms": elapsed,
        },
        args.output,
    )
    return 0


def _add_common(sub: argparse.ArgumentParser, default_method="ibp+backward") -> None:
    sub.add_argument("graph", help="path to a graph JSON document")
    sub.add_argument(
        "--method",
        choices=sorted(_METHODS),
        default=default_method,
        help="bound strategy",
    )
    sub.add_argument("--eps", type=float, default=None, help="override every lp ball radius")
    sub.add_argument(
        "--p",
        type=lambda s: math.inf if s == "inf" else float(s),
        default=None,
        help="override every lp ball exponent (1, 2 or inf)",
    )
    sub.add_argument(
        "--relu",
        choices=["adaptive", "zero"],
        default="zero",
        help="lower-line mode for unstable ReLU neurons",
    )
    sub.add_argument("--seed", type=int, default=0, help="seed for sampling diagnostics")
    sub.add_argument("--output", default=None, help="also write the report to this path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lirpa",
        description="Certified bound propagation over computational graphs",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_bounds = subs.add_parser("bounds", help="bound the output node")
    _add_common(p_bounds)
    p_bounds.add_argument("--all-nodes", action="store_true", help="include every node's interval")
    p_bounds.add_argument(
        "--samples", type=int, default=0, help="add min/max over sampled points as a sanity check"
    )
    p_bounds.set_defaults(func=cmd_bounds)

    p_verify = subs.add_parser("verify", help="certify a label via margin bounds")
    _add_common(p_verify)
    p_verify.add_argument("--label", type=int, required=True, help="ground-truth class index")
    p_verify.set_defaults(func=cmd_verify)

    p_compare = subs.add_parser("compare", help="run all strategies and tabulate widths")
    _add_common(p_compare)
    p_compare.set_defaults(func=cmd_compare)

    p_fuse = subs.add_parser("fuse", help="fused vs unfused certified loss bounds")
    _add_common(p_fuse)
    p_fuse.add_argument("--label", type=int, required=True, help="ground-truth class index")
    p_fuse.set_defaults(func=cmd_fuse)

    p_flat = subs.add_parser("flatness", help="certified loss gap under weight perturbation")
    _add_common(p_flat)
    p_flat.add_argument("--eps-bar", type=float, required=True, help="normalized weight ball radius")
    p_flat.add_argument("--label", type=int, default=None, help="label for the default example")
    p_flat.add_argument("--data", default=None, help="JSON file with [{'x': ..., 'label': ...}]")
    p_flat.set_defaults(func=cmd_flatness)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
