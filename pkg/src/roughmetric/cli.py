"""Command-line interface: experiment runner plus one-shot field tools."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .conformal import ConformalFactor, scalar_curvature
from .distance import StencilSpec, build_distance_graph, shortest_distance
from .fieldio import field_io_read, field_io_write
from .grid import GridError, MetricField, ScalarField
from .scenarios import (
    config_from_json,
    describe,
    list_scenarios,
    run_scenario,
)
from .sobolev import sobolev_norms, superlevel_cover

__all__ = ["main"]

# exit codes: 0 all verdicts hold, 1 execution error, 2 a verdict failed
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERDICT = 2


def _parse_point(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise GridError(f"expected comma-separated coordinates, got {text!r}") from exc


def _load_scalar(path: str) -> ScalarField:
    field = field_io_read(path)
    if not isinstance(field, ScalarField):
        raise GridError(f"{path} does not hold a scalar field")
    return field


def _load_metric(path: str) -> MetricField:
    field = field_io_read(path)
    if not isinstance(field, MetricField):
        raise GridError(f"{path} does not hold a metric field")
    return field


def _cmd_run(args: argparse.Namespace) -> int:
    config = config_from_json(args.config)
    summary = run_scenario(config, workers=args.workers)
    print(f"{summary.scenario}: wrote {config.output_dir}/summary.json")
    for name, ok in sorted(summary.verdicts.items()):
        print(f"  {name}: {'pass' if ok else 'FAIL'}")
    if summary.incomplete:
        print(f"  INCOMPLETE: {summary.error}", file=sys.stderr)
        return EXIT_ERROR
    if not summary.passed:
        return EXIT_VERDICT
    return EXIT_OK


def _cmd_list(args: argparse.Namespace) -> int:
    for sid, line in list_scenarios():
        print(f"{sid}  {line}")
    return EXIT_OK


def _cmd_describe(args: argparse.Namespace) -> int:
    print(describe(args.scenario))
    return EXIT_OK


def _cmd_dist(args: argparse.Namespace) -> int:
    metric = _load_metric(args.metric)
    stencil = StencilSpec(reach=args.reach, quad_samples=args.samples)
    graph = build_distance_graph(metric, stencil)
    value, path = shortest_distance(graph, _parse_point(args.src), _parse_point(args.dst))
    print(f"distance: {value!r}")
    print(f"path nodes: {len(path)}")
    if graph.dropped_edges:
        print(f"dropped edges: {graph.dropped_edges} of {graph.total_edges}")
    return EXIT_OK


def _cmd_sobolev(args: argparse.Namespace) -> int:
    field = _load_scalar(args.field)
    report = sobolev_norms(field, p=args.p)
    for line in report.to_records():
        print(line)
    return EXIT_OK


def _cmd_cover(args: argparse.Namespace) -> int:
    field = _load_scalar(args.field)
    report = superlevel_cover(
        field,
        t=args.t,
        p=args.p,
        s=args.s,
        lambda_prime=args.lambda_prime,
        osc_tol=args.osc_tol,
    )
    for line in report.to_records():
        print(line)
    return EXIT_OK


def _cmd_curvature(args: argparse.Namespace) -> int:
    field = _load_scalar(args.factor)
    factor = ConformalFactor(field)
    report = scalar_curvature(factor, background_curvature=args.background)
    for name, value in report.to_records():
        print(f"{name}={value!r}")
    if args.out:
        field_io_write(report.R, args.out)
        print(f"wrote curvature field to {args.out}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughmetric",
        description="Geometric diagnostics for rough metrics on flat lattices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario from a JSON config")
    p_run.add_argument("--config", required=True, help="path to the config JSON")
    p_run.add_argument(
        "--workers",
        type=int,
        default=1,
        help="threads for independent distance sweeps (outputs are identical)",
    )
    p_run.set_defaults(func=_cmd_run)

    p_list = sub.add_parser("list", help="list available scenarios")
    p_list.set_defaults(func=_cmd_list)

    p_desc = sub.add_parser("describe", help="explain what a scenario checks")
    p_desc.add_argument("scenario", help="scenario id, e.g. S1")
    p_desc.set_defaults(func=_cmd_describe)

    p_dist = sub.add_parser("dist", help="induced distance between two points")
    p_dist.add_argument("--metric", required=True, help="metric field file")
    p_dist.add_argument("--from", dest="src", required=True, help="x,y[,z]")
    p_dist.add_argument("--to", dest="dst", required=True, help="x,y[,z]")
    p_dist.add_argument("--reach", type=int, default=3, help="stencil reach K")
    p_dist.add_argument("--samples", type=int, default=3, help="quadrature samples per edge")
    p_dist.set_defaults(func=_cmd_dist)

    p_sob = sub.add_parser("sobolev", help="L^p and W^{1,p} norms of a scalar field")
    p_sob.add_argument("--field", required=True, help="scalar field file")
    p_sob.add_argument("--p", type=float, default=2.0)
    p_sob.set_defaults(func=_cmd_sobolev)

    p_cov = sub.add_parser("cover", help="certified cover of a superlevel set")
    p_cov.add_argument("--field", required=True, help="scalar field file")
    p_cov.add_argument("--t", type=float, required=True, help="detection threshold")
    p_cov.add_argument("--p", type=float, default=1.5, help="gradient integrability exponent")
    p_cov.add_argument("--s", type=float, default=1.0, help="content dimension parameter")
    p_cov.add_argument("--lambda-prime", type=float, default=8.0, dest="lambda_prime")
    p_cov.add_argument("--osc-tol", type=float, default=0.08, dest="osc_tol")
    p_cov.set_defaults(func=_cmd_cover)

    p_cur = sub.add_parser("curvature", help="scalar curvature of a conformal metric")
    p_cur.add_argument("--factor", required=True, help="scalar field file holding the factor")
    p_cur.add_argument("--background", type=float, default=None, help="background scalar curvature")
    p_cur.add_argument("--out", default=None, help="write the curvature field here")
    p_cur.set_defaults(func=_cmd_curvature)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
