"""Command-line front end.

    pleig second interval --a -2 --b 2 --n 2000 --p 2 --bc dirichlet
    pleig second rect --x0 -2 --x1 2 --y0 -2 --y1 2 --nx 200 --ny 200 --p 2
    pleig second graph --points pts.csv --eps 0.15 --p 1.5 --labels out.csv
    pleig first rect --nx 64 --ny 64 --p 3
    pleig verify --suite 1d-closed-form --p 1.5,2,3,5

Exit codes: 0 success, 2 non-convergence, 3 partition collapse, 4 bad input.
``PLEIG_LOG`` (quiet, info, debug) sets the stderr log level.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass

from .eigensolver import second_eigenpair
from .errors import (InputError, PartitionCollapseError, PleigError, SolverError,
                     StagnationError)
from .graph import (GraphSolverConfig, build_epsilon_graph, cut_metrics,
                    graph_second_eigenpair, labels_from_cut, read_points_csv,
                    threshold_cut, two_blobs, write_labels_csv)
from .mesh import build_interval_mesh, build_rectangle_mesh, write_field_csv
from .pde_solver import SolverConfig, first_eigenpair
from .report import (dumps, first_eigen_report, graph_eigen_report,
                     mesh_eigen_report, write_report)
from .verify import SUITES, run_suite

EXIT_OK = 0
EXIT_NO_CONVERGENCE = 2
EXIT_COLLAPSE = 3
EXIT_BAD_INPUT = 4

_LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("pleig")


class _Parser(argparse.ArgumentParser):
    """Argument errors count as bad input (exit 4), not argparse's usual 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_BAD_INPUT, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    subcommand: str
    domain: str | None
    p: float
    bc: str
    tol: float | None
    max_outer: int | None
    eps_reg: float | None
    report: str | None
    field: str | None
    labels: str | None
    seed: int
    args: argparse.Namespace

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        return cls(
            subcommand=ns.command,
            domain=getattr(ns, "domain", None),
            p=getattr(ns, "p", 2.0),
            bc=getattr(ns, "bc", "dirichlet"),
            tol=getattr(ns, "tol", None),
            max_outer=getattr(ns, "max_outer", None),
            eps_reg=getattr(ns, "eps_reg", None),
            report=getattr(ns, "report", None),
            field=getattr(ns, "field", None),
            labels=getattr(ns, "labels", None),
            seed=getattr(ns, "seed", 0),
            args=ns,
        )


def _float_list(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _add_common(sp):
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--tol", type=float, default=None, help="outer stopping tolerance")
    sp.add_argument("--max-outer", type=int, default=None)
    sp.add_argument("--eps-reg", type=float, default=None,
                    help="gradient regularization in the linearized weights")
    sp.add_argument("--report", default=None, help="JSON report path (stdout if omitted)")


def _add_mesh_args(sp, dim):
    if dim == 1:
        sp.add_argument("--a", type=float, default=-2.0)
        sp.add_argument("--b", type=float, default=2.0)
        sp.add_argument("--n", type=int, default=2000)
    else:
        for name, val in (("--x0", -2.0), ("--x1", 2.0), ("--y0", -2.0), ("--y1", 2.0)):
            sp.add_argument(name, type=float, default=val)
        sp.add_argument("--nx", type=int, default=64)
        sp.add_argument("--ny", type=int, default=64)
    sp.add_argument("--field", default=None, help="CSV path for the nodal field")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pleig", description="p-Laplace eigenpairs by inverse-power bipartition")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    second = sub.add_parser("second", help="second eigenpair")
    dom = second.add_subparsers(dest="domain", required=True, parser_class=_Parser)
    for name, dim in (("interval", 1), ("rect", 2)):
        sp = dom.add_parser(name)
        _add_common(sp)
        _add_mesh_args(sp, dim)
        sp.add_argument("--bc", choices=("dirichlet", "neumann"), default="dirichlet")
    sp = dom.add_parser("graph")
    _add_common(sp)
    sp.add_argument("--points", default=None, help="points CSV; omit for two synthetic blobs")
    sp.add_argument("--n", type=int, default=500, help="synthetic point count")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--eps", type=float, default=0.15)
    sp.add_argument("--weights", choices=("unit", "gauss", "gaussian"), default="unit")
    sp.add_argument("--sigma", type=float, default=None)
    sp.add_argument("--labels", default=None, help="CSV path for index,label output")

    first = sub.add_parser("first", help="first Dirichlet eigenpair")
    dom = first.add_subparsers(dest="domain", required=True, parser_class=_Parser)
    for name, dim in (("interval", 1), ("rect", 2)):
        sp = dom.add_parser(name)
        _add_common(sp)
        _add_mesh_args(sp, dim)

    ver = sub.add_parser("verify", help="run a built-in verification suite")
    ver.add_argument("--suite", required=True, help=", ".join(SUITES))
    ver.add_argument("--p", type=_float_list, default=None, help="comma-separated p values")
    ver.add_argument("--seed", type=int, default=0)
    return parser


def _mesh(ns):
    if ns.domain == "interval":
        return build_interval_mesh(ns.a, ns.b, ns.n)
    return build_rectangle_mesh(ns.x0, ns.x1, ns.y0, ns.y1, ns.nx, ns.ny)


def _solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(p=cfg.p, eps_reg=cfg.eps_reg)


def _emit(obj, path):
    if path:
        write_report(obj, path)
    else:
        sys.stdout.write(dumps(obj))


def run_second(cfg: RunConfig) -> int:
    ns = cfg.args
    if cfg.domain == "graph":
        return _run_graph(cfg)
    mesh = _mesh(ns)
    kwargs = {}
    if cfg.tol is not None:
        kwargs["outer_tol"] = cfg.tol
    if cfg.max_outer is not None:
        kwargs["max_outer"] = cfg.max_outer
    rep = second_eigenpair(mesh, cfg.p, cfg.bc, _solver_config(cfg), **kwargs)
    _emit(mesh_eigen_report(rep, mesh), cfg.report)
    if cfg.field:
        write_field_csv(rep.u2, cfg.field)
    return EXIT_OK if rep.converged else EXIT_NO_CONVERGENCE


def _run_graph(cfg: RunConfig) -> int:
    ns = cfg.args
    if ns.points:
        points = read_points_csv(ns.points)
    else:
        points, _ = two_blobs(ns.n, ns.seed)
    g = build_epsilon_graph(points, ns.eps, weights=ns.weights, sigma=ns.sigma)
    overrides = {}
    if cfg.tol is not None:
        overrides["outer_tol"] = cfg.tol
    if cfg.max_outer is not None:
        overrides["max_outer"] = cfg.max_outer
    if cfg.eps_reg is not None:
        overrides["eps_reg"] = cfg.eps_reg
    gcfg = GraphSolverConfig(p=cfg.p, seed=cfg.seed, **overrides)
    _, f, rep = graph_second_eigenpair(g, cfg.p, gcfg)
    C = threshold_cut(f)
    _emit(graph_eigen_report(rep, g, cut_metrics(g, C)), cfg.report)
    if cfg.labels:
        write_labels_csv(labels_from_cut(g.n, C), cfg.labels)
    return EXIT_OK if rep.converged else EXIT_NO_CONVERGENCE


def run_first(cfg: RunConfig) -> int:
    mesh = _mesh(cfg.args)
    kwargs = {"return_report": True}
    if cfg.tol is not None:
        kwargs["tol"] = cfg.tol
    if cfg.max_outer is not None:
        kwargs["max_outer"] = cfg.max_outer
    lam, w1, rep = first_eigenpair(mesh, cfg.p, "dirichlet", _solver_config(cfg), **kwargs)
    _emit(first_eigen_report(lam, rep, cfg.p, mesh), cfg.report)
    if cfg.field:
        write_field_csv(w1, cfg.field)
    return EXIT_OK


def run_verify(cfg: RunConfig) -> int:
    ns = cfg.args
    rows = run_suite(ns.suite, ns.p, seed=ns.seed)
    for row in rows:
        print(row.line())
    ok = all(r.passed for r in rows)
    print(f"{ns.suite}: {'all passed' if ok else 'FAILED'} ({sum(r.passed for r in rows)}/{len(rows)})")
    return EXIT_OK if ok else 1


def _configure_logging() -> None:
    level_name = os.environ.get("PLEIG_LOG", "quiet").strip().lower()
    if level_name not in _LOG_LEVELS:
        raise InputError(f"PLEIG_LOG must be one of {', '.join(_LOG_LEVELS)}, got {level_name!r}")
    root = logging.getLogger("pleig")
    root.setLevel(_LOG_LEVELS[level_name])
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)


def main(argv=None) -> int:
    try:
        _configure_logging()
        ns = build_parser().parse_args(argv)
        cfg = RunConfig.from_args(ns)
        handler = {"second": run_second, "first": run_first, "verify": run_verify}[cfg.subcommand]
        return handler(cfg)
    except PartitionCollapseError as exc:
        print(f"error: partition collapse: {exc}", file=sys.stderr)
        return EXIT_COLLAPSE
    except (SolverError, StagnationError) as exc:
        print(f"error: no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except PleigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
