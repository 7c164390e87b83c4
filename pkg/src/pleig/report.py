"""Deterministic JSON reports.

Keys keep their insertion order and every float is written with 17
significant digits, so identical runs give byte-identical files.
Non-finite floats become ``null``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .eigensolver import EigenReport
from .graph import CutMetrics, Graph, GraphEigenReport
from .mesh import Mesh


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return f"{x:.17g}" if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in seq) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def write_report(obj, path) -> None:
    Path(path).write_text(dumps(obj))


def mesh_eigen_report(report: EigenReport, mesh: Mesh) -> dict:
    return {
        "p": report.p,
        "bc": report.bc,
        "lambda2": report.lambda2,
        "rayleigh": report.rayleigh,
        "lambda_plus_history": report.lambda_plus_history,
        "lambda_minus_history": report.lambda_minus_history,
        "iterations": report.iterations,
        "converged": report.converged,
        "invariant_violations": report.invariant_violations,
        "mesh": mesh.summary(),
    }


def graph_eigen_report(report: GraphEigenReport, g: Graph,
                       cut: CutMetrics | None = None) -> dict:
    out = {
        "p": report.p,
        "bc": "graph",
        "lambda2": report.lambda2,
        "rayleigh": report.lambda2,
        "lambda_plus_history": report.lambda_plus_history,
        "lambda_minus_history": report.lambda_minus_history,
        "iterations": report.iterations,
        "converged": report.converged,
        "invariant_violations": report.invariant_violations,
        "graph": g.summary(),
    }
    if cut is not None:
        out["cut"] = {"rcc": cut.rcc, "ncc": cut.ncc}
    return out


def first_eigen_report(lambda1: float, rep, p: float, mesh: Mesh) -> dict:
    return {
        "p": p,
        "bc": "dirichlet",
        "lambda1": lambda1,
        "lambda_history": rep.lambda_history,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "mesh": mesh.summary(),
    }
