"""CSV/JSON writers with fixed, reproducible number formatting."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .ermakov import ErmakovSolution, ModeSolution, bogoliubov, occupation
from .moore import MoorePair
from .energy import AdiabaticityTrace


def fmt(x) -> str:
    """Shortest round-trip decimal form of a float; ``None`` becomes an empty field."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, header, columns) -> None:
    cols = [np.asarray(c) for c in columns]
    n = len(cols[0]) if cols else 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(fmt(c[i]) for c in cols) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_timeseries(path, pair: MoorePair, tr: AdiabaticityTrace) -> None:
    proto = pair.protocol
    write_csv(path, ["t", "L", "R", "E", "E_ad", "Q"],
              [tr.t, proto.left(tr.t), proto.right(tr.t), tr.E, tr.E_ad, tr.Q])


def write_moore(path, pair: MoorePair, z) -> None:
    z = np.asarray(z, dtype=float)
    F = pair.derivs("F", z)
    G = pair.derivs("G", z)
    write_csv(path, ["z", "F", "dF", "d2F", "d3F", "G", "dG", "d2G", "d3G"],
              [z, *F, *G])


def write_ermakov(path, erm: ErmakovSolution, mode: ModeSolution) -> None:
    """Rows of (t, omega, rho, drho, W, beta2); beta2 only where omega is locally constant."""
    sched = erm.schedule
    t = erm.t
    const = sched.is_constant_at(t)
    beta2 = []
    for ti, c in zip(t, const):
        if c:
            try:
                beta2.append(occupation(bogoliubov(mode, t_late=float(ti))))
                continue
            except RuntimeError:
                pass
        beta2.append(None)
    write_csv(path, ["t", "omega", "rho", "drho", "W", "beta2"],
              [t, sched.omega(t), erm.rho, erm.drho, erm.W, np.array(beta2, dtype=object)])


def read_knots(path):
    """Trajectory knots from a CSV with columns t,x,dx,d2x,d3x (header required)."""
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 5:
        raise ValueError("knot file needs columns t,x,dx,d2x,d3x")
    return data.T
