"""Renormalised energy of the cavity field and the adiabaticity coefficient."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .moore import MoorePair, residuals
from .quadrature import integrate, integrate_many, split_at

CASIMIR = math.pi / 24.0


@dataclass(frozen=True)
class EnergySample:
    t: float
    E: float
    E_ad: float
    Q: float


@dataclass(frozen=True)
class AdiabaticityTrace:
    t: np.ndarray
    E: np.ndarray
    E_ad: np.ndarray
    Q: np.ndarray
    residual_report: tuple[float, float] | None = None

    @property
    def samples(self) -> list[EnergySample]:
        return [EnergySample(*map(float, row)) for row in zip(self.t, self.E, self.E_ad, self.Q)]


@dataclass(frozen=True)
class EnergyCostReport:
    delta_W: float
    tau_eff: float
    tau_ref: float
    mean_eff: float
    mean_ref: float


def thermal_Z(x: float) -> float:
    """Sum of n*pi / (exp(n*pi/x) - 1) over n >= 1, with x = T d0."""
    if x < 0:
        raise ValueError("T*d0 must be non-negative")
    if x == 0:
        return 0.0
    total = 0.0
    n = 1
    while True:
        a = n * math.pi / x
        term = 0.0 if a > 700 else n * math.pi / math.expm1(a)
        total += term
        if term < 1e-15 * total or term == 0.0:
            return total
        n += 1


def f_component(h1, h2, h3, Z_val: float = 0.0):
    """Energy-density contribution of one Moore function from its derivatives."""
    h1 = np.asarray(h1, dtype=float)
    if np.any(h1 <= 0):
        raise ValueError("Moore function derivative must be positive")
    r = h2 / h1
    return -(h3 / h1 - 1.5 * r**2) / (24.0 * math.pi) + 0.5 * h1**2 * (-CASIMIR + Z_val)


def _f(pair: MoorePair, which: str, z, Z_val: float):
    d = pair.derivs(which, z)
    return f_component(d[1], d[2], d[3], Z_val)


def energy_density(pair: MoorePair, x, t, Z_val: float = 0.0):
    """<T_tt(x, t)>_ren = f_G(t + x) + f_F(t - x) for L(t) <= x <= R(t)."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    L = pair.protocol.left(t)
    R = pair.protocol.right(t)
    tol = 1e-12 * np.maximum(1.0, np.abs(x))
    if np.any(x < L - tol) or np.any(x > R + tol):
        raise ValueError("x lies outside the cavity")
    xb, tb = np.broadcast_arrays(x, t)
    out = (_f(pair, "G", (tb + xb).ravel(), Z_val) + _f(pair, "F", (tb - xb).ravel(), Z_val))
    return out.reshape(xb.shape) if xb.ndim else float(out[0])


def _intervals(los, his, bps):
    a, b, owner = [], [], []
    for i, (lo, hi) in enumerate(zip(los, his)):
        pts = split_at(lo, hi, bps)
        a.append(pts[:-1])
        b.append(pts[1:])
        owner.append(np.full(pts.size - 1, i))
    return np.concatenate(a), np.concatenate(b), np.concatenate(owner)


def total_energy(pair: MoorePair, t, Z_val: float = 0.0, atol: float = 1e-10,
                 full_output: bool = False):
    """Integral of the energy density across the cavity at time(s) ``t``.

    Each value is the sum of two null-coordinate integrals: f_G over
    [t + L, t + R] and f_F over [t - R, t - L]. Splitting at images of the
    mirror junctions and interpolation nodes keeps the adaptive rule reliable.
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    L = pair.protocol.left(t)
    R = pair.protocol.right(t)
    if np.any(R - L <= 0):
        raise ValueError("cavity length must be positive")
    vals = np.zeros(t.size)
    errs = np.zeros(t.size)
    for which, lo, hi in (("G", t + L, t + R), ("F", t - R, t - L)):
        bps = pair.knots(which, float(lo.min()), float(hi.max()))
        a, b, owner = _intervals(lo, hi, bps)
        v, e = integrate_many(lambda z, w=which: _f(pair, w, z, Z_val), a, b, owner, t.size,
                              atol=0.5 * atol)
        vals += v
        errs += e
    if scalar:
        vals, errs = float(vals[0]), float(errs[0])
    return (vals, errs) if full_output else vals


def adiabatic_energy(length):
    """Static Casimir energy -pi/(24 d)."""
    return -CASIMIR / np.asarray(length, dtype=float)


def adiabaticity(pair: MoorePair, t):
    """Q(t) = E(t)/E_ad(t) for a field that started in the vacuum (T = 0)."""
    E = total_energy(pair, t)
    return E / adiabatic_energy(pair.protocol.length(t))


def trace(pair: MoorePair, t, with_residuals: bool = True) -> AdiabaticityTrace:
    t = np.asarray(t, dtype=float)
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValueError("sample times must be strictly increasing")
    E = np.atleast_1d(total_energy(pair, t))
    E_ad = np.atleast_1d(adiabatic_energy(pair.protocol.length(t)))
    rep = residuals(pair, t) if with_residuals else None
    return AdiabaticityTrace(np.atleast_1d(t), E, E_ad, E / E_ad, rep)


def _mean_energy(pair: MoorePair, span, atol):
    t0, t1 = span
    if not t1 > t0:
        raise ValueError("time spans must be positive")
    proto = pair.protocol
    bps = np.concatenate([proto.left.bounds, proto.right.bounds])
    inner = min(1e-10, 1e-2 * atol)
    val, _ = integrate(lambda ts: total_energy(pair, ts, atol=inner), t0, t1, bps, atol=atol)
    return val / (t1 - t0)


def energy_cost(eff: MoorePair, ref: MoorePair, span_eff, span_ref, atol: float = 1e-8
                ) -> EnergyCostReport:
    """Difference of time-averaged total energies of a shortcut and its reference.

    ``span_eff`` and ``span_ref`` are (t_start, t_end) pairs; a bare number is
    read as (0, tau).
    """
    span_eff = (0.0, float(span_eff)) if np.ndim(span_eff) == 0 else tuple(map(float, span_eff))
    span_ref = (0.0, float(span_ref)) if np.ndim(span_ref) == 0 else tuple(map(float, span_ref))
    m_eff = _mean_energy(eff, span_eff, atol)
    m_ref = _mean_energy(ref, span_ref, atol)
    return EnergyCostReport(m_eff - m_ref, span_eff[1] - span_eff[0], span_ref[1] - span_ref[0],
                            m_eff, m_ref)
