"""Moore functions of a cavity with two moving mirrors.

The pair (F, G) solves

    G(t + L(t)) - F(t - L(t)) = 0,      G(t + R(t)) - F(t - R(t)) = 2,

with the linear vacuum data F(z) = (z + L-)/d-, G(z) = (z - L-)/d- while the
cavity is still at rest. Values at later null coordinates are obtained by
following characteristics back to the known region; derivatives up to third
order follow from differentiating each reflection exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import gauss_legendre
from .trajectory import CavityProtocol, Trajectory

MAX_ROUND_TRIPS = 10_000
INVERT_TOL = 1e-12


class MooreError(RuntimeError):
    """Numerical failure while building or evaluating Moore functions."""


class BracketError(MooreError):
    def __init__(self, message, z=None):
        super().__init__(message)
        self.z = z


class RecursionDepthError(MooreError):
    pass


# ---------------------------------------------------------------------------
# characteristic inversion
# ---------------------------------------------------------------------------

def invert_characteristic(X: Trajectory, sign: int, z):
    """Solve ``t + sign * X(t) = z`` for t (vectorised).

    Requires |dX/dt| < 1 so the left-hand side is strictly increasing. Constant
    segments are inverted in closed form; moving ones by a bisection-safeguarded
    Newton iteration inside the segment that brackets z.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty_like(z)
    if not X.segments:
        out[:] = z - sign * X.value
        return float(out[0]) if scalar else out
    bounds = X.bounds
    zb = bounds + sign * X(bounds)
    if np.any(np.diff(zb) <= 0):
        raise BracketError("t + sign*X(t) is not increasing across segments; "
                           "trajectory is superluminal or discontinuous")
    seg = np.searchsorted(zb, z, side="right") - 1
    before = seg < 0
    after = seg >= len(X.segments)
    out[before] = z[before] - sign * X.start_value
    out[after] = z[after] - sign * X.end_value
    for j in np.unique(seg[~(before | after)]):
        m = seg == j
        piece = X.segments[j].piece
        if piece.is_constant:
            out[m] = z[m] - sign * float(piece(np.array(bounds[j]), 0))
            continue
        out[m] = _newton_bracketed(piece, sign, z[m], bounds[j], bounds[j + 1], zb[j], zb[j + 1])
    return float(out[0]) if scalar else out


def _newton_bracketed(piece, sign, z, t_lo, t_hi, z_lo, z_hi):
    lo = np.full(z.shape, t_lo)
    hi = np.full(z.shape, t_hi)
    width = z_hi - z_lo
    t = t_lo + (t_hi - t_lo) * np.clip((z - z_lo) / width if width > 0 else 0.5, 0.0, 1.0)
    tol = INVERT_TOL * np.maximum(1.0, np.abs(z))
    for _ in range(200):
        g = t + sign * piece(t, 0) - z
        done = np.abs(g) <= 0.05 * tol
        if done.all():
            return t
        dg = 1.0 + sign * piece(t, 1)
        lo = np.where(g < 0, t, lo)
        hi = np.where(g > 0, t, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - g / dg
        bad = ~np.isfinite(tn) | (tn <= lo) | (tn >= hi)
        tn = np.where(bad, 0.5 * (lo + hi), tn)
        stalled = np.abs(tn - t) <= 1e-16 * np.maximum(1.0, np.abs(t))
        t = np.where(done, t, tn)
        if np.all(done | stalled):
            break
    g = t + sign * piece(t, 0) - z
    if np.any(np.abs(g) > tol):
        i = int(np.argmax(np.abs(g)))
        raise BracketError(f"characteristic inversion failed for z={z[i]!r} "
                           f"(residual {g[i]:.3e})", z=float(z[i]))
    return t


# ---------------------------------------------------------------------------
# Moore pair interface
# ---------------------------------------------------------------------------

def _as_array(z):
    return np.atleast_1d(np.asarray(z, dtype=float))


class MoorePair:
    """Evaluators for F and G with derivatives 0..3.

    Subclasses implement ``derivs(which, z)`` returning an array of shape
    (4, n). ``protocol`` gives the mirror worldlines the pair lives on.
    """

    protocol: CavityProtocol | None = None

    def derivs(self, which: str, z) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def F(self, z, order: int = 0):
        return self._pick("F", z, order)

    def G(self, z, order: int = 0):
        return self._pick("G", z, order)

    def _pick(self, which, z, order):
        if order not in (0, 1, 2, 3):
            raise ValueError("order must be 0..3")
        out = self.derivs(which, _as_array(z))[order]
        return float(out[0]) if np.ndim(z) == 0 else out.reshape(np.shape(z))

    def breakpoints(self, which: str, lo: float, hi: float) -> np.ndarray:
        """Null coordinates in [lo, hi] where derivatives may lose smoothness."""
        return np.empty(0)

    def knots(self, which: str, lo: float, hi: float) -> np.ndarray:
        """Breakpoints plus images of interpolation nodes; finer, for quadrature."""
        return self.breakpoints(which, lo, hi)

    def shifted(self, dF: float, dG: float) -> "MoorePair":
        return ShiftedMoore(self, dF, dG)


class ShiftedMoore(MoorePair):
    """Pair with constants added to F and G (a gauge change when dF == dG)."""

    def __init__(self, base: MoorePair, dF: float, dG: float):
        self.base = base
        self.dF = float(dF)
        self.dG = float(dG)
        self.protocol = base.protocol

    def derivs(self, which, z):
        out = self.base.derivs(which, z).copy()
        out[0] += self.dF if which == "F" else self.dG
        return out

    def breakpoints(self, which, lo, hi):
        return self.base.breakpoints(which, lo, hi)

    def knots(self, which, lo, hi):
        return self.base.knots(which, lo, hi)


class LinearMoore(MoorePair):
    """F(z) = (z + L)/d, G(z) = (z - L)/d: the vacuum of a static cavity [L, L + d]."""

    def __init__(self, L: float, R: float, protocol: CavityProtocol | None = None):
        if not R > L:
            raise ValueError("cavity length must be positive")
        self.L, self.R = float(L), float(R)
        self.d = self.R - self.L
        self.protocol = protocol if protocol is not None else CavityProtocol.static(L, R)

    def derivs(self, which, z):
        z = _as_array(z)
        out = np.zeros((4, z.size))
        shift = self.L if which == "F" else -self.L
        out[0] = (z + shift) / self.d
        out[1] = 1.0 / self.d
        return out


# ---------------------------------------------------------------------------
# solving the Moore equations
# ---------------------------------------------------------------------------

def _reflect(K, a1, a2, a3, b1, b2, b3, c):
    """Derivatives of H where H(a(t)) = K(b(t)) + c, given K and its derivatives at b."""
    K0, K1, K2, K3 = K
    H1 = K1 * b1 / a1
    H2 = (K2 * b1**2 + K1 * b2 - H1 * a2) / a1**2
    H3 = (K3 * b1**3 + 3.0 * K2 * b1 * b2 + K1 * b3 - 3.0 * H2 * a1 * a2 - H1 * a3) / a1**3
    return np.array([K0 + c, H1, H2, H3])


class SolvedMoore(MoorePair):
    """Moore functions of a protocol, evaluated lazily by characteristic recursion."""

    def __init__(self, protocol: CavityProtocol, max_round_trips: int = MAX_ROUND_TRIPS):
        self.protocol = protocol
        self.L_minus = protocol.L_minus
        self.R_minus = protocol.R_minus
        self.d_minus = protocol.initial_length
        if not self.d_minus > 0:
            raise ValueError("initial cavity length must be positive")
        t_s = protocol.t_motion_start
        t_s = np.inf if t_s is None else t_s
        self.u_known = t_s - self.L_minus
        self.v_known = t_s + self.R_minus
        self.max_levels = 2 * max_round_trips
        self._base = LinearMoore(self.L_minus, self.R_minus)

    def derivs(self, which, z):
        z = _as_array(z)
        left, right = self.protocol.left, self.protocol.right
        kind = np.full(z.size, 0 if which == "F" else 1)
        cur = z.copy()
        levels = []
        for _ in range(self.max_levels + 1):
            unknown = np.where(kind == 0, cur > self.u_known, cur > self.v_known)
            if not unknown.any():
                break
            idx = np.flatnonzero(unknown)
            for k in (0, 1):
                sub = idx[kind[idx] == k]
                if sub.size == 0:
                    continue
                if k == 1:      # G(t + R) = F(t - R) + 2
                    X, sigma, c = right, 1.0, 2.0
                else:           # F(t - L) = G(t + L)
                    X, sigma, c = left, -1.0, 0.0
                t = invert_characteristic(X, int(sigma), cur[sub])
                x0, x1, x2, x3 = (X(t, j) for j in range(4))
                levels.append((sub, 1.0 + sigma * x1, sigma * x2, sigma * x3,
                               1.0 - sigma * x1, -sigma * x2, -sigma * x3, c))
                cur[sub] = t - sigma * x0
                kind[sub] = 1 - k
        else:
            i = int(np.flatnonzero(unknown)[0])
            raise RecursionDepthError(
                f"Moore recursion exceeded {self.max_levels // 2} round trips at z={z[i]!r}; "
                "check that R > L and the mirrors are subluminal")
        vals = np.empty((4, z.size))
        fmask = kind == 0
        vals[:, fmask] = self._base.derivs("F", cur[fmask])
        vals[:, ~fmask] = self._base.derivs("G", cur[~fmask])
        for sub, a1, a2, a3, b1, b2, b3, c in reversed(levels):
            vals[:, sub] = _reflect(vals[:, sub], a1, a2, a3, b1, b2, b3, c)
        return vals

    def breakpoints(self, which, lo, hi):
        left, right = self.protocol.left, self.protocol.right
        return self._images(which, lo, hi, left.bounds, right.bounds)

    def knots(self, which, lo, hi):
        left, right = self.protocol.left, self.protocol.right
        return self._images(which, lo, hi, left.knots, right.knots)

    def _images(self, which, lo, hi, left_seeds, right_seeds):
        left, right = self.protocol.left, self.protocol.right
        pts = {"F": [], "G": []}
        frontier_G = right_seeds + right(right_seeds) if right.segments else np.empty(0)
        frontier_F = left_seeds - left(left_seeds) if left.segments else np.empty(0)
        margin = 2.0 * (abs(self.protocol.L_minus) + abs(self.protocol.L_plus)) + 1.0
        for _ in range(self.max_levels):
            frontier_G = frontier_G[frontier_G <= hi + margin]
            frontier_F = frontier_F[frontier_F <= hi + margin]
            if frontier_G.size == 0 and frontier_F.size == 0:
                break
            pts["G"].append(frontier_G)
            pts["F"].append(frontier_F)
            # a G feature at v reflects off the left mirror into F at t - L(t), t + L(t) = v
            tG = invert_characteristic(left, 1, frontier_G) if frontier_G.size else frontier_G
            new_F = tG - left(tG) if frontier_G.size else frontier_G
            # an F feature at u reflects off the right mirror into G at t + R(t), t - R(t) = u
            tF = invert_characteristic(right, -1, frontier_F) if frontier_F.size else frontier_F
            new_G = tF + right(tF) if frontier_F.size else frontier_F
            frontier_F, frontier_G = np.atleast_1d(new_F), np.atleast_1d(new_G)
        p = np.concatenate(pts[which]) if pts[which] else np.empty(0)
        p = np.unique(p[(p >= lo) & (p <= hi)])
        return p


def solve(protocol: CavityProtocol) -> SolvedMoore:
    """Moore functions of ``protocol`` (validated first)."""
    protocol.validate()
    return SolvedMoore(protocol)


# ---------------------------------------------------------------------------
# adiabatic Moore functions
# ---------------------------------------------------------------------------

class AdiabaticMoore(MoorePair):
    """Frozen-limit Moore functions of reference worldlines.

    F_ad = I(z) + (R + L)/(2(R - L)) - 1/2 and G_ad = I(z) - (R + L)/(2(R - L)) + 1/2,
    with I(z) the integral of 1/(R - L) from 0. The constants make both Moore
    equations exact wherever the reference is at rest.
    """

    def __init__(self, L_ref: Trajectory, R_ref: Trajectory, cells_per_segment: int = 64,
                 gl_order: int = 16):
        self.protocol = CavityProtocol(L_ref, R_ref)
        self.L, self.R = L_ref, R_ref
        bounds = np.unique(np.concatenate([L_ref.bounds, R_ref.bounds, [0.0]]))
        grid = [bounds[:1]]
        for a, b in zip(bounds[:-1], bounds[1:]):
            grid.append(np.linspace(a, b, cells_per_segment + 1)[1:])
        self.nodes = np.concatenate(grid)
        self._x, self._w = gauss_legendre(gl_order)
        if self.nodes.size > 1:
            cell = self._gl(self.nodes[:-1], self.nodes[1:])
            cum = np.concatenate([[0.0], np.cumsum(cell)])
        else:
            cum = np.zeros(1)
        d_check = self._length(self.nodes)
        if np.any(d_check <= 0):
            raise ValueError("non-positive reference cavity length")
        self.cum = cum - np.interp(0.0, self.nodes, cum)

    def _length(self, t):
        return self.R(t) - self.L(t)

    def _gl(self, a, b):
        half = 0.5 * (b - a)
        x = 0.5 * (a + b)[:, None] + half[:, None] * self._x[None, :]
        return half * ((1.0 / self._length(x.ravel())).reshape(x.shape) @ self._w)

    def _integral(self, z):
        # outside the node range the length is constant, so the GL rule is exact there
        k = np.clip(np.searchsorted(self.nodes, z, side="right") - 1, 0, self.nodes.size - 1)
        return self.cum[k] + self._gl(self.nodes[k], z)

    def derivs(self, which, z):
        z = _as_array(z)
        D = np.array([self.R(z, j) - self.L(z, j) for j in range(4)])
        S = np.array([self.R(z, j) + self.L(z, j) for j in range(4)])
        if np.any(D[0] <= 0):
            raise ValueError("non-positive reference cavity length")
        r0 = 1.0 / D[0]
        r1 = -D[1] * r0**2
        r2 = -D[2] * r0**2 + 2.0 * D[1] ** 2 * r0**3
        r3 = -D[3] * r0**2 + 6.0 * D[1] * D[2] * r0**3 - 6.0 * D[1] ** 3 * r0**4
        q0 = S[0] * r0
        q1 = S[1] * r0 + S[0] * r1
        q2 = S[2] * r0 + 2 * S[1] * r1 + S[0] * r2
        q3 = S[3] * r0 + 3 * S[2] * r1 + 3 * S[1] * r2 + S[0] * r3
        sgn = 1.0 if which == "F" else -1.0
        return np.array([self._integral(z) + sgn * (0.5 * q0 - 0.5),
                         r0 + sgn * 0.5 * q1,
                         r1 + sgn * 0.5 * q2,
                         r2 + sgn * 0.5 * q3])

    def breakpoints(self, which, lo, hi):
        b = np.unique(np.concatenate([self.L.bounds, self.R.bounds]))
        return b[(b >= lo) & (b <= hi)]


def adiabatic_moore(L_ref: Trajectory, R_ref: Trajectory) -> AdiabaticMoore:
    return AdiabaticMoore(L_ref, R_ref)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def residuals(pair: MoorePair, t_samples) -> tuple[float, float]:
    """Maximum violation of the left and right Moore equations over ``t_samples``."""
    t = _as_array(t_samples)
    L = pair.protocol.left(t)
    R = pair.protocol.right(t)
    left = np.abs(pair.G(t + L) - pair.F(t - L))
    right = np.abs(pair.G(t + R) - pair.F(t - R) - 2.0)
    return float(left.max()), float(right.max())


@dataclass(frozen=True)
class MooreDecomposition:
    slope: float
    offset: float
    period: float
    z: np.ndarray
    periodic_part: np.ndarray
    amplitude: float


def periodic_start(protocol: CavityProtocol, t_static_start: float) -> float:
    """Smallest u beyond which F'(u) = F'(u - 2 d+) once the mirrors are at rest."""
    Lp, Rp = protocol.L_plus, protocol.R_plus
    return t_static_start + max(-Lp, Rp - 2.0 * Lp)


def decompose_periodic(pair: MoorePair, t_static_start: float, n_samples: int = 1024
                       ) -> MooreDecomposition:
    """Split F into a line plus a zero-mean periodic part over one static period."""
    proto = pair.protocol
    t_end = proto.t_motion_end
    if t_end is not None and t_end > t_static_start + 1e-12:
        raise ValueError(f"insufficient static span: mirrors move until t={t_end}, "
                         f"after the requested t_static_start={t_static_start}")
    d = proto.final_length
    z0 = periodic_start(proto, t_static_start)
    z = z0 + 2.0 * d * np.arange(n_samples) / n_samples
    f = pair.F(z)
    # the slope is pinned by the period increment, so p is exactly periodic;
    # the offset is then the least-squares (mean) value
    slope = (float(pair.F(z0 + 2.0 * d)) - float(f[0])) / (2.0 * d)
    offset = float(np.mean(f - slope * z))
    p = f - (slope * z + offset)
    return MooreDecomposition(float(slope), float(offset), 2.0 * d, z, p, float(np.max(np.abs(p))))
