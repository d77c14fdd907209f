"""Piecewise-smooth time functions with exact derivatives up to third order.

A :class:`Trajectory` is an ordered list of contiguous segments, each carrying a
closed-form piece that can be evaluated (vectorised) together with its first
three derivatives. Outside the declared span the trajectory is extended by a
constant, so derivatives vanish there. The same type is used for mirror
worldlines, oscillator frequencies and Ermakov functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MAX_ORDER = 3
JUNCTION_VALUE_TOL = 1e-10
JUNCTION_DERIV_TOL = 1e-8

# delta(x) = 35x^4 - 84x^5 + 70x^6 - 20x^7 and its derivatives (highest power first)
_DELTA = np.poly1d([-20.0, 70.0, -84.0, 35.0, 0.0, 0.0, 0.0, 0.0])
_DELTA_DERIVS = [_DELTA, _DELTA.deriv(1), _DELTA.deriv(2), _DELTA.deriv(3)]


def smoothstep7(x, order: int = 0):
    """Degree-7 step 0 -> 1 on [0, 1] whose derivatives 1..3 vanish at both ends."""
    return _DELTA_DERIVS[order](x)


class TrajectoryError(ValueError):
    """Raised for invalid trajectory parameters or broken invariants."""


def _check_order(order: int) -> None:
    if order not in (0, 1, 2, 3):
        raise TrajectoryError(f"derivative order must be 0..3, got {order!r}")


# ---------------------------------------------------------------------------
# pieces
# ---------------------------------------------------------------------------

class Piece:
    """A closed-form function of time with derivatives 0..3."""

    is_constant = False

    def __call__(self, t: np.ndarray, order: int) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def knots(self) -> np.ndarray:
        """Interior points where derivatives of order >= 4 may jump."""
        return np.empty(0)


class ConstantPiece(Piece):
    is_constant = True

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, t, order):
        t = np.asarray(t, dtype=float)
        return np.full(t.shape, self.value if order == 0 else 0.0)

    def __repr__(self):
        return f"ConstantPiece({self.value!r})"


class FunctionPiece(Piece):
    """Piece given by explicit callables for each derivative order."""

    def __init__(self, funcs: Sequence[Callable[[np.ndarray], np.ndarray]], label: str = ""):
        if len(funcs) != MAX_ORDER + 1:
            raise TrajectoryError("need callables for derivative orders 0..3")
        self.funcs = tuple(funcs)
        self.label = label

    def __call__(self, t, order):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.funcs[order](t), t.shape).astype(float)

    def __repr__(self):
        return f"FunctionPiece({self.label})"


class AffinePiece(Piece):
    """``offset + scale * base(time_scale * t + time_shift)``."""

    def __init__(self, base: Piece, scale=1.0, offset=0.0, time_scale=1.0, time_shift=0.0):
        self.base = base
        self.scale = float(scale)
        self.offset = float(offset)
        self.time_scale = float(time_scale)
        self.time_shift = float(time_shift)
        self.is_constant = base.is_constant

    def __call__(self, t, order):
        s = self.time_scale * np.asarray(t, dtype=float) + self.time_shift
        out = self.scale * self.time_scale**order * self.base(s, order)
        if order == 0:
            out = out + self.offset
        return out

    def knots(self):
        k = self.base.knots()
        return np.sort((k - self.time_shift) / self.time_scale)


# Septic Hermite interpolation: on a unit cell p(s) = sum c_k s^k with the first four
# coefficients fixed by the left-end data; c4..c7 follow from the right-end data.
_K = np.arange(8)
_FALL = np.array([[np.prod(np.arange(k, k - j, -1)) if k >= j else 0.0 for k in _K]
                  for j in range(4)])  # _FALL[j, k] = k!/(k-j)!
_HIGH_INV = np.linalg.inv(_FALL[:, 4:])


class HermitePiece(Piece):
    """C3 piecewise septic Hermite interpolant of (x, x', x'', x''') node data."""

    def __init__(self, nodes, values, d1, d2, d3):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
            raise TrajectoryError("Hermite nodes must be strictly increasing (at least 2)")
        data = np.array([values, d1, d2, d3], dtype=float)
        h = np.diff(nodes)
        hp = np.array([h**j for j in range(4)])           # (4, m)
        fact = np.array([1.0, 1.0, 2.0, 6.0])[:, None]
        left = data[:, :-1] * hp                          # h^j x^(j)(t_i)
        right = data[:, 1:] * hp
        low = left / fact                                 # c0..c3
        rhs = right - _FALL[:, :4] @ low
        high = _HIGH_INV @ rhs
        self.coef = np.vstack([low, high])                # (8, m)
        self.nodes = nodes
        self.h = h
        self.data = data

    def __call__(self, t, order):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        i = np.clip(np.searchsorted(self.nodes, flat, side="right") - 1, 0, self.h.size - 1)
        s = (flat - self.nodes[i]) / self.h[i]
        c = self.coef[:, i]
        out = np.zeros_like(flat)
        for k in range(7, order - 1, -1):
            out = out * s + _FALL[order, k] * c[k]
        return (out / self.h[i] ** order).reshape(t.shape)

    def knots(self):
        return self.nodes[1:-1]


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    piece: Piece


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-C3 real function of time with constant extension outside its span.

    ``value`` is used only when there are no segments (a constant trajectory).
    """

    segments: tuple = ()
    value: float = 0.0
    _bounds: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        for s in segs:
            if not s.t_end > s.t_start:
                raise TrajectoryError(f"empty segment [{s.t_start}, {s.t_end}]")
        for a, b in zip(segs, segs[1:]):
            if abs(a.t_end - b.t_start) > 1e-12 * max(1.0, abs(a.t_end)):
                raise TrajectoryError(f"segments not contiguous at t={a.t_end} / {b.t_start}")
        bounds = np.array([s.t_start for s in segs] + ([segs[-1].t_end] if segs else []))
        object.__setattr__(self, "_bounds", bounds)

    # -- construction -----------------------------------------------------
    @classmethod
    def constant(cls, value: float) -> "Trajectory":
        return cls((), float(value))

    @classmethod
    def from_segments(cls, segments: Sequence[Segment]) -> "Trajectory":
        """Assemble segments in time order, filling gaps with constants."""
        segments = sorted(segments, key=lambda s: s.t_start)
        out: list[Segment] = []
        for s in segments:
            if out and s.t_start > out[-1].t_end + 1e-12:
                fill = float(out[-1].piece(np.array(out[-1].t_end), 0))
                out.append(Segment(out[-1].t_end, s.t_start, ConstantPiece(fill)))
            elif out and s.t_start < out[-1].t_end - 1e-12:
                raise TrajectoryError(f"overlapping segments at t={s.t_start}")
            if out:
                s = Segment(out[-1].t_end, s.t_end, s.piece)
            out.append(s)
        return cls(tuple(out))

    def splice(self, other: "Trajectory") -> "Trajectory":
        """Segments of ``self`` followed by those of ``other`` (gap filled by a constant)."""
        if not other.segments:
            return self
        if not self.segments:
            return other
        return Trajectory.from_segments(list(self.segments) + list(other.segments))

    def clipped(self, t_lo: float | None = None, t_hi: float | None = None) -> "Trajectory":
        """Restrict the segment list to [t_lo, t_hi]; outside it the trajectory is frozen."""
        segs = []
        for s in self.segments:
            a = s.t_start if t_lo is None else max(s.t_start, t_lo)
            b = s.t_end if t_hi is None else min(s.t_end, t_hi)
            if b > a:
                segs.append(Segment(a, b, s.piece))
        if not segs:
            t = t_lo if t_lo is not None else t_hi
            return Trajectory.constant(float(self(t)))
        return Trajectory(tuple(segs))

    # -- evaluation ---------------------------------------------------------
    @property
    def span(self) -> tuple[float, float] | None:
        if not self.segments:
            return None
        return self.segments[0].t_start, self.segments[-1].t_end

    @property
    def start_value(self) -> float:
        if not self.segments:
            return self.value
        s = self.segments[0]
        return float(s.piece(np.array(s.t_start), 0))

    @property
    def end_value(self) -> float:
        if not self.segments:
            return self.value
        s = self.segments[-1]
        return float(s.piece(np.array(s.t_end), 0))

    @property
    def motion_span(self) -> tuple[float, float] | None:
        """Span of the non-constant segments, or None for a static trajectory."""
        moving = [s for s in self.segments if not s.piece.is_constant]
        if not moving:
            return None
        return moving[0].t_start, moving[-1].t_end

    @property
    def bounds(self) -> np.ndarray:
        return self._bounds

    @property
    def knots(self) -> np.ndarray:
        """Segment bounds plus interior interpolation nodes (where X'''' may jump)."""
        inner = [s.piece.nodes[(s.piece.nodes > s.t_start) & (s.piece.nodes < s.t_end)]
                 for s in self.segments if isinstance(s.piece, HermitePiece)]
        return np.unique(np.concatenate([self._bounds, *inner])) if inner else self._bounds

    def __call__(self, t, order: int = 0):
        _check_order(order)
        scalar = np.ndim(t) == 0
        t = np.asarray(t, dtype=float)
        if not self.segments:
            out = np.full(t.shape, self.value if order == 0 else 0.0)
        else:
            out = np.empty(t.shape)
            lo, hi = self._bounds[0], self._bounds[-1]
            below, above = t < lo, t > hi
            out[below] = self.start_value if order == 0 else 0.0
            out[above] = self.end_value if order == 0 else 0.0
            inside = ~(below | above)
            if inside.any():
                ti = t[inside]
                idx = np.clip(np.searchsorted(self._bounds, ti, side="right") - 1,
                              0, len(self.segments) - 1)
                vals = np.empty(ti.shape)
                for j in np.unique(idx):
                    m = idx == j
                    vals[m] = self.segments[j].piece(ti[m], order)
                out[inside] = vals
        return float(out) if scalar else out

    def derivatives(self, t) -> np.ndarray:
        """Stack of orders 0..3, shape (4, *t.shape)."""
        return np.array([self(t, k) for k in range(4)])

    def segment_index(self, t) -> np.ndarray:
        """Index of the segment containing each t; -1 before, len(segments) after."""
        t = np.asarray(t, dtype=float)
        if not self.segments:
            return np.full(t.shape, -1)
        idx = np.searchsorted(self._bounds, t, side="right") - 1
        idx = np.where(t >= self._bounds[-1], len(self.segments), idx)
        return idx

    # -- transforms -----------------------------------------------------------
    def transformed(self, scale=1.0, offset=0.0, time_scale=1.0, time_shift=0.0) -> "Trajectory":
        """``offset + scale * self(time_scale * t + time_shift)``."""
        if time_scale == 0:
            raise TrajectoryError("time_scale must be non-zero")
        if not self.segments:
            return Trajectory.constant(offset + scale * self.value)
        segs = []
        for s in self.segments:
            a = (s.t_start - time_shift) / time_scale
            b = (s.t_end - time_shift) / time_scale
            piece = AffinePiece(s.piece, scale, offset, time_scale, time_shift)
            segs.append(Segment(min(a, b), max(a, b), piece))
        return Trajectory(tuple(sorted(segs, key=lambda s: s.t_start)))

    def shifted(self, dt: float) -> "Trajectory":
        """Delay by ``dt``: returns t -> self(t - dt)."""
        return self.transformed(time_shift=-dt)

    # -- diagnostics ------------------------------------------------------------
    def sample_grid(self, per_segment: int = 2001) -> np.ndarray:
        grids = [np.linspace(s.t_start, s.t_end, per_segment) for s in self.segments
                 if not s.piece.is_constant]
        for s in self.segments:
            k = s.piece.knots()
            if k.size:
                grids.append(k)
        return np.unique(np.concatenate(grids)) if grids else np.empty(0)

    def max_speed(self, per_segment: int = 2001) -> float:
        grid = self.sample_grid(per_segment)
        if grid.size == 0:
            return 0.0
        return float(np.max(np.abs(self(grid, 1))))

    def junction_jumps(self) -> np.ndarray:
        """Absolute jumps of orders 0..3 at every interior junction, shape (n_junctions, 4)."""
        rows = []
        for a, b in zip(self.segments, self.segments[1:]):
            t = np.array(a.t_end)
            rows.append([abs(float(a.piece(t, k)) - float(b.piece(t, k))) for k in range(4)])
        return np.array(rows).reshape(-1, 4)

    def validate(self, mirror: bool = False) -> None:
        """Check junction smoothness and, for mirrors, subluminal speed."""
        jumps = self.junction_jumps()
        if jumps.size:
            if np.any(jumps[:, 0] > JUNCTION_VALUE_TOL):
                raise TrajectoryError(f"value jump {jumps[:, 0].max():.3e} at a junction")
            if np.any(jumps[:, 1:] > JUNCTION_DERIV_TOL):
                raise TrajectoryError(f"derivative jump {jumps[:, 1:].max():.3e} at a junction")
        if mirror:
            v = self.max_speed()
            if v >= 1.0:
                raise TrajectoryError(f"superluminal trajectory: max |dX/dt| = {v:.6f}")


def time_reverse(traj: Trajectory, t_pivot: float) -> Trajectory:
    """Return t -> traj(2 t_pivot - t); odd derivative orders change sign."""
    return traj.transformed(time_scale=-1.0, time_shift=2.0 * t_pivot)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def make_polynomial_pulse(R_minus: float, epsilon: float, tau: float) -> Trajectory:
    """``R_minus (1 - epsilon * delta(t / tau))`` on [0, tau], constant outside."""
    if not 0.0 < epsilon < 1.0:
        raise TrajectoryError("epsilon must lie in (0,1)")
    if not tau > 0.0:
        raise TrajectoryError("tau must be positive")
    if not R_minus > 0.0:
        raise TrajectoryError("R_minus must be positive")
    vmax = epsilon * R_minus * 140.0 / 64.0 / tau
    if vmax >= 1.0:
        raise TrajectoryError(f"superluminal pulse: max |dR/dt| = {vmax:.4f}")

    def deriv(k):
        c = -R_minus * epsilon / tau**k
        if k == 0:
            return lambda t: R_minus + c * smoothstep7(t / tau)
        return lambda t: c * smoothstep7(t / tau, k)

    piece = FunctionPiece([deriv(k) for k in range(4)], label=f"poly({R_minus},{epsilon},{tau})")
    return Trajectory((Segment(0.0, tau, piece),))


def make_cosine_pulse(R_minus: float, A: float, omega: float, tau: float | None = None) -> Trajectory:
    """``R_minus cos(A sin^2(omega t))`` on [0, tau].

    ``tau`` defaults to one arch, pi/omega, and must be a whole number of arches so the
    mirror returns to rest with three continuous derivatives.
    """
    if not omega > 0.0 or not R_minus > 0.0:
        raise TrajectoryError("R_minus and omega must be positive")
    arch = np.pi / omega
    if tau is None:
        tau = arch
    n_arch = tau / arch
    if not tau > 0 or abs(n_arch - round(n_arch)) > 1e-9:
        raise TrajectoryError("tau must be a positive multiple of pi/omega")

    def s_derivs(t):
        w2 = 2.0 * omega * t
        return (np.sin(omega * t) ** 2, omega * np.sin(w2),
                2.0 * omega**2 * np.cos(w2), -4.0 * omega**3 * np.sin(w2))

    def f0(t):
        return R_minus * np.cos(A * s_derivs(t)[0])

    def f1(t):
        s, s1, _, _ = s_derivs(t)
        return -R_minus * A * np.sin(A * s) * s1

    def f2(t):
        s, s1, s2, _ = s_derivs(t)
        return -R_minus * (A**2 * np.cos(A * s) * s1**2 + A * np.sin(A * s) * s2)

    def f3(t):
        s, s1, s2, s3 = s_derivs(t)
        return -R_minus * (-A**3 * np.sin(A * s) * s1**3 + 3 * A**2 * np.cos(A * s) * s1 * s2
                           + A * np.sin(A * s) * s3)

    traj = Trajectory((Segment(0.0, float(tau), FunctionPiece([f0, f1, f2, f3], "cosine")),))
    v = traj.max_speed(per_segment=4001)
    if v >= 1.0:
        raise TrajectoryError(f"superluminal cosine pulse: max |dR/dt| = {v:.4f}")
    return traj


def make_hermite(nodes, values, d1, d2, d3) -> Trajectory:
    """Trajectory interpolating node data with a C3 septic Hermite spline."""
    nodes = np.asarray(nodes, dtype=float)
    piece = HermitePiece(nodes, values, d1, d2, d3)
    return Trajectory((Segment(float(nodes[0]), float(nodes[-1]), piece),))


def make_ramp(v_start: float, v_end: float, t_start: float, duration: float) -> Trajectory:
    """C3 ramp from v_start to v_end over [t_start, t_start + duration] using delta(x)."""
    if not duration > 0:
        raise TrajectoryError("duration must be positive")
    dv = v_end - v_start

    def deriv(k):
        c = dv / duration**k
        if k == 0:
            return lambda t: v_start + c * smoothstep7((t - t_start) / duration)
        return lambda t: c * smoothstep7((t - t_start) / duration, k)

    piece = FunctionPiece([deriv(k) for k in range(4)], label="ramp")
    return Trajectory((Segment(t_start, t_start + duration, piece),))


# ---------------------------------------------------------------------------
# erasing trajectories
# ---------------------------------------------------------------------------

def _pulse_window(R_I: Trajectory) -> tuple[float, float]:
    span = R_I.motion_span
    if span is None:
        raise TrajectoryError("R_I has no motion")
    return span


def _check_short_pulse(tau: float, R_minus: float, R_plus: float) -> None:
    if tau > min(R_minus, R_plus) + 1e-12:
        raise TrajectoryError(
            f"short-pulse condition violated: tau={tau} > min(R-, R+)={min(R_minus, R_plus)}")


def right_firing_time(R_minus: float, R_plus: float, n: int, t0: float = 0.0) -> float:
    return t0 + R_minus + (2 * n - 1) * R_plus


def left_firing_time(R_minus: float, R_plus: float, n: int, t0: float = 0.0) -> float:
    return t0 + 2 * n * R_plus + R_minus


def erasing_trajectory_right(R_I: Trajectory, R_minus: float, R_plus: float, tau: float,
                             n: int = 1, firing_time: float | None = None):
    """Right-mirror erasing pulse ``R+ - [R_I(t - t_n) - R-]`` and its firing time.

    ``firing_time`` overrides t_n (useful for scanning non-admissible times).
    """
    if n < 1:
        raise TrajectoryError("n must be a positive integer")
    _check_short_pulse(tau, R_minus, R_plus)
    t0, t1 = _pulse_window(R_I)
    t_n = right_firing_time(R_minus, R_plus, n, t0) if firing_time is None else float(firing_time)
    R_II = R_I.clipped(t0, t1).transformed(scale=-1.0, offset=R_plus + R_minus,
                                           time_shift=t0 - t_n)
    return R_II, t_n


def erasing_trajectory_left(R_I: Trajectory, R_minus: float, R_plus: float, tau: float,
                            n: int = 1, L_minus: float = 0.0, firing_time: float | None = None):
    """Left-mirror erasing pulse ``L- + R_I(t - t_n) - R-`` and its firing time."""
    if n < 1:
        raise TrajectoryError("n must be a positive integer")
    _check_short_pulse(tau, R_minus, R_plus)
    t0, t1 = _pulse_window(R_I)
    t_n = left_firing_time(R_minus, R_plus, n, t0) if firing_time is None else float(firing_time)
    L_II = R_I.clipped(t0, t1).transformed(offset=L_minus - R_minus, time_shift=t0 - t_n)
    return L_II, t_n


# ---------------------------------------------------------------------------
# cavity protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CavityProtocol:
    """Left and right mirror worldlines of a cavity that starts at rest in its vacuum."""

    left: Trajectory
    right: Trajectory

    @classmethod
    def static(cls, L: float, R: float) -> "CavityProtocol":
        return cls(Trajectory.constant(L), Trajectory.constant(R))

    @classmethod
    def right_only(cls, right: Trajectory, L: float = 0.0) -> "CavityProtocol":
        return cls(Trajectory.constant(L), right)

    @property
    def motion_span(self) -> tuple[float, float] | None:
        spans = [s for s in (self.left.motion_span, self.right.motion_span) if s is not None]
        if not spans:
            return None
        return min(s[0] for s in spans), max(s[1] for s in spans)

    @property
    def t_motion_start(self) -> float | None:
        span = self.motion_span
        return None if span is None else span[0]

    @property
    def t_motion_end(self) -> float | None:
        span = self.motion_span
        return None if span is None else span[1]

    @property
    def L_minus(self) -> float:
        return self.left.start_value

    @property
    def R_minus(self) -> float:
        return self.right.start_value

    @property
    def L_plus(self) -> float:
        return self.left.end_value

    @property
    def R_plus(self) -> float:
        return self.right.end_value

    @property
    def initial_length(self) -> float:
        return self.R_minus - self.L_minus

    @property
    def final_length(self) -> float:
        return self.R_plus - self.L_plus

    def length(self, t):
        return self.right(t) - self.left(t)

    def validate(self) -> None:
        """Subluminal C3 mirrors with R > L everywhere (checked on a dense grid)."""
        self.left.validate(mirror=True)
        self.right.validate(mirror=True)
        grid = np.unique(np.concatenate([self.left.sample_grid(), self.right.sample_grid(),
                                         [0.0]]))
        if np.any(self.length(grid) <= 0) or self.initial_length <= 0 or self.final_length <= 0:
            raise TrajectoryError("cavity length must stay positive (R > L)")

    def max_speed(self) -> float:
        return max(self.left.max_speed(), self.right.max_speed())

    def time_reversed(self, t_pivot: float) -> "CavityProtocol":
        return CavityProtocol(time_reverse(self.left, t_pivot), time_reverse(self.right, t_pivot))
