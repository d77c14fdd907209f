"""Harmonic-oscillator analogue: mode functions, Ermakov equation and Bogoliubov data.

Conventions. Mode functions start as q = 1/sqrt(2 w), dq/dt = -i w q, so the
Wronskian dq/dt q* - dq*/dt q equals -i and is conserved. The Ermakov function
rho obeys rho'' + w^2 rho = 1/rho^3; for vacuum initial data rho = sqrt(2) |q|.

On intervals where w^2 is constant both equations are advanced with the exact
propagator, elsewhere with DOP853 segment by segment (so kinks in higher
derivatives of the schedule never fall inside a step).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .quadrature import integrate
from .trajectory import (
    AffinePiece,
    ConstantPiece,
    FunctionPiece,
    Segment,
    Trajectory,
    make_ramp,
    time_reverse,
)

RTOL = 1e-12
ATOL = 1e-14
CONSTANT_TOL = 1e-8
FIT_RMS_MAX = 1e-6
EXTREMUM_TOL = 1e-8


class ErmakovError(RuntimeError):
    """Integration or fitting failure in the oscillator analogue."""


# ---------------------------------------------------------------------------
# frequency schedules
# ---------------------------------------------------------------------------

def _square_piece(piece):
    if piece.is_constant:
        return ConstantPiece(float(piece(np.array(0.0), 0)) ** 2)

    def f(k):
        def g(t):
            w = [piece(t, j) for j in range(4)]
            return [w[0] ** 2,
                    2 * w[0] * w[1],
                    2 * (w[1] ** 2 + w[0] * w[2]),
                    2 * (3 * w[1] * w[2] + w[0] * w[3])][k]
        return g

    return FunctionPiece([f(k) for k in range(4)], label="omega^2")


@dataclass(frozen=True)
class FrequencySchedule:
    """Squared frequency w^2(t) as a trajectory; constant outside its segments.

    w^2 may be negative for reverse-engineered schedules; ``has_negative``
    reports it.
    """

    omega2_traj: Trajectory

    @classmethod
    def constant(cls, omega: float) -> "FrequencySchedule":
        if not omega > 0:
            raise ValueError("frequency must be positive")
        return cls(Trajectory.constant(omega**2))

    @classmethod
    def from_omega(cls, omega: Trajectory) -> "FrequencySchedule":
        vals = omega(omega.sample_grid()) if omega.segments else np.array([omega.value])
        if np.any(vals <= 0) or omega.start_value <= 0 or omega.end_value <= 0:
            raise ValueError("frequency schedule must be positive")
        if not omega.segments:
            return cls.constant(omega.value)
        segs = tuple(Segment(s.t_start, s.t_end, _square_piece(s.piece)) for s in omega.segments)
        return cls(Trajectory(segs))

    def omega2(self, t, order: int = 0):
        return self.omega2_traj(t, order)

    def omega(self, t):
        """Signed square root: negative where w^2 < 0."""
        w2 = np.asarray(self.omega2(t))
        return np.sign(w2) * np.sqrt(np.abs(w2))

    @property
    def omega_minus(self) -> float:
        return math.sqrt(self.omega2_traj.start_value)

    @property
    def omega_plus(self) -> float:
        return math.sqrt(self.omega2_traj.end_value)

    @property
    def bounds(self) -> np.ndarray:
        return self.omega2_traj.bounds

    @property
    def min_omega2(self) -> float:
        tr = self.omega2_traj
        grid = tr.sample_grid()
        vals = [tr.start_value, tr.end_value]
        if grid.size:
            vals.append(float(np.min(tr(grid))))
        return float(min(vals))

    @property
    def has_negative(self) -> bool:
        return self.min_omega2 < 0

    def is_constant_at(self, t) -> np.ndarray:
        """True where t lies on a constant stretch of the schedule."""
        tr = self.omega2_traj
        t = np.asarray(t, dtype=float)
        idx = tr.segment_index(t)
        flags = np.array([s.piece.is_constant for s in tr.segments] + [True, True], dtype=bool)
        return flags[idx]

    def intervals(self, t0: float, t1: float):
        """(a, b, constant_value_or_None) covering [t0, t1]."""
        tr = self.omega2_traj
        out = []
        cuts = np.unique(np.concatenate([[t0, t1], tr.bounds[(tr.bounds > t0) & (tr.bounds < t1)]]))
        for a, b in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (a + b)
            const = bool(self.is_constant_at(mid))
            out.append((float(a), float(b), float(tr(mid)) if const else None))
        return out

    def time_reversed(self, pivot: float) -> "FrequencySchedule":
        return FrequencySchedule(time_reverse(self.omega2_traj, pivot))

    def joined(self, other: "FrequencySchedule", t_join: float) -> "FrequencySchedule":
        """``self`` before t_join, ``other`` after it."""
        a = self.omega2_traj
        b = other.omega2_traj
        head = a.clipped(None, t_join) if a.segments else a
        tail = b.clipped(t_join, None) if b.segments else b
        return FrequencySchedule(head.splice(tail))


# ---------------------------------------------------------------------------
# piecewise propagation
# ---------------------------------------------------------------------------

class _Dense:
    """Piecewise evaluator of the state vector over [t0, t1]."""

    def __init__(self, dim):
        self.dim = dim
        self.starts: list[float] = []
        self.funcs = []
        self.end = None

    def add(self, a, b, fn):
        self.starts.append(a)
        self.funcs.append(fn)
        self.end = b

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.starts[0], self.end
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise ErmakovError(f"evaluation outside the integrated range [{lo}, {hi}]")
        idx = np.clip(np.searchsorted(self.starts, t, side="right") - 1, 0, len(self.funcs) - 1)
        out = np.empty((self.dim, t.size))
        for j in np.unique(idx):
            m = idx == j
            out[:, m] = self.funcs[j](t[m])
        return out


def _propagate(schedule, t0, t1, y0, rhs, exact, event=None):
    if not t1 > t0:
        raise ValueError("t_range must be increasing")
    dense = _Dense(len(y0))
    y = np.asarray(y0, dtype=float)
    for a, b, w2 in schedule.intervals(t0, t1):
        if w2 is not None:
            if not w2 > 0:
                raise ErmakovError(f"non-positive constant w^2 on [{a}, {b}]")
            fn = exact(a, y.copy(), math.sqrt(w2))
            dense.add(a, b, fn)
            y = fn(np.array([b]))[:, 0]
            continue
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=RTOL, atol=ATOL,
                        dense_output=True, events=event)
        if sol.status == -1:
            raise ErmakovError(f"integration failed on [{a}, {b}]: {sol.message}")
        if sol.status == 1:
            te = float(sol.t_events[0][0])
            raise ErmakovError(f"Ermakov function pinched to zero near t={te!r}")
        dense.add(a, b, sol.sol)
        y = sol.y[:, -1]
    return dense


# ---------------------------------------------------------------------------
# mode functions
# ---------------------------------------------------------------------------

@dataclass
class ModeSolution:
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    schedule: FrequencySchedule
    dense: _Dense

    def at(self, t):
        y = self.dense(t)
        return y[0] + 1j * y[1], y[2] + 1j * y[3]

    @property
    def wronskian(self) -> np.ndarray:
        return self.qdot * np.conj(self.q) - np.conj(self.qdot) * self.q

    @property
    def wronskian_drift(self) -> float:
        return float(np.max(np.abs(self.wronskian + 1j)))


def _mode_rhs(schedule):
    def rhs(t, y):
        w2 = schedule.omega2(t)
        return np.array([y[2], y[3], -w2 * y[0], -w2 * y[1]])
    return rhs


def _mode_exact(a, y, w):
    def fn(t):
        s = np.asarray(t, dtype=float) - a
        c, sn = np.cos(w * s), np.sin(w * s)
        q = y[:2, None] * c + y[2:, None] / w * sn
        p = -y[:2, None] * w * sn + y[2:, None] * c
        return np.vstack([q, p])
    return fn


def integrate_mode(schedule: FrequencySchedule, t_range, t_eval=None) -> ModeSolution:
    """Evolve the in-vacuum mode from t_range[0]."""
    t0, t1 = map(float, t_range)
    w2 = float(schedule.omega2(t0))
    if not w2 > 0:
        raise ErmakovError("w^2 must be positive at the initial time")
    w = math.sqrt(w2)
    q0 = 1.0 / math.sqrt(2.0 * w)
    y0 = [q0, 0.0, 0.0, -w * q0]
    dense = _propagate(schedule, t0, t1, y0, _mode_rhs(schedule), _mode_exact)
    t = np.linspace(t0, t1, 2001) if t_eval is None else np.asarray(t_eval, dtype=float)
    y = dense(t)
    return ModeSolution(t, y[0] + 1j * y[1], y[2] + 1j * y[3], schedule, dense)


@dataclass(frozen=True)
class BogoliubovPair:
    alpha: complex
    beta: complex

    @property
    def norm_defect(self) -> float:
        return abs(abs(self.alpha) ** 2 - abs(self.beta) ** 2 - 1.0)


def _check_constant(schedule, w_out, t_late):
    window = np.linspace(t_late - math.pi / w_out, t_late, 64)
    dev = np.max(np.abs(schedule.omega2(window) - w_out**2)) / w_out**2
    if dev > CONSTANT_TOL:
        raise ErmakovError(f"frequency not constant near t={t_late!r} (relative deviation {dev:.3e})")


def bogoliubov(sol: ModeSolution, omega_out: float | None = None,
               t_late: float | None = None) -> BogoliubovPair:
    """Project (q, dq/dt) at t_late on the out modes e^{-+i w t}/sqrt(2 w)."""
    t_late = float(sol.t[-1]) if t_late is None else float(t_late)
    w = math.sqrt(float(sol.schedule.omega2(t_late))) if omega_out is None else float(omega_out)
    _check_constant(sol.schedule, w, t_late)
    q, p = (x[0] for x in sol.at(t_late))
    u = np.exp(-1j * w * t_late) / math.sqrt(2 * w)
    du = -1j * w * u
    alpha = 1j * (np.conj(u) * p - np.conj(du) * q)
    beta = -1j * (u * p - du * q)
    return BogoliubovPair(complex(alpha), complex(beta))


def occupation(b: BogoliubovPair) -> float:
    return abs(b.beta) ** 2


@dataclass(frozen=True)
class SqueezedState:
    amplitudes: np.ndarray      # indexed by Fock number 0..2 n_max
    truncation_bound: float

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


def squeezed_amplitudes(b: BogoliubovPair, n_max: int) -> SqueezedState:
    """Fock amplitudes of the in-vacuum in the out basis (only even numbers occur)."""
    r = -np.conj(b.beta) / b.alpha
    r2 = abs(r) ** 2
    if r2 >= 1:
        raise ValueError("|beta/alpha| must be below 1")
    amp = np.zeros(2 * n_max + 1, dtype=complex)
    c0 = (1.0 - r2) ** 0.25
    a = complex(c0)
    amp[0] = a
    for n in range(1, n_max + 1):
        a = a * r * math.sqrt((2 * n - 1) / (2 * n))
        amp[2 * n] = a
    bound = c0**2 * r2 ** (n_max + 1) / (1.0 - r2)
    return SqueezedState(amp, bound)


def mean_energy(sol: ModeSolution, t, schedule: FrequencySchedule | None = None):
    """<H> = (|dq/dt|^2 + w^2 |q|^2) / 2 in the evolved vacuum."""
    schedule = schedule or sol.schedule
    q, p = sol.at(t)
    out = 0.5 * (np.abs(p) ** 2 + schedule.omega2(t) * np.abs(q) ** 2)
    return float(out[0]) if np.ndim(t) == 0 else out


def _covers(sol, a, b):
    return sol.dense.starts[0] <= a + 1e-12 and sol.dense.end >= b - 1e-12


def energy_cost_qm(eff: ModeSolution, ref, tau: float | tuple, atol: float = 1e-10) -> float:
    """Time-averaged <H_eff> - <H_ref> over (0, tau) or the given (t0, t1).

    ``ref`` is a ModeSolution or a FrequencySchedule; for a schedule the
    adiabatic value w/2 is used.
    """
    t0, t1 = (0.0, float(tau)) if np.ndim(tau) == 0 else map(float, tau)
    if not _covers(eff, t0, t1) or (isinstance(ref, ModeSolution) and not _covers(ref, t0, t1)):
        raise ValueError("solutions do not cover the requested span")
    if isinstance(ref, ModeSolution):
        h_ref, bps_ref = (lambda t: mean_energy(ref, t)), ref.schedule.bounds
    else:
        h_ref, bps_ref = (lambda t: 0.5 * ref.omega(t)), ref.bounds
    bps = np.concatenate([eff.schedule.bounds, bps_ref])
    val, _ = integrate(lambda t: mean_energy(eff, t) - h_ref(t), t0, t1, bps, atol=atol)
    return val / (t1 - t0)


# ---------------------------------------------------------------------------
# Ermakov function
# ---------------------------------------------------------------------------

@dataclass
class ErmakovSolution:
    t: np.ndarray
    rho: np.ndarray
    drho: np.ndarray
    schedule: FrequencySchedule
    dense: _Dense

    @property
    def W(self) -> np.ndarray:
        return 1.0 / self.rho**2

    def at(self, t):
        y = self.dense(t)
        return y[0], y[1]

    def derivs(self, t):
        """rho and its derivatives 1..3 (higher ones from the equation itself)."""
        r, dr = self.at(t)
        w2 = self.schedule.omega2(t)
        dw2 = self.schedule.omega2(t, 1)
        d2 = -w2 * r + r**-3
        d3 = -dw2 * r - w2 * dr - 3.0 * dr * r**-4
        return np.array([r, dr, d2, d3])

    def residual(self, t, h: float = 1e-5):
        """rho'' + w^2 rho - 1/rho^3, with rho'' from a central difference of the dense output."""
        t = np.asarray(t, dtype=float)
        _, dp = self.at(t + h)
        _, dm = self.at(t - h)
        r, _ = self.at(t)
        return (dp - dm) / (2 * h) + self.schedule.omega2(t) * r - r**-3


def _ermakov_rhs(schedule):
    def rhs(t, y):
        return np.array([y[1], -schedule.omega2(t) * y[0] + y[0] ** -3])
    return rhs


def _ermakov_exact(a, y, w):
    # a complex mode with |q| = rho/sqrt(2) and unit Wronskian evolves exactly
    r0, dr0 = y
    q0 = r0 / math.sqrt(2.0)
    p0 = (dr0 - 1j / r0) / math.sqrt(2.0)

    def fn(t):
        s = np.asarray(t, dtype=float) - a
        c, sn = np.cos(w * s), np.sin(w * s)
        q = q0 * c + p0 / w * sn
        p = -q0 * w * sn + p0 * c
        aq = np.abs(q)
        return np.vstack([math.sqrt(2.0) * aq, math.sqrt(2.0) * np.real(np.conj(q) * p) / aq])
    return fn


def integrate_ermakov(schedule: FrequencySchedule, t_range, rho0: float | None = None,
                      drho0: float = 0.0, t_eval=None) -> ErmakovSolution:
    t0, t1 = map(float, t_range)
    if rho0 is None:
        w2 = float(schedule.omega2(t0))
        if not w2 > 0:
            raise ErmakovError("w^2 must be positive at the initial time")
        rho0 = w2 ** -0.25
    if not rho0 > 0:
        raise ValueError("rho0 must be positive")
    floor = 1e-6 * rho0

    def pinch(t, y):
        return y[0] - floor
    pinch.terminal = True

    dense = _propagate(schedule, t0, t1, [rho0, drho0], _ermakov_rhs(schedule), _ermakov_exact,
                       event=pinch)
    t = np.linspace(t0, t1, 2001) if t_eval is None else np.asarray(t_eval, dtype=float)
    r, dr = dense(t)
    return ErmakovSolution(t, r, dr, schedule, dense)


@dataclass(frozen=True)
class AsymptoticFit:
    delta: float
    phi: float
    omega_fit: float
    rms: float
    mean: float     # fitted mean of w rho^2, i.e. cosh(delta)


def fit_asymptotic(sol: ErmakovSolution, omega_late: float | None = None, window=None,
                   n_samples: int = 512) -> AsymptoticFit:
    """Fit w rho^2 = cosh d - sinh d sin(2 w t + phi) on a constant-w window."""
    if window is None:
        t1 = sol.dense.end
        w = math.sqrt(float(sol.schedule.omega2(t1))) if omega_late is None else omega_late
        window = (t1 - 2 * math.pi / w, t1)
    a, b = map(float, window)
    w = math.sqrt(float(sol.schedule.omega2(b))) if omega_late is None else float(omega_late)
    t = np.linspace(a, b, n_samples)
    r, _ = sol.at(t)
    y = w * r**2
    A = np.vstack([np.ones_like(t), np.sin(2 * w * t), np.cos(2 * w * t)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    if rms > FIT_RMS_MAX:
        raise ErmakovError(f"asymptotic fit failed (rms {rms:.3e}); is w constant on the window?")
    c0, cs, cc = coef
    S = math.hypot(cs, cc)
    phi = math.atan2(-cc, -cs) if S > 0 else 0.0
    return AsymptoticFit(math.asinh(S), phi, w, rms / w, float(c0))


def effective_frequency(rho_ref: Trajectory) -> FrequencySchedule:
    """Schedule w^2 = 1/rho^4 - rho''/rho for which rho_ref solves the Ermakov equation.

    Only orders 0 and 1 of w^2 are available (order 1 uses the third derivative of rho).
    """
    if not rho_ref.segments:
        return FrequencySchedule(Trajectory.constant(rho_ref.value ** -4))
    grid = rho_ref.sample_grid()
    if np.any(rho_ref(grid) <= 0) or rho_ref.start_value <= 0 or rho_ref.end_value <= 0:
        raise ValueError("rho_ref must be positive")

    def make(piece):
        if piece.is_constant:
            return ConstantPiece(float(piece(np.array(0.0), 0)) ** -4)

        def w2(t):
            r, d2 = piece(t, 0), piece(t, 2)
            return r**-4 - d2 / r

        def dw2(t):
            r, d1, d2, d3 = (piece(t, k) for k in range(4))
            return -4 * d1 * r**-5 - d3 / r + d2 * d1 / r**2

        def unavailable(t):
            return np.full(np.shape(t), np.nan)

        return FunctionPiece([w2, dw2, unavailable, unavailable], label="omega_eff^2")

    segs = tuple(Segment(s.t_start, s.t_end, make(s.piece)) for s in rho_ref.segments)
    return FrequencySchedule(Trajectory(segs))


def adiabatic_reference(rho_ref: Trajectory) -> FrequencySchedule:
    """Schedule w = 1/rho_ref^2 whose adiabatic ground state rho_ref tracks."""
    if not rho_ref.segments:
        return FrequencySchedule(Trajectory.constant(rho_ref.value ** -4))

    def make(piece):
        if piece.is_constant:
            return ConstantPiece(float(piece(np.array(0.0), 0)) ** -4)

        def unavailable(t):
            return np.full(np.shape(t), np.nan)

        return FunctionPiece([lambda t: piece(t, 0) ** -4,
                              lambda t: -4.0 * piece(t, 1) * piece(t, 0) ** -5,
                              unavailable, unavailable], label="omega_ref^2")

    segs = tuple(Segment(s.t_start, s.t_end, make(s.piece)) for s in rho_ref.segments)
    return FrequencySchedule(Trajectory(segs))


def extrema(sol: ErmakovSolution, t_lo: float | None = None, t_hi: float | None = None,
            kind: str = "any", per_unit: int = 200):
    """Times where d rho/dt changes sign, refined by bracketing to 1e-12."""
    a = sol.dense.starts[0] if t_lo is None else t_lo
    b = sol.dense.end if t_hi is None else t_hi
    t = np.linspace(a, b, max(3, int((b - a) * per_unit) + 1))
    _, dr = sol.at(t)
    out = []
    for i in np.flatnonzero(np.sign(dr[:-1]) * np.sign(dr[1:]) < 0):
        is_max = dr[i] > 0
        if kind == "max" and not is_max or kind == "min" and is_max:
            continue
        out.append(brentq(lambda s: sol.at(s)[1][0], t[i], t[i + 1], xtol=1e-12))
    return out


def _rho_piece(sol: ErmakovSolution):
    def f(k):
        return lambda t: sol.derivs(np.ravel(t))[k].reshape(np.shape(t))
    return FunctionPiece([f(k) for k in range(4)], label="rho")


def symmetric_extension(sol: ErmakovSolution, t_n: float) -> Trajectory:
    """rho on [t0, t_n] continued by rho(2 t_n - t) on [t_n, 2 t_n - t0]."""
    t0 = sol.dense.starts[0]
    if not t0 < t_n <= sol.dense.end + 1e-12:
        raise ValueError("t_n outside the solved range")
    _, dr = sol.at(t_n)
    if abs(dr[0]) > EXTREMUM_TOL:
        raise ErmakovError(f"t_n={t_n!r} is not an extremum of rho (drho={dr[0]:.3e})")
    piece = _rho_piece(sol)
    mirrored = AffinePiece(piece, time_scale=-1.0, time_shift=2.0 * t_n)
    return Trajectory((Segment(t0, t_n, piece), Segment(t_n, 2 * t_n - t0, mirrored)))


def joint_schedule(schedule: FrequencySchedule, t_n: float) -> FrequencySchedule:
    """w_I up to t_n followed by its mirror image w_I(2 t_n - t)."""
    return schedule.joined(schedule.time_reversed(t_n), t_n)


def quench_schedule(omega0: float, omega1: float, t_quench: float = 0.0,
                    width: float | None = None) -> FrequencySchedule:
    """Steep C3 ramp standing in for a sudden jump (default width 1e-4 periods)."""
    if width is None:
        width = 1e-4 * 2 * math.pi / omega0
    return FrequencySchedule.from_omega(make_ramp(omega0, omega1, t_quench, width))


def sudden_quench_mode(omega0: float, omega1: float, t_quench: float, t):
    """Analytic mode for an instantaneous jump of the frequency at t_quench."""
    t = np.asarray(t, dtype=float)
    q0 = 1.0 / math.sqrt(2 * omega0)
    qa = q0 * np.exp(-1j * omega0 * t_quench)
    pa = -1j * omega0 * qa
    s = t - t_quench
    q_after = qa * np.cos(omega1 * s) + pa / omega1 * np.sin(omega1 * s)
    p_after = -qa * omega1 * np.sin(omega1 * s) + pa * np.cos(omega1 * s)
    q_before = q0 * np.exp(-1j * omega0 * t)
    p_before = -1j * omega0 * q_before
    return np.where(s < 0, q_before, q_after), np.where(s < 0, p_before, p_after)
