"""Completing nonadiabatic mirror motions into shortcuts to adiabaticity.

Three constructions are provided:

* ``complete_by_extension``: blend the Moore function into a straight line
  and recover the mirror worldline that produces it;
* ``complete_by_pulse``: for short pulses, fire the closed-form erasing
  pulse on the right or left mirror at one of the admissible times;
* ``complete_by_time_reversal``: append the time-reversed motion at a time
  where the late Moore derivative is mirror symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import adiabaticity, trace
from .moore import (
    AdiabaticMoore,
    MoorePair,
    decompose_periodic,
    invert_characteristic,
    residuals,
    solve,
)
from .quadrature import gauss_legendre
from .trajectory import (
    CavityProtocol,
    Trajectory,
    TrajectoryError,
    erasing_trajectory_left,
    erasing_trajectory_right,
    make_hermite,
    smoothstep7,
    time_reverse,
)

SPEED_LIMIT = 0.999
STA_Q_START_TOL = 1e-6
STA_Q_END_TOL = 1e-3
STA_AMPLITUDE_TOL = 1e-6
REVERSAL_TOL = 1e-6


class CompletionError(RuntimeError):
    """A completion could not be built for the requested parameters."""


@dataclass
class CompletionPlan:
    method: str
    source: CavityProtocol
    completed: CavityProtocol
    junction: dict = field(default_factory=dict)
    target_length: float | None = None
    moore: MoorePair | None = None

    @property
    def firing_time(self) -> float | None:
        return self.junction.get("firing_time")


# ---------------------------------------------------------------------------
# inverse engineering
# ---------------------------------------------------------------------------

def _solve_mirror(target: MoorePair, t, c, guess, scale):
    """Root X of G(t + X) - F(t - X) = c for every t (bracketed Newton)."""
    t = np.asarray(t, dtype=float)

    def h(X):
        return target.G(t + X) - target.F(t - X) - c

    step = np.full(t.shape, 0.05 * scale)
    lo = guess - step
    hi = guess + step
    for _ in range(80):
        hl, hh = h(lo), h(hi)
        bad_lo, bad_hi = hl > 0, hh < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        step = np.where(bad_lo | bad_hi, 2 * step, step)
        lo = np.where(bad_lo, lo - step, lo)
        hi = np.where(bad_hi, hi + step, hi)
    else:
        i = int(np.flatnonzero(bad_lo | bad_hi)[0])
        raise CompletionError(f"no sign change bracketing the mirror position at t={t[i]!r}; "
                              "target Moore functions are inconsistent")
    X = np.clip(guess, lo, hi)
    for _ in range(100):
        r = h(X)
        lo = np.where(r < 0, X, lo)
        hi = np.where(r > 0, X, hi)
        dr = target.G(t + X, 1) + target.F(t - X, 1)
        Xn = X - r / dr
        outside = ~np.isfinite(Xn) | (Xn <= lo) | (Xn >= hi)
        Xn = np.where(outside, 0.5 * (lo + hi), Xn)
        if np.all(np.abs(Xn - X) <= 1e-13 * np.maximum(1.0, np.abs(X))):
            X = Xn
            break
        X = Xn
    if np.max(np.abs(h(X))) > 1e-11:
        raise CompletionError("inverse engineering did not converge")
    return X


def _implicit_derivs(target: MoorePair, t, X):
    """Velocity, acceleration and jerk of X(t) from differentiating the Moore equation."""
    A = target.derivs("G", t + X)
    B = target.derivs("F", t - X)
    s = A[1] + B[1]
    x1 = (B[1] - A[1]) / s
    vp, up = 1.0 + x1, 1.0 - x1
    x2 = (B[2] * up**2 - A[2] * vp**2) / s
    x3 = (B[3] * up**3 - 3.0 * B[2] * up * x2 - A[3] * vp**3 - 3.0 * A[2] * vp * x2) / s
    return x1, x2, x3


def inverse_engineer(target: MoorePair, t_grid, which=("L", "R"), guesses=None):
    """Mirror worldlines whose Moore functions are the given targets.

    Returns ``(L_eff, R_eff)`` as C3 Hermite trajectories through the nodes
    ``t_grid`` (``None`` for a mirror not in ``which``).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    proto = target.protocol
    guesses = guesses or {}
    out = {"L": None, "R": None}
    d0 = proto.initial_length if proto is not None else 1.0
    for name in which:
        if name == "L":
            c, g = 0.0, guesses.get("L", proto.L_minus if proto is not None else 0.0)
        else:
            c, g = 2.0, guesses.get("R", proto.R_minus if proto is not None else 1.0)
        g = np.broadcast_to(np.asarray(g, dtype=float), t_grid.shape).copy()
        traj = _hermite_mirror(target, t_grid, c, g, d0, name)
        # second pass: put nodes where t -+ X(t) meets a kink of the targets, so no
        # Hermite cell straddles a jump in the fourth derivative of X
        grid = _with_kinks(target, traj, t_grid)
        if grid.size != t_grid.size or np.any(grid != t_grid):
            traj = _hermite_mirror(target, grid, c, traj(grid), d0, name)
        out[name] = traj
    return out["L"], out["R"]


def _hermite_mirror(target, t, c, guess, scale, name):
    X = _solve_mirror(target, t, c, guess, scale)
    x1, x2, x3 = _implicit_derivs(target, t, X)
    vmax = float(np.max(np.abs(x1)))
    if vmax > SPEED_LIMIT:
        raise CompletionError(f"inverse-engineered {name} mirror is superluminal "
                              f"(max |dX/dt| = {vmax:.6f})")
    return make_hermite(t, X, x1, x2, x3)


def _with_kinks(target, traj, t_grid):
    t0, t1 = float(t_grid[0]), float(t_grid[-1])
    if t_grid.size < 2:
        return t_grid
    x = traj(t_grid)
    new = []
    for which, sign in (("G", 1), ("F", -1)):
        z = t_grid + sign * x
        bps = target.breakpoints(which, float(z.min()), float(z.max()))
        if bps.size:
            new.append(np.atleast_1d(invert_characteristic(traj, sign, bps)))
    if not new:
        return t_grid
    h = float(np.min(np.diff(t_grid)))
    kinks = np.unique(np.concatenate(new))
    kinks = kinks[(kinks > t0 + 0.25 * h) & (kinks < t1 - 0.25 * h)]
    if kinks.size == 0:
        return t_grid
    far = np.min(np.abs(t_grid[:, None] - kinks[None, :]), axis=1) > 0.25 * h
    far[[0, -1]] = True
    return np.unique(np.concatenate([t_grid[far], kinks]))


def _grid(t0, t1, h):
    n = max(2, int(np.ceil((t1 - t0) / h)) + 1)
    return np.linspace(t0, t1, n)


# ---------------------------------------------------------------------------
# extension of the Moore function
# ---------------------------------------------------------------------------

class ExtendedMoore(MoorePair):
    """Moore pair equal to ``base`` up to z_a and linear with slope ``slope`` beyond z_b.

    On the window the derivative is blended, (1 - delta) F' + delta * slope, with the
    C3 step delta; the value is the running integral of the blended derivative.
    The blend is applied to F and G alike, so it is meant for a static left mirror.
    """

    def __init__(self, base: MoorePair, z_a: float, z_b: float, slope: float,
                 cells: int = 1024, gl_order: int = 10):
        if not z_b > z_a:
            raise ValueError("extension window must have z_b > z_a")
        if not slope > 0:
            raise ValueError("slope must be positive")
        self.base = base
        self.z_a, self.z_b, self.slope = float(z_a), float(z_b), float(slope)
        self.w = self.z_b - self.z_a
        self.protocol = base.protocol
        self._x, self._wts = gauss_legendre(gl_order)
        self._tables = {}
        for which in ("F", "G"):
            bps = base.breakpoints(which, self.z_a, self.z_b)
            nodes = np.unique(np.concatenate([np.linspace(self.z_a, self.z_b, cells + 1), bps]))
            cell = self._gl(which, nodes[:-1], nodes[1:])
            cum = np.concatenate([[0.0], np.cumsum(cell)])
            start = float(base.derivs(which, np.array([self.z_a]))[0, 0])
            self._tables[which] = (nodes, cum, start)

    def _blend(self, which, z):
        """Blended derivatives 1..3 on the window."""
        d = self.base.derivs(which, z)
        x = (z - self.z_a) / self.w
        s0 = smoothstep7(x)
        s1 = smoothstep7(x, 1) / self.w
        s2 = smoothstep7(x, 2) / self.w**2
        k = self.slope
        f1 = (1 - s0) * d[1] + s0 * k
        f2 = -s1 * d[1] + (1 - s0) * d[2] + s1 * k
        f3 = -s2 * d[1] - 2 * s1 * d[2] + (1 - s0) * d[3] + s2 * k
        return f1, f2, f3

    def _gl(self, which, a, b):
        half = 0.5 * (b - a)
        x = 0.5 * (a + b)[:, None] + half[:, None] * self._x[None, :]
        f1 = self._blend(which, x.ravel())[0].reshape(x.shape)
        return half * (f1 @ self._wts)

    def derivs(self, which, z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.empty((4, z.size))
        nodes, cum, start = self._tables[which]
        early = z <= self.z_a
        late = z >= self.z_b
        mid = ~(early | late)
        if early.any():
            out[:, early] = self.base.derivs(which, z[early])
        if mid.any():
            zm = z[mid]
            k = np.clip(np.searchsorted(nodes, zm, side="right") - 1, 0, nodes.size - 2)
            out[0, mid] = start + cum[k] + self._gl(which, nodes[k], zm)
            out[1:, mid] = self._blend(which, zm)
        if late.any():
            out[0, late] = start + cum[-1] + self.slope * (z[late] - self.z_b)
            out[1, late] = self.slope
            out[2:, late] = 0.0
        return out

    def breakpoints(self, which, lo, hi):
        # base kinks persist inside the window through the (1 - delta) F' term
        b = self.base.breakpoints(which, lo, min(hi, self.z_b))
        extra = np.array([self.z_a, self.z_b])
        extra = extra[(extra >= lo) & (extra <= hi)]
        return np.unique(np.concatenate([b, extra]))


def complete_by_extension(protocol: CavityProtocol, slope_target: float | None = None,
                          window: tuple[float, float] | None = None,
                          final_length: float | None = None) -> CompletionPlan:
    """Blend the solved Moore function into a line and inverse-engineer the right mirror.

    The left mirror must be static at 0 (so G = F). The final mirror position is
    1/slope_target; by default the cavity keeps its post-motion length.
    """
    if protocol.left.segments or protocol.L_minus != 0.0:
        raise CompletionError("extension completion requires a static left mirror at L = 0")
    if final_length is not None:
        slope_target = 1.0 / final_length
    pair = solve(protocol)
    R_plus = protocol.R_plus
    if slope_target is None:
        slope_target = 1.0 / R_plus
    if not slope_target > 0:
        raise CompletionError("slope_target must be positive")
    t_e = protocol.t_motion_end
    if t_e is None:
        return CompletionPlan("extension", protocol, protocol, {"window": None},
                              protocol.final_length, pair)
    z_min = t_e + R_plus
    if window is None:
        window = (z_min, z_min + 2.0 * R_plus)
    z_a, z_b = map(float, window)
    if z_a < z_min - 1e-12:
        raise CompletionError(f"window must start beyond the last motion image z={z_min}")
    if not z_b > z_a:
        raise CompletionError("window must have z_b > z_a")
    ext = ExtendedMoore(pair, z_a, z_b, slope_target)
    zs = np.linspace(z_a, z_b, 2001)
    if np.any(ext.F(zs, 1) <= 0):
        raise CompletionError("blended Moore derivative is not positive; widen the window")
    R_end = 1.0 / slope_target
    t_a = float(invert_characteristic(protocol.right, 1, z_a))
    t_b = z_b + R_end
    h = min(R_plus, R_end) / 200.0
    _, R_tail = inverse_engineer(ext, _grid(t_a, t_b, h), which=("R",),
                                 guesses={"R": np.linspace(R_plus, R_end, _grid(t_a, t_b, h).size)})
    right = protocol.right.clipped(None, t_a).splice(R_tail) if protocol.right.segments else R_tail
    completed = CavityProtocol(protocol.left, right)
    try:
        completed.validate()
    except TrajectoryError as exc:
        raise CompletionError(f"completed protocol invalid: {exc}") from exc
    ext.protocol = completed
    junction = {"window": (z_a, z_b), "t_a": t_a, "t_b": t_b}
    return CompletionPlan("extension", protocol, completed, junction, R_end, ext)


def shortcut_from_reference(L_ref: Trajectory, R_ref: Trajectory, spacing: float | None = None):
    """Effective worldlines whose field ends as if the reference had been followed adiabatically.

    Returns ``(protocol, adiabatic_pair)``; the pair is the target Moore functions.
    """
    target = AdiabaticMoore(L_ref, R_ref)
    ref = target.protocol
    span = ref.motion_span
    if span is None:
        return ref, target
    reach_lo = max(abs(ref.L_minus), abs(ref.R_minus))
    reach_hi = max(abs(ref.L_plus), abs(ref.R_plus))
    grid = _grid(span[0] - reach_lo, span[1] + reach_hi,
                 spacing or min(ref.initial_length, ref.final_length) / 200.0)
    which = ("R",) if not L_ref.segments else ("L", "R")
    L_eff, R_eff = inverse_engineer(target, grid, which=which)
    protocol = CavityProtocol(L_eff if L_eff is not None else L_ref, R_eff)
    protocol.validate()
    return protocol, target


# ---------------------------------------------------------------------------
# short-pulse erasure
# ---------------------------------------------------------------------------

def complete_by_pulse(R_I: Trajectory, which: str = "right", n: int = 1,
                      firing_time: float | None = None, L_minus: float = 0.0) -> CompletionPlan:
    """Append the closed-form erasing pulse; no Moore solve is needed."""
    span = R_I.motion_span
    if span is None:
        raise CompletionError("source trajectory has no motion")
    tau = span[1] - span[0]
    R_minus, R_plus = R_I.start_value, R_I.end_value
    source = CavityProtocol.right_only(R_I, L_minus)
    if which == "right":
        R_II, t_n = erasing_trajectory_right(R_I, R_minus, R_plus, tau, n, firing_time)
        if t_n < span[1] - 1e-12:
            raise CompletionError("firing time overlaps the initial pulse")
        completed = CavityProtocol(Trajectory.constant(L_minus), R_I.clipped(*span).splice(R_II))
    elif which == "left":
        L_II, t_n = erasing_trajectory_left(R_I, R_minus, R_plus, tau, n, L_minus, firing_time)
        if t_n < span[1] - 1e-12:
            raise CompletionError("firing time overlaps the initial pulse")
        completed = CavityProtocol(L_II, R_I)
    else:
        raise ValueError("which must be 'right' or 'left'")
    completed.validate()
    final = completed.final_length
    return CompletionPlan(f"pulse_{which}", source, completed,
                          {"firing_time": t_n, "n": n, "tau": tau}, final)


# ---------------------------------------------------------------------------
# time reversal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReversalCheck:
    holds: bool
    z_tilde: float | None
    deviation: float
    period: float
    constant: float | None = None


def _reversal_residual(pair, zt, s):
    """F'(z) - G'(zt - z) on the pivot window z = zt/2 + s, and its zt-derivative."""
    z1 = zt / 2.0 + s
    z2 = zt / 2.0 - s
    F = pair.derivs("F", z1)
    G = pair.derivs("G", z2)
    return F[1] - G[1], 0.5 * (F[2] - G[2])


def check_reversal_condition(pair: MoorePair, tau: float | None = None, n_coarse: int = 400,
                             n_window: int = 257, max_refine: int = 6) -> ReversalCheck:
    """Look for z~ with F'(z) = G'(z~ - z) on the late static epoch.

    The window is the state at the pivot time z~/2, i.e. z in [z~/2 - R+, z~/2 - L+],
    and z~ is searched over one period 2 d+ starting at twice the motion end, so
    the pivot lies after the motion has stopped.
    """
    proto = pair.protocol
    t_e = proto.t_motion_end if tau is None else float(tau)
    P = 2.0 * proto.final_length
    if t_e is None:
        return ReversalCheck(True, 0.0, 0.0, P, None)
    s = np.linspace(-proto.R_plus, -proto.L_plus, n_window)
    z_s = 2.0 * t_e
    cand = z_s + P * np.arange(n_coarse) / n_coarse
    zz1 = (cand[:, None] / 2.0 + s[None, :]).ravel()
    zz2 = (cand[:, None] / 2.0 - s[None, :]).ravel()
    dev = np.abs(pair.F(zz1, 1) - pair.G(zz2, 1)).reshape(cand.size, s.size).max(axis=1)
    # refine every coarse local minimum with Gauss-Newton on the residual vector
    cyc = np.concatenate([dev[-1:], dev, dev[:1]])
    local = np.flatnonzero((cyc[1:-1] <= cyc[:-2]) & (cyc[1:-1] <= cyc[2:]))
    local = local[np.argsort(dev[local], kind="stable")][:max_refine]
    best = []
    for i in local:
        zt = float(cand[i])
        for _ in range(50):
            r, J = _reversal_residual(pair, zt, s)
            jj = float(J @ J)
            if jj == 0:
                break
            step = -float(J @ r) / jj
            step = float(np.clip(step, -P / n_coarse, P / n_coarse))
            zt += step
            if abs(step) < 1e-15 * max(1.0, abs(zt)):
                break
        r, _ = _reversal_residual(pair, zt, s)
        zt = float(z_s + np.mod(zt - z_s, P))
        best.append((float(np.max(np.abs(r))), zt))
    ok = sorted(zt for d, zt in best if d < REVERSAL_TOL)
    dmin = min(d for d, _ in best) if best else float(dev.min())
    if not ok:
        return ReversalCheck(False, None, dmin, P, None)
    zt = ok[0]
    r, _ = _reversal_residual(pair, zt, s)
    const = float(np.mean(pair.F(zt / 2.0 + s) + pair.G(zt / 2.0 - s)))
    return ReversalCheck(True, zt, float(np.max(np.abs(r))), P, const)


def reversal_firing_times(protocol: CavityProtocol, check: ReversalCheck, count: int = 3):
    """Start times of the reversed motion for the first ``count`` admissible z~."""
    t_e = protocol.t_motion_end
    return [check.z_tilde + k * check.period - t_e for k in range(count)]


def complete_by_time_reversal(protocol: CavityProtocol, n: int = 0,
                              firing_time: float | None = None,
                              check: ReversalCheck | None = None) -> CompletionPlan:
    """Follow the motion by its time reverse, started at the n-th admissible time.

    With ``firing_time`` the reversed motion starts there regardless of
    admissibility (used to show the discreteness of the valid times).
    """
    span = protocol.motion_span
    if span is None:
        return CompletionPlan("reversal", protocol, protocol, {"z_tilde": None}, None)
    t_s, t_e = span
    if firing_time is None:
        if check is None:
            check = check_reversal_condition(solve(protocol))
        if not check.holds:
            raise CompletionError(f"reversal condition fails (min deviation {check.deviation:.3e})")
        z_tilde = check.z_tilde + n * check.period
    else:
        z_tilde = float(firing_time) + t_e
    pivot = 0.5 * z_tilde
    if pivot < t_e - 1e-12:
        raise CompletionError("no admissible firing time: reversed motion would overlap the source")

    def joined(traj):
        if not traj.segments:
            return traj
        return traj.clipped(t_s, t_e).splice(time_reverse(traj.clipped(t_s, t_e), pivot))

    completed = CavityProtocol(joined(protocol.left), joined(protocol.right))
    completed.validate()
    junction = {"z_tilde": z_tilde, "pivot": pivot, "firing_time": z_tilde - t_e}
    return CompletionPlan("reversal", protocol, completed, junction, completed.final_length)


def reverse_protocol(protocol: CavityProtocol) -> CavityProtocol:
    """Both mirrors time-reversed about the midpoint of the motion."""
    span = protocol.motion_span
    if span is None:
        return protocol
    return protocol.time_reversed(0.5 * (span[0] + span[1]))


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def verify_sta(protocol: CavityProtocol, pair: MoorePair | None = None, n_samples: int = 101):
    """Decide whether the protocol returns the field to the instantaneous vacuum.

    Returns ``(is_sta, trace)``; the trace spans from one initial length before
    the motion to one final length after it.
    """
    if pair is None:
        pair = solve(protocol)
    span = protocol.motion_span
    t_s, t_e = span if span is not None else (0.0, 0.0)
    ts = np.linspace(t_s - protocol.initial_length, t_e + protocol.final_length, n_samples)
    tr = trace(pair, ts)
    amp = decompose_periodic(pair, t_e).amplitude
    is_sta = (abs(tr.Q[0] - 1.0) < STA_Q_START_TOL and abs(tr.Q[-1] - 1.0) < STA_Q_END_TOL
              and amp < STA_AMPLITUDE_TOL)
    return bool(is_sta), tr


def final_adiabaticity(protocol: CavityProtocol, pair: MoorePair | None = None) -> float:
    """Q one final length after the motion stops (the field is static from then on)."""
    if pair is None:
        pair = solve(protocol)
    t_e = protocol.t_motion_end or 0.0
    return float(adiabaticity(pair, t_e + protocol.final_length))


def completion_summary(plan: CompletionPlan) -> dict:
    """Numbers written to ``completion.json``."""
    pair = plan.moore if plan.moore is not None else solve(plan.completed)
    proto = plan.completed
    span = proto.motion_span
    t_s, t_e = span if span is not None else (0.0, 0.0)
    q_start = float(adiabaticity(pair, t_s - proto.initial_length))
    q_end = float(adiabaticity(pair, t_e + proto.final_length))
    ts = np.linspace(t_s - proto.initial_length, t_e + proto.final_length, 2001)
    res = residuals(pair, ts)
    out = {
        "method": plan.method,
        "final_length": proto.final_length,
        "Q_start": q_start,
        "Q_end": q_end,
        "max_residual": max(res),
        "max_speed": proto.max_speed(),
    }
    if plan.firing_time is not None:
        out["firing_time"] = plan.firing_time
    if "window" in plan.junction and plan.junction["window"] is not None:
        out["window"] = list(plan.junction["window"])
    if "z_tilde" in plan.junction:
        out["z_tilde"] = plan.junction["z_tilde"]
    return out


__all__ = [
    "CompletionError", "CompletionPlan", "ExtendedMoore", "ReversalCheck",
    "check_reversal_condition", "complete_by_extension", "complete_by_pulse",
    "complete_by_time_reversal", "completion_summary", "final_adiabaticity",
    "inverse_engineer", "reversal_firing_times", "reverse_protocol",
    "shortcut_from_reference", "verify_sta",
]
