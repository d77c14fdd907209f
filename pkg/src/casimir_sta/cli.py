"""Configuration-driven command line entry point.

Usage::

    casimir-sta simulate|complete|ermakov|sweep --config FILE --out DIR [--dump-moore]

The config is INI-style text (sections of ``key = value``). Exit status is 0 on
success, 2 when the config is invalid and 3 when a computation fails; in the
last case ``error.json`` is written to the output directory.
"""
from __future__ import annotations

import argparse
import configparser
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .energy import energy_cost, trace
from .ermakov import (
    ErmakovError,
    FrequencySchedule,
    bogoliubov,
    effective_frequency,
    extrema,
    fit_asymptotic,
    integrate_ermakov,
    integrate_mode,
    joint_schedule,
    occupation,
    quench_schedule,
)
from .moore import AdiabaticMoore, MooreError, solve
from .quadrature import QuadratureError
from .sta import CompletionError, complete_by_extension, complete_by_pulse
from .sta import complete_by_time_reversal, completion_summary, final_adiabaticity
from .trajectory import (
    CavityProtocol,
    Trajectory,
    TrajectoryError,
    make_cosine_pulse,
    make_hermite,
    make_polynomial_pulse,
    make_ramp,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
MODES = ("simulate", "complete", "ermakov", "sweep")

# section -> key -> (type, default)
SCHEMA = {
    "run": {"mode": (str, None)},
    "cavity": {"L_minus": (float, 0.0), "R_minus": (float, 1.0)},
    "trajectory": {"kind": (str, "static"), "epsilon": (float, None), "tau": (float, None),
                   "A": (float, None), "omega": (float, None), "t0": (float, 0.0),
                   "path": (str, None)},
    "completion": {"method": (str, "none"), "final_length": (float, None),
                   "slope_target": (float, None), "window_start": (float, None),
                   "window_end": (float, None), "mirror": (str, "right"), "n": (int, None),
                   "firing_time": (float, None)},
    "sampling": {"t_start": (float, 0.0), "t_end": (float, None), "dt": (float, 0.05)},
    "ermakov": {"schedule": (str, "quench"), "omega_minus": (float, 1.0),
                "omega_plus": (float, 2.0), "t_quench": (float, 1.0), "width": (float, None),
                "duration": (float, 2.0), "t_end": (float, 20.0), "dt": (float, 0.01),
                "extension": (bool, False)},
    "sweep": {"base": (str, None), "workers": (int, 1)},
    "output": {"energy_cost": (bool, False), "dump_moore": (bool, False)},
}
_RANGE = re.compile(r"^\s*([^:]+):([^:]+):([^:]+)\s*$")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the key path."""


@dataclass(frozen=True)
class RunConfig:
    mode: str
    values: dict = field(default_factory=dict)
    ranged: tuple | None = None          # (section.key, values)

    def get(self, path: str):
        sec, key = path.split(".")
        return self.values[sec][key]

    def with_value(self, path: str, value) -> "RunConfig":
        sec, key = path.split(".")
        vals = {s: dict(v) for s, v in self.values.items()}
        vals[sec][key] = value
        return replace(self, values=vals, ranged=None)


# ---------------------------------------------------------------------------
# parsing and validation
# ---------------------------------------------------------------------------

def _convert(path, typ, raw):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "yes", "true", "on"):
                return True
            if low in ("0", "no", "false", "off"):
                return False
            raise ValueError
        if typ is int:
            return int(raw)
        if typ is float:
            return float(_expr(raw))
        return raw.strip()
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{path}: cannot read {raw!r} as {typ.__name__}") from None


def _expr(raw: str) -> float:
    """A float literal or a product/quotient of literals and ``pi``, e.g. ``2*pi/1.5``."""
    parts = re.split(r"([*/])", raw.replace(" ", ""))
    val = None
    op = "*"
    for i, tok in enumerate(parts):
        if i % 2:
            op = tok
            continue
        sign = -1.0 if tok.startswith("-") else 1.0
        body = tok.lstrip("+-")
        x = sign * (math.pi if body == "pi" else float(body))
        val = x if val is None else (val * x if op == "*" else val / x)
    return val


def _parse_range(path, typ, raw):
    m = _RANGE.match(raw)
    if m:
        a, b = (_convert(path, float, m.group(i)) for i in (1, 2))
        n = _convert(path, int, m.group(3))
        if n < 0:
            raise ConfigError(f"{path}: range count must be non-negative")
        vals = np.linspace(a, b, n) if n else np.empty(0)
        return [typ(v) for v in vals]
    if "," in raw:
        return [_convert(path, typ, part) for part in raw.split(",") if part.strip()]
    return None


def parse_config(text: str, mode: str | None = None) -> RunConfig:
    """Parse and validate config text; ``mode`` overrides ``[run] mode``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.ParsingError as exc:
        if getattr(exc, "errors", None):
            lineno, line = exc.errors[0]
            raise ConfigError(f"syntax error: line {lineno}: cannot parse {line.strip()}") from None
        raise ConfigError(f"syntax error: line {exc.lineno}: expected a [section] header"
                          ) from None
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f"line {line}: " if line else ""
        raise ConfigError(f"syntax error: {where}{exc.message if hasattr(exc, 'message') else exc}"
                          ) from None
    values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    ranged = []
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{sec}: unknown section")
        for key, raw in cp.items(sec):
            path = f"{sec}.{key}"
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{path}: unknown key")
            typ = SCHEMA[sec][key][0]
            rng = _parse_range(path, typ, raw) if typ in (float, int) else None
            if rng is not None:
                ranged.append((path, rng))
                values[sec][key] = rng[0] if rng else SCHEMA[sec][key][1]
            else:
                values[sec][key] = _convert(path, typ, raw)
    mode = mode or values["run"]["mode"]
    if mode not in MODES:
        raise ConfigError(f"run.mode: must be one of {', '.join(MODES)}")
    if values["run"]["mode"] not in (None, mode):
        raise ConfigError(f"run.mode: config says {values['run']['mode']!r} but {mode!r} requested")
    if mode == "sweep":
        if len(ranged) != 1:
            raise ConfigError(f"sweep: exactly one ranged parameter required, found {len(ranged)}")
    elif ranged:
        raise ConfigError(f"{ranged[0][0]}: ranged values are only allowed in sweep mode")
    cfg = RunConfig(mode, values, (ranged[0][0], tuple(ranged[0][1])) if ranged else None)
    if mode == "sweep":
        for v in cfg.ranged[1]:
            validate(cfg.with_value(cfg.ranged[0], v), sweep_base(cfg))
    else:
        validate(cfg, mode)
    return cfg


def sweep_base(cfg: RunConfig) -> str:
    base = cfg.get("sweep.base")
    if base is None:
        base = "complete" if cfg.get("completion.method") != "none" else "simulate"
    if base not in ("simulate", "complete"):
        raise ConfigError("sweep.base: must be simulate or complete")
    return base


def _need(cfg, path, cond, msg):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def validate(cfg: RunConfig, mode: str) -> None:
    """Check every precondition that can be checked without solving anything."""
    if mode == "ermakov":
        e = cfg.values["ermakov"]
        _need(cfg, "ermakov.schedule", e["schedule"] in ("constant", "quench", "effective"),
              "must be constant, quench or effective")
        _need(cfg, "ermakov.omega_minus", e["omega_minus"] > 0, "omega_minus must be positive")
        _need(cfg, "ermakov.omega_plus", e["omega_plus"] > 0, "omega_plus must be positive")
        _need(cfg, "ermakov.duration", e["duration"] > 0, "duration must be positive")
        _need(cfg, "ermakov.dt", e["dt"] > 0, "dt must be positive")
        _need(cfg, "ermakov.t_end", e["t_end"] > 0, "t_end must be positive")
        if e["width"] is not None:
            _need(cfg, "ermakov.width", e["width"] > 0, "width must be positive")
        return
    c = cfg.values["cavity"]
    _need(cfg, "cavity.R_minus", c["R_minus"] > c["L_minus"], "R_minus must exceed L_minus")
    t = cfg.values["trajectory"]
    kind = t["kind"]
    _need(cfg, "trajectory.kind", kind in ("static", "polynomial", "cosine", "file"),
          "must be static, polynomial, cosine or file")
    if kind == "polynomial":
        _need(cfg, "trajectory.epsilon", t["epsilon"] is not None, "epsilon is required")
        _need(cfg, "trajectory.epsilon", 0 < t["epsilon"] < 1, "epsilon must lie in (0,1)")
        _need(cfg, "trajectory.tau", t["tau"] is not None and t["tau"] > 0,
              "tau must be positive")
    elif kind == "cosine":
        _need(cfg, "trajectory.A", t["A"] is not None and t["A"] > 0, "A must be positive")
        _need(cfg, "trajectory.omega", t["omega"] is not None and t["omega"] > 0,
              "omega must be positive")
    elif kind == "file":
        _need(cfg, "trajectory.path", t["path"] and Path(t["path"]).is_file(),
              "knot file not found")
    try:
        right = build_right(cfg)
    except (TrajectoryError, ValueError) as exc:
        raise ConfigError(f"trajectory: {exc}") from None
    comp = cfg.values["completion"]
    method = comp["method"]
    _need(cfg, "completion.method", method in ("none", "extension", "pulse", "reverse"),
          "must be none, extension, pulse or reverse")
    if mode == "complete":
        _need(cfg, "completion.method", method != "none", "complete mode needs a method")
        _need(cfg, "trajectory.kind", kind != "static", "nothing to complete for a static cavity")
    if method == "extension":
        _need(cfg, "cavity.L_minus", c["L_minus"] == 0.0,
              "extension completion needs the left mirror at 0")
        for key in ("final_length", "slope_target"):
            if comp[key] is not None:
                _need(cfg, f"completion.{key}", comp[key] > 0, f"{key} must be positive")
    if method == "pulse":
        _need(cfg, "completion.mirror", comp["mirror"] in ("right", "left"), "must be right or left")
        if comp["n"] is not None:
            _need(cfg, "completion.n", comp["n"] >= 1, "n must be at least 1")
        span = right.motion_span
        if span is not None:
            tau = span[1] - span[0]
            Rm, Rp = right.start_value, right.end_value
            _need(cfg, "trajectory.tau", tau <= Rm + 1e-12 and tau <= Rp + 1e-12,
                  f"short-pulse condition violated: tau={tau} exceeds R_minus={Rm} or R_plus={Rp}")
    if method == "reverse" and comp["n"] is not None:
        _need(cfg, "completion.n", comp["n"] >= 0, "n must be non-negative")
    s = cfg.values["sampling"]
    _need(cfg, "sampling.dt", s["dt"] > 0, "dt must be positive")
    if s["t_end"] is not None:
        _need(cfg, "sampling.t_end", s["t_end"] > s["t_start"], "t_end must exceed t_start")


# ---------------------------------------------------------------------------
# building objects
# ---------------------------------------------------------------------------

def build_right(cfg: RunConfig) -> Trajectory:
    c, t = cfg.values["cavity"], cfg.values["trajectory"]
    kind = t["kind"]
    if kind == "static":
        return Trajectory.constant(c["R_minus"])
    if kind == "polynomial":
        traj = make_polynomial_pulse(c["R_minus"], t["epsilon"], t["tau"])
    elif kind == "cosine":
        traj = make_cosine_pulse(c["R_minus"], t["A"], t["omega"], t["tau"])
    else:
        nodes, x, d1, d2, d3 = io.read_knots(t["path"])
        traj = make_hermite(nodes, x, d1, d2, d3)
        traj.validate(mirror=True)
        return traj
    return traj.shifted(t["t0"]) if t["t0"] else traj


def build_protocol(cfg: RunConfig) -> CavityProtocol:
    proto = CavityProtocol.right_only(build_right(cfg), cfg.get("cavity.L_minus"))
    proto.validate()
    return proto


def build_plan(cfg: RunConfig, proto: CavityProtocol):
    comp = cfg.values["completion"]
    method = comp["method"]
    if method == "extension":
        window = None
        if comp["window_start"] is not None or comp["window_end"] is not None:
            if comp["window_start"] is None or comp["window_end"] is None:
                raise ConfigError("completion.window_start: give both window ends")
            window = (comp["window_start"], comp["window_end"])
        return complete_by_extension(proto, comp["slope_target"], window, comp["final_length"])
    if method == "pulse":
        return complete_by_pulse(proto.right, comp["mirror"], comp["n"] or 1,
                                 comp["firing_time"], proto.L_minus)
    return complete_by_time_reversal(proto, comp["n"] or 0, comp["firing_time"])


def _time_grid(cfg, proto):
    s = cfg.values["sampling"]
    t0 = s["t_start"]
    t1 = s["t_end"]
    if t1 is None:
        t_e = proto.t_motion_end
        t1 = 10.0 if t_e is None else t_e + 2.0 * proto.final_length
    n = int(round((t1 - t0) / s["dt"])) + 1
    return np.linspace(t0, t1, max(n, 2))


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def _field_run(cfg, proto, pair, out: Path, dump_moore: bool) -> dict:
    ts = _time_grid(cfg, proto)
    tr = trace(pair, ts)
    io.write_timeseries(out / "timeseries.csv", pair, tr)
    if dump_moore:
        d = max(proto.initial_length, proto.final_length)
        z = np.linspace(ts[0] - d, ts[-1] + d, ts.size)
        io.write_moore(out / "moore.csv", pair, z)
    summary = {
        "Q_start": tr.Q[0],
        "Q_final": tr.Q[-1],
        "Q_end": final_adiabaticity(proto, pair),
        "max_residual_left": tr.residual_report[0],
        "max_residual_right": tr.residual_report[1],
        "max_speed": proto.max_speed(),
        "initial_length": proto.initial_length,
        "final_length": proto.final_length,
    }
    span = proto.motion_span
    if cfg.get("output.energy_cost") and span is not None:
        ref = AdiabaticMoore(proto.left, proto.right)
        rep = energy_cost(pair, ref, span, span)
        summary["delta_W"] = rep.delta_W
    return summary


def run_simulate(cfg, out: Path, dump_moore=False) -> dict:
    proto = build_protocol(cfg)
    return {"mode": "simulate", **_field_run(cfg, proto, solve(proto), out, dump_moore)}


def run_complete(cfg, out: Path, dump_moore=False) -> dict:
    proto = build_protocol(cfg)
    plan = build_plan(cfg, proto)
    comp = completion_summary(plan)
    io.write_json(out / "completion.json", comp)
    pair = solve(plan.completed)
    summary = {"mode": "complete", "method": plan.method,
               **_field_run(cfg, plan.completed, pair, out, dump_moore)}
    for key in ("firing_time", "z_tilde", "window"):
        if key in comp:
            summary[key] = comp[key]
    return summary


def build_schedule(cfg) -> FrequencySchedule:
    e = cfg.values["ermakov"]
    w0, w1 = e["omega_minus"], e["omega_plus"]
    if e["schedule"] == "constant":
        return FrequencySchedule.constant(w0)
    if e["schedule"] == "quench":
        return quench_schedule(w0, w1, e["t_quench"], e["width"])
    rho = make_ramp(w0 ** -0.5, w1 ** -0.5, e["t_quench"], e["duration"])
    return effective_frequency(rho)


def run_ermakov(cfg, out: Path, dump_moore=False) -> dict:
    e = cfg.values["ermakov"]
    sched = build_schedule(cfg)
    t_end = e["t_end"]
    summary = {"mode": "ermakov", "schedule": e["schedule"], "min_omega2": sched.min_omega2,
               "omega2_negative": sched.has_negative}
    if e["extension"]:
        first = integrate_ermakov(sched, (0.0, t_end))
        after = float(sched.bounds[-1]) if sched.bounds.size else 0.0
        peaks = extrema(first, after + 1e-9, kind="max")
        if not peaks:
            raise ErmakovError("no maximum of rho after the schedule settles; extend t_end")
        t_n = peaks[0]
        sched = joint_schedule(sched, t_n)
        t_end = max(t_end, 2 * t_n + (t_end - t_n))
        summary["t_n"] = t_n
    n = int(math.ceil(t_end / e["dt"] - 1e-9))
    t_end = n * e["dt"]
    ts = np.linspace(0.0, t_end, n + 1)
    erm = integrate_ermakov(sched, (0.0, t_end), t_eval=ts)
    mode = integrate_mode(sched, (0.0, t_end), t_eval=ts)
    io.write_ermakov(out / "ermakov.csv", erm, mode)
    b = bogoliubov(mode)
    fit = fit_asymptotic(erm)
    summary.update({
        "beta2": occupation(b),
        "alpha_abs2_minus_beta_abs2": abs(b.alpha) ** 2 - abs(b.beta) ** 2,
        "wronskian_drift": mode.wronskian_drift,
        "delta": fit.delta,
        "phi": fit.phi,
        "cosh_delta": math.cosh(fit.delta),
        "omega_final": sched.omega_plus,
    })
    return summary


RUNNERS = {"simulate": run_simulate, "complete": run_complete, "ermakov": run_ermakov}
NUMERIC_ERRORS = (MooreError, QuadratureError, CompletionError, ErmakovError, TrajectoryError,
                  ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError)


def _error_record(exc) -> dict:
    rec = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("interval", "z"):
        v = getattr(exc, attr, None)
        if v is not None:
            rec[attr] = np.asarray(v, dtype=float).tolist()
    return rec


def run_single(cfg: RunConfig, mode: str, out: Path, dump_moore=False) -> tuple[int, dict]:
    out.mkdir(parents=True, exist_ok=True)
    try:
        summary = RUNNERS[mode](cfg, out, dump_moore)
    except ConfigError:
        raise
    except NUMERIC_ERRORS as exc:
        rec = _error_record(exc)
        io.write_json(out / "error.json", rec)
        return EXIT_NUMERIC, rec
    io.write_json(out / "summary.json", summary)
    return EXIT_OK, summary


def _point(args):
    cfg, mode, out, dump = args
    return run_single(cfg, mode, out, dump)


def sweep(cfg: RunConfig, out: Path, dump_moore=False) -> int:
    """One run per value of the ranged parameter; aggregate in ``sweep.csv``."""
    path, vals = cfg.ranged
    base = sweep_base(cfg)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg.with_value(path, v), base, out / f"point_{i:04d}", dump_moore)
            for i, v in enumerate(vals)]
    workers = max(1, cfg.get("sweep.workers"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point, jobs))
    else:
        results = [_point(j) for j in jobs]
    status = EXIT_OK
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"index,{path},Q_end,status\n")
        for i, (v, (code, rec)) in enumerate(zip(vals, results)):
            q = io.fmt(rec.get("Q_end")) if code == EXIT_OK else ""
            fh.write(f"{i},{io.fmt(v)},{q},{'ok' if code == EXIT_OK else 'error'}\n")
            if code != EXIT_OK:
                status = EXIT_NUMERIC
    io.write_json(out / "summary.json", {"mode": "sweep", "base": base, "parameter": path,
                                         "points": len(vals), "failed": sum(c != 0 for c, _ in results)})
    return status


def run(cfg: RunConfig, out, dump_moore: bool = False) -> int:
    out = Path(out)
    dump_moore = dump_moore or cfg.get("output.dump_moore")
    if cfg.mode == "sweep":
        return sweep(cfg, out, dump_moore)
    code, rec = run_single(cfg, cfg.mode, out, dump_moore)
    if code != EXIT_OK:
        print(f"error: {rec['message']}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="casimir-sta", description=__doc__.splitlines()[0])
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--dump-moore", action="store_true", help="also write moore.csv")
    args = ap.parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
        cfg = parse_config(text, args.mode)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.out, args.dump_moore)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
