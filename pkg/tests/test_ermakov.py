import math

import numpy as np
import pytest
from scipy.integrate import quad

from casimir_sta.ermakov import (
    BogoliubovPair,
    ErmakovError,
    FrequencySchedule,
    adiabatic_reference,
    bogoliubov,
    effective_frequency,
    energy_cost_qm,
    extrema,
    fit_asymptotic,
    integrate_ermakov,
    integrate_mode,
    joint_schedule,
    mean_energy,
    occupation,
    quench_schedule,
    squeezed_amplitudes,
    sudden_quench_mode,
    symmetric_extension,
)
from casimir_sta.trajectory import Trajectory, make_ramp

T_Q = 1.0
WIDTH = 1e-4 * 2 * math.pi


@pytest.fixture(scope="module")
def quench():
    return quench_schedule(1.0, 2.0, T_Q)


@pytest.fixture(scope="module")
def quench_mode(quench):
    return integrate_mode(quench, (0.0, 8.0))


@pytest.fixture(scope="module")
def quench_rho(quench):
    return integrate_ermakov(quench, (0.0, 8.0))


@pytest.fixture(scope="module")
def ramp_rho():
    # rho from 1/sqrt(1) to 1/sqrt(2) in 3 time units
    return make_ramp(1.0, 2.0 ** -0.5, 1.0, 3.0)


# -- schedules -----------------------------------------------------------------

def test_schedule_basics(quench):
    assert quench.omega_minus == pytest.approx(1.0)
    assert quench.omega_plus == pytest.approx(2.0)
    assert not quench.has_negative
    assert quench.is_constant_at(0.5) and quench.is_constant_at(2.0)
    assert not quench.is_constant_at(T_Q + WIDTH / 2)
    with pytest.raises(ValueError):
        FrequencySchedule.constant(0.0)
    with pytest.raises(ValueError):
        FrequencySchedule.from_omega(make_ramp(1.0, -1.0, 0.0, 1.0))


# -- mode functions ------------------------------------------------------------

def test_constant_mode_modulus():
    sol = integrate_mode(FrequencySchedule.constant(1.5), (0.0, 20.0))
    assert np.allclose(np.abs(sol.q), 1 / math.sqrt(3.0), atol=1e-14)


def test_constant_wronskian_100_periods():
    w = 1.3
    sol = integrate_mode(FrequencySchedule.constant(w), (0.0, 200 * math.pi / w))
    assert sol.wronskian_drift < 1e-12


def test_quench_wronskian(quench_mode):
    assert quench_mode.wronskian_drift < 1e-9


def test_sudden_quench_oracle(quench_mode):
    t = np.linspace(0.0, 8.0, 801)
    q, p = quench_mode.at(t)
    qa, pa = sudden_quench_mode(1.0, 2.0, T_Q + WIDTH / 2, t)
    assert np.max(np.abs(q - qa)) < 1e-4
    assert np.max(np.abs(p - pa)) < 1e-4


def test_ramp_mode_wronskian():
    sched = FrequencySchedule.from_omega(make_ramp(1.0, 3.0, 0.0, 2.0))
    assert integrate_mode(sched, (-1.0, 5.0)).wronskian_drift < 1e-9


# -- Bogoliubov data -------------------------------------------------------------

def test_bogoliubov_constant():
    sol = integrate_mode(FrequencySchedule.constant(1.0), (0.0, 10.0))
    b = bogoliubov(sol)
    assert abs(b.alpha) == pytest.approx(1.0, abs=1e-12)
    assert abs(b.beta) < 1e-12


def test_bogoliubov_quench(quench_mode):
    b = bogoliubov(quench_mode)
    assert occupation(b) == pytest.approx(0.125, abs=1e-4)
    assert b.norm_defect < 1e-9


def test_bogoliubov_independent_of_late_time(quench_mode):
    b1 = bogoliubov(quench_mode, t_late=5.0)
    b2 = bogoliubov(quench_mode, t_late=8.0)
    assert abs(b1.alpha - b2.alpha) < 1e-10
    assert abs(b1.beta - b2.beta) < 1e-10


def test_bogoliubov_requires_constant(quench_mode):
    with pytest.raises(ErmakovError):
        bogoliubov(quench_mode, t_late=T_Q + WIDTH)


def test_norm_over_many_schedules():
    for w1, dur in ((0.5, 0.3), (3.0, 1.0), (1.7, 0.05)):
        sched = FrequencySchedule.from_omega(make_ramp(1.0, w1, 0.0, dur))
        b = bogoliubov(integrate_mode(sched, (0.0, dur + 8.0)))
        assert b.norm_defect < 1e-9


def test_occupation_phase_invariant():
    b = BogoliubovPair(1.25 + 0.3j, 0.2 - 0.6j)
    ph = np.exp(0.7j)
    assert occupation(BogoliubovPair(b.alpha * ph, b.beta * ph)) == pytest.approx(occupation(b))
    assert occupation(BogoliubovPair(1.0, 0.0)) == 0.0


# -- squeezing -----------------------------------------------------------------

def test_squeezed_trivial():
    s = squeezed_amplitudes(BogoliubovPair(1.0, 0.0), 5)
    assert s.amplitudes[0] == 1.0
    assert np.all(s.amplitudes[1:] == 0)


def test_squeezed_quench(quench_mode):
    b = bogoliubov(quench_mode)
    ratio = abs(b.beta / b.alpha) ** 2
    assert ratio == pytest.approx(1 / 9, abs=1e-4)
    s = squeezed_amplitudes(b, 40)
    c = s.amplitudes
    assert abs(c[2] / c[0]) ** 2 == pytest.approx(ratio / 2, rel=1e-12)
    assert np.all(c[1::2] == 0)
    norms = [squeezed_amplitudes(b, n).norm for n in (1, 5, 20, 40)]
    assert np.all(np.diff(norms) >= 0) and norms[1] > norms[0]
    assert 1 - norms[-1] <= s.truncation_bound + 1e-15
    assert norms[-1] == pytest.approx(1.0, abs=1e-12)


def test_squeezed_rejects_large_ratio():
    with pytest.raises(ValueError):
        squeezed_amplitudes(BogoliubovPair(1.0, 1.0), 3)


# -- Ermakov function ----------------------------------------------------------

def test_ermakov_constant():
    sol = integrate_ermakov(FrequencySchedule.constant(2.0), (0.0, 30.0))
    assert np.allclose(sol.rho, 2.0 ** -0.5, atol=1e-14)
    assert np.allclose(sol.W, 2.0, atol=1e-13)


def test_ermakov_mode_identity(quench_mode, quench_rho):
    assert np.max(np.abs(quench_rho.rho - math.sqrt(2) * np.abs(quench_mode.q))) < 1e-8


def test_ermakov_residual(quench_rho):
    t = np.linspace(0.1, 7.9, 301)
    t = t[np.abs(t - T_Q) > 2e-3]
    assert np.max(np.abs(quench_rho.residual(t))) < 1e-8


def test_ermakov_pinch():
    sched = quench_schedule(1.0, 2.0, 0.0, width=1.0)
    with pytest.raises(ErmakovError, match="pinched"):
        integrate_ermakov(sched, (0.0, 1.0), rho0=1.0, drho0=-1e7)


def test_ermakov_rejects_bad_start():
    with pytest.raises(ValueError):
        integrate_ermakov(FrequencySchedule.constant(1.0), (0.0, 1.0), rho0=-1.0)


# -- asymptotic fit ------------------------------------------------------------

def test_fit_constant_any_window():
    sol = integrate_ermakov(FrequencySchedule.constant(1.0), (0.0, 30.0))
    for window in ((0.0, 2 * math.pi), (10.0, 13.0), (20.0, 29.0)):
        assert fit_asymptotic(sol, window=window).delta < 1e-8


def test_fit_quench(quench_rho, quench_mode):
    fit = fit_asymptotic(quench_rho)
    b = bogoliubov(quench_mode)
    assert math.cosh(fit.delta) == pytest.approx(1.25, abs=1e-4)
    assert math.cosh(fit.delta) == pytest.approx(abs(b.alpha) ** 2 + abs(b.beta) ** 2, abs=1e-8)
    assert fit.rms < 1e-8
    t = np.linspace(5.0, 8.0, 200)
    model = (math.cosh(fit.delta) - math.sinh(fit.delta) * np.sin(2 * 2.0 * t + fit.phi)) / 2.0
    assert np.max(np.abs(quench_rho.at(t)[0] ** 2 - model)) < 1e-8


def test_fit_window_shift(quench_rho):
    P = math.pi / 2.0
    a = fit_asymptotic(quench_rho, window=(3.0, 3.0 + P))
    b = fit_asymptotic(quench_rho, window=(3.0 + P, 3.0 + 2 * P))
    assert a.delta == pytest.approx(b.delta, abs=1e-8)
    dphi = (a.phi - b.phi + math.pi) % (2 * math.pi) - math.pi
    assert abs(dphi) < 1e-8


def test_fit_rejects_ramp(quench_rho):
    with pytest.raises(ErmakovError):
        fit_asymptotic(quench_rho, omega_late=2.0, window=(0.0, 4.0))


# -- reverse engineering ----------------------------------------------------------

def test_effective_frequency_constant():
    sched = effective_frequency(Trajectory.constant(1.5 ** -0.5))
    assert float(sched.omega(3.0)) == pytest.approx(1.5)


def test_effective_frequency_round_trip(ramp_rho):
    sched = effective_frequency(ramp_rho)
    assert sched.omega_minus == pytest.approx(1.0)
    assert sched.omega_plus == pytest.approx(2.0)
    assert not sched.has_negative
    sol = integrate_mode(sched, (0.0, 6.0))
    assert occupation(bogoliubov(sol)) < 1e-8
    assert sol.wronskian_drift < 1e-9
    erm = integrate_ermakov(sched, (0.0, 6.0))
    t = np.linspace(0.0, 6.0, 301)
    assert np.max(np.abs(erm.at(t)[0] - ramp_rho(t))) < 1e-8


def test_effective_frequency_fast_ramp_negative():
    sched = effective_frequency(make_ramp(1.0, 2.0 ** -0.5, 0.0, 0.3))
    assert sched.has_negative
    assert sched.min_omega2 < 0


def test_reversed_sta_schedule(ramp_rho):
    sched = effective_frequency(ramp_rho).time_reversed(2.5)
    assert sched.omega_minus == pytest.approx(2.0)
    sol = integrate_mode(sched, (0.0, 8.0))
    assert occupation(bogoliubov(sol)) < 1e-8


# -- symmetric extension ----------------------------------------------------------

def test_symmetric_extension_constant():
    sol = integrate_ermakov(FrequencySchedule.constant(1.0), (0.0, 4.0))
    ext = symmetric_extension(sol, 2.0)
    t = np.linspace(0.0, 4.0, 51)
    assert np.allclose(ext(t), 1.0, atol=1e-14)


def test_symmetric_extension_quench(quench, quench_rho):
    t_n = extrema(quench_rho, T_Q + WIDTH, kind="max")[0]
    ext = symmetric_extension(quench_rho, t_n)
    s = np.linspace(0.0, t_n - 0.01, 400)
    assert np.max(np.abs(ext(t_n + s) - ext(t_n - s))) < 1e-12
    w_eff = effective_frequency(ext)
    s = s[np.abs(t_n - s - T_Q) > 2 * WIDTH]
    assert np.max(np.abs(w_eff.omega2(t_n + s) - w_eff.omega2(t_n - s))) < 1e-8
    # the induced frequency is the original one mirrored about t_n
    assert np.max(np.abs(w_eff.omega2(t_n - s) - quench.omega2(t_n - s))) < 1e-6


def test_joint_protocol(quench, quench_rho):
    t_n = extrema(quench_rho, T_Q + WIDTH, kind="max")[0]
    joint = joint_schedule(quench, t_n)
    assert joint.omega_plus == pytest.approx(joint.omega_minus)
    t_end = 2 * t_n + 4.0
    sol = integrate_mode(joint, (0.0, t_end))
    assert occupation(bogoliubov(sol)) < 1e-8
    assert sol.wronskian_drift < 1e-9


def test_symmetric_extension_requires_extremum(quench_rho):
    with pytest.raises(ErmakovError):
        symmetric_extension(quench_rho, 3.0)


def test_extrema_are_extrema(quench_rho):
    ts = extrema(quench_rho, T_Q + WIDTH)
    assert len(ts) >= 4
    assert np.allclose(np.diff(ts), math.pi / 4, atol=1e-8)
    assert np.max(np.abs(quench_rho.at(np.array(ts))[1])) < 1e-8


# -- energies --------------------------------------------------------------------

def test_mean_energy_constant():
    sol = integrate_mode(FrequencySchedule.constant(1.7), (0.0, 5.0))
    assert np.allclose(mean_energy(sol, np.linspace(0, 5, 11)), 0.85, atol=1e-13)


def test_energy_cost_trivial(quench_mode):
    assert abs(energy_cost_qm(quench_mode, quench_mode, 5.0)) < 1e-12
    with pytest.raises(ValueError):
        energy_cost_qm(quench_mode, quench_mode, (0.0, 20.0))


def test_energy_cost_sta_positive(ramp_rho):
    eff = integrate_mode(effective_frequency(ramp_rho), (0.0, 5.0))
    ref = adiabatic_reference(ramp_rho)
    dW = energy_cost_qm(eff, ref, (0.0, 5.0))
    # for an Ermakov-engineered schedule <H> - w_ref/2 averages to <drho^2>/2
    oracle = quad(lambda t: ramp_rho(t, 1) ** 2, 1.0, 4.0, epsabs=1e-13)[0] / 2 / 5.0
    assert dW > 0
    assert dW == pytest.approx(oracle, abs=1e-9)
