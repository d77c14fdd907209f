import math

import numpy as np
import pytest

from casimir_sta import (
    AdiabaticMoore,
    CavityProtocol,
    CompletionError,
    LinearMoore,
    Trajectory,
    check_reversal_condition,
    complete_by_extension,
    complete_by_pulse,
    complete_by_time_reversal,
    decompose_periodic,
    inverse_engineer,
    make_polynomial_pulse,
    make_ramp,
    reverse_protocol,
    shortcut_from_reference,
    solve,
    verify_sta,
)
from casimir_sta.sta import completion_summary, final_adiabaticity, reversal_firing_times

from conftest import dense


# -- inverse engineering -----------------------------------------------------

def test_inverse_engineer_static_fixed_point():
    t = np.linspace(-1.0, 3.0, 41)
    L, R = inverse_engineer(LinearMoore(0.0, 1.5), t)
    assert np.allclose(L(t), 0.0, atol=1e-12)
    assert np.allclose(R(t), 1.5, atol=1e-12)
    assert np.allclose(R(t, 1), 0.0, atol=1e-12)


def test_inverse_engineer_shifted_gauge():
    t = np.linspace(0.0, 2.0, 21)
    L, R = inverse_engineer(LinearMoore(0.4, 1.6), t)
    assert np.allclose(L(t), 0.4, atol=1e-12)
    assert np.allclose(R(t), 1.6, atol=1e-12)


def test_inverse_engineer_adiabatic_reference(poly_pulse):
    proto, target = shortcut_from_reference(Trajectory.constant(0.0), poly_pulse)
    R = proto.right
    span = R.span
    assert R.start_value == pytest.approx(1.0, abs=1e-12)
    assert R.end_value == pytest.approx(0.7, abs=1e-12)
    assert proto.max_speed() < 1.0
    # the effective mirror reproduces the target Moore functions
    t = dense(span[0], span[1], 801)
    assert np.max(np.abs(target.G(t + R(t)) - target.F(t - R(t)) - 2.0)) < 1e-10
    sol = solve(proto)
    z = dense(-1.0, span[1] + 2.0, 801)
    assert np.max(np.abs(sol.F(z) - target.F(z))) < 1e-8


def test_inverse_engineer_inconsistent_targets():
    class Broken(LinearMoore):
        def derivs(self, which, z):
            out = super().derivs(which, z)
            if which == "G":
                out[0] = out[0] + 1e3 * np.tanh(np.asarray(z))
            return out

    with pytest.raises(CompletionError):
        inverse_engineer(Broken(0.0, 1.0), np.linspace(0, 1, 5), which=("R",))


def test_inverse_engineer_superluminal():
    # G = 5000 z, F = z puts the right root at (2 - 4999 t)/5001
    class Steep(LinearMoore):
        def derivs(self, which, z):
            out = super().derivs(which, z)
            if which == "G":
                out[:2] *= 5000.0
            return out

    with pytest.raises(CompletionError, match="superluminal"):
        inverse_engineer(Steep(0.0, 1.0), np.linspace(0, 1e-4, 5), which=("R",),
                         guesses={"R": 0.0})


# -- extension ----------------------------------------------------------------

def test_extension_identity_on_static():
    proto = CavityProtocol.static(0.0, 1.0)
    plan = complete_by_extension(proto)
    assert plan.completed is proto


def test_extension_default_length(bare):
    plan = complete_by_extension(bare)
    assert plan.target_length == pytest.approx(0.7)
    assert final_adiabaticity(plan.completed, plan.moore) == pytest.approx(1.0, abs=1e-3)


def test_extension_final_length(extension_plan):
    proto = extension_plan.completed
    assert proto.final_length == pytest.approx(0.7, abs=1e-12)
    assert proto.max_speed() < 1.0
    proto.validate()
    assert final_adiabaticity(proto, extension_plan.moore) == pytest.approx(1.0, abs=1e-3)


def test_extension_round_trip(extension_plan, extension_pair):
    lo, hi = extension_plan.junction["window"]
    z = dense(-1.0, hi + 3.0, 3001)
    assert np.max(np.abs(extension_pair.F(z) - extension_plan.moore.F(z))) < 1e-8
    assert np.max(np.abs(extension_pair.F(z, 1) - extension_plan.moore.F(z, 1))) < 1e-6


def test_extension_q_end_independent(extension_plan, extension_pair):
    assert final_adiabaticity(extension_plan.completed, extension_pair) == pytest.approx(1.0, abs=1e-3)
    t_e = extension_plan.completed.t_motion_end
    assert decompose_periodic(extension_pair, t_e).amplitude < 1e-6


def test_extension_other_length(bare):
    plan = complete_by_extension(bare, final_length=1.0)
    assert plan.completed.final_length == pytest.approx(1.0, abs=1e-12)
    assert final_adiabaticity(plan.completed, plan.moore) == pytest.approx(1.0, abs=1e-3)


def test_extension_matches_source_before_junction(bare, extension_plan):
    t = dense(-1.0, extension_plan.junction["t_a"], 501)
    assert np.allclose(extension_plan.completed.right(t), bare.right(t), atol=1e-13)


def test_extension_preconditions(bare):
    with pytest.raises(CompletionError):
        complete_by_extension(bare, window=(1.0, 2.0))
    with pytest.raises(CompletionError):
        complete_by_extension(bare, window=(2.0, 2.0))
    left_moving = CavityProtocol(make_ramp(0.0, 0.1, 0.0, 1.0), Trajectory.constant(1.0))
    with pytest.raises(CompletionError):
        complete_by_extension(left_moving)


# -- short-pulse erasure ------------------------------------------------------

def test_pulse_right_firing_time(pulse_right):
    assert pulse_right.firing_time == pytest.approx(2.0)
    assert pulse_right.method == "pulse_right"
    pulse_right.completed.validate()


def test_pulse_right_identity(pulse_right, cosine_pulse):
    tn = pulse_right.firing_time
    tau = pulse_right.junction["tau"]
    t = dense(tn, tn + tau, 401)
    total = pulse_right.completed.right(t) + cosine_pulse(t - tn)
    assert np.max(np.abs(total - 2.0)) < 1e-14


def test_pulse_right_erases(pulse_right):
    pair = solve(pulse_right.completed)
    z = dense(3.0, 9.0, 1201)
    assert np.max(np.abs(pair.F(z, 1) - 1.0)) < 1e-6
    assert final_adiabaticity(pulse_right.completed, pair) == pytest.approx(1.0, abs=1e-3)


def test_pulse_left_erases(pulse_left):
    assert pulse_left.firing_time == pytest.approx(3.0)
    proto = pulse_left.completed
    assert proto.final_length == pytest.approx(1.0)
    pair = solve(proto)
    assert final_adiabaticity(proto, pair) == pytest.approx(1.0, abs=1e-3)
    assert decompose_periodic(pair, proto.t_motion_end).amplitude < 1e-6


def test_pulse_second_firing_time(cosine_pulse):
    plan = complete_by_pulse(cosine_pulse, "right", 2)
    assert plan.firing_time == pytest.approx(4.0)
    assert final_adiabaticity(plan.completed) == pytest.approx(1.0, abs=1e-3)


def test_pulse_off_grid_fails(cosine_pulse):
    plan = complete_by_pulse(cosine_pulse, "right", firing_time=1.5)
    assert abs(final_adiabaticity(plan.completed) - 1.0) > 0.05
    ok, _ = verify_sta(plan.completed)
    assert not ok


def test_pulse_needs_short_pulse():
    long_pulse = make_polynomial_pulse(1.0, 0.3, 1.5)
    with pytest.raises(Exception, match="short-pulse"):
        complete_by_pulse(long_pulse, "right", 1)


def test_pulse_bad_side(cosine_pulse):
    with pytest.raises(ValueError):
        complete_by_pulse(cosine_pulse, "middle", 1)


# -- time reversal ------------------------------------------------------------

def test_reversal_static_holds():
    chk = check_reversal_condition(solve(CavityProtocol.static(0.0, 1.0)))
    assert chk.holds


def test_reversal_poly_holds(bare_pair):
    chk = check_reversal_condition(bare_pair)
    assert chk.holds
    assert chk.z_tilde == pytest.approx(2.7, abs=1e-9)
    assert chk.period == pytest.approx(1.4, abs=1e-12)
    assert chk.deviation < 1e-6
    times = reversal_firing_times(bare_pair.protocol, chk)
    assert times == pytest.approx([1.7, 3.1, 4.5], abs=1e-9)


def test_reversal_two_pulse_fails():
    right = make_ramp(1.0, 0.85, 0.0, 0.5).splice(make_ramp(0.85, 0.7, 0.8, 0.9))
    chk = check_reversal_condition(solve(CavityProtocol.right_only(right)))
    assert not chk.holds
    assert chk.deviation > 1e-3
    with pytest.raises(CompletionError):
        complete_by_time_reversal(CavityProtocol.right_only(right))


def test_reversal_static_completion():
    proto = CavityProtocol.static(0.0, 1.0)
    assert complete_by_time_reversal(proto).completed is proto


def test_reversal_completion(reversal_plan, bare):
    proto = reversal_plan.completed
    assert reversal_plan.firing_time == pytest.approx(1.7, abs=1e-9)
    assert proto.final_length == pytest.approx(bare.initial_length)
    pair = solve(proto)
    assert final_adiabaticity(proto, pair) == pytest.approx(1.0, abs=1e-3)
    ok, tr = verify_sta(proto, pair)
    assert ok


def test_reversal_second_time(bare):
    plan = complete_by_time_reversal(bare, 1)
    assert plan.firing_time == pytest.approx(3.1, abs=1e-9)
    assert final_adiabaticity(plan.completed) == pytest.approx(1.0, abs=1e-3)


def test_reversal_off_grid(bare):
    plan = complete_by_time_reversal(bare, firing_time=2.0)
    assert abs(final_adiabaticity(plan.completed) - 1.0) > 0.05
    with pytest.raises(CompletionError):
        complete_by_time_reversal(bare, firing_time=-0.5)


# -- reverse protocol and verification ---------------------------------------

def test_reverse_static():
    proto = CavityProtocol.static(0.0, 1.0)
    assert reverse_protocol(proto) is proto


def test_reverse_exchanges_lengths(extension_plan):
    proto = extension_plan.completed
    rev = reverse_protocol(proto)
    assert rev.initial_length == pytest.approx(proto.final_length)
    assert rev.final_length == pytest.approx(proto.initial_length)
    assert rev.motion_span == pytest.approx(proto.motion_span)


def test_reverse_of_sta_is_sta(extension_plan):
    rev = reverse_protocol(extension_plan.completed)
    pair = solve(rev)
    ok, tr = verify_sta(rev, pair)
    assert ok
    assert tr.Q[-1] == pytest.approx(1.0, abs=1e-3)
    span = rev.motion_span
    assert pair.F(span[0] - 5.0, 1) == pytest.approx(1 / rev.initial_length, abs=1e-12)
    t_late = span[1] + 3 * rev.final_length
    assert pair.F(t_late, 1) == pytest.approx(1 / rev.final_length, abs=1e-6)


def test_reversal_duality(pulse_right, bare):
    for proto in (pulse_right.completed, bare):
        assert verify_sta(proto)[0] == verify_sta(reverse_protocol(proto))[0]


def test_verify_static():
    ok, tr = verify_sta(CavityProtocol.static(0.0, 1.0))
    assert ok
    assert np.allclose(tr.Q, 1.0, atol=1e-9)


def test_verify_bare(bare, bare_pair):
    ok, tr = verify_sta(bare, bare_pair)
    assert not ok
    assert tr.Q[-1] == pytest.approx(0.6, abs=0.05)


def test_completion_summary(pulse_right):
    s = completion_summary(pulse_right)
    assert s["method"] == "pulse_right"
    assert s["firing_time"] == pytest.approx(2.0)
    assert s["Q_end"] == pytest.approx(1.0, abs=1e-3)
    assert s["Q_start"] == pytest.approx(1.0, abs=1e-9)
    assert s["max_residual"] < 1e-8
    assert 0 < s["max_speed"] < 1
    assert math.isclose(s["final_length"], 1.0)
