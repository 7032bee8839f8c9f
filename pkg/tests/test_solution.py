import math

import numpy as np
import pytest

from iim import (
    Box,
    EvolvedField,
    InvalidInputError,
    ODEConfig,
    ScalarField,
    SolutionField,
    build_reference,
    evolve_eval,
    flow_batch,
    get_case,
    integrate,
    invariant_drift,
    leibniz_check,
    lp_norm,
    make_bump,
    pairing,
    push,
    push_many,
    solve_at,
)
from iim.characteristics import FlowCache
from iim.evolution import zero_scalar
from iim.quadrature import anchored
from iim.solution import (
    DriftSeries,
    SpaceTimeFunction,
    constant_function,
    invariant_drift_many,
    leibniz_eval,
    leibniz_study,
    pairing_pullback,
    smooth_probe,
    solution_on_pushed,
)
from iim.velocity_fields import const_1d, rigid_rotation, sin_x_1d, swirling, zero_field

PI = math.pi


def rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_zero_field_solution_is_initial(rng):
    u0 = make_bump("gaussian", [0.0, 0.0], 1.0)
    sf = SolutionField(u0, zero_field(2), ODEConfig(1e-2))
    x = Box.cube(-1.5, 1.5, 2).sample(rng, 100)
    np.testing.assert_array_equal(solve_at(sf, x, 0.7), u0(x))


def test_rotation_solution(rng):
    u0 = make_bump("cosine", [2.0, 1.0], 1.0)
    sf = SolutionField(u0, rigid_rotation(), ODEConfig(1e-3))
    x = Box.cube(-3, 3, 2).sample(rng, 200)
    for t in (0.5, 2.0):
        np.testing.assert_allclose(solve_at(sf, x, t), u0(x @ rot(-t).T), atol=1e-9)


def test_const_solution_translates():
    u0 = make_bump("cosine", [1.0], 0.5)
    sf = SolutionField(u0, const_1d(), ODEConfig(1e-3))
    x = np.linspace(0, 3, 61)[:, None]
    np.testing.assert_allclose(solve_at(sf, x, 0.8), u0(x - 0.8), atol=1e-12)


def test_sin_x_solution_amplitude():
    # U(x, t) = U0(x0) sin(x0) / sin(x) where x0 = D_{t->0}(x)
    u0 = make_bump("cosine", [2.0], 0.8)
    sf = SolutionField(u0, sin_x_1d(), ODEConfig(1e-3))
    x = np.linspace(1.3, 3.0, 18)
    x0 = 2 * np.arctan2(np.exp(-1.0) * np.sin(x / 2), np.cos(x / 2))
    expected = u0(x0[:, None]) * np.sin(x0) / np.sin(x)
    np.testing.assert_allclose(solve_at(sf, x[:, None], 1.0), expected, atol=1e-10)


def test_initial_condition_and_time_guard(rng):
    u0 = make_bump("gaussian", [3.0, 3.0], 1.0)
    sf = SolutionField(u0, swirling(1.5), ODEConfig(1e-2))
    x = Box.cube(0, 6, 2).sample(rng, 50)
    np.testing.assert_array_equal(solve_at(sf, x, 0.0), u0(x))
    assert solve_at(sf, [3.0, 3.0], 0.0) == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        solve_at(sf, x, -0.1)


def test_solution_support_containment(rng):
    fld, cfg = swirling(1.5), ODEConfig(1e-2)
    u0 = make_bump("c0-cone", [2.0, 2.5], 0.7)
    sf = SolutionField(u0, fld, cfg)
    x = Box.cube(0, 2 * PI, 2).sample(rng, 500)
    back = flow_batch(fld, x, 1.0, 0.0, cfg).end
    off = ~u0.support_box.contains(back)
    assert np.all(solve_at(sf, x, 1.0)[off] == 0.0)


def _rotation_setup():
    T = PI
    fld, cfg = rigid_rotation(), ODEConfig(1e-3 * T)
    u0 = make_bump("gaussian", [4.0, 2.0], 0.9)
    Psi = make_bump("cosine", [-3.6, -2.4], 1.2)  # near where u0 lands at T
    return T, fld, cfg, u0, Psi


def test_pairing_constant_under_rotation():
    T, fld, cfg, u0, Psi = _rotation_setup()
    sf = SolutionField(u0, fld, cfg)
    rq0 = build_reference(u0.support_box, 16, 4, 0.0)
    vals = []
    for t in (0.0, T / 4, T / 2, 3 * T / 4, T):
        pq = push(rq0, fld, t, cfg)
        vals.append(pairing(sf, EvolvedField(Psi, fld, t, T, cfg), pq))
    assert abs(vals[0]) > 1e-3
    assert max(abs(v - vals[0]) for v in vals) <= 1e-6 * abs(vals[0])
    # at t = 0 it is int U0 psi(., 0)
    p0 = anchored(rq0)
    direct = integrate(p0, u0(p0.nodes) * evolve_eval(EvolvedField(Psi, fld, 0.0, T, cfg), p0.nodes))
    assert vals[0] == pytest.approx(direct, rel=1e-14)


def test_pairing_routes_agree_swirling():
    fld, T = swirling(1.5), 1.5
    cfg = ODEConfig(1e-3 * T)
    u0 = make_bump("gaussian", [2.0, 3.0], 0.8)
    Psi = make_bump("cosine", [3.0, 3.5], 1.0)
    sf = SolutionField(u0, fld, cfg)
    rq0 = build_reference(u0.support_box, 16, 4, 0.0)
    cache = FlowCache()
    for t in (0.4, 1.1):
        pq = push(rq0, fld, t, cfg, cache)
        ef = EvolvedField(Psi, fld, t, T, cfg, cache)
        a = pairing(sf, ef, pq, cache)
        b = pairing_pullback(sf, ef, pq, cache)
        assert a == pytest.approx(b, rel=1e-6)


def test_pairing_zero_test_function_and_time_mismatch():
    T, fld, cfg, u0, _ = _rotation_setup()
    sf = SolutionField(u0, fld, cfg)
    rq0 = build_reference(u0.support_box, 4, 3, 0.0)
    pq = push(rq0, fld, 1.0, cfg)
    zero = zero_scalar(Box.cube(-7, 7, 2))
    assert pairing(sf, EvolvedField(zero, fld, 1.0, T, cfg), pq) == 0.0
    with pytest.raises(InvalidInputError, match="time mismatch"):
        pairing(sf, EvolvedField(zero, fld, 2.0, T, cfg), pq)
    with pytest.raises(InvalidInputError, match="time mismatch"):
        pairing_pullback(sf, EvolvedField(zero, fld, 2.0, T, cfg), pq)


def test_drift_zero_field_vanishes():
    u0 = make_bump("gaussian", [1.0, 1.0], 0.5)
    Psi = make_bump("cosine", [1.2, 0.9], 0.6)
    sf = SolutionField(u0, zero_field(2), ODEConfig(0.1))
    rq0 = build_reference(u0.support_box, 8, 4, 0.0)
    d = invariant_drift(sf, Psi, 1.0, [0.0, 0.25, 0.5, 1.0], rq0)
    assert d.max_drift == 0.0


def test_drift_swirling_nine_points():
    c = get_case("swirling")
    fld, T = c.field(), c.T_default
    cfg = ODEConfig(1e-3 * T)
    u0 = make_bump("gaussian", [2.2, 3.4], 0.9)
    Psi = make_bump("cosine", [2.8, 3.0], 1.0)
    sf = SolutionField(u0, fld, cfg)
    rq0 = build_reference(u0.support_box, 16, 4, 0.0)
    d = invariant_drift(sf, Psi, T, [k * T / 8 for k in range(9)], rq0)
    assert abs(d.reference) > 1e-3
    assert d.max_drift <= 1e-5


def test_drift_grid_validation():
    u0 = make_bump("gaussian", [1.0], 0.5)
    rq = build_reference(u0.support_box, 4, 4, 0.0)
    with pytest.raises(InvalidInputError):
        invariant_drift_many(const_1d(), [u0], [u0], 1.0, [0.5, 1.0], rq, ODEConfig(0.1))
    with pytest.raises(InvalidInputError):
        invariant_drift_many(const_1d(), [u0], [], 1.0, [0.0, 1.0], rq, ODEConfig(0.1))
    rqT = build_reference(u0.support_box, 4, 4, 1.0)
    with pytest.raises(InvalidInputError):
        invariant_drift_many(const_1d(), [u0], [u0], 1.0, [0.0, 1.0], rqT, ODEConfig(0.1))


def test_drift_series_semantics():
    d = DriftSeries((0.0, 1.0, 2.0), (2.0, 2.0002, 1.999), "x")
    assert d.reference == 2.0
    assert d.rel_drift == pytest.approx((0.0, 1e-4, 5e-4))
    assert d.max_drift == pytest.approx(5e-4)
    assert d.to_dict()["max_rel_drift"] == d.max_drift
    zero = DriftSeries((0.0, 1.0), (0.0, 1e-20))
    assert zero.max_drift == 1e-20


@pytest.mark.parametrize("case", ["sin-x-1d", "swirling"])
def test_mass_conservation(case):
    c = get_case(case)
    fld, T = c.field(), c.T_default
    cfg = ODEConfig(1e-3 * T)
    u0 = make_bump("gaussian", c.omega.center - 0.4, 0.2 * float(c.omega.widths.min()))
    sf = SolutionField(u0, fld, cfg)
    rq0 = build_reference(u0.support_box, 16 if c.dim == 2 else 64, 4, 0.0)
    m0 = integrate(anchored(rq0), u0)
    for t in (0.3 * T, T):
        pq = push(rq0, fld, t, cfg)
        retraced = integrate(pq, solve_at(sf, pq.nodes, t))
        (folded,) = solution_on_pushed(pq, [u0])
        assert retraced == pytest.approx(m0, rel=1e-5)
        assert integrate(pq, folded) == pytest.approx(m0, rel=1e-12)


@pytest.mark.parametrize("case", ["sin-x-1d", "swirling", "rigid-rotation"])
def test_fundamental_estimate(case):
    c = get_case(case)
    fld, T, M = c.field(), c.T_default, c.bounds.M_A
    cfg = ODEConfig(1e-3 * T)
    u0 = make_bump("cosine", c.omega.center + 0.3, 0.2 * float(c.omega.widths.min()))
    rq0 = build_reference(u0.support_box, 16 if c.dim == 2 else 64, 4, 0.0)
    n0 = lp_norm(anchored(rq0), u0, 2)
    times = [k * T / 8 for k in range(9)]
    pushed = push_many(rq0, fld, times, cfg)
    for t in times:
        (u,) = solution_on_pushed(pushed[t], [u0])
        assert lp_norm(pushed[t], u, 2) <= math.exp(M * t / 2) * n0 * (1 + 1e-9)


def test_solution_on_pushed_needs_time_zero_anchor():
    u0 = make_bump("gaussian", [1.0], 0.5)
    pq = push(build_reference(u0.support_box, 2, 2, 1.0), const_1d(), 0.5, ODEConfig(0.1))
    with pytest.raises(InvalidInputError):
        solution_on_pushed(pq, [u0])


# --- Leibniz rule ------------------------------------------------------------


def test_leibniz_constant_on_divergence_free_field():
    T = PI
    rq = build_reference(Box.cube(0, 2 * PI, 2), 8, 4, T)
    cfg = ODEConfig(1e-3 * T)
    pq = push(rq, rigid_rotation(), T / 3, cfg)
    res = leibniz_eval(constant_function(1.0), rigid_rotation(), T / 3, 1e-3 * T, pq, cfg)
    assert abs(res.volume_integral) == 0.0
    assert abs(res.fd_derivative) <= 1e-9


def test_leibniz_constant_on_sin_x_subinterval():
    # d/dt of the measure of D_{1->t}([1, 2]) against int div A
    rq = build_reference(Box((1.0,), (2.0,)), 16, 4, 1.0)
    cfg = ODEConfig(1e-3)
    ck = leibniz_check(constant_function(1.0), sin_x_1d(), 0.5, 1.0, rq, cfg, tol=1e-5)
    assert ck.passed, ck
    assert abs(ck.context["volume"]) > 0.1
    study = leibniz_study(constant_function(1.0), sin_x_1d(), 0.5, 1.0, rq, cfg, h0=1e-2)
    assert study.order == "exact" or study.order >= 1.9


@pytest.mark.parametrize("case", ["rigid-rotation", "swirling", "sin-x-1d"])
def test_leibniz_probe_second_order(case):
    c = get_case(case)
    fld, T = c.field(), c.T_default
    cfg = ODEConfig(1e-3 * T)
    rq = build_reference(c.omega, 16 if c.dim == 2 else 64, 4, T)
    study = leibniz_study(smooth_probe(c.omega), fld, T / 3, T, rq, cfg)
    assert study.order >= 1.9
    assert max(study.errors) > 0


def test_leibniz_on_solution_times_test_function():
    # f = U psi: the volume integrand is zero up to discretization, and so is
    # the time derivative of the pairing.
    fld, T = sin_x_1d(), 1.0
    cfg = ODEConfig(1e-3)
    u0 = make_bump("cosine", [2.0], 0.5)
    Psi = make_bump("cosine", [2.6], 0.6)
    sf = SolutionField(u0, fld, cfg)

    def value(x, t):
        return solve_at(sf, x, t) * evolve_eval(EvolvedField(Psi, fld, t, T, cfg), x)

    f = SpaceTimeFunction(value, label="U psi", fd_step=1e-4)
    t = 0.5
    rq0 = build_reference(u0.support_box, 32, 4, 0.0)
    pq = push(rq0, fld, t, cfg)
    res = leibniz_eval(f, fld, t, 1e-3, pq, cfg)
    size = integrate(pq, np.abs(value(pq.nodes, t)))
    assert size > 1e-2
    assert abs(res.fd_derivative) <= 1e-6 * size
    assert abs(res.volume_integral) <= 1e-5 * size


def test_leibniz_guards():
    rq = build_reference(Box((1.0,), (2.0,)), 2, 2, 1.0)
    with pytest.raises(InvalidInputError):
        leibniz_check(constant_function(), sin_x_1d(), 0.0005, 1.0, rq, ODEConfig(1e-3))
    pq = push(rq, sin_x_1d(), 0.5, ODEConfig(1e-2))
    with pytest.raises(InvalidInputError):
        leibniz_eval(constant_function(), sin_x_1d(), 0.4, 1e-3, pq, ODEConfig(1e-2))
    with pytest.raises(InvalidInputError):
        leibniz_eval(constant_function(), sin_x_1d(), 0.5, 0.0, pq, ODEConfig(1e-2))


def test_space_time_function_fd_fallbacks():
    f = SpaceTimeFunction(lambda x, t: np.sin(t) * x[:, 0] ** 2 + x[:, 1])
    x = np.array([[1.0, 2.0], [0.5, -1.0]])
    np.testing.assert_allclose(f.time_derivative(x, 0.3), math.cos(0.3) * x[:, 0] ** 2, atol=1e-8)
    g = f.gradient(x, 0.3)
    np.testing.assert_allclose(g[:, 0], 2 * math.sin(0.3) * x[:, 0], atol=1e-8)
    np.testing.assert_allclose(g[:, 1], 1.0, atol=1e-8)


def test_scalar_field_wrapping_is_callable():
    sf = ScalarField(lambda x: x[:, 0], Box((0.0,), (1.0,)))
    assert sf([0.5]) == 0.5 and sf([2.0]) == 0.0
