import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iim import Box, InvalidInputError, NotFoundError, analytic_bounds, get_case, sampled_bounds
from iim.cases import case_ids
from iim.velocity_fields import (
    VelocityField,
    check_linear_growth,
    eval_field,
    operator_norm,
    rigid_rotation,
    sin_x_1d,
    swirling,
    zero_field,
)

PI = math.pi
SQUARE = Box.cube(0.0, 2 * PI, 2)


def all_fields():
    return [get_case(c).field() for c in case_ids()]


def test_rotation_eval():
    v, j, d = eval_field(rigid_rotation(), [1.0, 2.0], 0.7)
    np.testing.assert_array_equal(v, [-2.0, 1.0])
    np.testing.assert_array_equal(j, [[0.0, -1.0], [1.0, 0.0]])
    assert d == 0.0


def test_zero_field_eval():
    v, j, d = eval_field(zero_field(2), [3.0, -4.0], 0.2)
    np.testing.assert_array_equal(v, [0.0, 0.0])
    np.testing.assert_array_equal(j, np.zeros((2, 2)))
    assert d == 0.0


def test_swirling_divergence_at_quarter_point():
    # |div| = 2 pi sin(pi/2) sin(pi/2) cos(0); the sign follows the Jacobian
    # diagonal -pi sin x sin y g(t).
    fld = swirling(1.5)
    x = np.array([PI / 2, PI / 2])
    _, jac, div = eval_field(fld, x, 0.0)
    assert abs(div) == pytest.approx(2 * PI, rel=1e-14)
    assert div == pytest.approx(-2 * PI, rel=1e-14)
    h = 1e-5
    fd = 0.0
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd += (fld.value((x + e)[None], 0.0)[0, k] - fld.value((x - e)[None], 0.0)[0, k]) / (2 * h)
    assert fd == pytest.approx(div, abs=1e-8)


def test_non_finite_input_rejected():
    with pytest.raises(InvalidInputError):
        eval_field(rigid_rotation(), [np.nan, 0.0], 0.0)
    with pytest.raises(InvalidInputError):
        eval_field(rigid_rotation(), [0.0, 0.0], np.inf)
    with pytest.raises(InvalidInputError):
        eval_field(rigid_rotation(), [0.0, 0.0, 0.0], 0.0)


@pytest.mark.parametrize(
    "name,L,M",
    [("rigid-rotation", 1.0, 0.0), ("swirling", 2 * PI, 2 * PI), ("sin-x-1d", 1.0, 1.0),
     ("const-1d", 0.0, 0.0), ("sin-t-1d", 0.0, 0.0), ("translate-2d", 0.0, 0.0)],
)
def test_analytic_bounds(name, L, M):
    b = analytic_bounds(name)
    assert (b.L_A, b.M_A, b.provenance) == (L, M, "analytic")
    assert b.M_A <= get_case(name).dim * b.L_A


def test_analytic_bounds_unknown():
    with pytest.raises(NotFoundError, match="unknown case"):
        analytic_bounds("nope")


def test_sampled_swirling_divergence_bound():
    b = sampled_bounds(swirling(1.5), SQUARE, 1.5, 256, 64)
    assert b.provenance == "sampled"
    assert abs(b.M_A - 2 * PI) <= 0.01 * 2 * PI
    assert b.M_A <= 2 * PI * (1 + 1e-12)
    assert b.L_A <= 2 * PI * 1.01


def test_sampled_zero_field():
    b = sampled_bounds(zero_field(2), SQUARE, 1.0)
    assert (b.L_A, b.M_A) == (0.0, 0.0)


def test_sampled_sin_x_gradient_bound():
    b = sampled_bounds(sin_x_1d(), Box((0.0,), (2 * PI,)), 1.0, 1024, 16)
    assert abs(b.L_A - 1.0) <= 1e-3


def test_sampled_bounds_resolution_guard():
    with pytest.raises(InvalidInputError):
        sampled_bounds(rigid_rotation(), SQUARE, 1.0, 16, 4)


@pytest.mark.parametrize("case", case_ids())
def test_sampled_never_exceeds_analytic(case):
    c = get_case(case)
    s = sampled_bounds(c.field(), c.omega, c.T_default)
    assert s.L_A <= c.bounds.L_A * 1.01 + 1e-12
    assert s.M_A <= c.bounds.M_A * 1.01 + 1e-12


def test_linear_growth_rotation_is_tight(rng):
    fld = rigid_rotation()
    samples = [(rng.uniform(-3, 3, 2), float(t)) for t in rng.uniform(0, 1, 50)]
    ck = check_linear_growth(fld, analytic_bounds("rigid-rotation"), samples)
    assert ck.passed
    assert ck.ratio == pytest.approx(1.0, abs=1e-14)


def test_linear_growth_zero_and_swirling(rng):
    samples = [(rng.uniform(0, 2 * PI, 2), float(t)) for t in rng.uniform(0, 1.5, 100)]
    z = check_linear_growth(zero_field(2), get_case("zero-2d").bounds, samples)
    assert z.passed and z.ratio == 0.0
    s = check_linear_growth(swirling(1.5), analytic_bounds("swirling"), samples)
    assert s.passed


@pytest.mark.parametrize("case", case_ids())
def test_trace_of_jacobian_is_divergence(case):
    c = get_case(case)
    fld = c.field()
    r = np.random.default_rng(7)
    for t in r.uniform(0, c.T_default, 10):
        x = c.omega.inflate(1.0).sample(r, 100)
        tr = np.trace(fld.jacobian(x, t), axis1=1, axis2=2)
        np.testing.assert_allclose(tr, fld.divergence(x, t), atol=1e-12, rtol=0)
        v, d = fld.velocity_and_divergence(x, t)
        np.testing.assert_array_equal(v, fld.value(x, t))
        np.testing.assert_allclose(d, fld.divergence(x, t), atol=1e-14, rtol=0)


def _fd_jac_error(fld, x, t, h):
    d = fld.dim
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        cols.append((fld.value(x + e, t) - fld.value(x - e, t)) / (2 * h))
    fd = np.stack(cols, axis=2)
    return float(np.abs(fd - fld.jacobian(x, t)).max())


@pytest.mark.parametrize("case", ["sin-x-1d", "swirling"])
def test_jacobian_matches_centered_differences_at_second_order(case):
    c = get_case(case)
    fld = c.field()
    x = c.omega.sample(np.random.default_rng(3), 200)
    e1 = _fd_jac_error(fld, x, 0.3, 1e-2)
    e2 = _fd_jac_error(fld, x, 0.3, 1e-3)
    assert math.log10(e1 / e2) >= 1.9


def test_from_callable_synthesizes_derivatives():
    ref = swirling(1.5)
    user = VelocityField.from_callable(2, ref.value, "user-swirl")
    x = SQUARE.sample(np.random.default_rng(1), 50)
    np.testing.assert_allclose(user.jacobian(x, 0.4), ref.jacobian(x, 0.4), atol=1e-8)
    np.testing.assert_allclose(user.divergence(x, 0.4), ref.divergence(x, 0.4), atol=1e-8)


matrices = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=4)


@settings(max_examples=200)
@given(matrices)
def test_operator_norm_closed_form_matches_svd(m):
    a = np.array(m).reshape(1, 2, 2)
    expected = np.linalg.svd(a[0], compute_uv=False)[0]
    assert operator_norm(a)[0] == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_swirling_needs_positive_T():
    with pytest.raises(InvalidInputError):
        swirling(0.0)
