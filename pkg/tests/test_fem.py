import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atfrac.fem import (
    assemble_stiffness,
    element_gradient,
    interpolate,
    interpolation_error_L1,
    lumped_integral,
    nodal_map,
)
from atfrac.mesh import build_uniform, carve_hole
from atfrac.verify import RATE_CASES, loglog_slope, rate_study


def test_interpolate_affine_and_constant():
    m = build_uniform(4)
    v = interpolate(m, lambda x, y: x + y)
    np.testing.assert_array_equal(v, m.vertices.sum(axis=1))
    np.testing.assert_array_equal(interpolate(m, lambda x, y: np.full_like(x, 3.0)), 3.0)


def test_interpolate_square_at_vertex():
    m = build_uniform(2)
    v = interpolate(m, lambda x, y: x ** 2)
    idx = int(np.flatnonzero(np.all(m.vertices == [0.5, 0.0], axis=1))[0])
    assert v[idx] == 0.25


def test_interpolate_zero_on_inactive():
    m = carve_hole(build_uniform(16), (0.5, 0.5), 0.2)
    v = interpolate(m, lambda x, y: 1.0 + x)
    assert np.all(v[~m.active] == 0)


def test_nodal_map():
    np.testing.assert_array_equal(nodal_map([0, 0.5, 1], lambda s: s ** 2), [0, 0.25, 1])
    np.testing.assert_array_equal(nodal_map([0.3, 0.7], lambda s: 1 - s), [0.7, 1 - 0.7])
    np.testing.assert_array_equal(nodal_map([], lambda s: s), [])


def test_element_gradient_of_affine_field():
    m = build_uniform(5)
    g = element_gradient(m, interpolate(m, lambda x, y: x + 2 * y))
    np.testing.assert_allclose(g, np.tile([1.0, 2.0], (m.n_triangles, 1)), atol=1e-12)
    assert np.all(element_gradient(m, np.full(m.n_vertices, 7.0)) == 0)


def test_element_gradient_matches_affine_fit():
    m = build_uniform(1)
    v = np.array([0.0, 0.0, 0.0, 1.0])     # 1 at (1, 1) only
    g = element_gradient(m, v)
    for t, tri in enumerate(m.triangles):
        mat = np.column_stack([np.ones(3), m.vertices[tri]])
        coef = np.linalg.solve(mat, v[tri])
        np.testing.assert_allclose(g[t], coef[1:], atol=1e-14)
    assert sorted(map(tuple, g.round(12).tolist())) == [(0.0, 0.0), (1.0, 1.0)]


def test_lumped_integral_examples():
    m = build_uniform(2)
    assert lumped_integral(m, np.ones(9)) == pytest.approx(1.0, abs=1e-15)
    assert lumped_integral(m, np.zeros(9)) == 0.0
    # hand count: sum of x^2 over vertex incidences times 1/24
    assert lumped_integral(m, interpolate(m, lambda x, y: x ** 2)) == pytest.approx(0.375, abs=1e-15)


@given(st.integers(1, 12), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
@settings(max_examples=40, deadline=None)
def test_lumped_integral_exact_on_affine(h, a, b, c):
    m = build_uniform(h)
    v = interpolate(m, lambda x, y: a + b * x + c * y)
    assert lumped_integral(m, v) == pytest.approx(a + b / 2 + c / 2, abs=1e-12)


def test_stiffness_h1_exact():
    k = assemble_stiffness(build_uniform(1)).toarray()
    want = np.array([[1.0, -0.5, -0.5, 0.0],
                     [-0.5, 1.0, 0.0, -0.5],
                     [-0.5, 0.0, 1.0, -0.5],
                     [0.0, -0.5, -0.5, 1.0]])
    np.testing.assert_allclose(k, want, atol=1e-15)


def test_stiffness_properties(rng):
    m = build_uniform(6)
    coeff = rng.uniform(0.1, 2.0, m.n_triangles)
    k = assemble_stiffness(m, coeff)
    assert (k - k.T).nnz == 0 or abs(k - k.T).max() == 0
    assert np.abs(k @ np.ones(m.n_vertices)).max() <= 1e-12
    assert np.all(np.linalg.eigvalsh(k.toarray()) >= -1e-12)
    off = k.toarray() - np.diag(k.diagonal())
    assert off.max() <= 1e-15
    assert assemble_stiffness(m, 0.0).count_nonzero() == 0
    with pytest.raises(ValueError):
        assemble_stiffness(m, -1.0)


def test_stiffness_energy_identity(rng):
    m = build_uniform(7)
    v = rng.standard_normal(m.n_vertices)
    g = element_gradient(m, v)
    direct = np.sum(m.area * (g ** 2).sum(axis=1))
    assert v @ assemble_stiffness(m) @ v == pytest.approx(direct, rel=1e-12)


def test_interpolation_error_affine_g_is_zero(rng):
    m = build_uniform(4)
    v = rng.uniform(0, 1, m.n_vertices)
    assert interpolation_error_L1(m, v, lambda s: 3 * s - 1) <= 1e-15


@pytest.mark.parametrize("h", [1, 2, 4, 8, 16, 32])
def test_interpolation_error_square_of_x(h):
    m = build_uniform(h)
    err = interpolation_error_L1(m, interpolate(m, lambda x, y: x), lambda s: s ** 2)
    assert err == pytest.approx(1 / (6 * h * h), rel=1e-10)


def test_interpolation_error_halving_ratio():
    e = [interpolation_error_L1(m, interpolate(m, lambda x, y: x), lambda s: s ** 2)
         for m in (build_uniform(16), build_uniform(32))]
    assert e[0] / e[1] == pytest.approx(4.0, rel=1e-9)


def test_interpolation_error_idempotent(rng):
    m = build_uniform(4)
    v = rng.uniform(0, 1, m.n_vertices)
    w = nodal_map(v, lambda s: s ** 2)
    assert interpolation_error_L1(m, w, lambda s: s) == 0.0


def test_quadrature_refinement_is_stable():
    m = build_uniform(8)
    v = interpolate(m, *RATE_CASES["trig|s^2"][:1])
    a = interpolation_error_L1(m, v, lambda s: s ** 2)
    b = interpolation_error_L1(m, v, lambda s: s ** 2, order=10, subdivisions=2)
    assert a == pytest.approx(b, rel=1e-10)


def test_rate_study_slopes():
    for rep in rate_study((8, 16, 32, 64)):
        assert rep.passed, rep.line()


def test_loglog_slope_exact():
    hs = [2, 4, 8]
    assert loglog_slope(hs, [1 / h ** 2 for h in hs]) == pytest.approx(2.0)
