import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.spatial.transform import Rotation

from smallscat import _backend
from smallscat.capacitance import (CapacitanceError, CapacitanceValue, capacitance,
                                   capacitance_sphere, refinement_table, richardson,
                                   self_integral, solve_density, triangle_rule)
from smallscat.geometry import UNIT_CUBE_CAPACITANCE
from smallscat.mesh import cube_mesh, icosphere

# published unit-cube capacitance, in units of 4 pi (Read 1997; Hwang & Mascagni 2004)
CUBE_REFERENCE = 0.66067813 * 4 * np.pi


def _polar_integral(corners, p):
    """Independent oracle: int_T dA / |x - p| by adaptive quadrature in polar angle."""
    total = 0.0
    for k in range(3):
        a, b = corners[k] - p, corners[(k + 1) % 3] - p
        e = b - a
        n = np.cross(a, b)
        n /= np.linalg.norm(n)
        u = a / np.linalg.norm(a)
        v = np.cross(n, u)
        phi_b = np.arctan2(b @ v, b @ u)

        def rho(phi):
            d = np.cos(phi) * u + np.sin(phi) * v
            # solve a + s e = r d for r
            m = np.stack([d, -e], axis=1)
            r, _ = np.linalg.lstsq(m, a, rcond=None)[0]
            return r

        total += integrate.quad(rho, 0.0, phi_b, epsabs=1e-13, epsrel=1e-13)[0]
    return total


@pytest.mark.parametrize("shape", ["equilateral", "obtuse", "thin"])
def test_self_integral_matches_polar_quadrature(shape):
    tri = {
        "equilateral": [[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]],
        "obtuse": [[0, 0, 0], [3, 0, 0], [2.5, 0.4, 0]],
        "thin": [[0, 0, 1], [1, 0.1, 1], [0.2, 0.05, 1.3]],
    }[shape]
    c = np.array(tri, dtype=float)
    p = c.mean(axis=0)
    got = self_integral(c[None], p[None])[0]
    assert got == pytest.approx(_polar_integral(c, p), rel=1e-10)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_triangle_rule_weights_sum_to_one(order):
    nodes, w = triangle_rule(order, depth=1)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(nodes.sum(axis=1), 1.0, atol=1e-14)


def test_sphere_radius_two_against_analytic():
    m = icosphere(3, radius=2.0)
    c = capacitance(solve_density(m), m)
    ref = capacitance_sphere(2.0)
    assert abs(c.cbar - ref.cbar) / ref.cbar < 5e-3


def test_sphere_levels_monotone():
    errs = [abs(capacitance(solve_density(icosphere(L)), icosphere(L)).cbar - 4 * np.pi)
            for L in range(1, 4)]
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("eps", [0.1, 2.0])
def test_similarity_scaling_is_exact(eps):
    m = cube_mesh(3)
    c1 = capacitance(solve_density(m), m).cbar
    me = m.scaled(eps)
    ce = capacitance(solve_density(me), me).cbar
    assert abs(ce - eps * c1) / ce <= 1e-12


def test_rigid_motion_invariance():
    m = icosphere(2)
    c = capacitance(solve_density(m), m).cbar
    rot = Rotation.from_euler("xyz", [0.3, -1.1, 2.0]).as_matrix()
    mr = m.rotated(rot).translated([5.0, -2.0, 0.5])
    assert capacitance(solve_density(mr), mr).cbar == pytest.approx(c, rel=1e-12)


def test_iterative_agrees_with_dense():
    m = icosphere(3)
    dense = solve_density(m)
    it = solve_density(m, dense_limit=100)
    assert it.method == "gmres" and dense.method == "dense"
    np.testing.assert_allclose(it.values, dense.values, rtol=1e-8)


def test_higher_order_far_rule_changes_little():
    m = icosphere(2)
    c1 = capacitance(solve_density(m, 1), m).cbar
    c3 = capacitance(solve_density(m, 3), m).cbar
    assert abs(c1 - c3) / c1 < 2e-3


def test_cube_extrapolation_matches_published_value():
    rows = refinement_table(cube_mesh(2), 3)
    assert rows[-1][3] == pytest.approx(CUBE_REFERENCE, rel=2e-3)
    assert UNIT_CUBE_CAPACITANCE == pytest.approx(CUBE_REFERENCE, rel=2e-4)


def test_refinement_table_shape():
    rows = refinement_table(icosphere(0), 2)
    assert [r[1] for r in rows] == [20, 80, 320]
    assert np.isnan(rows[0][3])


@given(c=st.floats(0.5, 20), k=st.floats(-5, 5), p=st.floats(0.5, 3))
@settings(max_examples=40, deadline=None)
def test_richardson_exact_for_power_law(c, k, p):
    vals = [c + k * 2.0 ** (-p * n) for n in range(3)]
    est, order = richardson(vals)
    if k != 0 and abs(k) > 1e-6:
        assert order == pytest.approx(p, rel=1e-6)
    assert est == pytest.approx(c, abs=1e-8 * max(1, abs(k)))


def test_error_estimate_from_two_levels():
    coarse = CapacitanceValue(12.40)
    m = icosphere(3)
    fine = capacitance(solve_density(m), m, reference=coarse)
    assert fine.error_estimate == pytest.approx(abs(fine.cbar - 12.40))


def test_nonpositive_capacitance_rejected():
    with pytest.raises(CapacitanceError):
        CapacitanceValue(-1.0)
    with pytest.raises(ValueError):
        capacitance_sphere(0.0)


def test_backends_agree_on_dense_assembly():
    if "compiled" not in _backend.BACKENDS:
        pytest.skip("compiled kernels not built")
    m = icosphere(2)
    from smallscat.capacitance import _Discretization
    d = _Discretization(m, 2)
    args = (d.targets, d.nodes, d.weights, d.fine_nodes, d.fine_weights, m.centroids,
            m.diameters, 3.0, np.ones(m.n_triangles))
    a = _backend.slp_dense(*args, backend="compiled")
    b = _backend.slp_dense(*args, backend="python")
    np.testing.assert_allclose(a, b, rtol=1e-13)
