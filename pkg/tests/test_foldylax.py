import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import pdist

from smallscat import _backend
from smallscat.analysis import reciprocity_defect
from smallscat.farfield import symmetric_grid
from smallscat.foldylax import (FoldyLaxError, HelmholtzKernel, assemble, check_invertibility,
                                far_field, scattered_field, simulate, solve)
from smallscat.geometry import Domain, GeometryError, ObstacleSet


def make_set(centers, a=0.01, cbar=None, t=1 / 3):
    z = np.atleast_2d(np.asarray(centers, float))
    m = len(z)
    cb = np.full(m, 2 * math.pi) if cbar is None else np.asarray(cbar, float)
    d = float(pdist(z).min() - a) if m > 1 else math.inf
    return ObstacleSet(z, a, t, ("sphere",) * m, cb, np.ones(m), np.arange(m), d, 0, None)


def test_kernel_closed_form():
    k = HelmholtzKernel(1.0)
    assert k([0, 0, 0], [2, 0, 0]) == pytest.approx(np.exp(2j) / (8 * math.pi))
    with pytest.raises(ValueError):
        HelmholtzKernel(0.0)


def test_single_obstacle_matrix():
    s = assemble(make_set([[0.1, 0.2, 0.3]]), 1.0)
    np.testing.assert_array_equal(s.B, [[-1.0]])


def test_pair_off_diagonal():
    c, a = 3.0, 0.01
    s = assemble(make_set([[0, 0, 0], [2, 0, 0]], a=a, cbar=[c, c]), 1.0)
    expect = -c * a * np.exp(2j) / (8 * math.pi)
    assert s.B[0, 1] == pytest.approx(expect, rel=1e-14)
    assert s.B[1, 0] == pytest.approx(expect, rel=1e-14)
    np.testing.assert_array_equal(np.diag(s.B), -1.0)


def test_equal_capacitance_gives_symmetric_matrix(rng):
    s = assemble(make_set(rng.uniform(size=(5, 3))), 0.8)
    assert np.abs(s.B - s.B.T).max() <= 1e-14


def test_unequal_capacitances_symmetrize(rng):
    s = assemble(make_set(rng.uniform(size=(6, 3)), cbar=rng.uniform(1, 5, 6)), 0.8)
    A = s.symmetrized()
    assert np.abs(A - A.T).max() <= 1e-15
    np.testing.assert_array_equal(np.diag(A), 1.0)


def test_coincident_centres_rejected():
    with pytest.raises(GeometryError):
        assemble(make_set([[0, 0, 0], [0, 0, 0]]), 1.0)


def test_invertibility_single_obstacle():
    r = check_invertibility(make_set([[0, 0, 0]]), 1.0)
    assert r.min_cos == 1.0 and r.hypotheses_hold


def test_invertibility_flags_negative_cosine():
    r = check_invertibility(make_set([[0, 0, 0], [2, 0, 0]]), 1.0)
    assert r.min_cos == pytest.approx(math.cos(2.0))
    assert not r.cos_ok and not r.hypotheses_hold


def test_invertibility_margin_recomputed(sweep_sets):
    _, s = sweep_sets[0.02]
    r = check_invertibility(s, 0.8)
    # independent re-evaluation of a < (5 pi / 3) d / |cbar|
    dists = [np.linalg.norm(s.centers[i] - s.centers[j])
             for i in range(s.M) for j in range(i + 1, s.M)]
    d = min(dists) - s.a
    limit = 5 * math.pi / 3 * d / math.sqrt(sum(c * c for c in s.cbar))
    assert r.a_limit == pytest.approx(limit, rel=1e-13)
    assert r.margin == pytest.approx(limit - 0.02, rel=1e-12)
    assert r.size_ok and r.cos_ok and r.margin > 0


def test_single_obstacle_charge():
    z = np.array([[0.3, -0.2, 0.5]])
    s = make_set(z, a=0.05)
    theta = np.array([[0.0, 0.6, 0.8]])
    q = solve(assemble(s, 1.3), theta).Q[0, 0]
    C = 2 * math.pi * 0.05
    assert q == pytest.approx(-C * np.exp(1.3j * z[0] @ theta[0]), rel=1e-15)


def test_symmetric_pair_by_hand():
    a, kappa, cbar = 0.02, 1.0, 2 * math.pi
    z = np.array([[0, 0, 0], [0.5, 0, 0]])
    theta = np.array([[0, 0, 1.0]])
    ch = solve(assemble(make_set(z, a=a), kappa), theta)
    C = cbar * a
    phi = np.exp(1j * kappa * 0.5) / (4 * math.pi * 0.5)
    expect = -C * 1.0 / (1 + C * phi)
    np.testing.assert_allclose(ch.Q[:, 0], expect, rtol=1e-14)


def test_direct_and_iterative_agree(rng):
    a = 0.001
    z = rng.uniform(size=(200, 3))
    s = make_set(z, a=a)
    theta = symmetric_grid(4)
    sys_ = assemble(s, 0.8)
    d = solve(sys_, theta, method="direct")
    it = solve(sys_, theta, method="gmres")
    assert np.abs(d.Q - it.Q).max() / np.abs(d.Q).max() <= 1e-8
    assert it.iterations and max(it.residual) <= 1e-9


def test_auto_switches_above_threshold(rng):
    s = make_set(rng.uniform(size=(30, 3)), a=0.001)
    ch = solve(assemble(s, 0.8), symmetric_grid(2), dense_limit=10)
    assert ch.method == "gmres"


def test_force_flag_required_when_hypotheses_fail():
    s = make_set([[0, 0, 0], [2, 0, 0]])
    rep = check_invertibility(s, 1.0)
    with pytest.raises(FoldyLaxError):
        solve(assemble(s, 1.0), [[0, 0, 1.0]], report=rep)
    solve(assemble(s, 1.0), [[0, 0, 1.0]], report=rep, force=True)


@pytest.mark.parametrize("a", [0.04, 0.02, 0.01])
def test_energy_bound_on_sweep_sets(sweep_sets, a):
    _, s = sweep_sets[a]
    rep = check_invertibility(s, 0.8)
    assert rep.hypotheses_hold
    ch = solve(assemble(s, 0.8), symmetric_grid(16), report=rep)
    energy = (np.abs(ch.Y) ** 2).sum(axis=0)
    assert (energy <= rep.bound_factor * s.M).all()


def test_single_obstacle_far_field_is_constant():
    s = make_set([[0, 0, 0]], a=0.1)
    g = symmetric_grid(8)
    tab = far_field(s, solve(assemble(s, 1.0), g), g, 1.0)
    np.testing.assert_allclose(tab.values, -2 * math.pi * 0.1 / (4 * math.pi), rtol=1e-15)


def test_conventions_differ_by_four_pi(sweep_sets):
    _, s = sweep_sets[0.04]
    g = symmetric_grid(8)
    ch = solve(assemble(s, 0.8), g)
    phys = far_field(s, ch, g, 0.8, "physical")
    paper = far_field(s, ch, g, 0.8, "paper")
    np.testing.assert_allclose(paper.values, 4 * math.pi * phys.values, rtol=1e-15)


def test_far_field_bounded_by_charges(sweep_sets):
    _, s = sweep_sets[0.02]
    g = symmetric_grid(16)
    ch = solve(assemble(s, 0.8), g)
    tab = far_field(s, ch, g, 0.8, "paper")
    assert (np.abs(tab.values) <= s.M * np.abs(ch.Q).max(axis=0)[None, :] * (1 + 1e-12)).all()


@pytest.mark.parametrize("a", [0.04, 0.01])
def test_reciprocity(sweep_sets, a):
    _, s = sweep_sets[a]
    tab, _, _ = simulate(s, 0.8, symmetric_grid(32), symmetric_grid(32))
    assert reciprocity_defect(tab) <= 1e-9


def test_scattered_field_far_limit(sweep_sets):
    _, s = sweep_sets[0.04]
    xh = np.array([[0.0, 0.6, 0.8]])
    th = np.array([[1.0, 0, 0]])
    ch = solve(assemble(s, 0.8), th)
    R = 1e3
    us = scattered_field(s, ch, R * xh, 0.8)[0]
    uinf = far_field(s, ch, xh, 0.8).values[0, 0]
    assert abs(np.exp(-0.8j * R) * R * us - uinf) <= 5 * abs(uinf) / R * 10


def test_scattered_field_single_and_linear():
    s = make_set([[0, 0, 0]], a=0.1)
    ch = solve(assemble(s, 1.0), [[0, 0, 1.0]])
    x = np.array([[1.0, 2.0, 2.0]])
    u = scattered_field(s, ch, x, 1.0)[0]
    assert u == pytest.approx(np.exp(3j) / (12 * math.pi) * ch.Q[0, 0], rel=1e-14)
    ch2 = replace(ch, Q=3.0 * ch.Q)
    assert scattered_field(s, ch2, x, 1.0)[0] == pytest.approx(3 * u, rel=1e-14)


def test_scattered_field_rejects_interior_points():
    s = make_set([[0, 0, 0]], a=0.1)
    ch = solve(assemble(s, 1.0), [[0, 0, 1.0]])
    with pytest.raises(GeometryError):
        scattered_field(s, ch, [[0.0, 0.0, 0.0]], 1.0)


@given(st.integers(2, 12), st.integers(0, 2 ** 31))
@settings(max_examples=20, deadline=None)
def test_solution_satisfies_system(m, seed):
    z = np.random.default_rng(seed).uniform(size=(m, 3))
    if pdist(z).min() < 1e-3:
        return
    s = make_set(z, a=1e-3)
    sys_ = assemble(s, 0.7)
    ch = solve(sys_, symmetric_grid(4))
    U = sys_.incident(ch.theta)
    C = s.capacitances
    Phi = _backend.helmholtz_pairs(z, 0.7)
    lhs = ch.Q + C[:, None] * (Phi @ ch.Q)
    np.testing.assert_allclose(lhs, -C[:, None] * U, atol=1e-13)
