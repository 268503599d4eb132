import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smallscat.farfield import (ConventionError, FarFieldTable, convention_factor,
                                fibonacci_sphere, read_farfield_csv, symmetric_grid,
                                write_farfield_csv)


@pytest.mark.parametrize("n", [2, 8, 64, 128])
def test_symmetric_grid_is_negation_closed(n):
    g = symmetric_grid(n)
    assert g.shape == (n, 3)
    np.testing.assert_allclose(np.linalg.norm(g, axis=1), 1.0, atol=1e-15)
    d = np.linalg.norm(g[:, None] + g[None], axis=-1)
    assert (d.min(axis=1) == 0).all()
    assert len(np.unique(np.round(g, 12), axis=0)) == n


def test_odd_grid_rejected():
    with pytest.raises(ValueError):
        symmetric_grid(7)


def test_fibonacci_covers_sphere():
    p = fibonacci_sphere(500)
    # centroid of a uniform cover sits near the origin
    assert np.linalg.norm(p.mean(axis=0)) < 1e-2


def test_conventions():
    assert convention_factor("paper") == 1.0
    assert convention_factor("physical") == pytest.approx(1 / (4 * np.pi))
    with pytest.raises(ConventionError):
        convention_factor("other")


def test_table_validates_unit_vectors_and_shape():
    g = symmetric_grid(4)
    with pytest.raises(ValueError):
        FarFieldTable(2 * g, g, np.zeros((4, 4)))
    with pytest.raises(ValueError):
        FarFieldTable(g, g, np.zeros((4, 3)))


def test_conversion_is_exact_round_trip():
    g = symmetric_grid(4)
    t = FarFieldTable(g, g, np.arange(16).reshape(4, 4) * (1 + 1j), "physical", 1.0)
    np.testing.assert_allclose(t.to("paper").values, 4 * np.pi * t.values, rtol=1e-15)
    np.testing.assert_allclose(t.to("paper").to("physical").values, t.values, rtol=1e-15)


@given(seed=st.integers(0, 2 ** 31))
@settings(max_examples=10, deadline=None)
def test_csv_round_trip_is_bit_exact(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    g = symmetric_grid(6)
    vals = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    t = FarFieldTable(g, g, vals, "paper", 0.8)
    p = tmp_path_factory.mktemp("ff") / "t.csv"
    write_farfield_csv(t, p)
    back = read_farfield_csv(p)
    np.testing.assert_array_equal(back.values, t.values)
    np.testing.assert_array_equal(back.xhat, t.xhat)
    assert back.convention == "paper" and back.kappa == 0.8


def test_csv_layout():
    g = symmetric_grid(2)
    buf = io.StringIO()
    write_farfield_csv(FarFieldTable(g, g, np.ones((2, 2))), buf, {"seed": 3})
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# convention: physical"
    assert "# seed: 3" in lines
    assert "theta_ix,xhat_ix,re,im" in lines
