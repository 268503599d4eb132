import numpy as np
import pytest

from smallscat import _backend

needs_compiled = pytest.mark.skipif("compiled" not in _backend.BACKENDS,
                                    reason="compiled kernels not built")


def test_default_backend_name():
    assert _backend.NAME in _backend.BACKENDS


@needs_compiled
def test_helmholtz_pairs_agree(rng):
    p = rng.uniform(size=(50, 3))
    a = _backend.helmholtz_pairs(p, 1.3, backend="compiled")
    b = _backend.helmholtz_pairs(p, 1.3, backend="python")
    np.testing.assert_allclose(a, b, rtol=1e-13)
    assert (np.diag(a) == 0).all()


@needs_compiled
def test_helmholtz_potential_agree(rng):
    t, s = rng.uniform(2, 3, size=(40, 3)), rng.uniform(size=(30, 3))
    q = rng.normal(size=(30, 3)) + 1j * rng.normal(size=(30, 3))
    a = _backend.helmholtz_potential(t, s, 0.7, q, backend="compiled")
    b = _backend.helmholtz_potential(t, s, 0.7, q, backend="python")
    np.testing.assert_allclose(a, b, rtol=1e-13)
    v = _backend.helmholtz_potential(t, s, 0.7, q[:, 0])
    np.testing.assert_allclose(v, a[:, 0], rtol=1e-14)


@needs_compiled
def test_single_layer_matvecs_agree(rng):
    n = 120
    t = rng.uniform(size=(n, 3))
    w = rng.uniform(size=n)
    x = rng.normal(size=n)
    a = _backend.slp_centroid_matvec(t, w, x, backend="compiled")
    b = _backend.slp_centroid_matvec(t, w, x, backend="python")
    np.testing.assert_allclose(a, b, rtol=1e-12)
    nodes = t[:, None, :] + rng.normal(scale=1e-3, size=(n, 3, 3))
    ww = rng.uniform(size=(n, 3))
    a = _backend.slp_coarse_matvec(t, nodes, ww, x, backend="compiled")
    b = _backend.slp_coarse_matvec(t, nodes, ww, x, backend="python")
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_env_override_selects_python(monkeypatch):
    import importlib
    monkeypatch.setenv("SMALLSCAT_BACKEND", "python")
    mod = importlib.reload(_backend)
    try:
        assert mod.NAME == "python"
    finally:
        monkeypatch.delenv("SMALLSCAT_BACKEND")
        importlib.reload(_backend)


@needs_compiled
def test_density_solve_agrees_across_backends(monkeypatch):
    from smallscat.capacitance import capacitance, solve_density
    from smallscat.mesh import icosphere
    m = icosphere(2)
    fast = capacitance(solve_density(m), m).cbar
    monkeypatch.setattr(_backend, "kernels", _backend.BACKENDS["python"])
    slow = capacitance(solve_density(m), m).cbar
    assert fast == pytest.approx(slow, rel=1e-12)
