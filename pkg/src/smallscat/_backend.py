"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
versions take over. Set ``SMALLSCAT_BACKEND=python`` to force the fallback.
"""
import logging
import os

import numpy as np

from . import _pykernels

logger = logging.getLogger(__name__)

_compiled = None
if os.environ.get("SMALLSCAT_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        logger.debug("compiled kernels unavailable, using numpy fallback")

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

NAME = "compiled" if _compiled is not None else "python"
kernels = BACKENDS[NAME]


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def slp_dense(targets, nodes, weights, fine_nodes, fine_weights, centers,
              radii, eta, self_vals, backend=None):
    k = BACKENDS[backend] if backend else kernels
    return k.slp_dense(_f64(targets), _f64(nodes), _f64(weights),
                       _f64(fine_nodes), _f64(fine_weights), _f64(centers),
                       _f64(radii), float(eta), _f64(self_vals))


def slp_coarse_matvec(targets, nodes, weights, x, backend=None):
    k = BACKENDS[backend] if backend else kernels
    return k.slp_coarse_matvec(_f64(targets), _f64(nodes), _f64(weights), _f64(x))


def slp_centroid_matvec(points, weights, x, backend=None):
    k = BACKENDS[backend] if backend else kernels
    return k.slp_centroid_matvec(_f64(points), _f64(weights), _f64(x))


def helmholtz_pairs(points, kappa, backend=None):
    k = BACKENDS[backend] if backend else kernels
    return k.helmholtz_pairs(_f64(points), float(kappa))


def helmholtz_potential(targets, sources, kappa, charges, backend=None):
    """Sum of Helmholtz monopoles; ``charges`` is (n_sources,) or (n_sources, n_rhs)."""
    k = BACKENDS[backend] if backend else kernels
    q = np.asarray(charges, dtype=np.complex128)
    vec = q.ndim == 1
    q = np.ascontiguousarray(q.reshape(q.shape[0], -1))
    out = k.helmholtz_potential(_f64(targets), _f64(sources), float(kappa), q)
    return out[:, 0] if vec else out
