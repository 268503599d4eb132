"""Electrostatic capacitance of reference bodies by single-layer collocation.

The density ``sigma`` solves

    int_{dB} sigma(s) / (4 pi |t - s|) ds = 1,   t on dB,

with piecewise-constant unknowns collocated at triangle centroids. The
capacitance is ``int sigma ds``. For a sphere of radius r the density is
``1/r`` and the capacitance ``4 pi r``.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _backend
from .mesh import MeshError, SurfaceMesh

logger = logging.getLogger(__name__)

#: triangles above which the dense matrix is replaced by a matrix-free GMRES
DENSE_LIMIT = 8192
NEAR_ETA = 3.0
NEAR_DEPTH = 2
PREC_ETA = 3.0
BOUNDARY_SLACK = 1e-9


class CapacitanceError(RuntimeError):
    """Raised when the collocation system cannot be solved reliably."""


# barycentric rules, weights sum to one
_RULES = {
    1: ([[1 / 3, 1 / 3, 1 / 3]], [1.0]),
    2: ([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]],
        [1 / 3, 1 / 3, 1 / 3]),
    3: ([[0.108103018168070, 0.445948490915965, 0.445948490915965],
         [0.445948490915965, 0.108103018168070, 0.445948490915965],
         [0.445948490915965, 0.445948490915965, 0.108103018168070],
         [0.816847572980459, 0.091576213509771, 0.091576213509771],
         [0.091576213509771, 0.816847572980459, 0.091576213509771],
         [0.091576213509771, 0.091576213509771, 0.816847572980459]],
        [0.223381589678011] * 3 + [0.109951743655322] * 3),
    4: ([[1 / 3, 1 / 3, 1 / 3],
         [0.059715871789770, 0.470142064105115, 0.470142064105115],
         [0.470142064105115, 0.059715871789770, 0.470142064105115],
         [0.470142064105115, 0.470142064105115, 0.059715871789770],
         [0.797426985353087, 0.101286507323456, 0.101286507323456],
         [0.101286507323456, 0.797426985353087, 0.101286507323456],
         [0.101286507323456, 0.101286507323456, 0.797426985353087]],
        [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3),
}


@lru_cache(maxsize=None)
def triangle_rule(order: int, depth: int = 0):
    """Barycentric nodes and weights, optionally on a ``4**depth`` subdivision."""
    if order not in _RULES:
        raise ValueError(f"quadrature order must be one of {sorted(_RULES)}")
    bary, w = (np.array(x, dtype=float) for x in _RULES[order])
    tris = [np.eye(3)]
    for _ in range(depth):
        nxt = []
        for t in tris:
            a, b, c = t
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            nxt += [np.array(x) for x in ((a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca))]
        tris = nxt
    nodes = np.concatenate([bary @ t for t in tris])
    weights = np.tile(w, len(tris)) / len(tris)
    return nodes, weights


def self_integral(corners: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Exact ``int_T ds / |x - s|`` for points ``x`` lying in the plane of ``T``.

    Parameters
    ----------
    corners : (n, 3, 3) triangle corners
    point : (n, 3) in-plane points, strictly inside each triangle

    The triangle is split into three sub-triangles with apex ``x``; over each,
    the integral in polar coordinates reduces to
    ``h * (asinh(s1 / h) - asinh(s0 / h))`` with ``h`` the distance from ``x``
    to the edge line and ``s0, s1`` the signed edge-end offsets from the foot
    of the perpendicular.
    """
    total = np.zeros(len(corners))
    for k in range(3):
        p0 = corners[:, k]
        p1 = corners[:, (k + 1) % 3]
        e = p1 - p0
        length = np.linalg.norm(e, axis=1)
        u = e / length[:, None]
        s0 = np.einsum("ij,ij->i", p0 - point, u)
        s1 = s0 + length
        foot = p0 - s0[:, None] * u
        h = np.linalg.norm(foot - point, axis=1)
        total += h * (np.arcsinh(s1 / h) - np.arcsinh(s0 / h))
    return total


@dataclass(frozen=True, eq=False)
class SurfaceDensity:
    """Piecewise-constant single-layer density on a mesh."""

    values: np.ndarray
    residual: float
    n_triangles: int
    quad_order: int
    method: str
    iterations: int = 0
    rcond: float = float("nan")


@dataclass(frozen=True)
class CapacitanceValue:
    """Capacitance ``cbar`` (per unit scale of the body) with an error estimate.

    ``error_estimate`` is NaN when no refinement information was supplied.
    """

    cbar: float
    error_estimate: float = float("nan")

    def __post_init__(self):
        if not self.cbar > 0:
            raise CapacitanceError(f"non-positive capacitance {self.cbar}")


class _Discretization:
    def __init__(self, mesh: SurfaceMesh, quad_order: int, eta=NEAR_ETA, depth=NEAR_DEPTH):
        p = mesh.corners
        bary, w = triangle_rule(quad_order)
        fbary, fw = triangle_rule(quad_order, depth)
        area = mesh.areas
        self.targets = mesh.centroids
        if quad_order == 1:
            self.nodes = self.targets[:, None, :]
        else:
            self.nodes = np.einsum("qk,nkd->nqd", bary, p)
        self.weights = area[:, None] * w[None, :]
        self.fine_nodes = np.einsum("qk,nkd->nqd", fbary, p)
        self.fine_weights = area[:, None] * fw[None, :]
        self.radii = mesh.diameters
        # the slack keeps pairs sitting exactly on the near/far boundary on one
        # side under rescaling, so similar meshes give similar systems
        self.eta = eta * (1.0 + BOUNDARY_SLACK)
        self.self_vals = self_integral(p, self.targets) / (4 * np.pi)

    def dense(self):
        return _backend.slp_dense(self.targets, self.nodes, self.weights,
                                  self.fine_nodes, self.fine_weights, self.targets,
                                  self.radii, self.eta, self.self_vals)

    def near_pairs(self):
        """Row/col indices of self and near pairs (the sparse correction pattern)."""
        from scipy.spatial import cKDTree

        tree = cKDTree(self.targets)
        reach = self.eta * self.radii.max()
        pairs = tree.query_pairs(reach, output_type="ndarray")
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        d2 = ((self.targets[rows] - self.targets[cols]) ** 2).sum(-1)
        keep = d2 < (self.eta * self.radii[cols]) ** 2
        n = len(self.targets)
        return (np.concatenate([rows[keep], np.arange(n)]),
                np.concatenate([cols[keep], np.arange(n)]))

    def sparse_parts(self):
        rows, cols = self.near_pairs()
        n = len(self.targets)
        t = self.targets[rows][:, None, :]
        with np.errstate(divide="ignore"):
            rf = np.linalg.norm(t - self.fine_nodes[cols], axis=-1)
            exact = (self.fine_weights[cols] / rf).sum(-1) / (4 * np.pi)
        diag = rows == cols
        exact[diag] = self.self_vals[rows[diag]]
        with np.errstate(divide="ignore"):
            r = np.linalg.norm(t - self.nodes[cols], axis=-1)
            coarse = (self.weights[cols] / r).sum(-1) / (4 * np.pi)
        coarse[diag] = 0.0
        d2 = ((self.targets[rows] - self.targets[cols]) ** 2).sum(-1)
        close = d2 < (PREC_ETA * (1.0 + BOUNDARY_SLACK) * self.radii[cols]) ** 2
        prec = sp.csc_matrix((exact[close], (rows[close], cols[close])), shape=(n, n))
        corr = sp.csr_matrix((exact - coarse, (rows, cols)), shape=(n, n))
        return prec, corr

    def far_matvec(self, x):
        if self.nodes.shape[1] == 1:
            return _backend.slp_centroid_matvec(self.targets, self.weights[:, 0], x)
        return _backend.slp_coarse_matvec(self.targets, self.nodes, self.weights, x)


def solve_density(mesh: SurfaceMesh, quad_order: int = 1, tol: float = 1e-10,
                  dense_limit: int = DENSE_LIMIT, check: bool = True,
                  x0=None) -> SurfaceDensity:
    """Solve the first-kind single-layer equation with unit right-hand side.

    Meshes up to ``dense_limit`` triangles are assembled densely and LU
    factorised; larger meshes use GMRES with a matrix-free far field and an
    incomplete LU of the closest-neighbour block as preconditioner. ``x0``
    is an optional initial guess for the iterative path.
    """
    if quad_order < 1:
        raise ValueError("quadrature order must be >= 1")
    if check:
        mesh.validate()
    disc = _Discretization(mesh, quad_order)
    n = mesh.n_triangles
    rhs = np.ones(n)
    if n <= dense_limit:
        A = disc.dense()
        lu, piv = sla.lu_factor(A, check_finite=True)
        anorm = np.abs(A).sum(axis=0).max()
        rcond, info = sla.lapack.dgecon(lu, anorm)
        if info != 0 or not rcond > 1e-14:
            raise CapacitanceError(f"collocation matrix is singular (rcond={rcond:.3e})")
        sigma = sla.lu_solve((lu, piv), rhs)
        residual = float(np.abs(A @ sigma - rhs).max())
        return SurfaceDensity(sigma, residual, n, quad_order, "dense", 0, float(rcond))

    near, corr = disc.sparse_parts()

    def apply(x):
        return disc.far_matvec(x) + corr @ x

    op = spla.LinearOperator((n, n), matvec=apply, dtype=float)
    ilu = spla.spilu(near, drop_tol=1e-4, fill_factor=4)
    prec = spla.LinearOperator((n, n), matvec=ilu.solve, dtype=float)
    history = []
    sigma, info = spla.gmres(op, rhs, x0=x0, rtol=tol, atol=0.0, restart=200, maxiter=5,
                             M=prec, callback=history.append, callback_type="pr_norm")
    residual = float(np.abs(apply(sigma) - rhs).max())
    if info != 0:
        raise CapacitanceError(f"GMRES did not converge (info={info}, residual={residual:.3e}, "
                               f"history={history[-5:]})")
    logger.debug("matrix-free solve: %d iterations, residual %.2e", len(history), residual)
    return SurfaceDensity(sigma, residual, n, quad_order, "gmres", len(history))


def capacitance(density: SurfaceDensity, mesh: SurfaceMesh,
                reference: "CapacitanceValue | None" = None,
                order: float = 1.0) -> CapacitanceValue:
    """Total charge ``sum sigma * area``.

    When ``reference`` holds the value from the once-refined mesh, the
    error estimate is the two-level Richardson correction
    ``|C_fine - C_coarse| / (2**order - 1)``.
    """
    if len(density.values) != mesh.n_triangles:
        raise ValueError(f"density has {len(density.values)} values, mesh has "
                         f"{mesh.n_triangles} triangles")
    cbar = float(np.dot(density.values, mesh.areas))
    err = float("nan")
    if reference is not None:
        err = abs(reference.cbar - cbar) / (2.0 ** order - 1.0)
    return CapacitanceValue(cbar, err)


def capacitance_sphere(r: float) -> CapacitanceValue:
    """Exact capacitance ``4 pi r`` of a sphere."""
    if not r > 0:
        raise ValueError("radius must be positive")
    return CapacitanceValue(4.0 * np.pi * r, 0.0)


def richardson(values, ratio: float = 2.0, order: "float | None" = None):
    """Extrapolate a sequence computed on meshes refined by ``ratio``.

    With three or more values the order is estimated from the last three
    (unless given); with two, ``order`` defaults to 1. Returns
    ``(extrapolated, order)``.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        raise ValueError("need at least two refinement levels")
    if order is None:
        if len(v) >= 3:
            d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
            if d1 == 0 or d2 == 0 or d1 / d2 <= 1:
                order = 1.0
            else:
                order = float(np.log(d1 / d2) / np.log(ratio))
        else:
            order = 1.0
    return float(v[-1] + (v[-1] - v[-2]) / (ratio ** order - 1.0)), order


def refinement_table(mesh: SurfaceMesh, levels: int, quad_order: int = 1):
    """Capacitance over successive midpoint refinements.

    Returns rows ``(level, triangles, cbar, richardson_estimate)``; the
    estimate is NaN on the first row. Each level's density, repeated over
    the four children of every triangle, seeds the next iterative solve.
    """
    rows, values = [], []
    m = mesh
    density = None
    for level in range(levels + 1):
        if level:
            m = m.refined()
        x0 = None if density is None else np.repeat(density.values, 4)
        density = solve_density(m, quad_order, x0=x0)
        c = capacitance(density, m)
        values.append(c.cbar)
        est = richardson(values)[0] if len(values) >= 2 else float("nan")
        rows.append((level, m.n_triangles, c.cbar, est))
        logger.info("level %d: %d triangles, cbar=%.10f", level, m.n_triangles, c.cbar)
    return rows

