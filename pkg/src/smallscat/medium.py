"""Equivalent-medium scattering on a uniform voxel grid.

The unknown ``Y = -U^t`` solves the Lippmann-Schwinger equation

    Y(z) + int Phi(z, y) q(y) Y(y) dy = -exp(i k z . theta),

discretised by a Nystrom rule at voxel centres. Off-diagonal weights are
``V * Phi``; the self weight integrates ``1/(4 pi r)`` exactly over the ball
of the same volume ``V`` (giving ``R^2 / 2``) and adds the midpoint value
``i k V / (4 pi)`` of the smooth remainder. The kernel depends only on index
offsets, so products are FFT convolutions on a doubled grid.
"""
import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.sparse.linalg

from .farfield import FarFieldTable, convention_factor
from .geometry import Ball, Box, CellGrid, DensityField, Domain, ObstacleSet

logger = logging.getLogger(__name__)

TOL = 1e-10
MAXITER = 2000


class PotentialError(ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class LSConvergenceError(RuntimeError):
    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


@dataclass(frozen=True)
class Region:
    """Region ``E_j`` carrying ``K + 1`` obstacles per unit ``a``-volume of capacitance ``cbar``."""

    shape: "Box | Ball"
    k: float
    cbar: float

    @property
    def q(self) -> float:
        return (self.k + 1.0) * self.cbar


@dataclass(frozen=True, eq=False)
class PotentialGrid:
    """Voxel values ``q`` on the box ``[lower, lower + shape * h]``."""

    lower: np.ndarray
    h: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise PotentialError("potential values must be a 3-d array")
        if not np.isfinite(v).all() or (v < 0).any():
            raise PotentialError("potential must be finite and nonnegative")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "lower", np.asarray(self.lower, float).reshape(3))
        object.__setattr__(self, "h", np.broadcast_to(np.asarray(self.h, float), (3,)).copy())

    @property
    def shape(self):
        return self.values.shape

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def mask(self) -> np.ndarray:
        return self.values > 0

    def centers(self) -> np.ndarray:
        """Voxel centres as an (nx, ny, nz, 3) array."""
        axes = [self.lower[i] + (np.arange(n) + 0.5) * self.h[i] for i, n in enumerate(self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def scaled(self, lam: float) -> "PotentialGrid":
        return PotentialGrid(self.lower, self.h, self.values * lam)

    def digest(self) -> str:
        m = hashlib.sha256()
        for arr in (self.lower, self.h, np.asarray(self.shape, float), self.values):
            m.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        return m.hexdigest()


def _grid_axes(lower, upper, res):
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    res = np.broadcast_to(np.asarray(res, int), (3,))
    if (res < 1).any():
        raise PotentialError("grid resolution must be a positive integer")
    return lower, (upper - lower) / res, tuple(int(r) for r in res)


def _empty(lower, h, shape):
    return PotentialGrid(lower, h, np.zeros(shape))


def potential_from_regions(regions, res, bbox: "Domain | None" = None) -> PotentialGrid:
    """Piecewise-constant ``q = (K + 1) cbar`` on disjoint regions, zero elsewhere."""
    bbox = bbox or Domain()
    lower, h, shape = _grid_axes(bbox.lower, bbox.upper, res)
    pts = _empty(lower, h, shape).centers().reshape(-1, 3)
    q = np.zeros(len(pts))
    owner = np.full(len(pts), -1)
    for j, reg in enumerate(regions):
        if reg.k < 0 or reg.cbar < 0:
            raise PotentialError(f"region {j} has a negative K or capacitance", j)
        inside = reg.shape.contains(pts)
        if not inside.any():
            raise PotentialError(f"region {j} receives no voxel at resolution {shape}", j)
        clash = inside & (owner >= 0)
        if clash.any():
            raise PotentialError(f"regions {owner[clash][0]} and {j} overlap", j)
        owner[inside] = j
        q[inside] = reg.q
    return PotentialGrid(lower, h, q.reshape(shape))


def potential_from_cells(grid: CellGrid, cbar, res, bbox: "Domain | None" = None) -> PotentialGrid:
    """``q = (K(z_j) + 1) cbar_j`` on each cell ``E_j`` of a partition."""
    cbar = np.broadcast_to(np.asarray(cbar, float), (grid.n_cells,))
    return _voxelize_cells(grid, (grid.k_values + 1.0) * cbar, res, bbox)


def _voxelize_cells(grid: CellGrid, values, res, bbox):
    """Constant ``values[j]`` on cell ``j``, by centre membership in the half-open box."""
    bbox = bbox or grid.domain
    lower, h, shape = _grid_axes(bbox.lower, bbox.upper, res)
    q = np.zeros(shape)
    axes = [lower[i] + (np.arange(n) + 0.5) * h[i] for i, n in enumerate(shape)]
    for j in range(grid.n_cells):
        sl = []
        for i in range(3):
            lo = np.searchsorted(axes[i], grid.lower[j, i], side="left")
            hi = np.searchsorted(axes[i], grid.upper[j, i], side="left")
            sl.append(slice(lo, hi))
        block = q[tuple(sl)]
        if block.size == 0:
            raise PotentialError(f"cell {j} receives no voxel at resolution {shape}", j)
        block[...] = values[j]
    return PotentialGrid(lower, h, q)


def potential_from_obstacles(obstacles: ObstacleSet, grid: CellGrid, res,
                             bbox: "Domain | None" = None) -> PotentialGrid:
    """Piecewise medium of a placement: total capacitance of each cell over its volume.

    For cells of volume ``a [K + 1] / (K + 1)`` holding ``[K + 1]`` equal
    obstacles this is ``(K(z_j) + 1) cbar_j``.
    """
    total = np.bincount(obstacles.cell_index, weights=obstacles.capacitances,
                        minlength=grid.n_cells)
    counts = np.bincount(obstacles.cell_index, minlength=grid.n_cells)
    if (counts == 0).any():
        raise PotentialError("a cell holds no obstacle", int(np.argmin(counts)))
    return _voxelize_cells(grid, total / grid.volumes, res, bbox)


def potential_from_density(K: DensityField, cbar: float, res, domain: "Domain | None" = None,
                           bbox: "Domain | None" = None) -> PotentialGrid:
    """Continuous ``q = (K(y) + 1) cbar`` inside ``domain``, sampled at voxel centres."""
    domain = domain or Domain()
    bbox = bbox or domain
    lower, h, shape = _grid_axes(bbox.lower, bbox.upper, res)
    pts = _empty(lower, h, shape).centers().reshape(-1, 3)
    inside = domain.contains(pts)
    q = np.zeros(len(pts))
    q[inside] = (K(pts[inside]) + 1.0) * cbar
    return PotentialGrid(lower, h, q.reshape(shape))


def build_potential(source, res, bbox=None, cbar=None, grid=None) -> PotentialGrid:
    """Dispatch on the kind of description passed in ``source``."""
    if isinstance(source, ObstacleSet):
        if grid is None:
            raise PotentialError("an obstacle set needs its cell grid")
        return potential_from_obstacles(source, grid, res, bbox)
    if isinstance(source, CellGrid):
        return potential_from_cells(source, 2.0 * math.pi if cbar is None else cbar, res, bbox)
    if isinstance(source, DensityField):
        return potential_from_density(source, 2.0 * math.pi if cbar is None else cbar, res,
                                      bbox=bbox)
    return potential_from_regions(list(source), res, bbox)


def self_weight(voxel_volume: float, kappa: float) -> complex:
    """Integral of ``Phi`` over the equal-volume ball: static ``R^2/2`` plus midpoint remainder."""
    R = (3.0 * voxel_volume / (4.0 * math.pi)) ** (1.0 / 3.0)
    return 0.5 * R * R + 1j * kappa * voxel_volume / (4.0 * math.pi)


class LSOperator:
    """``Y -> Y + G * (q Y)`` with ``G`` applied by zero-padded FFT convolution."""

    def __init__(self, potential: PotentialGrid, kappa: float):
        if not kappa > 0:
            raise ValueError("wavenumber must be positive")
        self.potential = potential
        self.kappa = float(kappa)
        self.shape = potential.shape
        self.n = int(np.prod(self.shape))
        self.pad = tuple(2 * s for s in self.shape)
        h = potential.h
        offs = [np.where(np.arange(p) < p // 2, np.arange(p), np.arange(p) - p) * h[i]
                for i, p in enumerate(self.pad)]
        X, Yg, Z = np.meshgrid(*offs, indexing="ij", sparse=True)
        r = np.sqrt(X * X + Yg * Yg + Z * Z)
        r[0, 0, 0] = 1.0
        V = potential.voxel_volume
        g = V * np.exp(1j * kappa * r) / (4.0 * math.pi * r)
        g[0, 0, 0] = self_weight(V, kappa)
        self._ghat = scipy.fft.fftn(g, workers=-1)
        self._q = potential.values.astype(complex)

    def convolve(self, x: np.ndarray) -> np.ndarray:
        """``sum_j w_ij Phi(z_i, y_j) x_j`` on the grid."""
        xh = scipy.fft.fftn(x.reshape(self.shape), s=self.pad, workers=-1)
        out = scipy.fft.ifftn(xh * self._ghat, workers=-1)
        return out[tuple(slice(0, s) for s in self.shape)]

    def apply_potential(self, Y: np.ndarray) -> np.ndarray:
        return self.convolve(self._q * Y.reshape(self.shape)).reshape(Y.shape)

    def matvec(self, Y: np.ndarray) -> np.ndarray:
        return Y + self.apply_potential(Y)

    def as_linear_operator(self):
        return scipy.sparse.linalg.LinearOperator((self.n, self.n), matvec=self.matvec,
                                                  dtype=complex)

    def incident(self, theta) -> np.ndarray:
        th = np.asarray(theta, float).reshape(3)
        return np.exp(1j * self.kappa * (self.potential.centers() @ th))


@dataclass(frozen=True, eq=False)
class TotalFieldGrid:
    """Solved ``Y = -U^t`` on the voxel grid of ``potential``."""

    Y: np.ndarray
    theta: np.ndarray
    kappa: float
    residual: float
    iterations: int = 0
    history: list = field(default_factory=list)

    @property
    def total(self) -> np.ndarray:
        return -self.Y


def solve_ls(potential: PotentialGrid, kappa: float, theta, tol: float = TOL,
             operator: "LSOperator | None" = None, maxiter: int = MAXITER) -> TotalFieldGrid:
    """GMRES solve of the discrete Lippmann-Schwinger system for one incident direction."""
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    op = operator or LSOperator(potential, kappa)
    th = np.asarray(theta, float).reshape(3)
    rhs = -op.incident(th).ravel()
    if not potential.mask.any():
        return TotalFieldGrid(rhs.reshape(op.shape), th, float(kappa), 0.0)
    hist = []
    y, info = scipy.sparse.linalg.gmres(
        op.as_linear_operator(), rhs, x0=rhs, rtol=tol, atol=0.0, restart=min(100, maxiter),
        maxiter=-(-maxiter // min(100, maxiter)), callback=hist.append, callback_type="pr_norm")
    res = float(np.linalg.norm(op.matvec(y) - rhs) / np.linalg.norm(rhs))
    if info != 0 or res > 10 * tol:
        stalled = len(hist) > 20 and hist[-1] > 0.5 * hist[-20]
        why = "stagnated (possible resonance)" if stalled else "did not converge"
        raise LSConvergenceError(f"Lippmann-Schwinger GMRES {why}; residual {res:.3e}", hist)
    logger.debug("LS solve %s: %d iterations, residual %.2e", op.shape, len(hist), res)
    return TotalFieldGrid(y.reshape(op.shape), th, float(kappa), res, len(hist), hist)


def born_series(potential: PotentialGrid, kappa: float, theta, n: int,
                operator: "LSOperator | None" = None) -> TotalFieldGrid:
    """``n`` fixed-point iterations ``Y <- -U^i - G * (q Y)`` started from ``-U^i``."""
    if n < 0:
        raise ValueError("number of iterations must be nonnegative")
    op = operator or LSOperator(potential, kappa)
    th = np.asarray(theta, float).reshape(3)
    rhs = -op.incident(th)
    y = rhs.copy()
    for _ in range(n):
        y = rhs - op.apply_potential(y)
    res = float(np.linalg.norm(op.matvec(y.ravel()) - rhs.ravel()) / np.linalg.norm(rhs))
    return TotalFieldGrid(y, th, float(kappa), res, n)


def ls_far_field(potential: PotentialGrid, fields, xhat, convention: str = "physical") -> FarFieldTable:
    """``U_inf(xhat, theta) = int exp(-i k xhat . y) q(y) Y(y) dy`` by the voxel rule."""
    fields = [fields] if isinstance(fields, TotalFieldGrid) else list(fields)
    if not fields:
        raise ValueError("no solved fields")
    kappa = fields[0].kappa
    if any(f.kappa != kappa for f in fields):
        raise ValueError("fields were solved at different wavenumbers")
    if any(f.Y.shape != potential.shape for f in fields):
        raise ValueError("fields are not on the potential's grid")
    xh = np.atleast_2d(np.asarray(xhat, float))
    m = potential.mask
    y = potential.centers()[m]
    w = potential.values[m] * potential.voxel_volume
    src = np.stack([f.Y[m] for f in fields], axis=1) * w[:, None]
    vals = np.exp(-1j * kappa * (xh @ y.T)) @ src
    theta = np.stack([f.theta for f in fields])
    return FarFieldTable(xh, theta, vals * convention_factor(convention), convention, kappa)


def medium_far_field(potential: PotentialGrid, kappa: float, theta, xhat,
                     convention: str = "physical", tol: float = TOL):
    """Solve for every incident direction and return ``(table, residuals)``."""
    op = LSOperator(potential, kappa)
    fields = [solve_ls(potential, kappa, th, tol, operator=op) for th in np.atleast_2d(theta)]
    return ls_far_field(potential, fields, xhat, convention), np.array([f.residual for f in fields])
