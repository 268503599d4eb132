"""Point-scatterer (Foldy-Lax) multiple-scattering system.

For obstacles of capacitance ``C_m = cbar_m * a`` centred at ``z_m`` the
charges solve

    Q_m + sum_{j != m} C_m Phi(z_m, z_j) Q_j = -C_m U^i(z_m),

with ``Phi(x, y) = exp(i k |x - y|) / (4 pi |x - y|)``. In the rescaled
unknowns ``Y_m = Q_m / C_m`` this reads ``B Y = U^i`` where ``B`` has
``-1`` on the diagonal and ``-C_j Phi(z_m, z_j)`` off it.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from . import _backend
from .farfield import FarFieldTable, convention_factor
from .geometry import GeometryError, ObstacleSet, min_cos_pairs

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2000
TOL = 1e-10
BOUND_SLACK = 1e-9


class FoldyLaxError(RuntimeError):
    """Factorisation or convergence failure; carries the residual history."""

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


@dataclass(frozen=True)
class HelmholtzKernel:
    kappa: float

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ValueError(f"wavenumber must be positive and finite, got {self.kappa}")

    def __call__(self, x, y):
        r = np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)
        return np.exp(1j * self.kappa * r) / (4.0 * np.pi * r)


@dataclass(frozen=True, eq=False)
class CouplingSystem:
    """Assembled ``B`` together with the data needed to build right-hand sides."""

    B: np.ndarray
    centers: np.ndarray
    cbar: np.ndarray
    a: float
    kappa: float

    @property
    def M(self) -> int:
        return len(self.centers)

    @property
    def capacitances(self) -> np.ndarray:
        return self.cbar * self.a

    def incident(self, theta) -> np.ndarray:
        """``U^i(z_m, theta_j) = exp(i k z_m . theta_j)`` as an (M, n_theta) array."""
        th = np.atleast_2d(np.asarray(theta, float))
        return np.exp(1j * self.kappa * (self.centers @ th.T))

    def symmetrized(self) -> np.ndarray:
        """``-D^{1/2} B D^{-1/2}`` with ``D = diag(C)``: complex symmetric, identity diagonal."""
        s = np.sqrt(self.capacitances)
        A = -(s[:, None] * self.B / s[None, :])
        np.fill_diagonal(A, 1.0)
        return A


def assemble(obstacles: ObstacleSet, kappa: float) -> CouplingSystem:
    HelmholtzKernel(kappa)
    z = np.asarray(obstacles.centers, float)
    if obstacles.M > 1:
        from scipy.spatial.distance import pdist
        if pdist(z).min() == 0.0:
            raise GeometryError("coincident obstacle centres make the kernel singular")
    phi = _backend.helmholtz_pairs(z, kappa)
    B = -phi * obstacles.capacitances[None, :]
    np.fill_diagonal(B, -1.0)
    B.setflags(write=False)
    return CouplingSystem(B, z, np.asarray(obstacles.cbar, float), float(obstacles.a), float(kappa))


@dataclass(frozen=True)
class InvertibilityReport:
    M: int
    d: float
    cbar_norm: float
    a: float
    a_limit: float
    margin: float
    size_ok: bool
    min_cos: float
    cos_ok: bool
    diameter: float
    diameter_ok: bool

    @property
    def hypotheses_hold(self) -> bool:
        return self.M == 1 or (self.size_ok and self.cos_ok)

    @property
    def bound_factor(self) -> float:
        """``4 (1 - 3 t a |C| / (5 pi d))^{-2}``; ``inf`` when the hypotheses fail."""
        if self.M == 1:
            return 1.0
        if not self.hypotheses_hold:
            return math.inf
        x = 3.0 * self.min_cos * self.a * self.cbar_norm / (5.0 * math.pi * self.d)
        return 4.0 / (1.0 - x) ** 2


def check_invertibility(obstacles: ObstacleSet, kappa: float) -> InvertibilityReport:
    """Evaluate the computable sufficient conditions for ``B`` to be invertible.

    These are ``a < (5 pi / 3) d / |cbar|`` (Euclidean norm) and
    ``min cos(k |z_m - z_j|) >= 0``. The diameter test ``diam < pi / (2 k)``
    is reported as a convenient sufficient surrogate for the second one.
    """
    if obstacles.M < 1:
        raise GeometryError("empty obstacle set")
    z = obstacles.centers
    nrm = float(np.linalg.norm(obstacles.cbar))
    if obstacles.M > 1:
        from scipy.spatial.distance import pdist
        d = float(pdist(z).min() - obstacles.a)
    else:
        d = math.inf
    limit = (5.0 * math.pi / 3.0) * d / nrm if d > 0 else 0.0
    mc = min_cos_pairs(z, kappa)
    if obstacles.domain is not None:
        diam = obstacles.domain.diameter
    else:
        diam = float(np.linalg.norm(np.ptp(z, axis=0))) + obstacles.a
    return InvertibilityReport(
        M=obstacles.M, d=d, cbar_norm=nrm, a=obstacles.a, a_limit=limit,
        margin=limit - obstacles.a, size_ok=bool(obstacles.a < limit),
        min_cos=mc, cos_ok=bool(mc >= 0.0), diameter=diam,
        diameter_ok=bool(diam < math.pi / (2.0 * kappa)))


@dataclass(frozen=True, eq=False)
class ChargeVector:
    """Charges for a batch of incident directions (column ``j`` is ``theta[j]``)."""

    Q: np.ndarray
    Y: np.ndarray
    theta: np.ndarray
    residual: np.ndarray
    method: str
    iterations: list = field(default_factory=list)
    energy_ratio: float = float("nan")


def _residual(B, Y, U):
    r = B @ Y - U
    return np.abs(r).max(axis=0) / np.abs(U).max(axis=0)


def solve(system: CouplingSystem, theta, report: "InvertibilityReport | None" = None,
          force: bool = False, method: str = "auto", tol: float = TOL,
          dense_limit: int = DENSE_LIMIT) -> ChargeVector:
    """Solve ``B Y = U^i`` for every incident direction in ``theta``.

    Below ``dense_limit`` one LU factorisation serves all directions. Above
    it, GMRES runs on the complex-symmetric form ``(I + D^{1/2} Phi D^{1/2}) w
    = -D^{1/2} U^i`` with ``w = D^{1/2} Y``. When ``report`` says the
    invertibility hypotheses hold, the energy bound
    ``sum |Y|^2 <= bound_factor * sum |U^i|^2`` is checked and a violation
    raises.
    """
    th = np.atleast_2d(np.asarray(theta, float))
    if report is not None and not report.hypotheses_hold and not force:
        raise FoldyLaxError("invertibility hypotheses fail; pass force=True to solve anyway")
    U = system.incident(th)
    if method == "auto":
        method = "direct" if system.M <= dense_limit else "gmres"
    iters = []
    if method == "direct":
        try:
            lu = scipy.linalg.lu_factor(system.B, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise FoldyLaxError(f"factorisation failed: {exc}") from exc
        Y = scipy.linalg.lu_solve(lu, U)
    elif method == "gmres":
        A = system.symmetrized()
        s = np.sqrt(system.capacitances)
        op = scipy.sparse.linalg.aslinearoperator(A)
        Y = np.empty_like(U)
        for j in range(U.shape[1]):
            hist = []
            b = -s * U[:, j]
            w, info = scipy.sparse.linalg.gmres(
                op, b, rtol=tol, atol=0.0, restart=min(system.M, 200), maxiter=50,
                callback=hist.append, callback_type="pr_norm")
            iters.append(len(hist))
            if info != 0:
                raise FoldyLaxError(f"GMRES did not converge for direction {j}", hist)
            Y[:, j] = w / s
    else:
        raise ValueError(f"unknown method {method!r}")
    res = _residual(system.B, Y, U)
    limit = 1e-8 if method == "direct" else 10 * tol
    if not np.all(res <= max(limit, tol)):
        raise FoldyLaxError(f"residual {res.max():.3e} above tolerance", res)
    ratio = float("nan")
    if report is not None and report.hypotheses_hold:
        energy = (np.abs(Y) ** 2).sum(axis=0)
        ratio = float((energy / (np.abs(U) ** 2).sum(axis=0)).max())
        if ratio > report.bound_factor * (1 + BOUND_SLACK):
            raise FoldyLaxError(
                f"energy bound violated: ratio {ratio:.6g} > {report.bound_factor:.6g}")
    Q = Y * system.capacitances[:, None]
    logger.debug("foldy-lax %s solve M=%d n_theta=%d max residual %.2e",
                 method, system.M, len(th), res.max())
    return ChargeVector(Q, Y, th, res, method, iters, ratio)


def far_field(centers, charges: ChargeVector, xhat, kappa: float,
              convention: str = "physical") -> FarFieldTable:
    """``U_inf(xhat, theta) = sum_m exp(-i k xhat . z_m) Q_m``, scaled to ``convention``."""
    z = np.asarray(getattr(centers, "centers", centers), float)
    xh = np.atleast_2d(np.asarray(xhat, float))
    if charges.Q.shape[0] != len(z):
        raise ValueError(f"{charges.Q.shape[0]} charges for {len(z)} centres")
    E = np.exp(-1j * kappa * (xh @ z.T))
    vals = (E @ charges.Q) * convention_factor(convention)
    return FarFieldTable(xh, charges.theta, vals, convention, float(kappa))


def scattered_field(obstacles: ObstacleSet, charges: ChargeVector, points, kappa: float,
                    column: int = 0) -> np.ndarray:
    """``U^s(x) = sum_m Phi(x, z_m) Q_m`` for the incident direction ``theta[column]``."""
    x = np.atleast_2d(np.asarray(points, float))
    z = obstacles.centers
    from scipy.spatial import cKDTree
    dist, idx = cKDTree(z).query(x)
    inner = 0.5 * obstacles.a * np.asarray(obstacles.tm)[idx]
    bad = np.flatnonzero(dist <= inner)
    if bad.size:
        raise GeometryError(f"evaluation point {bad[0]} lies inside obstacle {idx[bad[0]]}",
                            int(bad[0]))
    return _backend.helmholtz_potential(x, z, kappa, charges.Q[:, column])


def simulate(obstacles: ObstacleSet, kappa: float, theta, xhat, convention: str = "physical",
             force: bool = False, tol: float = TOL):
    """Assemble, check, solve and evaluate in one call; returns ``(table, charges, report)``."""
    report = check_invertibility(obstacles, kappa)
    system = assemble(obstacles, kappa)
    charges = solve(system, theta, report=report, force=force, tol=tol)
    return far_field(obstacles, charges, xhat, kappa, convention), charges, report
