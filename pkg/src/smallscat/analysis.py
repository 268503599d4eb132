"""Convergence experiments: Foldy-Lax against the equivalent medium."""
import csv
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from . import foldylax, medium
from .farfield import ConventionError, FarFieldTable, symmetric_grid, write_farfield_csv
from .geometry import (DensityField, Domain, GeometryError, ShapeAssignment, partition_domain,
                       place_obstacles)

logger = logging.getLogger(__name__)

WORKERS_ENV = "SMALLSCAT_WORKERS"


class GridMismatchError(ValueError):
    pass


def _check_compatible(A: FarFieldTable, B: FarFieldTable):
    if A.convention != B.convention:
        raise ConventionError(f"tables use different conventions ({A.convention} vs {B.convention})")
    if not A.same_grid(B):
        raise GridMismatchError("tables are on different direction grids")


def sup_error(A: FarFieldTable, B: FarFieldTable) -> float:
    """``max |A - B|`` over all ``(xhat, theta)`` pairs."""
    _check_compatible(A, B)
    return float(np.abs(A.values - B.values).max())


def _negation_index(src: np.ndarray, dst: np.ndarray, what: str, tol: float = 1e-10):
    dist, idx = cKDTree(dst).query(-src)
    if (dist > tol).any():
        raise GridMismatchError(f"{what} grid is not closed under negation")
    return idx


def reciprocity_defect(table: FarFieldTable) -> float:
    """``max |U(xhat, theta) - U(-theta, -xhat)|``; needs negation-closed grids."""
    row = _negation_index(table.theta, table.xhat, "incident")  # row[j]: -theta_j in xhat
    col = _negation_index(table.xhat, table.theta, "observation")  # col[i]: -xhat_i in theta
    swapped = table.values[row[None, :], col[:, None]]
    return float(np.abs(table.values - swapped).max())


@dataclass
class SweepConfig:
    a_values: list
    t: float = 1.0 / 3.0
    s: float = 1.0
    K: DensityField = field(default_factory=lambda: DensityField.constant(0.0))
    shapes: ShapeAssignment = field(default_factory=ShapeAssignment)
    kappa: float = 0.8
    n_theta: int = 64
    n_xhat: int = 64
    seed: int = 0
    convention: str = "physical"
    resolution: int = 32
    tol: float = 1e-10
    compare_medium: bool = True
    domain: Domain = field(default_factory=Domain)

    def __post_init__(self):
        a = [float(x) for x in self.a_values]
        if not a:
            raise ValueError("no scales given")
        if any(x <= y for x, y in zip(a, a[1:])):
            raise ValueError("scales must be strictly decreasing")
        if self.s == 1.0 and not 1 / 3 <= self.t < 5 / 12:
            raise ValueError("t must lie in [1/3, 5/12) when s = 1")
        if self.n_theta < 2 or self.n_xhat < 2:
            raise ValueError("direction grids must be nonempty and negation-closed")
        self.a_values = a

    def cell_count(self, a: float) -> "int | None":
        """``None`` for the dense regime (one cell per unit ``a``-volume), else ``ceil(a^-s)``."""
        return None if self.s == 1.0 else int(math.ceil(a ** (-self.s) * (1 - 1e-12)))


@dataclass
class SweepRecord:
    a: float
    M: int = 0
    d: float = float("nan")
    sup_error: float = float("nan")
    fl_sup: float = float("nan")
    fl_residual: float = float("nan")
    ls_residual: float = float("nan")
    energy_ratio: float = float("nan")
    bound_factor: float = float("nan")
    wall_time: float = 0.0
    status: str = "ok"
    fl_table: "FarFieldTable | None" = field(default=None, repr=False)
    medium_table: "FarFieldTable | None" = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _setup(config: SweepConfig, a: float):
    grid = partition_domain(config.domain, a, config.K, config.cell_count(a))
    obstacles = place_obstacles(grid, a, config.t, config.shapes, seed=config.seed)
    return grid, obstacles


def run_sweep(config: SweepConfig, workers: "int | None" = None) -> list:
    """Place, solve and compare for every scale; failures are recorded, not raised."""
    workers = workers or _workers()
    theta = symmetric_grid(config.n_theta)
    xhat = symmetric_grid(config.n_xhat)
    records, setups, potentials = {}, {}, {}
    for a in config.a_values:
        t0 = time.perf_counter()
        try:
            setups[a] = _setup(config, a)
            if config.compare_medium:
                potentials[a] = medium.potential_from_obstacles(
                    setups[a][1], setups[a][0], config.resolution)
            records[a] = SweepRecord(a, wall_time=time.perf_counter() - t0)
        except (GeometryError, medium.PotentialError) as exc:
            records[a] = SweepRecord(a, status=f"geometry: {exc}")

    media = {}
    digests = {}
    for a, pot in potentials.items():
        digests[a] = pot.digest()
        media.setdefault(digests[a], pot)

    def solve_medium(item):
        key, pot = item
        t0 = time.perf_counter()
        try:
            tab, res = medium.medium_far_field(pot, config.kappa, theta, xhat,
                                               config.convention, config.tol)
            return key, (tab, float(res.max()), time.perf_counter() - t0)
        except medium.LSConvergenceError as exc:
            return key, exc

    def solve_fl(a):
        t0 = time.perf_counter()
        grid, obstacles = setups[a]
        rec = records[a]
        rec.M, rec.d = obstacles.M, obstacles.d
        try:
            tab, charges, report = foldylax.simulate(obstacles, config.kappa, theta, xhat,
                                                     config.convention, tol=config.tol)
        except foldylax.FoldyLaxError as exc:
            rec.status = f"foldy-lax: {exc}"
            return
        rec.fl_table = tab
        rec.fl_sup = float(np.abs(tab.values).max())
        rec.fl_residual = float(charges.residual.max())
        rec.energy_ratio = charges.energy_ratio
        rec.bound_factor = report.bound_factor
        rec.wall_time += time.perf_counter() - t0

    with ThreadPoolExecutor(max_workers=workers) as pool:
        solved = dict(pool.map(solve_medium, media.items()))
        list(pool.map(solve_fl, list(setups)))

    for a, key in digests.items():
        rec = records[a]
        out = solved[key]
        if isinstance(out, Exception):
            rec.status = f"medium: {out}"
            continue
        rec.medium_table, rec.ls_residual, wt = out
        rec.wall_time += wt
        if rec.ok and rec.fl_table is not None:
            rec.sup_error = sup_error(rec.fl_table, rec.medium_table)
    result = [records[a] for a in config.a_values]
    for r in result:
        logger.info("a=%g M=%d d=%.4g sup_error=%.6g status=%s", r.a, r.M, r.d, r.sup_error, r.status)
    return result


@dataclass(frozen=True)
class RateFit:
    p: float
    stderr: float
    band: float
    n_used: int
    intercept: float

    def __str__(self):
        return f"{self.p:.6g} +/- {self.band:.3g} (from {self.n_used} points)"


def predicted_exponent(t: float, gamma: "float | None" = None) -> float:
    """``1/3 - 4t/5``, capped by the Holder exponent of ``K`` when one is given."""
    p = 1.0 / 3.0 - 0.8 * t
    return p if gamma is None else min(gamma, p)


def fit_rate(records, errors=None, use_finest_half: bool = True) -> RateFit:
    """Least-squares slope ``p`` of ``log(error)`` against ``log(a)``.

    Accepts sweep records or two parallel sequences ``(a_values, errors)``.
    With four or more points only the finest ``max(3, ceil(n/2))`` are used.
    The band is a 95% Student-t half-width (zero for an exact fit).
    """
    if errors is None:
        a = np.array([r.a for r in records], float)
        e = np.array([r.sup_error for r in records], float)
    else:
        a, e = np.asarray(records, float), np.asarray(errors, float)
    if len(a) < 3:
        raise ValueError("need at least three points to fit a rate")
    if not (np.isfinite(e).all() and (e > 0).all()):
        raise ValueError("errors must be positive and finite")
    order = np.argsort(a)
    a, e = a[order], e[order]
    if use_finest_half and len(a) >= 4:
        k = max(3, math.ceil(len(a) / 2))
        a, e = a[:k], e[:k]
    res = stats.linregress(np.log(a), np.log(e))
    n = len(a)
    band = float(stats.t.ppf(0.975, n - 2) * res.stderr) if n > 2 else float("inf")
    return RateFit(float(res.slope), float(res.stderr), band, n, float(res.intercept))


def holder_defect(K: DensityField, a: float, resolution: int = 96,
                  domain: "Domain | None" = None) -> float:
    """``max |K(y) - K_a(y)|`` over voxel centres inside the cells of the ``a``-partition.

    ``K_a`` is piecewise constant, equal to ``K`` at the centre of each cell.
    """
    domain = domain or Domain()
    grid = partition_domain(domain, a, K)
    n = resolution
    axes = [domain.lower[i] + (np.arange(n) + 0.5) * domain.extent[i] / n for i in range(3)]
    worst = 0.0
    for j in range(grid.n_cells):
        sl = [axes[i][(axes[i] >= grid.lower[j, i]) & (axes[i] < grid.upper[j, i])]
              for i in range(3)]
        if any(len(s) == 0 for s in sl):
            continue
        pts = np.stack(np.meshgrid(*sl, indexing="ij"), axis=-1).reshape(-1, 3)
        worst = max(worst, float(np.abs(K(pts) - grid.k_values[j]).max()))
    return worst


def holder_experiment(K: DensityField, a_values, resolution: int = 96):
    """Return ``(defects, fit)`` for the piecewise approximation of ``K`` over ``a_values``."""
    defects = np.array([holder_defect(K, a, resolution) for a in a_values])
    return defects, fit_rate(a_values, defects, use_finest_half=False)


def _fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def write_sweep(records, config: SweepConfig, out_dir) -> list:
    """Write per-scale far fields, the summary table and log-log plot data; return the paths."""
    os.makedirs(out_dir, exist_ok=True)
    header = {"kappa": repr(config.kappa), "a": " ".join(repr(a) for a in config.a_values),
              "t": repr(config.t), "s": repr(config.s), "seed": config.seed}
    paths = []
    for r in records:
        for tag, tab in (("fl", r.fl_table), ("medium", r.medium_table)):
            if tab is not None:
                p = os.path.join(out_dir, f"farfield_{tag}_a{r.a:.6g}.csv")
                write_farfield_csv(tab, p, dict(header, a=repr(r.a)))
                paths.append(p)
    ok = [r for r in records if r.ok and np.isfinite(r.sup_error) and r.sup_error > 0]
    fit = None
    if len(ok) >= 3:
        fit = fit_rate(ok)
    summary = os.path.join(out_dir, "summary.csv")
    cols = ["a", "M", "d", "sup_error", "fl_sup", "fl_residual", "ls_residual", "energy_ratio",
            "bound_factor", "status"]
    with open(summary, "w", newline="") as fh:
        fh.write(f"# convention: {config.convention}\n")
        for k, v in header.items():
            fh.write(f"# {k}: {v}\n")
        if fit is not None:
            fh.write(f"# fitted_rate: {fit.p:.17g}\n# fitted_rate_band: {fit.band:.17g}\n")
        fh.write(f"# predicted_rate: {predicted_exponent(config.t):.17g}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in cols])
    plot = os.path.join(out_dir, "plot_data.csv")
    with open(plot, "w", newline="") as fh:
        fh.write(f"# convention: {config.convention}\n")
        for k, v in header.items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["log_a", "log_error", "log_fl_sup"])
        for r in records:
            if r.ok:
                le = math.log(r.sup_error) if r.sup_error > 0 else float("nan")
                w.writerow([_fmt(math.log(r.a)), _fmt(le), _fmt(math.log(r.fl_sup))])
    return paths + [summary, plot]
