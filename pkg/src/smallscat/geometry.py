"""Cell partition of the domain and placement of small obstacles.

The domain is cut into ``floor(1/a)`` equal-volume slots by a layered
raster (layers along z, rows along y, boxes along x). The density ``K`` is
sampled at each slot centre; the cell is the slot shrunk about its centre to
volume ``a [K+1] / (K+1)`` and receives ``[K+1]`` obstacles placed on a
jittered sub-lattice.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

#: separation demanded by placement and validation is SEP_FACTOR * a**t
SEP_FACTOR = 0.5
DEFAULT_JITTER = 0.5

_EXPR_NAMES = {name: getattr(np, name) for name in
               ("abs", "sqrt", "sin", "cos", "tan", "exp", "log", "tanh",
                "minimum", "maximum", "where", "pi", "floor", "ceil")}


class GeometryError(ValueError):
    """Invalid geometry input; ``index`` names the offending cell or obstacle when known."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box. The default is the unit cube."""

    lower: tuple = (0.0, 0.0, 0.0)
    upper: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != 3 or len(hi) != 3:
            raise GeometryError("domain corners must be 3-vectors")
        if not all(h > l for l, h in zip(lo, hi)):
            raise GeometryError("domain upper corner must exceed lower corner component-wise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def extent(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.extent))

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= self.lower) & (p <= self.upper), axis=1)


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def contains(self, points):
        p = np.atleast_2d(points)
        return np.all((p >= np.asarray(self.lower)) & (p <= np.asarray(self.upper)), axis=1)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def contains(self, points):
        p = np.atleast_2d(points)
        return np.linalg.norm(p - np.asarray(self.center), axis=1) <= self.radius


@dataclass(frozen=True)
class DensityField:
    """The local obstacle density ``K >= 0``.

    Build with :meth:`constant`, :meth:`piecewise` or :meth:`expression`.
    For piecewise fields a point takes the value of the first region that
    contains it.
    """

    kind: str
    value: float = 0.0
    regions: tuple = ()
    expr: str = ""
    holder_exponent: "float | None" = None

    @classmethod
    def constant(cls, value: float) -> "DensityField":
        return cls("constant", value=float(value))

    @classmethod
    def piecewise(cls, regions) -> "DensityField":
        """``regions``: iterable of ``(Box | Ball, value)``."""
        return cls("piecewise", regions=tuple((r, float(v)) for r, v in regions))

    @classmethod
    def expression(cls, expr: str, holder_exponent: "float | None" = None) -> "DensityField":
        """``expr`` is a numpy expression in ``x``, ``y``, ``z``."""
        if holder_exponent is not None and not 0 < holder_exponent <= 1:
            raise GeometryError("Holder exponent must lie in (0, 1]")
        return cls("expression", expr=expr, holder_exponent=holder_exponent)

    def __call__(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "constant":
            return np.full(len(p), self.value)
        if self.kind == "piecewise":
            out = np.full(len(p), np.nan)
            for region, v in reversed(self.regions):
                out[region.contains(p)] = v
            return out
        if self.kind == "expression":
            scope = dict(_EXPR_NAMES, x=p[:, 0], y=p[:, 1], z=p[:, 2])
            val = eval(self.expr, {"__builtins__": {}}, scope)  # noqa: S307
            return np.broadcast_to(np.asarray(val, dtype=float), (len(p),)).copy()
        raise GeometryError(f"unknown density kind {self.kind!r}")

    def region_index(self, points) -> np.ndarray:
        """Index of the first containing region (piecewise only), -1 if none."""
        p = np.atleast_2d(points)
        idx = np.full(len(p), -1)
        for j in reversed(range(len(self.regions))):
            idx[self.regions[j][0].contains(p)] = j
        return idx

    def check(self, domain: Domain, samples: int = 12) -> None:
        """Sample the field on a grid over the domain; raise on invalid values."""
        g = [np.linspace(lo, hi, samples) for lo, hi in zip(domain.lower, domain.upper)]
        pts = np.stack(np.meshgrid(*g, indexing="ij"), -1).reshape(-1, 3)
        vals = self(pts)
        if np.isnan(vals).any():
            raise GeometryError("density regions do not cover the domain")
        if (vals < 0).any():
            raise GeometryError(f"density is negative ({vals.min():.6g}) somewhere in the domain")
        if not np.isfinite(vals).all():
            raise GeometryError("density is unbounded on the domain")
        if self.kind == "piecewise":
            # interior samples must not fall in two regions
            h = domain.extent / samples
            inner = [np.linspace(lo + hh / 2, up - hh / 2, samples)
                     for lo, up, hh in zip(domain.lower, domain.upper, h)]
            ip = np.stack(np.meshgrid(*inner, indexing="ij"), -1).reshape(-1, 3)
            hits = sum(r.contains(ip).astype(int) for r, _ in self.regions)
            if (hits > 1).any():
                raise GeometryError("density regions overlap")


@dataclass(frozen=True, eq=False)
class CellGrid:
    """Partition cells: axis-aligned boxes with their obstacle counts."""

    domain: Domain
    a: float
    centers: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    k_values: np.ndarray
    slot_volume: float

    @property
    def n_cells(self) -> int:
        return len(self.centers)

    @property
    def counts(self) -> np.ndarray:
        return np.floor(self.k_values + 1.0 + 1e-12).astype(int)

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.upper - self.lower, axis=1)

    @property
    def k_max(self) -> float:
        return float((self.k_values + 1.0).max())

    @property
    def n_obstacles(self) -> int:
        return int(self.counts.sum())


def _split(n: int, parts: int):
    base, extra = divmod(n, parts)
    return [base + 1 if i < extra else base for i in range(parts)]


def _slots(domain: Domain, n: int):
    """``n`` equal-volume boxes filling the domain, in raster order."""
    ext = domain.extent
    lo0 = np.asarray(domain.lower)
    scale = np.cbrt(domain.volume / n)
    nz = min(n, max(1, round(ext[2] / scale)))
    lowers, uppers = [], []
    z = lo0[2]
    for layer_count in _split(n, nz):
        dz = ext[2] * layer_count / n
        ny = min(layer_count, max(1, round(math.sqrt(layer_count * ext[1] / ext[0]))))
        y = lo0[1]
        for row_count in _split(layer_count, ny):
            dy = ext[1] * row_count / layer_count
            dx = ext[0] / row_count
            for i in range(row_count):
                lowers.append((lo0[0] + i * dx, y, z))
                uppers.append((lo0[0] + (i + 1) * dx, y + dy, z + dz))
            y += dy
        z += dz
    return np.array(lowers), np.array(uppers)


def n_cells_for(a: float) -> int:
    """``floor(1/a)``, robust to the representation error of ``1/a``."""
    return int(math.floor(1.0 / a * (1.0 + 1e-12)))


def partition_domain(domain: Domain, a: float, K: DensityField,
                     n_cells: "int | None" = None) -> CellGrid:
    """Split ``domain`` into ``floor(1/a)`` cells following the density ``K``.

    ``n_cells`` overrides the cell count (used for dilute configurations);
    cells then fill their slots instead of having volume ``a`` per obstacle.
    """
    if not 0 < a < 1:
        raise GeometryError(f"scale a must lie in (0, 1), got {a}")
    n = n_cells_for(a) if n_cells is None else int(n_cells)
    if n < 1:
        raise GeometryError("no cells")
    K.check(domain)
    lower, upper = _slots(domain, n)
    centers = 0.5 * (lower + upper)
    k = K(centers)
    if np.isnan(k).any():
        raise GeometryError("density undefined at a cell centre", int(np.flatnonzero(np.isnan(k))[0]))
    if (k < 0).any():
        bad = int(np.flatnonzero(k < 0)[0])
        raise GeometryError(f"negative density {k[bad]:.6g} at cell {bad}", bad)
    counts = np.floor(k + 1.0 + 1e-12)
    slot = domain.volume / n
    unit = a if n_cells is None else slot
    vol = unit * counts / (k + 1.0)
    if vol.sum() > domain.volume * (1 + 1e-9) or (vol > slot * (1 + 1e-9)).any():
        bad = int(np.argmax(vol))
        raise GeometryError(
            f"prescribed cell volume {vol[bad]:.6g} exceeds the available {slot:.6g} "
            f"(density too large for a={a})", bad)
    shrink = np.cbrt(np.minimum(vol / slot, 1.0))[:, None]
    half = 0.5 * (upper - lower) * shrink
    return CellGrid(domain, float(a), centers, centers - half, centers + half, k, slot)


@dataclass(frozen=True)
class ReferenceBody:
    """Diameter-one reference shape.

    ``cbar`` is its capacitance, ``tm`` the ratio inradius / circumradius
    about its centre (the non-flatness constant).
    """

    shape_id: str
    cbar: float
    tm: float = 1.0

    def __post_init__(self):
        if not self.cbar > 0:
            raise GeometryError(f"capacitance of {self.shape_id!r} must be positive")
        if not 0 < self.tm <= 1:
            raise GeometryError(f"non-flatness constant of {self.shape_id!r} must lie in (0, 1]")


#: unit-cube capacitance, Richardson-extrapolated over cube_mesh(2) refined 0..4 times
UNIT_CUBE_CAPACITANCE = 8.302823444607421

BUILTIN_SHAPES = {
    "sphere": ReferenceBody("sphere", 2.0 * math.pi, 1.0),
    # side 1/sqrt(3) so the diameter is one
    "cube": ReferenceBody("cube", UNIT_CUBE_CAPACITANCE / math.sqrt(3.0), 1.0 / math.sqrt(3.0)),
}


@dataclass(frozen=True)
class ShapeAssignment:
    """Shape per cell: a default id, optionally overridden per region."""

    default: str = "sphere"
    regions: tuple = ()
    bodies: dict = field(default_factory=lambda: dict(BUILTIN_SHAPES))

    def body(self, shape_id: str) -> ReferenceBody:
        try:
            return self.bodies[shape_id]
        except KeyError:
            raise GeometryError(f"unknown shape id {shape_id!r}") from None

    def for_points(self, points) -> list:
        ids = [self.default] * len(points)
        for region, sid in reversed(self.regions):
            for i in np.flatnonzero(region.contains(points)):
                ids[i] = sid
        return ids


@dataclass(frozen=True, eq=False)
class ObstacleSet:
    """Small obstacles ``D_m = a B_m + z_m``."""

    centers: np.ndarray
    a: float
    t: float
    shape_ids: tuple
    cbar: np.ndarray
    tm: np.ndarray
    cell_index: np.ndarray
    d: float
    seed: "int | None" = None
    domain: "Domain | None" = None

    @property
    def M(self) -> int:
        return len(self.centers)

    @property
    def capacitances(self) -> np.ndarray:
        """``C_m = cbar_m * a``."""
        return self.cbar * self.a


def _sub_lattice(extent: np.ndarray, k: int):
    """Split a box into at least ``k`` sub-boxes, cutting the longest side first."""
    n = np.ones(3, dtype=int)
    while n.prod() < k:
        n[np.argmax(extent / n)] += 1
    return n


def min_separation(centers: np.ndarray, a: float) -> float:
    """``min |z_i - z_j| - a``: the body distance for balls of diameter ``a``, a lower bound otherwise."""
    if len(centers) < 2:
        return math.inf
    return float(pdist(centers).min() - a)


def place_obstacles(grid: CellGrid, a: float, t: float, shapes: "ShapeAssignment | None" = None,
                    seed: int = 0, jitter: float = DEFAULT_JITTER,
                    sep_factor: float = SEP_FACTOR) -> ObstacleSet:
    """Put ``[K+1]`` obstacles in every cell of ``grid``.

    Centres sit at sub-box centres of a per-cell lattice with minimum
    spacing ``s``; each is displaced by at most ``jitter * (s - a - sep) /
    (2 sqrt 3)`` per axis, where ``sep = sep_factor * a**t``, which keeps all
    pairwise body distances at least ``sep`` inside and across cells.
    """
    if not 1 / 3 <= t < 5 / 12:
        raise GeometryError(f"t must lie in [1/3, 5/12), got {t}")
    if not 0 <= jitter <= 1:
        raise GeometryError("jitter fraction must lie in [0, 1]")
    shapes = shapes or ShapeAssignment()
    sep = sep_factor * a ** t
    rng = np.random.default_rng(seed)
    centers, cells = [], []
    for m in range(grid.n_cells):
        k = int(grid.counts[m])
        ext = grid.upper[m] - grid.lower[m]
        n = _sub_lattice(ext, k)
        sub = ext / n
        s = float(sub.min())
        if s - a < sep:
            raise GeometryError(
                f"infeasible packing in cell {m}: {k} obstacles at spacing {s:.4g} "
                f"cannot keep separation {sep:.4g} with diameter {a:.4g}", m)
        idx = np.stack(np.unravel_index(np.arange(k), tuple(n)), axis=1)
        pts = grid.lower[m] + (idx + 0.5) * sub
        amp = jitter * (s - a - sep) / (2.0 * math.sqrt(3.0))
        pts = pts + amp * rng.uniform(-1.0, 1.0, size=pts.shape)
        centers.append(pts)
        cells += [m] * k
    centers = np.concatenate(centers)
    ids = tuple(shapes.for_points(grid.centers[cells]))
    bodies = [shapes.body(i) for i in ids]
    return ObstacleSet(
        centers=centers, a=float(a), t=float(t), shape_ids=ids,
        cbar=np.array([b.cbar for b in bodies]), tm=np.array([b.tm for b in bodies]),
        cell_index=np.array(cells), d=min_separation(centers, a), seed=seed,
        domain=grid.domain)


@dataclass
class ValidationReport:
    d: float
    d_required: float
    separation_ok: bool
    overlap_ok: bool
    overlap_pair: "tuple | None"
    nonflat_ok: bool
    min_cos: float
    cos_ok: bool
    domain_diameter: float
    diameter_condition_ok: bool
    a_over_d: float

    @property
    def ok(self) -> bool:
        return self.separation_ok and self.overlap_ok and self.nonflat_ok

    def lines(self):
        return [f"{k}={v}" for k, v in self.__dict__.items()]


def min_cos_pairs(centers: np.ndarray, kappa: float) -> float:
    """``min_{j != m} cos(kappa |z_j - z_m|)``, 1 when there are no pairs."""
    if len(centers) < 2:
        return 1.0
    return float(np.cos(kappa * pdist(centers)).min())


def validate_set(obstacles: ObstacleSet, kappa: float, tm_min: float = 0.1,
                 sep_factor: float = SEP_FACTOR) -> ValidationReport:
    """Report on separation, overlap, non-flatness and the cosine condition."""
    if obstacles.M == 0:
        raise GeometryError("empty obstacle set")
    c = obstacles.centers
    a = obstacles.a
    pair = None
    if obstacles.M > 1:
        dist = pdist(c)
        d = float(dist.min() - a)
        if dist.min() < a:
            i, j = np.triu_indices(obstacles.M, 1)
            k = int(np.argmin(dist))
            pair = (int(i[k]), int(j[k]))
        min_cos = float(np.cos(kappa * dist).min())
    else:
        d, min_cos = math.inf, 1.0
    if obstacles.domain is not None:
        diam = obstacles.domain.diameter
    else:
        diam = float(np.linalg.norm(np.ptp(c, axis=0))) + a
    required = sep_factor * a ** obstacles.t
    tm = np.asarray(obstacles.tm)
    return ValidationReport(
        d=d, d_required=required, separation_ok=bool(d >= required),
        overlap_ok=pair is None, overlap_pair=pair,
        nonflat_ok=bool(((tm >= tm_min) & (tm <= 1)).all()),
        min_cos=min_cos, cos_ok=bool(min_cos >= 0),
        domain_diameter=diam, diameter_condition_ok=bool(diam < math.pi / (2 * kappa)),
        a_over_d=a / d if d > 0 else math.inf)
