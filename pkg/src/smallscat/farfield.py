"""Direction grids and far-field tables.

Two normalisations are carried. With ``U^s ~ e^{i k |x|} / |x| * U_inf``
and the fundamental solution ``e^{i k r} / (4 pi r)``, a monopole ``Q`` at
``z`` has the *physical* far field ``Q e^{-i k xhat.z} / (4 pi)``. The *paper*
convention drops the ``1/(4 pi)``. Tables record which one they hold and
refuse to be compared across conventions.
"""
import csv
import io
from dataclasses import dataclass

import numpy as np

CONVENTIONS = ("physical", "paper")
UNIT_TOL = 1e-12


class ConventionError(ValueError):
    pass


def convention_factor(convention: str) -> float:
    """Multiplier turning a paper-convention value into ``convention``."""
    if convention == "paper":
        return 1.0
    if convention == "physical":
        return 1.0 / (4.0 * np.pi)
    raise ConventionError(f"unknown convention {convention!r}; use one of {CONVENTIONS}")


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` quasi-uniform unit vectors on a golden-angle spiral."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    r = np.sqrt(1.0 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def symmetric_grid(n: int = 64) -> np.ndarray:
    """Negation-closed grid: ``n/2`` spiral points followed by their antipodes."""
    if n < 2 or n % 2:
        raise ValueError("a negation-closed grid needs an even number of points >= 2")
    half = fibonacci_sphere(n // 2)
    return np.concatenate([half, -half])


def _unit(v, name):
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if v.shape[1] != 3:
        raise ValueError(f"{name} must be unit 3-vectors")
    if np.abs(np.linalg.norm(v, axis=1) - 1.0).max() > UNIT_TOL:
        raise ValueError(f"{name} are not unit vectors to {UNIT_TOL}")
    return v


@dataclass(frozen=True, eq=False)
class FarFieldTable:
    """``values[i, j] = U_inf(xhat[i], theta[j])``."""

    xhat: np.ndarray
    theta: np.ndarray
    values: np.ndarray
    convention: str = "physical"
    kappa: float = float("nan")

    def __post_init__(self):
        convention_factor(self.convention)
        xh = _unit(self.xhat, "observation directions")
        th = _unit(self.theta, "incident directions")
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (len(xh), len(th)):
            raise ValueError(f"values shape {vals.shape} does not match grids "
                             f"({len(xh)}, {len(th)})")
        object.__setattr__(self, "xhat", xh)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "values", vals)

    def to(self, convention: str) -> "FarFieldTable":
        f = convention_factor(convention) / convention_factor(self.convention)
        return FarFieldTable(self.xhat, self.theta, self.values * f, convention, self.kappa)

    def same_grid(self, other: "FarFieldTable", tol: float = 1e-12) -> bool:
        return (self.xhat.shape == other.xhat.shape and self.theta.shape == other.theta.shape
                and np.abs(self.xhat - other.xhat).max() <= tol
                and np.abs(self.theta - other.theta).max() <= tol)


def write_farfield_csv(table: FarFieldTable, path_or_buf, header: "dict | None" = None) -> None:
    """Rows ``theta_ix, xhat_ix, re, im``; directions go in the comment header."""
    own = not hasattr(path_or_buf, "write")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        meta = {"convention": table.convention, "kappa": repr(float(table.kappa))}
        meta.update(header or {})
        for k, v in meta.items():
            fh.write(f"# {k}: {v}\n")
        for name, grid in (("theta", table.theta), ("xhat", table.xhat)):
            for i, v in enumerate(grid):
                fh.write(f"# {name}[{i}]: {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta_ix", "xhat_ix", "re", "im"])
        for j in range(len(table.theta)):
            for i in range(len(table.xhat)):
                z = table.values[i, j]
                w.writerow([j, i, f"{z.real:.17g}", f"{z.imag:.17g}"])
    finally:
        if own:
            fh.close()


def read_farfield_csv(path) -> FarFieldTable:
    meta, theta, xhat, rows = {}, {}, {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                key, val = key.strip(), val.strip()
                if key.startswith("theta["):
                    theta[int(key[6:-1])] = [float(x) for x in val.split()]
                elif key.startswith("xhat["):
                    xhat[int(key[5:-1])] = [float(x) for x in val.split()]
                else:
                    meta[key] = val
            else:
                rows.append(line)
    reader = csv.DictReader(io.StringIO("".join(rows)))
    th = np.array([theta[i] for i in range(len(theta))])
    xh = np.array([xhat[i] for i in range(len(xhat))])
    vals = np.full((len(xh), len(th)), np.nan + 0j)
    for r in reader:
        vals[int(r["xhat_ix"]), int(r["theta_ix"])] = complex(float(r["re"]), float(r["im"]))
    if np.isnan(vals).any():
        raise ValueError(f"{path}: far-field table is incomplete")
    return FarFieldTable(xh, th, vals, meta.get("convention", "physical"),
                         float(meta.get("kappa", "nan")))
