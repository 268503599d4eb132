"""Text formats: YAML configs, placement and cell CSVs, potential specs.

Every CSV starts with ``# key: value`` comment lines. Numbers are written
with 17 significant digits so that reading them back is exact.
"""
import csv
import io
import math
import os
from fractions import Fraction

import numpy as np
import yaml

from .geometry import (BUILTIN_SHAPES, Ball, Box, CellGrid, DensityField, Domain, GeometryError,
                       ObstacleSet, ShapeAssignment, min_separation)


class FormatError(ValueError):
    pass


def number(v) -> float:
    """Float from a number or a fraction string such as ``"1/3"``."""
    if isinstance(v, str):
        try:
            return float(Fraction(v.strip()))
        except (ValueError, ZeroDivisionError):
            raise FormatError(f"not a number: {v!r}") from None
    return float(v)


def g17(x) -> str:
    return f"{float(x):.17g}"


def load_config(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise FormatError(f"{path}: top level must be a mapping")
    return data


def parse_shape(spec: dict):
    """``{box: [lower, upper]}`` or ``{ball: {center: [...], radius: r}}``."""
    if "box" in spec:
        lo, hi = spec["box"]
        return Box(tuple(number(v) for v in lo), tuple(number(v) for v in hi))
    if "ball" in spec:
        b = spec["ball"]
        return Ball(tuple(number(v) for v in b["center"]), number(b["radius"]))
    raise FormatError(f"region needs a 'box' or 'ball' entry: {spec}")


def parse_domain(spec) -> Domain:
    if not spec:
        return Domain()
    return Domain(tuple(number(v) for v in spec["lower"]), tuple(number(v) for v in spec["upper"]))


def parse_density(spec) -> DensityField:
    """``{constant: v}``, ``{expression: "...", holder: g}`` or ``{regions: [...]}``; a bare number is a constant."""
    if spec is None:
        return DensityField.constant(0.0)
    if isinstance(spec, (int, float, str)) and not isinstance(spec, bool):
        return DensityField.constant(number(spec))
    if "constant" in spec:
        return DensityField.constant(number(spec["constant"]))
    if "expression" in spec:
        hold = spec.get("holder")
        return DensityField.expression(str(spec["expression"]),
                                       None if hold is None else number(hold))
    if "regions" in spec:
        return DensityField.piecewise((parse_shape(r), number(r["value"])) for r in spec["regions"])
    raise FormatError(f"unrecognised density spec: {spec}")


def parse_shapes(cfg: dict) -> ShapeAssignment:
    bodies = dict(BUILTIN_SHAPES)
    regions = tuple((parse_shape(r), str(r["shape"])) for r in cfg.get("shape_regions", []) or [])
    sa = ShapeAssignment(str(cfg.get("shape", "sphere")), regions, bodies)
    for sid in [sa.default] + [s for _, s in regions]:
        sa.body(sid)
    return sa


def _write_header(fh, meta: dict):
    for k, v in meta.items():
        fh.write(f"# {k}: {v}\n")


def _read_commented(path):
    meta, rows = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                meta[k.strip()] = v.strip()
            elif line.strip():
                rows.append(line)
    return meta, list(csv.DictReader(io.StringIO("".join(rows))))


def standard_header(convention="n/a", kappa="n/a", a="n/a", t="n/a", seed="n/a", **extra) -> dict:
    out = {"convention": convention, "kappa": kappa, "a": a, "t": t, "seed": seed}
    out.update(extra)
    return out


def write_placement(obstacles: ObstacleSet, path) -> None:
    """Columns ``id, x, y, z, a, shape_id, cbar``."""
    dom = obstacles.domain or Domain()
    meta = standard_header(a=g17(obstacles.a), t=g17(obstacles.t), seed=obstacles.seed,
                           domain_lower=" ".join(g17(v) for v in dom.lower),
                           domain_upper=" ".join(g17(v) for v in dom.upper))
    with open(path, "w", newline="") as fh:
        _write_header(fh, meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "x", "y", "z", "a", "shape_id", "cbar"])
        for m, z in enumerate(obstacles.centers):
            w.writerow([m, g17(z[0]), g17(z[1]), g17(z[2]), g17(obstacles.a),
                        obstacles.shape_ids[m], g17(obstacles.cbar[m])])


def _domain_from_meta(meta):
    if "domain_lower" in meta:
        return Domain(tuple(float(v) for v in meta["domain_lower"].split()),
                      tuple(float(v) for v in meta["domain_upper"].split()))
    return Domain()


def read_placement(path, cell_index=None) -> ObstacleSet:
    meta, rows = _read_commented(path)
    if not rows:
        raise FormatError(f"{path}: no obstacles")
    try:
        centers = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows])
        a_vals = np.array([float(r["a"]) for r in rows])
        ids = tuple(r["shape_id"] for r in rows)
        cbar = np.array([float(r["cbar"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed placement row ({exc})") from None
    if np.ptp(a_vals) > 0:
        raise FormatError(f"{path}: obstacles must share one scale a")
    a = float(a_vals[0])
    tm = np.array([BUILTIN_SHAPES[s].tm if s in BUILTIN_SHAPES else 1.0 for s in ids])
    t = float(meta["t"]) if meta.get("t", "n/a") != "n/a" else 1.0 / 3.0
    seed = int(meta["seed"]) if meta.get("seed", "n/a") not in ("n/a", "None") else None
    cells = np.zeros(len(rows), int) if cell_index is None else np.asarray(cell_index)
    return ObstacleSet(centers, a, t, ids, cbar, tm, cells, min_separation(centers, a),
                       seed, _domain_from_meta(meta))


def cells_path_for(placement_path) -> str:
    root, ext = os.path.splitext(str(placement_path))
    return f"{root}_cells{ext or '.csv'}"


def write_cells(grid: CellGrid, obstacles: ObstacleSet, path) -> None:
    """One row per cell: box corners, sampled K and the ids of the obstacles it holds."""
    meta = standard_header(a=g17(grid.a), t=g17(obstacles.t), seed=obstacles.seed,
                           domain_lower=" ".join(g17(v) for v in grid.domain.lower),
                           domain_upper=" ".join(g17(v) for v in grid.domain.upper),
                           slot_volume=g17(grid.slot_volume))
    with open(path, "w", newline="") as fh:
        _write_header(fh, meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "x0", "y0", "z0", "x1", "y1", "z1", "k", "obstacles"])
        for j in range(grid.n_cells):
            members = " ".join(str(m) for m in np.flatnonzero(obstacles.cell_index == j))
            w.writerow([j, *(g17(v) for v in grid.lower[j]), *(g17(v) for v in grid.upper[j]),
                        g17(grid.k_values[j]), members])


def read_cells(path):
    """Return ``(CellGrid, cell_index)`` where ``cell_index[m]`` is obstacle ``m``'s cell."""
    meta, rows = _read_commented(path)
    lower = np.array([[float(r[k]) for k in ("x0", "y0", "z0")] for r in rows])
    upper = np.array([[float(r[k]) for k in ("x1", "y1", "z1")] for r in rows])
    k = np.array([float(r["k"]) for r in rows])
    owner = {}
    for j, r in enumerate(rows):
        for m in r["obstacles"].split():
            owner[int(m)] = j
    cell_index = np.array([owner[m] for m in range(len(owner))])
    grid = CellGrid(_domain_from_meta(meta), float(meta["a"]), 0.5 * (lower + upper), lower,
                    upper, k, float(meta.get("slot_volume", "nan")))
    return grid, cell_index


def load_potential_spec(path):
    """Parse a potential spec file.

    Returns ``("regions", regions, bbox)``, ``("cells", (obstacles, grid), bbox)``,
    ``("uniform", obstacles, bbox)`` or ``("density", (K, cbar, domain), bbox)``.
    """
    from .medium import Region
    cfg = load_config(path)
    base = os.path.dirname(os.path.abspath(path))
    bbox = parse_domain(cfg.get("bbox")) if cfg.get("bbox") else None
    if "regions" in cfg:
        regions = [Region(parse_shape(r), number(r.get("k", 0)), number(r["cbar"]))
                   for r in cfg["regions"]]
        return "regions", regions, bbox
    if "placement" in cfg:
        ppath = os.path.join(base, cfg["placement"])
        cpath = os.path.join(base, cfg["cells"]) if cfg.get("cells") else cells_path_for(ppath)
        if os.path.exists(cpath):
            grid, idx = read_cells(cpath)
            return "cells", (read_placement(ppath, idx), grid), bbox
        return "uniform", read_placement(ppath), bbox
    if "density" in cfg:
        dom = parse_domain(cfg.get("domain"))
        return "density", (parse_density(cfg["density"]), number(cfg.get("cbar", 2 * math.pi)),
                           dom), bbox
    raise FormatError(f"{path}: potential spec needs 'regions', 'placement' or 'density'")


def check_placement(obstacles: ObstacleSet):
    if obstacles.M > 1 and obstacles.d <= 0:
        raise GeometryError("obstacles in the placement overlap")
