"""Command-line entry point ``smallscat``.

Exit codes: 0 success, 1 invalid input or failed validation, 2 numerical
failure, 64 usage error. Failures print ``reason: <kind>: <message>`` on
standard error.
"""
import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__, _backend, analysis, capacitance, foldylax, formats, medium
from .farfield import ConventionError, read_farfield_csv, symmetric_grid, write_farfield_csv
from .geometry import (GeometryError, partition_domain, place_obstacles, validate_set)
from .mesh import MeshError, cube_mesh, icosphere, read_mesh

logger = logging.getLogger("smallscat")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"reason: usage: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(name, args, inputs, outputs, t0, manifest_path):
    data = {
        "subcommand": name,
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": {p: _digest(p) for p in inputs if p and os.path.isfile(p)},
        "outputs": sorted(outputs),
        "versions": {"smallscat": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version(), "kernels": _backend.NAME},
        "wall_time": time.perf_counter() - t0,
    }
    with open(manifest_path, "w") as fh:
        json.dump(data, fh, indent=2, default=str)
        fh.write("\n")


def _side(path, suffix):
    root, _ = os.path.splitext(path)
    return root + suffix


def cmd_capacitance(args):
    if args.mesh:
        mesh = read_mesh(args.mesh)
    elif args.shape == "sphere":
        mesh = icosphere(args.base_level)
    else:
        mesh = cube_mesh(2)
    mesh.validate()
    rows = capacitance.refinement_table(mesh, args.refine, args.quad_order)
    with open(args.out, "w", newline="") as fh:
        fh.write("".join(f"# {k}: {v}\n" for k, v in formats.standard_header().items()))
        fh.write(f"# mesh: {args.mesh or args.shape}\n")
        fh.write("level,triangles,cbar,richardson_estimate\n")
        for level, n, c, est in rows:
            fh.write(f"{level},{n},{formats.g17(c)},{formats.g17(est)}\n")
    print(f"capacitance {formats.g17(rows[-1][2])}")
    return [args.mesh], [args.out]


def _sweep_like(cfg):
    return analysis.SweepConfig(
        a_values=[formats.number(a) for a in cfg["a"]] if isinstance(cfg.get("a"), list)
        else [formats.number(cfg.get("a", 0.04))],
        t=formats.number(cfg.get("t", "1/3")), s=formats.number(cfg.get("s", 1)),
        K=formats.parse_density(cfg.get("density")), shapes=formats.parse_shapes(cfg),
        kappa=formats.number(cfg.get("kappa", 0.8)), n_theta=int(cfg.get("theta_grid", 64)),
        n_xhat=int(cfg.get("xhat_grid", 64)), seed=int(cfg.get("seed", 0)),
        convention=str(cfg.get("convention", "physical")),
        resolution=int(cfg.get("resolution", 32)), tol=formats.number(cfg.get("tol", 1e-10)),
        compare_medium=bool(cfg.get("compare_medium", formats.number(cfg.get("s", 1)) == 1)),
        domain=formats.parse_domain(cfg.get("domain")))


def cmd_place(args):
    cfg = formats.load_config(args.config) if args.config else {}
    for key in ("a", "t", "seed", "kappa"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    if args.density is not None:
        cfg["density"] = args.density
    if args.shape is not None:
        cfg["shape"] = args.shape
    sc = _sweep_like(cfg)
    a = sc.a_values[0]
    grid = partition_domain(sc.domain, a, sc.K, sc.cell_count(a))
    obstacles = place_obstacles(grid, a, sc.t, sc.shapes, seed=sc.seed)
    report = validate_set(obstacles, sc.kappa)
    inv = foldylax.check_invertibility(obstacles, sc.kappa)
    formats.write_placement(obstacles, args.out)
    cells = formats.cells_path_for(args.out)
    formats.write_cells(grid, obstacles, cells)
    for line in report.lines():
        print(line)
    print(f"M={obstacles.M}")
    print(f"invertibility_margin={inv.margin}")
    print(f"invertibility_hypotheses={inv.hypotheses_hold}")
    if not report.ok:
        raise GeometryError("placement failed validation: " +
                            ", ".join(l for l in report.lines() if l.endswith("False")))
    return [args.config], [args.out, cells]


def _load_set(path):
    cells = formats.cells_path_for(path)
    if os.path.exists(cells):
        _, idx = formats.read_cells(cells)
        return formats.read_placement(path, idx)
    return formats.read_placement(path)


def cmd_simulate(args):
    obstacles = _load_set(args.placement)
    formats.check_placement(obstacles)
    theta, xhat = symmetric_grid(args.theta_grid), symmetric_grid(args.xhat_grid)
    table, charges, report = foldylax.simulate(obstacles, args.kappa, theta, xhat,
                                               args.convention, force=args.force, tol=args.tol)
    header = formats.standard_header(args.convention, repr(args.kappa), formats.g17(obstacles.a),
                                     formats.g17(obstacles.t), obstacles.seed)
    header.pop("convention")
    header.pop("kappa")
    write_farfield_csv(table, args.out, header)
    print(f"M={obstacles.M} residual={charges.residual.max():.3e} "
          f"energy_ratio={charges.energy_ratio:.6g} bound={report.bound_factor:.6g}")
    return [args.placement], [args.out]


def cmd_homogenize(args):
    kind, payload, bbox = formats.load_potential_spec(args.potential)
    extra = {}
    if kind == "regions":
        pot = medium.potential_from_regions(payload, args.res, bbox)
    elif kind == "cells":
        obstacles, grid = payload
        pot = medium.potential_from_obstacles(obstacles, grid, args.res, bbox)
        extra = {"a": formats.g17(obstacles.a), "t": formats.g17(obstacles.t),
                 "seed": obstacles.seed}
    elif kind == "uniform":
        obstacles = payload
        dom = obstacles.domain
        q = float(obstacles.capacitances.sum()) / dom.volume
        pot = medium.potential_from_density(formats.parse_density(0), q, args.res, dom, bbox)
        extra = {"a": formats.g17(obstacles.a), "t": formats.g17(obstacles.t),
                 "seed": obstacles.seed}
    else:
        K, cbar, dom = payload
        pot = medium.potential_from_density(K, cbar, args.res, dom, bbox)
    theta, xhat = symmetric_grid(args.theta_grid), symmetric_grid(args.xhat_grid)
    table, res = medium.medium_far_field(pot, args.kappa, theta, xhat, args.convention, args.tol)
    header = formats.standard_header(**extra)
    header.pop("convention")
    header.pop("kappa")
    header["resolution"] = args.res
    write_farfield_csv(table, args.out, header)
    print(f"voxels={int(pot.mask.sum())} residual={res.max():.3e}")
    return [args.potential], [args.out]


def cmd_sweep(args):
    cfg = formats.load_config(args.config)
    sc = _sweep_like(cfg)
    records = analysis.run_sweep(sc)
    paths = analysis.write_sweep(records, sc, args.out)
    for r in records:
        print(f"a={r.a:.6g} M={r.M} d={r.d:.6g} sup_error={r.sup_error:.6g} "
              f"fl_sup={r.fl_sup:.6g} status={r.status}")
    ok = [r for r in records if r.ok and r.sup_error > 0]
    if len(ok) >= 3:
        fit = analysis.fit_rate(ok)
        print(f"fitted_rate={fit} predicted={analysis.predicted_exponent(sc.t):.6g}")
    if any(not r.ok for r in records):
        raise RuntimeError("; ".join(f"a={r.a}: {r.status}" for r in records if not r.ok))
    return [args.config], paths


def cmd_compare(args):
    A, B = read_farfield_csv(args.fl), read_farfield_csv(args.medium)
    err = analysis.sup_error(A, B)
    print(f"sup_error={formats.g17(err)}")
    return [args.fl, args.medium], []


def build_parser():
    p = _Parser(prog="smallscat", description="Small-obstacle scattering and effective media.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    c = sub.add_parser("capacitance", help="capacitance of a mesh over refinements")
    src = c.add_mutually_exclusive_group()
    src.add_argument("--mesh")
    src.add_argument("--shape", choices=["sphere", "cube"], default="sphere")
    c.add_argument("--base-level", type=int, default=1)
    c.add_argument("--refine", type=int, default=3)
    c.add_argument("--quad-order", type=int, default=1)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_capacitance)

    c = sub.add_parser("place", help="partition the domain and place obstacles")
    c.add_argument("--config")
    c.add_argument("--a", type=float)
    c.add_argument("--t", type=str)
    c.add_argument("--seed", type=int)
    c.add_argument("--kappa", type=float)
    c.add_argument("--density", type=str, help="constant K value")
    c.add_argument("--shape")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_place)

    for name, fn, text in (
            ("simulate", cmd_simulate, "Foldy-Lax far field of a placement"),
            ("homogenize", cmd_homogenize, "far field of an equivalent-medium potential")):
        c = sub.add_parser(name, help=text)
        if name == "simulate":
            c.add_argument("--placement", required=True)
            c.add_argument("--force", action="store_true")
        else:
            c.add_argument("--potential", required=True)
            c.add_argument("--res", type=int, default=32)
        c.add_argument("--kappa", type=float, required=True)
        c.add_argument("--theta-grid", type=int, default=64)
        c.add_argument("--xhat-grid", type=int, default=64)
        c.add_argument("--convention", choices=["physical", "paper"], default="physical")
        c.add_argument("--tol", type=float, default=1e-10)
        c.add_argument("--out", required=True)
        c.set_defaults(func=fn)

    c = sub.add_parser("sweep", help="Foldy-Lax against medium over a list of scales")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="sup-norm difference of two far-field CSVs")
    c.add_argument("--fl", required=True)
    c.add_argument("--medium", required=True)
    c.set_defaults(func=cmd_compare)
    return p


_INVALID = (GeometryError, MeshError, formats.FormatError, ConventionError,
            analysis.GridMismatchError, medium.PotentialError, ValueError, KeyError, OSError)
_NUMERIC = (foldylax.FoldyLaxError, medium.LSConvergenceError, capacitance.CapacitanceError,
            np.linalg.LinAlgError, RuntimeError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.command:
        parser.print_usage(sys.stderr)
        sys.stderr.write("reason: usage: no subcommand\n")
        return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        inputs, outputs = args.func(args)
    except _NUMERIC as exc:
        sys.stderr.write(f"reason: numerical: {exc}\n")
        return EXIT_NUMERIC
    except _INVALID as exc:
        sys.stderr.write(f"reason: invalid: {exc}\n")
        return EXIT_INVALID
    out = getattr(args, "out", None)
    if out:
        mpath = os.path.join(out, "manifest.json") if os.path.isdir(out) else _side(out, ".manifest.json")
        _manifest(args.command, args, inputs, outputs, t0, mpath)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
