"""Closed triangle meshes for the reference bodies."""
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Closed, orientable triangle surface.

    Attributes
    ----------
    vertices : ndarray, shape (nv, 3)
    triangles : ndarray of int, shape (nt, 3)
        0-based vertex indices.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    _checked: bool = field(default=False, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """(nt, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.corners
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        """Longest edge of each triangle."""
        p = self.corners
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    @property
    def bbox_scale(self) -> float:
        return float(np.ptp(self.vertices, axis=0).max())

    def validate(self, eps: float = 1e-12) -> None:
        """Raise :class:`MeshError` unless the mesh is watertight and non-degenerate."""
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be an (n, 3) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3 or len(self.triangles) == 0:
            raise MeshError("triangles must be a non-empty (m, 3) array")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise MeshError("triangle index out of range")
        bad = np.nonzero(self.areas <= eps * self.bbox_scale ** 2)[0]
        if bad.size:
            raise MeshError(f"degenerate triangle {int(bad[0])}")
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        undirected = Counter(map(tuple, np.sort(directed, axis=1).tolist()))
        open_edges = [e for e, c in undirected.items() if c != 2]
        if open_edges:
            raise MeshError(f"mesh is not watertight: edge {open_edges[0]} used "
                            f"{undirected[open_edges[0]]} times")
        if len(set(map(tuple, directed.tolist()))) != len(directed):
            raise MeshError("inconsistent triangle orientation")

    # geometric transforms -------------------------------------------------

    def scaled(self, factor: float) -> "SurfaceMesh":
        return SurfaceMesh(self.vertices * factor, self.triangles)

    def translated(self, shift) -> "SurfaceMesh":
        return SurfaceMesh(self.vertices + np.asarray(shift, dtype=float), self.triangles)

    def rotated(self, rotation) -> "SurfaceMesh":
        return SurfaceMesh(self.vertices @ np.asarray(rotation, dtype=float).T, self.triangles)

    def is_spherical(self, rtol: float = 1e-9) -> bool:
        """Vertices equidistant from their mean; polyhedra with at most eight
        vertices (the plain cube among them) count as flat-faced."""
        if len(self.vertices) <= 8:
            return False
        r = np.linalg.norm(self.vertices - self.vertices.mean(axis=0), axis=1)
        return bool(np.ptp(r) <= rtol * r.max())

    def refined(self, snap_to_sphere=None) -> "SurfaceMesh":
        """Split every triangle into four at edge midpoints.

        Spherical meshes (all vertices equidistant from their mean) have the
        new vertices pushed back onto the sphere unless ``snap_to_sphere`` is
        False.
        """
        if snap_to_sphere is None:
            snap_to_sphere = self.is_spherical()
        verts = [tuple(v) for v in self.vertices]
        cache = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                cache[key] = len(verts)
                verts.append(tuple(0.5 * (self.vertices[i] + self.vertices[j])))
            return cache[key]

        tris = []
        for a, b, c in self.triangles.tolist():
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            tris += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        v = np.array(verts)
        if snap_to_sphere:
            center = self.vertices.mean(axis=0)
            radius = np.linalg.norm(self.vertices[0] - center)
            d = v - center
            v = center + radius * d / np.linalg.norm(d, axis=1, keepdims=True)
        return SurfaceMesh(v, np.array(tris))


def icosphere(level: int, radius: float = 1.0) -> SurfaceMesh:
    """Subdivided icosahedron with ``20 * 4**level`` triangles on a sphere."""
    p = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
                  [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
                  [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    mesh = SurfaceMesh(v / np.linalg.norm(v, axis=1, keepdims=True), f)
    for _ in range(level):
        mesh = mesh.refined(snap_to_sphere=True)
    return mesh.scaled(radius)


def cube_mesh(n: int, side: float = 1.0) -> SurfaceMesh:
    """Axis-aligned cube centred at the origin, ``n x n`` squares per face, 12 n^2 triangles."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = np.linspace(-0.5, 0.5, n + 1)
    index = {}
    verts, tris = [], []

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    for axis in range(3):
        u_ax, v_ax = [a for a in range(3) if a != axis]
        for sign in (-0.5, 0.5):
            for i in range(n):
                for j in range(n):
                    quad = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = np.zeros(3)
                        p[axis] = sign
                        p[u_ax] = g[i + di]
                        p[v_ax] = g[j + dj]
                        quad.append(vid(p))
                    a, b, c, d = quad
                    # outward normal: (u x v) points along +axis for the cyclic pair
                    outward = (np.cross(np.eye(3)[u_ax], np.eye(3)[v_ax])[axis] > 0) == (sign > 0)
                    if outward:
                        tris += [(a, b, c), (a, c, d)]
                    else:
                        tris += [(a, c, b), (a, d, c)]
    return SurfaceMesh(np.array(verts) * side, np.array(tris))


def read_mesh(path) -> SurfaceMesh:
    """Read the ASCII mesh format: ``nv nt`` then vertex rows then index triples."""
    with open(path) as fh:
        tokens = fh.read().split()
    try:
        nv, nt = int(tokens[0]), int(tokens[1])
        body = tokens[2:]
        v = np.array(body[:3 * nv], dtype=float).reshape(nv, 3)
        t = np.array(body[3 * nv:3 * nv + 3 * nt], dtype=np.int64).reshape(nt, 3)
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if len(body) != 3 * nv + 3 * nt:
        raise MeshError(f"malformed mesh file {path}: expected {3 * (nv + nt)} values, "
                        f"found {len(body)}")
    return SurfaceMesh(v, t)


def write_mesh(mesh: SurfaceMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{len(mesh.vertices)} {mesh.n_triangles}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
