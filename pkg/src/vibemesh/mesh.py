"""Fixed-topology triangle hand mesh and its message-passing graph.

Coordinates are millimeters everywhere. The canonical template has 778
vertices; operations are topology-parametric, so smaller meshes are accepted
whenever template enforcement is off (tests lean on that).
"""

from __future__ import annotations

import csv

import numpy as np

from .tensor import EdgeStructure

CANONICAL_VERTEX_COUNT = 778


class ObjParseError(ValueError):
    """Malformed OBJ content; message carries the 1-based line number."""


class MeshTopologyError(ValueError):
    """Mesh violates a structural invariant (vertex count, face indices...)."""


class HandMesh:
    """Triangle mesh with validated connectivity.

    Treat as immutable: derive posed variants with :meth:`with_vertices`.
    """

    def __init__(self, vertices, faces, template_id: str = "custom"):
        vertices = np.asarray(vertices, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshTopologyError(f"vertices must be (N, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshTopologyError(f"faces must be (M, 3), got {faces.shape}")
        n = len(vertices)
        if faces.size and (faces.min() < 0 or faces.max() >= n):
            raise MeshTopologyError(f"face indices must lie in [0, {n})")
        if len(faces) == 0:
            raise MeshTopologyError("mesh has no faces")
        degenerate = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
        if degenerate.any():
            raise MeshTopologyError(f"degenerate faces (repeated vertex index): {np.where(degenerate)[0][:5]}")
        referenced = np.zeros(n, dtype=bool)
        referenced[faces.ravel()] = True
        if not referenced.all():
            raise MeshTopologyError(f"isolated vertices not referenced by any face: {np.where(~referenced)[0][:5]}")
        self.vertices = vertices
        self.faces = faces
        self.template_id = template_id

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices) -> "HandMesh":
        """Same topology, new vertex positions."""
        out = object.__new__(HandMesh)
        out.vertices = np.asarray(vertices, dtype=np.float64).reshape(self.vertices.shape)
        out.faces = self.faces
        out.template_id = self.template_id
        return out

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "HandMesh":
        return self.with_vertices(self.vertices @ np.asarray(rotation).T + np.asarray(translation))


def load_obj(path, expected_vertices: int | None = None, template_id: str | None = None) -> HandMesh:
    """Read an ASCII OBJ (``v`` and ``f`` records; fan-triangulates polygons).

    OBJ face indices are 1-based; an index of 0 or below is a parse error.
    When ``expected_vertices`` is given, a count mismatch is a topology error.
    """
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError(f"line {lineno}: vertex record needs 3 coordinates: {line!r}")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise ObjParseError(f"line {lineno}: bad vertex coordinate: {line!r}") from exc
            elif tag == "f":
                if len(parts) < 4:
                    raise ObjParseError(f"line {lineno}: face needs at least 3 vertices: {line!r}")
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise ObjParseError(f"line {lineno}: bad face index {token!r}") from exc
                    if i <= 0:
                        raise ObjParseError(f"line {lineno}: OBJ face indices are 1-based, got {i}")
                    idx.append(i - 1)
                for second, third in zip(idx[1:], idx[2:]):
                    faces.append([idx[0], second, third])
            # Other record types (vn, vt, o, g, usemtl...) are ignored.
    if expected_vertices is not None and len(vertices) != expected_vertices:
        raise MeshTopologyError(f"expected {expected_vertices} vertices, file has {len(vertices)}")
    return HandMesh(np.array(vertices), np.array(faces), template_id=template_id or "custom")


def save_obj(path, mesh: HandMesh):
    """Write ASCII OBJ with 6-decimal coordinates (round-trip tolerance)."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.6f} {y:.6f} {z:.6f}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def vertex_normals(mesh: HandMesh) -> np.ndarray:
    """Unit vertex normals, area-weighted over incident faces.

    The cross product of two face edges has twice the face area as magnitude,
    so summing raw cross products per vertex is the area weighting.
    """
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    acc = np.zeros_like(v)
    for k in range(3):
        np.add.at(acc, f[:, k], cross)
    norms = np.linalg.norm(acc, axis=1)
    bad = norms < 1e-12
    if bad.any():
        raise MeshTopologyError(f"degenerate normal at vertices {np.where(bad)[0][:5]}")
    return acc / norms[:, None]


class GraphAdjacency:
    """Undirected mesh-edge graph with self-loop symmetric normalization.

    Coefficients are 1/sqrt((d_u + 1)(d_v + 1)) where d is the raw vertex
    degree; self-loops contribute exactly once per vertex.
    """

    def __init__(self, mesh: HandMesh):
        f = mesh.faces
        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        self.edges = np.unique(pairs, axis=0)
        n = mesh.n_vertices
        self.n_vertices = n
        self.degrees = np.bincount(self.edges.ravel(), minlength=n)
        u, v = self.edges[:, 0], self.edges[:, 1]
        loops = np.arange(n)
        src = np.concatenate([u, v, loops])
        dst = np.concatenate([v, u, loops])
        self.structure = EdgeStructure(n, src, dst)
        d1 = self.degrees + 1.0
        self.coefficients = 1.0 / np.sqrt(d1[self.structure.src] * d1[self.structure.dst])

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def dense_normalized(self) -> np.ndarray:
        """Dense normalized operator; for tests and small meshes only."""
        a = np.zeros((self.n_vertices, self.n_vertices))
        a[self.structure.dst, self.structure.src] = self.coefficients
        return a

    def write_edge_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["u", "v"])
            writer.writerows(self.edges.tolist())


def build_adjacency(mesh: HandMesh) -> GraphAdjacency:
    return GraphAdjacency(mesh)
