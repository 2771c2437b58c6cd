"""Annotation geometry: nearest neighbors, rigid ICP, chamfer distance, ARAP
blending of two aligned meshes, chamfer frame gating, and proximity contact
labels. All distances are millimeters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .mesh import HandMesh


class DegenerateGeometryError(ValueError):
    """Input geometry cannot support the requested operation."""


class PlyParseError(ValueError):
    """Malformed PLY content."""


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion: x -> R x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if np.linalg.norm(r.T @ r - np.eye(3)) > 1e-6:
            raise DegenerateGeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise DegenerateGeometryError("rotation must have determinant +1")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self o other: apply `other` first, then `self`."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def rotation_angle(self) -> float:
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.arccos(np.clip(c, -1.0, 1.0)))


@dataclass
class ContactLabels:
    """Per-vertex binary contact plus the threshold that produced it."""

    values: np.ndarray
    threshold_mm: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint8)
        if self.threshold_mm <= 0:
            raise ValueError(f"contact threshold must be positive, got {self.threshold_mm}")

    @property
    def contact_ids(self) -> np.ndarray:
        return np.flatnonzero(self.values)


def _as_points(x) -> np.ndarray:
    pts = x.vertices if isinstance(x, HandMesh) else np.asarray(x, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DegenerateGeometryError(f"expected (P, 3) points, got {pts.shape}")
    if len(pts) == 0:
        raise DegenerateGeometryError("empty point set")
    if not np.isfinite(pts).all():
        raise DegenerateGeometryError("non-finite coordinates in point set")
    return pts


def nearest_neighbor(query, target) -> tuple[np.ndarray, np.ndarray]:
    """Exact nearest neighbor of every query point in `target`.

    Returns (indices, distances). kd-tree accelerated; results are identical
    to an exhaustive scan.
    """
    q = _as_points(query)
    t = _as_points(target)
    dist, idx = cKDTree(t).query(q)
    return idx, dist


def estimate_rigid(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid fit of paired points (SVD with reflection fix)."""
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    if len(src) < 3:
        raise DegenerateGeometryError(f"rigid fit needs >= 3 points, got {len(src)}")
    sc = src.mean(axis=0)
    tc = tgt.mean(axis=0)
    s0 = src - sc
    sing = np.linalg.svd(s0, compute_uv=False)
    if sing[1] < 1e-9 * max(sing[0], 1.0):
        raise DegenerateGeometryError("source points are (near-)collinear; rotation is unconstrained")
    h = s0.T @ (tgt - tc)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, tc - r @ sc)


def icp_align(source, target, init: RigidTransform | None = None,
              max_iters: int = 50, tol: float = 1e-6) -> tuple[RigidTransform, float]:
    """Point-to-point ICP from `init`; returns (transform, final RMS residual).

    Residuals are non-increasing across iterations (asserted); hitting
    `max_iters` without meeting `tol` is not an error -- the caller judges
    the returned residual.
    """
    src = _as_points(source)
    tgt = _as_points(target)
    transform = init or RigidTransform.identity()
    tree = cKDTree(tgt)
    cur = transform.apply(src)
    residual = None
    for _ in range(max_iters):
        dist, idx = tree.query(cur)
        rms = float(np.sqrt(np.mean(dist ** 2)))
        if residual is not None:
            assert rms <= residual * (1 + 1e-9) + 1e-12, "ICP residual increased"
        residual = rms
        delta = estimate_rigid(cur, tgt[idx])
        step = np.linalg.norm(delta.rotation - np.eye(3)) + np.linalg.norm(delta.translation)
        transform = delta.compose(transform)
        cur = delta.apply(cur)
        if step < tol:
            break
    dist, _ = tree.query(cur)
    final = float(np.sqrt(np.mean(dist ** 2)))
    if residual is not None:
        assert final <= residual * (1 + 1e-9) + 1e-12, "ICP residual increased"
    return transform, final


def chamfer_distance(set_a, set_b) -> float:
    """Symmetric average nearest-neighbor distance (unsquared norms, mm):

        d = 1/(2|A|) sum_a min_b ||a-b||  +  1/(2|B|) sum_b min_a ||a-b||
    """
    a = _as_points(set_a)
    b = _as_points(set_b)
    _, d_ab = nearest_neighbor(a, b)
    _, d_ba = nearest_neighbor(b, a)
    return float(0.5 * d_ab.mean() + 0.5 * d_ba.mean())


def gate_frame(blended: HandMesh, fused_cloud, gate_mm: float) -> tuple[bool, float]:
    """Keep a frame iff chamfer(mesh vertices, cloud) <= gate (inclusive)."""
    value = chamfer_distance(blended.vertices, fused_cloud)
    return value <= gate_mm, value


# ---------------------------------------------------------------------------
# ARAP blending

def agreement_weights(mesh_a: HandMesh, mesh_b: HandMesh, cloud, sigma_mm: float = 5.0) -> np.ndarray:
    """Per-vertex blend weight toward mesh A from local cloud agreement.

    w_i = g(d_A) / (g(d_A) + g(d_B)) with g(d) = exp(-d^2 / (2 sigma^2)) and
    d the vertex-to-cloud nearest distance.
    """
    _, da = nearest_neighbor(mesh_a.vertices, cloud)
    _, db = nearest_neighbor(mesh_b.vertices, cloud)
    ga = np.exp(-(da ** 2) / (2 * sigma_mm ** 2))
    gb = np.exp(-(db ** 2) / (2 * sigma_mm ** 2))
    return ga / np.maximum(ga + gb, 1e-12)


def _arap_energy(edges, rest_edges, pos, rotations, targets, lam):
    i, j = edges[:, 0], edges[:, 1]
    cur = pos[i] - pos[j]
    rotated = np.einsum("eab,eb->ea", rotations[i], rest_edges)
    e_arap = np.sum((cur - rotated) ** 2)
    e_soft = lam * np.sum((pos - targets) ** 2)
    return e_arap + e_soft


def arap_blend(mesh_a: HandMesh, mesh_b: HandMesh, weights,
               constraint_weight: float = 2.0, max_iters: int = 10,
               tol: float = 1e-7) -> HandMesh:
    """Blend two same-topology meshes as-rigid-as-possibly.

    Per-vertex targets w*A + (1-w)*B act as soft constraints; local rotations
    are fit per vertex (uniform edge weights, SVD), then a global sparse
    solve updates positions. Energy decreases monotonically (asserted).
    Deformation rigidity is measured against mesh A's edge geometry.
    """
    if mesh_a.faces.shape != mesh_b.faces.shape or not np.array_equal(mesh_a.faces, mesh_b.faces):
        raise DegenerateGeometryError("ARAP blend needs identical topology")
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(w) != mesh_a.n_vertices or not np.isfinite(w).all():
        raise DegenerateGeometryError("agreement weights must be finite, one per vertex")

    targets = w[:, None] * mesh_a.vertices + (1.0 - w[:, None]) * mesh_b.vertices
    n = mesh_a.n_vertices
    f = mesh_a.faces
    und = np.unique(np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1), axis=0)
    edges = np.concatenate([und, und[:, ::-1]])  # directed both ways
    i, j = edges[:, 0], edges[:, 1]
    rest = mesh_a.vertices
    rest_edges = rest[i] - rest[j]

    lam = float(constraint_weight)
    deg = np.bincount(i, minlength=n).astype(np.float64)
    lap = sp.csr_matrix((np.full(len(i), -1.0), (i, j)), shape=(n, n))
    lap += sp.diags(deg)
    system = (2.0 * lap + lam * sp.eye(n)).tocsc()
    solver = spla.factorized(system)

    pos = targets.copy()
    rotations = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    prev_energy = None
    for _ in range(max_iters):
        # Local step: best rotation per vertex from edge-vector covariance.
        cur_edges = pos[i] - pos[j]
        s = np.zeros((n, 3, 3))
        np.add.at(s, i, rest_edges[:, :, None] * cur_edges[:, None, :])
        u, _, vt = np.linalg.svd(s)
        r = np.einsum("nba,ncb->nac", vt, u)  # V U^T, batched
        flip = np.sign(np.linalg.det(r))
        vt_fix = vt.copy()
        vt_fix[:, -1, :] *= flip[:, None]
        rotations = np.einsum("nba,ncb->nac", vt_fix, u)

        # Global step: (2L + lam I) p = rhs.
        rhs = lam * targets.copy()
        contrib = np.einsum("eab,eb->ea", rotations[i] + rotations[j], rest_edges)
        np.add.at(rhs, i, contrib)
        pos = np.column_stack([solver(rhs[:, k]) for k in range(3)])

        energy = _arap_energy(edges, rest_edges, pos, rotations, targets, lam)
        if prev_energy is not None:
            assert energy <= prev_energy * (1 + 1e-9) + 1e-9, "ARAP energy increased"
            if prev_energy - energy < tol * max(prev_energy, 1.0):
                prev_energy = energy
                break
        prev_energy = energy
    return mesh_a.with_vertices(pos)


# ---------------------------------------------------------------------------
# contact labeling

def point_triangle_distances(points: np.ndarray, tri_a, tri_b, tri_c) -> np.ndarray:
    """Exact distances from each point to each triangle, shape (P, M).

    Region classification (closest feature: vertex, edge, or interior
    projection) expressed entirely through barycentric coordinates, so the
    heavy lifting is two (P, 3) x (3, M) products plus scalar (P, M) maps.
    """
    p = np.asarray(points, dtype=np.float64)
    a = np.asarray(tri_a, dtype=np.float64)
    ab = np.asarray(tri_b, dtype=np.float64) - a
    ac = np.asarray(tri_c, dtype=np.float64) - a

    p_ab = p @ ab.T  # (P, M)
    p_ac = p @ ac.T
    a_ab = np.einsum("mk,mk->m", a, ab)
    a_ac = np.einsum("mk,mk->m", a, ac)
    b_ab = a_ab + np.einsum("mk,mk->m", ab, ab)
    b_ac = a_ac + np.einsum("mk,mk->m", ab, ac)
    c_ab = a_ab + np.einsum("mk,mk->m", ac, ab)
    c_ac = a_ac + np.einsum("mk,mk->m", ac, ac)

    d1 = p_ab - a_ab
    d2 = p_ac - a_ac
    d3 = p_ab - b_ab
    d4 = p_ac - b_ac
    d5 = p_ab - c_ab
    d6 = p_ac - c_ac

    eps = 1e-30
    s = np.empty_like(d1)
    t = np.empty_like(d1)
    done = np.zeros(d1.shape, dtype=bool)

    def assign(mask, sv, tv):
        todo = mask & ~done
        s[todo] = sv[todo] if isinstance(sv, np.ndarray) else sv
        t[todo] = tv[todo] if isinstance(tv, np.ndarray) else tv
        done[todo] = True

    assign((d1 <= 0) & (d2 <= 0), 0.0, 0.0)  # vertex A
    assign((d3 >= 0) & (d4 <= d3), 1.0, 0.0)  # vertex B
    vc = d1 * d4 - d3 * d2
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), d1 / np.maximum(d1 - d3, eps), 0.0)  # edge AB
    assign((d6 >= 0) & (d5 <= d6), 0.0, 1.0)  # vertex C
    vb = d5 * d2 - d1 * d6
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), 0.0, d2 / np.maximum(d2 - d6, eps))  # edge AC
    va = d3 * d6 - d5 * d4
    w_bc = (d4 - d3) / np.maximum((d4 - d3) + (d5 - d6), eps)
    assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), 1.0 - w_bc, w_bc)  # edge BC
    denom = np.maximum(va + vb + vc, eps)
    assign(np.ones_like(done), vb / denom, vc / denom)  # interior

    # |p - (a + s ab + t ac)|^2 expanded through the precomputed dots.
    pp = np.einsum("pk,pk->p", p, p)
    aa = np.einsum("mk,mk->m", a, a)
    abab = np.einsum("mk,mk->m", ab, ab)
    acac = np.einsum("mk,mk->m", ac, ac)
    abac = np.einsum("mk,mk->m", ab, ac)
    sq = (pp[:, None] - 2.0 * (p @ a.T) + aa[None, :]
          - 2.0 * s * d1 - 2.0 * t * d2
          + s * s * abab[None, :] + 2.0 * s * t * abac[None, :] + t * t * acac[None, :])
    return np.sqrt(np.maximum(sq, 0.0))


def surface_distances(points, surface, cap_mm: float | None = None) -> np.ndarray:
    """Distance from each point to an object surface (mesh: exact
    point-to-triangle; point cloud: nearest point).

    With `cap_mm`, entries at or below the cap are still exact; farther
    points (certified by a vertex-distance bound) return their nearest
    mesh-vertex distance instead, which is >= the exact value and > cap.
    Threshold decisions at or below the cap are therefore unchanged, at a
    fraction of the cost.
    """
    pts = _as_points(points)
    if not isinstance(surface, HandMesh):
        _, dist = nearest_neighbor(pts, surface)
        return dist
    f = surface.faces
    v = surface.vertices
    if cap_mm is None:
        return point_triangle_distances(pts, v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]).min(axis=1)
    _, upper = nearest_neighbor(pts, v)
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    diam = np.linalg.norm(v[edges[:, 0]] - v[edges[:, 1]], axis=1).max()
    out = upper.copy()
    candidates = upper - diam <= cap_mm
    if candidates.any():
        d = point_triangle_distances(pts[candidates], v[f[:, 0]], v[f[:, 1]], v[f[:, 2]])
        out[candidates] = d.min(axis=1)
    return out


def label_contacts(hand: HandMesh, object_surface, threshold_mm: float = 5.0) -> ContactLabels:
    """Binary per-vertex contact: 1 iff the vertex lies within `threshold_mm`
    of the object surface (both in one coordinate frame)."""
    if threshold_mm <= 0:
        raise ValueError(f"contact threshold must be positive, got {threshold_mm}")
    dist = surface_distances(hand.vertices, object_surface, cap_mm=threshold_mm)
    return ContactLabels((dist <= threshold_mm).astype(np.uint8), threshold_mm)


def refine_object_pose(object_mesh: HandMesh, depth_cloud, init_pose: RigidTransform,
                       max_iters: int = 50, tol: float = 1e-6) -> tuple[RigidTransform, float]:
    """ICP refinement of an object pose against observed depth points."""
    return icp_align(object_mesh.vertices, depth_cloud, init=init_pose,
                     max_iters=max_iters, tol=tol)


# ---------------------------------------------------------------------------
# PLY point clouds (ascii / binary little endian; optional camera_id column)

_PLY_TYPES = {
    "float": ("<f4", float), "float32": ("<f4", float),
    "double": ("<f8", float), "float64": ("<f8", float),
    "uchar": ("<u1", int), "uint8": ("<u1", int),
    "char": ("<i1", int), "int8": ("<i1", int),
    "short": ("<i2", int), "int16": ("<i2", int),
    "ushort": ("<u2", int), "uint16": ("<u2", int),
    "int": ("<i4", int), "int32": ("<i4", int),
    "uint": ("<u4", int), "uint32": ("<u4", int),
}


def read_ply(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a PLY vertex cloud -> (points (P,3) mm, camera ids or None)."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise PlyParseError("missing 'ply' magic line")
        fmt = None
        count = None
        props: list[tuple[str, str]] = []
        in_vertex = False
        while True:
            line = fh.readline()
            if not line:
                raise PlyParseError("header ended before end_header")
            tokens = line.decode("ascii", "replace").strip().split()
            if not tokens:
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                in_vertex = tokens[1] == "vertex"
                if in_vertex:
                    count = int(tokens[2])
            elif tokens[0] == "property" and in_vertex:
                if tokens[1] == "list":
                    raise PlyParseError("list properties are not supported for vertices")
                if tokens[1] not in _PLY_TYPES:
                    raise PlyParseError(f"unsupported property type {tokens[1]!r}")
                props.append((tokens[1], tokens[2]))
            elif tokens[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise PlyParseError(f"unsupported PLY format {fmt!r}")
        if count is None:
            raise PlyParseError("no vertex element declared")
        names = [name for _, name in props]
        for want in ("x", "y", "z"):
            if want not in names:
                raise PlyParseError(f"vertex element lacks property {want!r}")
        if fmt == "binary_little_endian":
            dt = np.dtype([(name, _PLY_TYPES[t][0]) for t, name in props])
            raw = fh.read(dt.itemsize * count)
            if len(raw) != dt.itemsize * count:
                raise PlyParseError("binary payload truncated")
            table = np.frombuffer(raw, dtype=dt)
        else:
            rows = []
            for _ in range(count):
                line = fh.readline()
                if not line:
                    raise PlyParseError("ascii payload truncated")
                rows.append([float(tok) for tok in line.split()])
            arr = np.asarray(rows, dtype=np.float64)
            if arr.shape[1] != len(props):
                raise PlyParseError("ascii row width does not match declared properties")
            table = {name: arr[:, k] for k, (_, name) in enumerate(props)}
    points = np.column_stack([np.asarray(table["x"], dtype=np.float64),
                              np.asarray(table["y"], dtype=np.float64),
                              np.asarray(table["z"], dtype=np.float64)])
    cams = None
    if "camera_id" in names:
        cams = np.asarray(table["camera_id"], dtype=np.int64)
    return points, cams


def write_ply(path, points: np.ndarray, camera_ids: np.ndarray | None = None,
              binary: bool = True):
    pts = _as_points(points).astype("<f4")
    header = ["ply",
              f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {len(pts)}",
              "property float x", "property float y", "property float z"]
    if camera_ids is not None:
        header.append("property uchar camera_id")
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            if camera_ids is None:
                fh.write(pts.tobytes())
            else:
                dt = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("camera_id", "<u1")])
                rec = np.empty(len(pts), dtype=dt)
                rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
                rec["camera_id"] = np.asarray(camera_ids, dtype=np.uint8)
                fh.write(rec.tobytes())
        else:
            cams = camera_ids if camera_ids is not None else [None] * len(pts)
            for (x, y, z), cid in zip(pts, cams):
                row = f"{x:.6f} {y:.6f} {z:.6f}"
                if cid is not None:
                    row += f" {int(cid)}"
                fh.write((row + "\n").encode("ascii"))
