"""Procedural hand template: a watertight, two-sided "glove plate" mesh with
exactly 778 vertices, plus a 16-region vertex partition.

The template is a structured 2-D layout (palm grid + five finger strips)
extruded into a thin closed solid: interior layout vertices get a top and a
bottom copy, outline vertices a single shared rim vertex. All downstream
operations are topology-parametric; this particular template exists so the
package carries no external mesh assets.

Regions: finger ``f`` in 0..4 contributes regions ``3f`` (base), ``3f+1``
(mid), ``3f+2`` (tip); the palm is region 15.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .mesh import HandMesh

N_REGIONS = 16
PALM_REGION = 15

# Layout constants (tuned once so the closed mesh has exactly 778 vertices).
PALM_COLS = 19
PALM_ROWS = 12
FINGER_LENGTHS = (17, 21, 22, 21, 14)  # rows above the shared palm top row
FINGER_BASE_COLS = (0, 4, 8, 12, 16)  # each finger spans 3 columns
GRID_MM = 4.5
PALM_HALF_THICKNESS_MM = 5.0
FINGER_HALF_THICKNESS_MM = 3.2


@dataclass
class TemplateMeta:
    """Per-vertex layout info carried alongside the mesh."""

    regions: np.ndarray  # (N,) int in [0, 16)
    layout: np.ndarray  # (N, 2) the 2-D layout position, mm
    finger_id: np.ndarray  # (N,) int, -1 for palm
    finger_row: np.ndarray  # (N,) row along the finger, -1 for palm
    top_faces: np.ndarray  # face indices forming the top sheet


def _build_layout():
    """2-D vertex grid: returns positions, boundary mask, region/finger info,
    and the triangle list (indices into the 2-D vertex array)."""
    pos = []
    meta = []  # (is_boundary, region, finger_id, finger_row)
    index = {}

    def add(c, r, boundary, region, fid, frow):
        index[(c, r)] = len(pos)
        pos.append((c * GRID_MM, r * GRID_MM))
        meta.append((boundary, region, fid, frow))

    finger_cols = {c for base in FINGER_BASE_COLS for c in range(base, base + 3)}
    finger_mid_cols = {base + 1 for base in FINGER_BASE_COLS}
    top = PALM_ROWS - 1
    for r in range(PALM_ROWS):
        for c in range(PALM_COLS):
            if r == 0 or c == 0 or c == PALM_COLS - 1:
                boundary = True
            elif r == top:
                boundary = c not in finger_mid_cols
            else:
                boundary = False
            add(c, r, boundary, PALM_REGION, -1, -1)
    for fid, (base, length) in enumerate(zip(FINGER_BASE_COLS, FINGER_LENGTHS)):
        for rr in range(1, length + 1):
            r = top + rr
            for c in range(base, base + 3):
                boundary = (c != base + 1) or (rr == length)
                third = min(2, 3 * (rr - 1) // length)
                add(c, r, boundary, 3 * fid + third, fid, rr)

    quads = []
    for r in range(PALM_ROWS - 1):
        for c in range(PALM_COLS - 1):
            quads.append(((c, r), (c + 1, r), (c, r + 1), (c + 1, r + 1)))
    for base, length in zip(FINGER_BASE_COLS, FINGER_LENGTHS):
        for rr in range(length):
            r = top + rr
            for c in range(base, base + 2):
                quads.append(((c, r), (c + 1, r), (c, r + 1), (c + 1, r + 1)))

    boundary = np.array([m[0] for m in meta], dtype=bool)
    tris = []
    for a, b, c, d in quads:
        if all((k in index) for k in (a, b, c, d)):
            ia, ib, ic, id_ = index[a], index[b], index[c], index[d]
            # Prefer the diagonal whose two triangles each touch an interior
            # vertex; an all-boundary triangle would duplicate across sheets.
            for t1, t2 in (((ia, ib, id_), (ia, id_, ic)), ((ia, ib, ic), (ib, id_, ic))):
                if not (boundary[list(t1)].all() or boundary[list(t2)].all()):
                    tris.extend([t1, t2])
                    break
            else:
                raise RuntimeError("quad with no safe diagonal; layout too thin")

    info = {
        "pos": np.array(pos, dtype=np.float64),
        "boundary": boundary,
        "region": np.array([m[1] for m in meta], dtype=np.int64),
        "finger_id": np.array([m[2] for m in meta], dtype=np.int64),
        "finger_row": np.array([m[3] for m in meta], dtype=np.int64),
        "tris": np.array(tris, dtype=np.int64),
    }
    return info


def _half_thickness(info):
    """Per-layout-vertex extrusion height: thinner on fingers, tapering
    toward the outline so rim transitions stay gentle."""
    pos = info["pos"]
    rim = pos[info["boundary"]]
    d = np.sqrt(((pos[:, None, :] - rim[None, :, :]) ** 2).sum(-1)).min(axis=1)
    base = np.where(info["finger_id"] >= 0, FINGER_HALF_THICKNESS_MM, PALM_HALF_THICKNESS_MM)
    return np.minimum(base, 1.4 + 0.75 * d)


def build_hand_template() -> tuple[HandMesh, TemplateMeta]:
    """Construct the canonical template mesh and its metadata."""
    info = _build_layout()
    pos, boundary, tris = info["pos"], info["boundary"], info["tris"]
    n2d = len(pos)
    half = _half_thickness(info)

    top_id = np.full(n2d, -1, dtype=np.int64)
    bot_id = np.full(n2d, -1, dtype=np.int64)
    verts = []
    parent = []
    for k in range(n2d):
        top_id[k] = len(verts)
        z = 0.0 if boundary[k] else half[k]
        verts.append((pos[k, 0], pos[k, 1], z))
        parent.append(k)
    for k in range(n2d):
        if boundary[k]:
            bot_id[k] = top_id[k]
        else:
            bot_id[k] = len(verts)
            verts.append((pos[k, 0], pos[k, 1], -half[k]))
            parent.append(k)

    faces = []
    for i, j, k in tris:
        faces.append((top_id[i], top_id[j], top_id[k]))
    n_top_faces = len(faces)
    for i, j, k in tris:
        faces.append((bot_id[i], bot_id[k], bot_id[j]))

    parent = np.array(parent)
    mesh = HandMesh(np.array(verts), np.array(faces), template_id="vibemesh-hand778")
    meta = TemplateMeta(
        regions=info["region"][parent],
        layout=pos[parent],
        finger_id=info["finger_id"][parent],
        finger_row=info["finger_row"][parent],
        top_faces=np.arange(n_top_faces, dtype=np.int64),
    )
    return mesh, meta


def meta_to_dict(meta: TemplateMeta) -> dict:
    return {
        "regions": meta.regions.tolist(),
        "layout": meta.layout.tolist(),
        "finger_id": meta.finger_id.tolist(),
        "finger_row": meta.finger_row.tolist(),
        "top_faces": meta.top_faces.tolist(),
    }


def meta_from_dict(d: dict) -> TemplateMeta:
    return TemplateMeta(
        regions=np.asarray(d["regions"], dtype=np.int64),
        layout=np.asarray(d["layout"], dtype=np.float64),
        finger_id=np.asarray(d["finger_id"], dtype=np.int64),
        finger_row=np.asarray(d["finger_row"], dtype=np.int64),
        top_faces=np.asarray(d["top_faces"], dtype=np.int64),
    )


_cache: tuple[HandMesh, TemplateMeta] | None = None


def canonical_hand() -> tuple[HandMesh, TemplateMeta]:
    """The packaged 778-vertex template (built once, then cached)."""
    global _cache
    if _cache is None:
        try:
            from .mesh import load_obj

            root = resources.files("vibemesh").joinpath("assets")
            with resources.as_file(root.joinpath("hand778.obj")) as p:
                mesh = load_obj(p, expected_vertices=778, template_id="vibemesh-hand778")
            meta = meta_from_dict(json.loads(root.joinpath("hand778_meta.json").read_text()))
        except FileNotFoundError:
            mesh, meta = build_hand_template()
        _cache = (mesh, meta)
    return _cache
