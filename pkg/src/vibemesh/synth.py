"""Deterministic synthetic scenario generator.

Stands in for hardware capture: procedural hand poses on the packaged
template, primitive objects placed to touch chosen contact-region pairs,
ground-truth labels straight from the geometric labeling pipeline, and a
contact-conditioned acoustic surrogate (per-region carrier tones over a
broadband probe) that keeps the contacted-region set decodable from the
spectrum.

The acoustic surrogate is intentionally simplistic; it exists to validate
the learning machinery, not to model acoustics. One deliberate wrinkle is
available for benchmarking cross-modal fusion: with ``curl_shift_rate > 0``
a fraction of frames are generated in a strongly-curled pose whose carrier
assignment is permuted, so decoding regions from audio alone becomes
ambiguous and the pose (visible to the mesh encoder) disambiguates. The
default rate is 0, which keeps every carrier fixed.

Everything is a pure function of (config, seed): per-frame generators are
spawned from hashed seed sequences, so results do not depend on generation
order or worker count.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .audio import SAMPLE_RATE, window_geometry, write_wav
from .data import write_labels_jsonl
from .geometry import RigidTransform, label_contacts, surface_distances, write_ply
from .mesh import HandMesh, save_obj, vertex_normals
from .template import TemplateMeta, canonical_hand
from .tensor import write_ten1

N_REGIONS = 16
CONTACT_THRESHOLD_MM = 5.0


@dataclass
class ScenarioConfig:
    seed: int = 0
    n_subjects: int = 2
    n_objects: int = 4
    sessions_per_pair: int = 1
    frames_per_session: int = 50
    no_contact_rate: float = 0.1
    lead_in_frames: int = 2  # forced contact-free session starts (clean baseline)
    curl_shift_rate: float = 0.0
    tone_level: float = 0.25
    probe_level: float = 0.05
    noise_level: float = 0.01
    touch_mm_range: tuple = (0.2, 0.6)  # initial approach clearance
    label_margin_mm: float = 0.02  # no vertex may sit this close to the 5 mm boundary
    contact_fraction_range: tuple = (0.05, 0.10)
    fps: int = 30

    def __post_init__(self):
        for name in ("n_subjects", "n_objects", "sessions_per_pair", "frames_per_session"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        self.touch_mm_range = tuple(self.touch_mm_range)
        self.contact_fraction_range = tuple(self.contact_fraction_range)


class ContactTargetError(RuntimeError):
    """Object placement could not realize the requested contact target."""


BIN_HZ = SAMPLE_RATE / 1024.0
COMB_OFFSET_BINS = (-8, -5, -2, 0, 2, 5, 8)


@dataclass
class AcousticOracle:
    """Region-to-sound mapping: per-region carrier frequencies with a fixed
    comb of sidetones, per-mic gains, and the curled-mode band permutation.

    Each contacted region excites a narrow multi-tone band centered on its
    carrier (a lone sinusoid occupies a single FFT bin, which pooled
    convolutional features wash out; a comb keeps the signature visible)."""

    carriers_hz: np.ndarray  # (K,) distinct, below Nyquist
    gains: np.ndarray  # (5, K) >= 0
    coupling: np.ndarray  # (5,) probe coupling per microphone
    phases: np.ndarray  # (K,) carrier phases
    shift_perm: np.ndarray  # (K,) band permutation used in curled mode
    tone_level: float = 0.25
    probe_level: float = 0.05
    noise_level: float = 0.01

    def __post_init__(self):
        if len(np.unique(self.carriers_hz)) != len(self.carriers_hz):
            raise ValueError("carrier frequencies must be distinct")
        if self.carriers_hz.max() + max(COMB_OFFSET_BINS) * BIN_HZ >= SAMPLE_RATE / 2:
            raise ValueError("carriers must stay below Nyquist")
        if (self.gains < 0).any():
            raise ValueError("gains must be non-negative")

    @classmethod
    def from_seed(cls, seed: int, n_regions: int = N_REGIONS, tone_level: float = 0.25,
                  probe_level: float = 0.05, noise_level: float = 0.01) -> "AcousticOracle":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAC]))
        # Carriers pinned to FFT bin centers, bands spread across 2-18 kHz.
        bins = np.linspace(56, 410, n_regions).round().astype(int)
        carriers = bins * BIN_HZ
        gains = rng.uniform(0.5, 1.0, (5, n_regions))
        coupling = rng.uniform(0.6, 1.0, 5)
        phases = rng.uniform(0, 2 * np.pi, n_regions)
        perm = rng.permutation(n_regions)
        while np.any(perm == np.arange(n_regions)):  # derangement: every band moves
            perm = rng.permutation(n_regions)
        return cls(carriers, gains, coupling, phases, perm,
                   tone_level=tone_level, probe_level=probe_level, noise_level=noise_level)

    def carrier_index(self, region: int, curled: bool) -> int:
        return int(self.shift_perm[region]) if curled else int(region)


def synth_audio(regions, oracle: AcousticOracle, n_samples: int, rng: np.random.Generator,
                t0: int = 0, curled: bool = False) -> np.ndarray:
    """5-channel waveform for one span of samples.

    Broadband probe + one tone comb per contacted region (gain per mic)
    + seeded Gaussian noise. Phases run on absolute sample time, so
    consecutive spans concatenate seamlessly.
    """
    t = (t0 + np.arange(n_samples)) / SAMPLE_RATE
    probe = rng.uniform(-1.0, 1.0, n_samples) * oracle.probe_level
    out = oracle.coupling[:, None] * probe[None, :]
    for r in sorted(int(r) for r in regions):
        k = oracle.carrier_index(r, curled)
        band = np.zeros(n_samples)
        for j, off in enumerate(COMB_OFFSET_BINS):
            freq = oracle.carriers_hz[k] + off * BIN_HZ
            band += np.sin(2 * np.pi * freq * t + oracle.phases[k] + 0.7 * j)
        out = out + oracle.tone_level * oracle.gains[:, r, None] * band[None, :]
    out = out + oracle.noise_level * rng.standard_normal((5, n_samples))
    return out.astype(np.float32)


# ---------------------------------------------------------------------------
# poses

def subject_template(subject_idx: int, seed: int) -> tuple[HandMesh, TemplateMeta]:
    """Per-subject template: the canonical hand under a mild anisotropic
    scaling about its centroid."""
    mesh, meta = canonical_hand()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B, subject_idx]))
    scale = rng.uniform(0.92, 1.08, 3)
    centroid = mesh.vertices.mean(axis=0)
    verts = (mesh.vertices - centroid) * scale + centroid
    return mesh.with_vertices(verts), meta


def _rotation_about_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def generate_pose(template: HandMesh, meta: TemplateMeta, curl_amplitudes,
                  wrist: RigidTransform | None = None) -> np.ndarray:
    """Curl each finger by rotating its rows about successive hinge lines.

    `curl_amplitudes` is one total bend angle (radians) per finger, spread
    evenly across the finger's rows; each hinge passes through the mean of
    the previous row, axis +x. Zero amplitudes and an identity wrist return
    the template vertices unchanged.
    """
    amps = np.asarray(curl_amplitudes, dtype=np.float64)
    verts = template.vertices.copy()
    for f in range(5):
        amp = float(amps[f]) if f < len(amps) else 0.0
        if amp == 0.0:
            continue
        rows = meta.finger_row[meta.finger_id == f]
        max_row = int(rows.max())
        step = -amp / max_row  # negative: curl toward the palm side (-z)
        rot = _rotation_about_x(step)
        for r in range(1, max_row + 1):
            if r >= 2:
                hinge = verts[(meta.finger_id == f) & (meta.finger_row == r - 1)].mean(axis=0)
            else:
                # The finger base row belongs to the palm; extrapolate the
                # knuckle hinge one row below the finger's first two rows.
                m1 = verts[(meta.finger_id == f) & (meta.finger_row == 1)].mean(axis=0)
                m2 = verts[(meta.finger_id == f) & (meta.finger_row == 2)].mean(axis=0)
                hinge = 2 * m1 - m2
            moving = (meta.finger_id == f) & (meta.finger_row >= r)
            verts[moving] = (verts[moving] - hinge) @ rot.T + hinge
    if wrist is not None:
        verts = wrist.apply(verts)
    return verts


def _random_rotation(rng: np.random.Generator, max_angle: float) -> np.ndarray:
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


# ---------------------------------------------------------------------------
# objects

def make_object_mesh(kind: str, rng: np.random.Generator) -> HandMesh:
    """Primitive object mesh centered at the origin, sized like graspables.

    Sizes skew large and flat-ish so a tangent placement along a finger
    produces contact patches in the target fraction band."""
    if kind == "sphere":
        radius = rng.uniform(40.0, 60.0)
        return _uv_sphere(radius, rows=10, cols=14)
    if kind == "box":
        half = np.array([rng.uniform(30.0, 45.0), rng.uniform(22.0, 35.0), rng.uniform(15.0, 25.0)])
        return _box(half, n=4)
    if kind == "cylinder":
        radius = rng.uniform(22.0, 34.0)
        half_h = rng.uniform(32.0, 50.0)
        return _cylinder(radius, half_h, rows=6, cols=14)
    raise ValueError(f"unknown object kind {kind!r}")


def _uv_sphere(radius, rows, cols):
    theta = np.linspace(0, np.pi, rows + 2)[1:-1]
    verts = [[radius * np.sin(t) * np.cos(p), radius * np.sin(t) * np.sin(p), radius * np.cos(t)]
             for t in theta for p in np.linspace(0, 2 * np.pi, cols, endpoint=False)]
    verts += [[0, 0, radius], [0, 0, -radius]]
    faces = []
    for i in range(rows - 1):
        for j in range(cols):
            a, b = i * cols + j, i * cols + (j + 1) % cols
            c, d = (i + 1) * cols + j, (i + 1) * cols + (j + 1) % cols
            faces += [[a, c, b], [b, c, d]]
    north, south = rows * cols, rows * cols + 1
    for j in range(cols):
        faces.append([north, j, (j + 1) % cols])
        faces.append([south, (rows - 1) * cols + (j + 1) % cols, (rows - 1) * cols + j])
    return HandMesh(np.array(verts), np.array(faces), template_id="object-sphere")


def _box(half, n):
    verts = []
    faces = []
    index = {}

    def vid(p):
        key = tuple(np.round(p, 9))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    grid = np.linspace(-1, 1, n + 1)
    for axis in range(3):
        for sign in (-1.0, 1.0):
            for i in range(n):
                for j in range(n):
                    quad = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        uv = [grid[i + di], grid[j + dj]]
                        p = np.empty(3)
                        p[axis] = sign
                        p[(axis + 1) % 3] = uv[0]
                        p[(axis + 2) % 3] = uv[1]
                        quad.append(vid(p * half))
                    a, b, c, d = quad
                    if sign > 0:
                        faces += [[a, b, c], [a, c, d]]
                    else:
                        faces += [[a, c, b], [a, d, c]]
    return HandMesh(np.array(verts), np.array(faces), template_id="object-box")


def _cylinder(radius, half_h, rows, cols):
    zs = np.linspace(-half_h, half_h, rows)
    verts = [[radius * np.cos(p), radius * np.sin(p), z]
             for z in zs for p in np.linspace(0, 2 * np.pi, cols, endpoint=False)]
    verts += [[0, 0, -half_h], [0, 0, half_h]]
    faces = []
    for i in range(rows - 1):
        for j in range(cols):
            a, b = i * cols + j, i * cols + (j + 1) % cols
            c, d = (i + 1) * cols + j, (i + 1) * cols + (j + 1) % cols
            faces += [[a, b, c], [b, d, c]]
    bot, top = rows * cols, rows * cols + 1
    for j in range(cols):
        faces.append([bot, (j + 1) % cols, j])
        faces.append([top, (rows - 1) * cols + j, (rows - 1) * cols + (j + 1) % cols])
    return HandMesh(np.array(verts), np.array(faces), template_id="object-cylinder")


OBJECT_KINDS = ("sphere", "box", "cylinder")


def object_spec(object_idx: int, seed: int) -> HandMesh:
    kind = OBJECT_KINDS[object_idx % len(OBJECT_KINDS)]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0B, object_idx]))
    return make_object_mesh(kind, rng)


# A grasp engages two adjacent fingers (objects are wide enough to lie
# across both). Targets are whole fingers, or both distal pairs when the
# hand is strongly curled; the region subsets stay contiguous runs of the
# finger-major region indexing, mirroring how real grasps engage
# functionally correlated patches rather than arbitrary vertex sets.
GRASP_FINGER_PAIRS = ((0, 1), (1, 2), (2, 3), (3, 4))


@dataclass
class SceneFrame:
    vertices: np.ndarray
    object_pose: RigidTransform | None
    labels: np.ndarray  # (N,) uint8
    regions: tuple  # contacted region ids (>=1 labeled vertex)
    curled: bool
    target_regions: tuple = ()


def contacted_regions(labels: np.ndarray, regions: np.ndarray) -> tuple:
    hit = np.unique(regions[np.asarray(labels, dtype=bool)])
    return tuple(int(r) for r in hit)


def generate_scene(template: HandMesh, meta: TemplateMeta, obj: HandMesh,
                   frame_rng: np.random.Generator, config: ScenarioConfig,
                   force_no_contact: bool = False, max_attempts: int = 100) -> SceneFrame:
    """One frame: pose the hand, place the object against a target region
    pair, label contacts geometrically.

    Placement and labels are retried until no vertex-to-object distance
    falls inside the margin band around the 5 mm threshold and the contact
    fraction lands in the configured range; 100 failures raise."""
    curled = bool(frame_rng.random() < config.curl_shift_rate)
    base_amp = frame_rng.uniform(0.9, 1.25) if curled else frame_rng.uniform(0.05, 0.35)
    amps = base_amp * frame_rng.uniform(0.8, 1.2, 5)
    wrist = RigidTransform(_random_rotation(frame_rng, 0.25), frame_rng.uniform(-30, 30, 3))
    verts = generate_pose(template, meta, amps, wrist)
    posed = template.with_vertices(verts)

    if force_no_contact or frame_rng.random() < config.no_contact_rate:
        return SceneFrame(verts, None, np.zeros(len(verts), np.uint8), (), curled)

    normals = vertex_normals(posed)
    top_side = canonical_hand()[0].vertices[:, 2] > 0.5
    circum = float(np.linalg.norm(obj.vertices, axis=1).max())
    kind = obj.template_id.rsplit("-", 1)[-1]
    obj_tree = cKDTree(obj.vertices)
    obj_edges = np.concatenate([obj.faces[:, [0, 1]], obj.faces[:, [1, 2]], obj.faces[:, [2, 0]]])
    obj_edge = float(np.linalg.norm(obj.vertices[obj_edges[:, 0]] - obj.vertices[obj_edges[:, 1]], axis=1).max())
    n_verts = len(verts)
    lo_k = int(np.ceil(config.contact_fraction_range[0] * n_verts))
    hi_k = int(np.floor(config.contact_fraction_range[1] * n_verts))
    margin = config.label_margin_mm
    for attempt in range(max_attempts):
        # Strong curls bend the fingers too much for a tangent face to follow
        # the whole run; target the distal segments there.
        pair = GRASP_FINGER_PAIRS[int(frame_rng.integers(len(GRASP_FINGER_PAIRS)))]
        segs = (1, 2) if curled else (0, 1, 2)
        targets = tuple(3 * f + s for f in pair for s in segs)
        mask = np.isin(meta.regions, targets) & top_side
        if mask.sum() < 6:
            mask = np.isin(meta.regions, targets)
        tv = verts[mask]
        n = normals[mask].mean(axis=0)
        n /= max(np.linalg.norm(n), 1e-9)
        ys = meta.layout[mask][:, 1]  # template layout runs base -> tip in y
        axis = tv[np.argmax(ys)] - tv[np.argmin(ys)]
        axis = axis - n * (axis @ n)
        axis /= max(np.linalg.norm(axis), 1e-9)
        rot = _tangent_rotation(kind, axis, n, frame_rng)
        center0 = tv.mean(axis=0)
        touch = frame_rng.uniform(*config.touch_mm_range)

        def rough_min(d):
            # Vertex-cloud distance in the object frame: an upper bound on
            # the surface distance, loose by at most one mesh edge. Only
            # used for bracketing; the stand-off solve below is exact.
            local = (tv - (center0 + n * d)) @ rot
            return float(obj_tree.query(local)[0].min())

        near = touch + obj_edge
        hi = circum + near + 60.0
        if rough_min(hi) < near:
            continue
        lo = None
        for d in np.linspace(0.0, hi, 25):
            if rough_min(d) < near:
                lo = d
        if lo is None:
            continue
        for _ in range(20):
            mid = 0.5 * (lo + hi)
            if rough_min(mid) < near:
                lo = mid
            else:
                hi = mid

        # Stand off so the k-th nearest vertex lands just inside the 5 mm
        # threshold, picking k (within the fraction band) where the sorted
        # distances jump the most: that centers the label margin for free.
        d = hi
        accepted = None
        cap = 4.0 * CONTACT_THRESHOLD_MM
        for _ in range(4):
            dist = np.sort(surface_distances(verts, obj.transformed(rot, center0 + n * d), cap_mm=cap))
            if hi_k >= n_verts - 1:
                break
            gaps = dist[lo_k: hi_k + 1] - dist[lo_k - 1: hi_k]
            k = lo_k + int(np.argmax(gaps))
            delta = CONTACT_THRESHOLD_MM - 0.5 * (dist[k - 1] + dist[k])
            if d + delta <= 0.05:
                break
            d += delta
            final = surface_distances(verts, obj.transformed(rot, center0 + n * d), cap_mm=cap)
            in_band = np.any((final > CONTACT_THRESHOLD_MM - margin)
                             & (final < CONTACT_THRESHOLD_MM + margin))
            count = int((final <= CONTACT_THRESHOLD_MM).sum())
            if not in_band and lo_k <= count <= hi_k and final.min() > 0.05:
                accepted = d
                break
        if accepted is None:
            continue
        pose = RigidTransform(rot, center0 + n * accepted)
        labels = label_contacts(posed, obj.transformed(pose.rotation, pose.translation),
                                CONTACT_THRESHOLD_MM)
        regions = contacted_regions(labels.values, meta.regions)
        if regions:
            return SceneFrame(verts, pose, labels.values, regions, curled, targets)
    raise ContactTargetError(f"no valid placement after {max_attempts} attempts")


def _tangent_rotation(kind: str, finger_axis: np.ndarray, approach: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    """Orientation presenting a tangent surface along the finger: boxes turn a
    face toward the hand, cylinders lay their axis along the finger."""
    e3 = approach / np.linalg.norm(approach)
    e1 = finger_axis - e3 * (finger_axis @ e3)
    e1 /= max(np.linalg.norm(e1), 1e-9)
    e2 = np.cross(e3, e1)
    wobble = _random_rotation(rng, 0.12)
    if kind == "cylinder":
        rot = np.column_stack([e2, e3, e1])  # canonical z axis -> finger axis
    else:  # box face (or sphere, orientation-free) toward the hand
        rot = np.column_stack([e1, e2, e3])
    if np.linalg.det(rot) < 0:
        rot[:, 1] *= -1
    return wobble @ rot


# ---------------------------------------------------------------------------
# dataset emission

def _frame_rng(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


@dataclass
class SessionSpec:
    subject_idx: int
    object_idx: int
    session_idx: int

    @property
    def session_id(self) -> str:
        return f"s{self.subject_idx}_o{self.object_idx}_r{self.session_idx}"


def list_sessions(config: ScenarioConfig) -> list[SessionSpec]:
    return [SessionSpec(s, o, r)
            for s in range(config.n_subjects)
            for o in range(config.n_objects)
            for r in range(config.sessions_per_pair)]


def generate_session_frames(config: ScenarioConfig, spec: SessionSpec) -> list[SceneFrame]:
    template, meta = subject_template(spec.subject_idx, config.seed)
    obj = object_spec(spec.object_idx, config.seed)
    frames = []
    for k in range(config.frames_per_session):
        rng = _frame_rng(config.seed, 0xF0, spec.subject_idx, spec.object_idx, spec.session_idx, k)
        frames.append(generate_scene(template, meta, obj, rng, config,
                                     force_no_contact=k < config.lead_in_frames))
    return frames


def session_audio(config: ScenarioConfig, spec: SessionSpec, frames: list[SceneFrame],
                  oracle: AcousticOracle) -> np.ndarray:
    """Hop-aligned session waveform: frame k's contacted regions sound during
    samples [k*hop, (k+1)*hop); a tail keeps the final window covered."""
    hop, width = window_geometry(fps=config.fps)
    blocks = []
    for k, frame in enumerate(frames):
        rng = _frame_rng(config.seed, 0xA0, spec.subject_idx, spec.object_idx, spec.session_idx, k)
        blocks.append(synth_audio(frame.regions, oracle, hop, rng, t0=k * hop, curled=frame.curled))
    tail_rng = _frame_rng(config.seed, 0xA0, spec.subject_idx, spec.object_idx,
                          spec.session_idx, len(frames))
    last = frames[-1]
    blocks.append(synth_audio(last.regions, oracle, width - hop, tail_rng,
                              t0=len(frames) * hop, curled=last.curled))
    return np.concatenate(blocks, axis=1)


def emit_dataset(config: ScenarioConfig, out_dir) -> Path:
    """Write the full on-disk dataset; returns the manifest path.

    Layout per session: 5-channel WAV, per-frame TEN1 meshes, labels
    JSON-lines, fused clouds (PLY with camera ids), two rigidly perturbed
    initial meshes per frame, the object OBJ and per-frame pose lines. The
    last object id and last subject id are marked held out."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    oracle = AcousticOracle.from_seed(config.seed, tone_level=config.tone_level,
                                      probe_level=config.probe_level,
                                      noise_level=config.noise_level)
    manifest = []
    for spec in list_sessions(config):
        sdir = out / "sessions" / spec.session_id
        (sdir / "meshes").mkdir(parents=True, exist_ok=True)
        (sdir / "clouds").mkdir(exist_ok=True)
        (sdir / "init_meshes" / "cam0").mkdir(parents=True, exist_ok=True)
        (sdir / "init_meshes" / "cam1").mkdir(exist_ok=True)
        frames = generate_session_frames(config, spec)
        write_wav(sdir / "audio.wav", session_audio(config, spec, frames, oracle))
        template, meta = subject_template(spec.subject_idx, config.seed)
        obj = object_spec(spec.object_idx, config.seed)
        save_obj(sdir / "object.obj", obj)
        labels_by_frame = {}
        with open(sdir / "object_poses.jsonl", "w", encoding="utf-8") as pose_fh:
            for k, frame in enumerate(frames):
                write_ten1(sdir / "meshes" / f"frame_{k:05d}.ten", frame.vertices.astype(np.float32))
                labels_by_frame[k] = frame.labels
                posed = template.with_vertices(frame.vertices)
                normals = vertex_normals(posed)
                cams = (normals @ np.array([0.3, -0.2, 1.0]) < 0).astype(np.uint8)
                write_ply(sdir / "clouds" / f"frame_{k:05d}.ply", frame.vertices, camera_ids=cams)
                for cam in (0, 1):
                    rng = _frame_rng(config.seed, 0xC0 + cam, spec.subject_idx,
                                     spec.object_idx, spec.session_idx, k)
                    perturb = RigidTransform(_random_rotation(rng, np.radians(3.0)),
                                             rng.uniform(-4, 4, 3))
                    write_ten1(sdir / "init_meshes" / f"cam{cam}" / f"frame_{k:05d}.ten",
                               perturb.apply(frame.vertices).astype(np.float32))
                pose = frame.object_pose
                row = {"frame": k,
                       "rotation": (pose.rotation.tolist() if pose else np.eye(3).tolist()),
                       "translation": (pose.translation.tolist() if pose else [0.0, 0.0, 1e6]),
                       "contact": pose is not None}
                pose_fh.write(json.dumps(row) + "\n")
        write_labels_jsonl(sdir / "labels.jsonl", labels_by_frame, CONTACT_THRESHOLD_MM)
        manifest.append({
            "subject_id": f"s{spec.subject_idx}",
            "object_id": f"o{spec.object_idx}",
            "session_id": spec.session_id,
            "mesh_dir": f"sessions/{spec.session_id}/meshes",
            "wav_paths": [f"sessions/{spec.session_id}/audio.wav"],
            "labels_path": f"sessions/{spec.session_id}/labels.jsonl",
            "cloud_dir": f"sessions/{spec.session_id}/clouds",
            "init_mesh_dirs": [f"sessions/{spec.session_id}/init_meshes/cam0",
                               f"sessions/{spec.session_id}/init_meshes/cam1"],
            "object_mesh": f"sessions/{spec.session_id}/object.obj",
            "object_poses": f"sessions/{spec.session_id}/object_poses.jsonl",
        })
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1))
    (out / "dataset.json").write_text(json.dumps({
        "seed": config.seed,
        "held_out_objects": [f"o{config.n_objects - 1}"],
        "held_out_subjects": [f"s{config.n_subjects - 1}"],
        "config": asdict(config),
    }, indent=1))
    return manifest_path
