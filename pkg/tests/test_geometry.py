"""Registration geometry against brute-force and synthetic-transform oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vibemesh.geometry import (
    ContactLabels,
    DegenerateGeometryError,
    RigidTransform,
    agreement_weights,
    arap_blend,
    chamfer_distance,
    gate_frame,
    icp_align,
    label_contacts,
    nearest_neighbor,
    point_triangle_distances,
    read_ply,
    refine_object_pose,
    write_ply,
)
from vibemesh.mesh import HandMesh
from vibemesh.template import canonical_hand


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def random_rotation(rng, max_angle):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def brute_force_nn(query, target):
    d = np.linalg.norm(query[:, None, :] - target[None, :, :], axis=-1)
    return d.argmin(axis=1), d.min(axis=1)


def brute_force_chamfer(a, b):
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    return 0.5 * d.min(axis=1).mean() + 0.5 * d.min(axis=0).mean()


def oracle_point_triangle(p, a, b, c):
    """Independent scalar oracle: unconstrained barycentric solve, else the
    best clamped projection onto each edge."""
    ab, ac = b - a, c - a
    m = np.array([[ab @ ab, ab @ ac], [ab @ ac, ac @ ac]])
    rhs = np.array([ab @ (p - a), ac @ (p - a)])
    try:
        s, t = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError:
        s, t = -1.0, -1.0
    if s >= 0 and t >= 0 and s + t <= 1:
        return np.linalg.norm(a + s * ab + t * ac - p)
    best = np.inf
    for p0, p1 in ((a, b), (a, c), (b, c)):
        seg = p1 - p0
        u = np.clip(seg @ (p - p0) / (seg @ seg), 0.0, 1.0)
        best = min(best, np.linalg.norm(p0 + u * seg - p))
    return best


class TestNearestNeighbor:
    def test_exact_match_distance_zero(self):
        idx, dist = nearest_neighbor(np.array([[1.0, 2, 3]]), np.array([[0.0, 0, 0], [1, 2, 3]]))
        assert idx[0] == 1 and dist[0] == 0.0

    def test_hand_evaluated(self):
        idx, dist = nearest_neighbor(np.zeros((1, 3)), np.array([[1.0, 0, 0], [0, 2, 0]]))
        assert idx[0] == 0
        assert dist[0] == pytest.approx(1.0)

    def test_matches_brute_force_exactly(self, rng):
        q = rng.uniform(-50, 50, (500, 3))
        t = rng.uniform(-50, 50, (500, 3))
        idx, dist = nearest_neighbor(q, t)
        bidx, bdist = brute_force_nn(q, t)
        assert np.array_equal(idx, bidx)
        assert np.array_equal(dist, np.linalg.norm(q - t[bidx], axis=1))
        assert np.allclose(dist, bdist)

    def test_empty_target_errors(self):
        with pytest.raises(DegenerateGeometryError):
            nearest_neighbor(np.zeros((1, 3)), np.zeros((0, 3)))


class TestRigidTransform:
    def test_rejects_reflection(self):
        with pytest.raises(DegenerateGeometryError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_compose_and_inverse(self, rng):
        t1 = RigidTransform(rot_z(0.3), np.array([1.0, 2, 3]))
        t2 = RigidTransform(rot_z(-0.7), np.array([-4.0, 0, 1]))
        pts = rng.standard_normal((10, 3))
        assert np.allclose(t1.compose(t2).apply(pts), t1.apply(t2.apply(pts)))
        assert np.allclose(t1.inverse().apply(t1.apply(pts)), pts, atol=1e-12)


class TestIcp:
    def test_identity_when_aligned(self, rng):
        pts = rng.uniform(-40, 40, (200, 3))
        transform, residual = icp_align(pts, pts)
        assert residual == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(transform.rotation, np.eye(3), atol=1e-9)

    def test_recovers_synthetic_transform(self, rng):
        pts = rng.uniform(-40, 40, (300, 3))
        true = RigidTransform(rot_z(np.radians(10)), np.array([5.0, 0, 0]))
        transform, residual = icp_align(pts, true.apply(pts))
        err = transform.compose(true.inverse())
        assert err.rotation_angle() < 1e-3
        assert residual < 0.01
        assert np.linalg.norm(transform.apply(pts) - true.apply(pts), axis=1).max() < 0.01

    def test_two_point_source_is_degenerate(self):
        with pytest.raises(DegenerateGeometryError):
            icp_align(np.array([[0.0, 0, 0], [1, 0, 0]]), np.eye(3))

    def test_collinear_source_is_degenerate(self):
        src = np.outer(np.linspace(0, 1, 10), [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateGeometryError, match="collinear"):
            icp_align(src, np.eye(3))

    def test_init_transform_used(self, rng):
        pts = rng.uniform(-30, 30, (150, 3))
        true = RigidTransform(random_rotation(rng, np.radians(25)), rng.uniform(-40, 40, 3))
        near = RigidTransform(true.rotation @ rot_z(0.01), true.translation + 0.5)
        transform, residual = icp_align(pts, true.apply(pts), init=near)
        assert residual < 1e-6


class TestChamfer:
    def test_identical_sets_zero(self, rng):
        a = rng.standard_normal((20, 3))
        assert chamfer_distance(a, a) == 0.0

    def test_single_point_pair(self):
        assert chamfer_distance(np.zeros((1, 3)), np.array([[1.0, 0, 0]])) == pytest.approx(1.0)

    def test_two_against_one(self):
        a = np.array([[0.0, 0, 0], [2, 0, 0]])
        b = np.array([[1.0, 0, 0]])
        assert chamfer_distance(a, b) == pytest.approx(1.0)

    def test_matches_brute_force(self, rng):
        for _ in range(25):
            a = rng.uniform(-10, 10, (rng.integers(1, 100), 3))
            b = rng.uniform(-10, 10, (rng.integers(1, 100), 3))
            assert chamfer_distance(a, b) == pytest.approx(brute_force_chamfer(a, b), abs=1e-12)

    def test_symmetry_and_translation_invariance(self, rng):
        a = rng.uniform(-5, 5, (40, 3))
        b = rng.uniform(-5, 5, (30, 3))
        assert chamfer_distance(a, b) == chamfer_distance(b, a)
        shift = np.array([3.0, -7.0, 11.0])
        assert chamfer_distance(a + shift, b + shift) == pytest.approx(chamfer_distance(a, b), abs=1e-9)

    def test_empty_set_errors(self):
        with pytest.raises(DegenerateGeometryError):
            chamfer_distance(np.zeros((0, 3)), np.zeros((1, 3)))


class TestGate:
    def test_identical_keeps(self):
        mesh, _ = canonical_hand()
        keep, value = gate_frame(mesh, mesh.vertices, gate_mm=10.0)
        assert keep and value == 0.0

    def test_gate_is_inclusive(self):
        mesh = HandMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))
        cloud = mesh.vertices + np.array([0.0, 0.0, 2.0])
        keep, value = gate_frame(mesh, cloud, gate_mm=2.0)
        assert value == pytest.approx(2.0)
        assert keep

    def test_beyond_gate_discards(self):
        mesh = HandMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), np.array([[0, 1, 2]]))
        keep, value = gate_frame(mesh, mesh.vertices + np.array([0, 0, 12.0]), gate_mm=10.0)
        assert not keep and value == pytest.approx(12.0)


class TestArap:
    def test_equal_meshes_fixed_point(self):
        mesh, _ = canonical_hand()
        out = arap_blend(mesh, mesh, np.full(mesh.n_vertices, 0.5))
        assert np.abs(out.vertices - mesh.vertices).max() < 1e-9

    def test_weights_one_returns_mesh_a(self):
        mesh, _ = canonical_hand()
        moved = mesh.transformed(rot_z(0.2), np.array([4.0, 1.0, 0.0]))
        out = arap_blend(mesh, moved, np.ones(mesh.n_vertices))
        assert np.abs(out.vertices - mesh.vertices).max() < 1e-6

    def test_near_identity_rigid_blend_hits_midpoint(self):
        mesh, _ = canonical_hand()
        angle = 0.02
        shift = np.array([0.5, -0.3, 0.4])
        moved = mesh.transformed(rot_z(angle), shift)
        out = arap_blend(mesh, moved, np.full(mesh.n_vertices, 0.5))
        mid = mesh.transformed(rot_z(angle / 2), shift / 2)
        # Rigid midpoint vs linear midpoint differ at O(angle^2); 0.1 mm RMS.
        rms = np.sqrt(np.mean(np.sum((out.vertices - mid.vertices) ** 2, axis=1)))
        assert rms < 0.1

    def test_topology_mismatch_rejected(self):
        mesh, _ = canonical_hand()
        other = HandMesh(np.eye(3), np.array([[0, 1, 2]]))
        with pytest.raises(DegenerateGeometryError):
            arap_blend(mesh, other, np.ones(mesh.n_vertices))

    def test_agreement_weights_prefer_closer_mesh(self):
        mesh, _ = canonical_hand()
        far = mesh.with_vertices(mesh.vertices + np.array([0, 0, 20.0]))
        w = agreement_weights(mesh, far, mesh.vertices)
        assert w.min() > 0.5
        assert w.mean() > 0.95


class TestLabelContacts:
    def test_threshold_boundary(self):
        hand = HandMesh(np.array([[0, 0, 4.9], [0, 0, 5.1], [50, 50, 0.0]]), np.array([[0, 1, 2]]))
        plane = HandMesh(
            np.array([[-100.0, -100, 0], [100, -100, 0], [100, 100, 0], [-100, 100, 0]]),
            np.array([[0, 1, 2], [0, 2, 3]]),
        )
        labels = label_contacts(hand, plane, threshold_mm=5.0)
        assert labels.values.tolist() == [1, 0, 1]

    def test_far_object_all_zero(self):
        mesh, _ = canonical_hand()
        far = HandMesh(np.eye(3) + 1000.0, np.array([[0, 1, 2]]))
        labels = label_contacts(mesh, far)
        assert labels.values.sum() == 0

    def test_against_point_triangle_oracle(self, rng):
        mesh, _ = canonical_hand()
        tri_v = rng.uniform(-30, 60, (8, 3, 3)) + mesh.vertices.mean(axis=0)
        tris = np.arange(24).reshape(8, 3)
        obj = HandMesh(tri_v.reshape(-1, 3), tris)
        sub = mesh.vertices[rng.choice(len(mesh.vertices), 60, replace=False)]
        main = point_triangle_distances(sub, tri_v[:, 0], tri_v[:, 1], tri_v[:, 2])
        for pi, p in enumerate(sub):
            for ti in range(8):
                ref = oracle_point_triangle(p, *tri_v[ti])
                assert main[pi, ti] == pytest.approx(ref, abs=1e-9)
        # Label equality against the oracle decision on the full hand.
        labels = label_contacts(mesh, obj, threshold_mm=20.0)
        oracle = np.array([
            min(oracle_point_triangle(p, *tri_v[t]) for t in range(8)) <= 20.0
            for p in mesh.vertices
        ]).astype(np.uint8)
        assert np.array_equal(labels.values, oracle)

    def test_monotone_in_threshold(self, rng):
        mesh, _ = canonical_hand()
        sphere_center = mesh.vertices.mean(axis=0) + np.array([0, 0, 12.0])
        cloud = sphere_center + 6.0 * _unit_sphere_points(rng, 400)
        tight = label_contacts(mesh, cloud, threshold_mm=4.0)
        loose = label_contacts(mesh, cloud, threshold_mm=5.0)
        assert np.all(loose.values >= tight.values)

    def test_positive_threshold_required(self):
        mesh, _ = canonical_hand()
        with pytest.raises(ValueError):
            label_contacts(mesh, mesh.vertices, threshold_mm=0.0)

    def test_contact_labels_validation(self):
        labels = ContactLabels(np.array([0, 1, 1]), 5.0)
        assert labels.contact_ids.tolist() == [1, 2]


def _unit_sphere_points(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestRefineObjectPose:
    def test_exact_init_unchanged(self, rng):
        mesh, _ = canonical_hand()
        pose = RigidTransform(rot_z(0.4), np.array([10.0, -5.0, 2.0]))
        cloud = pose.apply(mesh.vertices)
        refined, residual = refine_object_pose(mesh, cloud, pose)
        assert residual == pytest.approx(0.0, abs=1e-9)
        assert refined.compose(pose.inverse()).rotation_angle() < 1e-9

    def test_recovers_small_offset(self, rng):
        mesh, _ = canonical_hand()
        true = RigidTransform(rot_z(0.3), np.array([5.0, 5.0, 0.0]))
        cloud = true.apply(mesh.vertices)
        init = RigidTransform(true.rotation @ rot_z(np.radians(5)), true.translation + np.array([3.0, 0, 0]))
        refined, residual = refine_object_pose(mesh, cloud, init)
        err = refined.compose(true.inverse())
        assert err.rotation_angle() < 1e-3
        assert np.linalg.norm(refined.apply(mesh.vertices) - cloud, axis=1).max() < 0.05

    def test_empty_cloud_errors(self):
        mesh, _ = canonical_hand()
        with pytest.raises(DegenerateGeometryError):
            refine_object_pose(mesh, np.zeros((0, 3)), RigidTransform.identity())


class TestPly:
    @pytest.mark.parametrize("binary", [True, False])
    @pytest.mark.parametrize("with_cams", [True, False])
    def test_round_trip(self, binary, with_cams, rng, tmp_path):
        pts = rng.uniform(-100, 100, (57, 3)).astype(np.float32).astype(np.float64)
        cams = rng.integers(0, 2, 57) if with_cams else None
        path = tmp_path / "c.ply"
        write_ply(path, pts, camera_ids=cams, binary=binary)
        back, back_cams = read_ply(path)
        assert np.allclose(back, pts, atol=1e-4)
        if with_cams:
            assert np.array_equal(back_cams, cams)
        else:
            assert back_cams is None

    def test_binary_is_bit_exact_for_f32(self, rng, tmp_path):
        pts = rng.uniform(-10, 10, (33, 3)).astype(np.float32)
        path = tmp_path / "c.ply"
        write_ply(path, pts.astype(np.float64), binary=True)
        back, _ = read_ply(path)
        assert np.array_equal(back.astype(np.float32), pts)

    def test_rejects_other_formats(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_bytes(b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n")
        with pytest.raises(Exception):
            read_ply(path)
