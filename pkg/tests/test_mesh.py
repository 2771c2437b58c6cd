"""Hand mesh structure, OBJ round trips, adjacency normalization, normals."""

import numpy as np
import pytest

from vibemesh.mesh import (
    CANONICAL_VERTEX_COUNT,
    GraphAdjacency,
    HandMesh,
    MeshTopologyError,
    ObjParseError,
    build_adjacency,
    load_obj,
    save_obj,
    vertex_normals,
)
from vibemesh.template import canonical_hand
from vibemesh.tensor import read_ten1, write_ten1


def tetrahedron():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    f = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])
    return HandMesh(v, f)


class TestHandMesh:
    def test_face_index_out_of_range(self):
        with pytest.raises(MeshTopologyError, match=r"\[0, 3\)"):
            HandMesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))

    def test_degenerate_face_rejected(self):
        with pytest.raises(MeshTopologyError, match="degenerate"):
            HandMesh(np.zeros((3, 3)), np.array([[0, 1, 1]]))

    def test_isolated_vertex_rejected(self):
        v = np.zeros((4, 3))
        with pytest.raises(MeshTopologyError, match="isolated"):
            HandMesh(v, np.array([[0, 1, 2]]))

    def test_with_vertices_keeps_topology(self):
        m = tetrahedron()
        m2 = m.with_vertices(m.vertices + 5.0)
        assert m2.faces is m.faces
        assert np.allclose(m2.vertices - m.vertices, 5.0)


class TestObjIO:
    def test_tetrahedron_round_trip(self, tmp_path):
        m = tetrahedron()
        path = tmp_path / "tet.obj"
        save_obj(path, m)
        back = load_obj(path)
        assert back.n_vertices == 4 and back.n_faces == 4
        assert np.allclose(back.vertices, m.vertices, atol=1e-6)
        assert np.array_equal(back.faces, m.faces)

    def test_canonical_template_has_778_vertices(self):
        mesh, meta = canonical_hand()
        assert mesh.n_vertices == CANONICAL_VERTEX_COUNT
        assert meta.regions.shape == (CANONICAL_VERTEX_COUNT,)

    def test_obj_is_one_based(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")
        with pytest.raises(ObjParseError, match="line 4"):
            load_obj(path)

    def test_malformed_vertex_reports_line(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0\n")
        with pytest.raises(ObjParseError, match="line 1"):
            load_obj(path)

    def test_expected_vertex_count_enforced(self, tmp_path):
        path = tmp_path / "tet.obj"
        save_obj(path, tetrahedron())
        with pytest.raises(MeshTopologyError, match="778"):
            load_obj(path, expected_vertices=778)
        assert load_obj(path, expected_vertices=None).n_vertices == 4

    def test_face_with_slashes(self, tmp_path):
        path = tmp_path / "slash.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n")
        assert load_obj(path).n_faces == 1

    def test_round_trip_six_decimals(self, tmp_path):
        mesh, _ = canonical_hand()
        noisy = mesh.with_vertices(mesh.vertices + 0.1234567)
        path = tmp_path / "hand.obj"
        save_obj(path, noisy)
        back = load_obj(path)
        assert np.abs(back.vertices - noisy.vertices).max() < 5e-7

    def test_ten1_cache_is_bit_exact(self, tmp_path):
        mesh, _ = canonical_hand()
        path = tmp_path / "verts.ten"
        write_ten1(path, mesh.vertices)
        assert np.array_equal(read_ten1(path), mesh.vertices)


class TestAdjacency:
    def test_single_triangle(self):
        m = HandMesh(np.eye(3), np.array([[0, 1, 2]]))
        adj = build_adjacency(m)
        assert adj.n_edges == 3
        assert np.array_equal(adj.degrees, [2, 2, 2])

    def test_two_triangles_sharing_an_edge(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
        adj = build_adjacency(HandMesh(v, np.array([[0, 1, 2], [1, 3, 2]])))
        assert adj.n_edges == 5

    def test_normalized_operator_symmetric_and_bounded(self):
        # Row sums of the symmetric normalization exceed 1 wherever a
        # high-degree vertex borders low-degree ones; the stable property
        # is the spectral bound ||A_hat||_2 <= 1.
        mesh, _ = canonical_hand()
        adj = build_adjacency(mesh)
        dense = adj.dense_normalized()
        assert np.abs(dense - dense.T).max() < 1e-6
        assert np.abs(np.linalg.eigvalsh(dense)).max() <= 1.0 + 1e-6

    def test_self_loop_coefficients(self):
        m = HandMesh(np.eye(3), np.array([[0, 1, 2]]))
        adj = build_adjacency(m)
        es = adj.structure
        loops = es.src == es.dst
        assert np.allclose(adj.coefficients[loops], 1.0 / 3.0)  # degree 2 + loop
        assert np.allclose(adj.coefficients[~loops], 1.0 / 3.0)

    def test_permutation_consistency(self, rng):
        mesh, _ = canonical_hand()
        perm = rng.permutation(mesh.n_vertices)
        inv = np.argsort(perm)
        permuted = HandMesh(mesh.vertices[perm], inv[mesh.faces], template_id="perm")
        a0 = build_adjacency(mesh)
        a1 = build_adjacency(permuted)
        remapped = np.sort(inv[a0.edges], axis=1)
        as_set = {tuple(e) for e in remapped.tolist()}
        assert as_set == {tuple(e) for e in a1.edges.tolist()}

    def test_edge_csv_export(self, tmp_path):
        adj = build_adjacency(tetrahedron())
        path = tmp_path / "edges.csv"
        adj.write_edge_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "u,v"
        assert len(lines) == 1 + adj.n_edges


class TestVertexNormals:
    def test_flat_square_points_up(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
        f = np.array([[0, 1, 2], [0, 2, 3]])
        n = vertex_normals(HandMesh(v, f))
        assert np.allclose(n, [[0, 0, 1]] * 4)

    def test_tetrahedron_normals_point_outward(self):
        m = tetrahedron()
        n = vertex_normals(m)
        centroid = m.vertices.mean(axis=0)
        outward = m.vertices - centroid
        assert (np.einsum("ij,ij->i", n, outward) > 0).all()

    def test_sphere_normals_match_positions(self):
        # Analytic oracle: on a centered sphere the unit normal equals the
        # normalized vertex position. Max angular error < 5 degrees at ~1k.
        rows, cols = 24, 44
        theta = np.linspace(0, np.pi, rows + 2)[1:-1]
        phi = np.linspace(0, 2 * np.pi, cols, endpoint=False)
        grid = np.array([
            [np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)]
            for t in theta for p in phi
        ])
        verts = np.vstack([grid, [[0, 0, 1]], [[0, 0, -1]]])
        faces = []
        for i in range(rows - 1):
            for j in range(cols):
                a = i * cols + j
                b = i * cols + (j + 1) % cols
                faces += [[a, (i + 1) * cols + j, b], [b, (i + 1) * cols + j, (i + 1) * cols + (j + 1) % cols]]
        north, south = rows * cols, rows * cols + 1
        for j in range(cols):
            faces.append([north, j, (j + 1) % cols])
            faces.append([south, (rows - 1) * cols + (j + 1) % cols, (rows - 1) * cols + j])
        mesh = HandMesh(verts, np.array(faces))
        n = vertex_normals(mesh)
        cosang = np.clip(np.einsum("ij,ij->i", n, verts / np.linalg.norm(verts, axis=1, keepdims=True)), -1, 1)
        assert np.degrees(np.arccos(cosang)).max() < 5.0
