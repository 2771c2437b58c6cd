"""Loss algebra, class weights, metric conventions, accumulation identity,
and the training loop's scheduler wiring."""

import numpy as np
import pytest

import vibemesh.training as training_mod
from vibemesh.data import FrameRecord, SessionEntry, SplitLeakageError, SplitPlan
from vibemesh.evaluation import contact_chamfer, f1_score
from vibemesh.mesh import build_adjacency
from vibemesh.model import ContactNet
from vibemesh.optim import Adam
from vibemesh.tensor import Tape, Tensor
from vibemesh.training import (
    TrainConfig,
    TrainingDivergedError,
    accumulate_gradients,
    class_weights,
    train,
    weighted_bce,
)

from helpers import build_grid_mesh
from test_model import toy_config


class TestClassWeights:
    def test_direct_evaluation_778_over_78(self):
        y = np.zeros(778)
        y[:78] = 1
        w1, w0 = class_weights(y)
        assert w1 == pytest.approx(778 / 156, abs=1e-3)
        assert w1 == pytest.approx(4.987, abs=1e-3)
        assert w0 == pytest.approx(778 / 1400, abs=1e-4)
        assert w0 == pytest.approx(0.5557, abs=1e-4)

    def test_balanced_batch_gives_unit_weights(self):
        y = np.array([0, 1] * 50)
        assert class_weights(y) == (1.0, 1.0)

    def test_single_class_falls_back_with_warning(self, caplog):
        with caplog.at_level("WARNING"):
            assert class_weights(np.zeros(10)) == (1.0, 1.0)
            assert class_weights(np.ones(10)) == (1.0, 1.0)
        assert "single-class" in caplog.text

    def test_contact_band_five_to_ten_percent(self):
        # Contact fractions in the 5-10% band map to w1 in [5, 10].
        for frac in (0.05, 0.07, 0.10):
            n = 2000
            y = np.zeros(n)
            y[: int(frac * n)] = 1
            w1, w0 = class_weights(y)
            assert 5.0 <= w1 <= 10.0
            assert 0.526 <= w0 <= 0.556


class TestWeightedBce:
    def test_perfect_prediction_is_tiny(self):
        y = np.array([0.0, 1.0, 1.0, 0.0])
        loss = weighted_bce(y.copy(), y, 1.0, 1.0)
        assert float(loss.data) <= 1e-5

    def test_half_everywhere_is_ln2(self):
        yhat = np.full(64, 0.5)
        y = (np.arange(64) % 2).astype(float)
        assert float(weighted_bce(yhat, y, 1.0, 1.0).data) == pytest.approx(np.log(2), abs=1e-6)

    def test_single_vertex_direct_value(self):
        loss = weighted_bce(np.array([0.9]), np.array([1.0]), 1.0, 1.0)
        assert float(loss.data) == pytest.approx(-np.log(0.9), abs=1e-6)

    def test_unit_weights_match_unweighted(self, rng):
        yhat = rng.uniform(0.05, 0.95, 100)
        y = rng.integers(0, 2, 100).astype(float)
        weighted = float(weighted_bce(yhat, y, 1.0, 1.0).data)
        plain = -np.mean(y * np.log(yhat) + (1 - y) * np.log(1 - yhat))
        assert weighted == pytest.approx(plain, abs=1e-9)

    def test_gradient_matches_closed_form(self, rng):
        yhat = rng.uniform(0.1, 0.9, 50)
        y = rng.integers(0, 2, 50).astype(float)
        w1, w0 = 3.0, 0.6
        t = Tensor(yhat, requires_grad=True)
        with Tape() as tape:
            loss = weighted_bce(t, y, w1, w0)
        tape.backward(loss)
        closed = -(w1 * y / yhat - w0 * (1 - y) / (1 - yhat)) / len(y)
        assert np.abs(t.grad - closed).max() < 1e-6

    def test_length_mismatch_errors(self):
        with pytest.raises(ValueError):
            weighted_bce(np.array([0.5, 0.5]), np.array([1.0]), 1, 1)


class TestF1:
    def test_worked_example(self):
        pred = set(range(10))
        true = set(range(4, 12))
        p, r, f1 = f1_score(pred, true, n_vertices=20)
        assert p == pytest.approx(0.6)
        assert r == pytest.approx(0.75)
        assert f1 == pytest.approx(0.6667, abs=1e-4)

    def test_exact_match(self):
        p, r, f1 = f1_score({1, 2, 3}, {1, 2, 3}, n_vertices=5)
        assert (p, r, f1) == (1.0, 1.0, 1.0)

    def test_empty_conventions(self):
        assert f1_score(set(), set(), n_vertices=4)[2] == 1.0
        assert f1_score({1}, set(), n_vertices=4)[2] == 0.0
        assert f1_score(set(), {1}, n_vertices=4)[2] == 0.0

    def test_disjoint_sets(self):
        assert f1_score({0, 1}, {2, 3}, n_vertices=6)[2] == 0.0

    def test_boolean_mask_input(self):
        pred = np.array([1, 1, 0, 0], dtype=bool)
        true = np.array([1, 0, 1, 0], dtype=bool)
        p, r, f1 = f1_score(pred, true)
        assert p == r == 0.5

    def test_relabeling_invariance(self, rng):
        n = 50
        pred = set(rng.choice(n, 12, replace=False).tolist())
        true = set(rng.choice(n, 9, replace=False).tolist())
        perm = rng.permutation(n)
        f1 = f1_score(pred, true, n_vertices=n)[2]
        f1p = f1_score({int(perm[i]) for i in pred}, {int(perm[i]) for i in true}, n_vertices=n)[2]
        assert f1 == pytest.approx(f1p)


class TestContactChamfer:
    def test_identical_sets_zero(self, rng):
        pts = rng.standard_normal((10, 3))
        assert contact_chamfer(pts, pts) == 0.0

    def test_worked_geometry_example(self):
        a = np.array([[0.0, 0, 0], [2, 0, 0]])
        b = np.array([[1.0, 0, 0]])
        assert contact_chamfer(a, b) == pytest.approx(1.0)

    def test_symmetric(self, rng):
        a = rng.standard_normal((8, 3))
        b = rng.standard_normal((5, 3))
        assert contact_chamfer(a, b) == contact_chamfer(b, a)


def toy_frames(rng, cfg, n_frames, mesh):
    frames = []
    for k in range(n_frames):
        verts = mesh.vertices + 0.1 * rng.standard_normal(mesh.vertices.shape)
        labels = np.zeros(cfg.n_vertices, np.uint8)
        hot = rng.integers(0, 2)
        spec = np.abs(rng.standard_normal((5, cfg.audio_bins, 2))).astype(np.float32) * 0.05
        # Make labels decodable from the spectrogram: group 0 or 1 lights a band.
        labels[hot * 6: hot * 6 + 6] = 1
        spec[:, 2 + hot * 5, :] += 3.0
        frames.append(FrameRecord(verts, spec, labels, "s0", "o0", "sess0", k))
    return frames


class TestAccumulation:
    def test_micro_batching_is_bit_identical(self, rng):
        cfg = toy_config()
        mesh = build_grid_mesh(3, 4)
        adj = build_adjacency(mesh)
        model = ContactNet(cfg, adj, seed=3)
        frames = toy_frames(rng, cfg, 12, mesh)
        from vibemesh.audio import fit_normalization, apply_normalization
        stats = fit_normalization(np.stack([f.spectrogram for f in frames]))
        specs = np.stack([apply_normalization(f.spectrogram, stats) for f in frames])

        rng_a = np.random.default_rng(0)
        big, loss_big = accumulate_gradients(model, frames, specs, 2.0, 0.7, rng_a)

        rng_b = np.random.default_rng(0)
        loss_acc = 0.0
        acc = {k: np.zeros_like(p.data) for k, p in model.params.items()}
        for start in range(0, 12, 4):  # micro-batches of 4
            acc, part = accumulate_gradients(model, frames[start:start + 4],
                                             specs[start:start + 4], 2.0, 0.7, rng_b, grads=acc)
            loss_acc += part
        assert loss_acc == loss_big
        for k in big:
            assert np.array_equal(big[k], acc[k]), k


class TestTrainLoop:
    def test_loss_decreases_and_is_deterministic(self, rng):
        cfg = toy_config(dropout=0.1)
        mesh = build_grid_mesh(3, 4)
        adj = build_adjacency(mesh)
        frames = toy_frames(rng, cfg, 24, mesh)
        tc = TrainConfig(lr=0.01, batch_size=4, accumulation=2, epochs=6, seed=11, dropout=0.1)

        model1 = ContactNet(cfg, adj, seed=11)
        r1 = train(model1, frames[:20], frames[20:], tc)
        assert r1.history[-1].train_loss < r1.history[0].train_loss

        model2 = ContactNet(cfg, adj, seed=11)
        r2 = train(model2, frames[:20], frames[20:], tc)
        assert [h.train_loss for h in r1.history] == [h.train_loss for h in r2.history]
        assert [h.val_loss for h in r1.history] == [h.val_loss for h in r2.history]

    def test_forced_plateau_halves_lr_at_epoch_six(self, rng, monkeypatch):
        cfg = toy_config()
        mesh = build_grid_mesh(3, 4)
        adj = build_adjacency(mesh)
        frames = toy_frames(rng, cfg, 10, mesh)
        monkeypatch.setattr(training_mod, "_split_loss", lambda *a, **k: 1.0)
        tc = TrainConfig(lr=0.001, batch_size=5, accumulation=1, epochs=7,
                         scheduler_factor=0.5, scheduler_patience=5, seed=0, dropout=0.0)
        model = ContactNet(cfg, adj, seed=0)
        result = train(model, frames[:8], frames[8:], tc)
        lrs = [h.lr for h in result.history]
        assert lrs[:5] == [0.001] * 5
        assert lrs[5] == pytest.approx(0.0005)
        assert lrs[6] == pytest.approx(0.0005)

    def test_empty_split_rejected(self):
        cfg = toy_config()
        adj = build_adjacency(build_grid_mesh(3, 4))
        with pytest.raises(ValueError, match="empty"):
            train(ContactNet(cfg, adj), [], [], TrainConfig())

    def test_nan_parameter_aborts_with_diagnostics(self, rng):
        cfg = toy_config()
        mesh = build_grid_mesh(3, 4)
        adj = build_adjacency(mesh)
        frames = toy_frames(rng, cfg, 8, mesh)
        model = ContactNet(cfg, adj, seed=1)
        model.params["g_p_w"].data[0] = np.nan
        with pytest.raises(TrainingDivergedError, match="epoch 1"):
            train(model, frames, [], TrainConfig(epochs=1, batch_size=4, accumulation=1, dropout=0.0))


def entry(subj, obj, sess):
    return SessionEntry(subject_id=subj, object_id=obj, session_id=sess,
                        mesh_dir="m", wav_paths=["w"], labels_path="l")


class TestSplitPlan:
    def make_sessions(self):
        out = []
        for s in ("s0", "s1"):
            for o in ("o0", "o1", "o2"):
                for r in range(2):
                    out.append(entry(s, o, f"{s}_{o}_r{r}"))
        return out

    def test_assignments_cover_expected_splits(self):
        plan = SplitPlan.build(self.make_sessions(), ["o2"], ["s1"])
        assert plan.split_sessions("unseen-object")
        assert plan.split_sessions("unseen-subject")
        assert plan.split_sessions("test")
        assert plan.split_sessions("train")
        for s in plan.split_sessions("unseen-object"):
            assert s.object_id == "o2" and s.subject_id != "s1"
        for s in plan.split_sessions("unseen-subject"):
            assert s.subject_id == "s1" and s.object_id != "o2"

    def test_no_leakage_between_train_and_heldout(self):
        plan = SplitPlan.build(self.make_sessions(), ["o2"], ["s1"])
        train_objs = {s.object_id for s in plan.split_sessions("train") + plan.split_sessions("val")}
        assert "o2" not in train_objs
        train_subj = {s.subject_id for s in plan.split_sessions("train") + plan.split_sessions("val")}
        assert "s1" not in train_subj

    def test_sessions_do_not_straddle(self):
        plan = SplitPlan.build(self.make_sessions(), ["o2"], ["s1"])
        seen = {}
        for sid, sp in plan.assignments.items():
            assert sid not in seen
            seen[sid] = sp

    def test_invariant_violation_raises(self):
        plan = SplitPlan.build(self.make_sessions(), ["o2"], ["s1"])
        sid = plan.split_sessions("unseen-object")[0].session_id
        plan.assignments[sid] = "train"
        with pytest.raises(SplitLeakageError):
            plan.assert_invariants()

    def test_deterministic(self):
        p1 = SplitPlan.build(self.make_sessions(), ["o2"], ["s1"])
        p2 = SplitPlan.build(self.make_sessions(), ["o2"], ["s1"])
        assert p1.assignments == p2.assignments
