"""Scratch experiment: end-to-end learnability of the synthetic benchmark.

Not part of the package; used while tuning generator/model interplay.
Run: python tools/learnability_probe.py [frames] [accum] [epochs] [lr]
"""

import sys
import time

import numpy as np

from vibemesh.audio import AudioRecording, preprocess_recording
from vibemesh.data import FrameRecord
from vibemesh.mesh import build_adjacency
from vibemesh.model import ContactNet, ModelConfig
from vibemesh.synth import (AcousticOracle, ScenarioConfig, SessionSpec,
                            generate_session_frames, session_audio)
from vibemesh.template import canonical_hand
from vibemesh.training import TrainConfig, train

frames_per = int(sys.argv[1]) if len(sys.argv) > 1 else 100
accum = int(sys.argv[2]) if len(sys.argv) > 2 else 2
epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 16
lr = float(sys.argv[4]) if len(sys.argv) > 4 else 0.001

cfg = ScenarioConfig(seed=1, n_subjects=1, n_objects=2, sessions_per_pair=1,
                     frames_per_session=frames_per)
oracle = AcousticOracle.from_seed(1)
records = []
t0 = time.perf_counter()
for o in range(2):
    spec = SessionSpec(0, o, 0)
    scenes = generate_session_frames(cfg, spec)
    au = session_audio(cfg, spec, scenes, oracle)
    stacks, _ = preprocess_recording(AudioRecording(au))
    for k, sc in enumerate(scenes):
        records.append(FrameRecord(sc.vertices, stacks[k], sc.labels, "s0", f"o{o}",
                                   spec.session_id, k))
print(f"generated {len(records)} frames in {time.perf_counter()-t0:.0f}s", flush=True)

mesh, meta = canonical_hand()
adj = build_adjacency(mesh)
model = ContactNet(ModelConfig(), adj, seed=0)
rng = np.random.default_rng(0)
idx = rng.permutation(len(records))
n_tr = int(0.85 * len(records))
tr = [records[i] for i in idx[:n_tr]]
va = [records[i] for i in idx[n_tr:]]
tc = TrainConfig(lr=lr, batch_size=32, accumulation=accum, epochs=epochs, seed=0,
                 scheduler_patience=8, early_stop_train_f1=0.95)
t0 = time.perf_counter()
res = train(model, tr, va, tc)
print(f"{len(res.history)} epochs in {time.perf_counter()-t0:.0f}s", flush=True)
for h in res.history:
    print(f"ep {h.epoch}: train {h.train_loss:.4f} val {h.val_loss:.4f} "
          f"lr {h.lr:.1e} F1 {h.train_f1:.3f} ({h.seconds:.1f}s)", flush=True)
