"""Visuo-acoustic per-vertex hand contact estimation.

Subpackage map:

- :mod:`vibemesh.tensor` / :mod:`vibemesh.optim` -- autodiff engine, Adam,
  plateau scheduling, TEN1 tensor files.
- :mod:`vibemesh.mesh` / :mod:`vibemesh.template` -- fixed-topology hand mesh,
  graph adjacency, the 778-vertex template.
- :mod:`vibemesh.geometry` -- ICP, chamfer, ARAP blending, frame gating,
  proximity contact labeling.
- :mod:`vibemesh.audio` -- reference subtraction, windowing, STFT
  spectrograms, corpus normalization.
- :mod:`vibemesh.model` -- audio encoder, mesh encoder, cross-modal fusion,
  checkpoints.
- :mod:`vibemesh.data` / :mod:`vibemesh.training` / :mod:`vibemesh.evaluation`
  -- dataset manifests, splits, the training loop, metrics and reports.
- :mod:`vibemesh.synth` -- deterministic synthetic scenario generator.
- :mod:`vibemesh.cli` -- the ``vibemesh`` command line.
"""

__version__ = "0.1.0"
