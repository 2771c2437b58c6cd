"""The contact-prediction network: per-channel audio trunk with channel
self-attention, GCN/GAT mesh encoder with global attention pooling, and the
cross-modal fusion head producing per-vertex contact probabilities.

Layers are free functions over explicit parameter tensors (so each one can be
gradient-checked in isolation); :class:`ContactNet` owns the parameters and
composes them per frame. Ablation variants swap subgraphs:

- ``no-audio``: the audio embedding is a zero vector.
- ``no-vision``: per-vertex features and the mesh embedding are learned
  constants (a vertex-embedding table), no geometry input.
- ``no-fusion``: the fusion MLP is the identity on the concatenated global
  vector (the heads widen accordingly).
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .mesh import GraphAdjacency
from .tensor import Tape, Tensor

ABLATIONS = ("none", "no-audio", "no-vision", "no-fusion")

CHECKPOINT_MAGIC = b"VMCK"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    n_vertices: int = 778
    vertex_in: int = 3
    gcn1_width: int = 64
    gcn2_width: int = 128
    gat_width: int = 256
    gat_heads: int = 4
    audio_channels: int = 5
    audio_bins: int = 513
    trunk_channels: tuple = (16, 32, 64)
    embed_dim: int = 256
    fusion_hidden: int = 512
    fused_dim: int = 256
    dropout: float = 0.25
    leaky_slope: float = 0.2
    coord_scale_mm: float = 100.0
    ablation: str = "none"

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.gat_width % self.gat_heads:
            raise ValueError("gat_width must divide evenly across heads")
        self.trunk_channels = tuple(self.trunk_channels)

    @property
    def head_dim(self) -> int:
        return self.gat_width // self.gat_heads

    @property
    def global_dim(self) -> int:
        return 2 * self.embed_dim

    @property
    def vertex_feature_dim(self) -> int:
        fused = self.global_dim if self.ablation == "no-fusion" else self.fused_dim
        return self.gat_width + fused


# ---------------------------------------------------------------------------
# layers

def gcn_layer(h: Tensor, adjacency: GraphAdjacency, coeffs: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """ReLU(A_hat h W + b) via edge-list gather/scatter aggregation."""
    agg = T.edge_aggregate(coeffs, h, adjacency.structure)
    return T.relu(T.add(T.matmul(agg, w), b))


def gat_layer(h: Tensor, adjacency: GraphAdjacency, heads: list[dict], slope: float = 0.2) -> Tensor:
    """Multi-head graph attention over neighbors-plus-self; heads concatenate.

    Per head: e_uv = leaky_relu(a_dst . W x_u + a_src . W x_v), attention is
    a softmax over each destination's incoming edges, outputs are attention-
    weighted sums of transformed neighbor features. No output nonlinearity.
    """
    es = adjacency.structure
    outs = []
    for p in heads:
        wx = T.matmul(h, p["w"])
        s_src = T.matmul(wx, p["a_src"])
        s_dst = T.matmul(wx, p["a_dst"])
        scores = T.leaky_relu(
            T.add(T.edge_gather(s_dst, es, "dst"), T.edge_gather(s_src, es, "src")), slope)
        alpha = T.edge_softmax(scores, es)
        outs.append(T.edge_aggregate(alpha, wx, es))
    return T.concat(outs, axis=-1)


def attention_pool(h: Tensor, w: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """Softmax-weighted sum of node embeddings -> (graph vector, weights)."""
    scores = T.add(T.matmul(h, w), b)
    alpha = T.softmax(scores)
    return T.matmul(alpha, h), alpha


def channel_self_attention(e: Tensor, wq: Tensor, wk: Tensor, wv: Tensor) -> Tensor:
    """Single-head self-attention mixing the per-channel embeddings (C, D)."""
    q = T.matmul(e, wq)
    k = T.matmul(e, wk)
    v = T.matmul(e, wv)
    scale = 1.0 / np.sqrt(e.shape[-1])
    scores = T.mul(T.matmul(q, T.swap_last_axes(k)), scale)
    return T.matmul(T.softmax(scores), v)


def _global_avg_pool(x: Tensor) -> Tensor:
    n = x.shape[-1] * x.shape[-2]
    return T.mul(T.tensor_sum(T.tensor_sum(x, axis=-1), axis=-1), 1.0 / n)


def audio_trunk(spec: Tensor, params: dict, training: bool, rng, dropout_p: float) -> Tensor:
    """Shared-weight conv stack per channel, channel self-attention, mean over
    channels, output projection -> audio embedding vector.

    A fixed frequency-coordinate channel rides along with each spectrogram:
    small convolutions followed by global average pooling are translation-
    invariant along the frequency axis, and absolute bin position is exactly
    the information that distinguishes spectral signatures.
    """
    c, f, t = spec.shape
    x = T.reshape(spec, (c, 1, f, t))
    coord = np.broadcast_to(np.linspace(-1.0, 1.0, f, dtype=spec.dtype)[None, None, :, None],
                            (c, 1, f, t))
    x = T.concat([x, Tensor(np.ascontiguousarray(coord))], axis=1)
    x = T.maxpool2d(T.relu(T.conv2d(x, params["conv1_w"], params["conv1_b"])), 2)
    x = T.maxpool2d(T.relu(T.conv2d(x, params["conv2_w"], params["conv2_b"])), 2)
    x = T.relu(T.conv2d(x, params["conv3_w"], params["conv3_b"]))
    pooled = _global_avg_pool(x)  # (C, trunk_out)
    emb = T.add(T.matmul(pooled, params["trunk_fc_w"]), params["trunk_fc_b"])  # (C, D)
    mixed = channel_self_attention(emb, params["attn_q"], params["attn_k"], params["attn_v"])
    merged = T.tensor_mean(mixed, axis=0)  # channel mean -> (D,)
    merged = T.dropout(merged, dropout_p, rng, training)
    return T.add(T.matmul(merged, params["proj_w"]), params["proj_b"])


def fusion_mlp(z_global: Tensor, params: dict, training: bool, rng, dropout_p: float) -> Tensor:
    hidden = T.relu(T.add(T.matmul(z_global, params["f1_w"]), params["f1_b"]))
    hidden = T.dropout(hidden, dropout_p, rng, training)
    return T.add(T.matmul(hidden, params["f2_w"]), params["f2_b"])


def fuse_and_predict(h3: Tensor, z_mesh: Tensor, z_audio: Tensor, params: dict,
                     config: ModelConfig, training: bool, rng) -> tuple[Tensor, Tensor]:
    """Cross-modal fusion and the per-vertex attention/prediction heads.

    v_i = [h_i ; z_fused]; alpha_i = sigmoid(g_a(v_i)); the prediction reads
    the alpha-gated vertex vector: yhat_i = sigmoid(g_p(v_i * alpha_i)).
    """
    z_global = T.concat([z_audio, z_mesh], axis=-1)
    if config.ablation == "no-fusion":
        z_fused = z_global
    else:
        z_fused = fusion_mlp(z_global, params, training, rng, config.dropout)
    n = h3.shape[0]
    v = T.concat([h3, T.tile_rows(z_fused, n)], axis=-1)
    alpha = T.sigmoid(T.add(T.matmul(v, params["g_a_w"]), params["g_a_b"]))  # (N, 1)
    gated = T.mul(v, alpha)
    yhat = T.sigmoid(T.add(T.matmul(gated, params["g_p_w"]), params["g_p_b"]))
    return T.reshape(yhat, (n,)), T.reshape(alpha, (n,))


# ---------------------------------------------------------------------------
# parameter construction

def _he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, shape).astype(dtype)


def init_parameters(config: ModelConfig, seed: int = 0, dtype=np.float32) -> dict[str, Tensor]:
    """Deterministic parameter initialization (He-uniform weights, zero biases)."""
    rng = np.random.default_rng(seed)
    p: dict[str, np.ndarray] = {}

    def weight(name, shape, fan_in):
        p[name] = _he_uniform(rng, shape, fan_in, dtype)

    def bias(name, shape):
        p[name] = np.zeros(shape, dtype=dtype)

    cfg = config
    if cfg.ablation != "no-vision":
        weight("gcn1_w", (cfg.vertex_in, cfg.gcn1_width), cfg.vertex_in)
        bias("gcn1_b", cfg.gcn1_width)
        weight("gcn2_w", (cfg.gcn1_width, cfg.gcn2_width), cfg.gcn1_width)
        bias("gcn2_b", cfg.gcn2_width)
        for h in range(cfg.gat_heads):
            weight(f"gat{h}_w", (cfg.gcn2_width, cfg.head_dim), cfg.gcn2_width)
            weight(f"gat{h}_a_src", (cfg.head_dim,), cfg.head_dim)
            weight(f"gat{h}_a_dst", (cfg.head_dim,), cfg.head_dim)
        weight("pool_w", (cfg.gat_width,), cfg.gat_width)
        bias("pool_b", 1)
        if cfg.gat_width != cfg.embed_dim:
            raise ValueError("mesh embedding dim must equal the GAT output width")
    else:
        p["vertex_embed"] = (0.02 * rng.standard_normal((cfg.n_vertices, cfg.gat_width))).astype(dtype)
        p["mesh_const"] = np.zeros(cfg.embed_dim, dtype=dtype)

    if cfg.ablation != "no-audio":
        c1, c2, c3 = cfg.trunk_channels
        weight("conv1_w", (c1, 2, 3, 3), 18)  # spectrogram + frequency coordinate
        bias("conv1_b", c1)
        weight("conv2_w", (c2, c1, 3, 3), 9 * c1)
        bias("conv2_b", c2)
        weight("conv3_w", (c3, c2, 3, 3), 9 * c2)
        bias("conv3_b", c3)
        weight("trunk_fc_w", (c3, cfg.embed_dim), c3)
        bias("trunk_fc_b", cfg.embed_dim)
        weight("attn_q", (cfg.embed_dim, cfg.embed_dim), cfg.embed_dim)
        weight("attn_k", (cfg.embed_dim, cfg.embed_dim), cfg.embed_dim)
        weight("attn_v", (cfg.embed_dim, cfg.embed_dim), cfg.embed_dim)
        weight("proj_w", (cfg.embed_dim, cfg.embed_dim), cfg.embed_dim)
        bias("proj_b", cfg.embed_dim)

    if cfg.ablation != "no-fusion":
        weight("f1_w", (cfg.global_dim, cfg.fusion_hidden), cfg.global_dim)
        bias("f1_b", cfg.fusion_hidden)
        weight("f2_w", (cfg.fusion_hidden, cfg.fused_dim), cfg.fusion_hidden)
        bias("f2_b", cfg.fused_dim)

    vdim = cfg.vertex_feature_dim
    # The vertex gate starts open (bias +2, small weights): a closed gate
    # zeroes the prediction head's input, and the class-weighted loss makes
    # that constant-0.5 state a stationary trap the optimizer cannot leave.
    weight("g_a_w", (vdim, 1), vdim)
    p["g_a_w"] *= 0.1
    p["g_a_b"] = np.full(1, 2.0, dtype=dtype)
    weight("g_p_w", (vdim, 1), vdim)
    bias("g_p_b", 1)

    return {name: Tensor(arr, requires_grad=True, name=name) for name, arr in p.items()}


class ContactNet:
    """Parameter container plus the per-frame forward pass."""

    def __init__(self, config: ModelConfig, adjacency: GraphAdjacency | None = None,
                 seed: int = 0, dtype=np.float32):
        if config.ablation != "no-vision" and adjacency is None:
            raise ValueError("mesh encoder needs a graph adjacency")
        if adjacency is not None and adjacency.n_vertices != config.n_vertices:
            raise ValueError(f"adjacency is over {adjacency.n_vertices} vertices, config says {config.n_vertices}")
        self.config = config
        self.adjacency = adjacency
        self.dtype = np.dtype(dtype).type
        self.params = init_parameters(config, seed=seed, dtype=self.dtype)
        self._coeffs = None
        if adjacency is not None:
            self._coeffs = Tensor(adjacency.coefficients.astype(self.dtype))

    def encode_mesh(self, vertices: np.ndarray, training: bool = False, rng=None) -> tuple[Tensor, Tensor]:
        """Vertex coordinates (N, 3) mm -> (per-vertex features, mesh vector)."""
        cfg = self.config
        p = self.params
        if cfg.ablation == "no-vision":
            return p["vertex_embed"], p["mesh_const"]
        verts = np.asarray(vertices, dtype=self.dtype)
        if verts.shape != (cfg.n_vertices, cfg.vertex_in):
            raise T.ShapeMismatchError(f"expected vertices {(cfg.n_vertices, cfg.vertex_in)}, got {verts.shape}")
        x = Tensor((verts - verts.mean(axis=0)) / cfg.coord_scale_mm)
        h1 = gcn_layer(x, self.adjacency, self._coeffs, p["gcn1_w"], p["gcn1_b"])
        h2 = gcn_layer(h1, self.adjacency, self._coeffs, p["gcn2_w"], p["gcn2_b"])
        h2 = T.dropout(h2, cfg.dropout, rng, training)
        heads = [{"w": p[f"gat{h}_w"], "a_src": p[f"gat{h}_a_src"], "a_dst": p[f"gat{h}_a_dst"]}
                 for h in range(cfg.gat_heads)]
        h3 = gat_layer(h2, self.adjacency, heads, cfg.leaky_slope)
        z_mesh, _ = attention_pool(h3, p["pool_w"], p["pool_b"])
        return h3, z_mesh

    def encode_audio(self, spectrogram: np.ndarray, training: bool = False, rng=None) -> Tensor:
        """Spectrogram stack (C, F, T) -> audio embedding vector."""
        cfg = self.config
        if cfg.ablation == "no-audio":
            return Tensor(np.zeros(cfg.embed_dim, dtype=self.dtype))
        spec = np.asarray(spectrogram, dtype=self.dtype)
        if spec.ndim != 3 or spec.shape[0] != cfg.audio_channels:
            raise T.ShapeMismatchError(
                f"expected ({cfg.audio_channels}, F, T) spectrogram stack, got {spec.shape}")
        return audio_trunk(Tensor(spec), self.params, training, rng, cfg.dropout)

    def forward(self, vertices: np.ndarray, spectrogram: np.ndarray,
                training: bool = False, rng=None) -> tuple[Tensor, Tensor]:
        """Per-frame forward pass -> (contact probabilities (N,), vertex gates)."""
        h3, z_mesh = self.encode_mesh(vertices, training, rng)
        z_audio = self.encode_audio(spectrogram, training, rng)
        return fuse_and_predict(h3, z_mesh, z_audio, self.params, self.config, training, rng)

    def predict(self, vertices: np.ndarray, spectrogram: np.ndarray) -> np.ndarray:
        """Deterministic evaluation-mode probabilities as a numpy array."""
        with T.no_grad():
            yhat, _ = self.forward(vertices, spectrogram, training=False)
        return yhat.data.copy()

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def zero_grads(self):
        for p in self.params.values():
            p.grad = None


# ---------------------------------------------------------------------------
# checkpoints: VMCK header, named TEN1 blobs, JSON hyperparameter trailer

def write_checkpoint(path, params: dict[str, Tensor], config: ModelConfig,
                     extra: dict | None = None):
    import io

    entries = []
    for name in sorted(params):
        buf = io.BytesIO()
        T.write_ten1(buf, params[name].data)
        entries.append((name, buf.getvalue()))
    trailer = json.dumps({"config": asdict(config), "extra": extra or {}}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(entries)))
        for name, blob in entries:
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)) + nb)
            fh.write(struct.pack("<Q", len(blob)) + blob)
        fh.write(trailer)


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], ModelConfig, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file (magic {blob[:4]!r})")
    version, n_entries = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 12
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_entries):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos: pos + name_len].decode("utf-8")
        pos += name_len
        (blob_len,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        import io

        arrays[name] = T.read_ten1(io.BytesIO(blob[pos: pos + blob_len]))
        pos += blob_len
    trailer = json.loads(blob[pos:].decode("utf-8"))
    cfg_dict = dict(trailer["config"])
    cfg_dict["trunk_channels"] = tuple(cfg_dict["trunk_channels"])
    config = ModelConfig(**cfg_dict)
    return arrays, config, trailer.get("extra", {})


def load_model(path, adjacency: GraphAdjacency | None = None,
               dtype=np.float32) -> tuple[ContactNet, dict]:
    """Rebuild a model from a checkpoint, validating the shape table first."""
    arrays, config, extra = read_checkpoint(path)
    model = ContactNet(config, adjacency=adjacency, dtype=dtype)
    expected = {k: v.data.shape for k, v in model.params.items()}
    got = {k: v.shape for k, v in arrays.items()}
    if expected != got:
        missing = set(expected) ^ set(got)
        mismatched = {k for k in set(expected) & set(got) if expected[k] != got[k]}
        raise ValueError(f"checkpoint shape table mismatch (missing/extra: {sorted(missing)}, "
                         f"shape conflicts: {sorted(mismatched)})")
    for k, arr in arrays.items():
        model.params[k].data = arr.astype(model.dtype, copy=False)
    return model, extra


def architecture_hash(config: ModelConfig) -> str:
    """Hash of the non-ablation architecture fields (for report consistency)."""
    import hashlib

    d = asdict(config)
    d.pop("ablation")
    payload = json.dumps(d, sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]
