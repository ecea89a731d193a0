"""Attention-based property prediction over quotient complexes.

Features of each simplex tier are embedded to a shared hidden width H, then
refined by attention layers in which a simplex attends over its messaging
pairs: a vertex hears from the sources of its incoming edges (coface: the
edge itself), an edge hears from lower-positioned edges of shared triangles
(coface: the triangle).  One layer computes, per pair (receiver s, sender t,
coface c):

    alpha = [q, q] * SiLU(W_k [k_t, k_c] + b_k) / sqrt(2H)
    m     = Sigmoid(BatchNorm(alpha)) * SiLU(W_v [v_t, v_c] + b_v)
    msg   = SiLU(LayerNorm(W_m m + b_m))            # 2H -> H
    h'_s  = h_s + SiLU(BatchNorm(W_u sum_t msg + b_u))

where q, k, v come from per-tier H x H maps of the hidden states.  Five
vertex layers run first, then two blocks of (edge layer, vertex layer) so
triangle information reaches edges before edges refresh the vertices.  The
graph embedding is the concat of vertex-mean and edge-mean (2H), followed by
a two-hidden-layer MLP head to a scalar.

BatchNorm normalizes over the message population of one layer application
(batch statistics in train mode with running-stat updates, frozen running
stats in eval mode), so eval predictions are independent of batching.
Everything runs in float64 on the autodiff tape; a layer whose update path
is zero-initialized is an exact identity.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, concat, constant, gather_rows, parameter, \
    segment_mean, segment_sum
from .complexes import MessagingPairs, QuotientComplex, edge_pairs, \
    vertex_pairs
from .features import EDGE_DIM, TRIANGLE_DIM, VERTEX_DIM, EmbedWeights, \
    FeatureSet

N_NODE_LAYERS = 5
N_EDGE_NODE_LAYERS = 2
BN_EPS = 1e-5
LN_EPS = 1e-5
BN_MOMENTUM = 0.1

CHECKPOINT_MAGIC = b"QCNETCKP"
CHECKPOINT_VERSION = 1


class CheckpointMismatchError(RuntimeError):
    """Checkpoint header disagrees with the expected architecture."""


class EmptyComplexError(ValueError):
    """Forward pass needs at least one vertex."""


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    head_hidden: int = 64

    def __post_init__(self):
        if self.hidden_dim < 1 or self.head_hidden < 1:
            raise ValueError("hidden sizes must be >= 1")


@dataclass
class BatchNorm:
    """Affine batch normalization with running statistics (the buffers)."""

    gamma: Tensor
    beta: Tensor
    run_mean: np.ndarray
    run_var: np.ndarray

    @classmethod
    def init(cls, dim: int) -> "BatchNorm":
        return cls(parameter(np.ones(dim)), parameter(np.zeros(dim)),
                   np.zeros(dim), np.ones(dim))

    def apply(self, x: Tensor, mode: str) -> Tensor:
        if mode == "train":
            mu = x.mean(axis=0, keepdims=True)
            var = (x - mu).square().mean(axis=0, keepdims=True)
            # Buffer updates are side effects outside the tape; biased
            # variance feeds both normalization and the running estimate.
            self.run_mean = ((1.0 - BN_MOMENTUM) * self.run_mean
                             + BN_MOMENTUM * mu.data[0])
            self.run_var = ((1.0 - BN_MOMENTUM) * self.run_var
                            + BN_MOMENTUM * var.data[0])
            xhat = (x - mu) / (var + BN_EPS).sqrt()
        else:
            xhat = ((x - constant(self.run_mean))
                    / constant(np.sqrt(self.run_var + BN_EPS)))
        return xhat * self.gamma + self.beta


@dataclass
class LayerNorm:
    """Affine per-row normalization."""

    gamma: Tensor
    beta: Tensor

    @classmethod
    def init(cls, dim: int) -> "LayerNorm":
        return cls(parameter(np.ones(dim)), parameter(np.zeros(dim)))

    def apply(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=1, keepdims=True)
        var = (x - mu).square().mean(axis=1, keepdims=True)
        xhat = (x - mu) / (var + LN_EPS).sqrt()
        return xhat * self.gamma + self.beta


@dataclass
class AttentionLayer:
    """Parameters of one attention layer at hidden width H."""

    q: Tensor
    k_face: Tensor
    k_cof: Tensor
    v_face: Tensor
    v_cof: Tensor
    key_w: Tensor
    key_b: Tensor
    val_w: Tensor
    val_b: Tensor
    attn_bn: BatchNorm
    msg_w: Tensor
    msg_b: Tensor
    msg_ln: LayerNorm
    upd_w: Tensor
    upd_b: Tensor
    upd_bn: BatchNorm

    @classmethod
    def init(cls, hidden: int, rng: np.random.Generator) -> "AttentionLayer":
        h2 = 2 * hidden
        return cls(
            q=_uniform(rng, (hidden, hidden)),
            k_face=_uniform(rng, (hidden, hidden)),
            k_cof=_uniform(rng, (hidden, hidden)),
            v_face=_uniform(rng, (hidden, hidden)),
            v_cof=_uniform(rng, (hidden, hidden)),
            key_w=_uniform(rng, (h2, h2)), key_b=parameter(np.zeros(h2)),
            val_w=_uniform(rng, (h2, h2)), val_b=parameter(np.zeros(h2)),
            attn_bn=BatchNorm.init(h2),
            msg_w=_uniform(rng, (h2, hidden)),
            msg_b=parameter(np.zeros(hidden)),
            msg_ln=LayerNorm.init(hidden),
            upd_w=_uniform(rng, (hidden, hidden)),
            upd_b=parameter(np.zeros(hidden)),
            upd_bn=BatchNorm.init(hidden),
        )


@dataclass
class EdgeNodeBlock:
    """Edge layer (cofaces: triangles) then vertex layer on refreshed edges."""

    edge: AttentionLayer
    node: AttentionLayer


@dataclass
class EmbedLayer:
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, din: int, hidden: int,
             rng: np.random.Generator) -> "EmbedLayer":
        return cls(_uniform(rng, (din, hidden)), parameter(np.zeros(hidden)))

    def apply(self, x: Tensor) -> Tensor:
        return (x @ self.w + self.b).silu()


@dataclass
class Head:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor

    @classmethod
    def init(cls, hidden: int, head_hidden: int,
             rng: np.random.Generator) -> "Head":
        return cls(_uniform(rng, (2 * hidden, head_hidden)),
                   parameter(np.zeros(head_hidden)),
                   _uniform(rng, (head_hidden, head_hidden)),
                   parameter(np.zeros(head_hidden)),
                   _uniform(rng, (head_hidden, 1)),
                   parameter(np.zeros(1)))

    def apply(self, x: Tensor) -> Tensor:
        z = (x @ self.w1 + self.b1).silu()
        z = (z @ self.w2 + self.b2).silu()
        return z @ self.w3 + self.b3


def _uniform(rng: np.random.Generator, shape: tuple[int, int]) -> Tensor:
    lim = 1.0 / np.sqrt(shape[0])
    return parameter(rng.uniform(-lim, lim, shape))


class SimplexTransformer:
    """Fixed architecture: 3 embeddings, 5 vertex layers, 2 edge-node blocks."""

    def __init__(self, config: ModelConfig, embeds: list[EmbedLayer],
                 node_layers: list[AttentionLayer],
                 edge_node_blocks: list[EdgeNodeBlock], head: Head):
        if len(node_layers) != N_NODE_LAYERS or \
                len(edge_node_blocks) != N_EDGE_NODE_LAYERS:
            raise ValueError("layer counts are fixed at "
                             f"{N_NODE_LAYERS}+{N_EDGE_NODE_LAYERS}")
        self.config = config
        self.embeds = embeds
        self.node_layers = node_layers
        self.edge_node_blocks = edge_node_blocks
        self.head = head
        self.mode = "eval"

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "SimplexTransformer":
        """Seeded init; weights are drawn in declared parameter order."""
        rng = np.random.default_rng(seed)
        h = config.hidden_dim
        embeds = [EmbedLayer.init(d, h, rng)
                  for d in (VERTEX_DIM, EDGE_DIM, TRIANGLE_DIM)]
        node_layers = [AttentionLayer.init(h, rng)
                       for _ in range(N_NODE_LAYERS)]
        blocks = [EdgeNodeBlock(AttentionLayer.init(h, rng),
                                AttentionLayer.init(h, rng))
                  for _ in range(N_EDGE_NODE_LAYERS)]
        head = Head.init(h, config.head_hidden, rng)
        return cls(config, embeds, node_layers, blocks, head)

    def set_mode(self, mode: str) -> None:
        if mode not in ("train", "eval"):
            raise ValueError("mode must be 'train' or 'eval'")
        self.mode = mode

    # -- parameter bookkeeping ---------------------------------------------

    def _layer_items(self):
        for i, layer in enumerate(self.node_layers):
            yield f"node.{i}", layer
        for i, block in enumerate(self.edge_node_blocks):
            yield f"edge_node.{i}.edge", block.edge
            yield f"edge_node.{i}.node", block.node

    def parameters(self) -> list[tuple[str, Tensor]]:
        """(name, tensor) pairs in the declared (checkpoint) order."""
        items: list[tuple[str, Tensor]] = []
        for i, emb in enumerate(self.embeds):
            items += [(f"embed.{i}.w", emb.w), (f"embed.{i}.b", emb.b)]
        for prefix, layer in self._layer_items():
            items += [
                (f"{prefix}.q", layer.q),
                (f"{prefix}.k_face", layer.k_face),
                (f"{prefix}.k_cof", layer.k_cof),
                (f"{prefix}.v_face", layer.v_face),
                (f"{prefix}.v_cof", layer.v_cof),
                (f"{prefix}.key_w", layer.key_w),
                (f"{prefix}.key_b", layer.key_b),
                (f"{prefix}.val_w", layer.val_w),
                (f"{prefix}.val_b", layer.val_b),
                (f"{prefix}.attn_bn.gamma", layer.attn_bn.gamma),
                (f"{prefix}.attn_bn.beta", layer.attn_bn.beta),
                (f"{prefix}.msg_w", layer.msg_w),
                (f"{prefix}.msg_b", layer.msg_b),
                (f"{prefix}.msg_ln.gamma", layer.msg_ln.gamma),
                (f"{prefix}.msg_ln.beta", layer.msg_ln.beta),
                (f"{prefix}.upd_w", layer.upd_w),
                (f"{prefix}.upd_b", layer.upd_b),
                (f"{prefix}.upd_bn.gamma", layer.upd_bn.gamma),
                (f"{prefix}.upd_bn.beta", layer.upd_bn.beta),
            ]
        for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            items.append((f"head.{name}", getattr(self.head, name)))
        return items

    def batch_norms(self) -> list[tuple[str, BatchNorm]]:
        out = []
        for prefix, layer in self._layer_items():
            out += [(f"{prefix}.attn_bn", layer.attn_bn),
                    (f"{prefix}.upd_bn", layer.upd_bn)]
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for name, bn in self.batch_norms():
            out += [(f"{name}.run_mean", bn.run_mean),
                    (f"{name}.run_var", bn.run_var)]
        return out

    def n_parameters(self) -> int:
        return sum(t.data.size for _, t in self.parameters())

    def zero_grad(self) -> None:
        for _, t in self.parameters():
            t.zero_grad()

    def embed_weights(self) -> EmbedWeights:
        e0, e1, e2 = self.embeds
        return EmbedWeights(e0.w.data, e0.b.data, e1.w.data, e1.b.data,
                            e2.w.data, e2.b.data)

    def copy_state_from(self, other: "SimplexTransformer") -> None:
        for (_, mine), (_, theirs) in zip(self.parameters(),
                                          other.parameters()):
            mine.data[...] = theirs.data
        for (_, mine_bn), (_, theirs_bn) in zip(self.batch_norms(),
                                                other.batch_norms()):
            mine_bn.run_mean = theirs_bn.run_mean.copy()
            mine_bn.run_var = theirs_bn.run_var.copy()

    def clone(self) -> "SimplexTransformer":
        fresh = SimplexTransformer.init(self.config, seed=0)
        fresh.copy_state_from(self)
        fresh.mode = self.mode
        return fresh


# -- attention core ---------------------------------------------------------

def _attention_stage(h: Tensor, h_cof: Tensor, pairs: MessagingPairs,
                     layer: AttentionLayer, mode: str, hidden: int) -> Tensor:
    """Messages for all pairs: (P, H) rows ready for segment aggregation."""
    hs = gather_rows(h, pairs.sigma)
    ht = gather_rows(h, pairs.tau)
    hc = gather_rows(h_cof, pairs.coface)
    q = hs @ layer.q
    qq = concat([q, q], axis=1)
    k = concat([ht @ layer.k_face, hc @ layer.k_cof], axis=1)
    k = (k @ layer.key_w + layer.key_b).silu()
    alpha = qq * k * (1.0 / np.sqrt(2.0 * hidden))
    gate = layer.attn_bn.apply(alpha, mode).sigmoid()
    v = concat([ht @ layer.v_face, hc @ layer.v_cof], axis=1)
    v = (v @ layer.val_w + layer.val_b).silu()
    m = gate * v
    return layer.msg_ln.apply(m @ layer.msg_w + layer.msg_b).silu()


def _attention_update(h: Tensor, h_cof: Tensor, pairs: MessagingPairs,
                      layer: AttentionLayer, mode: str,
                      hidden: int) -> Tensor:
    n = h.shape[0]
    if pairs.n_pairs == 0:
        agg: Tensor = constant(np.zeros((n, hidden)))
    else:
        msg = _attention_stage(h, h_cof, pairs, layer, mode, hidden)
        agg = segment_sum(msg, pairs.sigma, n)
    upd = layer.upd_bn.apply(agg @ layer.upd_w + layer.upd_b, mode).silu()
    return h + upd


def attention_alpha(h_sigma: np.ndarray, h_tau: np.ndarray,
                    h_coface: np.ndarray,
                    layer: AttentionLayer) -> np.ndarray:
    """Pre-normalization attention coefficients of a single pair (2H,)."""
    hidden = h_sigma.shape[-1]
    q = np.concatenate([h_sigma @ layer.q.data] * 2)
    k = np.concatenate([h_tau @ layer.k_face.data,
                        h_coface @ layer.k_cof.data])
    k = ad.silu_np(k @ layer.key_w.data + layer.key_b.data)
    return q * k / np.sqrt(2.0 * hidden)


def attention_message(h_sigma: np.ndarray, h_tau: np.ndarray,
                      h_coface: np.ndarray, layer: AttentionLayer,
                      mode: str = "eval") -> np.ndarray:
    """Gated value message of a single pair (2H,).

    In train mode the normalization population is just this one message.
    """
    alpha = attention_alpha(h_sigma, h_tau, h_coface, layer)
    if mode == "train":
        # Population of one message: x - mean(x) is identically zero.
        norm = np.zeros_like(alpha)
    else:
        norm = ((alpha - layer.attn_bn.run_mean)
                / np.sqrt(layer.attn_bn.run_var + BN_EPS))
    gated = ad.sigmoid_np(norm * layer.attn_bn.gamma.data
                          + layer.attn_bn.beta.data)
    v = np.concatenate([h_tau @ layer.v_face.data,
                        h_coface @ layer.v_cof.data])
    v = ad.silu_np(v @ layer.val_w.data + layer.val_b.data)
    return gated * v


def layer_update(h: np.ndarray, h_cof: np.ndarray, pairs: MessagingPairs,
                 layer: AttentionLayer, mode: str = "eval") -> np.ndarray:
    """Numpy convenience wrapper around one attention layer update."""
    out = _attention_update(constant(h), constant(h_cof), pairs, layer,
                            mode, h.shape[-1])
    return out.data


# -- forward ----------------------------------------------------------------

@dataclass
class MergedBatch:
    """Disjoint union of complexes with per-tier graph-id segments."""

    h0_raw: np.ndarray
    h1_raw: np.ndarray
    h2_raw: np.ndarray
    vp: MessagingPairs
    ep: MessagingPairs
    v_gid: np.ndarray
    e_gid: np.ndarray
    n_graphs: int


def merge_batch(items: list[tuple[QuotientComplex, FeatureSet]]) -> MergedBatch:
    """Concatenate complexes into one forward pass with shifted indices."""
    if not items:
        raise EmptyComplexError("empty batch")
    h0s, h1s, h2s = [], [], []
    vp_parts, ep_parts = [], []
    v_gid, e_gid = [], []
    v_off = e_off = t_off = 0
    for gid, (c, fs) in enumerate(items):
        if c.n_vertices == 0:
            raise EmptyComplexError("complex has no vertices")
        if fs.h0_raw.shape[0] != c.n_vertices or \
                fs.h1_raw.shape[0] != c.n_edges or \
                fs.h2_raw.shape[0] != c.n_triangles:
            raise ValueError("feature rows do not match the complex")
        h0s.append(fs.h0_raw)
        h1s.append(fs.h1_raw)
        h2s.append(fs.h2_raw)
        vp = vertex_pairs(c)
        ep = edge_pairs(c)
        vp_parts.append((vp.sigma + v_off, vp.tau + v_off, vp.coface + e_off))
        ep_parts.append((ep.sigma + e_off, ep.tau + e_off, ep.coface + t_off))
        v_gid.append(np.full(c.n_vertices, gid, dtype=np.int64))
        e_gid.append(np.full(c.n_edges, gid, dtype=np.int64))
        v_off += c.n_vertices
        e_off += c.n_edges
        t_off += c.n_triangles
    def _merge(parts):
        return MessagingPairs(*(np.concatenate([p[i] for p in parts])
                                for i in range(3)))
    return MergedBatch(
        h0_raw=np.concatenate(h0s), h1_raw=np.concatenate(h1s),
        h2_raw=np.concatenate(h2s),
        vp=_merge(vp_parts), ep=_merge(ep_parts),
        v_gid=np.concatenate(v_gid), e_gid=np.concatenate(e_gid),
        n_graphs=len(items))


def _predict_tensor(model: SimplexTransformer, batch: MergedBatch) -> Tensor:
    """Predictions for a merged batch as a (B, 1) tape tensor."""
    h = model.config.hidden_dim
    mode = model.mode
    h0 = model.embeds[0].apply(constant(batch.h0_raw))
    h1 = model.embeds[1].apply(constant(batch.h1_raw))
    h2 = model.embeds[2].apply(constant(batch.h2_raw))
    for layer in model.node_layers:
        h0 = _attention_update(h0, h1, batch.vp, layer, mode, h)
        assert np.all(np.isfinite(h0.data))
    for block in model.edge_node_blocks:
        h1 = _attention_update(h1, h2, batch.ep, block.edge, mode, h)
        h0 = _attention_update(h0, h1, batch.vp, block.node, mode, h)
        assert np.all(np.isfinite(h0.data)) and np.all(np.isfinite(h1.data))
    pooled = concat([segment_mean(h0, batch.v_gid, batch.n_graphs),
                     segment_mean(h1, batch.e_gid, batch.n_graphs)], axis=1)
    return model.head.apply(pooled)


def predict(model: SimplexTransformer,
            items: list[tuple[QuotientComplex, FeatureSet]]) -> np.ndarray:
    """Per-structure predictions (B,) without keeping the tape."""
    return _predict_tensor(model, merge_batch(items)).data[:, 0].copy()


def forward(model: SimplexTransformer, c: QuotientComplex,
            fs: FeatureSet) -> float:
    """Scalar prediction for a single structure."""
    return float(predict(model, [(c, fs)])[0])


def batch_loss(model: SimplexTransformer,
               items: list[tuple[QuotientComplex, FeatureSet]],
               targets: np.ndarray, loss: str = "mae") -> float:
    """Forward-only loss over a batch (mae or mse)."""
    pred = _predict_tensor(model, merge_batch(items))
    return float(_loss_tensor(pred, targets, loss).item())


def _loss_tensor(pred: Tensor, targets: np.ndarray, loss: str) -> Tensor:
    t = constant(np.asarray(targets, dtype=np.float64).reshape(-1, 1))
    diff = pred - t
    if loss == "mae":
        return diff.abs().mean()
    if loss == "mse":
        return diff.square().mean()
    raise ValueError(f"unknown loss '{loss}'")


def loss_and_gradients(model: SimplexTransformer,
                       items: list[tuple[QuotientComplex, FeatureSet]],
                       targets: np.ndarray, loss: str = "mae"
                       ) -> tuple[float, list[np.ndarray]]:
    """Batch loss plus per-parameter gradients in declared order."""
    model.zero_grad()
    pred = _predict_tensor(model, merge_batch(items))
    out = _loss_tensor(pred, targets, loss)
    out.backward()
    grads = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
             for _, t in model.parameters()]
    return float(out.item()), grads


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(model: SimplexTransformer, path: str | os.PathLike,
                    extra: dict | None = None) -> None:
    """Binary header + float64 tensors in declared order + JSON sidecar."""
    path = os.fspath(path)
    arrays = [t.data for _, t in model.parameters()]
    arrays += [buf for _, buf in model.buffers()]
    header = struct.pack(
        "<8sIIIIIQ", CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
        model.config.hidden_dim, model.config.head_hidden,
        N_NODE_LAYERS, N_EDGE_NODE_LAYERS, len(arrays))
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes("C"))
    sidecar = {
        "format": "qcnet-checkpoint",
        "version": CHECKPOINT_VERSION,
        "hidden_dim": model.config.hidden_dim,
        "head_hidden": model.config.head_hidden,
        "n_node_layers": N_NODE_LAYERS,
        "n_edge_node_layers": N_EDGE_NODE_LAYERS,
        "n_parameters": model.n_parameters(),
    }
    if extra:
        sidecar["extra"] = extra
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_sidecar(path: str | os.PathLike) -> dict:
    with open(os.fspath(path) + ".json", "r", encoding="utf-8") as fh:
        return json.load(fh)


def load_checkpoint(path: str | os.PathLike,
                    config: ModelConfig | None = None) -> SimplexTransformer:
    """Rebuild a model (eval mode) from a checkpoint file.

    With ``config`` given, any architecture disagreement raises
    CheckpointMismatchError naming the offending field.
    """
    path = os.fspath(path)
    head_fmt = "<8sIIIIIQ"
    head_size = struct.calcsize(head_fmt)
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < head_size:
        raise CheckpointMismatchError("file too short for a checkpoint header")
    magic, version, hidden, head_hidden, n_node, n_edge_node, n_arrays = \
        struct.unpack_from(head_fmt, blob)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointMismatchError("magic: not a qcnet checkpoint")
    if version != CHECKPOINT_VERSION:
        raise CheckpointMismatchError(
            f"version: checkpoint has {version}, reader supports "
            f"{CHECKPOINT_VERSION}")
    if n_node != N_NODE_LAYERS or n_edge_node != N_EDGE_NODE_LAYERS:
        raise CheckpointMismatchError(
            f"layer counts: checkpoint has {n_node}+{n_edge_node}, "
            f"architecture is {N_NODE_LAYERS}+{N_EDGE_NODE_LAYERS}")
    if config is not None:
        if config.hidden_dim != hidden:
            raise CheckpointMismatchError(
                f"hidden_dim: checkpoint has {hidden}, "
                f"expected {config.hidden_dim}")
        if config.head_hidden != head_hidden:
            raise CheckpointMismatchError(
                f"head_hidden: checkpoint has {head_hidden}, "
                f"expected {config.head_hidden}")
    model = SimplexTransformer.init(
        ModelConfig(hidden_dim=hidden, head_hidden=head_hidden), seed=0)
    targets = [t.data for _, t in model.parameters()]
    buffer_slots = []
    for name, bn in model.batch_norms():
        buffer_slots += [(bn, "run_mean"), (bn, "run_var")]
    if n_arrays != len(targets) + len(buffer_slots):
        raise CheckpointMismatchError(
            f"tensor count: checkpoint has {n_arrays}, "
            f"expected {len(targets) + len(buffer_slots)}")
    offset = head_size
    for arr in targets:
        nbytes = arr.size * 8
        if offset + nbytes > len(blob):
            raise CheckpointMismatchError("file truncated mid-tensor")
        arr[...] = np.frombuffer(blob, dtype="<f8", count=arr.size,
                                 offset=offset).reshape(arr.shape)
        offset += nbytes
    for obj, attr in buffer_slots:
        size = getattr(obj, attr).size
        nbytes = size * 8
        if offset + nbytes > len(blob):
            raise CheckpointMismatchError("file truncated mid-buffer")
        setattr(obj, attr, np.frombuffer(blob, dtype="<f8", count=size,
                                         offset=offset).copy())
        offset += nbytes
    if offset != len(blob):
        raise CheckpointMismatchError(
            f"trailing bytes: {len(blob) - offset} unread")
    model.mode = "eval"
    return model
