"""Dual causal/shortcut relational graph attention network.

Node features of the three modalities are projected into a shared space.
For every relation type an MLP scores each edge, and a two-way softmax
splits the edge between a causal and a shortcut message. Messages are
summed per node, activated, then summed over relations to give the causal
and shortcut node matrices. A mean readout feeds the regression head
(causal branch) and the classification head (shortcut branch).

Batches are evaluated as one disjoint union of sample graphs; see
:func:`batch_graphs`.
"""

from __future__ import annotations

import io
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import tensor as T
from .graph import INTER, MultiRelGraph, RelationKind, Sample, build_graph
from .tensor import Tensor

CHECKPOINT_MAGIC = "MMCI-CHECKPOINT"
CHECKPOINT_VERSION = 1

ABLATIONS = ("none", "no-intra", "no-inter", "no-disentangle", "no-intervention", "no-kl")


class ConfigError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class ModelConfig:
    d_t: int
    d_a: int
    d_v: int
    d: int = 32
    d_hidden: int = 0  # 0 -> d // 2
    n_classes: int = 7
    layers: int = 1
    activation: str = "elu"
    dropout: float = 0.3
    shared_relations: bool = False
    inter_modal: bool = True
    label_lo: float = -3.0
    label_hi: float = 3.0

    def __post_init__(self):
        if self.d_hidden == 0:
            self.d_hidden = max(1, self.d // 2)
        for name in ("d_t", "d_a", "d_v", "d", "d_hidden", "n_classes", "layers"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.activation not in T.ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    @classmethod
    def for_ablation(cls, ablation: str, **kw) -> "ModelConfig":
        if ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {ablation!r}")
        kw.setdefault("shared_relations", ablation == "no-intra")
        kw.setdefault("inter_modal", ablation != "no-inter")
        return cls(**kw)

    @property
    def feat_dims(self) -> tuple[int, int, int]:
        return self.d_t, self.d_a, self.d_v

    def relation_keys(self) -> list[str]:
        if self.shared_relations:
            return ["shared"]
        return [r.name for r in RelationKind]

    def relation_key(self, r: RelationKind) -> str:
        return "shared" if self.shared_relations else RelationKind(r).name

    def bucket_centers(self) -> np.ndarray:
        return np.linspace(self.label_lo, self.label_hi, self.n_classes)


class ModelParams:
    """Every learnable tensor of the network, in a fixed documented order."""

    def __init__(self, config: ModelConfig, tensors: "OrderedDict[str, Tensor]", seed: int = 0):
        self.config = config
        self.tensors = tensors
        self.seed = seed

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def __len__(self):
        return len(self.tensors)

    def names(self) -> list[str]:
        return list(self.tensors)

    def items(self):
        return self.tensors.items()

    def zero_grad(self) -> None:
        T.zero_grad(self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.config,
            OrderedDict((k, Tensor(v.data.copy(), requires_grad=True)) for k, v in self.tensors.items()),
            self.seed,
        )

    def relation_sets(self) -> set[str]:
        return {name.split(".")[2] for name in self.tensors if ".rel." in name}


def param_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    d, dh = cfg.d, cfg.d_hidden
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    for m, dm in zip("tav", cfg.feat_dims):
        shapes[f"proj.{m}.W"] = (dm, d)
        shapes[f"proj.{m}.b"] = (d,)
    for layer in range(cfg.layers):
        for key in cfg.relation_keys():
            pre = f"l{layer}.rel.{key}"
            shapes[f"{pre}.mlp.W1"] = (2 * d, dh)
            shapes[f"{pre}.mlp.b1"] = (dh,)
            shapes[f"{pre}.mlp.W2"] = (dh, 2)
            shapes[f"{pre}.mlp.b2"] = (2,)
            shapes[f"{pre}.W_c"] = (d, d)
            shapes[f"{pre}.W_s"] = (d, d)
    for head, out in (("head_c", 1), ("head_s", cfg.n_classes)):
        shapes[f"{head}.W1"] = (d, dh)
        shapes[f"{head}.b1"] = (dh,)
        shapes[f"{head}.W2"] = (dh, out)
        shapes[f"{head}.b2"] = (out,)
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights and zero biases drawn from a seeded generator."""
    rng = np.random.default_rng(seed)
    tensors: OrderedDict[str, Tensor] = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 1:
            data = np.zeros(shape)
        else:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-bound, bound, size=shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(cfg, tensors, seed)


# ---------------------------------------------------------------- batching


@dataclass
class GraphBatch:
    """Disjoint union of sample graphs plus the per-graph mean-pooling matrix."""

    graph: MultiRelGraph
    pool: np.ndarray  # [B, N], rows sum to 1
    labels: np.ndarray
    ids: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.pool.shape[0]


def batch_graphs(graphs: list[MultiRelGraph], labels=None, ids=None) -> GraphBatch:
    """Union graphs with node order [all text | all audio | all visual]."""
    if not graphs:
        raise ValueError("cannot batch zero graphs")
    counts = np.array([[g.node_feats[m].shape[0] for m in range(3)] for g in graphs])
    totals = counts.sum(axis=0)
    offsets = (0, int(totals[0]), int(totals[0] + totals[1]))
    n_total = int(totals.sum())
    # cumulative start of each graph's rows within each modality block
    starts = np.vstack([np.zeros(3, dtype=int), np.cumsum(counts, axis=0)[:-1]])

    pool = np.zeros((len(graphs), n_total))
    edges: dict[RelationKind, list[np.ndarray]] = {r: [] for r in RelationKind}
    for b, g in enumerate(graphs):
        local_to_union = np.empty(g.N, dtype=np.int64)
        for m in range(3):
            lo = g.modality_offsets[m]
            n = counts[b, m]
            local_to_union[lo : lo + n] = offsets[m] + starts[b, m] + np.arange(n)
        pool[b, local_to_union] = 1.0 / g.N
        for r, e in g.edges.items():
            if len(e):
                edges[r].append(local_to_union[e])
    union = MultiRelGraph(
        node_feats=[np.vstack([g.node_feats[m] for g in graphs]) for m in range(3)],
        modality_offsets=offsets,
        edges={
            r: (np.vstack(v) if v else np.zeros((0, 2), dtype=np.int64)) for r, v in edges.items()
        },
        N=n_total,
    )
    labels = np.zeros(len(graphs)) if labels is None else np.asarray(labels, dtype=np.float64)
    return GraphBatch(union, pool, labels, list(ids or []))


def batch_samples(samples: list[Sample], inter_modal: bool = True) -> GraphBatch:
    graphs = [build_graph(s, inter_modal=inter_modal) for s in samples]
    return batch_graphs(graphs, [s.label for s in samples], [s.id for s in samples])


def permute_graph(g: MultiRelGraph, perms: tuple[np.ndarray, np.ndarray, np.ndarray]) -> MultiRelGraph:
    """Reorder nodes inside each modality block and relabel every edge.

    ``perms[m][new] = old`` gives the old local index placed at position
    ``new`` of modality ``m``.
    """
    old_to_new = np.empty(g.N, dtype=np.int64)
    feats = []
    for m in range(3):
        p = np.asarray(perms[m])
        lo = g.modality_offsets[m]
        old_to_new[lo + p] = lo + np.arange(len(p))
        feats.append(g.node_feats[m][p])
    edges = {r: (old_to_new[e] if len(e) else e.copy()) for r, e in g.edges.items()}
    return MultiRelGraph(feats, g.modality_offsets, edges, g.N)


# ---------------------------------------------------------------- layers


@dataclass
class AttentionScores:
    """Per relation: the edge array and the (alpha_c, alpha_s) columns."""

    edges: dict[RelationKind, np.ndarray]
    alpha_c: dict[RelationKind, Tensor]
    alpha_s: dict[RelationKind, Tensor]

    def pairs(self, r: RelationKind) -> np.ndarray:
        """[E, 2] array of (alpha_c, alpha_s) for relation ``r``."""
        return np.hstack([self.alpha_c[r].data, self.alpha_s[r].data])


@dataclass
class DualRepresentation:
    H_c: Tensor
    H_s: Tensor


def _dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rng is None or rate <= 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    return T.mul(x, keep / (1.0 - rate))


def _mlp(x: Tensor, p: ModelParams, pre: str, act: str) -> Tensor:
    hidden = T.activation(x @ p[f"{pre}.W1"] + p[f"{pre}.b1"], act)
    return hidden @ p[f"{pre}.W2"] + p[f"{pre}.b2"]


def project(g: MultiRelGraph, p: ModelParams, rng: np.random.Generator | None = None) -> Tensor:
    """Map each modality's features into the shared d-dimensional space.

    ``rng`` enables training-mode dropout.
    """
    cfg = p.config
    parts = []
    for m, name in enumerate("tav"):
        x = g.node_feats[m]
        if x.shape[1] != cfg.feat_dims[m]:
            raise ConfigError(
                f"modality {name} has {x.shape[1]} features, model expects {cfg.feat_dims[m]}"
            )
        parts.append(Tensor(x) @ p[f"proj.{name}.W"] + p[f"proj.{name}.b"])
    h = parts[0] if len(parts) == 1 else _rowcat(parts)
    return _dropout(h, cfg.dropout, rng)


def _rowcat(parts: list[Tensor]) -> Tensor:
    """Stack tensors along the first axis."""
    sizes = [t.shape[0] for t in parts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            T._accumulate(t, g[lo:hi])

    return T._make(np.vstack([t.data for t in parts]), parts, "rowcat", bw)


def _relations(g: MultiRelGraph, cfg: ModelConfig) -> list[RelationKind]:
    return [r for r in RelationKind if cfg.inter_modal or r not in INTER]


def attend(h: Tensor, g: MultiRelGraph, p: ModelParams, layer: int = 0) -> AttentionScores:
    """Two-way softmax over an MLP of [h_i || h_j] for every edge (i <- j)."""
    cfg = p.config
    edges, ac, as_ = {}, {}, {}
    for r in _relations(g, cfg):
        e = g.edges[r]
        if not len(e):
            continue
        pair = T.concat([T.gather_rows(h, e[:, 0]), T.gather_rows(h, e[:, 1])])
        logits = _mlp(pair, p, f"l{layer}.rel.{cfg.relation_key(r)}.mlp", cfg.activation)
        probs = T.softmax(logits)
        edges[r] = e
        ac[r] = T.columns(probs, 0, 1)
        as_[r] = T.columns(probs, 1, 2)
    return AttentionScores(edges, ac, as_)


def propagate(
    h: Tensor, scores: AttentionScores, g: MultiRelGraph, p: ModelParams, layer: int = 0
) -> list[tuple[Tensor, Tensor]]:
    """Per relation, attention-weighted neighbour sums through W_c and W_s.

    Nodes without neighbours under a relation receive the activation of zero.
    """
    cfg = p.config
    out = []
    zero = None
    for r in _relations(g, cfg):
        if r not in scores.edges:
            if zero is None:
                zero = T.activation(Tensor(np.zeros((g.N, cfg.d))), cfg.activation)
            out.append((zero, zero))
            continue
        e = scores.edges[r]
        pre = f"l{layer}.rel.{cfg.relation_key(r)}"
        branch = []
        for W, alpha in ((p[f"{pre}.W_c"], scores.alpha_c[r]), (p[f"{pre}.W_s"], scores.alpha_s[r])):
            msg = T.mul(T.gather_rows(h @ W, e[:, 1]), alpha)
            branch.append(T.activation(T.scatter_add_rows(msg, e[:, 0], g.N), cfg.activation))
        out.append(tuple(branch))
    return out


def aggregate(reps: list[tuple[Tensor, Tensor]]) -> DualRepresentation:
    if not reps:
        raise ValueError("nothing to aggregate")
    H_c, H_s = reps[0]
    for hc, hs in reps[1:]:
        H_c = H_c + hc
        H_s = H_s + hs
    return DualRepresentation(H_c, H_s)


def readout(H: Tensor, pool: np.ndarray | None = None) -> Tensor:
    """Mean over nodes; with ``pool`` ([B, N]) one mean per graph."""
    if pool is None:
        return T.mean(H, axis=0)
    return Tensor(pool) @ H


def predict_causal(g_c: Tensor, p: ModelParams) -> Tensor:
    """Regression head on pooled causal features; returns shape [B] (or scalar)."""
    single = g_c.data.ndim == 1
    x = _as_rows(g_c)
    y = _mlp(x, p, "head_c", p.config.activation)
    return _flatten(y, single)


def predict_shortcut(g_s: Tensor, p: ModelParams) -> Tensor:
    """Class probabilities from pooled shortcut features; rows sum to one."""
    single = g_s.data.ndim == 1
    probs = T.softmax(_mlp(_as_rows(g_s), p, "head_s", p.config.activation))
    if single:
        return _reshape(probs, (p.config.n_classes,))
    return probs


def _as_rows(x: Tensor) -> Tensor:
    return _reshape(x, (1, x.shape[0])) if x.data.ndim == 1 else x


def _reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    orig = x.shape

    def bw(g):
        T._accumulate(x, g.reshape(orig))

    return T._make(x.data.reshape(shape), (x,), "reshape", bw)


def _flatten(y: Tensor, single: bool) -> Tensor:
    return _reshape(y, () if single else (y.shape[0],))


# ---------------------------------------------------------------- forward


@dataclass
class ForwardResult:
    y_c: Tensor  # [B]
    y_s: Tensor  # [B, C]
    pooled_c: Tensor  # [B, d]
    pooled_s: Tensor  # [B, d]
    dual: DualRepresentation
    scores: list[AttentionScores]


def forward_batch(
    batch: GraphBatch, p: ModelParams, rng: np.random.Generator | None = None
) -> ForwardResult:
    """Run the network on a batched graph. ``rng`` switches on dropout."""
    cfg = p.config
    g = batch.graph
    h = project(g, p, rng)
    all_scores = []
    dual = None
    for layer in range(cfg.layers):
        if dual is not None:
            h = dual.H_c + dual.H_s
        scores = attend(h, g, p, layer)
        dual = aggregate(propagate(h, scores, g, p, layer))
        dual = DualRepresentation(
            _dropout(dual.H_c, cfg.dropout, rng), _dropout(dual.H_s, cfg.dropout, rng)
        )
        all_scores.append(scores)
    pooled_c = readout(dual.H_c, batch.pool)
    pooled_s = readout(dual.H_s, batch.pool)
    return ForwardResult(
        y_c=predict_causal(pooled_c, p),
        y_s=predict_shortcut(pooled_s, p),
        pooled_c=pooled_c,
        pooled_s=pooled_s,
        dual=dual,
        scores=all_scores,
    )


def forward(
    s: Sample | MultiRelGraph,
    p: ModelParams,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor, DualRepresentation]:
    """Single-sample pipeline returning (y_c scalar, y_s [C], dual representation).

    The ablation variant is carried by ``p.config`` (shared relation
    parameters, inter-modal edges on or off).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if isinstance(s, Sample):
        g = build_graph(s, inter_modal=p.config.inter_modal)
        label = s.label
    else:
        g = s
        label = 0.0
    batch = batch_graphs([g], [label])
    if mode == "train" and rng is None:
        rng = np.random.default_rng(p.seed)
    res = forward_batch(batch, p, rng if mode == "train" else None)
    return _reshape(res.y_c, ()), _reshape(res.y_s, (p.config.n_classes,)), res.dual


def predict(samples: list[Sample], p: ModelParams, batch_size: int = 64) -> np.ndarray:
    """Evaluation-mode causal predictions for a list of samples."""
    out = []
    for lo in range(0, len(samples), batch_size):
        batch = batch_samples(samples[lo : lo + batch_size], p.config.inter_modal)
        out.append(forward_batch(batch, p).y_c.data.copy())
    return np.concatenate(out) if out else np.zeros(0)


# ---------------------------------------------------------------- checkpoints
#
# Layout: a UTF-8 text header of ``key=value`` lines opened by
# "MMCI-CHECKPOINT" and closed by "end", then for each parameter in
# ``param_shapes`` order a little-endian uint64 element count followed by
# that many little-endian float64 values.


def save_checkpoint(path, p: ModelParams, extra: dict | None = None) -> None:
    cfg = p.config
    header = [CHECKPOINT_MAGIC, f"version={CHECKPOINT_VERSION}"]
    for f in fields(cfg):
        header.append(f"{f.name}={getattr(cfg, f.name)}")
    header.append(f"relations={len(RelationKind)}")
    header.append(f"relation_sets={','.join(cfg.relation_keys())}")
    header.append(f"seed={p.seed}")
    for k, v in (extra or {}).items():
        header.append(f"x.{k}={v}")
    header.append("params=" + ";".join(f"{n}:{'x'.join(map(str, t.shape))}" for n, t in p.items()))
    header.append("end")
    buf = io.BytesIO()
    buf.write(("\n".join(header) + "\n").encode("utf-8"))
    for t in p:
        flat = np.ascontiguousarray(t.data, dtype="<f8").reshape(-1)
        buf.write(struct.pack("<Q", flat.size))
        buf.write(flat.tobytes())
    Path(path).write_bytes(buf.getvalue())


def _parse_value(raw: str, kind):
    if kind is bool:
        return raw == "True"
    return kind(raw)


def read_checkpoint_header(data: bytes) -> tuple[dict[str, str], int]:
    end_marker = b"\nend\n"
    stop = data.find(end_marker)
    if not data.startswith(CHECKPOINT_MAGIC.encode()) or stop < 0:
        raise CheckpointError("not an MMCI checkpoint (missing header)")
    lines = data[:stop].decode("utf-8").split("\n")[1:]
    header = dict(line.split("=", 1) for line in lines)
    return header, stop + len(end_marker)


def load_checkpoint(path) -> tuple[ModelParams, dict[str, str]]:
    data = Path(path).read_bytes()
    header, pos = read_checkpoint_header(data)
    version = int(header.get("version", -1))
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )
    types = {"int": int, "float": float, "bool": bool, "str": str}
    kw = {}
    for f in fields(ModelConfig):
        kind = types[f.type] if isinstance(f.type, str) else f.type
        kw[f.name] = _parse_value(header[f.name], kind)
    cfg = ModelConfig(**kw)
    tensors: OrderedDict[str, Tensor] = OrderedDict()
    for name, shape in param_shapes(cfg).items():
        if pos + 8 > len(data):
            raise CheckpointError(f"truncated checkpoint at byte {pos} (tensor {name})")
        (count,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        if count != int(np.prod(shape)) or pos + 8 * count > len(data):
            raise CheckpointError(f"bad tensor record for {name} at byte {pos - 8}")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64)
        pos += 8 * count
        tensors[name] = Tensor(arr.reshape(shape), requires_grad=True)
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after tensors")
    extra = {k[2:]: v for k, v in header.items() if k.startswith("x.")}
    return ModelParams(cfg, tensors, int(header.get("seed", 0))), extra


def config_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)
