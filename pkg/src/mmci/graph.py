"""Multi-relational graph over text, audio and visual nodes."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class RelationKind(IntEnum):
    TT = 0
    AA = 1
    VV = 2
    TV = 3
    TA = 4
    VA = 5


INTRA = (RelationKind.TT, RelationKind.AA, RelationKind.VV)
INTER = (RelationKind.TV, RelationKind.TA, RelationKind.VA)

# modality block(s) each relation connects: 0 = text, 1 = audio, 2 = visual
RELATION_BLOCKS = {
    RelationKind.TT: (0, 0),
    RelationKind.AA: (1, 1),
    RelationKind.VV: (2, 2),
    RelationKind.TV: (0, 2),
    RelationKind.TA: (0, 1),
    RelationKind.VA: (2, 1),
}


class GraphInputError(ValueError):
    pass


@dataclass
class Sample:
    text_feats: np.ndarray
    audio_feats: np.ndarray
    visual_feats: np.ndarray
    dep_edges: list[tuple[int, int]]
    label: float
    id: str = ""
    label_range: tuple[float, float] = (-3.0, 3.0)

    def __post_init__(self):
        self.text_feats = np.atleast_2d(np.asarray(self.text_feats, dtype=np.float64))
        self.audio_feats = np.atleast_2d(np.asarray(self.audio_feats, dtype=np.float64))
        self.visual_feats = np.atleast_2d(np.asarray(self.visual_feats, dtype=np.float64))
        self.dep_edges = [(int(i), int(j)) for i, j in self.dep_edges]
        self.label = float(self.label)

    @property
    def feats(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.text_feats, self.audio_feats, self.visual_feats

    @property
    def lengths(self) -> tuple[int, int, int]:
        return tuple(f.shape[0] for f in self.feats)

    def validate(self) -> None:
        for name, f in zip("tav", self.feats):
            if f.ndim != 2 or f.shape[0] < 1:
                raise GraphInputError(f"sample {self.id!r}: modality {name} needs at least one node")
            if not np.all(np.isfinite(f)):
                raise GraphInputError(f"sample {self.id!r}: modality {name} has non-finite features")
        n_t = self.text_feats.shape[0]
        for i, j in self.dep_edges:
            if not (0 <= i < n_t and 0 <= j < n_t):
                raise GraphInputError(
                    f"sample {self.id!r}: dependency edge ({i}, {j}) outside [0, {n_t})"
                )

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and self.dep_edges == other.dep_edges
            and all(np.array_equal(a, b) for a, b in zip(self.feats, other.feats))
        )


@dataclass
class MultiRelGraph:
    node_feats: list[np.ndarray]
    modality_offsets: tuple[int, int, int]
    edges: dict[RelationKind, np.ndarray] = field(default_factory=dict)
    N: int = 0

    def edge_list(self, r: RelationKind) -> list[tuple[int, int]]:
        return [tuple(map(int, e)) for e in self.edges[RelationKind(r)]]

    def block_of(self, node: int) -> int:
        lo = self.modality_offsets
        return 0 if node < lo[1] else (1 if node < lo[2] else 2)

    def dense_adjacency(self) -> np.ndarray:
        """The {0,1}^{N x N x 6} tensor whose slice r marks edges of kind r."""
        adj = np.zeros((self.N, self.N, len(RelationKind)))
        for r, e in self.edges.items():
            if len(e):
                adj[e[:, 0], e[:, 1], int(r)] = 1.0
        return adj


def align(i: int, n_from: int, n_to: int) -> int:
    """Index in a length-``n_to`` sequence aligned to position ``i`` of ``n_from``."""
    # ties round to even, so 4 text nodes over 2 audio nodes map as 0,0,1,1
    j = int(np.rint(i * n_to / n_from))
    return min(max(j, 0), n_to - 1)


def _symmetrize(pairs) -> set[tuple[int, int]]:
    out = set()
    for i, j in pairs:
        out.add((i, j))
        out.add((j, i))
    return out


def _as_array(pairs: set[tuple[int, int]]) -> np.ndarray:
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(pairs), dtype=np.int64)


def build_graph(s: Sample, inter_modal: bool = True) -> MultiRelGraph:
    """Build the six typed edge sets for one sample.

    Intra-modal relations get self-loops; text edges come from the dependency
    tree and audio/visual edges join adjacent time steps. Inter-modal edges
    pair each node with its temporally aligned partner (proportional index
    alignment), in both directions. With ``inter_modal=False`` the three
    cross-modal edge sets are left empty.
    """
    s.validate()
    n_t, n_a, n_v = s.lengths
    off = (0, n_t, n_t + n_a)
    sizes = (n_t, n_a, n_v)

    tt = _symmetrize(s.dep_edges) | {(i, i) for i in range(n_t)}
    chains = {}
    for block, n in ((1, n_a), (2, n_v)):
        local = _symmetrize((i, i + 1) for i in range(n - 1)) | {(i, i) for i in range(n)}
        chains[block] = {(i + off[block], j + off[block]) for i, j in local}

    edges = {
        RelationKind.TT: _as_array(tt),
        RelationKind.AA: _as_array(chains[1]),
        RelationKind.VV: _as_array(chains[2]),
    }
    for r in INTER:
        a, b = RELATION_BLOCKS[r]
        pairs = set()
        if inter_modal:
            pairs = {
                (i + off[a], align(i, sizes[a], sizes[b]) + off[b]) for i in range(sizes[a])
            }
        edges[r] = _as_array(_symmetrize(pairs))

    return MultiRelGraph(
        node_feats=[f for f in s.feats],
        modality_offsets=off,
        edges=edges,
        N=n_t + n_a + n_v,
    )


def edge_count(g: MultiRelGraph, r: RelationKind) -> int:
    return int(len(g.edges[RelationKind(r)]))
