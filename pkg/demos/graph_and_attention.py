"""Build one multimodal graph by hand and look inside a forward pass."""

import numpy as np

from mmci import ModelConfig, RelationKind, Sample, build_graph, forward, init_params
from mmci.model import attend, batch_graphs, forward_batch, permute_graph, project

rng = np.random.default_rng(0)

# four words, two audio frames, three video frames
s = Sample(
    text_feats=rng.standard_normal((4, 5)),
    audio_feats=rng.standard_normal((2, 3)),
    visual_feats=rng.standard_normal((3, 3)),
    dep_edges=[(0, 1), (1, 2), (1, 3)],
    label=1.5,
    id="hand-made",
)
g = build_graph(s)
print(f"{g.N} nodes, modality offsets {g.modality_offsets}")
for r in RelationKind:
    print(f"  {r.name}: {len(g.edges[r]):2d} directed edges  {g.edge_list(r)[:6]}")

# text node i meets audio node round(i * 2 / 4): ties go to the even index
print("text -> audio alignment:", [(i, j - 4) for i, j in g.edge_list(RelationKind.TA) if i < 4])

cfg = ModelConfig(d_t=5, d_a=3, d_v=3, d=8)
p = init_params(cfg, seed=1)
scores = attend(project(g, p), g, p)
for r in (RelationKind.TT, RelationKind.TA):
    pairs = scores.pairs(r)
    print(f"{r.name} attention (alpha_c, alpha_s), first rows:\n{np.round(pairs[:4], 3)}")
    print("  rows sum to", np.unique(np.round(pairs.sum(axis=1), 12)))

y_c, y_s, dual = forward(s, p)
print(f"causal prediction {y_c.item():+.4f}")
print("shortcut class probabilities", np.round(y_s.data, 3))
print("H_c and H_s shapes", dual.H_c.shape, dual.H_s.shape)

# shuffling the audio frames (and relabelling edges) leaves graph-level output alone
g2 = permute_graph(g, (np.arange(4), np.array([1, 0]), np.array([2, 0, 1])))
a = forward_batch(batch_graphs([g]), p).y_c.data
b = forward_batch(batch_graphs([g2]), p).y_c.data
print("after permuting nodes:", a, b)
