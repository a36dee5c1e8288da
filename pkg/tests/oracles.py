"""Independent loop-based reference computations used by several test files."""

import numpy as np

from mmci.graph import RelationKind, Sample


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def mlp(x, W1, b1, W2, b2):
    return elu(x @ W1 + b1) @ W2 + b2


def softmax(v):
    e = np.exp(v - v.max())
    return e / e.sum()


def dense_layer(h, adj, P, keys):
    """Dual attention layer written against the dense N x N x 6 adjacency.

    ``P`` maps parameter names to arrays; ``keys[r]`` is the parameter-set
    name used by relation ``r``.
    """
    n, d = h.shape
    H_c = np.zeros((n, d))
    H_s = np.zeros((n, d))
    alphas = {}
    for r in RelationKind:
        pre = f"l0.rel.{keys[r]}"
        A = adj[:, :, int(r)]
        hc = np.zeros((n, d))
        hs = np.zeros((n, d))
        for i in range(n):
            for j in range(n):
                if A[i, j] == 0:
                    continue
                z = mlp(np.concatenate([h[i], h[j]]), P[f"{pre}.mlp.W1"], P[f"{pre}.mlp.b1"],
                        P[f"{pre}.mlp.W2"], P[f"{pre}.mlp.b2"])
                a = softmax(z)
                alphas[(r, i, j)] = a
                hc[i] += a[0] * (h[j] @ P[f"{pre}.W_c"])
                hs[i] += a[1] * (h[j] @ P[f"{pre}.W_s"])
        H_c += elu(hc)
        H_s += elu(hs)
    return H_c, H_s, alphas


def random_sample(rng, dims=(3, 2, 2), max_len=3, sid="r"):
    n = [int(rng.integers(1, max_len + 1)) for _ in range(3)]
    n_t = n[0]
    dep = [tuple(int(v) for v in rng.integers(0, n_t, 2)) for _ in range(int(rng.integers(0, 3)))]
    return Sample(
        rng.standard_normal((n[0], dims[0])),
        rng.standard_normal((n[1], dims[1])),
        rng.standard_normal((n[2], dims[2])),
        dep,
        float(rng.uniform(-3, 3)),
        sid,
    )
