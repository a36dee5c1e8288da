"""Training losses: supervised regression, shortcut uniformity, intervention.

The intervention term draws pooled shortcut vectors of earlier samples from
a FIFO bank and adds them to the pooled causal vector before the causal
head, asking the prediction to survive every drawn stratum.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import ModelParams, predict_causal
from .tensor import Tensor


class LossConfigError(ValueError):
    pass


def loss_sup(pred, labels) -> Tensor:
    pred = T.as_tensor(pred)
    labels = T.as_tensor(labels)
    if pred.data.size == 0:
        raise ValueError("loss_sup on an empty batch")
    return T.mse(pred, labels)


def loss_unif(probs, num_classes: int | None = None) -> Tensor:
    """Batch mean of KL(uniform || probs)."""
    return T.kl_uniform(probs, num_classes)


def loss_expected_bucket(probs: Tensor, labels, centers: np.ndarray) -> Tensor:
    """MSE between the probability-weighted bucket centre and the label.

    Replaces the uniformity term in the ``no-kl`` ablation.
    """
    expected = probs @ Tensor(np.asarray(centers, dtype=np.float64).reshape(-1, 1))
    labels = np.asarray(T.as_tensor(labels).data, dtype=np.float64).reshape(-1, 1)
    return T.mse(expected, labels)


class InterventionBank:
    """FIFO store of detached pooled shortcut vectors with seeded draws."""

    def __init__(self, capacity: int = 256, k: int = 4, seed: int = 0):
        if capacity < 1 or k < 1:
            raise LossConfigError("bank capacity and k must be positive")
        self.capacity = capacity
        self.k = k
        self.entries: deque[np.ndarray] = deque(maxlen=capacity)
        self.ids: deque[str] = deque(maxlen=capacity)
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self.entries)

    def update(self, vectors, ids=None) -> "InterventionBank":
        vectors = np.atleast_2d(np.asarray(vectors.data if isinstance(vectors, Tensor) else vectors))
        ids = list(ids) if ids is not None else [""] * len(vectors)
        for v, i in zip(vectors, ids):
            self.entries.append(np.array(v, dtype=np.float64, copy=True))
            self.ids.append(i)
        return self

    def draw_indices(self, n_samples: int) -> np.ndarray:
        """Uniform draws with replacement, shape [n_samples, k]."""
        return self.rng.integers(0, len(self.entries), size=(n_samples, self.k))

    def stack(self, index: np.ndarray) -> np.ndarray:
        table = np.stack(self.entries)
        return table[np.asarray(index).reshape(-1)]


def bank_update(bank: InterventionBank, new_entries, ids=None) -> InterventionBank:
    return bank.update(new_entries, ids)


@dataclass
class InterventionResult:
    loss: Tensor
    warmup: bool
    draws: np.ndarray | None = None


def loss_intv(
    pooled_c: Tensor, labels, bank: InterventionBank, p: ModelParams, draws: np.ndarray | None = None
) -> InterventionResult:
    """Mean over samples and k strata of (y - head_c(pooled_c + s_k))^2.

    Bank vectors enter as constants. An empty bank gives a zero loss flagged
    as warm-up.
    """
    labels = np.asarray(T.as_tensor(labels).data, dtype=np.float64).reshape(-1)
    if len(bank) == 0:
        return InterventionResult(Tensor(0.0), True)
    pooled_c = pooled_c if pooled_c.data.ndim == 2 else _row(pooled_c)
    n = pooled_c.shape[0]
    if draws is None:
        draws = bank.draw_indices(n)
    k = draws.shape[1]
    strata = Tensor(bank.stack(draws))
    owner = np.repeat(np.arange(n), k)
    perturbed = T.gather_rows(pooled_c, owner) + strata
    z = predict_causal(perturbed, p)
    return InterventionResult(T.mse(z, np.repeat(labels, k)), False, draws)


def _row(x: Tensor) -> Tensor:
    def bw(g):
        T._accumulate(x, g.reshape(x.shape))

    return T._make(x.data.reshape(1, -1), (x,), "reshape", bw)


@dataclass(frozen=True)
class LossBundle:
    l_sup: float
    l_unif: float
    l_intv: float
    lam: float
    beta: float
    total: float
    warmup: bool = False


def check_weights(lam: float, beta: float) -> None:
    if lam < 0 or beta < 0 or not np.isfinite(lam) or not np.isfinite(beta):
        raise LossConfigError(f"loss weights must be finite and non-negative (lambda={lam}, beta={beta})")


def effective_weights(lam: float, beta: float, ablation: str = "none") -> tuple[float, float]:
    if ablation == "no-disentangle":
        lam = 0.0
    elif ablation == "no-intervention":
        beta = 0.0
    return lam, beta


def total_loss(
    l_sup: float, l_unif: float, l_intv: float, lam: float, beta: float, ablation: str = "none",
    warmup: bool = False,
) -> LossBundle:
    """Combine scalar components: total = l_sup + lam * l_unif + beta * l_intv."""
    check_weights(lam, beta)
    lam, beta = effective_weights(lam, beta, ablation)
    l_sup, l_unif, l_intv = float(l_sup), float(l_unif), float(l_intv)
    total = l_sup + lam * l_unif + beta * l_intv
    return LossBundle(l_sup, l_unif, l_intv, lam, beta, total, warmup)


def objective(
    result,
    labels,
    p: ModelParams,
    bank: InterventionBank,
    lam: float,
    beta: float,
    ablation: str = "none",
    draws: np.ndarray | None = None,
) -> tuple[Tensor, LossBundle]:
    """Differentiable total loss for one forward result plus its scalar bundle.

    ``result`` is a :class:`mmci.model.ForwardResult`. Under ``no-kl`` the
    uniformity term is replaced by :func:`loss_expected_bucket`.
    """
    check_weights(lam, beta)
    lam, beta = effective_weights(lam, beta, ablation)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    sup = loss_sup(result.y_c, labels)
    if ablation == "no-kl":
        unif = loss_expected_bucket(result.y_s, labels, p.config.bucket_centers())
    else:
        unif = loss_unif(result.y_s, p.config.n_classes)
    intv = loss_intv(result.pooled_c, labels, bank, p, draws)
    total = sup
    if lam != 0.0:
        total = total + T.scale(unif, lam)
    if beta != 0.0 and not intv.warmup:
        total = total + T.scale(intv.loss, beta)
    bundle = total_loss(sup.item(), unif.item(), intv.loss.item(), lam, beta, warmup=intv.warmup)
    return total, bundle
