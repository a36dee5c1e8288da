"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .graph import Sample
from .model import ModelConfig, ModelParams, batch_samples, forward_batch, init_params
from .objective import InterventionBank, objective

STEP = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = STEP) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2.0 * h)
    return g


def toy_sample(seed: int = 0, n: int = 4, dims=(8, 6, 6)) -> Sample:
    rng = np.random.default_rng(seed)
    return Sample(
        rng.standard_normal((n, dims[0])),
        rng.standard_normal((n, dims[1])),
        rng.standard_normal((n, dims[2])),
        [(i, i + 1) for i in range(n - 1)] + ([(0, n - 1)] if n > 2 else []),
        float(rng.uniform(-3, 3)),
        f"toy-{seed}",
    )


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_param: dict[str, float]
    n_checked: int

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def check_full_loss(
    seed: int = 0,
    d: int = 16,
    n: int = 4,
    lam: float = 0.2,
    beta: float = 0.6,
    ablation: str = "none",
    n_samples: int = 2,
) -> GradCheckResult:
    """Compare backprop against finite differences for every parameter entry.

    Uses a small batch of toy samples, evaluation mode (no dropout) and a
    pre-filled intervention bank with frozen draws so the loss is a fixed
    smooth function of the parameters.
    """
    samples = [toy_sample(seed + i, n) for i in range(n_samples)]
    cfg = ModelConfig.for_ablation(ablation, d_t=8, d_a=6, d_v=6, d=d)
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed + 1000)
    for t in params:
        # move biases off zero so every path is exercised
        if t.data.ndim == 1:
            t.data[:] = 0.1 * rng.standard_normal(t.shape)
    bank = InterventionBank(capacity=8, k=2, seed=seed)
    bank.update(0.5 * rng.standard_normal((4, d)))
    batch = batch_samples(samples, cfg.inter_modal)
    draws = bank.draw_indices(n_samples)

    def loss_value() -> float:
        res = forward_batch(batch, params)
        return objective(res, batch.labels, params, bank, lam, beta, ablation, draws)[0].item()

    params.zero_grad()
    res = forward_batch(batch, params)
    loss, _ = objective(res, batch.labels, params, bank, lam, beta, ablation, draws)
    T.backward(loss)
    return _compare(params, loss_value)


def _compare(params: ModelParams, f: Callable[[], float]) -> GradCheckResult:
    per_param = {}
    count = 0
    for name, t in params.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_grad(f, t.data)
        per_param[name] = float(relative_error(analytic, numeric).max())
        count += t.data.size
    return GradCheckResult(max(per_param.values()), per_param, count)
