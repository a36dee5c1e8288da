"""Multi-seed OOD comparison of the full model against non-causal variants."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import GenSpec, generate
from .metrics import mae
from .training import TrainConfig, evaluate_split, train

VARIANTS = ("full", "no-kl", "plain")


def variant_config(base: TrainConfig, variant: str) -> TrainConfig:
    if variant == "full":
        return base
    if variant == "no-kl":
        return replace(base, ablation="no-kl")
    if variant == "plain":
        return replace(base, lam=0.0, beta=0.0)
    raise ValueError(f"unknown variant {variant!r}")


@dataclass
class RunResult:
    seed: int
    variant: str
    train_mae: float
    test_mae: float
    ood_mae: float
    best_epoch: int

    @property
    def gap(self) -> float:
        return self.ood_mae - self.train_mae


def run_seed(spec: GenSpec, base: TrainConfig, seed: int, variants=VARIANTS) -> list[RunResult]:
    ds = generate(replace(spec, seed=seed))
    out = []
    for v in variants:
        rep = train(ds, replace(variant_config(base, v), seed=seed))
        scores = {s: mae(evaluate_split(rep.params, ds[s]), ds[s].labels) for s in ("train", "test", "ood")}
        out.append(RunResult(seed, v, scores["train"], scores["test"], scores["ood"], rep.best_epoch))
    return out


def ood_benchmark(spec: GenSpec, base: TrainConfig, seeds, variants=VARIANTS) -> list[RunResult]:
    results = []
    for seed in seeds:
        results.extend(run_seed(spec, base, seed, variants))
    return results


def summarize(results: list[RunResult]) -> dict:
    """Per-seed ordering checks and per-variant medians."""
    by = {(r.seed, r.variant): r for r in results}
    seeds = sorted({r.seed for r in results})
    ordered = []
    for s in seeds:
        f, k, p = by[(s, "full")], by[(s, "no-kl")], by[(s, "plain")]
        ordered.append(f.ood_mae < k.ood_mae and f.ood_mae < p.ood_mae and f.gap < k.gap)
    median = {
        v: float(np.median([r.ood_mae for r in results if r.variant == v]))
        for v in {r.variant for r in results}
    }
    return {"seeds": seeds, "ordered": ordered, "median_ood_mae": median}
