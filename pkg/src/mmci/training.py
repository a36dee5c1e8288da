"""AdamW training with linear warm-up, early stopping and a sweep runner."""

from __future__ import annotations

import csv
import io
import itertools
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import config as kv
from . import tensor as T
from .data import Dataset
from .metrics import mae
from .model import (
    ABLATIONS,
    ConfigError,
    GraphBatch,
    ModelConfig,
    ModelParams,
    batch_graphs,
    forward_batch,
    init_params,
    save_checkpoint,
)
from .graph import build_graph
from .objective import InterventionBank, LossBundle, objective

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

REPORT_COLUMNS = ["epoch", "l_sup", "l_unif", "l_intv", "total", "val_mae"]


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    d: int = 32
    d_hidden: int = 0
    layers: int = 1
    activation: str = "elu"
    n_classes: int = 7
    batch_size: int = 8
    epochs: int = 30
    peak_lr: float = 3e-3
    warmup_steps: int = 0  # 0 -> one epoch of steps
    weight_decay: float = 0.01
    dropout: float = 0.3
    lam: float = 0.2
    beta: float = 0.6
    k: int = 4
    bank_capacity: int = 256
    patience: int = 20
    seed: int = 0
    ablation: str = "none"

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}")
        for name in ("d", "batch_size", "k", "bank_capacity", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0 or self.warmup_steps < 0:
            raise ConfigError("epochs and warmup_steps must be non-negative")
        if self.peak_lr < 0 or self.weight_decay < 0 or self.lam < 0 or self.beta < 0:
            raise ConfigError("rates and loss weights must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    def model_config(self, dims, label_range=(-3.0, 3.0)) -> ModelConfig:
        return ModelConfig.for_ablation(
            self.ablation,
            d_t=dims[0],
            d_a=dims[1],
            d_v=dims[2],
            d=self.d,
            d_hidden=self.d_hidden,
            n_classes=self.n_classes,
            layers=self.layers,
            activation=self.activation,
            dropout=self.dropout,
            label_lo=label_range[0],
            label_hi=label_range[1],
        )

    def loss_weights(self) -> tuple[float, float]:
        lam = 0.0 if self.ablation == "no-disentangle" else self.lam
        beta = 0.0 if self.ablation == "no-intervention" else self.beta
        return lam, beta


def load_config(path, overrides: dict[str, str] | None = None) -> TrainConfig:
    return kv.load(TrainConfig, path, overrides)


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def warmup_lr(peak_lr: float, t: int, warmup_steps: int) -> float:
    if warmup_steps <= 0:
        return peak_lr
    return peak_lr * min(1.0, t / warmup_steps)


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    t: int,
    lr: float,
    weight_decay: float = 0.01,
) -> None:
    """One AdamW update in place: decoupled decay, then bias-corrected moments."""
    if t < 1:
        raise TrainingError("optimizer step counter starts at 1")
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        p *= 1.0 - lr * weight_decay
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


# ---------------------------------------------------------------- training


@dataclass
class EpochRecord:
    epoch: int
    l_sup: float
    l_unif: float
    l_intv: float
    total: float
    val_mae: float

    def row(self) -> list[float]:
        return [self.epoch, self.l_sup, self.l_unif, self.l_intv, self.total, self.val_mae]


@dataclass
class TrainReport:
    records: list[EpochRecord]
    best_epoch: int
    best_val_mae: float
    config: TrainConfig
    params: ModelParams
    checkpoint_path: str = ""
    lam: float = 0.0
    beta: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.records:
            w.writerow([r.epoch] + [repr(float(x)) for x in r.row()[1:]])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


class _Prepared:
    """Graphs built once per dataset so each epoch only re-batches them."""

    def __init__(self, ds: Dataset, inter_modal: bool):
        self.graphs = [build_graph(s, inter_modal=inter_modal) for s in ds.samples]
        self.labels = np.array([s.label for s in ds.samples])
        self.ids = [s.id for s in ds.samples]

    def batch(self, index) -> GraphBatch:
        return batch_graphs(
            [self.graphs[i] for i in index], self.labels[index], [self.ids[i] for i in index]
        )

    def batches(self, order, size: int):
        for lo in range(0, len(order), size):
            yield self.batch(order[lo : lo + size])


def predict_prepared(prep: _Prepared, params: ModelParams, batch_size: int = 64) -> np.ndarray:
    n = len(prep.labels)
    preds = [forward_batch(b, params).y_c.data.copy() for b in prep.batches(np.arange(n), batch_size)]
    return np.concatenate(preds)


def train(
    datasets: dict[str, Dataset], cfg: TrainConfig, out_dir=None
) -> TrainReport:
    """Fit a model on ``datasets['train']``, selecting the epoch by validation MAE."""
    train_ds, val_ds = datasets.get("train"), datasets.get("val")
    if not train_ds or not val_ds:
        raise TrainingError("train and val splits must be non-empty")
    first = train_ds.samples[0]
    dims = tuple(f.shape[1] for f in first.feats)
    mcfg = cfg.model_config(dims, train_ds.label_range)
    params = init_params(mcfg, cfg.seed)
    lam, beta = cfg.loss_weights()

    tr = _Prepared(train_ds, mcfg.inter_modal)
    va = _Prepared(val_ds, mcfg.inter_modal)
    steps_per_epoch = -(-len(tr.labels) // cfg.batch_size)
    warmup = cfg.warmup_steps or steps_per_epoch
    bank = InterventionBank(cfg.bank_capacity, cfg.k, seed=cfg.seed)
    state = AdamState()

    val0 = mae(predict_prepared(va, params), va.labels)
    init_bundles = [
        objective(forward_batch(b, params), b.labels, params, bank, lam, beta, cfg.ablation)[1]
        for b in tr.batches(np.arange(len(tr.labels)), cfg.batch_size)
    ]
    records = [_epoch_record(0, init_bundles, val0)]
    best_val, best_epoch = val0, 0
    best_params = params.copy()
    t = 0
    since_best = 0
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(tr.labels))
        bundles: list[LossBundle] = []
        for b_idx, batch in enumerate(tr.batches(order, cfg.batch_size)):
            t += 1
            drop_rng = np.random.default_rng([cfg.seed, epoch, b_idx, 1])
            result = forward_batch(batch, params, drop_rng)
            loss, bundle = objective(result, batch.labels, params, bank, lam, beta, cfg.ablation)
            if not np.isfinite(bundle.total):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b_idx}")
            params.zero_grad()
            T.backward(loss)
            optimizer_step(
                {n: p.data for n, p in params.items()},
                {n: p.grad for n, p in params.items() if p.grad is not None},
                state,
                t,
                warmup_lr(cfg.peak_lr, t, warmup),
                cfg.weight_decay,
            )
            bank.update(result.pooled_s.data, batch.ids)
            bundles.append(bundle)
        val = mae(predict_prepared(va, params), va.labels)
        records.append(_epoch_record(epoch, bundles, val))
        log.debug("epoch %d total %.4f val_mae %.4f", epoch, records[-1].total, val)
        if val < best_val:
            best_val, best_epoch = val, epoch
            best_params = params.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    report = TrainReport(records, best_epoch, best_val, cfg, best_params, lam=lam, beta=beta)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.write_csv(out / "report.csv")
        ckpt = out / "model.ckpt"
        save_checkpoint(
            ckpt,
            best_params,
            {"ablation": cfg.ablation, "lambda": lam, "beta": beta, "best_epoch": best_epoch},
        )
        report.checkpoint_path = str(ckpt)
        (out / "config.cfg").write_text(kv.dump(cfg))
    return report


def _epoch_record(epoch: int, bundles: list[LossBundle], val: float) -> EpochRecord:
    if not bundles:
        nan = float("nan")
        return EpochRecord(epoch, nan, nan, nan, nan, val)
    mean = lambda attr: float(np.mean([getattr(b, attr) for b in bundles]))  # noqa: E731
    return EpochRecord(epoch, mean("l_sup"), mean("l_unif"), mean("l_intv"), mean("total"), val)


def evaluate_split(params: ModelParams, ds: Dataset) -> np.ndarray:
    return predict_prepared(_Prepared(ds, params.config.inter_modal), params)


# ---------------------------------------------------------------- sweep


SWEEP_COLUMNS = ["config_hash", "point", "best_epoch", "best_val_mae", "epochs_run"]


def grid_points(grid: dict[str, list]) -> list[dict]:
    if not grid:
        raise TrainingError("sweep grid is empty")
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def random_points(spaces: dict[str, list], n: int, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    keys = sorted(spaces)
    return [{k: spaces[k][rng.integers(len(spaces[k]))] for k in keys} for _ in range(n)]


@dataclass
class SweepRow:
    config_hash: str
    point: dict
    report: TrainReport


def sweep(points: list[dict], datasets: dict[str, Dataset], base: TrainConfig, out_dir=None) -> list[SweepRow]:
    """Train once per point (each a dict of TrainConfig overrides)."""
    if not points:
        raise TrainingError("sweep needs at least one point")
    rows = []
    for point in points:
        cfg = replace(base, **point)
        h = kv.config_hash(cfg)
        run_dir = None if out_dir is None else Path(out_dir) / h
        rows.append(SweepRow(h, point, train(datasets, cfg, run_dir)))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "sweep.csv").write_text(sweep_csv(rows))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        point = ";".join(f"{k}={v}" for k, v in sorted(r.point.items()))
        w.writerow([r.config_hash, point, r.report.best_epoch, repr(r.report.best_val_mae), len(r.report.records) - 1])
    return buf.getvalue()
