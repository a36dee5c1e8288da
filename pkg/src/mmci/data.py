"""Synthetic multimodal sentiment data with planted shortcut features.

Every sample carries a uniform label y. A *causal* coordinate (column 0) in
all three modalities holds ``causal_strength * y`` modulated along the
sequence plus Gaussian noise. Two shortcut channels follow y with Pearson
correlation ``rho``:

* intra-modal: column 1 of a single randomly placed text row (a frequent
  lexical cue); the other text rows hold 0 there;
* inter-modal: column 1 of every audio and visual row shares one nuisance
  value (background music / lighting).

Train, validation and test splits use ``rho_train``; the OOD split uses
``rho_ood``. Each sample draws from its own Philox stream keyed by
(seed, split, index), so values do not depend on generation order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as kv
from .graph import Sample

SPLITS = ("train", "val", "test", "ood")
DATA_MAGIC = b"MMCIDATA"
DATA_VERSION = 1

CAUSAL_COL = 0
SHORTCUT_COL = 1


class DatasetFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DatasetVersionError(DatasetFormatError):
    pass


@dataclass
class GenSpec:
    n_train: int = 150
    n_val: int = 50
    n_test: int = 50
    n_ood: int = 50
    seq_lens: tuple[int, int, int] = (6, 6, 6)
    dims: tuple[int, int, int] = (8, 6, 6)
    causal_strength: float = 0.3
    rho_train: float = 0.9
    rho_ood: float = -0.9
    noise_sigma: float = 1.0
    label_range: tuple[float, float] = (-3.0, 3.0)
    extra_dep_edges: int = 1
    seed: int = 0

    def __post_init__(self):
        self.seq_lens = tuple(int(x) for x in self.seq_lens)
        self.dims = tuple(int(x) for x in self.dims)
        self.label_range = tuple(float(x) for x in self.label_range)
        self.validate()

    def validate(self) -> None:
        for name in ("n_train", "n_val", "n_test", "n_ood"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if len(self.seq_lens) != 3 or min(self.seq_lens) < 1:
            raise ValueError("seq_lens needs three positive lengths")
        if len(self.dims) != 3 or min(self.dims) < 2:
            raise ValueError("dims needs three values >= 2 (causal and shortcut columns)")
        for name in ("rho_train", "rho_ood"):
            if not -1.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [-1, 1]")
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be positive")
        lo, hi = self.label_range
        if not lo < hi:
            raise ValueError("label_range must be increasing")
        if self.extra_dep_edges < 0:
            raise ValueError("extra_dep_edges must be non-negative")

    def count(self, split: str) -> int:
        return getattr(self, f"n_{split}")

    def rho(self, split: str) -> float:
        return self.rho_ood if split == "ood" else self.rho_train

    def digest(self) -> str:
        return kv.config_hash(self)


@dataclass
class Dataset:
    samples: list[Sample]
    split: str
    gen_hash: str = ""
    dims: tuple[int, int, int] = (0, 0, 0)
    label_range: tuple[float, float] = (-3.0, 3.0)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.split == other.split
            and self.gen_hash == other.gen_hash
            and tuple(self.dims) == tuple(other.dims)
            and tuple(self.label_range) == tuple(other.label_range)
            and self.samples == other.samples
        )


def _stream(seed: int, split: str, index: int) -> np.random.Generator:
    key = [int(seed) & (2**64 - 1), (SPLITS.index(split) << 48) | int(index)]
    return np.random.Generator(np.random.Philox(key=key))


def _sample(spec: GenSpec, split: str, index: int) -> Sample:
    rng = _stream(spec.seed, split, index)
    lo, hi = spec.label_range
    y = rng.uniform(lo, hi)
    mid, sd = 0.5 * (lo + hi), (hi - lo) / np.sqrt(12.0)
    z = (y - mid) / sd
    rho = spec.rho(split)
    resid = np.sqrt(max(0.0, 1.0 - rho * rho))

    feats = []
    for n, dm in zip(spec.seq_lens, spec.dims):
        x = rng.standard_normal((n, dm))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        envelope = 1.0 + 0.5 * np.sin(2.0 * np.pi * np.arange(n) / n + phase)
        x[:, CAUSAL_COL] = spec.causal_strength * y * envelope + spec.noise_sigma * rng.standard_normal(n)
        feats.append(x)

    text, audio, visual = feats
    token = rng.integers(spec.seq_lens[0])
    text[:, SHORTCUT_COL] = 0.0
    text[token, SHORTCUT_COL] = mid + sd * (rho * z + resid * rng.standard_normal())
    nuisance = mid + sd * (rho * z + resid * rng.standard_normal())
    for x in (audio, visual):
        x[:, SHORTCUT_COL] = nuisance + 0.1 * rng.standard_normal(x.shape[0])

    n_t = spec.seq_lens[0]
    edges = [(i, i + 1) for i in range(n_t - 1)]
    if n_t > 2:
        for _ in range(spec.extra_dep_edges):
            i, j = sorted(rng.choice(n_t, size=2, replace=False))
            if j - i > 1:
                edges.append((int(i), int(j)))
    return Sample(text, audio, visual, edges, y, f"{split}-{index:06d}", spec.label_range)


def generate_split(spec: GenSpec, split: str) -> Dataset:
    samples = [_sample(spec, split, i) for i in range(spec.count(split))]
    return Dataset(samples, split, spec.digest(), spec.dims, spec.label_range)


def generate(spec: GenSpec) -> dict[str, Dataset]:
    """Build the train, val, test and ood splits."""
    spec.validate()
    return {split: generate_split(spec, split) for split in SPLITS}


def shortcut_features(s: Sample) -> np.ndarray:
    """(text token cue, mean audio/visual nuisance) for one sample."""
    token = s.text_feats[:, SHORTCUT_COL].sum()
    nuisance = 0.5 * (s.audio_feats[:, SHORTCUT_COL].mean() + s.visual_feats[:, SHORTCUT_COL].mean())
    return np.array([token, nuisance])


def causal_features(s: Sample) -> np.ndarray:
    return np.array([f[:, CAUSAL_COL].mean() for f in s.feats])


# ---------------------------------------------------------------- file format
#
# header:  b"MMCIDATA" | u32 version | u32 len + split name | u64 sample count
#          | u32 d_t, d_a, d_v | f64 label lo, hi | u32 len + generator hash
# record:  u32 len + id bytes | f64 label | 3 x (u32 rows, u32 cols, rows*cols f64)
#          | u32 edge count | count x (u32 i, u32 j)
# All integers and floats little-endian.


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def dumps(ds: Dataset) -> bytes:
    out = [DATA_MAGIC, struct.pack("<I", DATA_VERSION), _pack_str(ds.split)]
    out.append(struct.pack("<Q", len(ds.samples)))
    out.append(struct.pack("<3I", *ds.dims))
    out.append(struct.pack("<2d", *ds.label_range))
    out.append(_pack_str(ds.gen_hash))
    for s in ds.samples:
        out.append(_pack_str(s.id))
        out.append(struct.pack("<d", s.label))
        for f in s.feats:
            out.append(struct.pack("<2I", *f.shape))
            out.append(np.ascontiguousarray(f, dtype="<f8").tobytes())
        out.append(struct.pack("<I", len(s.dep_edges)))
        if s.dep_edges:
            out.append(np.asarray(s.dep_edges, dtype="<u4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DatasetFormatError(f"truncated file while reading {what}", self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def string(self, what: str) -> str:
        (n,) = self.unpack("<I", what)
        start = self.pos
        try:
            return self.take(n, what).decode("utf-8")
        except UnicodeDecodeError:
            raise DatasetFormatError(f"invalid UTF-8 in {what}", start) from None


def loads(data: bytes) -> Dataset:
    r = _Reader(data)
    if r.take(len(DATA_MAGIC), "magic") != DATA_MAGIC:
        raise DatasetFormatError("not an MMCI dataset file", 0)
    (version,) = r.unpack("<I", "version")
    if version != DATA_VERSION:
        raise DatasetVersionError(f"dataset version {version}, expected {DATA_VERSION}", 8)
    split = r.string("split name")
    (count,) = r.unpack("<Q", "sample count")
    dims = r.unpack("<3I", "dims")
    label_range = r.unpack("<2d", "label range")
    gen_hash = r.string("generator hash")
    samples = []
    for k in range(count):
        sid = r.string(f"id of record {k}")
        (label,) = r.unpack("<d", f"label of record {k}")
        feats = []
        for m in "tav":
            rows, cols = r.unpack("<2I", f"shape of {m} features in record {k}")
            raw = r.take(8 * rows * cols, f"{m} features of record {k}")
            feats.append(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(rows, cols))
        (n_edges,) = r.unpack("<I", f"edge count of record {k}")
        raw = r.take(8 * n_edges, f"edges of record {k}")
        pairs = np.frombuffer(raw, dtype="<u4").reshape(-1, 2)
        samples.append(
            Sample(*feats, [(int(i), int(j)) for i, j in pairs], label, sid, tuple(label_range))
        )
    if r.pos != len(data):
        raise DatasetFormatError("trailing bytes after last record", r.pos)
    return Dataset(samples, split, gen_hash, tuple(dims), tuple(label_range))


def save(ds: Dataset, path) -> None:
    Path(path).write_bytes(dumps(ds))


def load(path) -> Dataset:
    return loads(Path(path).read_bytes())


def save_splits(datasets: dict[str, Dataset], directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for split, ds in datasets.items():
        path = directory / f"{split}.mmd"
        save(ds, path)
        paths.append(path)
    return paths


def load_splits(directory, splits=SPLITS) -> dict[str, Dataset]:
    directory = Path(directory)
    return {s: load(directory / f"{s}.mmd") for s in splits if (directory / f"{s}.mmd").exists()}


def load_spec(path, overrides: dict[str, str] | None = None) -> GenSpec:
    return kv.load(GenSpec, path, overrides)
