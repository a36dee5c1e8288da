from dataclasses import replace

import numpy as np
import pytest

from mmci import data
from mmci.data import (
    Dataset,
    DatasetFormatError,
    DatasetVersionError,
    GenSpec,
    causal_features,
    generate,
    generate_split,
    shortcut_features,
)


def design(ds, fn):
    X = np.array([fn(s) for s in ds.samples])
    return np.hstack([X, np.ones((len(X), 1))]), ds.labels


def probe(train, other, fn=shortcut_features):
    X, y = design(train, fn)
    w, *_ = np.linalg.lstsq(X, y, rcond=None)
    out = []
    for ds in (train, other):
        Xo, yo = design(ds, fn)
        out.append(np.corrcoef(Xo @ w, yo)[0, 1])
    return out


def test_default_spec_and_shapes():
    spec = GenSpec()
    sets = generate(spec)
    assert list(sets) == ["train", "val", "test", "ood"]
    assert sum(len(d) for d in sets.values()) == 300
    for ds in sets.values():
        assert ds.gen_hash == spec.digest()
        for s in ds.samples:
            assert [f.shape for f in s.feats] == [(6, 8), (6, 6), (6, 6)]
            assert -3 <= s.label <= 3
            assert all(0 <= i < 6 and 0 <= j < 6 for i, j in s.dep_edges)
            assert {(i, i + 1) for i in range(5)} <= set(s.dep_edges)


def test_same_seed_is_bit_identical_and_order_free():
    spec = GenSpec(seed=3)
    a, b = generate(spec), generate(spec)
    assert a == b
    big = generate_split(replace(spec, n_train=300), "train")
    assert big.samples[:150] == a["train"].samples
    assert generate(replace(spec, seed=4))["train"] != a["train"]


@pytest.mark.parametrize("rho", [0.9, -0.9, 0.5, 0.0])
def test_shortcut_correlation_contract(rho):
    spec = GenSpec(n_train=600, n_ood=600, rho_train=rho, rho_ood=-rho, seed=1)
    for split in ("train", "ood"):
        ds = generate_split(spec, split)
        X = np.array([shortcut_features(s) for s in ds.samples])
        target = spec.rho(split)
        for col in range(2):
            r = np.corrcoef(X[:, col], ds.labels)[0, 1]
            assert abs(r - target) < 0.1, (split, col, r, target)


def test_linear_probe_on_default_spec():
    spec = replace(GenSpec(), n_train=500, n_ood=500)
    sets = generate(spec)
    r_train, r_ood = probe(sets["train"], sets["ood"])
    assert r_train > 0.8
    assert r_ood < -0.6


def test_zero_rho_shortcut_is_noise():
    spec = GenSpec(n_train=500, n_test=500, rho_train=0.0, rho_ood=0.0, seed=2)
    sets = generate(spec)
    _, r_test = probe(sets["train"], sets["test"])
    assert abs(r_test) < 0.1


def test_zero_causal_strength_gives_no_signal():
    spec = GenSpec(n_train=500, n_test=500, causal_strength=0.0, rho_train=0.0, rho_ood=0.0, seed=5)
    sets = generate(spec)
    X, y = design(sets["train"], causal_features)
    w, *_ = np.linalg.lstsq(X, y, rcond=None)
    Xt, yt = design(sets["test"], causal_features)
    fit = np.mean(np.abs(Xt @ w - yt))
    const = np.mean(np.abs(y.mean() - yt))
    assert abs(fit - const) < 0.05
    # with the default strength the causal columns do carry signal
    sets = generate(replace(spec, causal_strength=0.3))
    _, r = probe(sets["train"], sets["test"], causal_features)
    assert r > 0.4


def test_spec_validation():
    for bad in ({"n_val": 0}, {"dims": (8, 1, 6)}, {"rho_ood": -1.5}, {"noise_sigma": 0.0},
                {"label_range": (3.0, -3.0)}, {"seq_lens": (0, 6, 6)}):
        with pytest.raises(ValueError):
            GenSpec(**bad)


def test_round_trip(tmp_path):
    sets = generate(GenSpec(n_train=7, n_val=2, n_test=2, n_ood=3, seed=9))
    paths = data.save_splits(sets, tmp_path)
    assert [p.name for p in paths] == ["train.mmd", "val.mmd", "test.mmd", "ood.mmd"]
    back = data.load_splits(tmp_path)
    assert back == sets
    for s, t in zip(sets["train"].samples, back["train"].samples):
        for a, b in zip(s.feats, t.feats):
            assert a.tobytes() == b.tobytes()
        assert s.label == t.label
    assert data.dumps(back["ood"]) == paths[-1].read_bytes()


def test_empty_dataset_round_trip():
    ds = Dataset([], "test", "abc", (8, 6, 6), (-3.0, 3.0))
    back = data.loads(data.dumps(ds))
    assert len(back) == 0
    assert back == ds


def test_truncated_file_reports_offset():
    ds = generate_split(GenSpec(n_train=3), "train")
    raw = data.dumps(ds)
    for cut in (4, 30, len(raw) // 2, len(raw) - 1):
        with pytest.raises(DatasetFormatError) as err:
            data.loads(raw[:cut])
        assert err.value.offset <= cut
        assert "byte offset" in str(err.value)


def test_bad_magic_version_and_trailing_bytes():
    raw = data.dumps(generate_split(GenSpec(n_train=1), "train"))
    with pytest.raises(DatasetFormatError):
        data.loads(b"XXXXXXXX" + raw[8:])
    with pytest.raises(DatasetVersionError):
        data.loads(raw[:8] + (2).to_bytes(4, "little") + raw[12:])
    with pytest.raises(DatasetFormatError):
        data.loads(raw + b"\0")


def test_spec_config_file(tmp_path):
    path = tmp_path / "spec.cfg"
    path.write_text("# toy\nn_train = 20\nrho_train = 0.5\nseq_lens = 4, 5, 6\n")
    spec = data.load_spec(path, {"seed": "11"})
    assert (spec.n_train, spec.rho_train, spec.seq_lens, spec.seed) == (20, 0.5, (4, 5, 6), 11)
