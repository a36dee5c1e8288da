import csv
import io

import pytest

from mmci.cli import ABLATE_COLUMNS, build_parser, run
from mmci.model import load_checkpoint

TOY_SPEC = "n_train = 24\nn_val = 8\nn_test = 8\nn_ood = 8\nseq_lens = 3 3 3\n"
TOY_TRAIN = "d = 8\nepochs = 2\nbatch_size = 8\n"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "spec.cfg").write_text(TOY_SPEC)
    (root / "t.cfg").write_text(TOY_TRAIN)
    assert run(["gen", "--spec", str(root / "spec.cfg"), "--out", str(root / "data")]) == 0
    return root


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_gen_then_train_writes_report(workspace, capsys):
    r = workspace
    assert sorted(p.name for p in (r / "data").iterdir()) == [
        "ood.mmd", "spec.cfg", "test.mmd", "train.mmd", "val.mmd"]
    assert run(["train", "--data", str(r / "data"), "--config", str(r / "t.cfg"), "--out", str(r / "run1")]) == 0
    out = capsys.readouterr().out
    assert "# train config (seed 0)" in out
    assert "epochs = 2" in out
    report = (r / "run1" / "report.csv").read_text().splitlines()
    assert report[0] == "epoch,l_sup,l_unif,l_intv,total,val_mae"
    assert len(report) == 4
    assert (r / "run1" / "model.ckpt").exists()


def test_train_is_byte_identical(workspace):
    r = workspace
    for name in ("a", "b"):
        assert run(["train", "--data", str(r / "data"), "--config", str(r / "t.cfg"),
                    "--out", str(r / name), "--seed", "5"]) == 0
    assert (r / "a" / "report.csv").read_bytes() == (r / "b" / "report.csv").read_bytes()


def test_eval_ood(workspace, capsys):
    r = workspace
    run(["train", "--data", str(r / "data"), "--config", str(r / "t.cfg"), "--out", str(r / "run2")])
    capsys.readouterr()
    assert run(["eval", "--run", str(r / "run2"), "--data", str(r / "data"), "--split", "ood",
                "--out", str(r / "eval.csv")]) == 0
    table = rows(capsys.readouterr().out)
    assert table[0][:3] == ["split", "acc7", "acc2_nonneg"]
    assert table[1][0] == "ood"
    assert (r / "eval.csv").read_text() == "\n".join(",".join(x) for x in table) + "\n"


def test_ablate_rows(workspace, capsys):
    r = workspace
    assert run(["ablate", "--data", str(r / "data"), "--config", str(r / "t.cfg"), "--out", str(r / "abl")]) == 0
    text = (r / "abl" / "ablate.csv").read_text()
    assert capsys.readouterr().out.endswith(text)
    table = rows(text)
    assert table[0] == ABLATE_COLUMNS
    body = {row[0]: dict(zip(table[0], row)) for row in table[1:]}
    assert list(body) == ["none", "no-intra", "no-inter", "no-disentangle", "no-intervention", "no-kl"]
    assert float(body["no-disentangle"]["lambda"]) == 0.0
    assert float(body["no-intervention"]["beta"]) == 0.0
    assert float(body["none"]["lambda"]) == 0.2 and float(body["none"]["beta"]) == 0.6
    assert body["no-intra"]["relation_sets"] == "1"
    params, extra = load_checkpoint(r / "abl" / "no-intra" / "model.ckpt")
    assert params.relation_sets() == {"shared"}
    assert extra["ablation"] == "no-intra"
    assert len(load_checkpoint(r / "abl" / "none" / "model.ckpt")[0].relation_sets()) == 6


def test_backdoor_demo_matches_enumeration(tmp_path, capsys):
    from mmci import causal

    assert run(["backdoor-demo", "--scm", "confounded", "--seed", "7", "--csv", str(tmp_path / "bd.csv")]) == 0
    out = capsys.readouterr().out
    scm = causal.confounded_scm(7)
    for row in causal.demo(scm):
        assert f"{row.gap:.4f}" in out
    assert (tmp_path / "bd.csv").read_text() == causal.demo_csv(causal.demo(scm))


def test_gradcheck_command(capsys):
    assert run(["gradcheck", "--d", "4", "--nodes", "2"]) == 0
    assert "max_rel_error=" in capsys.readouterr().out
    assert run(["gradcheck", "--d", "4", "--nodes", "2", "--tol", "0"]) == 5


def test_sweep_command(workspace, capsys):
    r = workspace
    assert run(["sweep", "--data", str(r / "data"), "--config", str(r / "t.cfg"), "--grid", "lam=0.2,0.5",
                "--set", "epochs=1", "--out", str(r / "sw")]) == 0
    table = rows((r / "sw" / "sweep.csv").read_text())
    assert len(table) == 3
    assert table[1][0] != table[2][0]


def test_run_root_env(workspace, monkeypatch):
    monkeypatch.setenv("MMCI_RUN_ROOT", str(workspace / "root"))
    assert run(["gen", "--out", "rel", "--set", "n_train=2", "--set", "n_val=1", "--set", "n_test=1",
                "--set", "n_ood=1"]) == 0
    assert (workspace / "root" / "rel" / "train.mmd").exists()


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert err[0].startswith("mmci-error code=")
    return err[0]


def test_exit_codes(workspace, tmp_path, capsys):
    r = workspace
    assert run(["frobnicate"]) == 2
    error_line(capsys)
    assert run(["train", "--data", str(r / "data"), "--out", str(tmp_path / "x"), "--bogus"]) == 2
    assert "kind=usage" in error_line(capsys)
    assert run(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "x")]) == 3
    assert "kind=io" in error_line(capsys)
    assert run(["train", "--data", str(r / "data"), "--out", str(tmp_path / "x"), "--set", "nope=1"]) == 4
    assert "kind=config" in error_line(capsys)
    bad = tmp_path / "bad.cfg"
    bad.write_text("epochs four\n")
    assert run(["train", "--data", str(r / "data"), "--out", str(tmp_path / "x"), "--config", str(bad)]) == 4
    error_line(capsys)

    run(["train", "--data", str(r / "data"), "--config", str(r / "t.cfg"), "--out", str(tmp_path / "ok")])
    capsys.readouterr()
    ckpt = tmp_path / "ok" / "model.ckpt"
    ckpt.write_bytes(ckpt.read_bytes().replace(b"version=1", b"version=2", 1))
    assert run(["eval", "--checkpoint", str(ckpt), "--data", str(r / "data")]) == 6
    assert "kind=version" in error_line(capsys)
    ckpt.write_bytes(b"garbage")
    assert run(["eval", "--checkpoint", str(ckpt), "--data", str(r / "data")]) == 3
    error_line(capsys)
    assert run(["backdoor-demo", "--scm", "nope"]) == 2
    error_line(capsys)


def test_help_lists_every_flag_with_defaults(capsys):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) >= {"gen", "train", "eval", "ablate", "gradcheck", "backdoor-demo", "sweep"}
    for name, sp in sub.choices.items():
        assert run([name, "--help"]) == 0
        text = capsys.readouterr().out
        for action in sp._actions:
            for flag in action.option_strings:
                assert flag in text
            if action.option_strings and action.default not in (None, [], False, "==SUPPRESS=="):
                assert "default" in text
