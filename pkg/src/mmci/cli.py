"""Command-line entry point: ``mmci <command> [flags]``.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 config, 5 numeric failure, 6 file
version mismatch. Errors are
printed to stderr as one line ``mmci-error code=<n> kind=<kind> msg=<text>``.
Relative output paths are resolved under ``$MMCI_RUN_ROOT`` when it is set.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import causal
from . import config as kv
from . import data as data_mod
from .experiments import VARIANTS, ood_benchmark, summarize
from .gradcheck import check_full_loss
from .metrics import MetricsReport, evaluate
from .model import ABLATIONS, CheckpointError, CheckpointVersionError, ConfigError, load_checkpoint
from .objective import LossConfigError
from .tensor import NumericError
from .training import (
    TrainConfig,
    TrainingError,
    evaluate_split,
    grid_points,
    random_points,
    sweep,
    sweep_csv,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERSION = 0, 2, 3, 4, 5, 6
RUN_ROOT_ENV = "MMCI_RUN_ROOT"


class CLIError(Exception):
    def __init__(self, code: int, kind: str, msg: str):
        super().__init__(msg)
        self.code, self.kind, self.msg = code, kind, msg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(EXIT_USAGE, "usage", message)


def _out_path(p: str) -> Path:
    path = Path(p)
    root = os.environ.get(RUN_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise CLIError(EXIT_USAGE, "usage", f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _train_config(args) -> TrainConfig:
    values = kv.parse_kv(Path(args.config).read_text(), args.config) if args.config else {}
    values.update(_overrides(args.set))
    if getattr(args, "seed", None) is not None:
        values["seed"] = str(args.seed)
    return kv.from_mapping(TrainConfig, values, args.config or "<defaults>")


def _echo(title: str, obj) -> None:
    print(f"# {title}")
    for line in kv.dump(obj).splitlines():
        print(f"#   {line}")


def _load_data(directory: str, need=("train", "val")) -> dict:
    d = Path(directory)
    if not d.is_dir():
        raise CLIError(EXIT_IO, "io", f"data directory {directory} not found")
    datasets = data_mod.load_splits(d)
    missing = [s for s in need if s not in datasets]
    if missing:
        raise CLIError(EXIT_IO, "io", f"data directory lacks split(s): {', '.join(missing)}")
    return datasets


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    values = kv.parse_kv(Path(args.spec).read_text(), args.spec) if args.spec else {}
    values.update(_overrides(args.set))
    if args.seed is not None:
        values["seed"] = str(args.seed)
    spec = kv.from_mapping(data_mod.GenSpec, values, args.spec or "<defaults>")
    _echo(f"generator spec (seed {spec.seed})", spec)
    out = _out_path(args.out)
    paths = data_mod.save_splits(data_mod.generate(spec), out)
    (out / "spec.cfg").write_text(kv.dump(spec))
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _train_config(args)
    _echo(f"train config (seed {cfg.seed})", cfg)
    datasets = _load_data(args.data)
    out = _out_path(args.out)
    report = train(datasets, cfg, out)
    print(f"best epoch {report.best_epoch} val_mae {report.best_val_mae:.6f}")
    print(out / "report.csv")
    return EXIT_OK


def _params_from(args):
    ckpt = Path(args.checkpoint) if args.checkpoint else Path(args.run) / "model.ckpt"
    if not ckpt.exists():
        raise CLIError(EXIT_IO, "io", f"checkpoint {ckpt} not found")
    params, _ = load_checkpoint(ckpt)
    return params


def cmd_eval(args) -> int:
    if not (args.run or args.checkpoint):
        raise CLIError(EXIT_USAGE, "usage", "eval needs --run or --checkpoint")
    params = _params_from(args)
    datasets = _load_data(args.data, need=(args.split,))
    ds = datasets[args.split]
    report = evaluate(evaluate_split(params, ds), ds.labels, args.equal_intervals)
    text = "split," + ",".join(MetricsReport.columns()) + "\n" + f"{args.split}," + report.csv_row() + "\n"
    if args.out:
        out = _out_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


ABLATE_COLUMNS = ["ablation", "lambda", "beta", "relation_sets", "best_epoch", "val_mae"] + [
    f"test_{c}" for c in MetricsReport.columns()
] + ["ood_mae"]


def cmd_ablate(args) -> int:
    base = _train_config(args)
    _echo(f"ablation base config (seed {base.seed})", base)
    datasets = _load_data(args.data)
    out = _out_path(args.out) if args.out else None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ABLATE_COLUMNS)
    for ablation in ABLATIONS:
        cfg = replace(base, ablation=ablation)
        run_dir = None if out is None else out / ablation
        rep = train(datasets, cfg, run_dir)
        row = [ablation, repr(rep.lam), repr(rep.beta), len(rep.params.relation_sets()),
               rep.best_epoch, repr(rep.best_val_mae)]
        split = datasets.get("test") or datasets["val"]
        row += evaluate(evaluate_split(rep.params, split), split.labels).row()
        if "ood" in datasets:
            from .metrics import mae

            row.append(repr(mae(evaluate_split(rep.params, datasets["ood"]), datasets["ood"].labels)))
        else:
            row.append("")
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    text = buf.getvalue()
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablate.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    res = check_full_loss(seed=args.seed, d=args.d, n=args.nodes, lam=args.lam, beta=args.beta,
                          ablation=args.ablation)
    print(f"# gradcheck seed={args.seed} d={args.d} nodes={args.nodes} lambda={args.lam} beta={args.beta}")
    print("param,max_rel_error")
    for name, err in res.per_param.items():
        print(f"{name},{err:.3e}")
    print(f"max_rel_error={res.max_rel_error:.3e} entries={res.n_checked} tol={args.tol:g}")
    if not res.passed(args.tol):
        raise CLIError(EXIT_NUMERIC, "numeric", f"gradient check failed: {res.max_rel_error:.3e} >= {args.tol:g}")
    return EXIT_OK


def cmd_backdoor(args) -> int:
    scm = causal.canned(args.scm, args.seed)
    rows = causal.demo(scm)
    print(causal.format_table(scm, rows))
    if args.csv:
        path = _out_path(args.csv)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(causal.demo_csv(rows))
    return EXIT_OK


def _parse_space(items: list[str]) -> dict[str, list]:
    base = TrainConfig()
    space = {}
    for item in items or []:
        if "=" not in item:
            raise CLIError(EXIT_USAGE, "usage", f"--grid expects key=v1,v2, got {item!r}")
        key, raw = item.split("=", 1)
        if not hasattr(base, key):
            raise CLIError(EXIT_CONFIG, "config", f"unknown config key {key!r}")
        kind = type(getattr(base, key))
        space[key] = [kind(v) for v in raw.split(",")]
    return space


def cmd_sweep(args) -> int:
    base = _train_config(args)
    space = _parse_space(args.grid)
    if not space:
        raise CLIError(EXIT_USAGE, "usage", "sweep needs at least one --grid key=v1,v2")
    points = random_points(space, args.random, args.sample_seed) if args.random else grid_points(space)
    _echo(f"sweep base config (seed {base.seed}), {len(points)} point(s)", base)
    datasets = _load_data(args.data)
    rows = sweep(points, datasets, base, _out_path(args.out) if args.out else None)
    sys.stdout.write(sweep_csv(rows))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    values = kv.parse_kv(Path(args.spec).read_text(), args.spec) if args.spec else {}
    spec = kv.from_mapping(data_mod.GenSpec, values, args.spec or "<defaults>")
    base = _train_config(args)
    _echo("benchmark generator spec", spec)
    _echo("benchmark train config", base)
    results = ood_benchmark(spec, base, range(args.seeds))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["seed", "variant", "train_mae", "test_mae", "ood_mae", "gap", "best_epoch"])
    for r in results:
        w.writerow([r.seed, r.variant, repr(r.train_mae), repr(r.test_mae), repr(r.ood_mae), repr(r.gap), r.best_epoch])
    s = summarize(results)
    print("# ordered per seed: " + " ".join("1" if o else "0" for o in s["ordered"]))
    print("# median ood mae: " + " ".join(f"{v}={s['median_ood_mae'][v]:.4f}" for v in VARIANTS))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="mmci", description="Multi-relational multimodal causal intervention toolkit",
                formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def config_flags(sp):
        sp.add_argument("--config", default=None, help="training config file (key = value)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")

    g = sub.add_parser("gen", help="generate a synthetic dataset", formatter_class=fmt)
    g.add_argument("--spec", default=None, help="generator spec file (key = value)")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a spec key")
    g.add_argument("--seed", type=int, default=None, help="override the spec seed")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train one model", formatter_class=fmt)
    t.add_argument("--data", required=True, help="dataset directory from `gen`")
    t.add_argument("--out", required=True, help="run directory")
    config_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on one split", formatter_class=fmt)
    e.add_argument("--data", required=True, help="dataset directory")
    e.add_argument("--run", default=None, help="run directory holding model.ckpt")
    e.add_argument("--checkpoint", default=None, help="explicit checkpoint path")
    e.add_argument("--split", default="test", choices=data_mod.SPLITS, help="split to score")
    e.add_argument("--out", default=None, help="write the metrics CSV here")
    e.add_argument("--equal-intervals", action="store_true",
                   help="Acc7 by seven equal-width bins instead of integer rounding")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="train the full model and the five ablations", formatter_class=fmt)
    a.add_argument("--data", required=True, help="dataset directory")
    a.add_argument("--out", default=None, help="directory for per-ablation runs and ablate.csv")
    config_flags(a)
    a.set_defaults(func=cmd_ablate)

    gc = sub.add_parser("gradcheck", help="finite-difference check of the full loss", formatter_class=fmt)
    gc.add_argument("--seed", type=int, default=0, help="toy sample / init seed")
    gc.add_argument("--d", type=int, default=16, help="latent dimension")
    gc.add_argument("--nodes", type=int, default=4, help="nodes per modality")
    gc.add_argument("--lam", type=float, default=0.2, help="uniformity loss weight")
    gc.add_argument("--beta", type=float, default=0.6, help="intervention loss weight")
    gc.add_argument("--ablation", default="none", choices=ABLATIONS, help="model variant")
    gc.add_argument("--tol", type=float, default=1e-4, help="max relative error")
    gc.set_defaults(func=cmd_gradcheck)

    b = sub.add_parser("backdoor-demo", help="exact backdoor adjustment on a demo SCM", formatter_class=fmt)
    b.add_argument("--scm", default="confounded", choices=sorted(causal.CANNED), help="demo model")
    b.add_argument("--seed", type=int, default=7, help="table seed")
    b.add_argument("--csv", default=None, help="also write the distributions as CSV")
    b.set_defaults(func=cmd_backdoor)

    s = sub.add_parser("sweep", help="grid or random hyper-parameter sweep", formatter_class=fmt)
    s.add_argument("--data", required=True, help="dataset directory")
    s.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2", help="search axis; repeatable")
    s.add_argument("--random", type=int, default=0, help="draw this many random points instead of the full grid")
    s.add_argument("--sample-seed", type=int, default=0, help="seed for --random")
    s.add_argument("--out", default=None, help="directory for runs and sweep.csv")
    config_flags(s)
    s.set_defaults(func=cmd_sweep)

    bm = sub.add_parser("benchmark", help="multi-seed OOD comparison: full vs no-kl vs lambda=beta=0",
                        formatter_class=fmt)
    bm.add_argument("--spec", default=None, help="generator spec file")
    bm.add_argument("--seeds", type=int, default=5, help="number of seeds")
    config_flags(bm)
    bm.set_defaults(func=cmd_benchmark)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CLIError as e:
        code, kind, msg = e.code, e.kind, e.msg
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        code, kind, msg = EXIT_IO, "io", str(e)
    except (data_mod.DatasetVersionError, CheckpointVersionError) as e:
        code, kind, msg = EXIT_VERSION, "version", str(e)
    except (data_mod.DatasetFormatError, CheckpointError) as e:
        code, kind, msg = EXIT_IO, "format", str(e)
    except (kv.ConfigFileError, ConfigError, LossConfigError, causal.SCMError, ValueError) as e:
        code, kind, msg = EXIT_CONFIG, "config", str(e)
    except (TrainingError, NumericError, ArithmeticError) as e:
        code, kind, msg = EXIT_NUMERIC, "numeric", str(e)
    print(f"mmci-error code={code} kind={kind} msg={' '.join(msg.split())}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
