"""Command-line entry point.

Subcommands::

    generate       write a synthetic train/val/test split
    train          train one model; writes checkpoint, history and report
    eval           evaluate a checkpoint on a split
    compare        soft / ce / la criteria over several seeds
    sweep-groups   group-count ablation over several seeds

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import SynthConfig, load_csv, write_splits
from .errors import CheckpointMismatchError, ConfigError, GroupDIRError
from .evaluation import full_report
from .grouping import ShotThresholds, group_counts
from .model import load_checkpoint, save_checkpoint
from .training import CRITERIA, TrainConfig, train

log = logging.getLogger("groupdir")

COMPARE_COLUMNS = ("criterion", "seed", "group_acc", "mean_absdiff", "mae_cls", "mae_gt", "gm_cls", "gm_gt")
SWEEP_COLUMNS = ("groups", "seed", "mae", "gm", "mae_gt", "gm_gt", "group_acc")
ABSDIFF_COLUMNS = ("criterion", "seed", "absdiff", "count")
VERSION = f"v{__version__}"


class UsageError(Exception):
    """Bad command-line input discovered after parsing."""


def _int_list(text: str) -> list[int]:
    try:
        items = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not items:
        raise argparse.ArgumentTypeError("list must not be empty")
    return items


def _criteria(text: str) -> list[str]:
    items = [t.strip().lower() for t in text.split(",") if t.strip()]
    bad = [t for t in items if t not in CRITERIA]
    if not items or bad:
        raise argparse.ArgumentTypeError(f"criteria must be drawn from {','.join(CRITERIA)}")
    return items


def _add_train_flags(p: argparse.ArgumentParser, with_seed: bool = True) -> None:
    d = TrainConfig()
    p.add_argument("--data", required=True, type=Path, help="directory written by 'generate'")
    p.add_argument("--groups", type=int, default=d.num_groups)
    p.add_argument("--beta", type=float, default=d.beta)
    p.add_argument("--temperature", type=float, default=d.temperature)
    p.add_argument("--lambda1", type=float, default=d.lambda1)
    p.add_argument("--lambda2", type=float, default=d.lambda2)
    p.add_argument("--criterion", choices=CRITERIA, default=d.criterion)
    p.add_argument("--tau", type=float, default=d.tau, help="logit-adjustment strength for --criterion la")
    p.add_argument("--lds", action="store_true", help="reweight the MSE term by smoothed label density")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--stage2-epochs", type=int, default=d.stage2_epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--hidden", type=_int_list, default=list(d.hidden_dims), help="e.g. 64,64")
    p.add_argument("--embed-dim", type=int, default=d.embed_dim)
    p.add_argument("--vanilla", action="store_true", help="MSE-only single-regressor baseline")
    if with_seed:
        p.add_argument("--seed", type=int, default=d.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupdir", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=VERSION)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = SynthConfig()
    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--seed", type=int, default=s.seed)
    g.add_argument("--y-min", type=float, default=s.y_min)
    g.add_argument("--y-max", type=float, default=s.y_max)
    g.add_argument("--skew-rate", type=float, default=s.skew_rate)
    g.add_argument("--feature-dim", type=int, default=s.feature_dim)
    g.add_argument("--num-fourier", type=int, default=s.num_fourier)
    g.add_argument("--noise-sigma", type=float, default=s.noise_sigma)
    g.add_argument("--n-train", type=int, default=s.n_train)
    g.add_argument("--n-val", type=int, default=s.n_val)
    g.add_argument("--n-test", type=int, default=s.n_test)

    t = sub.add_parser("train", help="train one model")
    _add_train_flags(t)
    t.add_argument("--out", required=True, type=Path)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--data", required=True, type=Path)
    e.add_argument("--checkpoint", required=True, type=Path)
    e.add_argument("--groups", type=int, default=None, help="expected group count (checked against the checkpoint)")
    e.add_argument("--split", choices=("train", "val", "test"), default="test")
    e.add_argument("--guidance", choices=("cls", "gt"), default="cls")
    e.add_argument("--out", type=Path, default=None, help="report JSON path")

    c = sub.add_parser("compare", help="compare classification criteria over seeds")
    _add_train_flags(c, with_seed=False)
    c.add_argument("--out", required=True, type=Path)
    c.add_argument("--seeds", type=_int_list, default=[1, 2, 3, 4, 5])
    c.add_argument("--criteria", type=_criteria, default=list(CRITERIA))

    w = sub.add_parser("sweep-groups", help="group-count ablation over seeds")
    _add_train_flags(w, with_seed=False)
    w.add_argument("--out", required=True, type=Path)
    w.add_argument("--seeds", type=_int_list, default=[1, 2, 3, 4, 5])
    w.add_argument("--group-list", type=_int_list, default=[2, 5, 10, 20])
    return parser


def _data_range(data_dir: Path) -> tuple[float, float]:
    cfg_path = data_dir / "config.json"
    if cfg_path.exists():
        cfg = SynthConfig.from_json(cfg_path.read_text())
        return cfg.y_min, cfg.y_max
    return TrainConfig.y_min, TrainConfig.y_max


def config_from_args(args, **overrides) -> TrainConfig:
    y_min, y_max = _data_range(args.data)
    cfg = dict(
        num_groups=args.groups, y_min=y_min, y_max=y_max, lambda1=args.lambda1, lambda2=args.lambda2,
        temperature=args.temperature, beta=args.beta, criterion=args.criterion, tau=args.tau,
        use_lds=args.lds, learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
        seed=getattr(args, "seed", 0), stage2_epochs=args.stage2_epochs, weight_decay=args.weight_decay,
        hidden_dims=tuple(args.hidden), embed_dim=args.embed_dim, vanilla=args.vanilla,
    )
    if args.vanilla:
        cfg.update(lambda2=0.0, stage2_epochs=0)
    cfg.update(overrides)
    return TrainConfig(**cfg)


def _load_split(data_dir: Path, name: str):
    return load_csv(data_dir / f"{name}.csv")


def _write_manifest(out: Path, config: dict, seeds: list[int], files: list[Path]) -> Path:
    path = out / "manifest.json"
    doc = {
        "version": VERSION,
        "output_dir": str(out),
        "seeds": seeds,
        "config": config,
        "files": sorted(f.name for f in files) + ["manifest.json"],
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _report_for(params, config: TrainConfig, data_dir: Path, split: str, guidance: str = "cls"):
    train_set = _load_split(data_dir, "train")
    scheme = config.scheme()
    return full_report(params, scheme, _load_split(data_dir, split), ShotThresholds(),
                       group_counts(train_set.y, scheme), guidance=guidance)


def run_single(config: TrainConfig, data_dir: Path):
    """Train one model on ``data_dir`` and return ``(params, history, cls report, gt report)``."""
    train_set = _load_split(data_dir, "train")
    val_set = _load_split(data_dir, "val")
    params, history = train(config, train_set, val_set)
    rep = _report_for(params, config, data_dir, "test", "cls")
    rep_gt = _report_for(params, config, data_dir, "test", "gt")
    return params, history, rep, rep_gt


def _summary_job(config_dict: dict, data_dir: str) -> dict:
    config = TrainConfig.from_dict(config_dict)
    _, _, rep, rep_gt = run_single(config, Path(data_dir))
    return {"cls": rep.to_dict(), "gt": rep_gt.to_dict(), "mean_absdiff": rep.mean_absdiff}


def _run_jobs(configs: list[TrainConfig], data_dir: Path) -> list[dict]:
    """Run independent trainings, in worker processes when GROUPDIR_THREADS > 1."""
    try:
        workers = int(os.environ.get("GROUPDIR_THREADS", "1"))
    except ValueError:
        raise UsageError("GROUPDIR_THREADS must be an integer") from None
    dicts = [c.to_dict() for c in configs]
    if workers <= 1 or len(configs) <= 1:
        return [_summary_job(d, str(data_dir)) for d in dicts]
    with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
        return list(pool.map(_summary_job, dicts, [str(data_dir)] * len(dicts)))


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _median_row(rows: list[dict], columns, fixed: dict) -> dict:
    out = dict(fixed)
    for c in columns:
        if c not in out:
            out[c] = float(np.median([r[c] for r in rows]))
    return out


def cmd_generate(args) -> int:
    cfg = SynthConfig(y_min=args.y_min, y_max=args.y_max, skew_rate=args.skew_rate,
                      feature_dim=args.feature_dim, num_fourier=args.num_fourier,
                      noise_sigma=args.noise_sigma, n_train=args.n_train, n_val=args.n_val,
                      n_test=args.n_test, seed=args.seed)
    files = write_splits(args.out, cfg)
    log.info("wrote %s", ", ".join(str(f) for f in files))
    return 0


def cmd_train(args) -> int:
    config = config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    params, history, rep, _ = run_single(config, args.data)
    files = [args.out / n for n in ("checkpoint.json", "history.csv", "report.json", "report.txt")]
    save_checkpoint(files[0], params, config.to_dict())
    history.to_csv(files[1])
    files[2].write_text(rep.to_json())
    files[3].write_text(rep.to_text())
    _write_manifest(args.out, config.to_dict(), [config.seed], files)
    print(rep.to_text(), end="")
    return 0


def cmd_eval(args) -> int:
    params, cfg_dict = load_checkpoint(args.checkpoint)
    config = TrainConfig.from_dict(cfg_dict)
    if args.groups is not None and args.groups != config.num_groups:
        raise CheckpointMismatchError(
            f"checkpoint was trained with {config.num_groups} groups, --groups says {args.groups}")
    rep = _report_for(params, config, args.data, args.split, args.guidance)
    if args.out is not None:
        args.out.write_text(rep.to_json())
    print(rep.to_text(), end="")
    return 0


def cmd_compare(args) -> int:
    base = config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    jobs = [(c, s) for c in args.criteria for s in args.seeds]
    results = _run_jobs([replace(base, criterion=c, seed=s) for c, s in jobs], args.data)
    rows, hist_rows = [], []
    for (crit, seed), res in zip(jobs, results):
        cls, gt = res["cls"], res["gt"]
        rows.append({"criterion": crit, "seed": seed, "group_acc": cls["group_accuracy"],
                     "mean_absdiff": res["mean_absdiff"], "mae_cls": cls["mae"], "mae_gt": gt["mae"],
                     "gm_cls": cls["gm"], "gm_gt": gt["gm"]})
        for k, n in enumerate(cls["absdiff_histogram"]):
            hist_rows.append({"criterion": crit, "seed": seed, "absdiff": k, "count": n})
    table = []
    for crit in args.criteria:
        mine = [r for r in rows if r["criterion"] == crit]
        table += mine + [_median_row(mine, COMPARE_COLUMNS, {"criterion": crit, "seed": "median"})]
    files = [args.out / "compare.csv", args.out / "absdiff.csv"]
    _write_csv(files[0], COMPARE_COLUMNS, table)
    _write_csv(files[1], ABSDIFF_COLUMNS, hist_rows)
    _write_manifest(args.out, base.to_dict(), args.seeds, files)
    return 0


def cmd_sweep_groups(args) -> int:
    for g in args.group_list:
        if g < 2:
            raise ConfigError(f"group counts must be >= 2, got {g}")
    base = config_from_args(args)
    args.out.mkdir(parents=True, exist_ok=True)
    jobs = [(g, s) for g in args.group_list for s in args.seeds]
    results = _run_jobs([replace(base, num_groups=g, seed=s) for g, s in jobs], args.data)
    rows = [{"groups": g, "seed": s, "mae": r["cls"]["mae"], "gm": r["cls"]["gm"], "mae_gt": r["gt"]["mae"],
             "gm_gt": r["gt"]["gm"], "group_acc": r["cls"]["group_accuracy"]}
            for (g, s), r in zip(jobs, results)]
    table = []
    for g in args.group_list:
        mine = [r for r in rows if r["groups"] == g]
        table += mine + [_median_row(mine, SWEEP_COLUMNS, {"groups": g, "seed": "median"})]
    files = [args.out / "sweep.csv"]
    _write_csv(files[0], SWEEP_COLUMNS, table)
    _write_manifest(args.out, base.to_dict(), args.seeds, files)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "sweep-groups": cmd_sweep_groups,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"groupdir {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (GroupDIRError, OSError, ValueError) as exc:
        print(f"groupdir {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
