"""``dmrl <mode> --config <path> [--seed N] [--out DIR] [--checkpoint PATH]``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Sequence

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, Hyperparams, load_config
from .evaluation import eval_adaptation, summarize
from .trainer import TRACE_HEADER, train_dmrl, train_mb_baseline, train_mf_baseline

TRAIN_MODES = ("dmrl", "mf", "mb")
EVAL_MODES = ("eval-static", "eval-sine")
MODES = TRAIN_MODES + EVAL_MODES + ("selftest",)
EVAL_HEADER = ("trial", "rollout_index", "return", "scenario")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmrl", description="Double meta-RL on a windy lander.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", type=Path, help="flat JSON hyper-parameter file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--checkpoint", type=Path, help="checkpoint to evaluate (eval modes) or write (training modes)")
    return p


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _print_summary(title: str, fields: dict) -> None:
    print(title)
    for key, value in fields.items():
        print(f"  {key:<32} {value:.4f}" if isinstance(value, float) else f"  {key:<32} {value}")


def run_training(mode: str, hp: Hyperparams, seed: int, out: Path, checkpoint: Path | None) -> None:
    trainer = {"dmrl": train_dmrl, "mf": train_mf_baseline, "mb": train_mb_baseline}[mode]
    result = trainer(hp, seed)
    write_csv(out / f"trace_{mode}_seed{seed}.csv", TRACE_HEADER, [rec.row() for rec in result.trace])
    artifact = result.policy if result.policy is not None else result.model
    save_checkpoint(checkpoint or out / f"{mode}_seed{seed}.json", artifact)
    if mode == "dmrl" and result.model is not None:
        save_checkpoint(out / f"{mode}_seed{seed}_model.json", result.model)
    s = summarize(result.trace, hp)
    _print_summary(
        f"{mode} seed={seed}",
        {
            "return mean after convergence": s["return_mean_after_convergence"],
            "batches to converge": s["batches_to_converge"],
            "env batches to converge": s["env_batches_to_converge"],
        },
    )


def run_eval(mode: str, hp: Hyperparams, seed: int, out: Path, checkpoint: Path | None) -> None:
    if checkpoint is None:
        raise UsageError(f"{mode} needs --checkpoint")
    artifact = load_checkpoint(checkpoint)
    scenario = mode.split("-", 1)[1]
    report = eval_adaptation(artifact, scenario, hp, seed)
    write_csv(out / f"eval_{scenario}_seed{seed}.csv", EVAL_HEADER, [(t, i, repr(r), s) for t, i, r, s in report.rows()])
    mean = report.mean
    idx = report.converge_index(hp.return_window, hp.return_tol)
    _print_summary(
        f"{mode} seed={seed} trials={hp.mc_trials}",
        {
            "return mean after convergence": float(mean[idx:].mean()),
            "batches to converge": idx,
            "env batches to converge": (idx + 1) * hp.eval_rollouts,
            "zero-shot return": float(mean[0]),
            "rollouts used": report.rollouts_used,
        },
    )


def run_selftest() -> bool:
    from . import selftest

    results = selftest.run_all()
    for r in results:
        print(r.line())
    return all(r.passed for r in results)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.mode == "selftest":
            return EXIT_OK if run_selftest() else EXIT_RUNTIME
        if args.config is None:
            raise UsageError(f"{args.mode} needs --config")
        hp = load_config(args.config)
        if args.mode in TRAIN_MODES:
            run_training(args.mode, hp, args.seed, args.out, args.checkpoint)
        else:
            run_eval(args.mode, hp, args.seed, args.out, args.checkpoint)
    except (UsageError, ConfigError, CheckpointError) as exc:
        print(f"dmrl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"dmrl: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
