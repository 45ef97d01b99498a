"""Command-line surface: synth -> prepare -> train -> evaluate, plus a
gradient checker.  Every command is deterministic given its config and
seeds; reruns produce byte-identical outputs.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import cohort
from .bptt import gradient_check
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DataError, DivergenceError, PipelineError
from .experiments import STRATEGIES, evaluate_params
from .lstm import init_parameters, load_checkpoint, save_checkpoint
from .masked_data import make_batch
from .optimizer import TrainConfig, write_history

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4


def cmd_synth(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    table = cohort.synthesize(config.synth)
    cohort.write_csv(table, args.out)
    print(f"wrote {len(table.rows)} visit rows to {args.out}")
    return 0


def cmd_prepare(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    table = cohort.load_csv(
        args.data, label_set=config.labels, label_merge=config.label_merge
    )
    prepared = cohort.preprocess(table, config.prep)
    cohort.write_prepared(args.out, prepared)
    print(
        f"prepared splits: train={prepared.train.batch_size} "
        f"val={prepared.val.batch_size} test={prepared.test.batch_size} "
        f"-> {args.out}"
    )
    return 0


def _train_config(config: ExperimentConfig, args: argparse.Namespace) -> TrainConfig:
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.seed is not None:
        overrides["init_seed"] = args.seed
    if not overrides:
        return config.train
    base = config.train
    return TrainConfig(
        epochs=overrides.get("epochs", base.epochs),
        learning_rate=base.learning_rate,
        momentum=base.momentum,
        weight_decay=base.weight_decay,
        init_seed=overrides.get("init_seed", base.init_seed),
        init_scale=base.init_scale,
        eval_every=base.eval_every,
    )


def cmd_train(args: argparse.Namespace) -> int:
    from .experiments import train_strategy

    config = load_config(args.config)
    strategy = args.missing_strategy or config.missing_strategy
    prepared = cohort.load_prepared(args.prepared)
    train_config = _train_config(config, args)
    if train_config.epochs == 0:
        params = init_parameters(
            prepared.train.n_inputs,
            prepared.train.n_targets,
            seed=train_config.init_seed,
            scale=train_config.init_scale,
        )
        history = []
    else:
        params, history = train_strategy(prepared, strategy, train_config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.txt", params)
    write_history(out / "history.log", history)
    final_loss = history[-1].loss if history else float("nan")
    print(
        f"trained strategy={strategy} epochs={train_config.epochs} "
        f"final_loss={final_loss!r} -> {out}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    strategy = args.missing_strategy or config.missing_strategy
    prepared = cohort.load_prepared(args.prepared)
    params = load_checkpoint(args.checkpoint)
    result = evaluate_params(
        params, prepared, args.split, strategy, lda_ridge=config.lda_ridge
    )
    lines = []
    for name, value in zip(prepared.biomarkers, result.mae_per_node):
        lines.append(f"mae\t{name}\t{value!r}")
    for key, value in result.auc.items():
        lines.append(f"auc\t{key}\t{value!r}")
    report = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(report, encoding="utf-8")
    else:
        sys.stdout.write(report)
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    inputs = rng.uniform(-1, 1, (args.j, args.t, args.n))
    targets = rng.uniform(-1, 1, (args.j, args.t, args.m))
    input_masks = rng.random((args.j, args.t, args.n)) >= args.missing_rate
    target_masks = rng.random((args.j, args.t, args.m)) >= args.missing_rate
    # Keep every subject constructible: force one available input cell.
    for j in range(args.j):
        if not input_masks[j].any():
            input_masks[j, 0, 0] = True
    batch = make_batch(
        [f"g{j}" for j in range(args.j)], inputs, input_masks, targets, target_masks
    )
    params = init_parameters(args.n, args.m, seed=args.seed + 1, scale=0.05)
    report = gradient_check(
        params, batch, fd_step=args.fd_step, tolerance=args.tolerance
    )
    for name, err in report.max_rel_error.items():
        status = "PASS" if err <= args.tolerance else "FAIL"
        print(f"{status}\t{name}\t{err:.3e}")
    return 0 if report.passed else EXIT_DIVERGENCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lstmdpm",
        description=(
            "Sequence learning for longitudinal cohorts with built-in "
            "missing-value handling."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="preprocess a cohort CSV into splits")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train on a prepared directory")
    p.add_argument("--config", required=True)
    p.add_argument("--prepared", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--missing-strategy", choices=STRATEGIES)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a split")
    p.add_argument("--config", required=True)
    p.add_argument("--prepared", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--missing-strategy", choices=STRATEGIES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--t", type=int, default=5)
    p.add_argument("--j", type=int, default=4)
    p.add_argument("--missing-rate", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fd-step", type=float, default=1e-6)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
