"""Command-line entry points.

Subcommands:
  train           train a preset under a chosen activation / noise regime
  dump-q-samples  emit sampled q values as one-column CSV
  gradcheck       run the finite-difference suite, print max relative error
  make-digits-idx build the offline handwritten-digits IDX files
"""
from __future__ import annotations

import argparse
import sys

from .activations import ActivationKind, VALID_TAGS
from .harness import ExperimentConfig, TrainConfig, run_experiment
from .sampling import RngState, sample_q_tensor


def _add_train(sub):
    p = sub.add_parser("train", help="run a training experiment and write metrics CSVs")
    p.add_argument("--preset", choices=("mnist_mlp", "mnist_cnn"), default="mnist_mlp")
    p.add_argument("--activation", choices=VALID_TAGS, default="tanh")
    p.add_argument("--q-mode", choices=("baseline", "fixed", "annealed", "limit"),
                   default="baseline")
    p.add_argument("--lambda0", type=float, default=0.02)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--phi", type=float, default=1e-3)
    p.add_argument("--alpha", type=float, default=1.0, help="elu alpha")
    p.add_argument("--dropout", choices=("on", "off"), default="off")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subset", type=int, default=10000,
                   help="seeded-shuffle truncation of each split; 0 keeps everything")
    p.add_argument("--data", required=True, help="directory with the four MNIST IDX files")
    p.add_argument("--out", required=True, help="output directory for CSVs")
    p.add_argument("--full", action="store_true",
                   help="full profile: no subset, 100 epochs, 10 runs")
    p.add_argument("--eval-samples", type=int, default=1)


def _cmd_train(args) -> int:
    epochs, runs, sub_n = args.epochs, args.runs, args.subset
    if args.full:
        epochs, runs, sub_n = 100, 10, 0
    cfg = ExperimentConfig(
        preset=args.preset,
        activation=ActivationKind(args.activation, args.alpha),
        q_mode=args.q_mode,
        lambda0=args.lambda0,
        gamma=args.gamma,
        phi=args.phi,
        dropout=args.dropout == "on",
        train=TrainConfig(
            epochs=epochs, batch_size=args.batch, lr0=args.lr,
            seed=args.seed, runs=runs,
        ),
        data_dir=args.data,
        subset_train=sub_n if sub_n > 0 else None,
        subset_test=sub_n if sub_n > 0 else None,
        out_dir=args.out,
        eval_samples=args.eval_samples,
    )
    records = run_experiment(cfg)
    last_epoch = max((r.epoch for r in records), default=0)
    finals = [r.test_accuracy for r in records if r.epoch == last_epoch]
    if finals:
        print(f"final test accuracy over {len(finals)} run(s): "
              f"mean {sum(finals) / len(finals):.4f}")
    print(f"metrics written to {args.out}")
    return 0


def _add_dump(sub):
    p = sub.add_parser("dump-q-samples", help="sample q values and print/write one-column CSV")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--phi", type=float, default=1e-3)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="-", help="output path, '-' for stdout")


def _cmd_dump(args) -> int:
    q = sample_q_tensor(args.lam, args.phi, (args.n,), RngState(args.seed))
    lines = ["q"] + [f"{v:.17g}" for v in q]
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", newline="") as f:
            f.write(text)
    return 0


def _cmd_gradcheck(_args) -> int:
    from .gradcheck import REL_TOL, max_error, run_suite

    results = run_suite()
    for name in sorted(results):
        print(f"{name:28s} {results[name]:.3e}")
    worst = max_error(results)
    print(f"{'max relative error':28s} {worst:.3e}  (tolerance {REL_TOL:g})")
    return 0 if worst <= REL_TOL else 1


def _add_digits(sub):
    p = sub.add_parser("make-digits-idx",
                       help="build offline IDX files from the bundled digits set")
    p.add_argument("--out", required=True)
    p.add_argument("--train-count", type=int, default=10000)
    p.add_argument("--test-count", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)


def _cmd_digits(args) -> int:
    from .offline_digits import build_offline_digits

    paths = build_offline_digits(args.out, args.train_count, args.test_count, args.seed)
    for k, v in sorted(paths.items()):
        print(f"{k}: {v}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qneurons",
        description="stochastic q-activation networks: training harness and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_dump(sub)
    sub.add_parser("gradcheck", help="finite-difference check of every layer's backward pass")
    _add_digits(sub)
    args = parser.parse_args(argv)
    if args.command == "train":
        return _cmd_train(args)
    if args.command == "dump-q-samples":
        return _cmd_dump(args)
    if args.command == "gradcheck":
        return _cmd_gradcheck(args)
    return _cmd_digits(args)


if __name__ == "__main__":
    raise SystemExit(main())
