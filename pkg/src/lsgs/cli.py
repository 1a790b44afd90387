"""Command-line interface: ``lsgs {distort,weigh,sample,toy,plot}``.

Exit codes: 0 success, 1 data or numerical error, 2 usage or configuration
error.
"""

import argparse
import sys

import numpy as np

from .distortion import aggregate_distortions, stats_to_table, table_to_stats
from .distribution import DistributionConfig, build_distribution
from .exceptions import ConfigurationError, LSGSError
from .kernel import KernelConfig
from .latent_io import (
    read_distortion_csv,
    read_distribution_csv,
    read_latent_dump,
    write_distortion_csv,
    write_distribution_csv,
)
from .plotting import write_distribution_svg
from .sampler import ScenarioSampler

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


def cmd_distort(args):
    stats = aggregate_distortions(read_latent_dump(args.latents))
    write_distortion_csv(stats_to_table(stats), args.out)


def cmd_weigh(args):
    kcfg = KernelConfig(args.sigma, args.lam)
    dcfg = DistributionConfig(args.tau, args.gamma)
    stats = table_to_stats(read_distortion_csv(args.distortions))
    dist = build_distribution(stats.eta, kcfg, dcfg, space=stats.space)
    write_distribution_csv(dist, args.out)


def cmd_sample(args):
    if args.n < 0:
        raise ConfigurationError(f"--n must be >= 0, got {args.n}")
    record = read_distribution_csv(args.dist)
    total = float(np.sum(record.p))
    if abs(total - 1.0) > 1e-6:
        raise LSGSError(f"probabilities sum to {total!r}, not 1 within 1e-6")
    sampler = ScenarioSampler(record.space, record.p, args.seed, atol=1e-6)
    lines = [str(sampler.draw()) for _ in range(args.n)]
    sys.stdout.write("".join(line + "\n" for line in lines))


def cmd_toy(args):
    from .toy import TrainConfig, run_experiment, write_report

    config = TrainConfig(
        pretrain_epochs=args.pretrain_epochs, finetune_epochs=args.finetune_epochs, seed=args.seed
    )
    if args.n_train < 1 or args.n_eval < 1:
        raise ConfigurationError("--n-train and --n-eval must be at least 1")
    report = run_experiment(config, args.seed, args.n_train, args.n_eval)
    write_report(report, args.out)
    for arm, iou, f1 in report.summary_rows():
        print(f"{arm}: mean IoU {iou:.4f}, mean F1 {f1:.4f}")


def cmd_plot(args):
    record = read_distribution_csv(args.dist)
    write_distribution_svg(record.space.labels, record.p, args.out)


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lsgs", description="Latent-space guided scenario sampling."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distort", help="per-scenario distortion from an LSGS latent dump")
    p.add_argument("--latents", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("weigh", help="scenario distribution from a distortion CSV")
    p.add_argument("--distortions", required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_weigh)

    p = sub.add_parser("sample", help="draw scenario masks from a distribution CSV")
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("toy", help="run the two-arm toy experiment")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--n-train", type=int, default=512)
    p.add_argument("--n-eval", type=int, default=256)
    p.add_argument("--pretrain-epochs", type=int, default=70)
    p.add_argument("--finetune-epochs", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("plot", help="SVG bar chart of a distribution CSV")
    p.add_argument("--dist", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    try:
        args.func(args)
    except ConfigurationError as exc:
        print(f"lsgs {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LSGSError, OSError) as exc:
        print(f"lsgs {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
