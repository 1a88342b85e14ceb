#!/usr/bin/env python
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING

from rich.console import Console
from rich.markup import escape

import actkit
from actkit._utils import STREAM_DIAGNOSTICS, STREAM_PROBE, configure_logging, make_rng
from actkit.act_core import train
from actkit.config import load_config
from actkit.diagnostics import geometric_grid, run_diagnostics, write_alignment_csv
from actkit.downstream import evaluate_downstream, fit_linear_probe, write_report
from actkit.encoder import load_checkpoint, save_checkpoint
from actkit.exceptions import ACTError, ConfigurationError, DataError, InvariantViolationError, NumericalError
from actkit.synthgen import generate_source, generate_target, read_dataset, write_dataset

if TYPE_CHECKING:
    from collections.abc import Sequence

    from actkit.config import ExperimentConfig

# this_file: src/actkit/cli.py
"""Command-line experiment runner.

Exit codes: 0 success, 2 configuration, 3 numerical failure, 4 data or
protocol error, 5 a checked bound was violated.
"""

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_DATA = 4
EXIT_INVARIANT = 5

SOURCE_FILE = "source.bin"
TARGET_FILE = "target.bin"
TEST_FILE = "test.bin"
CHECKPOINT_FILE = "encoder.ckpt"
TRACE_FILE = "trace.csv"
REPORT_FILE = "evaluation.csv"
DIAGNOSTICS_FILE = "diagnostics.txt"
ALIGNMENT_FILE = "alignment.csv"

console = Console()
err_console = Console(stderr=True)


def _out_dir(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    return Path(args.out) if args.out else config.output_path


def _checkpoint(args: argparse.Namespace, out: Path) -> Path:
    path = Path(args.checkpoint) if args.checkpoint else out / CHECKPOINT_FILE
    if not path.is_file():
        msg = f"checkpoint not found: {path}"
        raise DataError(msg)
    return path


def _require(path: Path) -> Path:
    if not path.is_file():
        msg = f"missing dataset {path}; run 'act generate' first"
        raise DataError(msg)
    return path


def cmd_generate(args: argparse.Namespace) -> int:
    """Write source, labeled target and test datasets."""
    config = load_config(args.config)
    out = _out_dir(args, config)
    synthetic = config.synthetic()
    source = generate_source(synthetic)
    target = generate_target(synthetic)
    paths = [
        write_dataset(out / SOURCE_FILE, source.samples, source.labels, source.n_classes),
        write_dataset(out / TARGET_FILE, target.labeled.samples, target.labeled.labels, target.labeled.n_classes),
        write_dataset(out / TEST_FILE, target.test.samples, target.test.labels, target.test.n_classes),
    ]
    for path in paths:
        console.print(str(path))
    return EXIT_OK


def cmd_pretrain(args: argparse.Namespace) -> int:
    """Train an encoder on the unlabeled source data."""
    config = load_config(args.config)
    out = _out_dir(args, config)
    source = read_dataset(_require(out / SOURCE_FILE))
    result = train(
        source.samples,
        config.augmentation_set(),
        config.train_config(),
        config.initial_encoder(),
        checkpoint_dir=out / "checkpoints",
    )
    ckpt = save_checkpoint(result.params, out / CHECKPOINT_FILE)
    trace = result.trace.to_csv(out / TRACE_FILE)
    if len(result.trace):
        last = result.trace[-1]
        console.print(f"final loss {last.l_align + last.l_div:.6g} (align {last.l_align:.6g}, div {last.l_div:.6g})")
    console.print(str(ckpt))
    console.print(str(trace))
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Few-shot probe and k-NN errors on the target test set."""
    config = load_config(args.config)
    out = _out_dir(args, config)
    ckpt = _checkpoint(args, out)
    target = read_dataset(_require(out / TARGET_FILE)).labeled()
    test = read_dataset(_require(out / TEST_FILE)).labeled()
    if config.knn_k > len(target):
        msg = f"knn_k={config.knn_k} exceeds the {len(target)} labeled target samples"
        raise DataError(msg)
    rows = evaluate_downstream(
        load_checkpoint(ckpt),
        target,
        test,
        config.augmentation_set(),
        make_rng(config.seed, STREAM_PROBE),
        knn_k=config.knn_k,
        project=config.project,
    )
    path = write_report(rows, out / REPORT_FILE)
    for row in rows:
        console.print(f"{row.protocol:>5}  error {row.error:.4f}  accuracy {row.accuracy:.4f}")
    console.print(str(path))
    return EXIT_OK


def cmd_diagnose(args: argparse.Namespace) -> int:
    """Certificate quantities and the alignment bound over an ε grid."""
    config = load_config(args.config)
    out = _out_dir(args, config)
    ckpt = _checkpoint(args, out)
    source = read_dataset(_require(out / SOURCE_FILE)).labeled()
    labeled = read_dataset(_require(out / TARGET_FILE)).labeled()
    test = read_dataset(_require(out / TEST_FILE)).labeled()
    f = load_checkpoint(ckpt)
    aug_set = config.augmentation_set()
    probe = fit_linear_probe(f, labeled, aug_set, make_rng(config.seed, STREAM_PROBE), project=config.project)
    report = run_diagnostics(
        f,
        source,
        test,
        probe,
        aug_set,
        config.epsilon,
        geometric_grid(config.epsilon_min, config.epsilon_max, config.epsilon_count),
        make_rng(config.seed, STREAM_DIAGNOSTICS),
        quality_per_class=config.quality_per_class,
        trim_quantile=config.trim_quantile,
        project=config.project,
    )
    console.print(str(report.write(out / DIAGNOSTICS_FILE)))
    console.print(str(write_alignment_csv(report.alignment, out / ALIGNMENT_FILE)))
    console.print(
        f"R_s {report.R_s:.4f}  R_t {report.R_t:.4f}  theta {report.theta:.4f}  "
        f"rho_hat {report.rho_hat:.4f} (baseline {report.wasserstein_baseline:.4f})"
    )
    if not report.alignment_bound_ok:
        worst = min(report.alignment, key=lambda r: r.slack)
        msg = f"alignment bound violated at epsilon={worst.epsilon:.6g} (slack {worst.slack:.3g})"
        raise InvariantViolationError(msg)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "pretrain": cmd_pretrain,
    "evaluate": cmd_evaluate,
    "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="act",
        description="actkit - adversarial contrastive pretraining experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  act generate --config configs/default.conf
  act pretrain --config configs/default.conf
  act evaluate --config configs/default.conf
  act diagnose --config configs/default.conf --checkpoint runs/encoder.ckpt
        """,
    )
    parser.add_argument("--version", action="version", version=f"actkit {actkit.__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debug messages")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")
    for name, func in COMMANDS.items():
        sub = subparsers.add_parser(name, help=func.__doc__)
        sub.add_argument("--config", required=True, help="Experiment file (key = value lines)")
        sub.add_argument("--out", help="Output directory (default: output_dir from the config)")
        if name in ("evaluate", "diagnose"):
            sub.add_argument("--checkpoint", help="Encoder checkpoint (default: <out>/encoder.ckpt)")
        else:
            sub.set_defaults(checkpoint=None)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run one command and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    configure_logging(verbose=args.verbose)

    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        err_console.print(f"[red]configuration error:[/red] {escape(str(e))}", markup=True, highlight=False)
        return EXIT_CONFIG
    except NumericalError as e:
        err_console.print(f"[red]numerical failure:[/red] {escape(str(e))}", markup=True, highlight=False)
        if e.record:
            err_console.print(e.record)
        return EXIT_NUMERIC
    except DataError as e:
        err_console.print(f"[red]data error:[/red] {escape(str(e))}", markup=True, highlight=False)
        return EXIT_DATA
    except InvariantViolationError as e:
        err_console.print(f"[red]invariant violated:[/red] {escape(str(e))}", markup=True, highlight=False)
        return EXIT_INVARIANT
    except ACTError as e:
        err_console.print(f"[red]error:[/red] {escape(str(e))}", markup=True, highlight=False)
        return EXIT_DATA


def main() -> None:
    """Console-script entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
