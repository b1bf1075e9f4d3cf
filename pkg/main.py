"""
Main entry point for the AXUNet segmentation toolkit.

Sub-commands: synth, preprocess, train, eval, predict, gradcam.
Errors are reported as one stderr line "AXUNET-E<code> <ErrorClass>: <message>"
and the matching exit code (2 config, 3 data, 4 numeric, 1 unexpected).
"""

import argparse
import io
import sys
from pathlib import Path
from typing import Optional, Sequence, Tuple

# Fix Windows console encoding for the box-drawing tables
if sys.platform == "win32":
    sys.stdout = io.TextIOWrapper(sys.stdout.buffer, encoding="utf-8")
    sys.stderr = io.TextIOWrapper(sys.stderr.buffer, encoding="utf-8")

from models.config_models import RunConfig
from models.data_models import REGIONS
from pipeline.synthetic import synth_generate
from tools.gradcam import LAYER_ALIASES
from utils.errors import AXUNetError, ConfigError
from utils.logger import LEVELS, set_level, setup_logger
from workflows.preprocess_workflow import preprocess_dataset
from workflows.training_workflow import run_evaluation, run_gradcam, run_prediction, run_training

logger = setup_logger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors raised as ConfigError instead of printed."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(f"{self.prog}: {message}")


def parse_dims(text: str) -> Tuple[int, int, int]:
    """Parse "HxWxD" into three positive ints."""
    parts = text.lower().split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError as e:
        raise ConfigError(f"dims {text!r} must look like HxWxD") from e
    if len(dims) != 3 or min(dims) < 1:
        raise ConfigError(f"dims {text!r} must be three positive integers HxWxD")
    return dims  # type: ignore[return-value]


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ConfigError(f"output directory {out} is not empty (use --force to overwrite)")
    stats = synth_generate(args.cases, parse_dims(args.dims), args.seed, out)

    print("\nSYNTHETIC DATASET")
    print("┌" + "─" * 76 + "┐")
    print(f"│ {'Case':<10} │ {'Shape':<13} │ {'PE':>9} │ {'NCR':>9} │ {'ET':>9} │ {'Central %':>9} │")
    print("├" + "─" * 76 + "┤")
    for s in stats:
        shape = "x".join(str(v) for v in s.shape)
        voxels = s.label_voxels
        print(
            f"│ {s.case_id:<10} │ {shape:<13} │ {voxels['PE']:>9} │ {voxels['NCR']:>9} │ "
            f"{voxels['ET']:>9} │ {100 * s.central_tumor_fraction:>9.2f} │"
        )
    print("└" + "─" * 76 + "┘")
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config)
    manifest = preprocess_dataset(config.data, config.train.seed)
    print("\nSLICE COUNTS")
    for name in ("train", "val", "test"):
        print(f"  {name:<5}: {len(manifest.partition(name)):>5} cases  {manifest.slice_counts.get(name, 0):>7} slices")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config)
    checkpoint = run_training(config)
    print(f"\nBest validation Dice {checkpoint.best_val_dice:.4f} at epoch {checkpoint.epoch + 1}")
    print(f"Checkpoint: {config.io.checkpoint_dir}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config) if args.config else None
    report = run_evaluation(args.checkpoint, args.split, config)
    print("\n" + report.to_table())
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    masks, preview = run_prediction(args.checkpoint, args.input, args.out)
    for index, mask in enumerate(masks):
        counts = mask.counts()
        print(f"slice {index}: " + "  ".join(f"{r}={counts[r]}" for r in REGIONS))
    print(f"Masks: {args.out}\nPreview: {preview}")
    return 0


def cmd_gradcam(args: argparse.Namespace) -> int:
    heatmap = run_gradcam(args.checkpoint, args.input, args.layer, args.region, args.out)
    print(f"Grad-CAM ({heatmap.region} @ {heatmap.layer}) written to {args.out}")
    return 0


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="axunet", description="AXUNet brain tumour segmentation toolkit")
    parser.add_argument("--log-level", type=str.upper, choices=LEVELS, help="Override AXUNET_LOG_LEVEL for this run")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate a synthetic dataset")
    p.add_argument("--out", required=True, help="Dataset root to write")
    p.add_argument("--cases", type=int, default=4, help="Number of cases")
    p.add_argument("--dims", default="240x240x155", help="Volume size HxWxD")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="Write into a non-empty directory")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("preprocess", help="Split cases and build the slice cache")
    p.add_argument("--config", required=True, help="Run config JSON")
    p.set_defaults(handler=cmd_preprocess)

    p = sub.add_parser("train", help="Train and keep the best-on-validation checkpoint")
    p.add_argument("--config", required=True, help="Run config JSON")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a checkpoint on a partition")
    p.add_argument("--checkpoint", required=True, help="Checkpoint directory")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--config", help="Run config JSON; its model section must match the checkpoint")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="Predict region masks for AXTN slice(s)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="AXTN image [3,H,W] or [N,3,H,W]")
    p.add_argument("--out", required=True, help="Output AXTN mask path")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("gradcam", help="Grad-CAM heatmap overlay as PPM")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="AXTN image [3,H,W]")
    p.add_argument("--layer", default="final", help=f"One of {sorted(LAYER_ALIASES)} or a dotted module path")
    p.add_argument("--region", default="WT", choices=list(REGIONS))
    p.add_argument("--out", required=True, help="Output PPM path")
    p.set_defaults(handler=cmd_gradcam)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        if args.log_level:
            set_level(args.log_level)
        return args.handler(args)
    except AXUNetError as e:
        print(e.one_line(), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected failure: {e}")
        message = " ".join(str(e).split())
        print(f"AXUNET-E1 {type(e).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
