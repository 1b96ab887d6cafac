#!/usr/bin/env python3
"""
Incomplete Multimodal Fusion - Main Entry Point

This script serves as the main entry point for the toolkit. It generates the
synthetic dataset, pretrains and trains models, evaluates them over every
modality subset, runs the ablation matrix and draws the result plots.
"""

import argparse
import logging
import sys
import typing
from pathlib import Path

import config
from src.utils.errors import ContainerError, ImfusionError
from src.utils.run_config import config_fields, load_config

COMMANDS = ["synth", "pretrain", "train", "eval", "ablate", "plot", "test"]


def run_test():
    """Run the quick test."""
    sys.path.append(str(config.TESTS_DIR))
    from quick_test import quick_test
    return quick_test()


def _flag_type(annotation):
    """argparse converter for a config field; list/tuple fields take comma-separated values."""
    origin = typing.get_origin(annotation)
    args = [a for a in typing.get_args(annotation) if a is not type(None)]
    if origin is typing.Union and len(args) == 1:
        return _flag_type(args[0])
    if origin in (list, tuple):
        item = _flag_type(args[0]) if args else str
        return lambda text: [item(part) for part in text.split(",") if part]
    if annotation is bool:
        return lambda text: text.lower() in ("1", "true", "yes", "on")
    if annotation in (int, float):
        return annotation
    return str


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Incomplete Multimodal Fusion",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py synth                                 # Generate the synthetic dataset
  python main.py pretrain --pretrain.lambda_2 0        # Generative-only pretraining
  python main.py pretrain --resume                     # Continue from the last checkpoint
  python main.py train --downstream.no_random true     # Train without random modality combination
  python main.py eval --checkpoint runs/train/model    # Evaluate over every modality subset
  python main.py ablate --config run.json              # Run the ablation matrix
  python main.py plot runs/ablate/eval.tsv             # Draw the degradation heatmap
  python main.py test                                  # Run quick test
        """
    )

    parser.add_argument('command', choices=COMMANDS, help='Command to run')
    parser.add_argument('paths', nargs='*', help='Input tables (for plot command)')
    parser.add_argument('--config', type=Path, help='JSON run configuration')
    parser.add_argument('--resume', action='store_true', help='Resume pretraining from the last checkpoint')
    parser.add_argument('--checkpoint', type=Path, help='Trained model directory (for eval command)')
    parser.add_argument('--split', default='test', choices=['train', 'val', 'test'], help='Split to evaluate')
    parser.add_argument('--log-level', default=config.LOG_LEVEL, help='Logging level')

    overrides = parser.add_argument_group('configuration overrides')
    for dotted, annotation in config_fields().items():
        overrides.add_argument(f'--{dotted}', dest=f'cfg:{dotted}', type=_flag_type(annotation),
                               default=argparse.SUPPRESS, metavar=dotted.split('.')[-1].upper())
    return parser


def dispatch(args: argparse.Namespace) -> int:
    from src.experiment_runner import cmd_ablate, cmd_eval, cmd_plot, cmd_pretrain, cmd_synth, cmd_train

    overrides = {key[4:]: value for key, value in vars(args).items() if key.startswith('cfg:')}
    cfg = load_config(args.config, overrides)

    if args.command == 'synth':
        print(f"🚀 Generating {cfg.data.num_samples} synthetic tiles...")
        result = cmd_synth(cfg)
    elif args.command == 'pretrain':
        print("🚀 Pretraining (resuming)..." if args.resume else "🚀 Pretraining...")
        result = cmd_pretrain(cfg, resume=args.resume)
    elif args.command == 'train':
        print(f"🚀 Training segmenter ({cfg.downstream.mode})...")
        result = cmd_train(cfg)
    elif args.command == 'eval':
        print("📊 Evaluating over every modality subset...")
        result = cmd_eval(cfg, checkpoint=args.checkpoint, split=args.split)
    elif args.command == 'ablate':
        print(f"🔬 Running ablation cells: {', '.join(cfg.ablate.cells)}")
        result = cmd_ablate(cfg)
    else:
        print("🎨 Plotting...")
        result = cmd_plot(cfg, args.paths)

    print(result.summary)
    print(f"✅ Done. Manifest: {result.manifest}")
    return config.EXIT_OK


def main(argv=None) -> int:
    """Main function."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == 'test':
        print("🧪 Running quick test...")
        return config.EXIT_OK if run_test() else config.EXIT_CONTRACT

    try:
        return dispatch(args)
    except ContainerError as e:
        print(f"❌ I/O error: {e}")
        return config.EXIT_IO
    except ImfusionError as e:
        print(f"❌ {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
