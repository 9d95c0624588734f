"""`soundsep` command line."""

import sys
import logging
import argparse
import dataclasses
from pathlib import Path

import tomlkit

from soundsep.semantic.base import ManifestStore
from soundsep.semantic.clip import Split
from soundsep.semantic.target import SemanticSeparation, write_estimates
from soundsep.semantic.exceptions import SemanticSepError, ConfigurationError
from soundsep.semantic.synthdata.dataset import (
    DatasetConfig,
    DatasetManifest,
    read_wav,
    build_dataset,
)
from soundsep.semantic.harness.plots import plot_embeddings
from soundsep.semantic.harness.sweep import sweep, load_grid
from soundsep.semantic.harness.train import train
from soundsep.semantic.harness.config import Setting, load_config
from soundsep.semantic.harness.report import collate, find_reports, write_report
from soundsep.semantic.harness.evaluate import evaluate
from soundsep.semantic.harness.checkpoint import load_classifier, save_classifier
from soundsep.semantic.classifier.training import PretrainConfig, pretrain

logger = logging.getLogger(__name__)


def _store(path: str) -> ManifestStore:
    return ManifestStore(DatasetManifest.load(path))


def _classifier(path: str | None):
    return load_classifier(path) if path else None


def cmd_make_data(args: argparse.Namespace):
    values = {}
    if args.config:
        try:
            values = tomlkit.parse(Path(args.config).read_text()).unwrap()
        except FileNotFoundError:
            raise ConfigurationError(f"no dataset config at {args.config}") from None
    config = DatasetConfig.from_mapping(values)
    overrides = {
        "seed": args.seed,
        "num_classes": args.num_classes,
        "train": args.train,
        "validation": args.validation,
        "test": args.test,
        "duration": args.duration,
        "workers": args.workers,
    }
    config = dataclasses.replace(
        config, **{k: v for k, v in overrides.items() if v is not None}
    )
    manifest = build_dataset(config, args.out)
    logger.info("dataset with %d examples written to %s", len(manifest), args.out)


def cmd_pretrain_classifier(args: argparse.Namespace):
    store = _store(args.data)
    config = PretrainConfig(
        steps=args.steps,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        map_floor=args.map_floor,
    )
    classifier = pretrain(store, config)
    save_classifier(classifier, args.out, step=config.steps)


def cmd_train(args: argparse.Namespace):
    config = load_config(
        args.config,
        setting=args.setting,
        basis=args.basis,
        max_steps=args.max_steps,
        seed=args.seed,
        classifier_checkpoint=args.classifier,
    )
    classifier = None
    if config.spec.needs_classifier:
        if not config.classifier_checkpoint:
            raise ConfigurationError(
                f"{config.setting.value} needs --classifier or classifier_checkpoint"
            )
        classifier = load_classifier(config.classifier_checkpoint)
    _, record = train(config, _store(args.data), args.out, classifier)
    logger.info(
        "run %s best validation SI-SDRi %.3f dB", record.run_id, record.best_si_sdri
    )


def cmd_evaluate(args: argparse.Namespace):
    split = Split(args.split)
    report = evaluate(
        args.checkpoint,
        _store(args.data),
        split,
        max_examples=args.max_examples,
        workers=args.workers,
    )
    out = Path(args.out or Path(args.checkpoint).parent / f"eval-{split.value}")
    report.write_json(out.with_suffix(".json"))
    report.write_csv(out.with_suffix(".csv"))
    for name, value in report.summary().items():
        print(f"{name}\t{value:.3f}")


def cmd_separate(args: argparse.Namespace):
    runner = SemanticSeparation.from_checkpoint(args.checkpoint)
    mixture = read_wav(Path(args.input))
    sources = [read_wav(Path(p)) for p in args.sources] if args.sources else None
    estimates = runner.run(mixture, sources)
    for path in write_estimates(estimates, args.out, Path(args.input).stem):
        print(path)


def cmd_plot_embeddings(args: argparse.Namespace):
    store = _store(args.data)
    example_id = args.example or store.ids(Split.Test)[0]
    names = [spec.name for spec in store.manifest.config.class_specs()]
    plot = plot_embeddings(
        store.example(example_id), load_classifier(args.classifier), args.out, names
    )
    print(plot.image)


def cmd_sweep(args: argparse.Namespace):
    configs = load_grid(args.grid)
    path = args.classifier or next(
        (c.classifier_checkpoint for c in configs if c.classifier_checkpoint), None
    )
    records = sweep(
        configs,
        _store(args.data),
        args.out,
        classifier=_classifier(path),
        workers=args.workers,
    )
    print(f"{len(records)} runs, summary in {Path(args.out) / 'summary.csv'}")


def cmd_report(args: argparse.Namespace):
    rows = collate(find_reports(args.runs))
    write_report(rows, args.out)
    print(f"{len(rows)} settings written to {Path(args.out).with_suffix('.csv')}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soundsep",
        description="Sound separation conditioned on classifier embeddings.",
    )
    parser.add_argument("--log-level", default="INFO", help="logging level")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("make-data", help="render the synthetic mixture dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="dataset TOML file")
    p.add_argument("--seed", type=int)
    p.add_argument("--num-classes", type=int)
    p.add_argument("--train", type=int)
    p.add_argument("--validation", type=int)
    p.add_argument("--test", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_make_data)

    p = commands.add_parser("pretrain-classifier", help="train the sound classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="classifier checkpoint path")
    p.add_argument("--steps", type=int, default=PretrainConfig.steps)
    p.add_argument("--batch-size", type=int, default=PretrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=PretrainConfig.learning_rate)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--map-floor", type=float, default=0.0)
    p.set_defaults(func=cmd_pretrain_classifier)

    p = commands.add_parser("train", help="train one experiment setting")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", help="experiment TOML file")
    p.add_argument("--setting", choices=[s.value for s in Setting])
    p.add_argument("--basis", choices=["stft", "learned"])
    p.add_argument("--classifier", help="pretrained classifier checkpoint")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("evaluate", help="SI-SDRi of a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=[s.value for s in Split])
    p.add_argument("--out", help="report path without suffix")
    p.add_argument("--max-examples", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("separate", help="separate a WAV file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sources", nargs="*", help="clean references for oracle settings")
    p.set_defaults(func=cmd_separate)

    p = commands.add_parser("plot-embeddings", help="top classes over time")
    p.add_argument("--classifier", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--example", help="example id, the first test example by default")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_embeddings)

    p = commands.add_parser("sweep", help="train a grid of settings")
    p.add_argument("--grid", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classifier")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = commands.add_parser("report", help="collate results into a settings table")
    p.add_argument("runs", nargs="+", help="run or sweep directories")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        args.func(args)
    except SemanticSepError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
