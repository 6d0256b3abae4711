"""
Command-line surface: synth-data → train → enhance → eval → plot.

Exit codes: 0 success, 1 input error, 2 numeric failure, 64 usage.
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from tqdm import tqdm

from config.experiment import ExperimentConfig, load_experiment_config, write_effective_config
from config.settings import settings

from ..data import MANIFEST_NAME, count_table, read_manifest, synthesize_corpus, validate_manifest, write_toy_corpus
from ..dsp import read_wav, write_wav
from ..errors import NitCycleGANError, NonFiniteLossError, SampleRateError
from ..losses import LossReport
from ..metrics import evaluate_pairs, items_from_manifest, make_pesq_provider, write_evaluation
from ..metrics.evaluation import DISPLAY_NAMES
from ..training import Enhancer, train
from ..utils import console, failure, print_table, setup_logging, success, warning
from .plotting import plot_report

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERIC = 2
EXIT_USAGE = 64

# Flags whose value may start with a minus sign
_SIGNED_VALUE_FLAGS = {"--snrs"}


class CliParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def normalize_argv(argv: Sequence[str]) -> List[str]:
    """Join `--snrs -5,0,5` into `--snrs=-5,0,5` so argparse does not read a flag"""
    out: List[str] = []
    tokens = list(argv)
    index = 0
    while index < len(tokens):
        token = tokens[index]
        if token in _SIGNED_VALUE_FLAGS and index + 1 < len(tokens) and tokens[index + 1].startswith("-"):
            out.append(f"{token}={tokens[index + 1]}")
            index += 2
            continue
        out.append(token)
        index += 1
    return out


def parse_snrs(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"SNR list must be comma-separated numbers, got {text!r}")


def parse_system(text: str) -> Tuple[str, Path]:
    name, sep, directory = text.partition("=")
    if not sep or not name or not directory:
        raise argparse.ArgumentTypeError(f"system must look like NAME=DIR, got {text!r}")
    return name, Path(directory)


def wav_files(directory: Path) -> List[Path]:
    if not directory.is_dir():
        raise FileNotFoundError(f"directory not found: {directory}")
    return sorted(directory.rglob("*.wav"))


def _load_config(args: argparse.Namespace, overrides: List[str]) -> ExperimentConfig:
    return load_experiment_config(args.config, [*args.overrides, *overrides])


# --- synth-data ---


def cmd_toy_corpus(args: argparse.Namespace) -> int:
    corpus = write_toy_corpus(args.out, seed=args.seed, n_clean=args.n_clean, n_noise=args.n_noise, n_test=args.n_test)
    success(
        f"Toy corpus in {corpus.root}: {len(corpus.clean_files)} clean, "
        f"{len(corpus.noise_files)} noise, {len(corpus.test_clean_files)} test"
    )
    return EXIT_OK


def cmd_synth_data(args: argparse.Namespace) -> int:
    overrides = []
    if args.snrs is not None:
        overrides.append(f"synth.snrs={args.snrs}")
    if args.split is not None:
        overrides.append(f"synth.split_mode={args.split}")
    if args.seed is not None:
        overrides.append(f"synth.seed={args.seed}")
    config = _load_config(args, overrides)
    synth = config.synth

    clean_files = wav_files(Path(args.clean))
    noise_files = wav_files(Path(args.noise))
    test_files = wav_files(Path(args.test_clean)) if args.test_clean else []
    unseen_files = wav_files(Path(args.unseen_noise)) if args.unseen_noise else []
    if not clean_files:
        raise FileNotFoundError(f"no WAV files under {args.clean}")
    if not noise_files:
        raise FileNotFoundError(f"no WAV files under {args.noise}")

    manifest = synthesize_corpus(
        clean_files,
        noise_files,
        args.out,
        snrs=synth.snrs,
        split_mode=synth.split_mode,
        seed=synth.seed,
        test_clean_files=test_files,
        unseen_noise_files=unseen_files,
        render=not args.manifest_only,
        random_offset=synth.random_offset,
        peak_limit=synth.peak_limit,
        stft_config=config.stft,
        feature_config=config.features,
        show_progress=settings.progress,
    )
    write_effective_config(config, args.out)

    counts = count_table(manifest)
    print_table(
        "Noisy utterances per noise × SNR",
        ["split", "noise", "SNR (dB)", "count"],
        [(split, noise, f"{snr:g}", count) for (split, noise, snr), count in counts.items()],
    )
    report = validate_manifest(manifest, check_files=not args.manifest_only)
    if not report.passed:
        for issue in report.issues:
            failure(f"{issue.check}: {issue.record_id or '-'}: {issue.message}")
        return EXIT_INPUT
    success(f"Wrote {sum(counts.values())} noisy utterances and {Path(args.out) / MANIFEST_NAME}")
    return EXIT_OK


# --- train ---


def _print_report(report: Optional[LossReport]) -> None:
    if report is None:
        return
    print_table("Last loss report", ["term", "value"], [(k, v) for k, v in report.as_row(0, 0).items() if k not in ("step", "epoch")])


def cmd_train(args: argparse.Namespace) -> int:
    overrides = []
    for flag, key in (("mode", "train.mode"), ("epochs", "train.epochs"), ("seed", "train.seed"), ("max_steps", "train.max_steps")):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{key}={value}")
    if args.identity_decay_epoch is not None:
        overrides.append(f"losses.identity_decay_epoch={args.identity_decay_epoch}")
    config = _load_config(args, overrides)

    manifest = read_manifest(args.manifest)
    write_effective_config(config, args.out)
    try:
        result = train(
            config.train,
            config.losses,
            config.generator,
            config.discriminator,
            manifest,
            args.out,
            resume=args.resume,
        )
    except NonFiniteLossError as exc:
        failure(str(exc))
        _print_report(exc.report)
        return EXIT_NUMERIC
    _print_report(result.final_report)
    success(f"Trained {result.steps} steps; checkpoint {result.checkpoint}, losses {result.loss_csv}")
    return EXIT_OK


# --- enhance ---


def _enhance_jobs(args: argparse.Namespace) -> List[Tuple[Path, Path]]:
    out_dir = Path(args.out)
    if args.manifest:
        manifest = read_manifest(args.manifest)
        split = args.split or ("test" if manifest.noisy_records("test") else "train")
        return [(manifest.resolve(r.path), out_dir / f"{r.id}.wav") for r in manifest.noisy_records(split)]
    source = Path(args.input)
    if source.is_file():
        return [(source, out_dir / source.name)]
    return [(path, out_dir / path.relative_to(source)) for path in wav_files(source)]


def cmd_enhance(args: argparse.Namespace) -> int:
    if not args.input and not args.manifest:
        raise FileNotFoundError("give --input FILE|DIR or --manifest")
    enhancer = Enhancer.from_file(args.checkpoint)
    jobs = _enhance_jobs(args)
    if not jobs:
        warning("Nothing to enhance")
        return EXIT_INPUT

    def run(job: Tuple[Path, Path]) -> Optional[str]:
        source, target = job
        try:
            wave = read_wav(source, expected_rate=enhancer.sample_rate)
            write_wav(target, enhancer.enhance(wave))
        except SampleRateError as exc:
            return f"skipped {source}: {exc}"
        except (NitCycleGANError, OSError) as exc:
            return f"failed {source}: {exc}"
        return None

    with ThreadPoolExecutor(max_workers=settings.threads) as executor:
        problems = list(tqdm(executor.map(run, jobs), total=len(jobs), desc="Enhancing", disable=not settings.progress))
    for problem in problems:
        if problem:
            warning(problem)
    done = sum(1 for p in problems if p is None)
    if done == 0:
        failure("No file could be enhanced")
        return EXIT_INPUT
    success(f"Enhanced {done}/{len(jobs)} files into {args.out}")
    return EXIT_OK


# --- eval / plot ---


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args, [])
    manifest = read_manifest(args.manifest)
    systems: Dict[str, Path] = dict(args.systems or [])
    for name, directory in systems.items():
        if not directory.is_dir():
            raise FileNotFoundError(f"system {name}: directory not found: {directory}")
    provider = make_pesq_provider(args.pesq)
    if not provider.available:
        warning("No PESQ source given (--pesq): PESQ, CSIG, CBAK and COVL are omitted")

    items = items_from_manifest(manifest, args.split)
    if not items:
        raise FileNotFoundError(f"no noisy records to evaluate in {args.manifest}")
    result = evaluate_pairs(
        items,
        systems,
        provider,
        config.metrics,
        sample_rate=manifest.header.stft.sample_rate,
        show_progress=settings.progress,
    )
    paths = write_evaluation(result, args.out, config.metrics, args.pesq)
    write_effective_config(config, args.out)

    columns = [c for c in result.summary.columns if c != "system"]
    print_table("Evaluation summary", ["system", *columns], result.summary.itertuples(index=False))
    for note in result.notes:
        warning(note)
    success(f"Reports in {paths['summary'].parent}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    report = Path(args.report)
    per_utterance = report / "per_utterance.csv" if report.is_dir() else report
    if not per_utterance.exists():
        raise FileNotFoundError(f"evaluation report not found: {per_utterance}")
    paths = plot_report(per_utterance, args.out, metric=args.metric, condition=args.condition)
    for path in paths.values():
        console.print(f"  {path}")
    success(f"Wrote {len(paths)} figure files")
    return EXIT_OK


# --- parser ---


def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", help="experiment JSON file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="dotted config override")

    parser = CliParser(prog="nitcg", description="Noise-informed CycleGAN speech enhancement toolkit")
    parser.add_argument("--log-level", default=None, help="logging level (default from NITCG_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy-corpus", help="write a synthetic multi-tone corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-clean", type=int, default=8)
    p.add_argument("--n-noise", type=int, default=2)
    p.add_argument("--n-test", type=int, default=0)
    p.set_defaults(handler=cmd_toy_corpus)

    p = sub.add_parser("synth-data", parents=[common], help="mix clean speech with noise types at fixed SNRs")
    p.add_argument("--clean", required=True, help="directory of clean training WAVs")
    p.add_argument("--noise", required=True, help="directory of noise-type WAVs, one file per type")
    p.add_argument("--out", required=True)
    p.add_argument("--snrs", type=parse_snrs, default=None, help="comma-separated SNRs in dB, e.g. -5,0,5")
    p.add_argument("--split", choices=["paired", "disjoint"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--test-clean", default=None, help="directory of clean test WAVs")
    p.add_argument("--unseen-noise", default=None, help="directory of noise types held out of training")
    p.add_argument("--manifest-only", action="store_true", help="write the manifest without rendering audio")
    p.set_defaults(handler=cmd_synth_data)

    p = sub.add_parser("train", parents=[common], help="train baseline CycleGAN or NIT-CycleGAN")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["baseline", "nit"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--identity-decay-epoch", type=int, default=None, help="zero the identity weight after this epoch")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("enhance", parents=[common], help="enhance noisy WAVs with a trained generator")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", default=None, help="WAV file or directory")
    p.add_argument("--manifest", default=None, help="enhance the noisy records of a manifest instead")
    p.add_argument("--split", choices=["train", "test"], default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_enhance)

    p = sub.add_parser("eval", parents=[common], help="score systems against clean references")
    p.add_argument("--manifest", required=True)
    p.add_argument("--system", dest="systems", type=parse_system, action="append", metavar="NAME=DIR")
    p.add_argument("--pesq", default=None, help="cmd:<command>, csv:<path>, pesq:<wb|nb> or stub:<value>")
    p.add_argument("--split", choices=["train", "test"], default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("plot", help="per-SNR and per-system bar charts from an evaluation report")
    p.add_argument("--report", required=True, help="eval output directory or per_utterance.csv")
    p.add_argument("--metric", default="PESQ", help=f"one of {', '.join(DISPLAY_NAMES.values())}")
    p.add_argument("--condition", choices=["all", "train", "matched", "mismatched"], default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(normalize_argv(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    setup_logging(args.log_level or settings.log_level)
    try:
        return args.handler(args)
    except NonFiniteLossError as exc:
        failure(str(exc))
        return EXIT_NUMERIC
    except (NitCycleGANError, FileNotFoundError, OSError) as exc:
        failure(str(exc))
        for item in getattr(exc, "failures", [])[:20]:
            console.print(f"   {item}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
