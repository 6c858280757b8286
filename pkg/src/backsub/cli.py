"""Command-line entry point.

Subcommands: run, train, segment, eval, synth, complexity.  Settings come
from defaults, then an optional flat YAML config file, then command-line
flags (flags win).  Progress and results go to stdout as machine-parsable
lines; images and reports go to the output directory.  Exit codes: 0 on
success, 1 on stage failure, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path

import numpy as np
import yaml

from . import data_io, evaluator, segmenter, synthetic, trainer
from .complexity import ComplexityParams
from .data_io import DatasetLayout, frame_index
from .losses import LossParams
from .segmenter import ThresholdParams


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Flat configuration for the pipeline commands.

    The ablation flags map one-to-one onto fields here: --no-bootstrap sets
    bootstrap_decay=0, --no-noise-threshold sets noise_coef=0, --l2-loss sets
    squared_error=true, --no-postprocess sets postprocess=false and
    --force-simple sets complexity_threshold=1.0.
    """

    root: str = "."
    layout: str = "generic"
    sequences: list = field(default_factory=list)
    out: str = "out"
    soft_threshold: float = 0.25
    bootstrap_decay: float = 6.0
    smoothing_divisor: int = 75
    illumination_coef: float = 96.0 / 255.0
    noise_coef: float = 7.0
    complexity_threshold: float = 0.24
    probe_iters: int = 2000
    probe_frames: int = 480
    simple_iters: int = 2500
    complex_iters: int = 24000
    complex_min_epochs: int = 20
    learning_rate: float = 5e-4
    batch_size: int = 32
    lr_drop_fraction: float = 0.8
    preset: str = "video"
    postprocess: bool = True
    squared_error: bool = False
    device: str = "cpu"
    seed: int = 0
    log_every: int = 100
    dump_backgrounds: bool = False
    dump_noise: bool = False
    dump_thresholds: bool = False
    chart: bool = False
    jobs: int = 1

    def loss_params(self) -> LossParams:
        return LossParams(soft_threshold=self.soft_threshold,
                          bootstrap_decay=self.bootstrap_decay,
                          smoothing_divisor=self.smoothing_divisor)

    def complexity_params(self) -> ComplexityParams:
        return ComplexityParams(complexity_threshold=self.complexity_threshold,
                                probe_iters=self.probe_iters,
                                probe_frames=self.probe_frames,
                                soft_threshold=self.soft_threshold,
                                smoothing_divisor=self.smoothing_divisor)

    def threshold_params(self) -> ThresholdParams:
        return ThresholdParams(illumination_coef=self.illumination_coef,
                               noise_coef=self.noise_coef)

    def train_config(self) -> trainer.TrainConfig:
        return trainer.TrainConfig(learning_rate=self.learning_rate,
                                   batch_size=self.batch_size,
                                   simple_iters=self.simple_iters,
                                   complex_iters=self.complex_iters,
                                   complex_min_epochs=self.complex_min_epochs,
                                   lr_drop_fraction=self.lr_drop_fraction,
                                   seed=self.seed, preset=self.preset,
                                   device=self.device,
                                   squared_error=self.squared_error,
                                   log_every=self.log_every,
                                   loss=self.loss_params(),
                                   complexity=self.complexity_params())

    def dataset_layout(self) -> DatasetLayout:
        return DatasetLayout(root=Path(self.root), kind=self.layout)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """defaults < config file < explicit flags."""
    values = {}
    if path:
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a flat mapping")
        unknown = set(data) - set(_FIELD_TYPES)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        config = RunConfig(**values)
        # fail fast on invalid hyperparameters
        config.loss_params(), config.complexity_params()
        config.threshold_params(), config.train_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return config


def echo_config(config: RunConfig, out_dir: Path) -> None:
    """Write the effective configuration so a run can be reproduced exactly."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(
        yaml.safe_dump(asdict(config), sort_keys=True))


def _mask_name(seq: data_io.FrameSequence, position: int) -> str:
    index = None
    if seq.paths:
        index = frame_index(seq.paths[position])
    if index is None:
        index = position + 1
    return f"bin{index:06d}.png"


def _sequence_out(config: RunConfig, sequence: str) -> Path:
    return Path(config.out) / sequence


def _resolve_sequences(config: RunConfig) -> list[str]:
    if config.sequences:
        return list(config.sequences)
    found = config.dataset_layout().list_sequences()
    if not found:
        raise ConfigError(f"no sequences found under {config.root}")
    return found


def _train_one(config: RunConfig, sequence: str) -> trainer.TrainedModel:
    layout = config.dataset_layout()
    seq = data_io.load_sequence(layout, sequence)
    result = trainer.train(seq, config.train_config(), log=print)
    print(f"sequence={sequence} verdict={result.verdict.complexity} "
          f"mean_soft_mask={result.verdict.mean_soft_mask:.4f} "
          f"iterations={result.iterations}")
    return result


def _segment_and_write(config: RunConfig, sequence: str, model) -> None:
    layout = config.dataset_layout()
    seq = data_io.load_sequence(layout, sequence)
    out = _sequence_out(config, sequence)
    results = segmenter.iter_segmentation(model, seq, config.threshold_params(),
                                          postprocess=config.postprocess,
                                          batch_size=config.batch_size)
    for position, result in enumerate(results):
        name = _mask_name(seq, position)
        data_io.write_mask(result.mask, out / "masks" / name)
        stem = Path(name).stem.replace("bin", "")
        if config.dump_backgrounds:
            data_io.write_frame(result.background, out / "backgrounds" / f"bg{stem}.png")
        if config.dump_noise:
            noise = np.clip(result.noise_map * 255.0, 0, 255).astype(np.uint8)
            from PIL import Image
            (out / "noise").mkdir(parents=True, exist_ok=True)
            Image.fromarray(noise, mode="L").save(out / "noise" / f"noise{stem}.png")
        if config.dump_thresholds:
            (out / "thresholds").mkdir(parents=True, exist_ok=True)
            np.save(out / "thresholds" / f"tau{stem}.npy", result.threshold)
    print(f"sequence={sequence} masks={len(seq)} out={out / 'masks'}")


def _match_predictions(gt_paths: list[Path], pred_dir: Path) -> list[Path]:
    """Pair each ground-truth frame with a prediction mask by numeric index."""
    pred_paths = [p for p in pred_dir.iterdir()
                  if p.is_file() and p.suffix.lower() in data_io.IMAGE_SUFFIXES]
    if not pred_paths:
        raise FileNotFoundError(f"no prediction masks in {pred_dir}")
    by_index = {frame_index(p): p for p in pred_paths}
    if None in by_index:
        if len(pred_paths) != len(gt_paths):
            raise ValueError(f"prediction count {len(pred_paths)} does not match "
                             f"ground-truth count {len(gt_paths)}")
        return data_io.sort_frame_paths(pred_paths)
    matched = []
    missing = []
    for gt_path in gt_paths:
        idx = frame_index(gt_path)
        if idx in by_index:
            matched.append(by_index[idx])
        else:
            missing.append(idx)
    if missing:
        raise ValueError(f"predictions missing for {len(missing)} ground-truth "
                         f"frames (first: {missing[:5]})")
    return matched


def _find_pred_dir(pred_root: Path, sequence: str) -> Path:
    for candidate in (pred_root / sequence / "masks", pred_root / sequence, pred_root):
        if candidate.is_dir() and any(p.suffix.lower() in data_io.IMAGE_SUFFIXES
                                      for p in candidate.iterdir() if p.is_file()):
            return candidate
    raise FileNotFoundError(f"no prediction masks for {sequence} under {pred_root}")


def _evaluate_sequence(layout: DatasetLayout, sequence: str,
                       pred_root: Path) -> evaluator.ConfusionCounts:
    directory = layout.groundtruth_dir(sequence)
    if not directory.is_dir():
        raise FileNotFoundError(f"no ground-truth directory at {directory}")
    gt_paths = data_io.sort_frame_paths(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in data_io.IMAGE_SUFFIXES)
    labels = data_io.load_groundtruth(layout, sequence)
    pred_paths = _match_predictions(gt_paths, _find_pred_dir(pred_root, sequence))
    counts = evaluator.ConfusionCounts()
    for pred_path, label in zip(pred_paths, labels):
        evaluator.accumulate(data_io.read_mask(pred_path), label, counts)
    return counts


def _category_of(sequence: str) -> str:
    return sequence.split("/")[0] if "/" in sequence else "all"


def _write_eval_report(config: RunConfig, counts_by_video: dict) -> evaluator.EvalReport:
    per_video = {video: evaluator.f_measure(c) for video, c in counts_by_video.items()}
    report = evaluator.aggregate(per_video,
                                 {v: _category_of(v) for v in per_video},
                                 counts=counts_by_video,
                                 config_echo=asdict(config))
    out_dir = Path(config.out)
    evaluator.write_report(report, out_dir)
    if config.chart:
        evaluator.category_chart(report, out_dir / "categories.png")
    for video, score in sorted(per_video.items()):
        shown = "nan" if score is None else f"{score:.4f}"
        print(f"sequence={video} f_measure={shown}")
    overall = "nan" if report.overall is None else f"{report.overall:.4f}"
    print(f"overall={overall}")
    return report


def _run_one(config: RunConfig, sequence: str) -> None:
    result = _train_one(config, sequence)
    out = _sequence_out(config, sequence)
    out.mkdir(parents=True, exist_ok=True)
    trainer.save_checkpoint(result.model, out / "model.ckpt",
                            extra={"verdict": result.verdict.complexity,
                                   "mean_soft_mask": result.verdict.mean_soft_mask,
                                   "iterations": result.iterations})
    _segment_and_write(config, sequence, result.model)


def _run_worker(config_dict: dict, sequence: str) -> str:
    # fan-out worker: rebuild the config and divide CPU threads fairly
    import torch

    config = RunConfig(**config_dict)
    if config.jobs > 1:
        torch.set_num_threads(max(1, (os.cpu_count() or 1) // config.jobs))
    _run_one(config, sequence)
    return sequence


def cmd_run(config: RunConfig) -> int:
    sequences = _resolve_sequences(config)
    echo_config(config, Path(config.out))
    if config.jobs > 1 and len(sequences) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            list(pool.map(_run_worker, [asdict(config)] * len(sequences), sequences))
    else:
        for sequence in sequences:
            _run_one(config, sequence)
    layout = config.dataset_layout()
    scored = {}
    for sequence in sequences:
        if layout.groundtruth_dir(sequence).is_dir():
            scored[sequence] = _evaluate_sequence(layout, sequence, Path(config.out))
    if scored:
        _write_eval_report(config, scored)
    return 0


def cmd_train(config: RunConfig) -> int:
    sequences = _resolve_sequences(config)
    echo_config(config, Path(config.out))
    for sequence in sequences:
        result = _train_one(config, sequence)
        out = _sequence_out(config, sequence)
        out.mkdir(parents=True, exist_ok=True)
        trainer.save_checkpoint(result.model, out / "model.ckpt",
                                extra={"verdict": result.verdict.complexity,
                                       "mean_soft_mask": result.verdict.mean_soft_mask,
                                       "iterations": result.iterations})
        print(f"sequence={sequence} checkpoint={out / 'model.ckpt'}")
    return 0


def cmd_segment(config: RunConfig, checkpoint: str | None) -> int:
    sequences = _resolve_sequences(config)
    echo_config(config, Path(config.out))
    for sequence in sequences:
        path = Path(checkpoint) if checkpoint else _sequence_out(config, sequence) / "model.ckpt"
        if not path.exists():
            raise FileNotFoundError(f"no checkpoint at {path}")
        model = trainer.load_checkpoint(path).to(config.device)
        _segment_and_write(config, sequence, model)
    return 0


def cmd_eval(config: RunConfig, pred_root: str) -> int:
    sequences = _resolve_sequences(config)
    layout = config.dataset_layout()
    counts = {seq: _evaluate_sequence(layout, seq, Path(pred_root))
              for seq in sequences}
    echo_config(config, Path(config.out))
    _write_eval_report(config, counts)
    return 0


def cmd_complexity(config: RunConfig) -> int:
    layout = config.dataset_layout()
    for sequence in _resolve_sequences(config):
        seq = data_io.load_sequence(layout, sequence)
        _, verdict = trainer.probe(seq, config.train_config(), log=print)
        print(f"sequence={sequence} mean_soft_mask={verdict.mean_soft_mask:.4f} "
              f"verdict={verdict.complexity}")
    return 0


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat YAML config file")
    parser.add_argument("--root", help="dataset root directory")
    parser.add_argument("--layout", choices=("generic", "cdnet", "lasiesta", "bmc"))
    parser.add_argument("--sequence", dest="sequences", action="append",
                        metavar="NAME", help="sequence to process (repeatable; "
                        "default: every sequence under the root)")
    parser.add_argument("--out", help="output directory")
    for name in ("soft-threshold", "bootstrap-decay", "illumination-coef",
                 "noise-coef", "complexity-threshold", "learning-rate",
                 "lr-drop-fraction"):
        parser.add_argument(f"--{name}", type=float)
    for name in ("smoothing-divisor", "probe-iters", "probe-frames",
                 "simple-iters", "complex-iters", "complex-min-epochs",
                 "batch-size", "seed", "log-every", "jobs"):
        parser.add_argument(f"--{name}", type=int)
    parser.add_argument("--preset", choices=("video", "image64", "image128"))
    parser.add_argument("--device")
    parser.add_argument("--no-bootstrap", action="store_true", default=None,
                        help="ablation: set bootstrap_decay to 0")
    parser.add_argument("--no-noise-threshold", action="store_true", default=None,
                        help="ablation: set noise_coef to 0")
    parser.add_argument("--l2-loss", action="store_true", default=None,
                        help="ablation: unweighted squared-error reconstruction")
    parser.add_argument("--no-postprocess", action="store_true", default=None,
                        help="ablation: skip morphological post-processing")
    parser.add_argument("--force-simple", action="store_true", default=None,
                        help="ablation: treat every background as simple")
    parser.add_argument("--dump-backgrounds", action="store_true", default=None)
    parser.add_argument("--dump-noise", action="store_true", default=None)
    parser.add_argument("--dump-thresholds", action="store_true", default=None)
    parser.add_argument("--chart", action="store_true", default=None,
                        help="write a per-category bar chart (needs matplotlib)")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for name in _FIELD_TYPES:
        if hasattr(args, name):
            overrides[name] = getattr(args, name)
    if getattr(args, "no_bootstrap", None):
        overrides["bootstrap_decay"] = 0.0
    if getattr(args, "no_noise_threshold", None):
        overrides["noise_coef"] = 0.0
    if getattr(args, "l2_loss", None):
        overrides["squared_error"] = True
    if getattr(args, "no_postprocess", None):
        overrides["postprocess"] = False
    if getattr(args, "force_simple", None):
        overrides["complexity_threshold"] = 1.0
    return load_config(getattr(args, "config", None), overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="backsub",
        description="Unsupervised background reconstruction and foreground "
                    "segmentation for frame sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (("run", "train, segment and (with ground truth) evaluate"),
                           ("train", "train models and save checkpoints"),
                           ("segment", "segment sequences with saved checkpoints"),
                           ("eval", "score stored prediction masks"),
                           ("complexity", "probe-train and report the verdict")):
        p = sub.add_parser(name, help=helptext)
        _add_config_flags(p)
        if name == "segment":
            p.add_argument("--checkpoint", help="explicit checkpoint path")
        if name == "eval":
            p.add_argument("--pred", required=True,
                           help="directory holding prediction masks")

    p = sub.add_parser("synth", help="materialize a synthetic dataset")
    p.add_argument("--spec", required=True, help="YAML synthetic scene spec")
    p.add_argument("--out", required=True, help="dataset root to create")
    p.add_argument("--name", help="sequence name (default: spec file stem)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            spec = synthetic.spec_from_file(args.spec)
        else:
            config = _config_from_args(args)
    except (ConfigError, ValueError, TypeError, OSError, yaml.YAMLError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "synth":
            scene = synthetic.generate(spec)
            seq_dir = synthetic.materialize(scene, Path(args.out),
                                            args.name or Path(args.spec).stem)
            print(f"sequence={seq_dir.name} frames={len(scene.sequence)} out={seq_dir}")
            return 0
        if args.command == "run":
            return cmd_run(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "segment":
            return cmd_segment(config, args.checkpoint)
        if args.command == "eval":
            return cmd_eval(config, args.pred)
        if args.command == "complexity":
            return cmd_complexity(config)
        raise AssertionError(f"unhandled command {args.command}")
    except Exception as exc:  # noqa: BLE001 - stage failures map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
