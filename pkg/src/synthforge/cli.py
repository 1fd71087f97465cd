"""Command-line front end: generate | stats | inherit | gan-demo | eval.

Exit codes: 0 success, 1 input/validation failure, 2 runtime error. Every
nonzero exit prints at least one diagnostic line to stderr. All randomness
comes from --seed; identical inputs give byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import annotator, renderer
from .asset_store import AssetError, AssetStore, MeshParseError
from .dataset_io import (SchemaError, compute_instance_size_stats,
                         inherit_annotations, read_detections,
                         read_ground_truth, write_dataset)
from .detection_metrics import evaluate
from .renderer import RenderError
from .scene_randomizer import (RandomizationConfig, SceneSampleError,
                               sample_scene, validate_config)
from .translation_objective import (TrainConfig, TrainingDivergedError,
                                    toy_train)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

ASSET_DIR_ENV = "SYNTHFORGE_ASSET_DIR"


@dataclass(frozen=True)
class CommandOutcome:
    """What a subcommand did: exit code, message, files written."""

    exit_code: int
    summary: str
    artifacts: tuple[Path, ...] = ()


class SceneFailure(RuntimeError):
    """Scene-level error tagged with the failing index (pickle-safe)."""

    def __init__(self, index: int, message: str):
        super().__init__(index, message)
        self.index = index
        self.message = message

    def __str__(self):
        return f"scene {self.index}: {self.message}"


def _load_config(config_path: Path) -> RandomizationConfig:
    with open(config_path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config file must hold a JSON object")
    return RandomizationConfig.from_dict(raw)


def _config_hash(config: RandomizationConfig) -> str:
    canon = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _asset_root(config_path: Path) -> Path:
    env = os.environ.get(ASSET_DIR_ENV)
    return Path(env) if env else config_path.parent


def _render_one(config, seed, index, store):
    scene = sample_scene(config, seed, index, store)
    out = renderer.render(scene, store)
    categories = [inst.category for inst in scene.instances]
    anns = annotator.extract_boxes(out, out.solo_pixel_counts, categories,
                                   image_id=index + 1)
    return index, out.rgb, anns


_WORKER_STATE: dict = {}


def _init_worker(config, seed, asset_root):
    _WORKER_STATE["config"] = config
    _WORKER_STATE["seed"] = seed
    _WORKER_STATE["store"] = AssetStore.from_dir(asset_root)


def _worker_render(index: int):
    try:
        return _render_one(_WORKER_STATE["config"], _WORKER_STATE["seed"],
                           index, _WORKER_STATE["store"])
    except Exception as err:
        raise SceneFailure(index, str(err)) from None


def cmd_generate(config_path, seed: int, count: int, out_dir,
                 workers: int = 1) -> CommandOutcome:
    """Sample, render, annotate and export scenes 0..count-1."""
    config_path = Path(config_path)
    out_dir = Path(out_dir)
    try:
        config = _load_config(config_path)
    except OSError as err:
        return CommandOutcome(EXIT_RUNTIME, f"cannot read config: {err}")
    except (json.JSONDecodeError, ValueError) as err:
        return CommandOutcome(EXIT_VALIDATION, f"invalid config: {err}")

    violations = validate_config(config)
    if violations:
        lines = ["config validation failed:"]
        lines += [f"  - {v}" for v in violations]
        return CommandOutcome(EXIT_VALIDATION, "\n".join(lines))
    if count < 0:
        return CommandOutcome(EXIT_VALIDATION, "count must be >= 0")

    asset_root = _asset_root(config_path)
    try:
        store = AssetStore.from_dir(asset_root)
    except (AssetError, MeshParseError, OSError) as err:
        return CommandOutcome(EXIT_RUNTIME, f"cannot load assets: {err}")

    results: list = [None] * count
    progress_every = max(1, count // 10)
    try:
        if workers <= 1 or count <= 1:
            for index in range(count):
                try:
                    results[index] = _render_one(config, seed, index, store)
                except (SceneSampleError, RenderError, AssetError,
                        ValueError) as err:
                    raise SceneFailure(index, str(err)) from None
                if (index + 1) % progress_every == 0 or index + 1 == count:
                    print(f"rendered {index + 1}/{count}", file=sys.stderr)
        else:
            with ProcessPoolExecutor(
                    max_workers=workers, initializer=_init_worker,
                    initargs=(config, seed, asset_root)) as pool:
                done = 0
                for item in pool.map(_worker_render, range(count)):
                    results[item[0]] = item
                    done += 1
                    if done % progress_every == 0 or done == count:
                        print(f"rendered {done}/{count}", file=sys.stderr)
    except SceneFailure as err:
        return CommandOutcome(EXIT_RUNTIME, f"generation failed at {err}")

    images = [(index, rgb) for index, rgb, _ in results]
    annotations = [a for _, _, anns in results for a in anns]
    try:
        write_dataset(images, annotations, out_dir,
                      config_hash=_config_hash(config), seed=seed)
    except OSError as err:
        return CommandOutcome(EXIT_RUNTIME, f"cannot write dataset: {err}")
    summary = (f"generated {count} images, {len(annotations)} annotations "
               f"-> {out_dir}")
    return CommandOutcome(EXIT_OK, summary,
                          (out_dir / "annotations.json",
                           out_dir / "manifest.json"))


def cmd_stats(gt_path, out_dir=None) -> CommandOutcome:
    """Summarize instance sizes of an annotation file into a CSV."""
    gt_path = Path(gt_path)
    try:
        gt = read_ground_truth(gt_path)
    except OSError as err:
        return CommandOutcome(EXIT_RUNTIME, f"cannot read annotations: {err}")
    except (SchemaError, json.JSONDecodeError) as err:
        return CommandOutcome(EXIT_VALIDATION, f"invalid annotations: {err}")
    if not gt.annotations:
        return CommandOutcome(EXIT_VALIDATION,
                              "annotation file has no annotations")
    stats = compute_instance_size_stats(gt.annotations)
    out_dir = Path(out_dir) if out_dir is not None else gt_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "size_stats.csv"
    csv_path.write_text(stats.to_csv())
    summary = (f"instances: {len(stats.sizes)}  size min {stats.min:.2f}  "
               f"max {stats.max:.2f}  mean {stats.mean:.2f}\n"
               f"wrote {csv_path}")
    return CommandOutcome(EXIT_OK, summary, (csv_path,))


def cmd_inherit(gt_path, translated_dir) -> CommandOutcome:
    """Re-bind annotations to a directory of translated images."""
    try:
        target = inherit_annotations(Path(gt_path), Path(translated_dir))
    except OSError as err:
        return CommandOutcome(EXIT_RUNTIME, f"cannot read annotations: {err}")
    except (SchemaError, json.JSONDecodeError) as err:
        return CommandOutcome(EXIT_VALIDATION, str(err))
    return CommandOutcome(EXIT_OK, f"annotations inherited -> {target}",
                          (target,))


def cmd_gan_demo(steps: int, seed: int, out_csv) -> CommandOutcome:
    """Run the toy translation objective and dump its loss trace."""
    if steps < 0:
        return CommandOutcome(EXIT_VALIDATION, "steps must be >= 0")
    out_csv = Path(out_csv)
    config = TrainConfig(total_steps=steps, decay_start=min(1000, steps),
                         seed=seed)
    try:
        result = toy_train(config)
    except TrainingDivergedError as err:
        return CommandOutcome(EXIT_RUNTIME,
                              f"training diverged at step {err.step}")
    if out_csv.parent != Path(""):
        out_csv.parent.mkdir(parents=True, exist_ok=True)
    out_csv.write_text(result.trace_csv())
    if result.trace:
        window = min(100, len(result.trace))
        cyc = [row.cyc for row in result.trace]
        lead = float(np.mean(cyc[:window]))
        trail = float(np.mean(cyc[-window:]))
        ratio = trail / lead if lead > 0 else float("nan")
        summary = (f"ran {steps} steps  cycle loss leading {lead:.6f} "
                   f"trailing {trail:.6f} ratio {ratio:.4f}\nwrote {out_csv}")
    else:
        summary = f"ran 0 steps, empty trace\nwrote {out_csv}"
    return CommandOutcome(EXIT_OK, summary, (out_csv,))


def cmd_eval(gt_path, det_path, out_dir=None) -> CommandOutcome:
    """Score detections against ground truth; write text + CSV report."""
    gt_path = Path(gt_path)
    det_path = Path(det_path)
    try:
        gt = read_ground_truth(gt_path)
        dets = read_detections(det_path)
    except OSError as err:
        return CommandOutcome(EXIT_RUNTIME, f"cannot read input: {err}")
    except (SchemaError, json.JSONDecodeError) as err:
        return CommandOutcome(EXIT_VALIDATION, f"invalid input: {err}")
    report = evaluate(gt, dets)
    out_dir = Path(out_dir) if out_dir is not None else det_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    txt_path = out_dir / "eval_report.txt"
    csv_path = out_dir / "eval_report.csv"
    txt_path.write_text(report.to_text())
    csv_path.write_text(report.to_csv())
    summary = (report.to_text()
               + f"mAP {report.map:.3f}  AP75 {report.ap75:.3f}\n"
               + f"wrote {txt_path}\nwrote {csv_path}")
    return CommandOutcome(EXIT_OK, summary, (txt_path, csv_path))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthforge",
        description="Synthetic aerial dataset toolkit: generation, size "
                    "statistics, annotation inheritance, toy translation "
                    "training, and detection evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render an annotated dataset")
    p.add_argument("--config", required=True, help="randomization config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10, help="number of scenes")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="parallel scene renderers (default: logical CPUs)")

    p = sub.add_parser("stats", help="instance size histogram of a dataset")
    p.add_argument("--gt", required=True, help="annotation JSON file")
    p.add_argument("--out", default=None,
                   help="directory for size_stats.csv (default: beside --gt)")

    p = sub.add_parser("inherit",
                       help="attach annotations to translated images")
    p.add_argument("--gt", required=True, help="annotation JSON file")
    p.add_argument("--out", required=True, help="translated image directory")

    p = sub.add_parser("gan-demo",
                       help="train the toy translation objective")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default="gan_trace.csv", help="trace CSV path")

    p = sub.add_parser("eval", help="COCO-style detection scoring")
    p.add_argument("--gt", required=True, help="ground-truth JSON file")
    p.add_argument("--dets", required=True, help="detection JSON file")
    p.add_argument("--out", default=None,
                   help="report directory (default: beside --dets)")
    return parser


def run(argv=None) -> CommandOutcome:
    args = build_parser().parse_args(argv)
    if args.command == "generate":
        return cmd_generate(args.config, args.seed, args.count, args.out,
                            workers=args.workers)
    if args.command == "stats":
        return cmd_stats(args.gt, args.out)
    if args.command == "inherit":
        return cmd_inherit(args.gt, args.out)
    if args.command == "gan-demo":
        return cmd_gan_demo(args.steps, args.seed, args.out)
    if args.command == "eval":
        return cmd_eval(args.gt, args.dets, args.out)
    raise AssertionError(f"unhandled command {args.command!r}")


def main(argv=None) -> int:
    outcome = run(argv)
    stream = sys.stdout if outcome.exit_code == EXIT_OK else sys.stderr
    print(outcome.summary, file=stream)
    return outcome.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
