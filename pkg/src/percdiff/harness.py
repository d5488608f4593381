"""Experiment orchestration: config handling, runs, ablations, CLI.

A single JSON document configures everything; CLI flags override dot-path
keys (``--set train.strategy=prob_scaling``). Run artifacts live under
``runs/<run_id>/``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluation
from .augmentation import AugmentationSpec
from .contribution import (ContributionProfile, MetricTrace, schedule_profile,
                           stats_profile)
from .denoiser import (ModelConfig, TrainConfig, load_checkpoint, log_to_csv,
                       save_checkpoint, train)
from .guidance import GuidanceWeights, run_correction_workflow
from .schedule import make_schedule
from .toytask import Dataset, MaskExtractionConfig, TaskConfig, generate_dataset

DEFAULT_CONFIG: dict = {
    "schedule": {"T": 1000, "beta_min": 1e-4, "beta_max": 0.02},
    "task": {
        "grid_size": 16, "min_objects": 2, "max_objects": 4,
        "train_scenes": 2048, "val_scenes": 256, "data_seed": 7,
    },
    "model": {"hidden": [256, 256], "time_emb_dim": 32, "skip": True},
    "train": {
        "strategy": "uniform", "profile": None, "target_kind": "eps",
        "learning_rate": 1e-3, "batch_size": 64, "epochs": 20,
        "weight_decay": 1e-4, "seed": 0, "cond_drop_prob": 0.1, "groups": 10,
    },
    "augment": {
        "enabled": False, "intensity_multiplier": 1.0, "schedule": "linear",
        "color": True, "location": True, "shape": True, "blur": False,
        "color_max": 0.2, "rotate_max_deg": 10.0, "translate_max_frac": 0.05,
        "scale_range": [0.95, 1.05], "erase_frac_range": [0.01, 0.05],
        "blur_kernel": 31, "blur_sigma_max": 10.0,
    },
    "eval": {"steps": 50, "samples": 256, "seed": 1234, "delta": 0.4},
    "guidance": {"w_img": 1.5, "w_cond": 3.0, "w_neg": 2.0},
    "workflow": {"k": 3, "steps": 50, "seed": 99},
}


class ConfigError(ValueError):
    pass


def _merge_checked(defaults: dict, overrides: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge_checked(defaults[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    @classmethod
    def from_dict(cls, overrides: dict | None = None) -> "ExperimentConfig":
        return cls(data=_merge_checked(DEFAULT_CONFIG, overrides or {}))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_overrides(self, assignments: dict) -> "ExperimentConfig":
        """Apply dot-path overrides like {"train.strategy": "prob_scaling"}."""
        data = copy.deepcopy(self.data)
        for dotted, value in assignments.items():
            node = data
            *parents, leaf = dotted.split(".")
            for p in parents:
                if p not in node or not isinstance(node[p], dict):
                    raise ConfigError(f"unknown config section: {dotted}")
                node = node[p]
            if leaf not in node:
                raise ConfigError(f"unknown config key: {dotted}")
            node[leaf] = value
        return ExperimentConfig.from_dict(data)

    # --- typed views -----------------------------------------------------
    def schedule(self):
        s = self.data["schedule"]
        return make_schedule(s["T"], s["beta_min"], s["beta_max"])

    def task_config(self) -> TaskConfig:
        t = self.data["task"]
        return TaskConfig(grid_size=t["grid_size"], min_objects=t["min_objects"],
                          max_objects=t["max_objects"])

    def model_config(self) -> ModelConfig:
        m = self.data["model"]
        return ModelConfig(grid_size=self.data["task"]["grid_size"],
                           hidden=tuple(m["hidden"]), time_emb_dim=m["time_emb_dim"],
                           skip=bool(m.get("skip", True)))

    def aug_spec(self) -> AugmentationSpec:
        a = dict(self.data["augment"])
        a["scale_range"] = tuple(a["scale_range"])
        a["erase_frac_range"] = tuple(a["erase_frac_range"])
        return AugmentationSpec(**a)

    def train_config(self) -> TrainConfig:
        t = self.data["train"]
        return TrainConfig(target_kind=t["target_kind"], strategy_kind=t["strategy"],
                           aug=self.aug_spec(), cond_drop_prob=t["cond_drop_prob"],
                           learning_rate=t["learning_rate"], batch_size=t["batch_size"],
                           epochs=t["epochs"], weight_decay=t["weight_decay"],
                           seed=t["seed"], groups=t["groups"])

    def guidance_weights(self) -> GuidanceWeights:
        g = self.data["guidance"]
        return GuidanceWeights(w_img=g["w_img"], w_cond=g["w_cond"], w_neg=g["w_neg"])

    def extraction(self) -> MaskExtractionConfig:
        return MaskExtractionConfig(delta=self.data["eval"]["delta"])


def build_datasets(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Deterministic train/val datasets from the task section."""
    t = config.data["task"]
    task = config.task_config()
    train_ds = generate_dataset(task, t["train_scenes"], seed=t["data_seed"])
    val_ds = generate_dataset(task, t["val_scenes"], seed=t["data_seed"] + 1)
    return train_ds, val_ds


def load_profile(config: ExperimentConfig) -> ContributionProfile | None:
    path = config.data["train"]["profile"]
    if path is None:
        return None
    return ContributionProfile.from_json(Path(path).read_text())


@dataclass
class RunRecord:
    run_id: str
    config_hash: str
    directory: Path
    final_oiou: float | None
    report: dict

    @property
    def checkpoint_path(self) -> Path:
        return self.directory / "checkpoint.bin"


def run_training(config: ExperimentConfig, runs_dir: str | Path,
                 run_id: str | None = None,
                 datasets: tuple[Dataset, Dataset] | None = None,
                 evaluate: bool = True) -> RunRecord:
    """Train one model per the config and persist its artifacts."""
    schedule = config.schedule()
    train_ds, val_ds = datasets or build_datasets(config)
    profile = load_profile(config)
    cfg = config.train_config()
    params, log = train(train_ds, cfg, schedule, profile=profile,
                        model_config=config.model_config())

    run_id = run_id or f"run-{config.config_hash}-s{cfg.seed}"
    out = Path(runs_dir) / run_id
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.to_json())
    save_checkpoint(out / "checkpoint.bin", params, cfg,
                    extra={"run_id": run_id})
    (out / "train_log.csv").write_text(log_to_csv(log))

    report: dict = {"run_id": run_id, "config_hash": config.config_hash,
                    "train_loss_final": log[-1].loss, "timestamp": time.time()}
    final_oiou = None
    if evaluate:
        ev = config.data["eval"]
        cps = evaluation.group_checkpoints(schedule.T, cfg.groups, ev["steps"])
        rep = evaluation.evaluate_model(
            params, val_ds, schedule, steps=ev["steps"],
            weights=config.guidance_weights(), target_kind=cfg.target_kind,
            seed=ev["seed"], checkpoint_ts=cps, extraction=config.extraction())
        report["eval"] = rep.to_dict()
        final_oiou = rep.final_oiou
    (out / "report.json").write_text(json.dumps(report, indent=2))
    return RunRecord(run_id=run_id, config_hash=config.config_hash, directory=out,
                     final_oiou=final_oiou, report=report)


def run_trace(config: ExperimentConfig, checkpoint: str | Path,
              out_path: str | Path | None = None, steps: int | None = None,
              dataset: Dataset | None = None) -> MetricTrace:
    """Collect a metric trace from an existing checkpoint."""
    params, header = load_checkpoint(checkpoint)
    schedule = config.schedule()
    if dataset is None:
        _, dataset = build_datasets(config)
    ev = config.data["eval"]
    trace = evaluation.collect_trace(
        params, dataset, schedule, steps=steps or ev["steps"],
        B=config.data["train"]["groups"], weights=config.guidance_weights(),
        target_kind=header.get("target_kind", "eps"), seed=ev["seed"],
        extraction=config.extraction())
    if out_path is not None:
        Path(out_path).write_text(trace.to_csv())
    return trace


def estimate_profile(config: ExperimentConfig, trace: MetricTrace | None = None,
                     floor: float = 0.01) -> ContributionProfile:
    """schedule-derived profile, or statistics-derived when a trace is given."""
    schedule = config.schedule()
    B = config.data["train"]["groups"]
    if trace is None:
        return schedule_profile(schedule, B)
    return stats_profile(trace, floor=floor, T=schedule.T)


def run_ablation(configs: list[tuple[str, ExperimentConfig]], seeds: list[int],
                 runs_dir: str | Path) -> dict:
    """Train/evaluate a config grid across seeds; emit a mean/std report.

    Diverged cells are marked failed; the report is still produced.
    """
    datasets_cache: dict[str, tuple[Dataset, Dataset]] = {}
    rows = []
    for name, base in configs:
        cell_ious, curves, failed = [], [], []
        for seed in seeds:
            config = base.with_overrides({"train.seed": seed})
            task_key = json.dumps(config.data["task"], sort_keys=True)
            if task_key not in datasets_cache:
                datasets_cache[task_key] = build_datasets(config)
            try:
                rec = run_training(config, runs_dir, run_id=f"{name}-s{seed}",
                                   datasets=datasets_cache[task_key])
                cell_ious.append(rec.final_oiou)
                curves.append(rec.report["eval"]["checkpoint_oiou"])
            except Exception as exc:  # divergence or similar; keep the grid going
                failed.append({"seed": seed, "error": str(exc)})
        rows.append({
            "name": name,
            "seeds": seeds,
            "oiou_values": cell_ious,
            "oiou_mean": float(np.mean(cell_ious)) if cell_ious else None,
            "oiou_std": float(np.std(cell_ious)) if cell_ious else None,
            "checkpoint_curves": curves,
            "failed": failed,
        })
    report = {"cells": rows}
    out = Path(runs_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation_report.json").write_text(json.dumps(report, indent=2))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "oiou_mean", "oiou_std", "n_ok", "n_failed"])
    for r in rows:
        w.writerow([r["name"], r["oiou_mean"], r["oiou_std"],
                    len(r["oiou_values"]), len(r["failed"])])
    (out / "ablation_report.csv").write_text(buf.getvalue())
    return report


# --- CLI -----------------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _config_from_args(args) -> ExperimentConfig:
    config = (ExperimentConfig.from_json(Path(args.config).read_text())
              if args.config else ExperimentConfig.from_dict())
    if args.set:
        config = config.with_overrides({k: _parse_value(v) for k, v in
                                        (item.split("=", 1) for item in args.set)})
    return config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="percdiff")
    parser.add_argument("--config", help="path to a JSON config", default=None)
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", help="dot-path config override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate and persist train/val datasets")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--runs", default="runs")
    p.add_argument("--run-id", default=None)

    p = sub.add_parser("trace", help="collect a metric trace from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)

    p = sub.add_parser("estimate", help="estimate a contribution profile")
    p.add_argument("--trace", default=None, help="trace CSV; omit for schedule-derived")
    p.add_argument("--floor", type=float, default=0.01)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the validation set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("ablate", help="run the standard strategy/augmentation grid")
    p.add_argument("--runs", default="runs")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--profile", required=True, help="statistics profile JSON")

    p = sub.add_parser("workflow", help="run the correction workflow on one scene")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--k", type=int, default=3)

    p = sub.add_parser("serve", help="start the HTTP studio backend")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8601)

    p = sub.add_parser("demo", help="quick end-to-end smoke demo (tiny settings)")
    p.add_argument("--runs", default="runs")

    args = parser.parse_args(argv)
    config = _config_from_args(args)

    if args.command == "gen-data":
        train_ds, val_ds = build_datasets(config)
        train_ds.save(Path(args.out) / "train")
        val_ds.save(Path(args.out) / "val")
        print(f"wrote {len(train_ds)} train / {len(val_ds)} val scenes to {args.out}")
    elif args.command == "train":
        rec = run_training(config, args.runs, run_id=args.run_id)
        print(json.dumps(rec.report, indent=2))
    elif args.command == "trace":
        trace = run_trace(config, args.checkpoint, out_path=args.out,
                          steps=args.steps)
        print(f"wrote trace for {trace.sample_count} samples to {args.out}")
    elif args.command == "estimate":
        trace = MetricTrace.from_csv(Path(args.trace).read_text()) if args.trace else None
        profile = estimate_profile(config, trace, floor=args.floor)
        Path(args.out).write_text(profile.to_json())
        print(profile.to_json())
    elif args.command == "eval":
        params, header = load_checkpoint(args.checkpoint)
        _, val_ds = build_datasets(config)
        schedule = config.schedule()
        ev = config.data["eval"]
        cps = evaluation.group_checkpoints(schedule.T, config.data["train"]["groups"],
                                           ev["steps"])
        rep = evaluation.evaluate_model(
            params, val_ds, schedule, steps=ev["steps"],
            weights=config.guidance_weights(),
            target_kind=header.get("target_kind", "eps"), seed=ev["seed"],
            checkpoint_ts=cps, extraction=config.extraction())
        text = json.dumps(rep.to_dict(), indent=2)
        if args.out:
            Path(args.out).write_text(text)
        print(text)
    elif args.command == "ablate":
        grid = standard_ablation_grid(config, args.profile)
        report = run_ablation(grid, args.seeds, args.runs)
        print(json.dumps({r["name"]: r["oiou_mean"] for r in report["cells"]}, indent=2))
    elif args.command == "workflow":
        params, header = load_checkpoint(args.checkpoint)
        from .toytask import generate_scene
        scene, cond, gt = generate_scene(config.task_config(),
                                         np.random.default_rng(args.scene_seed))
        wf = config.data["workflow"]
        mask, prov = run_correction_workflow(
            params, scene, cond, args.k, config.guidance_weights(),
            config.schedule(), wf["steps"], wf["seed"],
            target_kind=header.get("target_kind", "eps"), gt_mask=gt)
        from .toytask import iou as _iou
        print(json.dumps({"iou": _iou(mask, gt), "provenance": prov.to_dict()}, indent=2))
    elif args.command == "serve":
        from .server import serve
        serve(config, args.checkpoint, host=args.host, port=args.port)
    elif args.command == "demo":
        demo_config = config.with_overrides({
            "task.train_scenes": 64, "task.val_scenes": 16, "train.epochs": 2,
            "schedule.T": 100, "eval.steps": 20, "eval.samples": 16,
        })
        rec = run_training(demo_config, args.runs, run_id="demo")
        print(json.dumps(rec.report, indent=2))
    return 0


def standard_ablation_grid(base: ExperimentConfig, profile_path: str
                           ) -> list[tuple[str, ExperimentConfig]]:
    """Uniform vs prob-scaling vs full pipeline, as in the headline ablation."""
    return [
        ("uniform", base.with_overrides({"train.strategy": "uniform"})),
        ("prob_stats", base.with_overrides({
            "train.strategy": "prob_scaling", "train.profile": profile_path})),
        ("full", base.with_overrides({
            "train.strategy": "prob_scaling", "train.profile": profile_path,
            "augment.enabled": True, "train.target_kind": "x0"})),
    ]


if __name__ == "__main__":
    sys.exit(main())
