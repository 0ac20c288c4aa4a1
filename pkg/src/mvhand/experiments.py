"""Ablation grids: window sizes, adjacency types, baselines, recurrent variants.

Every grid row is a model configuration trained two-stage from scratch
per seed and scored on the protocol's test split; output is an aligned
plain-text table (EPE/AUC plus per-joint-class and per-finger columns)
and one PCK curve CSV per row and seed.
"""

from __future__ import annotations

import os
from dataclasses import replace

import numpy as np

from .errors import ConfigError, ContractError
from .handgen.dataset import Clip, select_clips
from .metrics import EvalReport, evaluate_model
from .pipeline import ModelConfig
from .training import TrainingConfig, train_two_stage

GRID_KINDS = ("window-sizes", "adjacency-modes", "ablation-baselines", "recurrent-variants")
WINDOW_SIZES = (3, 5, 7, 9, 11)
RANDOM_ADJACENCY_SEEDS = (101, 202, 303)

TABLE_COLUMNS = ("epe_mean", "epe_median", "auc", "Wrist", "MCP", "PIP", "DIP", "TIP",
                 "Thumb", "Index", "Middle", "Ring", "Pinkie")


def grid_rows(kind: str, base: ModelConfig, window_sizes=None):
    """(label, ModelConfig) rows for one grid kind."""
    if kind == "window-sizes":
        sizes = tuple(window_sizes) if window_sizes else WINDOW_SIZES
        for w in sizes:
            if w not in WINDOW_SIZES:
                raise ConfigError(f"window size {w} not in the studied set {WINDOW_SIZES}")
        return [(f"window-{w}", replace(base, window=w)) for w in sizes]
    if kind == "adjacency-modes":
        rows = [(f"rand-{i + 1}", replace(base, adjacency_mode="random-seeded",
                                          adjacency_seed=s))
                for i, s in enumerate(RANDOM_ADJACENCY_SEEDS)]
        rows.append(("hand-skeleton", replace(base, adjacency_mode="hand-skeleton")))
        rows.append(("learned", replace(base, adjacency_mode="learned")))
        return rows
    if kind == "ablation-baselines":
        return [("baseline-1", replace(base, variant="baseline1-no-temporal")),
                ("baseline-2", replace(base, variant="baseline2-no-angular")),
                ("baseline-3", replace(base, variant="baseline3-single-frame")),
                ("full", replace(base, variant="full"))]
    if kind == "recurrent-variants":
        return [("gru-both", replace(base, variant="gru-both")),
                ("lstm_v-gru_t", replace(base, variant="lstm_v-gru_t")),
                ("lstm_t-gru_v", replace(base, variant="lstm_t-gru_v")),
                ("autoenc", replace(base, variant="autoenc-lifter")),
                ("gcn-only", replace(base, variant="gcn-only-lifter")),
                ("full", replace(base, variant="full"))]
    raise ConfigError(f"unknown grid kind {kind!r}; choose from {GRID_KINDS}")


def slice_clip(clip: Clip, views: int, window: int) -> Clip:
    """First `views` x `window` cells of a clip (for window-size sweeps)."""
    if views > clip.views or window > clip.window:
        raise ConfigError(
            f"clip provides ({clip.views}, {clip.window}), requested ({views}, {window})")
    return Clip(subject=clip.subject, activity=clip.activity, clip_index=clip.clip_index,
                truncated=clip.truncated,
                images=clip.images[:views, :window],
                joints2d=clip.joints2d[:views, :window],
                joints3d_cam=clip.joints3d_cam[:views, :window],
                joints3d_world=clip.joints3d_world[:views, :window],
                intrinsics=clip.intrinsics[:views],
                extrinsics=clip.extrinsics[:views, :window],
                lighting=clip.lighting[:window],
                camera_angles=clip.camera_angles[:views],
                camera_kinds=clip.camera_kinds[:views])


def run_experiment(kind: str, clips, base_config: ModelConfig,
                   stage1_cfg: TrainingConfig, stage2_cfg: TrainingConfig,
                   seeds=(1,), protocol: str = "holdout-clips",
                   window_sizes=None, threads: int = 1):
    """Train and evaluate every row x seed; returns result row dicts."""
    rows = grid_rows(kind, base_config, window_sizes)
    train_all = select_clips(clips, "train", protocol)
    test_all = select_clips(clips, "test", protocol)
    if not train_all or not test_all:
        raise ContractError(
            f"protocol {protocol!r} leaves an empty split "
            f"(train={len(train_all)}, test={len(test_all)})")
    results = []
    for label, row_cfg in rows:
        for seed in seeds:
            model_cfg = replace(row_cfg, seed=int(seed))
            train = [slice_clip(c, model_cfg.views, model_cfg.window) for c in train_all]
            test = [slice_clip(c, model_cfg.views, model_cfg.window) for c in test_all]
            model, _, _ = train_two_stage(
                model_cfg, train,
                replace(stage1_cfg, seed=int(seed)), replace(stage2_cfg, seed=int(seed)))
            report = evaluate_model(model, test, threads=threads)
            results.append({"label": label, "seed": int(seed), "report": report})
    return results


def _row_values(report: EvalReport):
    vals = [report.epe_mean, report.epe_median, report.auc]
    vals += [report.per_class[k] for k in ("Wrist", "MCP", "PIP", "DIP", "TIP")]
    vals += [report.per_finger[k] for k in ("Thumb", "Index", "Middle", "Ring", "Pinkie")]
    return vals


def format_table(results) -> str:
    """Aligned plain-text table, one row per (label, seed)."""
    header = ["label", "seed"] + list(TABLE_COLUMNS)
    body = [[r["label"], str(r["seed"])] + [f"{v:.3f}" for v in _row_values(r["report"])]
            for r in results]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for row in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def write_experiment(out_dir, kind: str, results) -> dict:
    """table.txt plus one monotone 51-sample PCK curve file per row."""
    os.makedirs(out_dir, exist_ok=True)
    table_path = os.path.join(out_dir, f"{kind}-table.txt")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(format_table(results))
    curve_paths = []
    for r in results:
        name = f"pck_{r['label']}_seed{r['seed']}.csv"
        curve_path = os.path.join(out_dir, name)
        with open(curve_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(r["report"].curve_rows()) + "\n")
        curve_paths.append(curve_path)
    return {"table": table_path, "curves": curve_paths}
