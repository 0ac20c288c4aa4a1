"""Command line entry point: generate, train, eval, ablate, gradcheck, inspect.

Every run takes an optional key=value config file plus repeatable
--set key=value overrides (overrides win) and echoes its effective
configuration to the output directory; feeding that file back reproduces
the run byte-for-byte. Timestamps only ever go to the run-info sidecar.

Exit codes: 0 ok, 2 usage, 3 config/contract, 4 I/O or file format,
5 numeric or invariant failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import configfile
from .errors import (ConfigError, ContractError, DimensionError, FormatError,
                     MvHandError, NumericError, WorkflowError)
from .pipeline import (CHECKPOINT_MAGIC, ModelConfig, build_variant, load_checkpoint,
                       save_checkpoint, stage1_config_for)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_NUMERIC = 5

KNOWN_PREFIXES = ("data.", "model.", "train.stage1.", "train.stage2.",
                  "train.", "eval.", "ablate.")


def _collect_config(args) -> dict:
    file_cfg = configfile.read_config(args.config) if getattr(args, "config", None) else {}
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    merged = configfile.merge_configs(file_cfg, overrides)
    configfile.check_known_keys(merged, KNOWN_PREFIXES)
    return merged


def _echo_config(out_dir: str, command: str, effective: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    configfile.write_config(os.path.join(out_dir, "effective-config.cfg"), effective,
                            header_comments=(f"command={command}",))
    # timestamps live only in this sidecar so primary artifacts stay reproducible
    with open(os.path.join(out_dir, "run-info.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"command={command}\nwall_clock={time.strftime('%Y-%m-%dT%H:%M:%S')}\n")


def _dataset_config(config: dict):
    from .handgen.dataset import DatasetConfig
    cfg = configfile.build_dataclass(DatasetConfig, config, "data.")
    cfg.validate()
    return cfg


def _model_config(config: dict, dataset_header=None) -> ModelConfig:
    extra = {}
    if dataset_header is not None:
        for field, key in (("views", "views"), ("window", "window"),
                           ("resolution", "resolution")):
            if "model." + field not in config:
                extra[field] = int(dataset_header[key])
    cfg = configfile.build_dataclass(ModelConfig, config, "model.", **extra)
    cfg.validate()
    return cfg


def _training_configs(config: dict):
    from .training import desk_stage1, desk_stage2, paper_stage1, paper_stage2
    scale = config.get("train.scale", "desk")
    if scale == "desk":
        base1, base2 = desk_stage1(), desk_stage2()
    elif scale == "paper":
        base1, base2 = paper_stage1(), paper_stage2()
    else:
        raise ConfigError(f"train.scale must be desk or paper, got {scale!r}")
    from .training import TrainingConfig
    cfg1 = configfile.build_dataclass(
        TrainingConfig, configfile.merge_configs(
            configfile.dataclass_to_config(base1, "train.stage1."), config),
        "train.stage1.", stage=1)
    cfg2 = configfile.build_dataclass(
        TrainingConfig, configfile.merge_configs(
            configfile.dataclass_to_config(base2, "train.stage2."), config),
        "train.stage2.", stage=2)
    cfg1.validate()
    cfg2.validate()
    return cfg1, cfg2


def _load_clips(path):
    from .handgen.dataset import read_dataset
    header, clips = read_dataset(path)
    return header, clips


def cmd_generate(args) -> int:
    config = _collect_config(args)
    cfg = _dataset_config(config)
    os.makedirs(args.out, exist_ok=True)
    from .handgen.dataset import generate_dataset
    summary = generate_dataset(cfg, os.path.join(args.out, "dataset.mvds"),
                               threads=args.threads)
    effective = configfile.dataclass_to_config(cfg, "data.")
    _echo_config(args.out, "generate", effective)
    print(f"wrote {summary['path']} ({summary['n_clips']} clips, "
          f"{summary['n_frames']} frames) and {summary['manifest']}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .handgen.dataset import select_clips
    from .training import train_stage1, train_stage2, train_two_stage, transfer_stage1_weights
    config = _collect_config(args)
    header, clips = _load_clips(args.dataset)
    model_cfg = _model_config(config, header)
    cfg1, cfg2 = _training_configs(config)
    protocol = config.get("train.protocol", "cross-subject")
    split = config.get("train.split", "train")
    train_clips = select_clips(clips, split, protocol)
    if not train_clips:
        raise ConfigError(f"no training clips for protocol {protocol!r} split {split!r}")

    os.makedirs(args.out, exist_ok=True)
    log_lines = []
    if args.stage == "both":
        model, stage1_model, log_lines = train_two_stage(model_cfg, train_clips, cfg1, cfg2)
        save_checkpoint(stage1_model, os.path.join(args.out, "stage1.ckpt"),
                        stage=1, epoch=cfg1.epochs, seed=cfg1.seed)
        save_checkpoint(model, os.path.join(args.out, "final.ckpt"),
                        stage=2, epoch=cfg2.epochs, seed=cfg2.seed)
    elif args.stage == "1":
        model = build_variant(stage1_config_for(model_cfg))
        train_stage1(model, train_clips, cfg1, log_lines)
        save_checkpoint(model, os.path.join(args.out, "stage1.ckpt"),
                        stage=1, epoch=cfg1.epochs, seed=cfg1.seed)
    else:  # stage 2
        if not args.stage1_checkpoint:
            raise WorkflowError("stage 2 requires --stage1-checkpoint from a stage-1 run")
        stage1_model, _ = load_checkpoint(args.stage1_checkpoint,
                                          expect_variant="stage1-surrogate")
        model = build_variant(model_cfg)
        transfer_stage1_weights(model, stage1_model)
        train_stage2(model, train_clips, cfg2, log_lines)
        save_checkpoint(model, os.path.join(args.out, "final.ckpt"),
                        stage=2, epoch=cfg2.epochs, seed=cfg2.seed)

    with open(os.path.join(args.out, "train-log.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(log_lines) + ("\n" if log_lines else ""))
    effective = configfile.merge_configs(
        configfile.dataclass_to_config(model_cfg, "model."),
        configfile.dataclass_to_config(cfg1, "train.stage1."),
        configfile.dataclass_to_config(cfg2, "train.stage2."),
        {"train.protocol": protocol, "train.split": split,
         "train.scale": config.get("train.scale", "desk")})
    _echo_config(args.out, "train", effective)
    print(f"trained {model_cfg.variant} on {len(train_clips)} clips; "
          f"checkpoints in {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .handgen.dataset import select_clips
    from .metrics import evaluate_model, evaluate_poses
    config = _collect_config(args)
    _, clips = _load_clips(args.dataset)
    protocol = config.get("eval.protocol", "cross-subject")
    split = config.get("eval.split", "test")
    chosen = select_clips(clips, split, protocol)
    if not chosen:
        raise ConfigError(f"no clips for protocol {protocol!r} split {split!r}")

    if args.self_eval:
        gt = np.concatenate([c.joints3d_cam.reshape(-1, 21, 3) for c in chosen])
        report = evaluate_poses(gt, gt)
        label = "self-eval (ground truth as prediction)"
    else:
        if not args.checkpoint:
            raise ConfigError("eval needs --checkpoint (or --self-eval)")
        model, _ = load_checkpoint(args.checkpoint)
        report = evaluate_model(model, chosen, threads=args.threads)
        label = args.checkpoint

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"evaluated   {label}\n")
        fh.write(f"protocol    {protocol} split {split} clips {len(chosen)}\n")
        fh.write("\n".join(report.lines()) + "\n")
    with open(os.path.join(args.out, "pck_curve.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(report.curve_rows()) + "\n")
    _echo_config(args.out, "eval", configfile.merge_configs(
        config, {"eval.protocol": protocol, "eval.split": split}))
    for line in report.lines():
        print(line)
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .experiments import run_experiment, write_experiment, format_table
    config = _collect_config(args)
    header, clips = _load_clips(args.dataset)
    model_cfg = _model_config(config, header)
    cfg1, cfg2 = _training_configs(config)
    protocol = config.get("ablate.protocol", "holdout-clips")
    seeds = [int(s) for s in (args.seeds or "1").split(",") if s]
    window_sizes = None
    if "ablate.window_sizes" in config:
        window_sizes = [int(w) for w in config["ablate.window_sizes"].split(",") if w]
    results = run_experiment(args.grid, clips, model_cfg, cfg1, cfg2,
                             seeds=seeds, protocol=protocol,
                             window_sizes=window_sizes, threads=args.threads)
    paths = write_experiment(args.out, args.grid, results)
    _echo_config(args.out, "ablate", configfile.merge_configs(
        configfile.dataclass_to_config(model_cfg, "model."),
        {"ablate.protocol": protocol, "ablate.grid": args.grid,
         "ablate.seeds": ",".join(str(s) for s in seeds)}))
    print(format_table(results), end="")
    print(f"table: {paths['table']} ({len(paths['curves'])} PCK curve files)")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_full_suite
    dtypes = ("float32", "float64") if args.dtype == "both" else (args.dtype,)
    all_ok = True
    lines = []
    for dt in dtypes:
        results, ok = run_full_suite(dtype=dt, n_cases=args.cases)
        all_ok = all_ok and ok
        lines.append(f"# precision {dt}")
        lines += [r.line() for r in results]
    report = "\n".join(lines) + "\n"
    print(report, end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "gradcheck-report.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(report)
    if not all_ok:
        raise NumericError("gradient check failed; see report above")
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .handgen.dataset import parse_dataset_header, read_manifest
    with open(args.path, "rb") as fh:
        first = fh.readline().decode(errors="replace").strip()
    if first.startswith(CHECKPOINT_MAGIC):
        model, meta = load_checkpoint(args.path)
        print(f"checkpoint {args.path}")
        print(f"variant={model.config.variant} stage={meta['stage']} "
              f"epoch={meta['epoch']} seed={meta['seed']}")
        print(f"parameters={len(model.store.params)} values={model.store.num_values()}")
        print(f"frozen={','.join(sorted(model.store.frozen)) or '-'}")
        for name in model.store.names():
            print(f"  {name} {tuple(model.store[name].shape)}")
        return EXIT_OK
    if first.startswith("MVHANDDS"):
        header = parse_dataset_header(first)
        print(f"dataset {args.path}")
        for key, value in header.items():
            print(f"  {key}={value}")
        manifest = args.path + ".manifest"
        if os.path.exists(manifest):
            rows = read_manifest(manifest)["rows"]
            truncated = sum(r["truncated"] for r in rows)
            print(f"  manifest_rows={len(rows)} total_truncated_joints={truncated}")
        return EXIT_OK
    if first.startswith("MVHANDMANIFEST"):
        manifest = read_manifest(args.path)
        print(f"manifest {args.path}")
        for key, value in manifest["info"].items():
            print(f"  {key}={value}")
        for key, value in manifest["splits"].items():
            print(f"  {key}={value}")
        return EXIT_OK
    raise FormatError(f"unrecognized file: {args.path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvhand",
        description="multi-view video 3D hand pose: data generation, training, evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--threads", type=int, default=1)
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("generate", help="write a synthetic multi-view dataset")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="two-stage training on a dataset")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--stage", choices=("1", "2", "both"), default="both")
    p.add_argument("--stage1-checkpoint", help="required when --stage 2")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint (or ground truth) on a split")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--self-eval", action="store_true",
                   help="evaluate ground truth against itself (EPE 0 / AUC 1)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation grid")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--grid", required=True,
                   choices=("window-sizes", "adjacency-modes",
                            "ablation-baselines", "recurrent-variants"))
    p.add_argument("--seeds", default="1", help="comma-separated seeds")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every primitive and module")
    common(p, needs_out=False)
    p.add_argument("--out", help="optional directory for the report")
    p.add_argument("--dtype", choices=("float32", "float64", "both"), default="both")
    p.add_argument("--cases", type=int, default=20, help="random shapes per primitive")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="describe a dataset, manifest, or checkpoint")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError, DimensionError, WorkflowError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except NumericError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except MvHandError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
