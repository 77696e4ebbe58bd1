"""Command-line interface.

Subcommands: gen-data, train, eval, ablate, export-attention, run-recipe.
Every subcommand accepts --config (YAML/JSON run config), --seed, and
--out-dir where applicable; errors exit nonzero with a readable message.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, load_config
from .data import build_dataset, load_manifest, save_manifest
from .decoder import attention_maps, write_attention_overlays
from .pipeline import (
    ablate,
    evaluate,
    load_checkpoint,
    oracle_heatmaps,
    train,
)
from .pose import load_keypoint_file
from .recipes import RECIPES, run_recipe
from .reporting import format_table, write_eval_report


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.data.seed = args.seed
    cfg.validate()
    return cfg


def _cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    manifest = build_dataset(cfg.data)
    out = save_manifest(manifest, args.out_dir)
    counts = {}
    for r in manifest.records:
        counts[r.split] = counts.get(r.split, 0) + 1
    print(f"wrote {len(manifest.records)} records to {out}")
    for split in ("train", "query", "gallery"):
        print(f"  {split}: {counts.get(split, 0)}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    manifest = load_manifest(args.data)
    # The manifest's embedded data config is authoritative for this run.
    cfg.data = manifest.config
    cfg.validate()
    result = train(cfg, manifest, args.out_dir)
    print(f"trained {result.total_steps} steps; final loss {result.final_loss:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"metrics:    {result.metrics_path}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    loaded = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.data)
    pose_records = None
    if args.pose_file:
        pose_records = load_keypoint_file(args.pose_file, num_keypoints=loaded.num_keypoints)
    result, _, _ = evaluate(
        loaded,
        manifest,
        query_split=args.query_split,
        gallery_split=args.gallery_split,
        max_rank=args.max_rank,
        pose_records=pose_records,
        pose_noise_sigma=args.pose_noise_sigma,
        noise_seed=loaded.cfg.seed,
    )
    paths = write_eval_report(result, args.out_dir)
    print(result.summary())
    print(f"report: {paths['csv']}, {paths['figure']}")
    return 0


def _parse_values(param: str, raw: str) -> list:
    items = [v.strip() for v in raw.split(",") if v.strip()]
    if param in ("num_views", "decoder_layers"):
        return [int(v) for v in items]
    if param in ("conf_threshold", "pose_noise_sigma"):
        return [float(v) for v in items]
    return items


def _cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    manifest = load_manifest(args.data)
    cfg.data = manifest.config
    cfg.validate()
    values = _parse_values(args.param, args.values) if args.values else []
    if args.param != "modules" and not values:
        raise ValueError("--values is required for this parameter")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    report = ablate(
        cfg, args.data, args.param, values, args.out_dir, seeds=seeds, parallel=args.parallel
    )
    print(
        format_table(
            ["value", "rank1", "rank5", "rank10", "mAP", "seeds"],
            [
                [r["value"], f"{r['rank1']:.4f}", f"{r['rank5']:.4f}", f"{r['rank10']:.4f}", f"{r['map']:.4f}", r["seeds"]]
                for r in report.summary_rows
            ],
        )
    )
    print(f"report: {report.out_dir / 'table.csv'}, {report.out_dir / 'sweep.png'}")
    return 0


def _cmd_export_attention(args: argparse.Namespace) -> int:
    loaded = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.data)
    if loaded.cfg.model.decoder_layers < 1:
        raise ValueError("attention export needs at least one decoder layer")
    if args.image_ids:
        image_ids = [v.strip() for v in args.image_ids.split(",") if v.strip()]
    else:
        image_ids = [manifest.split("query")[0].image_id]
    out_dir = Path(args.out_dir)
    model_cfg = loaded.cfg.model
    for image_id in image_ids:
        record = manifest.record(image_id)
        hs = oracle_heatmaps(
            record, loaded.image_hw, model_cfg.blob_sigma, model_cfg.conf_threshold
        )
        with torch.no_grad():
            images_t = torch.from_numpy(
                np.ascontiguousarray(record.image.astype(np.float32).transpose(2, 0, 1))
            ).unsqueeze(0)
            out = loaded.net(
                images_t,
                torch.tensor([record.camera_id]),
                torch.from_numpy(hs.maps.astype(np.float32)).unsqueeze(0),
                torch.from_numpy(hs.labels.astype(np.int64)).unsqueeze(0),
            )
        per_view, fused = attention_maps(
            out.attentions[-1][0].numpy(),
            loaded.image_hw,
            model_cfg.patch_size,
            model_cfg.patch_stride,
        )
        paths = write_attention_overlays(per_view, fused, record.image, out_dir, image_id)
        print(f"{image_id}: wrote {len(paths)} maps to {out_dir}")
    return 0


def _cmd_run_recipe(args: argparse.Namespace) -> int:
    result = run_recipe(args.name, args.out_dir, seed=args.seed or 0, parallel=args.parallel)
    print((result.out_dir / "summary.txt").read_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="posereid",
        description="Pose-guided occluded person re-identification on synthetic data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic dataset directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint (CMC/mAP)")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--query-split", default="query")
    p.add_argument("--gallery-split", default="gallery")
    p.add_argument("--max-rank", type=int, default=10)
    p.add_argument("--pose-file", help="JSONL keypoint file replacing the pose oracle")
    p.add_argument("--pose-noise-sigma", type=float, default=0.0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="sweep one parameter and report")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument(
        "--param",
        required=True,
        choices=["num_views", "decoder_layers", "conf_threshold", "pose_noise_sigma", "modules"],
    )
    p.add_argument("--values", help="comma-separated sweep values (optional for modules)")
    p.add_argument("--seeds", help="comma-separated seeds (default: config seed)")
    p.add_argument("--parallel", action="store_true")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("export-attention", help="write per-view attention overlays")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--image-ids", help="comma-separated image ids (default: first query)")
    p.set_defaults(func=_cmd_export_attention)

    p = sub.add_parser("run-recipe", help="run a scripted experiment")
    p.add_argument("name", choices=sorted(RECIPES))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--parallel", action="store_true")
    p.set_defaults(func=_cmd_run_recipe)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surfaced as exit status, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
