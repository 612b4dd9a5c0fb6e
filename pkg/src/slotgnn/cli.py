"""Command-line interface: gen-data, train, eval, infer, similarity."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import SlotGnnError
from .evaluation import (DEFAULT_THRESHOLD_PX, evaluate_records,
                         similarity_report)
from .params import (GnnConfig, LossWeights, ModelConfig, load_checkpoint,
                     save_checkpoint)
from .pipeline import infer_image
from .render import read_ppm, render_overlay, write_ppm
from .scenes import SceneConfig, generate_dataset, read_dataset, write_dataset
from .training import TrainConfig, train


def _cmd_gen_data(args) -> int:
    config = SceneConfig(image_size=args.image_size, slots_min=args.slots_min,
                         slots_max=args.slots_max, distractors=args.distractors,
                         noise_amplitude=args.noise)
    records = generate_dataset(config, args.count, args.seed)
    write_dataset(records, args.out)
    print(f"wrote {len(records)} scenes to {args.out}")
    if args.ppm_dir is not None:
        os.makedirs(args.ppm_dir, exist_ok=True)
        for rec in records:
            write_ppm(rec.image, os.path.join(args.ppm_dir, f"scene-{rec.seed}.ppm"))
        print(f"wrote {len(records)} PPM images to {args.ppm_dir}")
    return 0


def _cmd_train(args) -> int:
    records = read_dataset(args.data)
    variant = args.variant.replace("-", "_")
    model_config = ModelConfig(
        gnn=GnnConfig(layers=args.layers, heads=args.heads, variant=variant),
        loss_weights=LossWeights(point=args.lambda1, line=args.lambda2),
        use_positional_encoder=not args.no_pos_encoder)
    tconfig = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                          lr=args.lr, seed=args.seed)

    def log(stats):
        print(f"epoch {stats.epoch + 1}/{args.epochs}  "
              f"point {stats.point_loss:.5f}  line {stats.line_loss:.5f}  "
              f"total {stats.total_loss:.5f}  ({stats.seconds:.1f}s)", flush=True)

    params, _ = train(records, model_config, tconfig, progress=log)
    save_checkpoint(params, args.out)
    print(f"wrote checkpoint to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    params = load_checkpoint(args.ckpt)
    records = read_dataset(args.data)
    report = evaluate_records(params, records, args.threshold_px,
                              ordered=not args.any_order)
    if args.json:
        print(json.dumps(report.to_dict()))
    else:
        print(f"scenes {len(records)}  TP {report.true_positives}  "
              f"FP {report.false_positives}  FN {report.false_negatives}")
        print(f"precision {report.precision:.4f}  recall {report.recall:.4f}  "
              f"f1 {report.f1:.4f}")
    return 0


def _cmd_infer(args) -> int:
    params = load_checkpoint(args.ckpt)
    image = read_ppm(args.image).astype(np.float64) / 255.0
    points, _, slots = infer_image(image, params)
    render_overlay(image, slots, args.out)
    print(f"{len(points)} marking points, {len(slots)} slots; overlay at {args.out}")
    for s in slots:
        print(f"  slot ({s.x1:.4f}, {s.y1:.4f}) -> ({s.x2:.4f}, {s.y2:.4f})  "
              f"confidence {s.t:.3f}")
    return 0


def _cmd_similarity(args) -> int:
    params = load_checkpoint(args.ckpt)
    records = read_dataset(args.data)
    report = similarity_report(params, records)
    if args.json:
        print(json.dumps(report.to_dict()))
    else:
        print(f"pairs {report.pair_count}  non-pairs {report.non_pair_count}")
        print(f"before relational stage: paired {report.paired_before:+.4f}  "
              f"unpaired {report.unpaired_before:+.4f}  gap {report.gap_before():+.4f}")
        print(f"after relational stage:  paired {report.paired_after:+.4f}  "
              f"unpaired {report.unpaired_after:+.4f}  gap {report.gap_after():+.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slotgnn",
        description="Graph-attention parking-slot detector on synthetic scenes")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a labeled synthetic dataset")
    gen.add_argument("--out", required=True)
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--image-size", type=int, default=256)
    gen.add_argument("--slots-min", type=int, default=1)
    gen.add_argument("--slots-max", type=int, default=3)
    gen.add_argument("--distractors", type=int, default=3)
    gen.add_argument("--noise", type=float, default=0.02)
    gen.add_argument("--ppm-dir", help="also dump each scene as a PPM image")
    gen.set_defaults(func=_cmd_gen_data)

    tr = sub.add_parser("train", help="train a model and write a checkpoint")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--epochs", type=int, default=30)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--batch-size", type=int, default=24)
    tr.add_argument("--lr", type=float, default=0.001)
    tr.add_argument("--variant", choices=["attentional", "fcn-baseline"],
                    default="attentional")
    tr.add_argument("--layers", type=int, default=3)
    tr.add_argument("--heads", type=int, default=4)
    tr.add_argument("--lambda1", type=float, default=100.0,
                    help="point-loss weight")
    tr.add_argument("--lambda2", type=float, default=1.0,
                    help="line-loss weight")
    tr.add_argument("--no-pos-encoder", action="store_true",
                    help="drop the positional encoding from node features")
    tr.set_defaults(func=_cmd_train)

    ev = sub.add_parser("eval", help="precision/recall of a checkpoint on a dataset")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--threshold-px", type=float, default=DEFAULT_THRESHOLD_PX,
                    help="match threshold in pixels at the 600 px reference scale")
    ev.add_argument("--any-order", action="store_true",
                    help="allow matches with swapped endpoints (diagnostic)")
    ev.add_argument("--json", action="store_true")
    ev.set_defaults(func=_cmd_eval)

    inf = sub.add_parser("infer", help="detect slots in a PPM image")
    inf.add_argument("--ckpt", required=True)
    inf.add_argument("--image", required=True)
    inf.add_argument("--out", default="overlay.ppm")
    inf.set_defaults(func=_cmd_infer)

    sim = sub.add_parser("similarity", help="feature-similarity diagnostics")
    sim.add_argument("--ckpt", required=True)
    sim.add_argument("--data", required=True)
    sim.add_argument("--json", action="store_true")
    sim.set_defaults(func=_cmd_similarity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SlotGnnError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
