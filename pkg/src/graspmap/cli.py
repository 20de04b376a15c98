"""``graspmap`` command line: synth, train, predict, evaluate, render, rank.

Exit codes: 0 on success, 1 when an operation fails (I/O, shape mismatch,
nothing usable predicted), 2 for usage errors and missing inputs.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .config import SPLIT_NAMES, format_settings, load_settings
from .data import AnnotatedSample, generate_synthetic, load_dataset, make_splits, preprocess, write_dataset
from .data.cornell import parse_cornell_annotations
from .data.transforms import CROP_SIZE, IMAGE_SIZE, DroppedGraspWarning, crop_matrix, transform_rect
from .errors import AllDiscarded, ConfigError, GraspMapError, IoFailure, ShapeMismatch
from .geometry import (
    belief_map_to_png,
    decode_belief_map,
    load_belief_map,
    rectangle_to_corners,
    save_belief_map,
)
from .gmm import DISCARD_NLL, rank_hypotheses
from .regressor import evaluate_model, predict, predict_maps, train
from .regressor.checkpoint import load_checkpoint, save_checkpoint

log = logging.getLogger("graspmap")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


def _configure_logging():
    name = os.environ.get("GRASPMAP_LOG_LEVEL", "info").lower()
    if name not in LOG_LEVELS:
        raise UsageError(f"GRASPMAP_LOG_LEVEL must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    if name != "debug":
        warnings.simplefilter("ignore", DroppedGraspWarning)


def _parse_point(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y, got {text!r}") from None
    return x, y


def _load_image(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    return np.asarray(Image.open(path).convert("RGB"))


def _settings(args):
    overrides = list(args.overrides or [])
    if getattr(args, "manifest", None):
        overrides.append(f"data.manifest={args.manifest}")
    if getattr(args, "split", None):
        overrides.append(f"data.split={args.split}")
    if getattr(args, "fold", None) is not None:
        overrides.append(f"data.fold={args.fold}")
    if getattr(args, "heads", None) is not None:
        overrides.append(f"net.num_heads={args.heads}")
    if getattr(args, "seed", None) is not None:
        overrides += [f"train.seed={args.seed}", f"net.seed={args.seed}"]
    return load_settings(args.config, overrides)


def _fold(settings, samples):
    split = make_splits(samples, settings.split_mode, seed=settings.data.split_seed)
    if not 0 <= settings.data.fold < len(split.folds):
        raise UsageError(f"fold {settings.data.fold} out of range: {settings.split_mode} split "
                         f"has {len(split.folds)} folds")
    return split.folds[settings.data.fold]


def _manifest(settings):
    if not settings.data.manifest:
        raise UsageError("no manifest given (use --manifest or data.manifest=...)")
    path = Path(settings.data.manifest)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    return path


def cmd_synth(args):
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    samples = generate_synthetic(args.n, np.random.default_rng(args.seed))
    manifest = write_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {manifest}")


def cmd_train(args):
    settings = _settings(args)
    manifest = _manifest(settings)
    samples = load_dataset(manifest)
    fold = _fold(settings, samples)
    out = Path(args.out)
    log_path = out.with_name(out.name + ".log")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        sink = log_path.open("w", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write training log {log_path}: {exc}") from exc
    with sink:
        result = train(samples, fold, settings.net, settings.train, sink=sink)
    save_checkpoint(out, result.net)
    try:
        out.with_name(out.name + ".cfg").write_text(format_settings(settings), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {out}.cfg: {exc}") from exc
    print(f"checkpoint={out}")
    print(f"log={log_path}")
    print(f"best_epoch={result.best_epoch}")


def _crop_center(args):
    return getattr(args, "crop_center", None)


def cmd_predict(args):
    net = load_checkpoint(args.checkpoint)
    sample = AnnotatedSample(image=_load_image(args.image), gt_rects=[], crop_center=_crop_center(args))
    pre = preprocess(sample, image_size=net.config.input_size[0], render_maps=False)
    prediction = predict(net, pre.image, discard_nll=args.discard_nll)
    to_source = cv2.invertAffineTransform(crop_matrix(sample, CROP_SIZE, net.config.output_size[0]))
    records = []
    for rank, (rect, fit) in enumerate(prediction.ranked, start=1):
        src = transform_rect(rect, to_source)
        records.append({"rank": rank, "x": src.x, "y": src.y, "theta": src.theta, "h": src.h,
                         "w": src.w, "nll": fit.nll})
        print(f"rank={rank} x={src.x:.2f} y={src.y:.2f} theta={src.theta:.2f} "
              f"h={src.h:.2f} w={src.w:.2f} nll={fit.nll:.4f}")
    print(f"discarded={prediction.n_discarded}")
    if args.out:
        _write_text(args.out, json.dumps({"hypotheses": records,
                                          "n_discarded": prediction.n_discarded}, indent=2) + "\n")


def _write_text(path, text):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def cmd_evaluate(args):
    settings = _settings(args)
    manifest = _manifest(settings)
    net = load_checkpoint(args.checkpoint)
    if net.config.input_size[:2] != (IMAGE_SIZE, IMAGE_SIZE):
        raise ShapeMismatch(f"checkpoint expects {net.config.input_size[:2]} inputs but the data "
                            f"pipeline produces {IMAGE_SIZE}x{IMAGE_SIZE}")
    samples = load_dataset(manifest)
    _, test_ids = _fold(settings, samples)
    wanted = set(test_ids)
    test = [s for s in samples if s.source_id in wanted]
    report = evaluate_model(net, test, discard_nll=settings.eval.discard_nll,
                            background_floor=settings.eval.background_floor)
    if args.per_sample:
        # evaluate_model skips samples whose grasps all leave the crop; keep ids aligned
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DroppedGraspWarning)
            kept = [s.source_id for s in test if preprocess(s, render_maps=False).rects]
        for sid, res in zip(kept, report.per_sample):
            v = res.top_verdict
            detail = "none" if v is None else f"{v.best_iou:.4f} angle_diff={v.angle_diff:.2f}"
            print(f"sample={sid} top1={int(res.top1)} n_valid={res.n_valid} "
                  f"n_discarded={res.n_discarded} best_iou={detail}")
    sys.stdout.write(report.to_text())
    if args.out:
        _write_text(args.out, report.to_json() + "\n")


def _overlay(image, rects, color=(255, 0, 0)):
    canvas = np.ascontiguousarray(image.copy())
    for rect in rects:
        pts = np.round(rectangle_to_corners(rect)).astype(np.int32)
        cv2.polylines(canvas, [pts], True, color, 1, lineType=cv2.LINE_AA)
    return canvas


def _save_png(path, array):
    try:
        Image.fromarray(array).save(path)
    except (OSError, ValueError) as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def cmd_render(args):
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out}: {exc}") from exc
    if args.annotation:
        path = Path(args.annotation)
        if not path.is_file():
            raise FileNotFoundError(f"annotation not found: {path}")
        rects = parse_cornell_annotations(path.read_text(encoding="utf-8")).rects
        if args.image:
            image = _load_image(args.image)
        else:
            image = np.zeros((480, 640, 3), dtype=np.uint8)
        sample = AnnotatedSample(image=image, gt_rects=rects, crop_center=_crop_center(args))
        pre = preprocess(sample, render_maps=True)
        for i, belief in enumerate(pre.maps):
            belief_map_to_png(out / f"gt_{i:02d}.png", belief)
            save_belief_map(out / f"gt_{i:02d}.gbm", belief)
        print(f"wrote {len(pre.maps)} belief map(s) to {out}")
        return
    if not (args.checkpoint and args.image):
        raise UsageError("render needs --annotation, or --checkpoint together with --image")
    net = load_checkpoint(args.checkpoint)
    sample = AnnotatedSample(image=_load_image(args.image), gt_rects=[], crop_center=_crop_center(args))
    pre = preprocess(sample, image_size=net.config.input_size[0], render_maps=False)
    maps = predict_maps(net, pre.image)[0]
    for i, belief in enumerate(maps):
        belief_map_to_png(out / f"hypothesis_{i:02d}.png", belief / max(belief.max(), 1e-12))
        # raw values, so ``graspmap rank`` sees what the ranker saw
        save_belief_map(out / f"hypothesis_{i:02d}.gbm", belief)
    crop = (pre.image * 255).round().astype(np.uint8)
    scale = crop.shape[0] / maps.shape[1]
    try:
        prediction = predict(net, pre.image, discard_nll=args.discard_nll)
        top = prediction.ranked[0][0]
        marks = [transform_rect(top, np.array([[scale, 0.0, 0.0], [0.0, scale, 0.0]]))]
    except AllDiscarded:
        log.warning("every hypothesis was discarded; overlay shows no grasp")
        marks = []
    _save_png(out / "overlay.png", _overlay(crop, marks))
    print(f"wrote {len(maps)} heat map(s) and overlay.png to {out}")


def cmd_rank(args):
    maps = []
    for name in args.maps:
        path = Path(name)
        if not path.is_file():
            raise FileNotFoundError(f"belief map not found: {path}")
        try:
            maps.append(load_belief_map(path))
        except ValueError as exc:
            raise IoFailure(str(exc)) from exc
    try:
        ranking = rank_hypotheses(maps, discard_nll=args.discard_nll)
    except AllDiscarded as exc:
        for index, reason in sorted(exc.discarded.items()):
            print(f"map={args.maps[index]} discarded={reason}")
        raise
    for rank, (index, fit) in enumerate(ranking.ranked, start=1):
        rect = decode_belief_map(ranking.maps[index], fit)
        print(f"rank={rank} map={args.maps[index]} nll={fit.nll:.4f} x={rect.x:.2f} y={rect.y:.2f} "
              f"theta={rect.theta:.2f} h={rect.h:.2f} w={rect.w:.2f}")
    for index, reason in sorted(ranking.discarded.items()):
        print(f"map={args.maps[index]} discarded={reason}")


def build_parser():
    parser = argparse.ArgumentParser(prog="graspmap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    def run_options(p):
        p.add_argument("--config")
        p.add_argument("--manifest")
        p.add_argument("--split", choices=sorted(SPLIT_NAMES))
        p.add_argument("--fold", type=int)
        p.add_argument("--heads", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("overrides", nargs="*", metavar="section.key=value")

    p = sub.add_parser("train", help="train a network on one fold")
    run_options(p)
    p.add_argument("--out", default="model.gckpt")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a test fold")
    run_options(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="write the report as JSON here")
    p.add_argument("--per-sample", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="ranked grasps for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--crop-center", type=_parse_point)
    p.add_argument("--discard-nll", type=float, default=DISCARD_NLL)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("render", help="belief-map PNGs from annotations or a checkpoint")
    p.add_argument("--annotation")
    p.add_argument("--checkpoint")
    p.add_argument("--image")
    p.add_argument("--crop-center", type=_parse_point)
    p.add_argument("--discard-nll", type=float, default=DISCARD_NLL)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("rank", help="rank stored belief maps by mixture fit")
    p.add_argument("maps", nargs="+")
    p.add_argument("--discard-nll", type=float, default=DISCARD_NLL)
    p.set_defaults(func=cmd_rank)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _configure_logging()
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"graspmap {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"graspmap {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except GraspMapError as exc:
        print(f"graspmap {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
