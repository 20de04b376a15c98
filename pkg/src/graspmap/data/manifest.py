"""Line-oriented dataset manifest plus the PNG + Cornell-text file layout.

One tab-separated record per line::

    source_id  image_path  annotation_path  object_id  shape_class  crop_center

``crop_center`` is ``cx,cy`` or ``-``; relative paths resolve against the
manifest's directory.  Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from PIL import Image

from ..errors import IoFailure
from .cornell import format_cornell_annotations, parse_cornell_annotations
from .sample import AnnotatedSample

log = logging.getLogger(__name__)

HEADER = "# source_id\timage\tannotation\tobject_id\tshape_class\tcrop_center\n"


@dataclass(frozen=True)
class ManifestRecord:
    source_id: str
    image_path: Path
    annotation_path: Path
    object_id: int
    shape_class: str
    crop_center: Optional[Tuple[float, float]] = None


def write_manifest(path, records):
    path = Path(path)
    lines = [HEADER]
    for r in records:
        crop = "-" if r.crop_center is None else f"{r.crop_center[0]:.3f},{r.crop_center[1]:.3f}"
        lines.append("\t".join([r.source_id, str(r.image_path), str(r.annotation_path),
                                str(r.object_id), r.shape_class or "-", crop]) + "\n")
    try:
        path.write_text("".join(lines), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write manifest {path}: {exc}") from exc


def read_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    root = path.parent
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) not in (5, 6):
            raise ValueError(f"{path}:{lineno}: expected 5 or 6 tab-separated fields")
        crop = None
        if len(fields) == 6 and fields[5] not in ("", "-"):
            cx, cy = fields[5].split(",")
            crop = (float(cx), float(cy))
        records.append(ManifestRecord(
            source_id=fields[0],
            image_path=root / fields[1],
            annotation_path=root / fields[2],
            object_id=int(fields[3]),
            shape_class="" if fields[4] == "-" else fields[4],
            crop_center=crop,
        ))
    return records


def load_sample(record):
    """Read one record; returns ``None`` when no annotated grasp survives parsing."""
    image = np.asarray(Image.open(record.image_path).convert("RGB"))
    parsed = parse_cornell_annotations(record.annotation_path.read_text(encoding="utf-8"))
    if parsed.n_skipped:
        log.info("%s: skipped %d invalid rectangle(s)", record.source_id, parsed.n_skipped)
    h, w = image.shape[:2]
    rects = [r for r in parsed.rects if 0 <= r.x <= w - 1 and 0 <= r.y <= h - 1]
    if not rects:
        log.warning("%s: no usable grasp rectangles, sample rejected", record.source_id)
        return None
    return AnnotatedSample(image=image, gt_rects=rects, object_id=record.object_id,
                           shape_class=record.shape_class, source_id=record.source_id,
                           crop_center=record.crop_center)


def load_dataset(manifest_path, ids=None):
    wanted = None if ids is None else set(ids)
    samples = []
    for record in read_manifest(manifest_path):
        if wanted is not None and record.source_id not in wanted:
            continue
        sample = load_sample(record)
        if sample is not None:
            samples.append(sample)
    return samples


def write_dataset(samples, out_dir):
    """Write PNG images, ``<id>cpos.txt`` annotations and ``manifest.tsv``; returns the manifest path."""
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "annotations").mkdir(parents=True, exist_ok=True)
        records = []
        for s in samples:
            image_rel = Path("images") / f"{s.source_id}.png"
            ann_rel = Path("annotations") / f"{s.source_id}cpos.txt"
            Image.fromarray(s.image).save(out / image_rel)
            (out / ann_rel).write_text(format_cornell_annotations(s.gt_rects), encoding="utf-8")
            records.append(ManifestRecord(s.source_id, image_rel, ann_rel, s.object_id,
                                          s.shape_class, s.crop_center))
    except OSError as exc:
        raise IoFailure(f"cannot write dataset to {out}: {exc}") from exc
    manifest = out / "manifest.tsv"
    write_manifest(manifest, records)
    return manifest
