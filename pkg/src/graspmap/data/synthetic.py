"""Synthetic Cornell-like dataset: flat parametric objects with exhaustive grasp labels.

Objects are unions of filled polygons drawn on a plain 640x480 background.
Every grasp closes across a limb, so its opening direction is perpendicular
to the limb axis and its opening equals the local thickness plus a margin.
Like human annotations, plate length and margin vary per label and labels
come in no particular order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import cv2
import numpy as np

from ..geometry import GraspRectangle
from .sample import AnnotatedSample

IMAGE_WIDTH = 640
IMAGE_HEIGHT = 480
# generator sizes are quoted in 128 px map units and scaled to source pixels
UNIT = 350.0 / 128.0

FAMILIES = ("bar", "ellipse", "l_shape", "t_shape", "cross")
PLATE_RANGE = (10.0, 16.0)
MARGIN_RANGE = (4.0, 8.0)
END_CLEARANCE = 7.5
CENTER_JITTER = 8.0


@dataclass
class ShapeSpec:
    """Object geometry in its own frame: polygons plus (x, y, angle, thickness) grasp sites."""

    family: str
    polygons: List[np.ndarray]
    sites: List[tuple]
    params: dict = field(default_factory=dict)


def _box(x0, x1, y0, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)


def _span(rng, lo, hi, count):
    if count == 1 or hi - lo < 1e-6:
        return [0.5 * (lo + hi)]
    return list(np.linspace(lo, hi, count))


def _bar(rng, length=None, thickness=None):
    length = length if length is not None else rng.uniform(44, 72) * UNIT
    t = thickness if thickness is not None else rng.uniform(8, 13) * UNIT
    edge = 0.5 * length - END_CLEARANCE * UNIT
    count = int(rng.integers(2, 5))
    sites = [(s, 0.0, 90.0, t) for s in _span(rng, -edge, edge, count)]
    return ShapeSpec("bar", [_box(-length / 2, length / 2, -t / 2, t / 2)], sites,
                     {"length": length, "thickness": t})


def _ellipse(rng, a=None, b=None):
    a = a if a is not None else rng.uniform(16, 26) * UNIT
    b = b if b is not None else rng.uniform(7, 11) * UNIT
    phi = np.linspace(0.0, 2.0 * math.pi, 96, endpoint=False)
    poly = np.stack([a * np.cos(phi), b * np.sin(phi)], axis=1)
    off = 0.45 * a
    side = 2.0 * b * math.sqrt(1.0 - 0.45 ** 2)
    sites = [(0.0, 0.0, 90.0, 2.0 * b), (-off, 0.0, 90.0, side), (off, 0.0, 90.0, side)]
    if a <= 21 * UNIT:
        sites.append((0.0, 0.0, 0.0, 2.0 * a))
    return ShapeSpec("ellipse", [poly], sites, {"a": a, "b": b})


def _l_shape(rng, one_per_limb=False, family="l_shape"):
    l1 = rng.uniform(36, 56) * UNIT
    l2 = rng.uniform(36, 56) * UNIT
    t = rng.uniform(8, 13) * UNIT
    polys = [_box(-t / 2, l1, -t / 2, t / 2), _box(-t / 2, t / 2, -t / 2, l2)]
    sites = []
    for limb_len, along_x in ((l1, True), (l2, False)):
        lo, hi = t / 2 + 8 * UNIT, limb_len - END_CLEARANCE * UNIT
        count = 1 if one_per_limb else int(rng.integers(1, 3))
        for s in _span(rng, lo, hi, count):
            sites.append((s, 0.0, 90.0, t) if along_x else (0.0, s, 0.0, t))
    return ShapeSpec(family, polys, sites, {"l1": l1, "l2": l2, "thickness": t})


def _t_shape(rng):
    l1 = rng.uniform(50, 72) * UNIT
    l2 = rng.uniform(30, 50) * UNIT
    t = rng.uniform(8, 13) * UNIT
    polys = [_box(-l1 / 2, l1 / 2, -t / 2, t / 2), _box(-t / 2, t / 2, t / 2, l2)]
    arm = 0.5 * (t / 2 + l1 / 2)
    sites = [(-arm, 0.0, 90.0, t), (arm, 0.0, 90.0, t)]
    for s in _span(rng, t / 2 + 8 * UNIT, l2 - END_CLEARANCE * UNIT, int(rng.integers(1, 3))):
        sites.append((0.0, s, 0.0, t))
    return ShapeSpec("t_shape", polys, sites, {"l1": l1, "l2": l2, "thickness": t})


def _cross(rng):
    l1 = rng.uniform(44, 64) * UNIT
    l2 = rng.uniform(44, 64) * UNIT
    t = rng.uniform(8, 13) * UNIT
    polys = [_box(-l1 / 2, l1 / 2, -t / 2, t / 2), _box(-t / 2, t / 2, -l2 / 2, l2 / 2)]
    a1, a2 = 0.5 * (t / 2 + l1 / 2), 0.5 * (t / 2 + l2 / 2)
    sites = [(-a1, 0.0, 90.0, t), (a1, 0.0, 90.0, t), (0.0, -a2, 0.0, t), (0.0, a2, 0.0, t)]
    return ShapeSpec("cross", polys, sites, {"l1": l1, "l2": l2, "thickness": t})


_BUILDERS = {
    "bar": _bar,
    "ellipse": _ellipse,
    "l_shape": _l_shape,
    "t_shape": _t_shape,
    "cross": _cross,
    # exactly two distinct grasps, one per limb
    "l_pair": lambda rng, **kw: _l_shape(rng, one_per_limb=True, family="l_pair", **kw),
}


def build_shape(family, rng, **params):
    """Draw an object of ``family`` in its own frame, centred on its bounding box."""
    try:
        builder = _BUILDERS[family]
    except KeyError:
        raise ValueError(f"unknown shape family {family!r}") from None
    spec = builder(rng, **params)
    pts = np.concatenate(spec.polygons)
    offset = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    spec.polygons = [p - offset for p in spec.polygons]
    spec.sites = [(x - offset[0], y - offset[1], a, t) for x, y, a, t in spec.sites]
    return spec


def place_shape(spec, angle, center, rng):
    """Pose the object; returns image-frame polygons and one grasp per site."""
    t = math.radians(angle)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    polys = [p @ rot.T + np.asarray(center) for p in spec.polygons]
    rects = []
    for x, y, site_angle, thickness in spec.sites:
        cx, cy = rot @ np.array([x, y]) + np.asarray(center)
        h = rng.uniform(*PLATE_RANGE) * UNIT
        w = thickness + rng.uniform(*MARGIN_RANGE) * UNIT
        rects.append(GraspRectangle(float(cx), float(cy), site_angle + angle, h, w))
    return polys, rects


def draw_scene(polys, object_color, background, rng, size=(IMAGE_WIDTH, IMAGE_HEIGHT)):
    width, height = size
    image = np.empty((height, width, 3), dtype=np.float64)
    image[:] = background
    canvas = image.astype(np.uint8)
    shift = 4
    for poly in polys:
        pts = np.round(poly * (1 << shift)).astype(np.int32)
        cv2.fillPoly(canvas, [pts], tuple(int(c) for c in object_color), lineType=cv2.LINE_AA,
                     shift=shift)
    noisy = canvas.astype(np.float64) + rng.normal(0.0, 3.0, canvas.shape)
    return np.clip(np.rint(noisy), 0, 255).astype(np.uint8)


def _colors(rng):
    dark = rng.integers(10, 110, 3)
    light = rng.integers(150, 240, 3)
    return (dark, light) if rng.random() < 0.5 else (light, dark)


def generate_synthetic(n, rng, families=FAMILIES, views_per_object=2):
    """Generate ``n`` annotated samples.

    Object ``k`` belongs to ``families[k % len(families)]`` and is shown in
    ``views_per_object`` random poses.  Each sample draws from its own random
    stream derived from one seed taken from ``rng``, so the result does not
    depend on generation order.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    base = int(rng.integers(2**62))
    samples = []
    for index in range(n):
        obj = index // views_per_object
        view = index % views_per_object
        family = families[obj % len(families)]
        obj_rng = np.random.default_rng([base, obj])
        spec = build_shape(family, obj_rng)
        object_color, _ = _colors(obj_rng)
        view_rng = np.random.default_rng([base, obj, view + 1])
        angle = view_rng.uniform(0.0, 360.0)
        center = (IMAGE_WIDTH / 2 + view_rng.uniform(-CENTER_JITTER, CENTER_JITTER) * UNIT,
                  IMAGE_HEIGHT / 2 + view_rng.uniform(-CENTER_JITTER, CENTER_JITTER) * UNIT)
        polys, rects = place_shape(spec, angle, center, view_rng)
        rects = [rects[i] for i in view_rng.permutation(len(rects))]
        background = view_rng.integers(0, 256, 3)
        # keep the background on the opposite side of mid-grey from the object
        background = np.where(object_color.mean() < 128, np.maximum(background, 150),
                              np.minimum(background, 105))
        image = draw_scene(polys, object_color, background, view_rng)
        samples.append(AnnotatedSample(image=image, gt_rects=rects, object_id=obj,
                                       shape_class=family, source_id=f"synth{index:05d}",
                                       meta={"angle": angle, "center": center}))
    return samples
