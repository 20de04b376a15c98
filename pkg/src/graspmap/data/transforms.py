"""Crop/resize preprocessing and label-consistent affine augmentation.

Image and labels always go through the same 2x3 affine matrix, expressed in
pixel-index coordinates (pixel ``(r, c)`` is the point ``(c, r)``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List

import cv2
import numpy as np

from ..errors import ImageTooSmall
from ..geometry import GraspRectangle, GridSpec, render_belief_map, rectangle_to_components

CROP_SIZE = 350
IMAGE_SIZE = 256
MAP_SIZE = 128

ROTATION_RANGE = (-60.0, 60.0)
TRANSLATION_RANGE = (-20.0, 20.0)
SCALE_RANGE = (0.9, 1.1)
AUGMENTED_COPIES = 6


class DroppedGraspWarning(UserWarning):
    """A ground-truth grasp left the frame during a transform and was removed."""


@dataclass(frozen=True)
class AugmentParams:
    rotation: float = 0.0
    translation: tuple = (0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        if not ROTATION_RANGE[0] <= self.rotation <= ROTATION_RANGE[1]:
            raise ValueError(f"rotation {self.rotation} outside {ROTATION_RANGE}")
        if len(self.translation) != 2 or not all(
                TRANSLATION_RANGE[0] <= t <= TRANSLATION_RANGE[1] for t in self.translation):
            raise ValueError(f"translation {self.translation} outside {TRANSLATION_RANGE}")
        if not SCALE_RANGE[0] <= self.scale <= SCALE_RANGE[1]:
            raise ValueError(f"scale {self.scale} outside {SCALE_RANGE}")

    @classmethod
    def sample(cls, rng):
        return cls(rotation=float(rng.uniform(*ROTATION_RANGE)),
                   translation=(float(rng.uniform(*TRANSLATION_RANGE)),
                                float(rng.uniform(*TRANSLATION_RANGE))),
                   scale=float(rng.uniform(*SCALE_RANGE)))


def affine_matrix(rotation, translation, scale, center):
    """``p -> center + scale * R(rotation) (p - center) + translation`` as a 2x3 array."""
    t = math.radians(rotation)
    a, b = scale * math.cos(t), scale * math.sin(t)
    cx, cy = center
    return np.array([
        [a, -b, cx - (a * cx - b * cy) + translation[0]],
        [b, a, cy - (b * cx + a * cy) + translation[1]],
    ])


def transform_rect(rect, matrix):
    """Apply a similarity transform to a grasp rectangle."""
    x = matrix[0, 0] * rect.x + matrix[0, 1] * rect.y + matrix[0, 2]
    y = matrix[1, 0] * rect.x + matrix[1, 1] * rect.y + matrix[1, 2]
    scale = math.hypot(matrix[0, 0], matrix[1, 0])
    rotation = math.degrees(math.atan2(matrix[1, 0], matrix[0, 0]))
    return GraspRectangle(x, y, rect.theta + rotation, rect.h * scale, rect.w * scale)


def _warp(image, matrix, size):
    return cv2.warpAffine(image, matrix, size, flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_CONSTANT, borderValue=0)


def augment_affine(sample, matrix):
    """Warp image and grasps with one 2x3 matrix; grasps whose centre leaves the image are dropped."""
    h, w = sample.image.shape[:2]
    identity = np.array_equal(matrix, np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
    image = sample.image.copy() if identity else _warp(sample.image, matrix, (w, h))
    kept, dropped = [], 0
    for rect in sample.gt_rects:
        moved = transform_rect(rect, matrix)
        if 0.0 <= moved.x <= w - 1 and 0.0 <= moved.y <= h - 1:
            kept.append(moved)
        else:
            dropped += 1
    if dropped:
        warnings.warn(f"{sample.source_id}: {dropped} grasp(s) left the frame", DroppedGraspWarning,
                      stacklevel=2)
    crop_center = None
    if sample.crop_center is not None:
        cx, cy = sample.crop_center
        crop_center = (matrix[0, 0] * cx + matrix[0, 1] * cy + matrix[0, 2],
                       matrix[1, 0] * cx + matrix[1, 1] * cy + matrix[1, 2])
    return sample.with_changes(image=image, gt_rects=kept, crop_center=crop_center)


def augment(sample, params):
    """Rotate about the image centre, scale and translate image and labels together."""
    h, w = sample.image.shape[:2]
    matrix = affine_matrix(params.rotation, params.translation, params.scale, (w / 2.0, h / 2.0))
    return augment_affine(sample, matrix)


@dataclass
class Preprocessed:
    image: np.ndarray
    rects: List[GraspRectangle]
    maps: list
    n_dropped: int
    source_id: str = ""


def crop_matrix(sample, crop_size, out_size):
    """Affine taking source pixels to a ``out_size`` frame spanning the crop window."""
    if sample.crop_center is None:
        cx, cy = sample.width / 2.0, sample.height / 2.0
    else:
        cx, cy = sample.crop_center
    s = out_size / crop_size
    x0, y0 = cx - crop_size / 2.0, cy - crop_size / 2.0
    return np.array([[s, 0.0, -s * x0], [0.0, s, -s * y0]])


def preprocess(sample, crop_size=CROP_SIZE, image_size=IMAGE_SIZE, map_size=MAP_SIZE,
               render_maps=True):
    """Crop ``crop_size`` square, resize image to ``image_size`` and labels to ``map_size``.

    Returns the image as float32 in [0, 1], the grasps in map coordinates and,
    if ``render_maps``, one belief map per kept grasp.
    """
    if sample.width < crop_size or sample.height < crop_size:
        raise ImageTooSmall(f"{sample.source_id}: {sample.width}x{sample.height} smaller than {crop_size}")
    image = _warp(sample.image, crop_matrix(sample, crop_size, image_size), (image_size, image_size))
    to_map = crop_matrix(sample, crop_size, map_size)
    grid = GridSpec(map_size, map_size)
    rects, maps, dropped = [], [], 0
    for rect in sample.gt_rects:
        moved = transform_rect(rect, to_map)
        means = [c.mu for c in rectangle_to_components(moved, grid)]
        if not all(0.0 <= mx <= map_size - 1 and 0.0 <= my <= map_size - 1 for mx, my in means):
            dropped += 1
            continue
        rects.append(moved)
        if render_maps:
            maps.append(render_belief_map(moved, grid))
    if dropped:
        warnings.warn(f"{sample.source_id}: dropped {dropped} grasp(s) outside the crop",
                      DroppedGraspWarning, stacklevel=2)
    return Preprocessed(image.astype(np.float32) / 255.0, rects, maps, dropped, sample.source_id)
