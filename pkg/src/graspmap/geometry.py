"""Grasp rectangles, oriented Gaussian belief maps and the conversions between them.

Coordinates follow the image convention used throughout the package: ``x`` is
the column, ``y`` the row, and the centre of pixel ``(row, col)`` sits at
``(x=col, y=row)``.  Angles are in degrees, measured from the +x axis towards
+y, and a grasp is identified with its 180 degree flip.

Belief maps are plain 2D ``numpy`` arrays of shape ``(height, width)``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateMap,
    InvalidCoordinates,
    IoFailure,
    NotARectangle,
    OutOfBounds,
)

# sigma along the plate axis = h / SIGMA_X_DIVISOR
SIGMA_X_DIVISOR = 4.0
# sigma along the opening axis, in pixels of a 128 px wide grid
SIGMA_Y_CONST = 4.0
SIGMA_Y_REFERENCE_WIDTH = 128

BINARIZE_THRESHOLD = 0.2
MIN_MODE_SEPARATION = 0.5
MIN_COMPONENT_WEIGHT = 0.05
# map value midway between the modes must fall below this fraction of the
# weaker mode, otherwise the map has a single blob
DIP_RATIO = 0.98
RIGHT_ANGLE_TOLERANCE = 5.0

MAP_MAGIC = b"GBM1"


def normalize_angle(theta):
    """Fold an angle in degrees into [0, 180)."""
    t = round(float(theta) % 180.0, 9)
    return 0.0 if t >= 180.0 else t


@dataclass(frozen=True)
class GraspRectangle:
    """5D grasp ``(x, y, theta, h, w)``.

    ``w`` is the gripper opening, measured along the direction ``theta``;
    ``h`` is the plate length, measured perpendicular to it.
    """

    x: float
    y: float
    theta: float
    h: float
    w: float

    def __post_init__(self):
        values = (self.x, self.y, self.theta, self.h, self.w)
        if not all(math.isfinite(float(v)) for v in values):
            raise InvalidCoordinates(f"non-finite grasp field in {values}")
        if self.h <= 0 or self.w <= 0:
            raise ValueError(f"grasp extents must be positive, got h={self.h}, w={self.w}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "w", float(self.w))
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def center(self):
        return (self.x, self.y)

    @property
    def area(self):
        return self.h * self.w

    def as_tuple(self):
        return (self.x, self.y, self.theta, self.h, self.w)


@dataclass(frozen=True)
class GaussianComponent:
    """One oriented bivariate normal of a belief map.

    ``sigma_x`` is the spread along the plate axis (perpendicular to the
    opening direction ``theta``) and ``sigma_y`` the spread along the opening.
    """

    mu: tuple
    sigma_x: float
    sigma_y: float
    theta: float

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ValueError("component standard deviations must be positive")

    def precision(self):
        """Inverse covariance ``R Σ⁻¹ Rᵀ`` as a 2x2 array."""
        t = math.radians(self.theta)
        grip = np.array([math.cos(t), math.sin(t)])
        plate = np.array([-math.sin(t), math.cos(t)])
        return (np.outer(plate, plate) / self.sigma_x**2
                + np.outer(grip, grip) / self.sigma_y**2)


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) < 8 or int(self.height) < 8:
            raise ValueError(f"grid must be at least 8x8, got {self.width}x{self.height}")

    @property
    def shape(self):
        return (int(self.height), int(self.width))


def sigma_y_for(grid):
    return SIGMA_Y_CONST * grid.width / SIGMA_Y_REFERENCE_WIDTH


def rectangle_to_components(rect, grid=None):
    """Split a grasp into the two plate Gaussians.

    The means sit at the plate centres, ``center ± (w/2)(cos θ, sin θ)``.
    """
    t = math.radians(rect.theta)
    dx = 0.5 * rect.w * math.cos(t)
    dy = 0.5 * rect.w * math.sin(t)
    sigma_x = rect.h / SIGMA_X_DIVISOR
    sigma_y = SIGMA_Y_CONST if grid is None else sigma_y_for(grid)
    first = GaussianComponent((rect.x - dx, rect.y - dy), sigma_x, sigma_y, rect.theta)
    second = GaussianComponent((rect.x + dx, rect.y + dy), sigma_x, sigma_y, rect.theta)
    return first, second


def _mixture_density(components, shape):
    rows, cols = np.mgrid[0:shape[0], 0:shape[1]]
    xs = cols.astype(np.float64)
    ys = rows.astype(np.float64)
    n = len(components)
    total = np.zeros(shape)
    for comp in components:
        p = comp.precision()
        dx = xs - comp.mu[0]
        dy = ys - comp.mu[1]
        quad = p[0, 0] * dx * dx + 2.0 * p[0, 1] * dx * dy + p[1, 1] * dy * dy
        total += np.exp(-0.5 * quad) / (2.0 * math.pi * n * comp.sigma_x * comp.sigma_y)
    return total


def render_belief_map(rect, grid):
    """Render a grasp as a two-Gaussian belief map with peak value 1."""
    components = rectangle_to_components(rect, grid)
    for comp in components:
        mx, my = comp.mu
        if not (0.0 <= mx <= grid.width - 1 and 0.0 <= my <= grid.height - 1):
            raise OutOfBounds(f"plate centre ({mx:.2f}, {my:.2f}) outside {grid.width}x{grid.height} grid")
    density = _mixture_density(components, grid.shape)
    return density / density.max()


def _sample(belief, point):
    return float(ndimage.map_coordinates(
        belief, [[point[1]], [point[0]]], order=1, mode="nearest")[0])


def decode_belief_map(belief, fit, threshold=BINARIZE_THRESHOLD):
    """Recover a grasp rectangle from a belief map and its two-component fit.

    Centre and opening come from the fitted means; the plate length is the
    extent, along the plate axis, of each mode's region after binarizing at
    ``threshold`` times the map peak, averaged over both modes.
    """
    belief = np.asarray(belief, dtype=np.float64)
    if not fit.converged:
        raise DegenerateMap("mixture fit did not converge")
    if len(fit.means) != 2:
        raise DegenerateMap("decoding needs exactly two mixture components")
    if min(fit.weights) < MIN_COMPONENT_WEIGHT:
        raise DegenerateMap(f"component weight {min(fit.weights):.3f} below {MIN_COMPONENT_WEIGHT}")
    m1 = np.asarray(fit.means[0], dtype=np.float64)
    m2 = np.asarray(fit.means[1], dtype=np.float64)
    delta = m2 - m1
    width = float(np.hypot(delta[0], delta[1]))
    if width < MIN_MODE_SEPARATION:
        raise DegenerateMap(f"fitted means coincide (separation {width:.3f} px)")
    peak = float(belief.max())
    if not peak > 0:
        raise DegenerateMap("map has no positive values")

    mid = 0.5 * (m1 + m2)
    if _sample(belief, mid) >= DIP_RATIO * min(_sample(belief, m1), _sample(belief, m2)):
        raise DegenerateMap("no dip between the fitted modes")

    theta = math.degrees(math.atan2(delta[1], delta[0]))
    grip = delta / width
    plate = np.array([-grip[1], grip[0]])

    labels, _ = ndimage.label(belief >= threshold * peak, structure=np.ones((3, 3)))
    height, width_px = belief.shape
    extents = []
    for mean, side in ((m1, -1.0), (m2, 1.0)):
        col = min(max(int(round(mean[0])), 0), width_px - 1)
        row = min(max(int(round(mean[1])), 0), height - 1)
        label = labels[row, col]
        if label == 0:
            raise DegenerateMap(f"binarized region around ({mean[0]:.1f}, {mean[1]:.1f}) is empty")
        ys, xs = np.nonzero(labels == label)
        rel = np.stack([xs - mid[0], ys - mid[1]], axis=1)
        own = side * (rel @ grip) >= 0.0
        if not own.any():
            raise DegenerateMap("binarized region lies entirely on the other mode's side")
        proj = rel[own] @ plate
        extents.append(float(proj.max() - proj.min()) + 1.0)

    return GraspRectangle(float(mid[0]), float(mid[1]), theta, float(np.mean(extents)), width)


def rectangle_to_corners(rect):
    """Corners of the oriented box as a (4, 2) array.

    Order is (-w/2, -h/2), (w/2, -h/2), (w/2, h/2), (-w/2, h/2) in the grasp
    frame, so the first edge runs along the opening direction.
    """
    t = math.radians(rect.theta)
    c, s = math.cos(t), math.sin(t)
    local = np.array([[-rect.w, -rect.h], [rect.w, -rect.h],
                      [rect.w, rect.h], [-rect.w, rect.h]]) * 0.5
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([rect.x, rect.y])


def corners_to_rectangle(points, tolerance=RIGHT_ANGLE_TOLERANCE):
    """Inverse of :func:`rectangle_to_corners`.

    The first and third edges give the opening ``w`` and the angle; the
    second and fourth give the plate length ``h``.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape != (4, 2):
        raise NotARectangle(f"expected 4 corner points, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidCoordinates("corner list contains non-finite coordinates")
    edges = np.roll(pts, -1, axis=0) - pts
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    if np.any(lengths <= 1e-9):
        raise NotARectangle("repeated corner")
    for i in range(4):
        a, b = edges[i], edges[(i + 1) % 4]
        cos_angle = abs(float(a @ b)) / (lengths[i] * lengths[(i + 1) % 4])
        if math.degrees(math.asin(min(cos_angle, 1.0))) > tolerance:
            raise NotARectangle(f"corner {i + 1} deviates from 90 degrees by more than {tolerance}")
    center = pts.mean(axis=0)
    theta = math.degrees(math.atan2(edges[0, 1], edges[0, 0]))
    w = 0.5 * (lengths[0] + lengths[2])
    h = 0.5 * (lengths[1] + lengths[3])
    return GraspRectangle(float(center[0]), float(center[1]), theta, float(h), float(w))


def save_belief_map(path, belief):
    """Write ``GBM1`` binary: magic, u32 width, u32 height, u32 reserved, f32 LE data."""
    belief = np.asarray(belief)
    if belief.ndim != 2:
        raise ValueError("belief map must be 2D")
    height, width = belief.shape
    payload = MAP_MAGIC + struct.pack("<III", width, height, 0) + belief.astype("<f4").tobytes()
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_belief_map(path):
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != MAP_MAGIC:
        raise ValueError(f"{path}: not a GBM1 belief map")
    width, height, _ = struct.unpack("<III", data[4:16])
    body = data[16:]
    if len(body) != 4 * width * height:
        raise ValueError(f"{path}: expected {width * height} floats, found {len(body) // 4}")
    return np.frombuffer(body, dtype="<f4").reshape(height, width).astype(np.float64)


def belief_map_to_png(path, belief):
    """Export as 8-bit grayscale, value * 255 rounded (values clipped to [0, 1])."""
    from PIL import Image

    pixels = np.rint(np.clip(np.asarray(belief, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)
    try:
        Image.fromarray(pixels, mode="L").save(path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def check_belief_map(belief: np.ndarray) -> None:
    """Raise ``ValueError`` unless ``belief`` is a finite 2D map with values in [0, 1]."""
    if belief.ndim != 2 or not np.all(np.isfinite(belief)):
        raise ValueError("belief map must be a finite 2D array")
    if belief.min() < 0.0 or belief.max() > 1.0:
        raise ValueError("belief map values must lie in [0, 1]")


def rectangles_close(a: GraspRectangle, b: GraspRectangle, tol: float = 1e-6) -> bool:
    """Field-wise comparison with the angle compared modulo 180."""
    dtheta = abs(a.theta - b.theta) % 180.0
    dtheta = min(dtheta, 180.0 - dtheta)
    return (abs(a.x - b.x) <= tol and abs(a.y - b.y) <= tol and dtheta <= tol
            and abs(a.h - b.h) <= tol and abs(a.w - b.w) <= tol)


__all__: Sequence[str] = [
    "GraspRectangle", "GaussianComponent", "GridSpec", "rectangle_to_components",
    "render_belief_map", "decode_belief_map", "rectangle_to_corners",
    "corners_to_rectangle", "save_belief_map", "load_belief_map", "belief_map_to_png",
    "normalize_angle", "check_belief_map", "rectangles_close",
]
