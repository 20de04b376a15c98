from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from ..geometry import GraspRectangle


@dataclass
class AnnotatedSample:
    """An RGB uint8 image of shape (height, width, 3) and its positive grasps."""

    image: np.ndarray
    gt_rects: List[GraspRectangle]
    object_id: int = 0
    shape_class: str = ""
    source_id: str = ""
    crop_center: Optional[Tuple[float, float]] = None
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def width(self):
        return self.image.shape[1]

    @property
    def height(self):
        return self.image.shape[0]

    def with_changes(self, **changes):
        return replace(self, **changes)
