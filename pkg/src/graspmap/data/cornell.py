"""Cornell grasp annotation files: groups of four ``x y`` corner lines per rectangle."""
from __future__ import annotations

import logging
from typing import List, NamedTuple

from ..errors import InvalidCoordinates, MalformedLine, NotARectangle, TruncatedGroup
from ..geometry import GraspRectangle, corners_to_rectangle, rectangle_to_corners

log = logging.getLogger(__name__)


class CornellAnnotations(NamedTuple):
    rects: List[GraspRectangle]
    n_skipped: int


def parse_cornell_annotations(text):
    """Parse a positive-rectangle annotation file.

    Blank lines are ignored.  Groups holding NaN coordinates or failing the
    right-angle check are skipped and counted.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    corners = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise MalformedLine(lineno, line)
        try:
            corners.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise MalformedLine(lineno, line) from None
    if len(corners) % 4:
        raise TruncatedGroup(f"{len(corners) % 4} trailing corner line(s) after {len(corners) // 4} groups")

    rects, skipped = [], 0
    for start in range(0, len(corners), 4):
        try:
            rects.append(corners_to_rectangle(corners[start:start + 4]))
        except (InvalidCoordinates, NotARectangle) as exc:
            log.debug("skipping rectangle %d: %s", start // 4, exc)
            skipped += 1
    return CornellAnnotations(rects, skipped)


def format_cornell_annotations(rects):
    lines = []
    for rect in rects:
        for x, y in rectangle_to_corners(rect):
            lines.append(f"{x:.6f} {y:.6f}")
    return "\n".join(lines) + ("\n" if lines else "")
