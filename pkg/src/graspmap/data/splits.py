"""Image-wise, object-wise and shape-wise cross-validation folds."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..errors import MissingShapeLabels

MODES = ("image_wise", "object_wise", "shape_wise")
SHAPE_TEST_FRACTION = 0.2


@dataclass(frozen=True)
class SplitSpec:
    mode: str
    folds: List[Tuple[Tuple[str, ...], Tuple[str, ...]]]
    seed: int

    def fold(self, index):
        return self.folds[index]


def _partition(groups, n_folds):
    """Turn a list of id-groups into folds, each test set a contiguous run of groups."""
    chunks = np.array_split(np.arange(len(groups)), n_folds)
    folds = []
    for chunk in chunks:
        chosen = set(chunk.tolist())
        test = tuple(i for g in chunk for i in groups[g])
        train = tuple(i for g in range(len(groups)) if g not in chosen for i in groups[g])
        folds.append((train, test))
    return folds


def make_splits(samples, mode, seed=0, n_folds=5):
    """Build folds of ``source_id`` values.

    ``samples`` may be anything carrying ``source_id``, ``object_id`` and
    ``shape_class`` (samples or manifest records).
    """
    if mode not in MODES:
        raise ValueError(f"unknown split mode {mode!r}; expected one of {MODES}")
    rng = np.random.default_rng(seed)
    samples = list(samples)

    if mode == "image_wise":
        order = rng.permutation(len(samples))
        folds = _partition([[samples[i].source_id] for i in order], n_folds)
        return SplitSpec(mode, folds, seed)

    by_object = OrderedDict()
    for s in samples:
        by_object.setdefault(s.object_id, []).append(s.source_id)

    if mode == "object_wise":
        objects = list(by_object)
        order = rng.permutation(len(objects))
        folds = _partition([by_object[objects[i]] for i in order], n_folds)
        return SplitSpec(mode, folds, seed)

    shapes = OrderedDict()
    for s in samples:
        if not s.shape_class:
            raise MissingShapeLabels(f"sample {s.source_id} has no shape class")
        shapes.setdefault(s.shape_class, [])
        if s.object_id not in shapes[s.shape_class]:
            shapes[s.shape_class].append(s.object_id)
    classes = list(shapes)
    class_order = [classes[i] for i in rng.permutation(len(classes))]
    grouped = []
    for name in class_order:
        objs = shapes[name]
        grouped.append([objs[i] for i in rng.permutation(len(objs))])

    folds = []
    for ordering in (grouped, grouped[::-1]):
        test_classes = _leading_groups(ordering, SHAPE_TEST_FRACTION)
        test = tuple(sid for g in ordering[:test_classes] for obj in g for sid in by_object[obj])
        train = tuple(sid for g in ordering[test_classes:] for obj in g for sid in by_object[obj])
        folds.append((train, test))
    return SplitSpec(mode, folds, seed)


def _leading_groups(groups, fraction):
    """Number of leading whole groups whose object count best matches ``fraction`` of all objects."""
    total = sum(len(g) for g in groups)
    target = fraction * total
    best, best_err, running = 1, None, 0
    for count in range(1, len(groups)):
        running += len(groups[count - 1])
        err = abs(running - target)
        if best_err is None or err < best_err:
            best, best_err = count, err
    return best
