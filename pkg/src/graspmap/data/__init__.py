"""Dataset ingestion, preprocessing, augmentation, splits and synthetic data."""
from .sample import AnnotatedSample
from .cornell import CornellAnnotations, format_cornell_annotations, parse_cornell_annotations
from .transforms import (
    AugmentParams,
    DroppedGraspWarning,
    Preprocessed,
    augment,
    augment_affine,
    preprocess,
)
from .splits import SplitSpec, make_splits
from .synthetic import FAMILIES, generate_synthetic
from .manifest import ManifestRecord, load_dataset, read_manifest, write_dataset, write_manifest

__all__ = [
    "AnnotatedSample", "CornellAnnotations", "format_cornell_annotations",
    "parse_cornell_annotations", "AugmentParams", "DroppedGraspWarning", "Preprocessed",
    "augment", "augment_affine", "preprocess", "SplitSpec", "make_splits", "FAMILIES",
    "generate_synthetic", "ManifestRecord", "load_dataset", "read_manifest",
    "write_dataset", "write_manifest",
]
