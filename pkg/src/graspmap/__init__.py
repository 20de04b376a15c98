"""Grasp detection as belief-map regression with multiple hypotheses."""
from .geometry import GraspRectangle, GridSpec, decode_belief_map, render_belief_map
from .gmm import em_fit, rank_hypotheses
from .metrics import evaluate, iou, is_valid_grasp
from .mhp_loss import hindsight_meta_loss

__version__ = "0.1.0"

__all__ = [
    "GraspRectangle", "GridSpec", "decode_belief_map", "render_belief_map", "em_fit",
    "rank_hypotheses", "evaluate", "iou", "is_valid_grasp", "hindsight_meta_loss",
]
