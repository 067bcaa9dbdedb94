"""Rotated-box geometry, label assignment and evaluation for oriented object detection."""

from .annotations import (AnnotationParseError, AnnotationRecord, Instance, TilingSpec, dataset_stats,
                          parse_quad_file, parse_theta_file, tile_annotations, write_canonical)
from .assign import (AnchorGridSpec, AnchorSet, AssignerConfig, AssignmentResult, assignment_stats, atss_assign,
                     generate_anchors, max_iou_assign, synthetic_refiner, ts4_assign)
from .coding import BoxOffsets, decode, encode, refine_anchors
from .evaluation import Detection, EvalReport, GroundTruth, MetricStyle, evaluate_detections
from .kernels import clip_convex, iou_matrix, monte_carlo_iou, rotated_iou, rotated_nms
from .losses import LossConfig, StageBatch, finite_diff_check, focal_loss, smooth_l1, total_loss
from .obb import AngleMode, OrientedBox, QuadBox, contains_point, from_quad, normalize_angle, to_corners

__version__ = "0.1.0"
