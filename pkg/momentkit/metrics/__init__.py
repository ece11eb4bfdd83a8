"""
Temporal evaluation metrics for grounding, action segmentation and
highlight detection.
"""
from .actionseg import (LabeledSegmentation, action_seg_metrics, edit_score,
                        label_runs, segment_matches)
from .grounding import grounding_metrics, interval_iou
from .highlight import (DEFAULT_IOU_GRID, ScoredMoment, average_precision,
                        highlight_metrics)
from .report import format_report
