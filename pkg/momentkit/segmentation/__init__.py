"""
Event boundary detection: frame-difference splits followed by
consistency-based merging.
"""
from .boundaries import (consistency, find_split_points, frame_diff_scores,
                         gaussian_smooth, merge_segments, segment_video,
                         split_threshold)
