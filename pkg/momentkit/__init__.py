"""
Toolkit for building time-grounded video instruction data.

Segments videos into events, links detections into instance tracks,
arranges both in an instance-event matrix, turns the matrix into
instruction records through prompt templates, and encodes video time with
a continuous temporal token space.  Metrics cover grounding, action
segmentation and highlight detection.
"""
__version__ = '0.1.0'

from momentkit import (instructions, metrics, segmentation, sequences,
                       temporal, tracking)
