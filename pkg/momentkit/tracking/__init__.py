"""
Instance tracks and the instance-event matrix built from them.
"""
from .matrix import (CLUE_KINDS, VIDEO, Cell, ClueRecord, InstanceEventMatrix,
                     attach_clues, build_matrix, matrix_from_dict,
                     matrix_to_dict)
from .tracks import (InstanceTrack, Observation, box_iou, canonical_track_ids,
                     frames_to_detections, label_detections, link_tracks)
