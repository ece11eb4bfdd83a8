"""
Linking per-frame detections into instance tracks.
"""
import logging
from dataclasses import dataclass, field

from momentkit._common import cosine
from momentkit.exceptions import InputError
from momentkit.records import Detection

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Observation:
    frame_index: int
    detection: Detection
    # Position of the detection within its frame, when known
    detection_index: int = field(default=None, compare=False)

    @property
    def box(self):
        return self.detection.box

    @property
    def roi_feature(self):
        return self.detection.roi_feature


@dataclass(frozen=True, eq=False)
class InstanceTrack:
    """
    One instance followed across frames.

    Observations are in strictly increasing frame order and all share the
    track's class label.
    """
    track_id: int
    class_label: str
    observations: tuple

    def __post_init__(self):
        frames = [o.frame_index for o in self.observations]
        if not frames:
            raise InputError(f'Track {self.track_id} has no observations')
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise InputError(f'Track {self.track_id} observations are not in '
                             'strictly increasing frame order')
        if any(o.detection.class_label != self.class_label
               for o in self.observations):
            raise InputError(f'Track {self.track_id} mixes class labels')

    @property
    def first_frame(self):
        return self.observations[0].frame_index

    @property
    def last_frame(self):
        return self.observations[-1].frame_index

    @property
    def frames(self):
        return [o.frame_index for o in self.observations]

    def to_dict(self):
        return {'track_id': self.track_id,
                'class_label': self.class_label,
                'observations': [{'frame_index': o.frame_index,
                                  'box': list(o.box),
                                  'roi_feature': o.roi_feature.tolist()}
                                 for o in self.observations]}

    @classmethod
    def from_dict(cls, d):
        observations = tuple(
            Observation(int(o['frame_index']),
                        Detection(d['class_label'], o['box'],
                                  o['roi_feature'], d['track_id']))
            for o in d['observations'])
        return cls(d['track_id'], d['class_label'], observations)


def box_iou(a, b):
    """
    Intersection over union of two ``(x1, y1, x2, y2)`` boxes.

    >>> box_iou((0, 0, 2, 2), (1, 1, 3, 3))
    0.14285714285714285
    """
    w = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    h = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = w * h
    union = ((a[2] - a[0]) * (a[3] - a[1]) +
             (b[2] - b[0]) * (b[3] - b[1]) - inter)
    return inter / union if union > 0 else 0.0


def _as_detection(det):
    if isinstance(det, Detection):
        return det
    return Detection(det['class_label'], det['box'], det['roi_feature'])


def link_tracks(per_frame_detections, iou_min=0.3, feature_cos_min=0.5,
                max_gap_frames=5, iou_weight=1.0, feature_weight=1.0):
    """
    Greedily link detections frame by frame into tracks.

    In each frame, every open track of the same class is scored against
    every detection by ``iou_weight*IoU + feature_weight*cosine`` of the
    track's latest box and ROI feature.  Pairs below `iou_min` or
    `feature_cos_min` are not candidates.  Pairs are accepted in order of
    descending score (ties: older track first, then lower detection index),
    each track and detection at most once.  Left-over detections start new
    tracks.  A track not seen for more than `max_gap_frames` frames is
    closed.

    Parameters
    ----------
    per_frame_detections : sequence of (frame_index, detections)
        Frame indices non-decreasing.  Detections are `Detection` objects
        or dicts with ``class_label``, ``box`` and ``roi_feature``; any
        track ids they carry are ignored.
    iou_min, feature_cos_min : float, optional
    max_gap_frames : int, optional
    iou_weight, feature_weight : float, optional

    Returns
    -------
    tracks : list of InstanceTrack
        Numbered from 0 in order of first appearance.

    Examples
    --------
    >>> dets = [(0, [{'class_label': 'dog', 'box': (0, 0, .5, .5),
    ...               'roi_feature': [1.0]}]),
    ...         (1, [{'class_label': 'dog', 'box': (0, 0, .5, .6),
    ...               'roi_feature': [1.0]}])]
    >>> [t.frames for t in link_tracks(dets)]
    [[0, 1]]
    """
    observations = []
    labels = []
    open_tracks = []
    last_frame = None

    for frame_index, detections in per_frame_detections:
        frame_index = int(frame_index)
        if last_frame is not None and frame_index < last_frame:
            raise InputError('Frame indices must be non-decreasing; got '
                             f'{frame_index} after {last_frame}')
        last_frame = frame_index
        detections = [_as_detection(d) for d in detections]

        open_tracks = [t for t in open_tracks
                       if frame_index - observations[t][-1][0]
                       <= max_gap_frames]

        candidates = []
        for t in open_tracks:
            if observations[t][-1][0] == frame_index:
                continue
            latest = observations[t][-1][2]
            for d, det in enumerate(detections):
                if det.class_label != labels[t]:
                    continue
                iou = box_iou(latest.box, det.box)
                if iou < iou_min:
                    continue
                cos = cosine(latest.roi_feature, det.roi_feature)
                if cos < feature_cos_min:
                    continue
                score = iou_weight * iou + feature_weight * cos
                candidates.append((-score, t, d))
        candidates.sort()

        used_tracks = set()
        used_dets = set()
        for _, t, d in candidates:
            if t in used_tracks or d in used_dets:
                continue
            used_tracks.add(t)
            used_dets.add(d)
            observations[t].append((frame_index, d, detections[d]))

        for d, det in enumerate(detections):
            if d in used_dets:
                continue
            observations.append([(frame_index, d, det)])
            labels.append(det.class_label)
            open_tracks.append(len(observations) - 1)

    tracks = []
    for t, obs in enumerate(observations):
        tracks.append(InstanceTrack(
            t, labels[t],
            tuple(Observation(f, det.with_track(t), d)
                  for f, d, det in obs)))
    logger.info('Linked detections into %d tracks', len(tracks))
    return tracks


def label_detections(frames, tracks):
    """
    Copy track ids onto the detections of each frame.

    Detections are matched to track observations by frame index and their
    position within the frame, as recorded by `link_tracks`.  Observations
    read back from files carry no position; those are matched by box and
    class label, equal boxes taking ids in track order.

    Returns
    -------
    frames : list of FrameRecord
        New records whose detections carry track ids.
    """
    by_position = {}
    by_box = {}
    for track in tracks:
        for obs in track.observations:
            if obs.detection_index is not None:
                by_position[(obs.frame_index, obs.detection_index)] = \
                    (obs.box, track.track_id)
            else:
                key = (obs.frame_index, obs.box, obs.detection.class_label)
                by_box.setdefault(key, []).append(track.track_id)
    labelled = []
    for frame in frames:
        detections = []
        for d, det in enumerate(frame.detections):
            key = (frame.index, det.box, det.class_label)
            box, track_id = by_position.get((frame.index, d), (None, None))
            if box != det.box:
                if not by_box.get(key):
                    raise InputError(f'Detection {det.box} in frame '
                                     f'{frame.index} belongs to no track')
                track_id = by_box[key].pop(0)
            detections.append(det.with_track(track_id))
        labelled.append(frame.with_detections(detections))
    return labelled


def frames_to_detections(frames):
    """The ``(frame_index, detections)`` pairs `link_tracks` consumes."""
    return [(f.index, list(f.detections)) for f in frames]


def canonical_track_ids(tracks):
    """
    Rename tracks 0, 1, ... by first appearance (frame, then box), so that
    two linkings of the same detections can be compared.
    """
    order = sorted(tracks, key=lambda t: (t.first_frame,
                                          t.observations[0].box))
    rename = {t.track_id: new for new, t in enumerate(order)}
    return [InstanceTrack(rename[t.track_id], t.class_label,
                          tuple(Observation(o.frame_index,
                                            o.detection.with_track(
                                                rename[t.track_id]),
                                            o.detection_index)
                                for o in t.observations))
            for t in order]
