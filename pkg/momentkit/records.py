"""
Plain record types passed between the sub-packages.

Frames and detections come from external detectors and captioners; events
come out of boundary detection; intervals are what the metrics compare.
Each type validates itself on construction and converts to and from the
dicts used in the JSONL files.
"""
from dataclasses import dataclass

import numpy as np

from momentkit.exceptions import InputError, RangeError


def _as_vector(values, name):
    vector = np.asarray(values, dtype=float)
    if vector.ndim != 1:
        raise InputError(f'{name} must be a 1-D vector')
    if not np.all(np.isfinite(vector)):
        raise InputError(f'{name} contains non-finite values')
    vector.setflags(write=False)
    return vector


def _check_box(box):
    box = tuple(float(x) for x in box)
    if len(box) != 4:
        raise InputError(f'Box {box} must have 4 coordinates')
    x1, y1, x2, y2 = box
    if not (x1 < x2 and y1 < y2):
        raise InputError(f'Box {box} has zero or negative area')
    if min(box) < 0 or max(box) > 1:
        raise InputError(f'Box {box} is outside normalized image coordinates')
    return box


@dataclass(frozen=True, eq=False)
class Detection:
    """
    One detected instance in one frame.

    `box` is ``(x1, y1, x2, y2)`` in normalized image coordinates.
    `track_id` is None until the detection has been linked into a track.
    """
    class_label: str
    box: tuple
    roi_feature: np.ndarray
    track_id: object = None

    def __post_init__(self):
        object.__setattr__(self, 'box', _check_box(self.box))
        object.__setattr__(self, 'roi_feature',
                           _as_vector(self.roi_feature, 'roi_feature'))

    @property
    def center(self):
        x1, y1, x2, y2 = self.box
        return np.array([(x1 + x2) / 2, (y1 + y2) / 2])

    def with_track(self, track_id):
        return Detection(self.class_label, self.box, self.roi_feature,
                         track_id)

    def to_dict(self):
        return {'track_id': self.track_id,
                'class_label': self.class_label,
                'box': list(self.box),
                'roi_feature': self.roi_feature.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d['class_label'], d['box'], d['roi_feature'],
                   d.get('track_id'))


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """
    One sampled frame: its global visual feature, optional luma grid, and
    the instances detected in it.
    """
    index: int
    time: float
    feature: np.ndarray
    luma: np.ndarray = None
    detections: tuple = ()

    def __post_init__(self):
        if not 0 <= self.time <= 1:
            raise RangeError(f'Frame time {self.time} outside [0, 1]',
                             self.time)
        object.__setattr__(self, 'feature',
                           _as_vector(self.feature, 'feature'))
        if self.luma is not None:
            luma = np.asarray(self.luma, dtype=np.uint8)
            if luma.ndim != 2:
                raise InputError('luma must be a 2-D grid')
            luma.setflags(write=False)
            object.__setattr__(self, 'luma', luma)
        object.__setattr__(self, 'detections', tuple(self.detections))

    def with_detections(self, detections):
        return FrameRecord(self.index, self.time, self.feature, self.luma,
                           detections)

    def to_dict(self):
        """Luma is not included; it travels in a binary sidecar."""
        return {'index': self.index, 'time': self.time,
                'feature': self.feature.tolist(),
                'detections': [d.to_dict() for d in self.detections]}

    @classmethod
    def from_dict(cls, d, luma=None):
        return cls(int(d['index']), float(d['time']), d['feature'], luma,
                   tuple(Detection.from_dict(x)
                         for x in d.get('detections', ())))


@dataclass(frozen=True)
class Event:
    """
    A span of frames, ``start_frame`` to ``end_frame`` inclusive, with the
    normalized times of those two frames and an optional caption.
    """
    start_frame: int
    end_frame: int
    start_time: float
    end_time: float
    caption: str = None

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise InputError(f'Event starts at frame {self.start_frame} '
                             f'after it ends at {self.end_frame}')
        if self.start_time > self.end_time:
            raise InputError(f'Event starts at {self.start_time} '
                             f'after it ends at {self.end_time}')
        for t in (self.start_time, self.end_time):
            if not 0 <= t <= 1:
                raise RangeError(f'Event time {t} outside [0, 1]', t)

    def with_caption(self, caption):
        return Event(self.start_frame, self.end_frame, self.start_time,
                     self.end_time, caption)

    def to_dict(self):
        d = {'start_time': self.start_time, 'end_time': self.end_time,
             'start_frame': self.start_frame, 'end_frame': self.end_frame}
        if self.caption is not None:
            d['caption'] = self.caption
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(int(d['start_frame']), int(d['end_frame']),
                   float(d['start_time']), float(d['end_time']),
                   d.get('caption'))


@dataclass(frozen=True)
class Interval:
    """
    A closed time interval.  Units (seconds or normalized time) are up to
    the caller but must be consistent within one evaluation.
    """
    start: float
    end: float

    def __post_init__(self):
        object.__setattr__(self, 'start', float(self.start))
        object.__setattr__(self, 'end', float(self.end))
        if not (np.isfinite(self.start) and np.isfinite(self.end)):
            raise InputError(f'Interval ({self.start}, {self.end}) '
                             'is not finite')
        if self.start > self.end:
            raise InputError(f'Interval starts at {self.start} '
                             f'after it ends at {self.end}')

    @property
    def length(self):
        return self.end - self.start

    def to_list(self):
        return [self.start, self.end]


def as_interval(value):
    """
    Accept an `Interval` or any ``(start, end)`` pair.

    >>> as_interval((2, 5))
    Interval(start=2.0, end=5.0)
    """
    if isinstance(value, Interval):
        return value
    start, end = value
    return Interval(start, end)

