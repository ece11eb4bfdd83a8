"""
Event boundary detection.

A video is first cut at peaks of its smoothed frame-difference curve.  Those
cuts only see pixel changes, so adjacent pieces are then merged back
together whenever the frames on either side of the cut are consistent:
similar global features, and the same instances in nearly the same places.
"""
import logging
import math

import numpy as np
from scipy.ndimage import gaussian_filter1d

from momentkit._common import _get_option, cosine
from momentkit.exceptions import InputError
from momentkit.records import Event
from momentkit.tracking.tracks import (frames_to_detections, label_detections,
                                       link_tracks)

logger = logging.getLogger(__name__)

# Normalized image coordinates put the corners sqrt(2) apart.
_DIAGONAL = math.sqrt(2)


def frame_diff_scores(frames):
    """
    Mean absolute luma difference between each pair of consecutive frames.

    Parameters
    ----------
    frames : sequence of FrameRecord
        At least 2 frames, each with an 8-bit `luma` grid of the same shape.

    Returns
    -------
    scores : ndarray
        ``M - 1`` values in [0, 1]; entry i compares frames i and i+1.

    Examples
    --------
    >>> from momentkit.records import FrameRecord
    >>> black = FrameRecord(0, 0.0, [1.0], luma=np.zeros((2, 2)))
    >>> white = FrameRecord(1, 1.0, [1.0], luma=np.full((2, 2), 255))
    >>> frame_diff_scores([black, white])
    array([1.])
    """
    if len(frames) < 2:
        raise InputError('Frame differences need at least 2 frames')
    if any(f.luma is None for f in frames):
        raise InputError('Every frame needs a luma grid; supply precomputed '
                         'scores instead')
    shapes = {f.luma.shape for f in frames}
    if len(shapes) != 1:
        raise InputError(f'Luma grids have mismatched shapes {sorted(shapes)}')
    stack = np.stack([f.luma for f in frames]).astype(float)
    return np.abs(np.diff(stack, axis=0)).mean(axis=(1, 2)) / 255


def gaussian_smooth(scores, sigma=2.0):
    """
    Smooth scores with a normalized Gaussian kernel.

    The kernel has radius ``ceil(3*sigma)`` and the ends are padded by
    reflection (``d c b a | a b c d | d c b a``), so the output has the same
    length as the input.

    Examples
    --------
    >>> gaussian_smooth([1.0, 1.0, 1.0, 1.0], sigma=1.0)
    array([1., 1., 1., 1.])
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise InputError('Nothing to smooth')
    if not sigma > 0:
        raise ValueError(f'sigma must be positive, got {sigma}')
    return gaussian_filter1d(scores, sigma, mode='reflect',
                             radius=math.ceil(3 * sigma))


def find_split_points(smoothed, threshold):
    """
    Local maxima of the smoothed scores that rise above a threshold.

    Index i qualifies when ``smoothed[i] > threshold`` and it is at least
    as large as each existing neighbour.  A run of equal qualifying values
    is reported once, at its leftmost index.  Split i means a boundary
    between frames i and i+1.

    Examples
    --------
    >>> find_split_points([0, 1, 0, 2, 0], 0.5)
    [1, 3]
    >>> find_split_points([0, 1, 1, 0], 0.5)
    [1]
    """
    s = np.asarray(smoothed, dtype=float)
    n = s.size
    splits = []
    previous = None
    for i in range(n):
        qualifies = (s[i] > threshold and
                     (i == 0 or s[i] >= s[i - 1]) and
                     (i == n - 1 or s[i] >= s[i + 1]))
        if qualifies and not (previous == i - 1 and s[i] == s[i - 1]):
            splits.append(i)
        previous = i if qualifies else None
    return splits


def _by_track(frame):
    tracks = {}
    for det in frame.detections:
        if det.track_id is None:
            raise InputError(f'Frame {frame.index} has a detection without a '
                             'track id; link tracks first')
        if det.track_id in tracks:
            raise InputError(f'Track {det.track_id} appears twice in frame '
                             f'{frame.index}')
        tracks[det.track_id] = det
    return tracks


def consistency(prev_last, next_first):
    """
    Consistency between the last frame of one piece and the first of the
    next.

    The value is the cosine similarity of the two global features plus the
    mean, over every track seen in either frame, of the ROI feature cosine
    weighted by ``1 - Dist``.  Dist is the distance between the two box
    centers divided by the image diagonal, clamped to [0, 1], and is 1 for a
    track seen in only one of the frames (so that track adds nothing).

    Parameters
    ----------
    prev_last, next_first : FrameRecord
        Frames whose detections carry track ids.

    Returns
    -------
    value : float
        In [-2, 2].

    Examples
    --------
    >>> from momentkit.records import FrameRecord
    >>> a = FrameRecord(0, 0.0, [1.0, 0.0])
    >>> b = FrameRecord(1, 0.1, [0.0, 1.0])
    >>> consistency(a, b)
    0.0
    """
    value = cosine(prev_last.feature, next_first.feature)
    before = _by_track(prev_last)
    after = _by_track(next_first)
    union = before.keys() | after.keys()
    if not union:
        return value

    total = 0.0
    for track_id in before.keys() & after.keys():
        a, b = before[track_id], after[track_id]
        dist = min(np.linalg.norm(a.center - b.center) / _DIAGONAL, 1.0)
        total += cosine(a.roi_feature, b.roi_feature) * (1 - dist)
    return value + total / len(union)


def _check_coverage(pieces, n_frames):
    if not pieces:
        raise InputError('No sub-segments given')
    expected = 0
    for start, end in pieces:
        if start != expected or end < start:
            raise InputError(f'Sub-segments must be ordered, contiguous and '
                             f'non-overlapping; got ({start}, {end}) where '
                             f'position {expected} was expected to start')
        expected = end + 1
    if expected != n_frames:
        raise InputError(f'Sub-segments cover {expected} of {n_frames} '
                         'frames')


def _merge_pass(pieces, frames, merge_threshold):
    merged = [pieces[0]]
    for start, end in pieces[1:]:
        value = consistency(frames[merged[-1][1]], frames[start])
        if value > merge_threshold:
            merged[-1] = (merged[-1][0], end)
        else:
            merged.append((start, end))
    return merged


def _absorb_short(pieces, frames, min_event_frames):
    pieces = list(pieces)
    i = 0
    while len(pieces) > 1 and i < len(pieces):
        start, end = pieces[i]
        if end - start + 1 >= min_event_frames:
            i += 1
            continue
        left = right = -np.inf
        if i > 0:
            left = consistency(frames[pieces[i - 1][1]], frames[start])
        if i < len(pieces) - 1:
            right = consistency(frames[end], frames[pieces[i + 1][0]])
        if left >= right:
            pieces[i - 1] = (pieces[i - 1][0], end)
            del pieces[i]
            i -= 1
        else:
            pieces[i + 1] = (start, pieces[i + 1][1])
            del pieces[i]
    return pieces


def _to_events(pieces, frames):
    return [Event(frames[s].index, frames[e].index, frames[s].time,
                  frames[e].time) for s, e in pieces]


def _positions(subsegments, frames):
    position = {f.index: pos for pos, f in enumerate(frames)}
    pieces = []
    for seg in subsegments:
        if isinstance(seg, Event):
            start, end = seg.start_frame, seg.end_frame
        else:
            start, end = seg
        try:
            pieces.append((position[start], position[end]))
        except KeyError as e:
            raise InputError(f'Sub-segment refers to unknown frame {e}')
    return pieces


def merge_segments(subsegments, frames, merge_threshold=1.0,
                   min_event_frames=3, until_fixpoint=False):
    """
    Merge adjacent sub-segments whose boundary frames are consistent.

    One left-to-right pass compares the last frame of the current (possibly
    already merged) piece with the first frame of the next, and merges when
    `consistency` exceeds `merge_threshold`.  Pieces shorter than
    `min_event_frames` are then absorbed into whichever neighbour is more
    consistent with them (the left one on ties).

    Parameters
    ----------
    subsegments : sequence of Event or (start_frame, end_frame)
        Ordered pieces covering every frame exactly once.
    frames : sequence of FrameRecord
    merge_threshold : float, optional
    min_event_frames : int, optional
    until_fixpoint : bool, optional
        Repeat passes until nothing changes.

    Returns
    -------
    events : list of Event
    """
    pieces = _positions(subsegments, frames)
    _check_coverage(pieces, len(frames))

    while True:
        merged = _merge_pass(pieces, frames, merge_threshold)
        merged = _absorb_short(merged, frames, min_event_frames)
        if not until_fixpoint or merged == pieces:
            break
        pieces = merged
    return _to_events(merged, frames)


def _adaptive_threshold(smoothed, threshold_c):
    return float(np.mean(smoothed) + threshold_c * np.std(smoothed))


_threshold_map = {'adaptive': _adaptive_threshold}


def split_threshold(smoothed, threshold='adaptive', threshold_c=1.0):
    """
    Resolve a split threshold: a number is used as is, ``'adaptive'`` means
    mean plus `threshold_c` standard deviations of the smoothed scores.
    """
    if isinstance(threshold, (int, float)) and not isinstance(threshold, bool):
        return float(threshold)
    return _get_option(threshold, _threshold_map, 'Threshold mode')(
        smoothed, threshold_c)


def segment_video(frames, scores=None, sigma=2.0, threshold='adaptive',
                  threshold_c=1.0, merge_threshold=1.0, min_event_frames=3,
                  until_fixpoint=False):
    """
    Split a video into events.

    Scores (computed from luma unless given) are smoothed, cut at their
    thresholded peaks, and the resulting pieces merged with
    `merge_segments`.

    Parameters
    ----------
    frames : sequence of FrameRecord
        Frames in order.  Detections without track ids are linked with
        `link_tracks` defaults first.
    scores : array_like, optional
        Precomputed frame-difference scores, length ``len(frames) - 1``.
    sigma : float, optional
        Gaussian smoothing width in frames.
    threshold : {'adaptive', float}, optional
        Split threshold, see `split_threshold`.
    threshold_c : float, optional
        Standard deviations above the mean for the adaptive threshold.
    merge_threshold : float, optional
    min_event_frames : int, optional
    until_fixpoint : bool, optional

    Returns
    -------
    events : list of Event
        Ordered events that together cover every frame once.
    """
    frames = list(frames)
    if not frames:
        raise InputError('No frames given')
    indices = [f.index for f in frames]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise InputError('Frame indices must be strictly increasing')
    if len(frames) == 1:
        return _to_events([(0, 0)], frames)
    if any(d.track_id is None for f in frames for d in f.detections):
        tracks = link_tracks(frames_to_detections(frames))
        frames = label_detections(frames, tracks)

    if scores is None:
        scores = frame_diff_scores(frames)
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(frames) - 1,):
        raise InputError(f'Expected {len(frames) - 1} scores, '
                         f'got {scores.size}')

    smoothed = gaussian_smooth(scores, sigma)
    cut = split_threshold(smoothed, threshold, threshold_c)
    splits = find_split_points(smoothed, cut)

    bounds = [-1] + splits + [len(frames) - 1]
    pieces = [(a + 1, b) for a, b in zip(bounds, bounds[1:])]
    subsegments = [(frames[s].index, frames[e].index) for s, e in pieces]
    events = merge_segments(subsegments, frames, merge_threshold,
                            min_event_frames, until_fixpoint)
    logger.info('%d frames: %d split points, %d events', len(frames),
                len(splits), len(events))
    return events
