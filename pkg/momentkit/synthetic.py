"""
Seeded synthetic videos with known event boundaries.

Each event is a block of frames with its own luma level, its own global
feature direction, and one static instance of its own class.  The
generator also returns frame-difference scores (a spike at every boundary
over a noisy floor) and clue records for the instance-event matrix, so the
whole pipeline can run without any video decoding.
"""
from dataclasses import dataclass

import numpy as np

from momentkit._common import check_random_state
from momentkit.records import Detection, Event, FrameRecord
from momentkit.temporal.space import default_frame_times
from momentkit.tracking.matrix import VIDEO

CLASSES = ('person', 'dog', 'car', 'ball', 'cup', 'bicycle', 'cat', 'boat')
ACTIONS = ('walks across the room', 'runs in circles', 'drives past',
           'rolls on the floor', 'sits on a table', 'leans on a wall',
           'jumps onto a sofa', 'floats by')
SCENES = ('living room', 'park', 'street', 'playground', 'kitchen',
          'garage', 'bedroom', 'harbour')


@dataclass(frozen=True, eq=False)
class SyntheticVideo:
    """
    Frames and ground truth for one synthetic video.

    `boundaries` are split indices: boundary i lies between frames i and
    i+1.  `scores` has one frame-difference score per such gap.
    """
    video_id: str
    duration: float
    frames: tuple
    scores: np.ndarray
    boundaries: tuple
    events: tuple
    clues: tuple


def _event_lengths(n_frames, n_events, min_event_len, rng):
    spare = n_frames - n_events * min_event_len
    if spare < 0:
        raise ValueError(f'{n_frames} frames cannot hold {n_events} events '
                         f'of {min_event_len} frames')
    return min_event_len + rng.multinomial(spare, np.ones(n_events) / n_events)


def _clues(n_events):
    clues = []
    for e in range(n_events):
        cls = CLASSES[e % len(CLASSES)]
        action = ACTIONS[e % len(ACTIONS)]
        scene = SCENES[e % len(SCENES)]
        clues.append({'track_id': VIDEO, 'event_index': e, 'kind': 'scene',
                      'text': f'a {scene}'})
        clues.append({'track_id': VIDEO, 'event_index': e,
                      'kind': 'caption',
                      'text': f'A {cls} {action} in a {scene}.'})
        clues.append({'track_id': e, 'event_index': e, 'kind': 'instance',
                      'text': f'a {cls}'})
        clues.append({'track_id': e, 'event_index': e, 'kind': 'action',
                      'text': action})
        clues.append({'track_id': e, 'event_index': e, 'kind': 'caption',
                      'text': f'The {cls} {action}.'})
    return tuple(clues)


def synthetic_video(n_frames=100, n_events=5, dim=16, luma_shape=(8, 8),
                    score_noise=0.02, min_event_len=12, duration=120.0,
                    video_id='synthetic', random_state=0):
    """
    Generate a synthetic video.

    Parameters
    ----------
    n_frames : int, optional
    n_events : int, optional
        Number of ground-truth events, so ``n_events - 1`` boundaries.
    dim : int, optional
        Width of the global and ROI features; at least `n_events`.
    luma_shape : tuple, optional
    score_noise : float, optional
        Standard deviation of the noise floor of `scores`.
    min_event_len : int, optional
        Shortest event, in frames.
    duration : float, optional
        Video length in seconds.
    video_id : str, optional
    random_state : {None, int, np.random.Generator}, optional

    Returns
    -------
    video : SyntheticVideo
        Frames carry detections without track ids.

    Examples
    --------
    >>> video = synthetic_video(random_state=3)
    >>> len(video.frames), len(video.boundaries)
    (100, 4)
    """
    if dim < n_events:
        raise ValueError(f'dim {dim} must be at least n_events {n_events}')
    rng = check_random_state(random_state)
    lengths = _event_lengths(n_frames, n_events, min_event_len, rng)
    ends = np.cumsum(lengths) - 1
    starts = np.concatenate(([0], ends[:-1] + 1))
    times = default_frame_times(n_frames)

    roi = rng.normal(size=(n_events, dim))
    frames = []
    for e, (start, end) in enumerate(zip(starts, ends)):
        level = min(40 + 160 * (e % 2) + 10 * e, 245)
        x = 0.05 + 0.1 * (e % 5)
        box = (x, 0.2, x + 0.4, 0.7)
        for f in range(start, end + 1):
            luma = np.clip(level + rng.integers(-5, 6, size=luma_shape),
                           0, 255)
            feature = np.eye(dim)[e] + rng.normal(0, 0.01, dim)
            det = Detection(CLASSES[e % len(CLASSES)], box,
                            roi[e] + rng.normal(0, 0.01, dim))
            frames.append(FrameRecord(int(f), float(times[f]), feature, luma,
                                      (det,)))

    boundaries = tuple(int(b) for b in ends[:-1])
    scores = np.clip(0.05 + rng.normal(0, score_noise, n_frames - 1), 0, 1)
    scores[list(boundaries)] = 1.0
    events = tuple(Event(int(s), int(e), float(times[s]), float(times[e]))
                   for s, e in zip(starts, ends))
    return SyntheticVideo(video_id, float(duration), tuple(frames), scores,
                          boundaries, events, _clues(n_events))
