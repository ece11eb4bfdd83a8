"""
Action segmentation metrics: frame accuracy (MoF), segmental F1 at IoU
overlaps, and the segmental edit score.

Labeled intervals are rasterized onto a frame grid at a declared frame
rate; frame f at time ``f / fps`` belongs to an interval when
``start <= f / fps < end``.  Segments for F1 and edit are the runs of equal
labels on that grid.
"""
from dataclasses import dataclass

import numpy as np

from momentkit.exceptions import InputError, ShapeError
from momentkit.records import as_interval


@dataclass(frozen=True)
class LabeledSegmentation:
    """
    Ordered, non-overlapping labeled intervals.

    `segments` holds ``(interval, label)`` pairs.  `frame_labels`, when
    given, is used for the frame grid instead of rasterizing.
    """
    segments: tuple = ()
    frame_labels: tuple = None

    def __post_init__(self):
        segments = tuple((as_interval(i), label) for i, label in self.segments)
        for (a, _), (b, _) in zip(segments, segments[1:]):
            if b.start < a.end:
                raise InputError(f'Segments [{a.start}, {a.end}) and '
                                 f'[{b.start}, {b.end}) overlap or are out '
                                 'of order')
        object.__setattr__(self, 'segments', segments)
        if self.frame_labels is not None:
            object.__setattr__(self, 'frame_labels', tuple(self.frame_labels))

    @classmethod
    def from_records(cls, records):
        """From dicts with ``start``, ``end`` and ``label``."""
        return cls(tuple(((r['start'], r['end']), r['label'])
                         for r in records))

    @property
    def end(self):
        return self.segments[-1][0].end if self.segments else 0.0

    def rasterize(self, n_frames, fps=1.0):
        """Label of each of the first `n_frames` frames, None where uncovered."""
        if self.frame_labels is not None:
            if len(self.frame_labels) != n_frames:
                raise ShapeError(f'{len(self.frame_labels)} frame labels on '
                                 f'a grid of {n_frames} frames')
            return list(self.frame_labels)
        times = np.arange(n_frames) / fps
        labels = [None] * n_frames
        for interval, label in self.segments:
            inside = np.flatnonzero((times >= interval.start) &
                                    (times < interval.end))
            for f in inside:
                labels[f] = label
        return labels


def _n_frames(gt, fps):
    if gt.frame_labels is not None:
        return len(gt.frame_labels)
    end = gt.end
    n = int(np.ceil(end * fps)) + 1
    return int(np.count_nonzero(np.arange(n) / fps < end))


def label_runs(frame_labels, background=(None,)):
    """
    Runs of equal labels as ``(label, start, end)``, end exclusive.
    Background labels start no run.

    >>> label_runs(['a', 'a', None, 'b'])
    [('a', 0, 2), ('b', 3, 4)]
    """
    runs = []
    previous = object()
    for i, label in enumerate(frame_labels):
        if label != previous:
            if label not in background:
                runs.append([label, i, i + 1])
            previous = label
        elif label not in background:
            runs[-1][2] = i + 1
    return [tuple(r) for r in runs]


def _run_iou(a, b):
    inter = max(0, min(a[2], b[2]) - max(a[1], b[1]))
    union = max(a[2], b[2]) - min(a[1], b[1])
    return inter / union


def segment_matches(pred_runs, gt_runs, overlap):
    """
    Greedy one-to-one matching of same-label runs with IoU >= `overlap`,
    in order of descending IoU (ties: lower prediction index, then lower
    ground-truth index).  Returns the number of matches.
    """
    pairs = []
    for i, p in enumerate(pred_runs):
        for j, g in enumerate(gt_runs):
            if p[0] != g[0]:
                continue
            iou = _run_iou(p, g)
            if iou >= overlap:
                pairs.append((-iou, i, j))
    pairs.sort()
    used_pred = set()
    used_gt = set()
    for _, i, j in pairs:
        if i in used_pred or j in used_gt:
            continue
        used_pred.add(i)
        used_gt.add(j)
    return len(used_pred)


def f1_from_counts(tp, n_pred, n_gt):
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gt if n_gt else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def edit_score(pred_runs, gt_runs):
    """
    Normalized Levenshtein similarity of the two run label orders, 0-100.

    >>> edit_score([('a', 0, 1), ('b', 1, 2)], [('a', 0, 2)])
    50.0
    """
    p = [r[0] for r in pred_runs]
    y = [r[0] for r in gt_runs]
    if not p and not y:
        return 100.0
    d = np.zeros((len(p) + 1, len(y) + 1))
    d[:, 0] = np.arange(len(p) + 1)
    d[0, :] = np.arange(len(y) + 1)
    for i in range(1, len(p) + 1):
        for j in range(1, len(y) + 1):
            if p[i - 1] == y[j - 1]:
                d[i, j] = d[i - 1, j - 1]
            else:
                d[i, j] = 1 + min(d[i - 1, j], d[i, j - 1], d[i - 1, j - 1])
    return float((1 - d[-1, -1] / max(len(p), len(y))) * 100)


def action_seg_metrics(pred, gt, f1_overlaps=(0.10, 0.25, 0.50), fps=1.0):
    """
    MoF, segmental F1 and edit score of a predicted segmentation.

    Parameters
    ----------
    pred, gt : LabeledSegmentation
    f1_overlaps : sequence of float, optional
        IoU overlaps for F1.
    fps : float, optional
        Frame rate of the evaluation grid.

    Returns
    -------
    report : dict
        ``mof`` is the fraction of ground-truth-covered frames whose
        predicted label is right; ``f1_at`` maps each overlap to the
        segmental F1; ``edit`` is the edit score.

    Examples
    --------
    >>> gt = LabeledSegmentation([((0, 2), 'a'), ((2, 4), 'b')])
    >>> action_seg_metrics(gt, gt)['mof']
    1.0
    """
    if not fps > 0:
        raise ValueError(f'fps must be positive, got {fps}')
    n = _n_frames(gt, fps)
    gt_labels = gt.rasterize(n, fps)
    covered = [i for i, label in enumerate(gt_labels) if label is not None]
    if not covered:
        raise InputError('Ground truth covers no frames')
    pred_labels = pred.rasterize(n, fps)

    mof = float(np.mean([pred_labels[i] == gt_labels[i] for i in covered]))
    pred_runs = label_runs(pred_labels)
    gt_runs = label_runs(gt_labels)
    f1_at = {}
    for overlap in f1_overlaps:
        tp = segment_matches(pred_runs, gt_runs, overlap)
        f1_at[float(overlap)] = f1_from_counts(tp, len(pred_runs),
                                               len(gt_runs))
    return {'mof': mof, 'f1_at': f1_at,
            'edit': edit_score(pred_runs, gt_runs)}
