"""
Highlight detection metrics: mean average precision over an IoU grid and
recall of the top-scored moment at IoU 0.5.
"""
import logging
from dataclasses import dataclass

import numpy as np

from momentkit.exceptions import InputError, ShapeError
from momentkit.metrics.grounding import interval_iou
from momentkit.records import as_interval

logger = logging.getLogger(__name__)

DEFAULT_IOU_GRID = tuple(float(t) for t in
                         np.round(np.linspace(0.5, 0.95, 10), 2))


@dataclass(frozen=True)
class ScoredMoment:
    interval: object
    score: float

    def __post_init__(self):
        object.__setattr__(self, 'interval', as_interval(self.interval))
        object.__setattr__(self, 'score', float(self.score))
        if not np.isfinite(self.score):
            raise InputError(f'Moment score {self.score} is not finite')


def _as_moment(value):
    if isinstance(value, ScoredMoment):
        return value
    interval, score = value
    return ScoredMoment(interval, score)


def _ranked(moments):
    # Stable sort keeps input order among equal scores
    return sorted(moments, key=lambda m: -m.score)


def average_precision(ranked, gts, threshold):
    """
    All-points interpolated average precision of ranked predictions.

    Each prediction, in rank order, is a true positive if some unmatched
    ground truth reaches IoU `threshold` with it; it takes the one with
    the highest IoU (lowest index on ties).

    >>> average_precision([ScoredMoment((0, 6), 1.0)], [(0, 10)], 0.6)
    1.0
    """
    if not gts:
        raise InputError('Average precision needs ground truth')
    matched = set()
    hits = []
    for moment in ranked:
        best, best_iou = None, -1.0
        for j, gt in enumerate(gts):
            if j in matched:
                continue
            iou = interval_iou(moment.interval, gt)
            if iou >= threshold and iou > best_iou:
                best, best_iou = j, iou
        if best is not None:
            matched.add(best)
        hits.append(best is not None)
    if not hits:
        return 0.0

    tp = np.cumsum(hits)
    recall = tp / len(gts)
    precision = tp / np.arange(1, len(hits) + 1)
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def highlight_metrics(preds, gts, iou_grid=DEFAULT_IOU_GRID, query_ids=None):
    """
    mAP and R1@0.5 for highlight detection.

    Parameters
    ----------
    preds : sequence of sequence of ScoredMoment or (interval, score)
        The predicted moments of each query.
    gts : sequence of sequence of Interval or (start, end)
        The ground-truth moments of each query, aligned with `preds`.
    iou_grid : sequence of float, optional
        IoU thresholds, 0.5 to 0.95 in steps of 0.05 by default.
    query_ids : sequence, optional
        Names used when reporting excluded queries; positions by default.

    Returns
    -------
    report : dict
        ``map`` is the mean over queries of the mean AP over `iou_grid`;
        ``r1_at_05`` is the fraction of queries whose top-scored moment
        reaches IoU 0.5 with some ground truth; ``ap_at`` is the mean AP at
        each threshold; ``excluded`` lists queries without ground truth,
        which are left out of everything else.

    Examples
    --------
    >>> report = highlight_metrics([[((0, 6), 0.9)]], [[(0, 10)]],
    ...                            iou_grid=(0.5, 0.55, 0.6, 0.65))
    >>> report['map']
    0.75
    """
    if len(preds) != len(gts):
        raise ShapeError(f'{len(preds)} prediction lists for {len(gts)} '
                         'queries')
    if query_ids is None:
        query_ids = list(range(len(gts)))

    excluded = []
    aps = []
    top_hits = []
    for qid, moments, truth in zip(query_ids, preds, gts):
        truth = [as_interval(g) for g in truth]
        if not truth:
            logger.warning('Query %s has no ground truth; excluded', qid)
            excluded.append(qid)
            continue
        ranked = _ranked([_as_moment(m) for m in moments])
        aps.append([average_precision(ranked, truth, t) for t in iou_grid])
        top_hits.append(bool(ranked) and
                        max(interval_iou(ranked[0].interval, g)
                            for g in truth) >= 0.5)

    if not aps:
        raise InputError('Every query lacks ground truth')
    aps = np.array(aps)
    return {'map': float(aps.mean(axis=1).mean()),
            'r1_at_05': float(np.mean(top_hits)),
            'ap_at': {float(t): float(v)
                      for t, v in zip(iou_grid, aps.mean(axis=0))},
            'excluded': excluded}
