import numpy as np

from momentkit.exceptions import InputError, ShapeError
from momentkit.records import as_interval


def interval_iou(a, b):
    """
    Temporal intersection over union of two intervals.

    Zero when the union has zero length.

    Examples
    --------
    >>> interval_iou((0, 10), (5, 15))
    0.3333333333333333
    >>> interval_iou((0, 5), (5, 10))
    0.0
    """
    a = as_interval(a)
    b = as_interval(b)
    inter = max(0.0, min(a.end, b.end) - max(a.start, b.start))
    union = max(a.end, b.end) - min(a.start, b.start)
    return inter / union if union > 0 else 0.0


def grounding_metrics(preds, gts, thresholds=(0.3, 0.5, 0.7)):
    """
    Recall at IoU thresholds and mean IoU for temporal grounding.

    Parameters
    ----------
    preds, gts : sequence of Interval or (start, end)
        One predicted and one ground-truth interval per query, aligned.
    thresholds : sequence of float, optional

    Returns
    -------
    report : dict
        ``recall_at`` maps each threshold to the fraction of queries whose
        IoU reaches it; ``mean_iou`` is the mean IoU over queries.

    Examples
    --------
    >>> grounding_metrics([(0, 10)], [(0, 10)])
    {'recall_at': {0.3: 1.0, 0.5: 1.0, 0.7: 1.0}, 'mean_iou': 1.0}
    """
    if len(preds) != len(gts):
        raise ShapeError(f'{len(preds)} predictions for {len(gts)} queries')
    if not gts:
        raise InputError('No queries to evaluate')
    ious = np.array([interval_iou(p, g) for p, g in zip(preds, gts)])
    return {'recall_at': {float(t): float(np.mean(ious >= t))
                          for t in thresholds},
            'mean_iou': float(ious.mean())}
