"""
Printing metric reports.
"""
import json

from tabulate import tabulate

from momentkit._common import _get_option


def _cell(value):
    if isinstance(value, float):
        return f'{value:.4f}'
    if isinstance(value, list):
        return ', '.join(str(v) for v in value) or '-'
    return str(value)


def _flatten(report, prefix=''):
    rows = []
    for key, value in report.items():
        name = f'{prefix}{key}'
        if isinstance(value, dict):
            rows.extend(_flatten(value, f'{name}@'))
        else:
            rows.append((name, _cell(value)))
    return rows


def _as_json(report):
    return json.dumps(report, sort_keys=False)


def _as_table(report):
    # Cells are preformatted so lists and counts do not change float columns
    return tabulate(_flatten(report), headers=['metric', 'value'],
                    disable_numparse=True, colalign=('left', 'right'))


_format_map = {'json': _as_json,
               'table': _as_table}


def format_report(report, fmt='json'):
    """
    Render a metrics report as one JSON line or a plain-text table.

    >>> print(format_report({'mean_iou': 0.5, 'recall_at': {0.5: 1.0}},
    ...                     'table'))
    metric           value
    -------------  -------
    mean_iou        0.5000
    recall_at@0.5   1.0000
    """
    return _get_option(fmt, _format_map, 'Report format')(report)
