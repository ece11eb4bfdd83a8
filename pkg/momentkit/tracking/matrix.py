"""
The instance-event matrix.

Rows are instance tracks plus one row for the whole video; columns are
events.  A cell is present when its track is seen during its event, and
collects the visual clues (scenes, instances, actions, attributes) and the
caption that external captioners produced for that instance in that event.
"""
from dataclasses import dataclass

from momentkit.exceptions import CellReferenceError, InputError
from momentkit.records import Event
from momentkit.tracking.tracks import InstanceTrack

VIDEO = 'video'

CLUE_KINDS = ('scene', 'instance', 'action', 'attribute', 'caption')


@dataclass(frozen=True)
class Cell:
    present: bool
    clues: tuple = ()
    caption: str = None


@dataclass(frozen=True)
class ClueRecord:
    """
    One clue from an external model: `text` of the given `kind` about
    track `track_id` (or `VIDEO`) during event `event_index`.
    """
    track_id: object
    event_index: int
    kind: str
    text: str

    @classmethod
    def from_dict(cls, d):
        return cls(d['track_id'], int(d['event_index']), d['kind'], d['text'])

    def to_dict(self):
        return {'track_id': self.track_id, 'event_index': self.event_index,
                'kind': self.kind, 'text': self.text}


@dataclass(frozen=True, eq=False)
class InstanceEventMatrix:
    """
    Tracks by events, with one cell per pair.

    `cells` is a tuple of rows, the first for the whole video and the rest
    in the order of `tracks`.  `duration` is the video length in seconds,
    when known.
    """
    tracks: tuple
    events: tuple
    cells: tuple
    video_id: str = ''
    duration: float = None

    @property
    def row_keys(self):
        return [VIDEO] + [t.track_id for t in self.tracks]

    def row_index(self, row_key):
        try:
            return self.row_keys.index(row_key)
        except ValueError:
            raise KeyError(row_key)

    def cell(self, row_key, event_index):
        return self.cells[self.row_index(row_key)][event_index]

    def track(self, track_id):
        return self.tracks[self.row_index(track_id) - 1]

    def presence(self):
        """Rows of presence flags, whole-video row first."""
        return [[c.present for c in row] for row in self.cells]

    def __eq__(self, other):
        if not isinstance(other, InstanceEventMatrix):
            return NotImplemented
        return matrix_to_dict(self) == matrix_to_dict(other)


def _check_events(events):
    for a, b in zip(events, events[1:]):
        if b.start_frame <= a.end_frame:
            raise InputError(f'Events overlap or are out of order: frames '
                             f'{a.start_frame}-{a.end_frame} and '
                             f'{b.start_frame}-{b.end_frame}')


def build_matrix(tracks, events, video_id='', duration=None):
    """
    Lay tracks against events.

    A track row is present in event j when any of its observations falls
    within the event's frame span.  The whole-video row is present in every
    event.  Clues and captions start empty.

    Examples
    --------
    >>> from momentkit.records import Event
    >>> events = [Event(0, 4, 0.0, 0.2), Event(5, 9, 0.25, 0.45)]
    >>> build_matrix([], events).presence()
    [[True, True]]
    """
    tracks = tuple(tracks)
    events = tuple(events)
    _check_events(events)
    rows = [tuple(Cell(True) for _ in events)]
    for track in tracks:
        frames = track.frames
        rows.append(tuple(
            Cell(any(e.start_frame <= f <= e.end_frame for f in frames))
            for e in events))
    return InstanceEventMatrix(tracks, events, tuple(rows), video_id,
                               duration)


def _as_clue(record):
    if isinstance(record, ClueRecord):
        return record
    return ClueRecord.from_dict(record)


def attach_clues(matrix, clue_records):
    """
    Add external clues and captions to the matrix.

    Clue text is appended to the cell's clue list unless that exact
    (kind, text) is already there; a ``'caption'`` record replaces the
    cell's caption.  Applying the same records twice gives the same matrix
    as applying them once.

    Parameters
    ----------
    matrix : InstanceEventMatrix
    clue_records : sequence of ClueRecord or dict

    Returns
    -------
    matrix : InstanceEventMatrix
        A new matrix; the input is not modified.

    Raises
    ------
    CellReferenceError
        If any record names an unknown row, an event out of range, an
        unknown kind, or a cell that is not present.  All offending
        records are listed.
    """
    records = [_as_clue(r) for r in clue_records]
    cells = [list(row) for row in matrix.cells]
    bad = []
    for record in records:
        try:
            row = matrix.row_index(record.track_id)
        except KeyError:
            bad.append(record)
            continue
        if (record.kind not in CLUE_KINDS or
                not 0 <= record.event_index < len(matrix.events) or
                not cells[row][record.event_index].present):
            bad.append(record)
            continue
        cell = cells[row][record.event_index]
        if record.kind == 'caption':
            cell = Cell(cell.present, cell.clues, record.text)
        elif (record.kind, record.text) not in cell.clues:
            cell = Cell(cell.present, cell.clues + ((record.kind,
                                                     record.text),),
                        cell.caption)
        cells[row][record.event_index] = cell

    if bad:
        raise CellReferenceError(
            f'{len(bad)} clue record(s) refer to absent cells: ' +
            '; '.join(str(r.to_dict()) for r in bad), bad)
    return InstanceEventMatrix(matrix.tracks, matrix.events,
                               tuple(tuple(row) for row in cells),
                               matrix.video_id, matrix.duration)


def matrix_to_dict(matrix):
    """
    JSON-ready form with a stable field order: tracks, events, then one
    entry per cell, row by row.
    """
    cells = []
    for key, row in zip(matrix.row_keys, matrix.cells):
        for j, cell in enumerate(row):
            cells.append({'row': key, 'event_index': j,
                          'present': cell.present,
                          'clues': [{'kind': k, 'text': t}
                                    for k, t in cell.clues],
                          'caption': cell.caption})
    return {'video_id': matrix.video_id,
            'duration': matrix.duration,
            'tracks': [t.to_dict() for t in matrix.tracks],
            'events': [e.to_dict() for e in matrix.events],
            'cells': cells}


def matrix_from_dict(d):
    tracks = tuple(InstanceTrack.from_dict(t) for t in d['tracks'])
    events = tuple(Event.from_dict(e) for e in d['events'])
    keys = [VIDEO] + [t.track_id for t in tracks]
    grid = {(c['row'], c['event_index']): c for c in d['cells']}
    rows = []
    for key in keys:
        row = []
        for j in range(len(events)):
            c = grid[(key, j)]
            row.append(Cell(c['present'],
                            tuple((x['kind'], x['text']) for x in c['clues']),
                            c['caption']))
        rows.append(tuple(row))
    return InstanceEventMatrix(tracks, events, tuple(rows),
                               d.get('video_id', ''), d.get('duration'))
