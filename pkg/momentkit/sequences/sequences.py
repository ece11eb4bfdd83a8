"""
Grounded event sequences: a video's ordered list of timed captions, its
two text forms, and the mean negative log-likelihood used to score a
decoded sequence.
"""
import logging
import re
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from momentkit._common import _get_option
from momentkit.exceptions import (InputError, ParseError, RangeError,
                                  ShapeError)

logger = logging.getLogger(__name__)

# Half a unit in the last printed place of the seconds format
_SECONDS_SLACK = 0.005

_TOKEN_LINE = re.compile(r'<t=([^>]*)> <t=([^>]*)> (.+)')
_SECONDS_LINE = re.compile(r'(\d+\.\d{2})s-(\d+\.\d{2})s : (.+)')
_HEADER = re.compile(r'#format=(token|seconds)(?:;duration=([^;\s]+))?')


def _check_unit(tau):
    if not 0 <= tau <= 1:
        raise RangeError(f'Normalized time {tau} outside [0, 1]', tau)


@dataclass(frozen=True)
class SequenceEvent:
    """One captioned span of normalized time."""
    start_time: float
    end_time: float
    caption: str

    def __post_init__(self):
        object.__setattr__(self, 'start_time', float(self.start_time))
        object.__setattr__(self, 'end_time', float(self.end_time))
        _check_unit(self.start_time)
        _check_unit(self.end_time)
        if self.end_time < self.start_time:
            raise InputError(f'Event ends at {self.end_time} before it '
                             f'starts at {self.start_time}')
        if not self.caption:
            raise InputError('Event caption is empty')


@dataclass(frozen=True)
class EventSequence:
    """
    Events ordered by start time.

    Accepts `SequenceEvent` objects or ``(start, end, caption)`` triples.
    """
    events: tuple = ()

    def __post_init__(self):
        events = tuple(e if isinstance(e, SequenceEvent) else SequenceEvent(*e)
                       for e in self.events)
        if any(b.start_time < a.start_time for a, b in zip(events,
                                                            events[1:])):
            raise InputError('Events are not ordered by start time')
        object.__setattr__(self, 'events', events)

    @property
    def n_events(self):
        return len(self.events)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


@dataclass(frozen=True)
class TimeMarker:
    """A continuous time position inside a tokenized target."""
    tau: float


@dataclass(frozen=True)
class TokenizedTarget:
    """
    Token ids interleaved with time markers: each event contributes its
    start and end markers followed by its caption tokens.
    """
    tokens: tuple

    def __len__(self):
        return len(self.tokens)


def build_target(seq, encode_caption):
    """
    Tokenize a sequence with a caller-supplied caption tokenizer.

    >>> seq = EventSequence([(0.0, 0.5, 'ab')])
    >>> build_target(seq, lambda s: [ord(c) for c in s]).tokens
    (TimeMarker(tau=0.0), TimeMarker(tau=0.5), 97, 98)
    """
    tokens = []
    for event in seq:
        tokens.append(TimeMarker(event.start_time))
        tokens.append(TimeMarker(event.end_time))
        tokens.extend(int(t) for t in encode_caption(event.caption))
    return TokenizedTarget(tuple(tokens))


def _escape(caption):
    return caption.replace('\\', '\\\\').replace('\n', '\\n')


def _unescape(text):
    return re.sub(r'\\(.)', lambda m: '\n' if m.group(1) == 'n'
                  else m.group(1), text)


def format_seconds_span(start, end):
    """
    Seconds span as printed in instruction text.

    >>> format_seconds_span(15.5, 30.75)
    '15.50s-30.75s'
    """
    return f'{start:.2f}s-{end:.2f}s'


def _render_token(event, duration):
    return f'<t={event.start_time:.6f}> <t={event.end_time:.6f}> '


def _render_seconds(event, duration):
    span = format_seconds_span(event.start_time * duration,
                               event.end_time * duration)
    return f'{span} : '


_render_map = {'token': _render_token,
               'seconds': _render_seconds}


def _check_duration(time_format, duration):
    if time_format == 'seconds' and not (duration is not None and
                                         duration > 0):
        raise InputError('The seconds format needs a positive duration, '
                         f'got {duration}')


def render_event_sequence(seq, time_format='token', duration=None):
    """
    Write an event sequence as text, one event per line.

    Parameters
    ----------
    seq : EventSequence
    time_format : {'token', 'seconds'}, optional
        ``'token'`` writes ``<t=0.253100> <t=0.417000> caption`` with six
        decimals; ``'seconds'`` writes ``15.50s-30.75s : caption``.
    duration : float, optional
        Video length in seconds, required by the seconds format.

    Returns
    -------
    text : str
        Lines joined by newlines, with no trailing newline.  Backslashes
        and newlines inside captions are escaped as ``\\\\`` and ``\\n``.

    Examples
    --------
    >>> seq = EventSequence([(0.25, 0.5, 'a dog runs')])
    >>> render_event_sequence(seq)
    '<t=0.250000> <t=0.500000> a dog runs'
    >>> seq = EventSequence([(0.155, 0.3075, 'A group of children')])
    >>> render_event_sequence(seq, 'seconds', duration=100)
    '15.50s-30.75s : A group of children'
    """
    prefix = _get_option(time_format, _render_map, 'Time format')
    _check_duration(time_format, duration)
    lines = []
    for event in seq:
        _check_unit(event.start_time)
        _check_unit(event.end_time)
        lines.append(prefix(event, duration) + _escape(event.caption))
    return '\n'.join(lines)


def _parse_token(match, duration, line):
    try:
        return float(match.group(1)), float(match.group(2))
    except ValueError:
        raise ParseError(f'Bad time marker in {match.group(0)!r}', line)


def _parse_seconds(match, duration, line):
    times = []
    for group in (1, 2):
        seconds = float(match.group(group))
        if seconds > duration + _SECONDS_SLACK:
            raise RangeError(f'{seconds}s is past the end of a {duration}s '
                             'video', seconds)
        times.append(min(seconds / duration, 1.0))
    return tuple(times)


_parse_map = {'token': (_TOKEN_LINE, _parse_token),
              'seconds': (_SECONDS_LINE, _parse_seconds)}


def parse_event_sequence(text, time_format='token', duration=None):
    """
    Read text written by `render_event_sequence`.

    Blank lines are ignored.

    Raises
    ------
    ParseError
        For a line that does not match the format, with its line number.
    RangeError
        For a time outside [0, 1] (or past `duration`).
    InputError
        For an event that ends before it starts.

    Examples
    --------
    >>> seq = parse_event_sequence('<t=0.250000> <t=0.500000> a dog runs')
    >>> seq.events[0]
    SequenceEvent(start_time=0.25, end_time=0.5, caption='a dog runs')
    """
    pattern, parse_times = _get_option(time_format, _parse_map, 'Time format')
    _check_duration(time_format, duration)
    events = []
    for number, line in enumerate(text.split('\n'), start=1):
        if not line.strip():
            continue
        match = pattern.fullmatch(line)
        if match is None:
            raise ParseError(f'Expected a {time_format}-format event, got '
                             f'{line!r}', number)
        start, end = parse_times(match, duration, number)
        _check_unit(start)
        _check_unit(end)
        if end < start:
            raise InputError(f'line {number}: event ends at {end} before it '
                             f'starts at {start}')
        events.append(SequenceEvent(start, end, _unescape(match.group(3))))
    return EventSequence(tuple(events))


def sequence_nll(target, logprobs, time_logprob_fn=None):
    """
    Mean negative log-likelihood of a tokenized target.

    Row i of `logprobs` is the model's log-distribution for target
    position i given everything before it.  Text positions read the
    target token's entry; time-marker positions are scored by
    `time_logprob_fn`, because the distribution over continuous time comes
    from outside.  The same function scores caption-only targets and full
    event sequences.

    Parameters
    ----------
    target : TokenizedTarget
    logprobs : array_like
        Shape ``(len(target), V)``.  Rows at text positions must
        log-sum-exp to 0 within 1e-6.
    time_logprob_fn : callable, optional
        ``f(tau) -> log density``.  Required if the target has time
        markers.

    Returns
    -------
    nll : float

    Examples
    --------
    >>> target = TokenizedTarget((0, 1))
    >>> round(sequence_nll(target, np.log(np.full((2, 8), 1 / 8))), 4)
    2.0794
    """
    logprobs = np.asarray(logprobs, dtype=float)
    length = len(target.tokens)
    if length == 0:
        raise InputError('Target has no tokens')
    if logprobs.ndim != 2 or logprobs.shape[0] != length:
        raise ShapeError(f'Expected {length} rows of log-probabilities, got '
                         f'shape {logprobs.shape}')
    vocab = logprobs.shape[1]

    total = 0.0
    for i, token in enumerate(target.tokens):
        if isinstance(token, TimeMarker):
            if time_logprob_fn is None:
                raise InputError('Target has time markers but no '
                                 'time_logprob_fn was given')
            total += float(time_logprob_fn(token.tau))
            continue
        row = logprobs[i]
        norm = logsumexp(row)
        if not abs(norm) <= 1e-6:
            raise InputError(f'Row {i} is not normalized: log-sum-exp is '
                             f'{norm}')
        if not 0 <= token < vocab:
            raise InputError(f'Token id {token} outside vocabulary of '
                             f'size {vocab}')
        total += row[token]
    return float(-total / length)


def sequence_from_matrix(matrix):
    """
    The event sequence read off the whole-video row of a matrix.

    Each event's caption is the whole-video cell caption, falling back to
    the event's own caption; events with neither are left out.
    """
    events = []
    for event, cell in zip(matrix.events, matrix.cells[0]):
        caption = cell.caption or event.caption
        if not caption:
            logger.debug('Event %d-%d has no caption; left out of sequence',
                         event.start_frame, event.end_frame)
            continue
        events.append(SequenceEvent(event.start_time, event.end_time,
                                    caption))
    return EventSequence(tuple(events))


def write_sequence_file(path, seq, time_format='token', duration=None):
    """
    Write a sequence file: a ``#format=...`` header line, then the
    rendered events.
    """
    body = render_event_sequence(seq, time_format, duration)
    header = f'#format={time_format}'
    if duration is not None:
        header += f';duration={float(duration)!r}'
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(header + '\n')
        if body:
            f.write(body + '\n')


def read_sequence_file(path):
    """
    Read a file written by `write_sequence_file`.

    Returns
    -------
    seq : EventSequence
    time_format : str
    duration : float or None
    """
    with open(path, encoding='utf-8', newline='') as f:
        text = f.read()
    header, _, body = text.partition('\n')
    match = _HEADER.fullmatch(header.rstrip('\r'))
    if match is None:
        raise ParseError(f'Missing or malformed header {header!r}', 1)
    time_format = match.group(1)
    try:
        duration = None if match.group(2) is None else float(match.group(2))
    except ValueError:
        raise ParseError(f'Bad duration in header {header!r}', 1)

    try:
        seq = parse_event_sequence(body, time_format, duration)
    except ParseError as e:
        # Report file line numbers, counting the header
        raise ParseError(str(e).split(': ', 1)[1], e.line + 1)
    return seq, time_format, duration
