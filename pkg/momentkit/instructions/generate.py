"""
Instruction generation from an instance-event matrix.

Each requested task instance picks its source cells with a seeded
generator, fills its prompt template from those cells, asks the LLM client
for a reply, and turns the reply into a User/Assistant conversation.  The
grounding of every record is copied from the matrix events, never from
the reply.
"""
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from momentkit._common import check_random_state
from momentkit.exceptions import InputError, ParseError
from momentkit.instructions.tasks import TaskKind
from momentkit.instructions.templates import fill_prompt, load_template
from momentkit.records import Interval, as_interval
from momentkit.sequences.sequences import format_seconds_span
from momentkit.tracking.matrix import VIDEO

logger = logging.getLogger(__name__)

ROLES = ('User', 'Assistant')

SOURCE_CLIP_MARKER = '{{SOURCE_CLIP}}'

_ROLE_PREFIX = re.compile(r'\s*(User|Assistant)\s*:\s?(.*)')
_NUMBERED = re.compile(r'\s*(?:\d+[.)]|[-*])\s+(.*)')


@dataclass(frozen=True)
class InstructionRecord:
    """
    One generated instruction.

    `conversation` holds ``(role, text)`` pairs, `grounding` the event spans
    (normalized time) the instruction is about, and `source_cells` the
    ``(row, event_index)`` matrix cells it was generated from.
    """
    video_id: str
    task: TaskKind
    conversation: tuple
    grounding: tuple
    source_cells: tuple

    def to_dict(self):
        return {'video_id': self.video_id,
                'task': self.task.value,
                'conversation': [{'role': r, 'text': t}
                                 for r, t in self.conversation],
                'grounding': [i.to_list() for i in self.grounding],
                'source_cells': [{'row': r, 'event_index': j}
                                 for r, j in self.source_cells]}

    @classmethod
    def from_dict(cls, d):
        return cls(d['video_id'], TaskKind.parse(d['task']),
                   tuple((t['role'], t['text']) for t in d['conversation']),
                   tuple(as_interval(i) for i in d['grounding']),
                   tuple((c['row'], int(c['event_index']))
                         for c in d['source_cells']))


class InstructionBatch(list):
    """Generated records, with the failed task instances in `failures`."""

    def __init__(self, records=(), failures=()):
        super().__init__(records)
        self.failures = list(failures)


def validate_record(record):
    """
    Check a record's conversation and grounding.

    Roles must alternate starting with User, every turn must have text,
    and grounding intervals must lie within [0, 1].

    Raises
    ------
    InputError
        Listing every problem found.
    """
    problems = []
    if not record.conversation:
        problems.append('empty conversation')
    for i, (role, text) in enumerate(record.conversation):
        if role != ROLES[i % 2]:
            problems.append(f'turn {i} is {role!r}, expected {ROLES[i % 2]!r}')
        if not str(text).strip():
            problems.append(f'turn {i} has no text')
    if not record.grounding:
        problems.append('no grounding')
    for interval in record.grounding:
        if not (0 <= interval.start <= interval.end <= 1):
            problems.append(f'grounding {interval.to_list()} outside [0, 1]')
    if problems:
        raise InputError(f'Invalid {record.task.value} record: ' +
                         '; '.join(problems))
    return record


def parse_reply(reply):
    """
    Split a reply into conversation turns.

    Lines starting with ``User:`` or ``Assistant:`` begin a turn; other
    lines continue the current turn, and lines before the first prefix are
    dropped.  Consecutive turns with the same role are joined.  A reply
    with neither prefix is a single Assistant turn.

    Examples
    --------
    >>> parse_reply('User: Who runs?\\n\\nAssistant: A dog.')
    [('User', 'Who runs?'), ('Assistant', 'A dog.')]
    >>> parse_reply('  A dog runs.  ')
    [('Assistant', 'A dog runs.')]
    """
    turns = []
    for line in reply.splitlines():
        match = _ROLE_PREFIX.fullmatch(line)
        if match:
            role, text = match.groups()
            if turns and turns[-1][0] == role:
                turns[-1][1].append(text)
            else:
                turns.append((role, [text]))
        elif turns:
            turns[-1][1].append(line)
    if not turns:
        text = reply.strip()
        return [('Assistant', text)] if text else []
    return [(role, '\n'.join(lines).strip()) for role, lines in turns]


def _questions(reply):
    """Question lines from a numbered list, User turns, or plain lines."""
    turns = parse_reply(reply)
    asked = [t for r, t in turns if r == 'User' and t]
    if asked:
        return asked
    lines = [line.strip() for line in reply.splitlines() if line.strip()]
    numbered = [m.group(1).strip() for m in map(_NUMBERED.fullmatch, lines)
                if m]
    return numbered or lines


@dataclass
class _Job:
    task: TaskKind
    cells: list
    bindings: dict
    prompt: str = None


class _Material:
    """What the matrix offers each task to sample from."""

    def __init__(self, matrix):
        self.matrix = matrix
        video_row = matrix.cells[0]
        self.captioned_events = [j for j, c in enumerate(video_row)
                                 if c.caption]
        self.clued_events = [j for j in range(len(matrix.events))
                             if any(row[j].present and row[j].clues
                                    for row in matrix.cells)]
        self.track_cells = {}
        for track, row in zip(matrix.tracks, matrix.cells[1:]):
            captioned = [j for j, c in enumerate(row)
                         if c.present and c.caption]
            if captioned:
                self.track_cells[track.track_id] = captioned
        self.instance_cells = [(tid, j) for tid, cols in
                               self.track_cells.items() for j in cols]
        self.multi_tracks = [tid for tid, cols in self.track_cells.items()
                             if len(cols) >= 2]


def span_text(matrix, event):
    """An event's span as written in instruction text."""
    if matrix.duration:
        return format_seconds_span(event.start_time * matrix.duration,
                                   event.end_time * matrix.duration)
    return f'<t={event.start_time:.6f}> <t={event.end_time:.6f}>'


def _descriptions(matrix, j):
    lines = []
    for key, row in zip(matrix.row_keys, matrix.cells):
        cell = row[j]
        if not cell.present:
            continue
        who = '' if key == VIDEO else \
            f'{matrix.track(key).class_label} {key} '
        lines.extend(f'{who}{kind}: {text}' for kind, text in cell.clues)
    return '\n'.join(lines)


def _timed_captions(matrix, track_id, columns):
    row = matrix.cells[matrix.row_index(track_id)]
    return '\n'.join(f'{span_text(matrix, matrix.events[j])} : '
                     f'{row[j].caption}' for j in columns)


def _pick(rng, items, task):
    if not items:
        raise InputError(f'The matrix has no cells usable for '
                         f'{task.value}')
    return items[int(rng.integers(len(items)))]


def _plan_job(task, material, rng):
    m = material.matrix
    if task is TaskKind.SEGMENT_CAPTIONING:
        j = _pick(rng, material.clued_events, task)
        return _Job(task, [(VIDEO, j)],
                    {'descriptions': _descriptions(m, j)})
    if task in (TaskKind.SEGMENT_QA, TaskKind.DIRECT_LOCALIZATION,
                TaskKind.INFERENTIAL_LOCALIZATION):
        j = _pick(rng, material.captioned_events, task)
        caption = m.cells[0][j].caption
        return _Job(task, [(VIDEO, j)],
                    {'segment_caption': caption, 'content': caption})
    if task is TaskKind.INSTANCE_QA:
        tid, j = _pick(rng, material.instance_cells, task)
        return _Job(task, [(tid, j)],
                    {'instance_class': m.track(tid).class_label,
                     'segment_caption': m.cell(tid, j).caption})
    if task is TaskKind.COMPOSED_RETRIEVAL:
        if len(material.captioned_events) < 2:
            raise InputError('composed_retrieval needs two captioned events')
        src, tgt = rng.choice(material.captioned_events, size=2,
                              replace=False)
        src, tgt = int(src), int(tgt)
        return _Job(task, [(VIDEO, src), (VIDEO, tgt)],
                    {'source_clip_content': m.cells[0][src].caption,
                     'target_clip_content': m.cells[0][tgt].caption})
    if task is TaskKind.INSTANCE_ACTIVITY_SUMMARIZING:
        tid = _pick(rng, sorted(material.track_cells), task)
        columns = material.track_cells[tid]
        return _Job(task, [(tid, j) for j in columns],
                    {'instance_class': m.track(tid).class_label,
                     'descriptions': _timed_captions(m, tid, columns)})
    if task is TaskKind.CROSS_SEGMENT_QA:
        tid = _pick(rng, material.multi_tracks, task)
        columns = material.track_cells[tid]
        k = int(rng.integers(2, min(3, len(columns)) + 1))
        columns = sorted(int(j) for j in rng.choice(columns, size=k,
                                                    replace=False))
        return _Job(task, [(tid, j) for j in columns],
                    {'instance_class': m.track(tid).class_label,
                     'segment_caption': _timed_captions(m, tid, columns)})
    raise ValueError(f'Task {task!r} not understood')


def _context(matrix, job):
    spans = ', '.join(span_text(matrix, matrix.events[j])
                      for _, j in job.cells)
    if job.task is TaskKind.INSTANCE_QA:
        return (f'Watch the {job.bindings["instance_class"]} during '
                f'{spans}. ')
    return f'Watch {spans}. '


def _conversation(matrix, job, reply):
    """Build the record conversation for one reply, or raise ParseError."""
    task = job.task
    spans = [span_text(matrix, matrix.events[j]) for _, j in job.cells]
    text = reply.strip()
    if not text:
        raise ParseError('Empty reply')

    if task is TaskKind.SEGMENT_CAPTIONING:
        return [('User', f'Describe what happens during {spans[0]}.'),
                ('Assistant', text)]
    if task is TaskKind.INSTANCE_ACTIVITY_SUMMARIZING:
        return [('User', 'Summarize what the '
                 f'{job.bindings["instance_class"]} does throughout the '
                 'video.'),
                ('Assistant', text)]
    if task in (TaskKind.DIRECT_LOCALIZATION,
                TaskKind.INFERENTIAL_LOCALIZATION):
        conversation = []
        for question in _questions(text):
            conversation.append(('User', question))
            conversation.append(('Assistant', f'The clip at {spans[0]}.'))
        return conversation
    if task is TaskKind.COMPOSED_RETRIEVAL:
        questions = _questions(text)
        question = ' '.join(questions)
        if SOURCE_CLIP_MARKER in question:
            question = question.replace(SOURCE_CLIP_MARKER,
                                        f'clip at {spans[0]}')
        else:
            question = f'Please watch the clip at {spans[0]}. {question}'
        return [('User', question),
                ('Assistant', f'The clip at {spans[1]}.')]

    # Question answering: the reply itself is the dialogue
    turns = parse_reply(text)
    if (not turns or len(turns) % 2 or
            any(role != ROLES[i % 2] for i, (role, _) in enumerate(turns))):
        raise ParseError('Reply is not a User/Assistant dialogue')
    first_role, first_text = turns[0]
    turns[0] = (first_role, _context(matrix, job) + first_text)
    return turns


def _call(client, prompt):
    try:
        return client.complete(prompt), None
    except Exception as e:  # any client failure becomes a failure entry
        return None, e


def generate_instructions(matrix, client, plan, random_state=0,
                          max_in_flight=4, extra_examples=None):
    """
    Generate instruction records from a matrix.

    Parameters
    ----------
    matrix : InstanceEventMatrix
        With clues and captions attached.
    client : LlmClient
    plan : mapping
        Task (`TaskKind` or its name) to the number of records wanted.
        Records come out in plan order.
    random_state : {None, int, np.random.Generator}, optional
        Seeds the choice of source cells.
    max_in_flight : int, optional
        Most client calls running at once.
    extra_examples : mapping, optional
        Task to extra in-context examples, see `load_template`.

    Returns
    -------
    records : InstructionBatch
        Successful records in plan order.  `records.failures` lists the
        task instances whose client call failed or whose reply could not
        be parsed, as dicts with ``task``, ``index``, ``error`` and the raw
        ``reply`` when there was one.

    Raises
    ------
    InputError
        If the matrix has nothing a requested task can use.
    """
    rng = check_random_state(random_state)
    extra_examples = {TaskKind.parse(k): v
                      for k, v in (extra_examples or {}).items()}
    material = _Material(matrix)
    templates = {}
    jobs = []
    for task, count in plan.items():
        task = TaskKind.parse(task)
        if (not isinstance(count, (int, np.integer)) or isinstance(count, bool)
                or count < 0):
            raise InputError(f'Count for {task.value} must be a '
                             f'non-negative integer, got {count!r}')
        if task not in templates and count:
            templates[task] = load_template(task,
                                            extra_examples.get(task, ()))
        for _ in range(count):
            job = _plan_job(task, material, rng)
            job.prompt = fill_prompt(templates[task], job.bindings)
            jobs.append(job)

    if not jobs:
        return InstructionBatch()
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        results = list(pool.map(lambda job: _call(client, job.prompt), jobs))

    records = []
    failures = []
    for index, (job, (reply, error)) in enumerate(zip(jobs, results)):
        if error is not None:
            logger.error('%s #%d: client failed: %s', job.task.value, index,
                         error)
            failures.append({'task': job.task.value, 'index': index,
                             'error': str(error), 'reply': None})
            continue
        events = [matrix.events[j] for _, j in job.cells]
        grounding = tuple(Interval(e.start_time, e.end_time) for e in events)
        try:
            conversation = _conversation(matrix, job, reply)
            record = validate_record(InstructionRecord(
                matrix.video_id, job.task, tuple(conversation), grounding,
                tuple(job.cells)))
        except (ParseError, InputError) as e:
            logger.warning('%s #%d: unusable reply skipped (%s): %r',
                           job.task.value, index, e, reply)
            failures.append({'task': job.task.value, 'index': index,
                             'error': str(e), 'reply': reply})
            continue
        records.append(record)

    logger.info('Generated %d instruction records (%d failed)', len(records),
                len(failures))
    return InstructionBatch(records, failures)


def dataset_statistics(records):
    """
    Descriptive counts over generated records.

    Returns
    -------
    stats : dict
        ``n_records``, ``n_videos``, ``per_task`` counts (in task order),
        ``per_arity`` counts, and ``segments_per_video``, the mean number of
        distinct grounded segments per video.
    """
    per_task = Counter(r.task for r in records)
    segments = {}
    for r in records:
        segments.setdefault(r.video_id, set()).update(
            (i.start, i.end) for i in r.grounding)
    return {'n_records': len(records),
            'n_videos': len(segments),
            'per_task': {t.value: per_task[t] for t in TaskKind
                         if per_task[t]},
            'per_arity': dict(sorted(Counter(r.task.arity
                                             for r in records).items())),
            'segments_per_video': (float(np.mean([len(s) for s in
                                                  segments.values()]))
                                   if segments else 0.0)}
