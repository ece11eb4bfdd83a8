"""
The eight instruction tasks.
"""
from enum import Enum


class TaskKind(Enum):
    """
    Instruction task, by the file name stem of its prompt template.

    The first five concern a single segment; the last three reason across
    several segments.

    >>> TaskKind.COMPOSED_RETRIEVAL.arity
    'cross-segment'
    """
    SEGMENT_CAPTIONING = 'segment_captioning'
    SEGMENT_QA = 'segment_qa'
    INSTANCE_QA = 'instance_qa'
    DIRECT_LOCALIZATION = 'direct_localization'
    INFERENTIAL_LOCALIZATION = 'inferential_localization'
    COMPOSED_RETRIEVAL = 'composed_retrieval'
    INSTANCE_ACTIVITY_SUMMARIZING = 'instance_activity_summarizing'
    CROSS_SEGMENT_QA = 'cross_segment_qa'

    @property
    def arity(self):
        return 'single-segment' if self in _SINGLE else 'cross-segment'

    @classmethod
    def parse(cls, value):
        """Accept a member, its value, or its name in any case."""
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            pass
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ValueError(f'Task {value!r} not understood')


_SINGLE = frozenset([TaskKind.SEGMENT_CAPTIONING, TaskKind.SEGMENT_QA,
                     TaskKind.INSTANCE_QA, TaskKind.DIRECT_LOCALIZATION,
                     TaskKind.INFERENTIAL_LOCALIZATION])
