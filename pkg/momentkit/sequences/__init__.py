"""
Event sequences: construction, text rendering and parsing, and
likelihood scoring.
"""
from .sequences import (EventSequence, SequenceEvent, TimeMarker,
                        TokenizedTarget, build_target, format_seconds_span,
                        parse_event_sequence, read_sequence_file,
                        render_event_sequence, sequence_from_matrix,
                        sequence_nll, write_sequence_file)
