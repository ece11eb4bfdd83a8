"""
Command-line entry point.

Every sub-command reads and writes files in the formats of
`momentkit.pipeline.io`, takes its defaults from a `PipelineConfig`
(``--config``) with flags overriding single fields, and writes a
provenance sidecar next to each output.  Exit status is 0 on success, 1 on
invalid input, and 2 on I/O failure; errors are one JSON line on stderr.
"""
import argparse
import json
import logging
import os
import sys

from joblib import Parallel, delayed

from momentkit import __version__
from momentkit.exceptions import InputError, ShapeError
from momentkit.instructions import (HttpChatClient, MockClient,
                                    generate_instructions)
from momentkit.metrics import (LabeledSegmentation, action_seg_metrics,
                               format_report, grounding_metrics,
                               highlight_metrics)
from momentkit.pipeline import io
from momentkit.pipeline.config import load_config, validate_plan
from momentkit.records import Interval
from momentkit.segmentation import segment_video
from momentkit.sequences import (EventSequence, SequenceEvent,
                                 read_sequence_file, render_event_sequence,
                                 sequence_from_matrix, write_sequence_file)
from momentkit.synthetic import synthetic_video
from momentkit.temporal import (TrainConfig, continuity_experiment,
                                decode_time, encode_time, every_nth_index,
                                gradient_check, load_space, make_space,
                                save_space)
from momentkit.tracking import (ClueRecord, attach_clues, build_matrix,
                                link_tracks, matrix_from_dict, matrix_to_dict)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

GRADCHECK_TOLERANCE = 1e-6

# (config section, field, argparse dest)
_OVERRIDES = [
    ('segmentation', 'sigma', 'sigma'),
    ('segmentation', 'threshold', 'threshold'),
    ('segmentation', 'threshold_c', 'threshold_c'),
    ('segmentation', 'merge_threshold', 'merge_threshold'),
    ('segmentation', 'min_event_frames', 'min_event_frames'),
    ('segmentation', 'until_fixpoint', 'until_fixpoint'),
    ('tracking', 'iou_min', 'iou_min'),
    ('tracking', 'feature_cos_min', 'feature_cos_min'),
    ('tracking', 'max_gap_frames', 'max_gap_frames'),
    ('temporal', 'n_anchors', 'n'),
    ('temporal', 'dim', 'dim'),
    ('training', 'n_anchors', 'train_anchors'),
    ('training', 'dim', 'train_dim'),
    ('training', 'learning_rate', 'learning_rate'),
    ('training', 'steps', 'steps'),
    ('training', 'supervise_every', 'every'),
    ('training', 'include_self', 'include_self'),
    ('training', 'random_targets', 'random_targets'),
    ('metrics', 'fps', 'fps'),
    ('llm', 'endpoint', 'endpoint'),
    ('llm', 'max_in_flight', 'max_in_flight'),
]


def _report_error(kind, message):
    sys.stderr.write(json.dumps({'error': kind, 'message': message}) + '\n')


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 and a JSON error line."""

    def error(self, message):
        self.print_usage(sys.stderr)
        _report_error('UsageError', message)
        self.exit(EXIT_INVALID)


def _threshold(value):
    if value == 'adaptive':
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected 'adaptive' or a number, got {value!r}")


def _print_json(obj):
    sys.stdout.write(io.dumps(obj) + '\n')


def _config(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = config.model_copy(update={'seed': args.seed})
    sections = {}
    for section, field, dest in _OVERRIDES:
        value = getattr(args, dest, None)
        if value is not None:
            sections.setdefault(section, {})[field] = value
    for section, values in sections.items():
        config = config.updated(section, **values)
    return config


def _write_provenance(config, outputs, inputs):
    for output in outputs:
        io.write_provenance(output, config, inputs, config.seed)


def _single_video(groups, video_id, what):
    if video_id is not None:
        if video_id not in groups:
            raise InputError(f'No {what} for video {video_id!r}')
        return video_id
    if len(groups) != 1:
        raise InputError(f'{what} cover {len(groups)} videos; choose one '
                         'with --video-id')
    return next(iter(groups))


def _cmd_segment(args, config):
    videos = io.read_frames(args.frames)
    scores = {}
    if args.scores:
        scores = {r.get('video_id', ''): r['scores']
                  for r in io.read_jsonl(args.scores)}
    settings = config.segmentation.model_dump()
    results = Parallel(n_jobs=args.jobs)(
        delayed(segment_video)(frames, scores.get(video_id), **settings)
        for video_id, frames in videos.items())
    io.write_events(args.output, dict(zip(videos, results)))
    _write_provenance(config, [args.output],
                      [p for p in (args.frames, args.scores) if p])
    return EXIT_OK


def _cmd_track(args, config):
    videos = io.read_detections(args.detections)
    settings = config.tracking.model_dump()
    results = Parallel(n_jobs=args.jobs)(
        delayed(link_tracks)(pairs, **settings) for pairs in videos.values())
    io.write_tracks(args.output, dict(zip(videos, results)))
    _write_provenance(config, [args.output], [args.detections])
    return EXIT_OK


def _cmd_matrix(args, config):
    events = io.read_events(args.events)
    video_id = _single_video(events, args.video_id, 'events')
    tracks = io.read_tracks(args.tracks).get(video_id, [])
    matrix = build_matrix(tracks, events[video_id], video_id, args.duration)
    inputs = [args.tracks, args.events]
    if args.clues:
        rows = [r for r in io.read_jsonl(args.clues)
                if r.get('video_id', video_id) == video_id]
        matrix = attach_clues(matrix, [ClueRecord.from_dict(r)
                                       for r in rows])
        inputs.append(args.clues)
    io.write_json(args.output, matrix_to_dict(matrix))
    _write_provenance(config, [args.output], inputs)
    return EXIT_OK


def _client(args, config):
    if config.llm.endpoint:
        return HttpChatClient.from_settings(config.llm)
    client = MockClient()
    if args.replies:
        # Rows are keyed by prompt_sha256, or match on a prompt substring
        for row in io.read_jsonl(args.replies):
            if 'prompt_sha256' in row:
                client.replies[row['prompt_sha256']] = row['reply']
            elif 'contains' in row:
                client.rules.append((row['contains'], row['reply']))
            else:
                raise InputError(f'{args.replies}: reply rows need '
                                 "'prompt_sha256' or 'contains'")
    return client


def _cmd_gen(args, config):
    matrix = matrix_from_dict(io.read_json(args.matrix))
    plan = (validate_plan(json.loads(args.plan)) if args.plan
            else dict(config.plan))
    batch = generate_instructions(
        matrix, _client(args, config), plan, random_state=config.seed,
        max_in_flight=config.llm.max_in_flight,
        extra_examples=config.extra_examples)
    io.write_jsonl(args.output, [r.to_dict() for r in batch])
    outputs = [args.output]
    if batch.failures:
        failures = args.output + '.failures.jsonl'
        io.write_jsonl(failures, batch.failures)
        outputs.append(failures)
    inputs = [p for p in (args.matrix, args.replies) if p]
    _write_provenance(config, outputs, inputs)
    return EXIT_OK


def _cmd_seq_render(args, config):
    if args.matrix:
        matrix = matrix_from_dict(io.read_json(args.matrix))
        seq = sequence_from_matrix(matrix)
        duration = args.duration or matrix.duration
        source = args.matrix
    else:
        events = io.read_events(args.events)
        video_id = _single_video(events, args.video_id, 'events')
        seq = EventSequence(tuple(
            SequenceEvent(e.start_time, e.end_time, e.caption)
            for e in events[video_id] if e.caption))
        duration = args.duration
        source = args.events
    if args.output:
        write_sequence_file(args.output, seq, args.format, duration)
        _write_provenance(config, [args.output], [source])
    else:
        sys.stdout.write(render_event_sequence(seq, args.format, duration) +
                         '\n')
    return EXIT_OK


def _cmd_seq_parse(args, config):
    seq, _, _ = read_sequence_file(args.input)
    rows = [{'start_time': e.start_time, 'end_time': e.end_time,
             'caption': e.caption} for e in seq]
    if args.output:
        io.write_jsonl(args.output, rows)
        _write_provenance(config, [args.output], [args.input])
    else:
        for row in rows:
            _print_json(row)
    return EXIT_OK


def _space(args, config):
    if args.space:
        space = load_space(args.space)
        if args.n is not None and args.n != space.n_anchors:
            raise InputError(f'{args.space} has {space.n_anchors} anchors, '
                             f'not {args.n}')
        return space
    return make_space(config.temporal.n_anchors, config.temporal.dim,
                      config.seed)


def _cmd_encode_time(args, config):
    embedding = encode_time(_space(args, config), args.tau,
                            interpolate=not args.quantized)
    _print_json(embedding.tolist())
    return EXIT_OK


def _cmd_decode_time(args, config):
    embedding = json.loads(args.embedding)
    tau, residual = decode_time(_space(args, config), embedding)
    _print_json({'tau': tau, 'residual': residual})
    return EXIT_OK


def _cmd_init_space(args, config):
    space = make_space(config.temporal.n_anchors, config.temporal.dim,
                       config.seed)
    save_space(space, args.output)
    _write_provenance(config, [args.output], [])
    return EXIT_OK


def _continuity_dict(report):
    d = {k: float(v) for k, v in report.to_dict().items()}
    d['gap'] = float(report.gap)
    return d


def _cmd_continuity(args, config):
    t = config.training
    base = TrainConfig(t.n_anchors, t.dim, t.learning_rate, t.steps,
                       every_nth_index(t.n_anchors, t.supervise_every),
                       include_self=t.include_self,
                       random_targets=t.random_targets, rng_seed=config.seed)
    os.makedirs(args.output_dir, exist_ok=True)
    ntp, plain = continuity_experiment(base, args.output_dir,
                                       n_jobs=min(args.jobs, 2))
    report = {'ntp': _continuity_dict(ntp),
              'plain': _continuity_dict(plain)}
    path = os.path.join(args.output_dir, 'continuity.json')
    io.write_json(path, report)
    _write_provenance(config, [path] + [
        os.path.join(args.output_dir, name)
        for name in ('pca1_ntp.csv', 'pca1_plain.csv')], [])
    _print_json(report)
    return EXIT_OK


def _emit_report(args, config, report, inputs):
    text = format_report(report, args.format)
    if args.output:
        with open(args.output, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text + '\n')
        _write_provenance(config, [args.output], inputs)
    else:
        sys.stdout.write(text + '\n')
    return EXIT_OK


def _by_query(rows):
    queries = {}
    for row in rows:
        queries.setdefault(row['query_id'], []).append(row)
    return queries


def _cmd_metrics_grounding(args, config):
    preds = _by_query(io.read_jsonl(args.pred))
    gts = _by_query(io.read_jsonl(args.gt))
    missing = [q for q in gts if q not in preds]
    if missing or len(preds) != len(gts):
        raise ShapeError(f'{len(preds)} predicted queries for {len(gts)} '
                         f'ground-truth queries; missing {missing[:5]}')
    ids = list(gts)
    report = grounding_metrics(
        [Interval(preds[q][0]['start'], preds[q][0]['end']) for q in ids],
        [Interval(gts[q][0]['start'], gts[q][0]['end']) for q in ids],
        config.metrics.grounding_thresholds)
    return _emit_report(args, config, report, [args.pred, args.gt])


def _segmentations(path):
    return {video_id: LabeledSegmentation.from_records(rows)
            for video_id, rows in io.group_by_video(
                io.read_jsonl(path)).items()}


def _cmd_metrics_actionseg(args, config):
    preds = _segmentations(args.pred)
    gts = _segmentations(args.gt)
    missing = [v for v in gts if v not in preds]
    if missing:
        raise ShapeError(f'No prediction for videos {missing[:5]}')
    m = config.metrics
    results = Parallel(n_jobs=args.jobs)(
        delayed(action_seg_metrics)(preds[v], gts[v], m.f1_overlaps, m.fps)
        for v in gts)
    n = len(results)
    report = {'mof': sum(r['mof'] for r in results) / n,
              'f1_at': {k: sum(r['f1_at'][k] for r in results) / n
                        for k in results[0]['f1_at']},
              'edit': sum(r['edit'] for r in results) / n,
              'n_videos': n}
    return _emit_report(args, config, report, [args.pred, args.gt])


def _cmd_metrics_highlight(args, config):
    preds = _by_query(io.read_jsonl(args.pred))
    gts = _by_query(io.read_jsonl(args.gt))
    ids = list(gts) + [q for q in preds if q not in gts]
    report = highlight_metrics(
        [[((r['start'], r['end']), r['score']) for r in preds.get(q, [])]
         for q in ids],
        [[(r['start'], r['end']) for r in gts.get(q, [])] for q in ids],
        config.metrics.iou_grid, query_ids=ids)
    return _emit_report(args, config, report, [args.pred, args.gt])


def _cmd_gradcheck(args, config):
    worst = float(gradient_check(n_trials=args.trials,
                                 ntp_enabled=not args.no_ntp,
                                 include_self=config.temporal.include_self,
                                 random_state=config.seed))
    passed = worst <= GRADCHECK_TOLERANCE
    _print_json({'max_relative_error': worst, 'trials': args.trials,
                 'tolerance': GRADCHECK_TOLERANCE, 'passed': passed})
    return EXIT_OK if passed else EXIT_INVALID


def _cmd_synth(args, config):
    os.makedirs(args.output_dir, exist_ok=True)
    video = synthetic_video(n_frames=args.n_frames, n_events=args.n_events,
                            video_id=args.video_id, random_state=config.seed)
    vid = video.video_id
    paths = {name: os.path.join(args.output_dir, name) for name in
             ('frames.jsonl', 'detections.jsonl', 'scores.jsonl',
              'clues.jsonl', 'truth_events.jsonl')}
    io.write_frames(paths['frames.jsonl'], {vid: video.frames})
    io.write_detections(paths['detections.jsonl'], {vid: video.frames})
    io.write_jsonl(paths['scores.jsonl'],
                   [{'video_id': vid, 'scores': video.scores.tolist()}])
    io.write_jsonl(paths['clues.jsonl'],
                   [{'video_id': vid, **c} for c in video.clues])
    io.write_events(paths['truth_events.jsonl'], {vid: video.events})
    _write_provenance(config, list(paths.values()), [])
    _print_json({'video_id': vid, 'duration': video.duration,
                 'boundaries': list(video.boundaries)})
    return EXIT_OK


def _add_common(parser):
    parser.add_argument('--config', help='pipeline config JSON file')
    parser.add_argument('--seed', type=int, help='random seed')
    parser.add_argument('--jobs', type=int, default=1,
                        help='parallel videos (default: 1)')
    parser.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])


def _add_report_options(parser):
    parser.add_argument('--pred', required=True)
    parser.add_argument('--gt', required=True)
    parser.add_argument('--format', default='json', choices=['json', 'table'])
    parser.add_argument('--output', help='write the report here')


def _add_space_options(parser):
    parser.add_argument('--space', help='space file from init-space')
    parser.add_argument('--n', type=int, help='number of anchors')
    parser.add_argument('--dim', type=int, help='embedding width')


def build_parser():
    common = _Parser(add_help=False)
    _add_common(common)

    parser = _Parser(prog='momentkit',
                     description='Temporal grounding data toolkit')
    parser.add_argument('--version', action='version',
                        version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True,
                                metavar='command')

    p = sub.add_parser('segment', parents=[common],
                       help='frames JSONL -> events JSONL')
    p.add_argument('--frames', required=True)
    p.add_argument('--scores', help='precomputed frame-difference scores')
    p.add_argument('--output', required=True)
    p.add_argument('--sigma', type=float)
    p.add_argument('--threshold', type=_threshold)
    p.add_argument('--threshold-c', type=float)
    p.add_argument('--merge-threshold', type=float)
    p.add_argument('--min-event-frames', type=int)
    p.add_argument('--until-fixpoint', action='store_true', default=None)
    p.set_defaults(handler=_cmd_segment)

    p = sub.add_parser('track', parents=[common],
                       help='detections JSONL -> tracks JSONL')
    p.add_argument('--detections', required=True)
    p.add_argument('--output', required=True)
    p.add_argument('--iou-min', type=float)
    p.add_argument('--feature-cos-min', type=float)
    p.add_argument('--max-gap-frames', type=int)
    p.set_defaults(handler=_cmd_track)

    p = sub.add_parser('matrix', parents=[common],
                       help='tracks + events + clues -> matrix JSON')
    p.add_argument('--tracks', required=True)
    p.add_argument('--events', required=True)
    p.add_argument('--clues')
    p.add_argument('--video-id')
    p.add_argument('--duration', type=float, help='video length in seconds')
    p.add_argument('--output', required=True)
    p.set_defaults(handler=_cmd_matrix)

    p = sub.add_parser('gen', parents=[common],
                       help='matrix JSON -> instruction JSONL')
    p.add_argument('--matrix', required=True)
    p.add_argument('--output', required=True)
    p.add_argument('--plan', help='JSON object of task counts')
    p.add_argument('--replies', help='canned mock replies JSONL')
    p.add_argument('--endpoint', help='HTTP chat endpoint (else mock)')
    p.add_argument('--max-in-flight', type=int)
    p.set_defaults(handler=_cmd_gen)

    p = sub.add_parser('seq', help='event sequence text')
    seq = p.add_subparsers(dest='seq_command', required=True,
                           metavar='action')
    q = seq.add_parser('render', parents=[common])
    source = q.add_mutually_exclusive_group(required=True)
    source.add_argument('--matrix')
    source.add_argument('--events')
    q.add_argument('--video-id')
    q.add_argument('--format', default='token', choices=['token', 'seconds'])
    q.add_argument('--duration', type=float)
    q.add_argument('--output')
    q.set_defaults(handler=_cmd_seq_render)
    q = seq.add_parser('parse', parents=[common])
    q.add_argument('--input', required=True)
    q.add_argument('--output')
    q.set_defaults(handler=_cmd_seq_parse)

    p = sub.add_parser('encode-time', parents=[common],
                       help='print the embedding of one normalized time')
    _add_space_options(p)
    p.add_argument('--tau', type=float, required=True)
    p.add_argument('--quantized', action='store_true',
                   help='nearest anchor instead of interpolation')
    p.set_defaults(handler=_cmd_encode_time)

    p = sub.add_parser('decode-time', parents=[common],
                       help='print the time of one embedding')
    _add_space_options(p)
    p.add_argument('--embedding', required=True, help='JSON array')
    p.set_defaults(handler=_cmd_decode_time)

    p = sub.add_parser('init-space', parents=[common],
                       help='write a seeded temporal token space')
    p.add_argument('--n', type=int)
    p.add_argument('--dim', type=int)
    p.add_argument('--output', required=True)
    p.set_defaults(handler=_cmd_init_space)

    p = sub.add_parser('continuity', parents=[common],
                       help='train with and without NTP and compare')
    p.add_argument('--output-dir', required=True)
    p.add_argument('--train-anchors', type=int)
    p.add_argument('--train-dim', type=int)
    p.add_argument('--learning-rate', type=float)
    p.add_argument('--steps', type=int)
    p.add_argument('--every', type=int, help='supervise every k-th anchor')
    p.add_argument('--include-self', action=argparse.BooleanOptionalAction,
                   default=None)
    p.add_argument('--random-targets', action='store_true', default=None)
    p.set_defaults(handler=_cmd_continuity)

    p = sub.add_parser('metrics', help='evaluation metrics')
    metrics = p.add_subparsers(dest='metrics_command', required=True,
                               metavar='task')
    q = metrics.add_parser('grounding', parents=[common])
    _add_report_options(q)
    q.set_defaults(handler=_cmd_metrics_grounding)
    q = metrics.add_parser('actionseg', parents=[common])
    _add_report_options(q)
    q.add_argument('--fps', type=float)
    q.set_defaults(handler=_cmd_metrics_actionseg)
    q = metrics.add_parser('highlight', parents=[common])
    _add_report_options(q)
    q.set_defaults(handler=_cmd_metrics_highlight)

    p = sub.add_parser('gradcheck', parents=[common],
                       help='finite-difference check of the NTP gradient')
    p.add_argument('--trials', type=int, default=100)
    p.add_argument('--no-ntp', action='store_true')
    p.set_defaults(handler=_cmd_gradcheck)

    p = sub.add_parser('synth', parents=[common],
                       help='write a synthetic video fixture')
    p.add_argument('--output-dir', required=True)
    p.add_argument('--n-frames', type=int, default=100)
    p.add_argument('--n-events', type=int, default=5)
    p.add_argument('--video-id', default='synthetic')
    p.set_defaults(handler=_cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(levelname)s %(name)s: %(message)s',
                        stream=sys.stderr, force=True)
    try:
        config = _config(args)
        return args.handler(args, config)
    except OSError as e:
        _report_error(type(e).__name__, str(e))
        return EXIT_IO
    except (ValueError, LookupError, RuntimeError) as e:
        _report_error(type(e).__name__, str(e))
        return EXIT_INVALID
