import json
import os
from pathlib import Path

import pytest
from numpy.testing import assert_allclose, assert_array_equal

from momentkit.exceptions import InputError, ParseError
from momentkit.pipeline import PipelineConfig, io, load_config
from momentkit.pipeline.cli import main
from momentkit.records import Event, FrameRecord
from momentkit.synthetic import synthetic_video
from momentkit.temporal import decode_time, encode_time, make_space
from momentkit.tracking import link_tracks

GOLDEN = Path(__file__).parent / 'golden' / 'pipeline'


def run(capsys, *argv):
    """Run the command line, returning exit status, stdout and stderr."""
    status = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return status, out, err


def test_config_defaults(tmp_path):
    config = load_config()
    assert config == PipelineConfig()
    assert config.segmentation.sigma == 2.0
    assert config.tracking.max_gap_frames == 5
    assert config.temporal.n_anchors == 300
    assert config.metrics.iou_grid[0] == 0.5

    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'seed': 4, 'tracking': {'iou_min': 0.4}}))
    config = load_config(path)
    assert config.seed == 4
    assert config.tracking.iou_min == 0.4
    assert config.tracking.feature_cos_min == 0.5


@pytest.mark.parametrize("document", [
    {'trackng': {}},
    {'tracking': {'iou_minimum': 0.4}},
    {'segmentation': {'sigma': -1}},
    {'plan': {'segment_qa': -2}},
])
def test_config_invalid(tmp_path, document):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(document))
    with pytest.raises(InputError):
        load_config(path)


def test_config_hash():
    a = PipelineConfig()
    assert a.config_hash == PipelineConfig().config_hash
    assert len(a.config_hash) == 64
    b = a.updated('tracking', iou_min=0.4, max_gap_frames=None)
    assert b.tracking.iou_min == 0.4
    assert b.tracking.max_gap_frames == 5
    assert b.config_hash != a.config_hash
    assert a.updated('tracking', iou_min=None) is a
    assert json.loads(a.canonical_json())['seed'] == 0


def test_jsonl(tmp_path):
    path = tmp_path / 'rows.jsonl'
    rows = [{'video_id': 'a', 'x': 1}, {'x': 2}, {'video_id': 'a', 'x': 3}]
    io.write_jsonl(path, rows)
    assert io.read_jsonl(path) == rows
    assert io.group_by_video(rows) == {'a': [rows[0], rows[2]],
                                       '': [rows[1]]}

    path.write_text('{"x": 1}\n\n{"x": \n')
    with pytest.raises(ParseError) as excinfo:
        io.read_jsonl(path)
    assert excinfo.value.line == 3
    path.write_text('[1, 2]\n')
    with pytest.raises(ParseError):
        io.read_jsonl(path)


def test_frames_round_trip(tmp_path):
    video = synthetic_video(n_frames=40, n_events=2, random_state=1)
    path = str(tmp_path / 'frames.jsonl')
    io.write_frames(path, {'v': video.frames})
    assert os.path.exists(io.luma_path(path))
    frames = io.read_frames(path)['v']
    assert len(frames) == 40
    for a, b in zip(frames, video.frames):
        assert a.index == b.index
        assert a.time == b.time
        assert_array_equal(a.feature, b.feature)
        assert_array_equal(a.luma, b.luma)
        assert a.detections[0].to_dict() == b.detections[0].to_dict()


def test_frames_without_luma(tmp_path):
    path = str(tmp_path / 'frames.jsonl')
    io.write_frames(path, {'v': [FrameRecord(0, 0.0, [1.0, 2.0])]})
    assert not os.path.exists(io.luma_path(path))
    frame, = io.read_frames(path)['v']
    assert frame.luma is None


def test_truncated_luma(tmp_path):
    video = synthetic_video(n_frames=30, n_events=2, random_state=1)
    path = str(tmp_path / 'frames.jsonl')
    io.write_frames(path, {'v': video.frames})
    with open(io.luma_path(path), 'r+b') as f:
        f.truncate(100)
    with pytest.raises(InputError):
        io.read_frames(path)


def test_detections_and_tracks(tmp_path):
    video = synthetic_video(random_state=2)
    path = str(tmp_path / 'detections.jsonl')
    io.write_detections(path, {'v': video.frames})
    pairs = io.read_detections(path)['v']
    assert [f for f, _ in pairs] == list(range(100))
    assert all('track_id' not in d for _, dets in pairs for d in dets)

    tracks = link_tracks(pairs)
    assert len(tracks) == 5
    track_path = str(tmp_path / 'tracks.jsonl')
    io.write_tracks(track_path, {'v': tracks})
    assert ([t.to_dict() for t in io.read_tracks(track_path)['v']] ==
            [t.to_dict() for t in tracks])

    events_path = str(tmp_path / 'events.jsonl')
    events = [Event(0, 4, 0.0, 0.5, 'first'), Event(5, 9, 0.55, 1.0)]
    io.write_events(events_path, {'v': events})
    assert io.read_events(events_path) == {'v': events}


def test_synthetic_video():
    video = synthetic_video(n_frames=80, n_events=4, random_state=5)
    assert len(video.frames) == 80
    assert len(video.scores) == 79
    assert len(video.boundaries) == 3
    assert_array_equal(video.scores[list(video.boundaries)], 1.0)
    assert video.events[0].start_frame == 0
    assert video.events[-1].end_frame == 79
    for a, b in zip(video.events, video.events[1:]):
        assert b.start_frame == a.end_frame + 1
    assert all(e.end_frame - e.start_frame + 1 >= 12 for e in video.events)
    assert all(d.track_id is None for f in video.frames
               for d in f.detections)
    assert len(video.clues) == 5 * 4

    again = synthetic_video(n_frames=80, n_events=4, random_state=5)
    assert again.boundaries == video.boundaries
    assert_array_equal(again.scores, video.scores)
    with pytest.raises(ValueError):
        synthetic_video(n_events=5, dim=4)
    with pytest.raises(ValueError):
        synthetic_video(n_frames=20, n_events=5)


def test_provenance(tmp_path):
    inp = tmp_path / 'input.txt'
    inp.write_text('hello')
    out = str(tmp_path / 'out.json')
    config = PipelineConfig()
    io.write_provenance(out, config, [str(inp)], seed=3)
    record = json.loads(open(io.provenance_path(out)).read())
    assert record['toolkit'] == 'momentkit'
    assert record['config_hash'] == config.config_hash
    assert record['inputs'] == {'input.txt': io.file_sha256(str(inp))}
    assert record['seed'] == 3


def test_cli_encode_decode(capsys):
    status, out, _ = run(capsys, 'encode-time', '--n', 4, '--dim', 3,
                         '--tau', 0.5)
    assert status == 0
    embedding = json.loads(out)
    anchors = make_space(4, 3, random_state=0).anchors
    assert_allclose(embedding, (anchors[1] + anchors[2]) / 2)

    status, out, _ = run(capsys, 'decode-time', '--n', 4, '--dim', 3,
                         '--embedding', json.dumps(embedding))
    assert status == 0
    assert json.loads(out)['tau'] == pytest.approx(0.5)

    status, out, _ = run(capsys, 'encode-time', '--n', 4, '--dim', 3,
                         '--tau', 0.5, '--quantized')
    assert_allclose(json.loads(out), anchors[2])


def test_cli_space_file(tmp_path, capsys):
    path = tmp_path / 'space.bin'
    status, _, _ = run(capsys, 'init-space', '--n', 10, '--dim', 4,
                       '--seed', 2, '--output', path)
    assert status == 0
    assert os.path.exists(io.provenance_path(str(path)))
    space = make_space(10, 4, random_state=2)
    status, out, _ = run(capsys, 'encode-time', '--space', path,
                         '--tau', 0.3)
    assert_allclose(json.loads(out), encode_time(space, 0.3), rtol=1e-6,
                    atol=1e-8)
    tau, _ = decode_time(space, encode_time(space, 0.3))
    assert tau == pytest.approx(0.3)
    status, _, err = run(capsys, 'encode-time', '--space', path, '--n', 11,
                         '--tau', 0.3)
    assert status == 1
    assert json.loads(err.splitlines()[-1])['error'] == 'InputError'


def test_cli_errors(tmp_path, capsys):
    status, _, err = run(capsys, 'segment')
    assert status == 1
    assert json.loads(err.splitlines()[-1])['error'] == 'UsageError'

    status, _, err = run(capsys, 'track', '--detections',
                         tmp_path / 'missing.jsonl', '--output',
                         tmp_path / 'out.jsonl')
    assert status == 2
    assert json.loads(err.splitlines()[-1])['error'] == 'FileNotFoundError'

    status, _, err = run(capsys, 'encode-time', '--n', 4, '--tau', 1.5)
    assert status == 1
    assert json.loads(err.splitlines()[-1])['error'] == 'RangeError'

    config = tmp_path / 'config.json'
    config.write_text('{"bogus": 1}')
    status, _, err = run(capsys, 'encode-time', '--config', config,
                         '--tau', 0.5)
    assert status == 1
    assert json.loads(err.splitlines()[-1])['error'] == 'InputError'


def test_cli_gradcheck(capsys):
    status, out, _ = run(capsys, 'gradcheck', '--trials', 10)
    assert status == 0
    report = json.loads(out)
    assert report['passed'] is True
    assert report['max_relative_error'] <= 1e-6


def test_cli_grounding(tmp_path, capsys):
    rows = [{'query_id': 'q1', 'start': 2.0, 'end': 5.0},
            {'query_id': 'q2', 'start': 10.0, 'end': 30.0}]
    gt = tmp_path / 'gt.jsonl'
    io.write_jsonl(gt, rows)
    status, out, _ = run(capsys, 'metrics', 'grounding', '--pred', gt,
                         '--gt', gt)
    assert status == 0
    report = json.loads(out)
    assert report['mean_iou'] == 1.0
    assert set(report['recall_at'].values()) == {1.0}

    pred = tmp_path / 'pred.jsonl'
    io.write_jsonl(pred, rows[:1])
    status, _, err = run(capsys, 'metrics', 'grounding', '--pred', pred,
                         '--gt', gt)
    assert status == 1
    assert json.loads(err.splitlines()[-1])['error'] == 'ShapeError'


def test_cli_actionseg_and_highlight(tmp_path, capsys):
    gt = tmp_path / 'gt.jsonl'
    io.write_jsonl(gt, [
        {'video_id': 'a', 'start': 0, 'end': 4, 'label': 'x'},
        {'video_id': 'b', 'start': 0, 'end': 2, 'label': 'x'},
        {'video_id': 'b', 'start': 2, 'end': 4, 'label': 'y'}])
    pred = tmp_path / 'pred.jsonl'
    io.write_jsonl(pred, [
        {'video_id': 'a', 'start': 0, 'end': 2, 'label': 'x'},
        {'video_id': 'a', 'start': 2, 'end': 4, 'label': 'y'},
        {'video_id': 'b', 'start': 0, 'end': 2, 'label': 'x'},
        {'video_id': 'b', 'start': 2, 'end': 4, 'label': 'y'}])
    out_path = tmp_path / 'report.txt'
    status, _, _ = run(capsys, 'metrics', 'actionseg', '--pred', pred,
                       '--gt', gt, '--output', out_path, '--jobs', 2)
    assert status == 0
    report = json.loads(out_path.read_text())
    assert report['mof'] == pytest.approx(0.75)
    assert report['edit'] == pytest.approx(75.0)
    assert report['n_videos'] == 2
    assert os.path.exists(io.provenance_path(str(out_path)))

    gt = tmp_path / 'hl_gt.jsonl'
    io.write_jsonl(gt, [{'query_id': 'q1', 'start': 0, 'end': 10},
                        {'query_id': 'q2', 'start': 0, 'end': 10}])
    pred = tmp_path / 'hl_pred.jsonl'
    io.write_jsonl(pred, [
        {'query_id': 'q1', 'start': 0, 'end': 10, 'score': 0.9},
        {'query_id': 'q2', 'start': 50, 'end': 60, 'score': 0.9},
        {'query_id': 'q3', 'start': 0, 'end': 10, 'score': 0.5}])
    status, out, _ = run(capsys, 'metrics', 'highlight', '--pred', pred,
                         '--gt', gt, '--format', 'table')
    assert status == 0
    table = {line.split()[0]: line.split()[1:]
             for line in out.splitlines()[2:]}
    assert table['map'] == ['0.5000']
    assert table['r1_at_05'] == ['0.5000']
    assert table['excluded'] == ['q3']


def test_cli_continuity(tmp_path, capsys):
    status, out, _ = run(capsys, 'continuity', '--output-dir', tmp_path,
                         '--train-anchors', 16, '--train-dim', 4,
                         '--steps', 20, '--every', 4)
    assert status == 0
    report = json.loads(out)
    assert set(report) == {'ntp', 'plain'}
    assert set(report['ntp']) == {'adjacent_mean_cos', 'random_mean_cos',
                                  'pca1_spearman',
                                  'unsupervised_displacement', 'gap'}
    assert report['plain']['unsupervised_displacement'] == 0
    assert json.loads((tmp_path / 'continuity.json').read_text()) == report
    lines = (tmp_path / 'pca1_ntp.csv').read_text().splitlines()
    assert len(lines) == 17


def pipeline_run(root, capsys, jobs):
    """synth, segment, track, matrix, gen and seq render into `root`."""
    os.makedirs(root)
    status, out, _ = run(capsys, 'synth', '--output-dir', root,
                         '--n-frames', 120, '--n-events', 4,
                         '--video-id', 'clip', '--seed', 11)
    assert status == 0
    synth = json.loads(out)
    p = {name: os.path.join(root, name) for name in
         ('frames.jsonl', 'scores.jsonl', 'detections.jsonl',
          'clues.jsonl', 'events.jsonl', 'tracks.jsonl', 'matrix.json',
          'instructions.jsonl', 'sequence.txt')}
    common = ['--jobs', jobs, '--seed', 11]
    steps = [
        ['segment', '--frames', p['frames.jsonl'], '--scores',
         p['scores.jsonl'], '--output', p['events.jsonl']],
        ['track', '--detections', p['detections.jsonl'], '--output',
         p['tracks.jsonl']],
        ['matrix', '--tracks', p['tracks.jsonl'], '--events',
         p['events.jsonl'], '--clues', p['clues.jsonl'], '--duration',
         synth['duration'], '--output', p['matrix.json']],
        ['gen', '--matrix', p['matrix.json'], '--output',
         p['instructions.jsonl'], '--plan',
         json.dumps({'segment_captioning': 2, 'direct_localization': 2,
                     'composed_retrieval': 1, 'segment_qa': 1})],
        ['seq', 'render', '--matrix', p['matrix.json'], '--format',
         'seconds', '--output', p['sequence.txt']],
    ]
    for step in steps:
        status, _, err = run(capsys, *step, *common)
        assert status == 0, err
    return synth, p


def test_pipeline_end_to_end(tmp_path, capsys):
    synth, p = pipeline_run(str(tmp_path / 'one'), capsys, 1)

    events = io.read_events(p['events.jsonl'])['clip']
    assert len(events) == 4
    found = [e.end_frame for e in events[:-1]]
    assert all(abs(a - b) <= 1 for a, b in zip(found, synth['boundaries']))

    matrix = json.loads(open(p['matrix.json']).read())
    assert matrix['video_id'] == 'clip'
    assert len(matrix['tracks']) == 4

    records = io.read_jsonl(p['instructions.jsonl'])
    assert [r['task'] for r in records] == (['segment_captioning'] * 2 +
                                            ['direct_localization'] * 2 +
                                            ['composed_retrieval'])
    spans = {(e.start_time, e.end_time) for e in events}
    for r in records:
        assert all(tuple(g) in spans for g in r['grounding'])
    # The default mock reply is no dialogue
    failures = io.read_jsonl(p['instructions.jsonl'] + '.failures.jsonl')
    assert [f['task'] for f in failures] == ['segment_qa']

    lines = open(p['sequence.txt']).read().splitlines()
    assert lines[0] == f'#format=seconds;duration={synth["duration"]!r}'
    assert len(lines) == 5

    for name in ('events.jsonl', 'tracks.jsonl', 'matrix.json',
                 'instructions.jsonl', 'sequence.txt'):
        record = json.loads(open(io.provenance_path(p[name])).read())
        assert record['seed'] == 11
        assert record['config_hash'] == PipelineConfig(seed=11).config_hash

    record = json.loads(open(io.provenance_path(p['matrix.json'])).read())
    assert set(record['inputs']) == {'tracks.jsonl', 'events.jsonl',
                                     'clues.jsonl'}


def test_pipeline_deterministic(tmp_path, capsys):
    _, first = pipeline_run(str(tmp_path / 'serial'), capsys, 1)
    _, second = pipeline_run(str(tmp_path / 'parallel'), capsys, 8)
    for name, path in first.items():
        for suffix in ('', io.PROVENANCE_SUFFIX):
            with open(path + suffix, 'rb') as a, \
                    open(second[name] + suffix, 'rb') as b:
                assert a.read() == b.read(), name + suffix


def test_pipeline_golden(tmp_path, capsys):
    # Hand-checked outputs of a 5-frame clip with 2 events and 3 tracks
    src = {name: str(GOLDEN / name) for name in
           ('frames.jsonl', 'scores.jsonl', 'detections.jsonl',
            'clues.jsonl', 'replies.jsonl')}
    out = {name: str(tmp_path / name) for name in
           ('events.jsonl', 'tracks.jsonl', 'matrix.json',
            'instructions.jsonl', 'sequence.txt')}
    plan = {'segment_captioning': 1, 'segment_qa': 1,
            'direct_localization': 1, 'instance_activity_summarizing': 1,
            'cross_segment_qa': 1}
    steps = [
        ['segment', '--frames', src['frames.jsonl'], '--scores',
         src['scores.jsonl'], '--sigma', 0.5, '--threshold', 0.5,
         '--min-event-frames', 2, '--output', out['events.jsonl']],
        ['track', '--detections', src['detections.jsonl'], '--output',
         out['tracks.jsonl']],
        ['matrix', '--tracks', out['tracks.jsonl'], '--events',
         out['events.jsonl'], '--clues', src['clues.jsonl'], '--duration',
         20, '--output', out['matrix.json']],
        ['gen', '--matrix', out['matrix.json'], '--replies',
         src['replies.jsonl'], '--plan', json.dumps(plan), '--output',
         out['instructions.jsonl']],
        ['seq', 'render', '--matrix', out['matrix.json'], '--format',
         'seconds', '--output', out['sequence.txt']],
    ]
    for step in steps:
        status, _, err = run(capsys, *step)
        assert status == 0, err

    for name, path in out.items():
        with open(path, 'rb') as a, open(GOLDEN / name, 'rb') as b:
            assert a.read() == b.read(), name
        assert os.path.exists(io.provenance_path(path))
    assert not os.path.exists(out['instructions.jsonl'] + '.failures.jsonl')


@pytest.mark.parametrize("plan", [
    '{"segment_qa": "x"}',
    '{"segment_qa": -1}',
    '{"segment_qa": 1.5}',
    '{"segment_qa": true}',
    '["segment_qa"]',
])
def test_cli_gen_bad_plan(tmp_path, capsys, plan):
    out = tmp_path / 'instructions.jsonl'
    status, _, err = run(capsys, 'gen', '--matrix', GOLDEN / 'matrix.json',
                         '--plan', plan, '--output', out)
    assert status == 1
    assert json.loads(err.splitlines()[-1])['error'] == 'InputError'
    assert not out.exists()


def test_cli_gen_bad_replies(tmp_path, capsys):
    replies = tmp_path / 'replies.jsonl'
    io.write_jsonl(replies, [{'reply': 'Assistant: A cat.'}])
    status, _, err = run(capsys, 'gen', '--matrix', GOLDEN / 'matrix.json',
                         '--replies', replies, '--output',
                         tmp_path / 'out.jsonl')
    assert status == 1
    assert json.loads(err.splitlines()[-1])['error'] == 'InputError'


if __name__ == "__main__":
    # Run unit tests, in separate process to avoid warnings about cached
    # modules, printing output line by line in realtime
    from subprocess import PIPE, Popen
    with Popen(['pytest',
                '--tb=short',  # shorter traceback format
                '--hypothesis-show-statistics',
                str(__file__)], stdout=PIPE, bufsize=1,
               universal_newlines=True) as p:
        for line in p.stdout:
            print(line, end='')
