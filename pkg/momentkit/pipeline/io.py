"""
File formats of the pipeline.

Records travel as JSONL, one object per line, grouped per video by an
optional ``video_id`` field.  Luma grids travel in a raw uint8 sidecar next
to the frames file, referenced from each frame line by file name, byte
offset and shape.  Every output file gets a ``<output>.provenance.json``
sidecar naming the toolkit version, config hash, input hashes and seed.
"""
import hashlib
import json
import logging
import os

import numpy as np

from momentkit import __version__
from momentkit.exceptions import InputError, ParseError
from momentkit.records import Event, FrameRecord
from momentkit.tracking.tracks import InstanceTrack

logger = logging.getLogger(__name__)

PROVENANCE_SUFFIX = '.provenance.json'


def dumps(obj):
    return json.dumps(obj, ensure_ascii=False)


def write_jsonl(path, rows):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for row in rows:
            f.write(dumps(row) + '\n')
    logger.info('Wrote %s', path)


def read_jsonl(path):
    """
    Parse a JSONL file, skipping blank lines.

    Raises
    ------
    ParseError
        With the line number of the first line that is not a JSON object.
    """
    rows = []
    with open(path, encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except ValueError as e:
                raise ParseError(f'{path}: {e}', number)
            if not isinstance(row, dict):
                raise ParseError(f'{path}: expected a JSON object', number)
            rows.append(row)
    return rows


def write_json(path, obj):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(json.dumps(obj, ensure_ascii=False, indent=2) + '\n')
    logger.info('Wrote %s', path)


def read_json(path):
    with open(path, encoding='utf-8') as f:
        try:
            return json.load(f)
        except ValueError as e:
            raise ParseError(f'{path}: {e}')


def group_by_video(rows):
    """Rows per ``video_id`` (default ``''``), in order of first appearance."""
    groups = {}
    for row in rows:
        groups.setdefault(row.get('video_id', ''), []).append(row)
    return groups


def _tagged(video_id, d):
    return {'video_id': video_id, **d}


def luma_path(frames_path):
    return os.path.splitext(frames_path)[0] + '.luma'


def write_frames(path, videos):
    """
    Write frames, with any luma grids in the sidecar `luma_path(path)`.

    Parameters
    ----------
    path : str
    videos : mapping
        Video id to a sequence of `FrameRecord`.
    """
    sidecar = luma_path(path)
    offset = 0
    rows = []
    with open(sidecar, 'wb') as luma_file:
        for video_id, frames in videos.items():
            for frame in frames:
                row = _tagged(video_id, frame.to_dict())
                if frame.luma is not None:
                    data = np.ascontiguousarray(frame.luma,
                                                dtype=np.uint8).tobytes()
                    luma_file.write(data)
                    row['luma'] = {'file': os.path.basename(sidecar),
                                   'offset': offset,
                                   'shape': list(frame.luma.shape)}
                    offset += len(data)
                rows.append(row)
    if offset == 0:
        os.remove(sidecar)
    write_jsonl(path, rows)


def read_frames(path):
    """
    Read a frames file and its luma sidecar.

    Returns
    -------
    videos : dict
        Video id to a list of `FrameRecord`.
    """
    folder = os.path.dirname(path)
    buffers = {}
    videos = {}
    for video_id, rows in group_by_video(read_jsonl(path)).items():
        frames = []
        for row in rows:
            luma = None
            ref = row.get('luma')
            if ref is not None:
                name = ref['file']
                if name not in buffers:
                    with open(os.path.join(folder, name), 'rb') as f:
                        buffers[name] = f.read()
                shape = tuple(int(n) for n in ref['shape'])
                size = int(np.prod(shape))
                start = int(ref['offset'])
                data = buffers[name][start:start + size]
                if len(data) != size:
                    raise InputError(f'Luma sidecar {name} ends before frame '
                                     f'{row["index"]}')
                luma = np.frombuffer(data, dtype=np.uint8).reshape(shape)
            frames.append(FrameRecord.from_dict(row, luma))
        videos[video_id] = frames
    return videos


def read_detections(path):
    """
    Read raw detections into ``(frame_index, detections)`` pairs per video.

    Consecutive lines with the same frame index form one frame.
    """
    videos = {}
    for video_id, rows in group_by_video(read_jsonl(path)).items():
        pairs = []
        for row in rows:
            frame_index = int(row['frame_index'])
            if not pairs or pairs[-1][0] != frame_index:
                pairs.append((frame_index, []))
            pairs[-1][1].append(row)
        videos[video_id] = pairs
    return videos


def write_detections(path, videos):
    """Flatten frames to one detection per line, without track ids."""
    rows = []
    for video_id, frames in videos.items():
        for frame in frames:
            for det in frame.detections:
                d = det.to_dict()
                del d['track_id']
                rows.append({'video_id': video_id,
                             'frame_index': frame.index, **d})
    write_jsonl(path, rows)


def write_tracks(path, videos):
    write_jsonl(path, [_tagged(video_id, t.to_dict())
                       for video_id, tracks in videos.items()
                       for t in tracks])


def read_tracks(path):
    return {video_id: [InstanceTrack.from_dict(r) for r in rows]
            for video_id, rows in group_by_video(read_jsonl(path)).items()}


def write_events(path, videos):
    write_jsonl(path, [_tagged(video_id, e.to_dict())
                       for video_id, events in videos.items()
                       for e in events])


def read_events(path):
    return {video_id: [Event.from_dict(r) for r in rows]
            for video_id, rows in group_by_video(read_jsonl(path)).items()}


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def provenance_path(output_path):
    return output_path + PROVENANCE_SUFFIX


def write_provenance(output_path, config, inputs=(), seed=None):
    """
    Write the provenance sidecar of an output file.

    The record holds the toolkit name and version, the config hash and the
    config itself, the SHA-256 of each input file by base name, and the
    seed.  It contains nothing that changes between identical runs.
    """
    record = {'toolkit': 'momentkit',
              'version': __version__,
              'config_hash': config.config_hash,
              'config': config.model_dump(mode='json'),
              'inputs': {os.path.basename(p): file_sha256(p)
                         for p in sorted(inputs)},
              'seed': seed}
    with open(provenance_path(output_path), 'w', encoding='utf-8',
              newline='\n') as f:
        f.write(json.dumps(record, indent=2, sort_keys=True) + '\n')
