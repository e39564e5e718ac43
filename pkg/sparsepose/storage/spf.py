"""SPF1 sparse frame container.

Layout (little-endian)::

    magic      4s   b'SPF1'
    version    u16
    width      u16
    height     u16
    fps        u16
    frames     u32
    channels   3s   b'EXY' (edge, MV_X, MV_Y)
    config_len u32
    config     JSON, config_len bytes
    per frame: u32 frame index, u32 site count, then packed records
               (row u16, col u16, edge u8, mv_x u8, mv_y u8)
    crc32      u32 over everything before it

MV values are stored offset-binary (stored = value + 128). The sensor's +128 has
no 8-bit encoding and is written as +127.
Version 1 files carry no frame index; their frames are numbered by position.
"""
import json
import logging
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from config.settings import Config
from sparsepose.errors import ChecksumError, DataError, ValueRangeError
from sparsepose.models.frame import SparseFrame
from sparsepose.models.sparse_tensor import SparseTensor2D

logger = logging.getLogger(__name__)

MAGIC = b'SPF1'
VERSION = 2
READABLE_VERSIONS = (1, 2)
CHANNELS = b'EXY'
MV_OFFSET = 128

HEADER = struct.Struct('<4sHHHHI3sI')
COUNT = struct.Struct('<I')
FRAME = struct.Struct('<II')
CRC = struct.Struct('<I')
RECORD = np.dtype([('row', '<u2'), ('col', '<u2'), ('edge', 'u1'), ('mv_x', 'u1'), ('mv_y', 'u1')])

@dataclass
class SpfClip:
    """Frames of one SPF file with its header fields"""
    frames: list
    width: int = Config.NATIVE_WIDTH
    height: int = Config.NATIVE_HEIGHT
    fps: int = Config.FPS
    config: dict = field(default_factory=dict)

    @property
    def num_frames(self):
        return len(self.frames)


def frame_records(frame):
    """
    Pack one SparseFrame into canonical records

    A record is written for every site active in either channel group; the
    absent group is stored as zero. Sites whose edge and MV values are all zero
    carry no information on disk and are dropped.

    Returns:
        np.ndarray: Structured array of RECORD
    """
    keys = np.union1d(frame.edge.keys, frame.mv.keys)
    records = np.zeros(len(keys), dtype=RECORD)
    if not len(keys):
        return records

    records['row'], records['col'] = np.divmod(keys, frame.width)
    edge = np.zeros(len(keys), dtype=np.int64)
    edge[np.searchsorted(keys, frame.edge.keys)] = frame.edge.values[:, 0]
    mv = np.zeros((len(keys), 2), dtype=np.int64)
    mv[np.searchsorted(keys, frame.mv.keys)] = frame.mv.values

    if np.any(mv > 127):
        logger.warning(f"Frame {frame.index}: {int(np.sum(mv > 127))} MV value(s) of +128 stored as +127")
        mv = np.minimum(mv, 127)
    records['edge'] = edge
    records['mv_x'] = mv[:, 0] + MV_OFFSET
    records['mv_y'] = mv[:, 1] + MV_OFFSET

    silent = (edge == 0) & np.all(mv == 0, axis=1)
    if np.any(silent):
        logger.warning(f"Frame {frame.index}: dropping {int(silent.sum())} all-zero site(s)")
        records = records[~silent]
    return records

def records_frame(index, records, height, width):
    """Rebuild a SparseFrame from decoded records"""
    rows = records['row'].astype(np.int64)
    cols = records['col'].astype(np.int64)
    if len(records):
        if rows.max() >= height or cols.max() >= width:
            raise ValueRangeError(f"Frame {index}: record coordinates outside {width}x{height}")
        keys = rows * width + cols
        if np.any(np.diff(keys) <= 0):
            raise DataError(f"Frame {index}: records not in canonical row-major order")
    coords = np.stack([rows, cols], axis=1)
    edge_values = records['edge']
    mv_values = np.stack([records['mv_x'].astype(np.int16) - MV_OFFSET,
                          records['mv_y'].astype(np.int16) - MV_OFFSET], axis=1)

    edge_active = edge_values > 0
    mv_active = np.any(mv_values != 0, axis=1)
    edge = SparseTensor2D(height, width, 1, coords[edge_active],
                          edge_values[edge_active].reshape(-1, 1).astype(np.uint8), _trusted=True)
    mv = SparseTensor2D(height, width, 2, coords[mv_active], mv_values[mv_active], _trusted=True)
    return SparseFrame(index, edge, mv)

def encode_spf(frames, fps=Config.FPS, config=None):
    """
    Serialize SparseFrames to SPF1 bytes

    Args:
        frames (list): SparseFrames of one clip, all at one resolution
        fps (int): Frame rate
        config (dict, optional): Producing configuration, embedded as JSON

    Returns:
        bytes: The file contents
    """
    frames = list(frames)
    height, width = frames[0].resolution if frames else (Config.NATIVE_HEIGHT, Config.NATIVE_WIDTH)
    for frame in frames:
        if frame.resolution != (height, width):
            raise DataError(f"Frame {frame.index} is {frame.width}x{frame.height}, clip is {width}x{height}")
        if not 0 <= frame.index <= 0xFFFFFFFF:
            raise DataError(f"Frame index {frame.index} does not fit the SPF index field")

    config_bytes = json.dumps(config or {}, sort_keys=True, default=str).encode('utf-8')
    chunks = [HEADER.pack(MAGIC, VERSION, width, height, fps, len(frames), CHANNELS, len(config_bytes)),
              config_bytes]
    for frame in frames:
        records = frame_records(frame)
        chunks.append(FRAME.pack(frame.index, len(records)))
        chunks.append(records.tobytes())
    body = b''.join(chunks)
    return body + CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)

def decode_spf(data):
    """
    Parse SPF1 bytes

    The checksum is verified before any field is trusted.

    Raises:
        DataError: Truncated file, bad magic or version, inconsistent counts
        ChecksumError: Stored CRC32 does not match
        ValueRangeError: Record coordinates out of bounds

    Returns:
        SpfClip: Decoded frames and header
    """
    if len(data) < HEADER.size + CRC.size:
        raise DataError(f"SPF data too short ({len(data)} bytes)")
    body, (stored,) = data[:-CRC.size], CRC.unpack(data[-CRC.size:])
    computed = zlib.crc32(body) & 0xFFFFFFFF
    if computed != stored:
        raise ChecksumError(f"SPF checksum mismatch: stored {stored:08x}, computed {computed:08x}")

    magic, version, width, height, fps, num_frames, channels, config_len = HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise DataError(f"Not an SPF file (magic {magic!r})")
    if version not in READABLE_VERSIONS:
        raise DataError(f"Unsupported SPF version {version}")
    if channels != CHANNELS:
        raise DataError(f"Unsupported channel descriptor {channels!r}")
    if width == 0 or height == 0:
        raise DataError(f"Invalid SPF resolution {width}x{height}")

    offset = HEADER.size
    if offset + config_len > len(body):
        raise DataError("SPF config block runs past end of file")
    try:
        config = json.loads(body[offset:offset + config_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"SPF config block is not valid JSON: {e}")
    offset += config_len

    prefix = FRAME if version >= 2 else COUNT
    frames = []
    for position in range(num_frames):
        if offset + prefix.size > len(body):
            raise DataError(f"SPF truncated before frame {position} of {num_frames}")
        if version >= 2:
            index, count = FRAME.unpack_from(body, offset)
        else:
            index, (count,) = position, COUNT.unpack_from(body, offset)
        offset += prefix.size
        end = offset + count * RECORD.itemsize
        if end > len(body):
            raise DataError(f"Frame {index} declares {count} records past end of file")
        records = np.frombuffer(body, dtype=RECORD, count=count, offset=offset)
        frames.append(records_frame(index, records, height, width))
        offset = end
    if offset != len(body):
        raise DataError(f"{len(body) - offset} trailing bytes after {num_frames} frames")
    return SpfClip(frames=frames, width=width, height=height, fps=fps, config=config)

def write_spf(path, frames, fps=Config.FPS, config=None):
    data = encode_spf(frames, fps=fps, config=config)
    with open(path, 'wb') as f:
        f.write(data)
    logger.info(f"Wrote {len(frames)} frames ({len(data)} bytes) to {path}")
    return len(data)

def read_spf(path):
    with open(path, 'rb') as f:
        data = f.read()
    clip = decode_spf(data)
    logger.info(f"Read {clip.num_frames} frames ({clip.width}x{clip.height} @ {clip.fps} fps) from {path}")
    return clip
