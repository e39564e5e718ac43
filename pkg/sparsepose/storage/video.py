"""Grayscale video ingestion and export.

Two layouts are supported: a directory of binary 8-bit portable graymaps read in
file-name order, or a raw file of concatenated H x W uint8 frames next to a
``<file>.json`` sidecar holding width, height, fps and frame_count.
"""
import glob
import json
import logging
import os

import numpy as np
from PIL import Image

from config.settings import Config
from sparsepose.errors import DataError, ShapeError

logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = '.json'

def _check_frames(frames):
    frames = [np.asarray(f) for f in frames]
    if not frames:
        raise DataError("Video has no frames")
    shape = frames[0].shape
    for i, frame in enumerate(frames):
        if frame.ndim != 2 or frame.shape != shape:
            raise ShapeError(f"Frame {i} has shape {frame.shape}, expected {shape}")
        if frame.dtype != np.uint8:
            raise DataError(f"Frame {i} is {frame.dtype}, expected 8-bit grayscale")
    return frames

def write_pgm_sequence(frames, directory):
    """Write frames as frame_00000.pgm, frame_00001.pgm, ..."""
    frames = _check_frames(frames)
    os.makedirs(directory, exist_ok=True)
    for i, frame in enumerate(frames):
        Image.fromarray(frame, mode='L').save(os.path.join(directory, f'frame_{i:05d}.pgm'))
    logger.info(f"Wrote {len(frames)} PGM frames to {directory}")

def read_pgm_sequence(directory):
    paths = sorted(glob.glob(os.path.join(directory, '*.pgm')))
    if not paths:
        raise DataError(f"No .pgm files in {directory}")
    frames = []
    for path in paths:
        with Image.open(path) as image:
            if image.mode != 'L':
                raise DataError(f"{path}: expected an 8-bit graymap, got mode {image.mode}")
            frames.append(np.array(image, dtype=np.uint8))
    return _check_frames(frames)

def write_raw_video(frames, path, fps=Config.FPS):
    frames = _check_frames(frames)
    height, width = frames[0].shape
    with open(path, 'wb') as f:
        for frame in frames:
            f.write(np.ascontiguousarray(frame).tobytes())
    with open(path + SIDECAR_SUFFIX, 'w') as f:
        json.dump({'width': width, 'height': height, 'fps': fps, 'frame_count': len(frames)}, f, indent=2)
    logger.info(f"Wrote {len(frames)} raw {width}x{height} frames to {path}")

def read_raw_video(path):
    sidecar = path + SIDECAR_SUFFIX
    if not os.path.exists(sidecar):
        raise DataError(f"Missing sidecar header {sidecar}")
    with open(sidecar, 'r') as f:
        try:
            header = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{sidecar}: invalid JSON: {e}")
    try:
        width, height, count = int(header['width']), int(header['height']), int(header['frame_count'])
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{sidecar}: malformed header ({e})")

    data = np.fromfile(path, dtype=np.uint8)
    if data.size != width * height * count:
        raise DataError(f"{path}: {data.size} bytes, header declares {count} frames of {width}x{height}")
    frames = list(data.reshape(count, height, width))
    return _check_frames(frames), int(header.get('fps', Config.FPS))

def read_video(path):
    """
    Read a grayscale video in either supported layout

    Args:
        path (str): PGM directory or raw video file

    Returns:
        tuple: (list of H x W uint8 frames, fps)
    """
    if os.path.isdir(path):
        frames, fps = read_pgm_sequence(path), Config.FPS
    else:
        frames, fps = read_raw_video(path)
    logger.info(f"Read {len(frames)} frames of {frames[0].shape[1]}x{frames[0].shape[0]} from {path}")
    return frames, fps
