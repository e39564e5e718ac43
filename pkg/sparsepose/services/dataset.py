import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image

from config.settings import Config
from sparsepose.errors import ConfigError, DataError
from sparsepose.models.pose import get_action
from sparsepose.models.sparse_tensor import SparseTensor2D, resize_sites
from sparsepose.services.heatmaps import make_target_heatmaps
from sparsepose.services.model import assemble_fusion_input

logger = logging.getLogger(__name__)

EDGE = 'edge'
MV = 'mv'
FUSION = 'fusion'
GRAYSCALE = 'grayscale'

@dataclass
class Sample:
    """One network input with its ground truth and speed context"""
    x: SparseTensor2D
    annotation: object
    previous: object = None
    action_class: str = None

    def target(self, shape=None):
        shape = shape or (self.x.height, self.x.width)
        return make_target_heatmaps(self.annotation, shape)


def resize_gray(gray, height, width):
    """Bilinear resize of an 8-bit frame with Pillow"""
    gray = np.asarray(gray, dtype=np.uint8)
    if gray.shape == (height, width):
        return gray
    return np.asarray(Image.fromarray(gray).resize((width, height), Image.BILINEAR))

def prepare_input(frame, modality, shape=(Config.INPUT_HEIGHT, Config.INPUT_WIDTH), gray=None):
    """
    Network input of one frame

    Sensor channels are resized by coordinate scaling and normalized to edge / 255
    and MV / 128; grayscale frames are resized bilinearly, scaled by 1 / 255 and
    every pixel is active.

    Args:
        frame (SparseFrame): Sensor frame (unused for grayscale)
        modality (str): edge, mv, fusion or grayscale
        shape (tuple): Network input (H, W)
        gray (np.ndarray, optional): 8-bit grayscale frame, required for grayscale

    Returns:
        SparseTensor2D: float32 input with 1, 2 or 3 channels
    """
    height, width = shape
    if modality == GRAYSCALE:
        if gray is None:
            raise ConfigError("Grayscale modality needs the grayscale video")
        resized = resize_gray(gray, height, width).astype(np.float32) / float(Config.EDGE_MAX)
        return SparseTensor2D.full(resized)

    edge = resize_sites(frame.edge, height, width)
    edge = edge.with_values(edge.values.astype(np.float32) / float(Config.EDGE_MAX))
    mv = resize_sites(frame.mv, height, width)
    mv = mv.with_values(mv.values.astype(np.float32) / float(Config.MV_MAX))
    if modality == EDGE:
        return edge
    if modality == MV:
        return mv
    if modality == FUSION:
        return assemble_fusion_input(edge, mv)
    raise ConfigError(f"Unknown modality '{modality}'")

def build_samples(frames, annotations, modality, shape=(Config.INPUT_HEIGHT, Config.INPUT_WIDTH),
                  gray_frames=None, frame_ids=None):
    """
    Pair frames with annotations

    Args:
        frames (list): SparseFrame per time step
        annotations (list): PoseAnnotation per time step (same order)
        modality (str): Input modality
        shape (tuple): Network input (H, W)
        gray_frames (sequence, optional): Grayscale frames for the grayscale modality
        frame_ids (iterable, optional): Restrict to these frame ids (a split)

    Returns:
        list: Sample objects in frame order
    """
    if len(frames) != len(annotations):
        raise DataError(f"{len(frames)} frames but {len(annotations)} annotations")
    by_index = {ann.frame_id: ann for ann in annotations}
    wanted = None if frame_ids is None else set(int(i) for i in frame_ids)

    samples = []
    for position, frame in enumerate(frames):
        if wanted is not None and frame.index not in wanted:
            continue
        ann = by_index.get(frame.index)
        if ann is None:
            raise DataError(f"No annotation for frame {frame.index}")
        gray = gray_frames[position] if gray_frames is not None else None
        action_class = get_action(ann.action_id).action_class if ann.action_id else None
        samples.append(Sample(
            x=prepare_input(frame, modality, shape, gray=gray),
            annotation=ann,
            previous=by_index.get(frame.index - 1),
            action_class=action_class,
        ))
    logger.info(f"Prepared {len(samples)} {modality} samples at {shape[0]}x{shape[1]}")
    return samples
