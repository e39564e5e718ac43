import logging

import numpy as np

from config.settings import Config
from sparsepose.errors import ConfigError, ShapeError, ValueRangeError

logger = logging.getLogger(__name__)

JOINT_NAMES = (
    'nose',
    'left_shoulder', 'right_shoulder',
    'left_elbow', 'right_elbow',
    'left_hand', 'right_hand',
    'left_hip', 'right_hip',
    'left_knee', 'right_knee',
    'left_foot', 'right_foot',
)

class SpeedClass:
    """Per-joint displacement bucket in native pixels per frame"""

    SLOW = 'slow'
    MEDIUM = 'medium'
    FAST = 'fast'

    ALL = (SLOW, MEDIUM, FAST)

    @classmethod
    def of(cls, displacement, slow_below=Config.SPEED_SLOW_BELOW, fast_above=Config.SPEED_FAST_ABOVE):
        """
        Classify a displacement magnitude

        Args:
            displacement (float): Pixels per frame at native resolution

        Returns:
            str: SLOW below ``slow_below``, FAST above ``fast_above``, MEDIUM otherwise
        """
        if displacement < slow_below:
            return cls.SLOW
        if displacement > fast_above:
            return cls.FAST
        return cls.MEDIUM


class Action:
    """One entry of the action catalogue"""

    # Movement classes
    CLASS_UPPER_BODY = 'C1'
    CLASS_LOWER_BODY = 'C2'
    CLASS_SLOW_WHOLE_BODY = 'C3'
    CLASS_FAST_WHOLE_BODY = 'C4'

    def __init__(self, action_id, name, action_class):
        self.action_id = action_id
        self.name = name
        self.action_class = action_class

    @property
    def slug(self):
        return self.name.lower().replace(' & ', ' ').replace('-', ' ').replace(' ', '_')

    def to_dict(self):
        return {'action_id': self.action_id, 'name': self.name, 'class': self.action_class}

    def __repr__(self):
        return f"Action({self.action_id}, '{self.name}', {self.action_class})"


ACTIONS = (
    Action(1, 'Arm abduction', Action.CLASS_UPPER_BODY),
    Action(2, 'Arm bicep curl', Action.CLASS_UPPER_BODY),
    Action(3, 'Wave hello', Action.CLASS_UPPER_BODY),
    Action(4, 'Punch up forward', Action.CLASS_UPPER_BODY),
    Action(5, 'Leg knee lift', Action.CLASS_LOWER_BODY),
    Action(6, 'Leg abduction', Action.CLASS_LOWER_BODY),
    Action(7, 'Leg pulling', Action.CLASS_LOWER_BODY),
    Action(8, 'Squat', Action.CLASS_SLOW_WHOLE_BODY),
    Action(9, 'Walk in place', Action.CLASS_SLOW_WHOLE_BODY),
    Action(10, 'Standing side bend', Action.CLASS_SLOW_WHOLE_BODY),
    Action(11, 'Roll wrists & ankles', Action.CLASS_SLOW_WHOLE_BODY),
    Action(12, 'Elbow-to-knee', Action.CLASS_FAST_WHOLE_BODY),
    Action(13, 'Jump in place', Action.CLASS_FAST_WHOLE_BODY),
    Action(14, 'Jumping jack', Action.CLASS_FAST_WHOLE_BODY),
    Action(15, 'Hop on one foot', Action.CLASS_FAST_WHOLE_BODY),
    Action(16, 'Jog in place', Action.CLASS_FAST_WHOLE_BODY),
)

def get_action(key):
    """
    Look up an action by id (1-16), name or slug

    Args:
        key (int | str): e.g. 13, '13', 'Jump in place' or 'jump_in_place'

    Returns:
        Action: The catalogue entry
    """
    if isinstance(key, Action):
        return key
    text = str(key).strip()
    if text.isdigit():
        for action in ACTIONS:
            if action.action_id == int(text):
                return action
    else:
        wanted = text.lower().replace('-', ' ').replace('_', ' ').replace(' & ', ' ')
        for action in ACTIONS:
            if action.slug.replace('_', ' ') == wanted:
                return action
    raise ConfigError(f"Unknown action '{key}'")


class PoseAnnotation:
    """13 joint positions of one frame with per-joint visibility

    Positions are (row, col) subpixel coordinates at ``resolution`` (native
    480 x 640 unless rescaled).
    """

    def __init__(self, joints, visible=None, resolution=(Config.NATIVE_HEIGHT, Config.NATIVE_WIDTH),
                 frame_id=0, camera_id=0, action_id=0, validate=True):
        """
        Initialize a pose annotation

        Args:
            joints (array-like): 13 x 2 (row, col) positions
            visible (array-like, optional): 13 flags; all visible by default
            resolution (tuple): (height, width) the positions refer to
            frame_id (int): Frame index within the clip
            camera_id (int): Camera / viewing-angle identifier
            action_id (int): Action catalogue id (1-16, 0 when unknown)
            validate (bool): Reject visible joints outside the frame
        """
        self.joints = np.asarray(joints, dtype=np.float64).reshape(-1, 2)
        if len(self.joints) != len(JOINT_NAMES):
            raise ShapeError(f"Expected {len(JOINT_NAMES)} joints, got {len(self.joints)}")
        self.visible = (np.ones(len(JOINT_NAMES), dtype=bool) if visible is None
                        else np.asarray(visible, dtype=bool).reshape(-1))
        if self.visible.shape != (len(JOINT_NAMES),):
            raise ShapeError(f"Expected {len(JOINT_NAMES)} visibility flags, got {self.visible.shape}")
        self.resolution = (int(resolution[0]), int(resolution[1]))
        self.frame_id = int(frame_id)
        self.camera_id = int(camera_id)
        self.action_id = int(action_id)

        if validate and self.visible.any():
            points = self.joints[self.visible]
            height, width = self.resolution
            if (not np.all(np.isfinite(points)) or points[:, 0].min() < 0 or points[:, 1].min() < 0
                    or points[:, 0].max() > height - 1 or points[:, 1].max() > width - 1):
                raise ValueRangeError(f"Visible joint outside the {height}x{width} frame (frame {self.frame_id})")

    @property
    def num_visible(self):
        return int(self.visible.sum())

    def rescaled(self, height, width):
        """
        Per-axis linear rescale to another resolution

        Args:
            height (int): Target height
            width (int): Target width

        Returns:
            PoseAnnotation: Positions scaled by (height / H, width / W)
        """
        scale = np.array([height / self.resolution[0], width / self.resolution[1]])
        return PoseAnnotation(self.joints * scale, self.visible, (height, width),
                              self.frame_id, self.camera_id, self.action_id, validate=False)

    def joint(self, name):
        return self.joints[JOINT_NAMES.index(name)]

    def to_dict(self):
        data = {'frame_id': self.frame_id, 'camera_id': self.camera_id, 'action_id': self.action_id}
        for i, name in enumerate(JOINT_NAMES):
            data[f'{name}_row'] = float(self.joints[i, 0])
            data[f'{name}_col'] = float(self.joints[i, 1])
            data[f'{name}_vis'] = int(self.visible[i])
        return data

    @classmethod
    def from_dict(cls, data, resolution=(Config.NATIVE_HEIGHT, Config.NATIVE_WIDTH)):
        joints = [(data[f'{name}_row'], data[f'{name}_col']) for name in JOINT_NAMES]
        visible = [bool(int(data[f'{name}_vis'])) for name in JOINT_NAMES]
        return cls(joints, visible, resolution, frame_id=data.get('frame_id', 0),
                   camera_id=data.get('camera_id', 0), action_id=data.get('action_id', 0))

    def __eq__(self, other):
        if not isinstance(other, PoseAnnotation):
            return NotImplemented
        return (self.resolution == other.resolution and np.array_equal(self.visible, other.visible)
                and np.array_equal(self.joints[self.visible], other.joints[other.visible]))

    __hash__ = None

    def __repr__(self):
        return f"PoseAnnotation(frame={self.frame_id}, visible={self.num_visible}, resolution={self.resolution})"
