"""Synthetic articulated scenes standing in for recorded sensor clips.

A 3D stick skeleton follows one of the catalogue's motion scripts, is rotated
about the vertical axis by the camera angle, projected orthographically and
rendered as anti-aliased limbs over a static background. The generator's joint
positions are the annotations.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from config.settings import Config
from sparsepose.errors import ConfigError
from sparsepose.models.pose import JOINT_NAMES, PoseAnnotation, get_action
from sparsepose.services.motion import MotionVectorSensor

logger = logging.getLogger(__name__)

CAMERA_ANGLES = (0, 15, 30, 45)

# Segment lengths in native pixels at body scale 1
TORSO = 105.0
HEAD = 42.0
SHOULDER_HALF = 36.0
HIP_HALF = 20.0
UPPER_ARM = 58.0
FOREARM = 54.0
THIGH = 82.0
SHIN = 80.0

# ---------------------------------------------------------------------- motion scripts

def _osc(t, freq, phase=0.0):
    """Smooth 0 -> 1 -> 0 cycle"""
    return 0.5 - 0.5 * math.cos(2 * math.pi * (freq * t + phase))

def _alternate(t, freq):
    """(left, right) lift amounts; one side moves per half cycle"""
    p = (t * freq) % 1.0
    if p < 0.5:
        return math.sin(2 * math.pi * p) ** 2, 0.0
    return 0.0, math.sin(2 * math.pi * (p - 0.5)) ** 2

def _hop(t, period, air_fraction, height):
    """Ballistic hop: (height above ground, landing crouch amount)"""
    u = (t % period) / period
    if u < air_fraction:
        s = u / air_fraction
        return 4.0 * height * s * (1.0 - s), 0.0
    return 0.0, math.sin(math.pi * (u - air_fraction) / (1.0 - air_fraction))

def _rest_pose():
    return {
        'pelvis': [0.0, 0.0, 0.0], 'lean': 0.0, 'pitch': 0.0,
        'l_arm': [0.15, 0.0], 'l_fore': [0.15, 0.0], 'r_arm': [0.15, 0.0], 'r_fore': [0.15, 0.0],
        'l_thigh': [0.05, 0.0], 'l_shin': [0.05, 0.0], 'r_thigh': [0.05, 0.0], 'r_shin': [0.05, 0.0],
    }

def _arm_abduction(pose, t):
    a = 0.15 + 1.45 * _osc(t, 0.4)
    pose['l_arm'] = pose['l_fore'] = pose['r_arm'] = pose['r_fore'] = [a, 0.0]

def _bicep_curl(pose, t):
    bend = 0.1 + 2.1 * _osc(t, 0.5)
    pose['l_arm'] = pose['r_arm'] = [0.15, 0.1]
    pose['l_fore'] = pose['r_fore'] = [0.15, bend]

def _wave_hello(pose, t):
    pose['r_arm'] = [2.2, 0.0]
    pose['r_fore'] = [2.7 + 0.55 * math.sin(2 * math.pi * 1.0 * t), 0.0]

def _punch_up_forward(pose, t):
    for side, phase in (('l', 0.0), ('r', 0.5)):
        a = _osc(t, 0.6, phase)
        pose[f'{side}_arm'] = [0.1, 2.6 * a]
        pose[f'{side}_fore'] = [0.1, 2.6 * a + 0.8 * (1.0 - a)]

def _leg_knee_lift(pose, t):
    for side, a in zip('lr', _alternate(t, 0.4)):
        pose[f'{side}_thigh'] = [0.05, 1.5 * a]
        pose[f'{side}_shin'] = [0.05, 0.0]

def _leg_abduction(pose, t):
    for side, a in zip('lr', _alternate(t, 0.4)):
        pose[f'{side}_thigh'] = pose[f'{side}_shin'] = [0.05 + 0.7 * a, 0.0]

def _leg_pulling(pose, t):
    for side, a in zip('lr', _alternate(t, 0.35)):
        pose[f'{side}_thigh'] = [0.05, -0.25 * a]
        pose[f'{side}_shin'] = [0.05, -2.0 * a]

def _squat(pose, t):
    a = 1.2 * _osc(t, 0.25)
    drop = (THIGH + SHIN) * (1.0 - math.cos(a))
    pose['pelvis'] = [0.0, -drop, -(THIGH - SHIN) * math.sin(a)]
    pose['pitch'] = 0.35 * a
    for side in 'lr':
        pose[f'{side}_thigh'] = [0.05, a]
        pose[f'{side}_shin'] = [0.05, -a]
        pose[f'{side}_arm'] = pose[f'{side}_fore'] = [0.1, a]

def _walk_in_place(pose, t):
    swing = 0.35 * math.sin(2 * math.pi * 0.9 * t)
    for side, a in zip('lr', _alternate(t, 0.9)):
        pose[f'{side}_thigh'] = [0.05, 0.6 * a]
        pose[f'{side}_shin'] = [0.05, -0.3 * a]
    pose['l_arm'] = pose['l_fore'] = [0.15, swing]
    pose['r_arm'] = pose['r_fore'] = [0.15, -swing]

def _standing_side_bend(pose, t):
    lean = 0.35 * math.sin(2 * math.pi * 0.25 * t)
    pose['lean'] = lean
    pose['l_arm'] = pose['l_fore'] = [0.15 + lean, 0.0]
    pose['r_arm'] = pose['r_fore'] = [0.15 - lean, 0.0]

def _roll_wrists_ankles(pose, t):
    angle = 2 * math.pi * 0.6 * t
    pose['l_arm'] = pose['r_arm'] = [0.15, 0.3]
    pose['l_fore'] = pose['r_fore'] = [0.15 + 0.2 * math.cos(angle), 0.9 + 0.2 * math.sin(angle)]
    pose['r_thigh'] = [0.05, 0.25]
    pose['r_shin'] = [0.05 + 0.1 * math.cos(angle), 0.25 + 0.1 * math.sin(angle)]

def _elbow_to_knee(pose, t):
    left, right = _alternate(t, 0.8)
    pose['pitch'] = 0.35 * (left + right)
    pose['lean'] = 0.25 * (left - right)
    for side, lift, reach in (('l', left, right), ('r', right, left)):
        pose[f'{side}_thigh'] = [0.05, 1.4 * lift]
        pose[f'{side}_shin'] = [0.05, 0.0]
        pose[f'{side}_arm'] = [1.8 - 1.2 * reach, 0.6 * reach]
        pose[f'{side}_fore'] = [2.8 - 1.8 * reach, 1.2 * reach]

def _jump_in_place(pose, t):
    height, crouch = _hop(t, 0.6, 0.72, 45.0)
    pose['pelvis'] = [0.0, height - 14.0 * crouch, 0.0]
    for side in 'lr':
        pose[f'{side}_thigh'] = [0.05, 0.5 * crouch]
        pose[f'{side}_shin'] = [0.05, -0.5 * crouch]
        pose[f'{side}_arm'] = pose[f'{side}_fore'] = [0.3, 0.6 * math.sin(2 * math.pi * t / 0.6)]

def _jumping_jack(pose, t):
    a = _osc(t, 1.0)
    pose['pelvis'] = [0.0, 18.0 * abs(math.sin(2 * math.pi * 1.0 * t)), 0.0]
    for side in 'lr':
        pose[f'{side}_arm'] = [0.15 + 2.6 * a, 0.0]
        pose[f'{side}_fore'] = [0.25 + 2.6 * a, 0.0]
        pose[f'{side}_thigh'] = pose[f'{side}_shin'] = [0.05 + 0.3 * a, 0.0]

def _hop_on_one_foot(pose, t):
    height, crouch = _hop(t, 0.5, 0.65, 22.0)
    pose['pelvis'] = [0.0, height - 8.0 * crouch, 0.0]
    pose['r_thigh'] = [0.05, 0.9]
    pose['r_shin'] = [0.05, -0.7]
    pose['l_thigh'] = [0.05, 0.3 * crouch]
    pose['l_shin'] = [0.05, -0.3 * crouch]
    pose['l_arm'] = pose['l_fore'] = pose['r_arm'] = pose['r_fore'] = [0.5, 0.2]

def _jog_in_place(pose, t):
    swing = 0.6 * math.sin(2 * math.pi * 1.4 * t)
    left, right = _alternate(t, 1.4)
    pose['pelvis'] = [0.0, 8.0 * (left + right), 0.0]
    for side, a in (('l', left), ('r', right)):
        pose[f'{side}_thigh'] = [0.05, 1.0 * a]
        pose[f'{side}_shin'] = [0.05, -1.3 * a]
    pose['l_arm'] = [0.15, swing]
    pose['l_fore'] = [0.15, swing + 1.4]
    pose['r_arm'] = [0.15, -swing]
    pose['r_fore'] = [0.15, -swing + 1.4]

MOTION_SCRIPTS = {
    1: _arm_abduction,
    2: _bicep_curl,
    3: _wave_hello,
    4: _punch_up_forward,
    5: _leg_knee_lift,
    6: _leg_abduction,
    7: _leg_pulling,
    8: _squat,
    9: _walk_in_place,
    10: _standing_side_bend,
    11: _roll_wrists_ankles,
    12: _elbow_to_knee,
    13: _jump_in_place,
    14: _jumping_jack,
    15: _hop_on_one_foot,
    16: _jog_in_place,
}

# ---------------------------------------------------------------------- skeleton

def _limb_direction(angles, side):
    abduction, flexion = angles
    return np.array([side * math.sin(abduction),
                     -math.cos(abduction) * math.cos(flexion),
                     math.cos(abduction) * math.sin(flexion)])

def skeleton_3d(pose, scale=1.0):
    """
    Joint positions in body space (x toward the figure's left, y up, z toward the camera)

    Returns:
        np.ndarray: 13 x 3 positions ordered as JOINT_NAMES, pelvis at the origin at rest
    """
    lean, pitch = pose['lean'], pose['pitch']
    pelvis = np.array(pose['pelvis'], dtype=np.float64)
    up = np.array([math.sin(lean), math.cos(lean) * math.cos(pitch), math.cos(lean) * math.sin(pitch)])
    lateral = np.array([math.cos(lean), -math.sin(lean), 0.0])
    neck = pelvis + TORSO * up

    joints = {'nose': neck + HEAD * up}
    for prefix, side in (('left', 1.0), ('right', -1.0)):
        key = prefix[0]
        shoulder = neck + side * SHOULDER_HALF * lateral
        elbow = shoulder + UPPER_ARM * _limb_direction(pose[f'{key}_arm'], side)
        hand = elbow + FOREARM * _limb_direction(pose[f'{key}_fore'], side)
        hip = pelvis + np.array([side * HIP_HALF, 0.0, 0.0])
        knee = hip + THIGH * _limb_direction(pose[f'{key}_thigh'], side)
        foot = knee + SHIN * _limb_direction(pose[f'{key}_shin'], side)
        joints.update({f'{prefix}_shoulder': shoulder, f'{prefix}_elbow': elbow, f'{prefix}_hand': hand,
                       f'{prefix}_hip': hip, f'{prefix}_knee': knee, f'{prefix}_foot': foot})
    return np.stack([joints[name] for name in JOINT_NAMES]) * scale

# ---------------------------------------------------------------------- scene

@dataclass
class SyntheticScene:
    """Stick figure, motion script, camera and rendering settings of one clip"""
    action: object = 16
    camera_angle: float = 0.0
    limb_width: float = 4.0
    torso_width: float = 10.0
    head_radius: float = 12.0
    face_radius: float = 3.0
    body_scale: float = 1.0
    offset: tuple = (0.0, 0.0)
    motion_blur: float = 0.0
    blur_substeps: int = 8
    props: bool = True
    prop_side: int = -1
    background_level: int = 40
    figure_level: int = 230
    prop_level: int = 215
    start_time: float = 0.0
    height: int = Config.NATIVE_HEIGHT
    width: int = Config.NATIVE_WIDTH
    fps: int = Config.FPS

    def __post_init__(self):
        self.action = get_action(self.action)
        if self.camera_angle not in CAMERA_ANGLES:
            logger.warning(f"Camera angle {self.camera_angle} outside the recorded set {CAMERA_ANGLES}")
        if not 0 <= self.motion_blur <= 1:
            raise ConfigError("motion_blur is an exposure fraction in [0, 1]")

    @classmethod
    def random(cls, action, seed=Config.SEED, camera_angle=None, **overrides):
        """
        Scene with seed-drawn body scale, placement, prop side and start phase

        Args:
            action (int | str): Action id, name or slug
            seed (int): Generator seed
            camera_angle (float, optional): Drawn from CAMERA_ANGLES when omitted
        """
        rng = np.random.default_rng(seed)
        settings = {
            'body_scale': float(rng.uniform(0.92, 1.05)),
            'offset': (float(rng.uniform(-6, 6)), float(rng.uniform(-20, 20))),
            'prop_side': int(rng.choice([-1, 1])),
            'start_time': float(rng.uniform(0, 1)),
            'camera_angle': float(rng.choice(CAMERA_ANGLES)) if camera_angle is None else camera_angle,
        }
        settings.update(overrides)
        return cls(action=action, **settings)

    @property
    def camera_id(self):
        return CAMERA_ANGLES.index(self.camera_angle) if self.camera_angle in CAMERA_ANGLES else -1

    def to_dict(self):
        return {
            'action_id': self.action.action_id, 'action': self.action.name, 'class': self.action.action_class,
            'camera_angle': self.camera_angle, 'limb_width': self.limb_width, 'face_radius': self.face_radius,
            'body_scale': self.body_scale, 'offset': list(self.offset), 'motion_blur': self.motion_blur,
            'props': self.props, 'prop_side': self.prop_side, 'start_time': self.start_time,
            'height': self.height, 'width': self.width, 'fps': self.fps,
        }

    # ------------------------------------------------------------------ geometry

    def joints_at(self, t):
        """(row, col) image positions of the 13 joints at time ``t`` seconds"""
        pose = _rest_pose()
        MOTION_SCRIPTS[self.action.action_id](pose, self.start_time + t)
        body = skeleton_3d(pose, self.body_scale)
        theta = math.radians(self.camera_angle)
        x = body[:, 0] * math.cos(theta) + body[:, 2] * math.sin(theta)
        center_row = 0.56 * self.height + self.offset[0]
        center_col = 0.5 * self.width + self.offset[1]
        return np.stack([center_row - body[:, 1], center_col + x], axis=1)

    def trajectory(self, num_frames=Config.CLIP_FRAMES):
        """T x 13 x 2 joint positions, one per frame"""
        return np.stack([self.joints_at(i / self.fps) for i in range(num_frames)])

    # ------------------------------------------------------------------ rendering

    def _segments(self, joints):
        index = {name: i for i, name in enumerate(JOINT_NAMES)}
        point = lambda name: joints[index[name]]
        neck = 0.5 * (point('left_shoulder') + point('right_shoulder'))
        pelvis = 0.5 * (point('left_hip') + point('right_hip'))
        segments = [(neck, pelvis, self.torso_width), (neck, point('nose'), self.limb_width),
                    (point('left_shoulder'), point('right_shoulder'), self.limb_width),
                    (point('left_hip'), point('right_hip'), self.limb_width)]
        for side in ('left', 'right'):
            for a, b in (('shoulder', 'elbow'), ('elbow', 'hand'), ('hip', 'knee'), ('knee', 'foot')):
                segments.append((point(f'{side}_{a}'), point(f'{side}_{b}'), self.limb_width))
        return segments

    def _coverage(self, joints):
        """Anti-aliased figure coverage in [0, 1]"""
        coverage = np.zeros((self.height, self.width))
        scale = self.body_scale
        shapes = [(a, b, w * scale) for a, b, w in self._segments(joints)]
        nose = joints[JOINT_NAMES.index('nose')]
        shapes.append((nose, nose, 2 * self.head_radius * scale))
        for start, end, width in shapes:
            reach = width / 2 + 1
            top = max(0, int(math.floor(min(start[0], end[0]) - reach)))
            bottom = min(self.height, int(math.ceil(max(start[0], end[0]) + reach)) + 1)
            left = max(0, int(math.floor(min(start[1], end[1]) - reach)))
            right = min(self.width, int(math.ceil(max(start[1], end[1]) + reach)) + 1)
            if top >= bottom or left >= right:
                continue
            rows, cols = np.mgrid[top:bottom, left:right]
            direction = end - start
            length_sq = float(direction @ direction)
            if length_sq > 0:
                along = ((rows - start[0]) * direction[0] + (cols - start[1]) * direction[1]) / length_sq
                along = np.clip(along, 0.0, 1.0)
            else:
                along = np.zeros(rows.shape)
            distance = np.hypot(rows - (start[0] + along * direction[0]), cols - (start[1] + along * direction[1]))
            patch = np.clip(width / 2 + 0.5 - distance, 0.0, 1.0)
            np.maximum(coverage[top:bottom, left:right], patch, out=coverage[top:bottom, left:right])
        if self.face_radius > 0:
            # dark dot on the face so the nose carries its own edge
            rows, cols = np.ogrid[:self.height, :self.width]
            distance = np.hypot(rows - nose[0], cols - nose[1])
            coverage *= 1.0 - np.clip(self.face_radius * scale + 0.5 - distance, 0.0, 1.0)
        return coverage

    def background(self):
        """Static backdrop: flat wall, floor line and an optional door frame"""
        image = np.full((self.height, self.width), float(self.background_level))
        if self.props:
            floor = int(0.92 * self.height)
            image[floor:floor + 2, :] = self.prop_level
            left = int(0.08 * self.width) if self.prop_side < 0 else int(0.80 * self.width)
            right = left + int(0.12 * self.width)
            top = int(0.12 * self.height)
            image[top:floor, left:left + 3] = self.prop_level
            image[top:floor, right - 3:right] = self.prop_level
            image[top:top + 3, left:right] = self.prop_level
        return image

    def render(self, t, backdrop=None):
        """
        Grayscale frame at time ``t``

        With motion blur the figure coverage is averaged over the exposure window
        ending at ``t`` (``motion_blur`` frame periods long).
        """
        backdrop = self.background() if backdrop is None else backdrop
        if self.motion_blur > 0 and self.blur_substeps > 1:
            exposure = self.motion_blur / self.fps
            times = t - exposure * (1.0 - np.arange(self.blur_substeps) / (self.blur_substeps - 1))
            coverage = np.mean([self._coverage(self.joints_at(s)) for s in times], axis=0)
        else:
            coverage = self._coverage(self.joints_at(t))
        image = backdrop * (1.0 - coverage) + self.figure_level * coverage
        return np.clip(np.rint(image), 0, 255).astype(np.uint8)

    def annotation(self, frame_index):
        joints = self.joints_at(frame_index / self.fps)
        inside = ((joints[:, 0] >= 0) & (joints[:, 0] <= self.height - 1)
                  & (joints[:, 1] >= 0) & (joints[:, 1] <= self.width - 1))
        return PoseAnnotation(joints, inside, (self.height, self.width), frame_id=frame_index,
                              camera_id=self.camera_id, action_id=self.action.action_id)


@dataclass
class Clip:
    """Rendered video, emulated sensor frames and ground truth of one scene"""
    scene: SyntheticScene
    gray: np.ndarray
    frames: list
    annotations: list

    @property
    def num_frames(self):
        return len(self.frames)


def generate_clip(scene, seed=None, num_frames=Config.CLIP_FRAMES, sensor=None):
    """
    Render a scene and run the sensor emulator over it

    Args:
        scene (SyntheticScene | int | str): Scene, or an action for ``SyntheticScene.random``
        seed (int, optional): Seed for the random scene when an action is given
        num_frames (int): Frames to render (300 = 10 s at 30 fps)
        sensor (MotionVectorSensor, optional): Emulator; defaults to the standard settings

    Returns:
        Clip: gray (T x H x W uint8), SparseFrames and PoseAnnotations
    """
    if not isinstance(scene, SyntheticScene):
        scene = SyntheticScene.random(scene, seed=Config.SEED if seed is None else seed)
    sensor = sensor or MotionVectorSensor()
    sensor.reset()

    backdrop = scene.background()
    gray = np.empty((num_frames, scene.height, scene.width), dtype=np.uint8)
    frames, annotations = [], []
    for i in range(num_frames):
        gray[i] = scene.render(i / scene.fps, backdrop)
        frames.append(sensor.process(gray[i]))
        annotations.append(scene.annotation(i))

    edge_sparsity = np.mean([f.edge.sparsity() for f in frames]) if frames else 1.0
    mv_sparsity = np.mean([f.mv.sparsity() for f in frames]) if frames else 1.0
    logger.info(f"Generated '{scene.action.name}' at {scene.camera_angle} deg: {num_frames} frames, "
                f"edge sparsity {edge_sparsity:.4f}, MV sparsity {mv_sparsity:.4f}")
    return Clip(scene=scene, gray=gray, frames=frames, annotations=annotations)