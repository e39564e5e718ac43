import logging
from dataclasses import dataclass, asdict, fields

from config.settings import Config
from sparsepose.errors import ConfigError
from sparsepose.models.pose import get_action

logger = logging.getLogger(__name__)

@dataclass
class RunConfig:
    """Settings of one CLI run, built from flags over Config defaults"""
    command: str
    run_dir: str = Config.RUN_DIR
    backbone: str = 'unet_small'
    modality: str = 'fusion'
    conv_mode: str = 'sparse'
    seed: int = Config.SEED

    # Inputs
    input: str = None
    annotations: str = None
    gray: str = None
    weights: tuple = ()
    split: str = None
    split_name: str = 'test'

    # Synthetic generation
    action: str = 'jog_in_place'
    camera_angle: float = None
    num_frames: int = Config.CLIP_FRAMES
    motion_blur: float = 0.0
    save_gray: bool = False
    test_fraction: float = 0.2

    # Sensor emulation
    edge_low: float = Config.EDGE_LOW_THRESHOLD
    edge_high: float = Config.EDGE_HIGH_THRESHOLD
    edge_sigma: float = Config.EDGE_SMOOTHING_SIGMA
    mv_block: int = Config.MV_BLOCK_SIZE
    mv_radius: int = Config.MV_SEARCH_RADIUS
    mv_scale: int = Config.MV_SCALE

    # Training
    learning_rate: float = Config.LEARNING_RATE
    momentum: float = Config.SGD_MOMENTUM
    batch_size: int = Config.BATCH_SIZE
    steps: int = Config.TRAIN_STEPS
    lr_schedule: str = Config.LR_SCHEDULE
    warmup_steps: int = Config.WARMUP_STEPS
    lr_decay_every: int = Config.LR_DECAY_EVERY
    lr_decay_factor: float = Config.LR_DECAY_FACTOR
    recalibrate_norms: bool = Config.RECALIBRATE_NORMS

    # Inference and benchmarking
    dump_heatmaps: bool = False
    bench_backbones: tuple = Config.BACKBONES
    bench_frames: int = 4
    warmup: int = Config.BENCH_WARMUP
    repetitions: int = Config.BENCH_REPETITIONS
    sweep: bool = False

    @property
    def input_channels(self):
        return Config.MODALITY_CHANNELS[self.modality]

    def validate(self):
        """
        Reject inconsistent settings before any work starts

        Raises:
            ConfigError: Unknown names, grayscale in sparse mode, bad numeric ranges
        """
        if self.backbone not in Config.BACKBONES:
            raise ConfigError(f"Unknown backbone '{self.backbone}' (choose from {', '.join(Config.BACKBONES)})")
        for name in self.bench_backbones:
            if name not in Config.BACKBONES:
                raise ConfigError(f"Unknown benchmark backbone '{name}'")
        if self.modality not in Config.MODALITIES:
            raise ConfigError(f"Unknown modality '{self.modality}' (choose from {', '.join(Config.MODALITIES)})")
        if self.conv_mode not in Config.CONV_MODES:
            raise ConfigError(f"Unknown conv mode '{self.conv_mode}'")
        if self.modality == 'grayscale' and self.conv_mode == 'sparse':
            raise ConfigError("Grayscale input has no sparse convolution mode; use --conv-mode dense")
        get_action(self.action)
        if self.num_frames < 1:
            raise ConfigError("num_frames must be >= 1")
        if not 0 <= self.motion_blur <= 1:
            raise ConfigError("motion_blur must lie in [0, 1]")
        if not 0 <= self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in [0, 1)")
        if self.edge_low < 0 or self.edge_high < self.edge_low:
            raise ConfigError("Edge thresholds need 0 <= low <= high")
        if self.mv_block < 1 or self.mv_radius < 0 or self.mv_scale <= 0:
            raise ConfigError("Invalid block-matching settings")
        if self.bench_frames < 1:
            raise ConfigError("bench_frames must be >= 1")
        return self

    def to_dict(self):
        data = asdict(self)
        data['weights'] = list(self.weights)
        data['bench_backbones'] = list(self.bench_backbones)
        return data

    @classmethod
    def from_options(cls, command, **options):
        """Build from CLI options, ignoring unset (None) values"""
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in options.items() if k in known and v is not None}
        return cls(command=command, **values)

    def log(self):
        logger.info(f"Run '{self.command}' (seed {self.seed}) with config: {self.to_dict()}")
