import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

class Config:
    """Base configuration for the engine, emulator and pipeline"""
    # Output path (the only setting an environment variable may override)
    RUN_DIR = os.environ.get('SPARSEPOSE_RUN_DIR', './runs')

    # Logging
    LOG_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'

    # Sensor geometry
    NATIVE_HEIGHT = 480
    NATIVE_WIDTH = 640
    FPS = 30
    CLIP_SECONDS = 10
    CLIP_FRAMES = FPS * CLIP_SECONDS

    # Value ranges of the sensor channels
    EDGE_MIN, EDGE_MAX = 0, 255
    MV_MIN, MV_MAX = -128, 128

    # Edge extraction (Canny-like, thresholds on 0-255 gradient magnitude)
    EDGE_LOW_THRESHOLD = 40.0
    EDGE_HIGH_THRESHOLD = 100.0
    EDGE_SMOOTHING_SIGMA = 1.0

    # Motion vectors: block matching
    MV_BLOCK_SIZE = 8
    MV_SEARCH_RADIUS = 8
    MV_SCALE = 16  # units per pixel/frame; +-8 px/frame saturates the range
    MV_MIN_EDGE_PIXELS = 2

    # Network input and heatmaps
    INPUT_HEIGHT = 288
    INPUT_WIDTH = 384
    NUM_JOINTS = 13
    HEATMAP_SIGMA = 4.0
    HEATMAP_TRUNCATE = 3.0

    # Speed classes in native pixels per frame
    SPEED_SLOW_BELOW = 4.0
    SPEED_FAST_ABOVE = 6.0

    # Normalization layers
    NORM_EPSILON = 1e-5
    NORM_MOMENTUM = 0.1

    # Training (plain SGD with momentum)
    LEARNING_RATE = 10.0
    SGD_MOMENTUM = 0.9
    BATCH_SIZE = 4
    TRAIN_STEPS = 500
    LR_SCHEDULE = 'cosine'  # constant, step or cosine
    WARMUP_STEPS = 25
    LR_DECAY_EVERY = 0  # step schedule only; 0 disables the decay
    LR_DECAY_FACTOR = 0.5
    RECALIBRATE_NORMS = True
    LOG_EVERY = 25
    SEED = 0

    # Benchmarks
    BENCH_WARMUP = 5
    BENCH_REPETITIONS = 30
    BENCH_AGREEMENT_TOLERANCE = 1e-4
    BENCH_SPARSITY_SWEEP = (0.0, 0.5, 0.9, 0.9623, 0.9913)

    # Known choices
    BACKBONES = ('dhp19_like', 'unet_small', 'unet_large')
    MODALITIES = ('edge', 'mv', 'fusion', 'grayscale')
    CONV_MODES = ('dense', 'sparse')
    MODALITY_CHANNELS = {'edge': 1, 'mv': 2, 'fusion': 3, 'grayscale': 1}
