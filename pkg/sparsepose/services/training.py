import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from config.settings import Config
from sparsepose.errors import ConfigError, DivergenceError
from sparsepose.models.graph import LayerConfig
from sparsepose.services.heatmaps import mse_loss, reachable_floor
from sparsepose.services.model import SparseExecutor

logger = logging.getLogger(__name__)

LR_SCHEDULES = ('constant', 'step', 'cosine')

@dataclass
class TrainConfig:
    """Optimizer and schedule settings"""
    learning_rate: float = Config.LEARNING_RATE
    momentum: float = Config.SGD_MOMENTUM
    batch_size: int = Config.BATCH_SIZE
    steps: int = Config.TRAIN_STEPS
    lr_schedule: str = Config.LR_SCHEDULE
    warmup_steps: int = Config.WARMUP_STEPS
    lr_decay_every: int = Config.LR_DECAY_EVERY
    lr_decay_factor: float = Config.LR_DECAY_FACTOR
    recalibrate_norms: bool = Config.RECALIBRATE_NORMS
    seed: int = Config.SEED
    log_every: int = Config.LOG_EVERY

    def validate(self):
        if self.learning_rate < 0:
            raise ConfigError("Learning rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("Momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.steps < 0:
            raise ConfigError("Batch size must be >= 1 and steps >= 0")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"Unknown learning-rate schedule '{self.lr_schedule}', expected one of {LR_SCHEDULES}")
        if self.warmup_steps < 0:
            raise ConfigError("Warmup steps must be >= 0")
        if self.lr_decay_every < 0 or self.lr_decay_factor <= 0:
            raise ConfigError("Invalid learning-rate decay schedule")

    def learning_rate_at(self, step):
        """
        Learning rate of one step

        A linear warmup over the first ``warmup_steps`` steps precedes the
        schedule: constant, step decay every ``lr_decay_every`` steps, or a
        cosine decay to zero over the remaining steps.
        """
        if step < self.warmup_steps:
            return self.learning_rate * (step + 1) / self.warmup_steps
        if self.lr_schedule == 'step' and self.lr_decay_every:
            return self.learning_rate * self.lr_decay_factor ** ((step - self.warmup_steps) // self.lr_decay_every)
        if self.lr_schedule == 'cosine':
            span = max(self.steps - self.warmup_steps, 1)
            progress = min((step - self.warmup_steps) / span, 1.0)
            return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))
        return self.learning_rate

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    """Loss curve and schedule of one training run"""
    losses: list = field(default_factory=list)
    learning_rates: list = field(default_factory=list)
    floor: float = 0.0

    @property
    def initial_loss(self):
        return self.losses[0] if self.losses else None

    @property
    def final_loss(self):
        return self.losses[-1] if self.losses else None

    @property
    def max_reduction(self):
        """Largest raw reduction a head confined to active sites can reach"""
        if not self.losses or self.initial_loss <= 0:
            return 0.0
        return max(0.0, 1.0 - self.floor / self.initial_loss)

    def reduction(self, against_floor=False):
        """Fraction of the initial loss removed (optionally above the reachable floor)"""
        if not self.losses:
            return 0.0
        floor = self.floor if against_floor else 0.0
        span = self.initial_loss - floor
        return (self.initial_loss - self.final_loss) / span if span > 0 else 0.0


class SGDMomentum:
    """Plain SGD with heavy-ball momentum over every trainable array of a graph"""

    def __init__(self, graph, learning_rate, momentum):
        self.graph = graph
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = {}
        for name, p in graph.params.items():
            for key, grad in p.gradients().items():
                self.velocity[(name, key)] = np.zeros_like(grad)

    def step(self):
        for name, p in self.graph.params.items():
            arrays = p.arrays()
            for key, grad in p.gradients().items():
                velocity = self.velocity[(name, key)]
                velocity *= self.momentum
                velocity += grad
                if self.learning_rate:
                    arrays[key] -= (self.learning_rate * velocity).astype(arrays[key].dtype)


def _batches(samples, batch_size):
    for start in range(0, len(samples), batch_size):
        yield samples[start:start + batch_size]

def recalibrate_norms(graph, samples, batch_size=Config.BATCH_SIZE):
    """
    Replace the running statistics of every norm layer with the average batch
    statistics over ``samples``

    Weights are left untouched. Batches are taken in order and the stored
    variance is the batch (biased) one, so a sample set no larger than
    ``batch_size`` makes inference reproduce the training-mode output exactly.
    """
    samples = list(samples)
    if not samples:
        return
    executor = SparseExecutor(graph)
    totals = {}
    for batch in _batches(samples, batch_size):
        _, record = executor.run([s.x for s in batch], training=True, record=True, update_stats=False)
        for layer, ctx in record.tape:
            if layer.kind == LayerConfig.NORM and ctx['batch_stats']:
                mean, var, count = totals.get(layer.name, (0.0, 0.0, 0))
                totals[layer.name] = (mean + ctx['mean'], var + ctx['var'], count + 1)
    for name, (mean, var, count) in totals.items():
        p = graph.params[name]
        p.running_mean[...] = mean / count
        p.running_var[...] = var / count
    logger.debug(f"Recalibrated {len(totals)} norm layers on {len(samples)} samples")

def train(graph, samples, config=None, on_step=None):
    """
    Train a graph on prepared samples with SGD + momentum

    Mini-batches are drawn from a seeded permutation per epoch. The loss is the
    mean squared error over every heatmap element of the batch. Steps with a zero
    learning rate leave every array of the graph, running statistics included,
    unchanged.

    Args:
        graph (ModelGraph): Model, updated in place
        samples (list): Sample objects
        config (TrainConfig, optional): Optimizer settings
        on_step (callable, optional): Called as on_step(step, loss, learning_rate)

    Returns:
        TrainResult: Per-step losses and learning rates
    """
    config = config or TrainConfig()
    config.validate()
    if not samples:
        raise ConfigError("Training needs at least one sample")

    rng = np.random.default_rng(config.seed)
    executor = SparseExecutor(graph)
    optimizer = SGDMomentum(graph, config.learning_rate, config.momentum)
    result = TrainResult()
    result.floor = reachable_floor((s.x, s.target()) for s in samples)
    order, cursor = rng.permutation(len(samples)), 0
    batch_size = min(config.batch_size, len(samples))

    logger.info(f"Training {graph.spec.name} on {len(samples)} samples for {config.steps} steps "
                f"(lr {config.learning_rate} {config.lr_schedule}, warmup {config.warmup_steps}, "
                f"momentum {config.momentum}, batch {config.batch_size}, seed {config.seed})")
    for step in range(config.steps):
        batch = []
        while len(batch) < batch_size:
            if cursor == len(order):
                order, cursor = rng.permutation(len(samples)), 0
            batch.append(samples[order[cursor]])
            cursor += 1

        learning_rate = config.learning_rate_at(step)
        graph.zero_grad()
        outputs, record = executor.run([s.x for s in batch], training=True, record=True,
                                       update_stats=learning_rate > 0)
        predictions = np.stack([out.to_dense() for out in outputs])
        targets = np.stack([s.target((s.x.height, s.x.width)) for s in batch])
        loss, grad = mse_loss(predictions, targets)
        if not np.isfinite(loss):
            raise DivergenceError(f"Non-finite loss at step {step} (learning rate {learning_rate})")
        executor.backward(record, list(grad))

        optimizer.learning_rate = learning_rate
        optimizer.step()
        if not graph.is_finite():
            raise DivergenceError(f"Parameters became non-finite at step {step} (learning rate {learning_rate})")

        result.losses.append(loss)
        result.learning_rates.append(learning_rate)
        logger.debug(f"step {step}: loss {loss:.6e} lr {learning_rate:.4g}")
        if config.log_every and (step % config.log_every == 0 or step == config.steps - 1):
            logger.info(f"step {step}/{config.steps}: loss {loss:.6e}")
        if on_step is not None:
            on_step(step, loss, learning_rate)

    if config.recalibrate_norms and any(result.learning_rates):
        recalibrate_norms(graph, samples, batch_size)

    if result.losses:
        logger.info(f"Training finished: loss {result.initial_loss:.6e} -> {result.final_loss:.6e} "
                    f"(reachable floor {result.floor:.6e}, {result.reduction():.2%} of "
                    f"{result.max_reduction:.2%} attainable)")
    return result
