import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from sparsepose.errors import ConfigError, ShapeError
from sparsepose.models.params import ConvParams, NormParams

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class LayerConfig:
    """One node of the layer list

    ``level`` is the spatial level of the layer's output (0 = input resolution,
    each strided layer adds one). Layers consume the previous layer's output;
    a concat additionally consumes the output of ``skip_from``.
    """
    name: str
    kind: str
    in_channels: int
    out_channels: int
    kernel: tuple = (1, 1)
    stride: int = 1
    level: int = 0
    skip_from: str = None

    SUBMANIFOLD = 'subm'
    DOWN = 'down'
    UP = 'up'
    NORM = 'norm'
    RELU = 'relu'
    CONCAT = 'concat'
    HEAD = 'head'

    @property
    def has_conv(self):
        return self.kind in (self.SUBMANIFOLD, self.DOWN, self.UP, self.HEAD)

    def to_dict(self):
        data = asdict(self)
        data['kernel'] = list(self.kernel)
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data['kernel'] = tuple(data.get('kernel', (1, 1)))
        return cls(**data)


@dataclass(frozen=True)
class BackboneSpec:
    """Backbone family and its per-level channel widths"""
    name: str
    widths: tuple
    down_levels: int
    convs_per_level: int = 2

    DHP19_LIKE = 'dhp19_like'
    UNET_SMALL = 'unet_small'
    UNET_LARGE = 'unet_large'

    def to_dict(self):
        return {'name': self.name, 'widths': list(self.widths),
                'down_levels': self.down_levels, 'convs_per_level': self.convs_per_level}

    @classmethod
    def from_dict(cls, data):
        return cls(name=data['name'], widths=tuple(data['widths']),
                   down_levels=int(data['down_levels']), convs_per_level=int(data.get('convs_per_level', 2)))

    @classmethod
    def named(cls, name):
        """
        Look up one of the known backbones

        Args:
            name (str): dhp19_like, unet_small or unet_large

        Returns:
            BackboneSpec: The backbone spec
        """
        if name == cls.UNET_SMALL:
            return cls(name, (32, 64, 128, 256), down_levels=3)
        if name == cls.UNET_LARGE:
            return cls(name, (64, 128, 256, 512), down_levels=3)
        if name == cls.DHP19_LIKE:
            return cls(name, (16, 32, 64), down_levels=2, convs_per_level=3)
        raise ConfigError(f"Unknown backbone '{name}'")


@dataclass
class ModelGraph:
    """Ordered layer list with skip wiring and per-layer parameters"""
    spec: BackboneSpec
    input_channels: int
    num_joints: int
    layers: list
    params: dict = field(default_factory=dict)
    dtype: type = np.float32

    def __post_init__(self):
        self.validate()
        if not self.params:
            self.params = self._allocate_params()

    # ------------------------------------------------------------------ wiring

    def validate(self):
        """Check acyclic wiring, level consistency and channel flow"""
        seen = {}
        channels, level = self.input_channels, 0
        down_kernels = {}
        for layer in self.layers:
            if layer.name in seen:
                raise ConfigError(f"Duplicate layer name '{layer.name}'")
            if layer.in_channels != channels and layer.kind != LayerConfig.CONCAT:
                raise ShapeError(f"Layer '{layer.name}' expects {layer.in_channels} channels, receives {channels}")
            if layer.kind == LayerConfig.DOWN:
                if layer.level != level + 1:
                    raise ConfigError(f"Down layer '{layer.name}' must go from level {level} to {level + 1}")
                down_kernels[level] = (layer.kernel, layer.stride)
            elif layer.kind == LayerConfig.UP:
                if layer.level != level - 1:
                    raise ConfigError(f"Up layer '{layer.name}' must go from level {level} to {level - 1}")
                if down_kernels.get(layer.level) != (layer.kernel, layer.stride):
                    raise ConfigError(f"Up layer '{layer.name}' does not mirror a down layer at level {layer.level}")
            elif layer.level != level:
                raise ConfigError(f"Layer '{layer.name}' changes level without resampling")
            elif layer.kind in (LayerConfig.SUBMANIFOLD, LayerConfig.HEAD):
                if any(k % 2 == 0 for k in layer.kernel):
                    raise ConfigError(f"Submanifold layer '{layer.name}' needs an odd kernel")
            if layer.kind == LayerConfig.CONCAT:
                source = seen.get(layer.skip_from)
                if source is None:
                    raise ConfigError(f"Concat '{layer.name}' references unknown or later layer '{layer.skip_from}'")
                if source.level != layer.level:
                    raise ConfigError(f"Skip '{layer.skip_from}' (level {source.level}) cannot feed level {layer.level}")
                if layer.in_channels != channels or layer.out_channels != channels + source.out_channels:
                    raise ShapeError(f"Concat '{layer.name}' channel bookkeeping is inconsistent")
            seen[layer.name] = layer
            channels, level = layer.out_channels, layer.level
        if level != 0:
            raise ConfigError("Graph must end at the input resolution")
        if channels != self.num_joints:
            raise ShapeError(f"Graph emits {channels} channels, expected {self.num_joints} joints")

    @property
    def skip_sources(self):
        return {layer.skip_from for layer in self.layers if layer.kind == LayerConfig.CONCAT}

    @property
    def num_levels(self):
        return max(layer.level for layer in self.layers) + 1

    def layer(self, name):
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    # ------------------------------------------------------------------ parameters

    def _allocate_params(self):
        params = {}
        for layer in self.layers:
            if layer.has_conv:
                kh, kw = layer.kernel
                params[layer.name] = ConvParams.zeros(kh, kw, layer.in_channels, layer.out_channels, dtype=self.dtype)
            elif layer.kind == LayerConfig.NORM:
                params[layer.name] = NormParams(layer.out_channels, dtype=self.dtype)
        return params

    def parameter_count(self):
        """Trainable parameters (conv weights and biases, norm scale and shift)"""
        return int(sum(p.num_parameters() for p in self.params.values()))

    def parameter_report(self):
        """Per-layer parameter counts in layer order"""
        return [(layer.name, layer.kind, self.params[layer.name].num_parameters())
                for layer in self.layers if layer.name in self.params]

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def is_finite(self):
        return all(p.is_finite() for p in self.params.values())

    def describe(self):
        return {
            'backbone': self.spec.to_dict(),
            'input_channels': self.input_channels,
            'num_joints': self.num_joints,
            'dtype': np.dtype(self.dtype).name,
            'layers': [layer.to_dict() for layer in self.layers],
        }
