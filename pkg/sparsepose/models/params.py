import numpy as np

from config.settings import Config
from sparsepose.errors import ShapeError

class ConvParams:
    """Convolution weights (kh x kw x Cin x Cout), bias (Cout) and gradient buffers"""

    def __init__(self, weight, bias=None):
        """
        Initialize convolution parameters

        Args:
            weight (np.ndarray): kh x kw x Cin x Cout weights
            bias (np.ndarray, optional): Cout biases. Defaults to zeros.
        """
        weight = np.asarray(weight)
        if weight.ndim != 4:
            raise ShapeError(f"Convolution weight must be kh x kw x Cin x Cout, got shape {weight.shape}")
        self.weight = weight
        self.bias = np.zeros(weight.shape[3], dtype=weight.dtype) if bias is None else np.asarray(bias, dtype=weight.dtype)
        if self.bias.shape != (weight.shape[3],):
            raise ShapeError(f"Bias shape {self.bias.shape} does not match {weight.shape[3]} output channels")
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    @classmethod
    def zeros(cls, kernel_height, kernel_width, in_channels, out_channels, dtype=np.float32):
        return cls(np.zeros((kernel_height, kernel_width, in_channels, out_channels), dtype=dtype))

    @property
    def kernel_height(self):
        return self.weight.shape[0]

    @property
    def kernel_width(self):
        return self.weight.shape[1]

    @property
    def in_channels(self):
        return self.weight.shape[2]

    @property
    def out_channels(self):
        return self.weight.shape[3]

    @property
    def dtype(self):
        return self.weight.dtype

    def flat_weight(self):
        """Weights as (kh * kw, Cin, Cout), offset ordinal first"""
        return self.weight.reshape(-1, self.in_channels, self.out_channels)

    def arrays(self):
        return {'weight': self.weight, 'bias': self.bias}

    def gradients(self):
        return {'weight': self.grad_weight, 'bias': self.grad_bias}

    def zero_grad(self):
        self.grad_weight[...] = 0
        self.grad_bias[...] = 0

    def num_parameters(self):
        return int(self.weight.size + self.bias.size)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias)))


class NormParams:
    """Per-channel normalization: scale, shift, running statistics and gradient buffers"""

    def __init__(self, channels, epsilon=Config.NORM_EPSILON, momentum=Config.NORM_MOMENTUM, dtype=np.float32):
        """
        Initialize normalization parameters

        Args:
            channels (int): Number of channels
            epsilon (float): Variance floor, must be > 0
            momentum (float): Running-statistics update rate
            dtype: Floating point type of all buffers
        """
        if epsilon <= 0:
            raise ValueError("Normalization epsilon must be > 0")
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.epsilon = epsilon
        self.momentum = momentum
        self.grad_gamma = np.zeros_like(self.gamma)
        self.grad_beta = np.zeros_like(self.beta)

    @property
    def channels(self):
        return self.gamma.shape[0]

    @property
    def dtype(self):
        return self.gamma.dtype

    def arrays(self):
        return {'gamma': self.gamma, 'beta': self.beta,
                'running_mean': self.running_mean, 'running_var': self.running_var}

    def gradients(self):
        return {'gamma': self.grad_gamma, 'beta': self.grad_beta}

    def zero_grad(self):
        self.grad_gamma[...] = 0
        self.grad_beta[...] = 0

    def num_parameters(self):
        """Trainable parameters only (running statistics are buffers)"""
        return int(self.gamma.size + self.beta.size)

    def is_finite(self):
        return bool(all(np.all(np.isfinite(a)) for a in self.arrays().values()))
