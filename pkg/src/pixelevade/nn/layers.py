"""Layer primitives: conv2d, dense, relu, flatten.

Each layer owns float32 parameters and mirrored gradient buffers. Forward
passes optionally cache the activations needed for backward; a backward call
without a cached forward is rejected. All math is dtype-generic so tests can
run the identical code path in float64.
"""

import numpy as np

from .errors import ShapeError


def he_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Layer:
    """Base layer: parameter/gradient bookkeeping and cache lifecycle."""

    tag = None  # checkpoint layer-type tag, set by subclasses
    name = "layer"

    def __init__(self):
        self.params = []
        self.grads = []
        self._cache = None

    def forward(self, x, cache=True):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise RuntimeError(
                f"backward called on {self.name} without a cached forward pass"
            )
        cache = self._cache
        self._cache = None
        return cache

    def zero_grads(self):
        for g in self.grads:
            g[...] = 0.0

    def config(self):
        """Integer config values persisted in checkpoints."""
        return []


class Conv2d(Layer):
    """Direct (non-FFT) 2-D correlation with explicit zero padding.

    Input (N, C, H, W), kernel (F, C, k, k), output (N, F, Ho, Wo) with
    Ho = (H + 2p - k)//s + 1. Implemented via im2col so the inner product
    runs as a single GEMM.
    """

    tag = 1
    name = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 padding=0, rng=None):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        if rng is None:
            rng = np.random.default_rng(0)
        w = he_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in)
        b = np.zeros(out_channels, dtype=np.float32)
        self.params = [w, b]
        self.grads = [np.zeros_like(w), np.zeros_like(b)]

    def config(self):
        return [self.in_channels, self.out_channels, self.kernel_size,
                self.stride, self.padding]

    def _check_input(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"conv2d expects input (N, {self.in_channels}, H, W), got {x.shape}"
            )
        k, s, p = self.kernel_size, self.stride, self.padding
        if x.shape[2] + 2 * p < k or x.shape[3] + 2 * p < k:
            raise ShapeError(
                f"conv2d kernel {k} does not fit padded input of shape {x.shape}"
            )

    def _im2col(self, x):
        k, s, p = self.kernel_size, self.stride, self.padding
        n, c, h, w = x.shape
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        ho = (h + 2 * p - k) // s + 1
        wo = (w + 2 * p - k) // s + 1
        windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        windows = windows[:, :, ::s, ::s]  # (N, C, Ho, Wo, k, k)
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        return np.ascontiguousarray(cols), ho, wo

    def forward(self, x, cache=True):
        self._check_input(x)
        w, b = self.params
        dtype = x.dtype
        cols, ho, wo = self._im2col(x)
        wmat = w.reshape(self.out_channels, -1).astype(dtype, copy=False)
        out = cols @ wmat.T + b.astype(dtype, copy=False)
        out = out.reshape(x.shape[0], ho, wo, self.out_channels).transpose(0, 3, 1, 2)
        if cache:
            self._cache = (cols, x.shape, ho, wo)
        return np.ascontiguousarray(out)

    def backward(self, grad_out):
        cols, x_shape, ho, wo = self._take_cache()
        n, c, h, w_in = x_shape
        k, s, p = self.kernel_size, self.stride, self.padding
        f = self.out_channels
        dmat = grad_out.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
        dmat = np.ascontiguousarray(dmat)
        dw = (dmat.T @ cols).reshape(self.params[0].shape)
        db = dmat.sum(axis=0)
        self.grads[0] += dw.astype(np.float32)
        self.grads[1] += db.astype(np.float32)

        wmat = self.params[0].reshape(f, -1).astype(grad_out.dtype, copy=False)
        dcols = dmat @ wmat  # (N*Ho*Wo, C*k*k)
        dcols = dcols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 4, 5, 1, 2)
        dx_pad = np.zeros((n, c, h + 2 * p, w_in + 2 * p), dtype=grad_out.dtype)
        for i in range(k):
            for j in range(k):
                dx_pad[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, i, j]
        if p:
            return dx_pad[:, :, p:p + h, p:p + w_in]
        return dx_pad

    def output_shape(self, in_shape):
        c, h, w = in_shape
        k, s, p = self.kernel_size, self.stride, self.padding
        return (self.out_channels, (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)


class Dense(Layer):
    """Affine layer y = x W^T + b with W shaped (out_features, in_features)."""

    tag = 2
    name = "dense"

    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        if rng is None:
            rng = np.random.default_rng(0)
        w = he_uniform(rng, (out_features, in_features), in_features)
        b = np.zeros(out_features, dtype=np.float32)
        self.params = [w, b]
        self.grads = [np.zeros_like(w), np.zeros_like(b)]

    def config(self):
        return [self.in_features, self.out_features]

    def forward(self, x, cache=True):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"dense expects input (N, {self.in_features}), got {x.shape}"
            )
        w, b = self.params
        dtype = x.dtype
        out = x @ w.T.astype(dtype, copy=False) + b.astype(dtype, copy=False)
        if cache:
            self._cache = x
        return out

    def backward(self, grad_out):
        x = self._take_cache()
        self.grads[0] += (grad_out.T @ x).astype(np.float32)
        self.grads[1] += grad_out.sum(axis=0).astype(np.float32)
        return grad_out @ self.params[0].astype(grad_out.dtype, copy=False)

    def output_shape(self, in_shape):
        return (self.out_features,)


class Relu(Layer):
    tag = 3
    name = "relu"

    def forward(self, x, cache=True):
        out = np.maximum(x, 0)
        if cache:
            self._cache = x > 0
        return out

    def backward(self, grad_out):
        mask = self._take_cache()
        return grad_out * mask

    def output_shape(self, in_shape):
        return in_shape


class Flatten(Layer):
    tag = 4
    name = "flatten"

    def forward(self, x, cache=True):
        if cache:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        shape = self._take_cache()
        return grad_out.reshape(shape)

    def output_shape(self, in_shape):
        n = 1
        for d in in_shape:
            n *= d
        return (n,)


LAYER_TYPES = {cls.tag: cls for cls in (Conv2d, Dense, Relu, Flatten)}


def layer_from_config(tag, config, rng=None):
    cls = LAYER_TYPES.get(tag)
    if cls is None:
        raise ValueError(f"unknown layer tag {tag}")
    if cls is Conv2d:
        in_c, out_c, k, s, p = config
        return Conv2d(in_c, out_c, k, stride=s, padding=p, rng=rng)
    if cls is Dense:
        in_f, out_f = config
        return Dense(in_f, out_f, rng=rng)
    return cls()
