"""Sequential network container with cached-forward / backward semantics."""

import numpy as np

from .layers import Conv2d, Dense, Flatten, Relu, layer_from_config


class Network:
    """Ordered stack of layers sharing one forward/backward lifecycle.

    Parameters live in float32. Forward with ``cache=True`` stores the
    per-layer activations that ``backward`` consumes (and clears). Inference
    passes should use ``cache=False``, which also makes concurrent read-only
    forwards on a shared instance safe.
    """

    def __init__(self, layers):
        self.layers = list(layers)
        self._forward_cached = False

    def forward(self, x, cache=True):
        for layer in self.layers:
            x = layer.forward(x, cache=cache)
        self._forward_cached = cache
        return x

    def backward(self, grad_out):
        """Accumulate parameter gradients; returns the input gradient."""
        if not self._forward_cached:
            raise RuntimeError("backward called before a cached forward pass")
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        self._forward_cached = False
        return grad_out

    def parameters(self):
        return [p for layer in self.layers for p in layer.params]

    def gradients(self):
        return [g for layer in self.layers for g in layer.grads]

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def output_shape(self, in_shape):
        shape = tuple(in_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def copy(self, dtype=None):
        """Deep copy; optionally casting parameters (float64 copies are used
        by finite-difference tests)."""
        layers = [layer_from_config(l.tag, l.config()) for l in self.layers]
        net = Network(layers)
        for dst, src in zip(net.parameters(), self.parameters()):
            dst[...] = src
        if dtype is not None:
            for layer in net.layers:
                layer.params = [p.astype(dtype) for p in layer.params]
                layer.grads = [np.zeros_like(p) for p in layer.params]
        return net


def sequential(spec, rng):
    """Build a network from a compact layer spec list.

    Entries: ("conv", in_c, out_c, k, stride, pad), ("dense", in_f, out_f),
    ("relu",), ("flatten",).
    """
    layers = []
    for entry in spec:
        kind = entry[0]
        if kind == "conv":
            _, in_c, out_c, k, s, p = entry
            layers.append(Conv2d(in_c, out_c, k, stride=s, padding=p, rng=rng))
        elif kind == "dense":
            _, in_f, out_f = entry
            layers.append(Dense(in_f, out_f, rng=rng))
        elif kind == "relu":
            layers.append(Relu())
        elif kind == "flatten":
            layers.append(Flatten())
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    return Network(layers)
