"""Classical layers with explicit forward and backward passes.

Feature maps are numpy arrays shaped ``(batch, channels, height, width)``.
The functional kernels (``conv2d_forward`` etc.) are pure; the
:class:`Layer` subclasses wrap them, cache what the backward pass needs,
and expose their parameters by name so a model can lay them out in one
flat vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ConfigurationError, ShapeError, StateError

Shape = Tuple[int, int, int]


def conv_output_size(size: int, window: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - window
    if span < 0:
        raise ShapeError(f"window {window} larger than padded input {size + 2 * padding}")
    return span // stride + 1


def _pad(x, padding):
    if not padding:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(xp, kh, kw, stride):
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def _scatter_windows(dcols, padded_shape, stride):
    """Inverse of :func:`_windows`: accumulate (N, C, Ho, Wo, kh, kw) into a padded map."""
    _, _, ho, wo, kh, kw = dcols.shape
    out = np.zeros(padded_shape)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[..., i, j]
    return out


def _crop(xp, padding):
    if not padding:
        return xp
    return xp[:, :, padding:-padding, padding:-padding]


# -- functional kernels --------------------------------------------------------


def conv2d_forward(x, weight, bias, stride: int = 1, padding: int = 0):
    """Cross-correlation with zero padding. ``weight`` is ``(out, in, kh, kw)``."""
    x = np.asarray(x, dtype=float)
    out_c, in_c, kh, kw = weight.shape
    if x.ndim != 4 or x.shape[1] != in_c:
        raise ShapeError(f"conv expects (N, {in_c}, H, W) input, got {x.shape}")
    conv_output_size(x.shape[2], kh, stride, padding)
    conv_output_size(x.shape[3], kw, stride, padding)
    cols = _windows(_pad(x, padding), kh, kw, stride)
    return np.einsum("nchwij,ocij->nohw", cols, weight, optimize=True) + bias[None, :, None, None]


def conv2d_backward(grad, x, weight, stride: int = 1, padding: int = 0):
    """Returns ``(dx, dweight, dbias)``."""
    kh, kw = weight.shape[2:]
    xp = _pad(x, padding)
    cols = _windows(xp, kh, kw, stride)
    dweight = np.einsum("nohw,nchwij->ocij", grad, cols, optimize=True)
    dbias = grad.sum(axis=(0, 2, 3))
    dcols = np.einsum("nohw,ocij->nchwij", grad, weight, optimize=True)
    dx = _crop(_scatter_windows(dcols, xp.shape, stride), padding)
    return dx, dweight, dbias


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(grad, x):
    return grad * (x > 0)


def maxpool2x2_forward(x):
    """2x2 max pooling, stride 2, ceil mode.

    An odd trailing row/column forms a partial window. Returns the pooled
    map and, per output cell, the flat index (row-major within the window)
    of the winning input; ties go to the first occurrence.
    """
    n, c, h, w = x.shape
    ho, wo = -(-h // 2), -(-w // 2)
    padded = np.full((n, c, 2 * ho, 2 * wo), -np.inf)
    padded[:, :, :h, :w] = x
    blocks = padded.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    argmax = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0], argmax


def maxpool2x2_backward(grad, argmax, input_shape):
    n, c, h, w = input_shape
    ho, wo = grad.shape[2:]
    blocks = np.zeros((n, c, ho, wo, 4))
    np.put_along_axis(blocks, argmax[..., None], grad[..., None], axis=-1)
    full = blocks.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
    return full[:, :, :h, :w]


def _adaptive_bounds(size, out):
    return [((i * size) // out, -(-((i + 1) * size) // out)) for i in range(out)]


def adaptive_avg_pool_forward(x, output_size: Tuple[int, int]):
    """Average over a grid of (possibly overlapping) cells covering the input."""
    n, c, h, w = x.shape
    oh, ow = output_size
    out = np.empty((n, c, oh, ow))
    for i, (r0, r1) in enumerate(_adaptive_bounds(h, oh)):
        for j, (c0, c1) in enumerate(_adaptive_bounds(w, ow)):
            out[:, :, i, j] = x[:, :, r0:r1, c0:c1].mean(axis=(2, 3))
    return out


def adaptive_avg_pool_backward(grad, input_shape):
    h, w = input_shape[2:]
    oh, ow = grad.shape[2:]
    dx = np.zeros(input_shape)
    for i, (r0, r1) in enumerate(_adaptive_bounds(h, oh)):
        for j, (c0, c1) in enumerate(_adaptive_bounds(w, ow)):
            area = (r1 - r0) * (c1 - c0)
            dx[:, :, r0:r1, c0:c1] += grad[:, :, i, j][:, :, None, None] / area
    return dx


def fully_connected_forward(x, weight, bias):
    return x @ weight.T + bias


def fully_connected_backward(grad, x, weight):
    """Returns ``(dx, dweight, dbias)``."""
    return grad @ weight, grad.T @ x, grad.sum(axis=0)


# -- layer objects -------------------------------------------------------------


def uniform_fan_in(rng, shape, fan_in):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    """Base class for graph nodes.

    Subclasses set ``name`` and implement :meth:`output_shape`,
    :meth:`forward` and :meth:`backward`. Parameterized layers also
    override :meth:`param_shapes` and :meth:`init_params`.
    """

    name = "layer"
    quantum = False

    def __init__(self):
        self._cache = None

    def param_shapes(self) -> Dict[str, tuple]:
        return {}

    def init_params(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        return {}

    def output_shape(self, in_shape: Shape) -> Shape:
        raise NotImplementedError

    def forward(self, x, params: Dict[str, np.ndarray], rng=None):
        raise NotImplementedError

    def backward(self, grad):
        """Return ``(grad_input, {param_name: grad})``."""
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        return self._cache

    def clear(self):
        self._cache = None

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    window: Tuple[int, int] = (3, 3)
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(self.window))
        if self.window not in ((1, 1), (2, 2), (3, 3)):
            raise ConfigurationError(f"unsupported conv window {self.window}")
        if self.stride < 1 or self.padding < 0:
            raise ConfigurationError("stride must be >= 1 and padding >= 0")


class Conv2d(Layer):
    def __init__(self, name: str, spec: ConvSpec):
        super().__init__()
        self.name = name
        self.spec = spec

    def param_shapes(self):
        s = self.spec
        return {"weight": (s.out_channels, s.in_channels) + s.window, "bias": (s.out_channels,)}

    def init_params(self, rng):
        s = self.spec
        fan_in = s.in_channels * s.window[0] * s.window[1]
        return {name: uniform_fan_in(rng, shape, fan_in) for name, shape in self.param_shapes().items()}

    def output_shape(self, in_shape):
        c, h, w = in_shape
        s = self.spec
        if c != s.in_channels:
            raise ConfigurationError(f"{self.name}: expects {s.in_channels} channels, got {c}")
        return (
            s.out_channels,
            conv_output_size(h, s.window[0], s.stride, s.padding),
            conv_output_size(w, s.window[1], s.stride, s.padding),
        )

    def forward(self, x, params, rng=None):
        self._cache = (x, params["weight"])
        return conv2d_forward(x, params["weight"], params["bias"], self.spec.stride, self.spec.padding)

    def backward(self, grad):
        x, weight = self._cached()
        dx, dw, db = conv2d_backward(grad, x, weight, self.spec.stride, self.spec.padding)
        return dx, {"weight": dw, "bias": db}


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        super().__init__()
        self.name = name

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x, params, rng=None):
        self._cache = x
        return relu(x)

    def backward(self, grad):
        return relu_backward(grad, self._cached()), {}


class MaxPool2x2(Layer):
    def __init__(self, name: str = "maxpool"):
        super().__init__()
        self.name = name

    def output_shape(self, in_shape):
        c, h, w = in_shape
        return (c, -(-h // 2), -(-w // 2))

    def forward(self, x, params, rng=None):
        out, argmax = maxpool2x2_forward(x)
        self._cache = (argmax, x.shape)
        return out

    def backward(self, grad):
        argmax, shape = self._cached()
        return maxpool2x2_backward(grad, argmax, shape), {}


class AdaptiveAvgPool(Layer):
    def __init__(self, name: str, output_size: Tuple[int, int]):
        super().__init__()
        self.name = name
        self.output_size = tuple(output_size)

    def output_shape(self, in_shape):
        return (in_shape[0],) + self.output_size

    def forward(self, x, params, rng=None):
        self._cache = x.shape
        return adaptive_avg_pool_forward(x, self.output_size)

    def backward(self, grad):
        return adaptive_avg_pool_backward(grad, self._cached()), {}


class Flatten(Layer):
    def __init__(self, name: str = "flatten"):
        super().__init__()
        self.name = name

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, params, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cached()), {}


class FullyConnected(Layer):
    def __init__(self, name: str, in_features: int, out_features: int):
        super().__init__()
        self.name = name
        self.in_features = in_features
        self.out_features = out_features

    def param_shapes(self):
        return {"weight": (self.out_features, self.in_features), "bias": (self.out_features,)}

    def init_params(self, rng):
        return {k: uniform_fan_in(rng, s, self.in_features) for k, s in self.param_shapes().items()}

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ConfigurationError(f"{self.name}: expects {self.in_features} features, got {in_shape}")
        return (self.out_features,)

    def forward(self, x, params, rng=None):
        self._cache = (x, params["weight"])
        return fully_connected_forward(x, params["weight"], params["bias"])

    def backward(self, grad):
        x, weight = self._cached()
        dx, dw, db = fully_connected_backward(grad, x, weight)
        return dx, {"weight": dw, "bias": db}


class ResidualUnit(Layer):
    """``relu(shortcut(x) + branch(x))``; ``shortcut`` is identity when ``None``.

    Parameters of the sub-layers are exposed as ``"<sublayer>.<param>"``.
    """

    def __init__(self, name: str, branch: Sequence[Layer], shortcut: Optional[Conv2d] = None):
        super().__init__()
        self.name = name
        self.branch: List[Layer] = list(branch)
        self.shortcut = shortcut
        names = [layer.name for layer in self.children()]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"{name}: duplicate sub-layer names {names}")

    @property
    def quantum(self):
        return any(layer.quantum for layer in self.children())

    def children(self) -> List[Layer]:
        return self.branch + ([self.shortcut] if self.shortcut is not None else [])

    def param_shapes(self):
        return {
            f"{layer.name}.{key}": shape
            for layer in self.children()
            for key, shape in layer.param_shapes().items()
        }

    def init_params(self, rng):
        out = {}
        for layer in self.children():
            out.update({f"{layer.name}.{k}": v for k, v in layer.init_params(rng).items()})
        return out

    def _sub(self, params, layer):
        prefix = layer.name + "."
        return {k[len(prefix) :]: v for k, v in params.items() if k.startswith(prefix)}

    def output_shape(self, in_shape):
        shape = in_shape
        for layer in self.branch:
            shape = layer.output_shape(shape)
        short = in_shape if self.shortcut is None else self.shortcut.output_shape(in_shape)
        if tuple(shape) != tuple(short):
            raise ConfigurationError(f"{self.name}: branch gives {shape}, shortcut gives {short}")
        return shape

    def forward(self, x, params, rng=None):
        h = x
        for layer in self.branch:
            h = layer.forward(h, self._sub(params, layer), rng)
        short = x if self.shortcut is None else self.shortcut.forward(x, self._sub(params, self.shortcut), rng)
        if h.shape != short.shape:
            raise ConfigurationError(f"{self.name}: branch {h.shape} vs shortcut {short.shape}")
        total = h + short
        self._cache = total
        return relu(total)

    def backward(self, grad):
        total = self._cached()
        g = relu_backward(grad, total)
        grads = {}
        gb = g
        for layer in reversed(self.branch):
            gb, sub = layer.backward(gb)
            grads.update({f"{layer.name}.{k}": v for k, v in sub.items()})
        if self.shortcut is None:
            gs = g
        else:
            gs, sub = self.shortcut.backward(g)
            grads.update({f"{self.shortcut.name}.{k}": v for k, v in sub.items()})
        return gb + gs, grads

    def clear(self):
        super().clear()
        for layer in self.children():
            layer.clear()
