"""The six architectures: template CNN and ResNet plus their hybrid variants.

Every model is a flat list of :class:`~hybridqnn.clayers.Layer` nodes (a
residual unit counts as one node) together with a
:class:`ParameterLayout` that maps the model's single parameter vector
onto named per-layer arrays.

Concrete shapes for a 1x20x20 input::

    cnn        conv(1->4) relu conv(4->8) relu maxpool fc(512->32) relu fc(32->4)
    qccnn1     qconv(2x2, 4q, s2) conv(4->8) relu maxpool fc(128->32) relu fc(32->4)
    qccnn2     qconv(2x2, 4q, s2) mix(4->1) qconv(3x3, 9q) maxpool fc(144->32) relu fc(32->4)
    resnet     unit(1->8) unit(8->16) avgpool(4x4) fc(256->4)
    qcresnet1  unit1 branch starts with qconv(3x3 dense, 3q, p1)
    qcresnet2  as qcresnet1, and unit2 branch starts with mix(8->1) qconv(3x3, 9q, p1)
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from .ansatz import AnsatzFamily
from .clayers import (
    AdaptiveAvgPool,
    Conv2d,
    ConvSpec,
    Flatten,
    FullyConnected,
    Layer,
    MaxPool2x2,
    ReLU,
    ResidualUnit,
)
from .exceptions import ConfigurationError, ShapeError, StateError
from .qlayers import ChannelMix, QuantumConv2d, angle_conv_spec, dense_conv_spec

N_CLASSES = 4
INPUT_SIZE = 20


class ModelKind(str, Enum):
    CNN = "cnn"
    RESNET = "resnet"
    QCCNN1 = "qccnn1"
    QCCNN2 = "qccnn2"
    QCRESNET1 = "qcresnet1"
    QCRESNET2 = "qcresnet2"

    @property
    def hybrid(self) -> bool:
        return self not in (ModelKind.CNN, ModelKind.RESNET)


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    ansatz_family: AnsatzFamily = AnsatzFamily.ALL_TO_ALL
    ansatz_layers: int = 1
    shots: int = 0
    angle_scale: float = 1.0
    input_size: int = INPUT_SIZE
    n_classes: int = N_CLASSES

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", ModelKind(self.kind))
            object.__setattr__(self, "ansatz_family", AnsatzFamily(self.ansatz_family))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if self.ansatz_layers < 1 or self.shots < 0 or not self.angle_scale > 0:
            raise ConfigurationError("ansatz_layers >= 1, shots >= 0, angle_scale > 0 required")
        if self.input_size < 2 or self.n_classes < 2:
            raise ConfigurationError("input_size and n_classes must be at least 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["ansatz_family"] = self.ansatz_family.value
        return d


@dataclass(frozen=True)
class Segment:
    name: str
    shape: tuple
    offset: int
    quantum: bool

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)


class ParameterLayout:
    """Named segments of a flat parameter vector, in layer order."""

    def __init__(self, segments: List[Segment]):
        self.segments = segments
        self.size = sum(s.size for s in segments)
        self._by_name = {s.name: s for s in segments}

    @classmethod
    def from_layers(cls, layers: List[Layer]) -> "ParameterLayout":
        segments, offset = [], 0
        for layer in layers:
            for key, shape in layer.param_shapes().items():
                quantum = layer.quantum and key.split(".")[-1] == "theta"
                if isinstance(layer, ResidualUnit):
                    sub = next(l for l in layer.children() if key.startswith(l.name + "."))
                    quantum = sub.quantum
                seg = Segment(f"{layer.name}.{key}", tuple(shape), offset, quantum)
                segments.append(seg)
                offset += seg.size
        return cls(segments)

    def __getitem__(self, name) -> Segment:
        return self._by_name[name]

    def __iter__(self):
        return iter(self.segments)

    def unflatten(self, flat) -> Dict[str, np.ndarray]:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.size,):
            raise ShapeError(f"expected {self.size} parameters, got shape {flat.shape}")
        return {s.name: flat[s.slice].reshape(s.shape) for s in self.segments}

    def flatten(self, named: Dict[str, np.ndarray]) -> np.ndarray:
        out = np.zeros(self.size)
        for s in self.segments:
            value = np.asarray(named[s.name], dtype=float)
            if value.shape != s.shape:
                raise ShapeError(f"{s.name}: expected shape {s.shape}, got {value.shape}")
            out[s.slice] = value.ravel()
        return out

    def mask(self, quantum: bool) -> np.ndarray:
        m = np.zeros(self.size, dtype=bool)
        for s in self.segments:
            if s.quantum == quantum:
                m[s.slice] = True
        return m

    @property
    def n_quantum(self) -> int:
        return int(self.mask(True).sum())


class Model:
    """A layer graph with a flat-parameter forward/backward contract."""

    def __init__(self, spec: ModelSpec, layers: List[Layer]):
        self.spec = spec
        self.layers = layers
        self.input_shape = (1, spec.input_size, spec.input_size)
        self.shapes: List[Tuple[str, tuple]] = []
        shape = self.input_shape
        for layer in layers:
            shape = layer.output_shape(shape)
            self.shapes.append((layer.name, tuple(shape)))
        if tuple(shape) != (spec.n_classes,):
            raise ConfigurationError(f"model ends in shape {shape}, expected ({spec.n_classes},)")
        _disable_input_grad(layers[0])
        self.layout = ParameterLayout.from_layers(layers)
        self._cached = False

    @property
    def kind(self) -> ModelKind:
        return self.spec.kind

    @property
    def n_params(self) -> int:
        return self.layout.size

    def quantum_layers(self) -> List[QuantumConv2d]:
        found = []
        for layer in self.layers:
            children = layer.children() if isinstance(layer, ResidualUnit) else [layer]
            found.extend(c for c in children if isinstance(c, QuantumConv2d))
        return found

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        named = {}
        for layer in self.layers:
            named.update({f"{layer.name}.{k}": v for k, v in layer.init_params(rng).items()})
        return self.layout.flatten(named)

    def _layer_params(self, named, layer):
        prefix = layer.name + "."
        return {k[len(prefix) :]: v for k, v in named.items() if k.startswith(prefix)}

    def forward(self, x, params, rng=None) -> np.ndarray:
        """Logits of shape ``(batch, n_classes)``; caches activations for :meth:`backward`."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ShapeError(f"expected input (N, {', '.join(map(str, self.input_shape))}), got {x.shape}")
        named = self.layout.unflatten(params)
        h = x
        for layer in self.layers:
            h = layer.forward(h, self._layer_params(named, layer), rng)
        self._cached = True
        return h

    def backward(self, grad_logits) -> np.ndarray:
        """Flat gradient aligned with :attr:`layout`. Consumes the forward cache."""
        if not self._cached:
            raise StateError("model backward called without a fresh forward pass")
        grads = {}
        g = np.asarray(grad_logits, dtype=float)
        for layer in reversed(self.layers):
            g, sub = layer.backward(g)
            grads.update({f"{layer.name}.{k}": v for k, v in sub.items()})
        for layer in self.layers:
            layer.clear()
        self._cached = False
        return self.layout.flatten(grads)

    def describe(self) -> List[str]:
        return [f"{name}:{'x'.join(map(str, shape))}" for name, shape in self.shapes]


def _disable_input_grad(layer):
    if isinstance(layer, QuantumConv2d):
        layer.needs_input_grad = False
    elif isinstance(layer, ResidualUnit):
        _disable_input_grad(layer.branch[0])


def _head(in_features, n_classes):
    return [
        Flatten("flatten"),
        FullyConnected("fc1", in_features, 32),
        ReLU("relu_fc"),
        FullyConnected("fc2", 32, n_classes),
    ]


def _flat_size(layers, input_shape):
    shape = input_shape
    for layer in layers:
        shape = layer.output_shape(shape)
    return int(np.prod(shape))


def _qkw(spec: ModelSpec):
    return dict(ansatz_family=spec.ansatz_family, n_layers=spec.ansatz_layers,
                shots=spec.shots, angle_scale=spec.angle_scale)


def _cnn(spec):
    return [
        Conv2d("conv1", ConvSpec(1, 4)),
        ReLU("relu1"),
        Conv2d("conv2", ConvSpec(4, 8)),
        ReLU("relu2"),
        MaxPool2x2("pool"),
    ]


def _qccnn1(spec):
    return [
        QuantumConv2d("qconv1", angle_conv_spec(2, stride=2, **_qkw(spec))),
        Conv2d("conv2", ConvSpec(4, 8)),
        ReLU("relu2"),
        MaxPool2x2("pool"),
    ]


def _qccnn2(spec):
    return [
        QuantumConv2d("qconv1", angle_conv_spec(2, stride=2, **_qkw(spec))),
        ChannelMix("mix", 4),
        QuantumConv2d("qconv2", angle_conv_spec(3, stride=1, padding=0, **_qkw(spec))),
        MaxPool2x2("pool"),
    ]


def _unit(name, c_in, c_out, first: Optional[List[Layer]] = None, first_out: Optional[int] = None):
    if first is None:
        first = [Conv2d("conv_a", ConvSpec(c_in, c_out, padding=1)), ReLU("relu_a")]
        first_out = c_out
    branch = first + [Conv2d("conv_b", ConvSpec(first_out, c_out, padding=1))]
    return ResidualUnit(name, branch, Conv2d("shortcut", ConvSpec(c_in, c_out, window=(1, 1))))


def _resnet_tail(n_classes):
    return [AdaptiveAvgPool("avgpool", (4, 4)), Flatten("flatten"), FullyConnected("fc", 256, n_classes)]


def _resnet(spec):
    return [_unit("unit1", 1, 8), _unit("unit2", 8, 16)] + _resnet_tail(spec.n_classes)


def _quantum_unit1(spec):
    q = QuantumConv2d("qconv", dense_conv_spec(stride=1, padding=1, **_qkw(spec)))
    return _unit("unit1", 1, 8, first=[q], first_out=3)


def _qcresnet1(spec):
    return [_quantum_unit1(spec), _unit("unit2", 8, 16)] + _resnet_tail(spec.n_classes)


def _qcresnet2(spec):
    q2 = [ChannelMix("mix", 8), QuantumConv2d("qconv", angle_conv_spec(3, stride=1, padding=1, **_qkw(spec)))]
    return [_quantum_unit1(spec), _unit("unit2", 8, 16, first=q2, first_out=9)] + _resnet_tail(spec.n_classes)


_BUILDERS = {
    ModelKind.CNN: _cnn,
    ModelKind.QCCNN1: _qccnn1,
    ModelKind.QCCNN2: _qccnn2,
    ModelKind.RESNET: _resnet,
    ModelKind.QCRESNET1: _qcresnet1,
    ModelKind.QCRESNET2: _qcresnet2,
}


def build_model(spec: ModelSpec) -> Model:
    body = _BUILDERS[spec.kind](spec)
    if spec.kind in (ModelKind.CNN, ModelKind.QCCNN1, ModelKind.QCCNN2):
        size = (1, spec.input_size, spec.input_size)
        body = body + _head(_flat_size(body, size), spec.n_classes)
    return Model(spec, body)
