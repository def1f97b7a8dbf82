"""Quantum convolutional layers.

Each window of the (single-channel) input is flattened row-major, encoded,
passed through the ansatz, and measured; the probability of qubit ``q``
reading ``|0>`` becomes output channel ``q``. Encoding and ansatz are fused
into one circuit whose first ``n_inputs`` slots carry the scaled pixel
values, so every patch of a batch (and every parameter-shifted copy of
it) runs through the simulator as one batched sweep.

Gradients use parameter-shift rules on that fused circuit. Gradients with
respect to pixels therefore come out of the same machinery as gradients
with respect to ansatz angles.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ansatz import AnsatzSpec, build_ansatz, init_ansatz_params, parameter_count
from .clayers import Layer, conv_output_size, uniform_fan_in
from .encodings import EncodingKind, EncodingSpec, check_encoding_domain, encoding_template
from .exceptions import ConfigurationError, ShapeError
from .simulator import Circuit, GateKind, GateOp, measure_zero_probabilities, run_circuit

_HALF_PI = np.pi / 2
_C_PLUS = (np.sqrt(2) + 1) / (4 * np.sqrt(2))
_C_MINUS = (np.sqrt(2) - 1) / (4 * np.sqrt(2))

# (shift, coefficient) pairs; the derivative is sum(coef * f(theta + shift))
SHIFT_RULES = {
    GateKind.RX: ((_HALF_PI, 0.5), (-_HALF_PI, -0.5)),
    GateKind.RY: ((_HALF_PI, 0.5), (-_HALF_PI, -0.5)),
    GateKind.RZ: ((_HALF_PI, 0.5), (-_HALF_PI, -0.5)),
    # controlled rotations have generator spectrum {0, +-1/2}: four terms
    GateKind.CRX: ((_HALF_PI, _C_PLUS), (-_HALF_PI, -_C_PLUS), (3 * _HALF_PI, -_C_MINUS), (-3 * _HALF_PI, _C_MINUS)),
    GateKind.CRZ: ((_HALF_PI, _C_PLUS), (-_HALF_PI, -_C_PLUS), (3 * _HALF_PI, -_C_MINUS), (-3 * _HALF_PI, _C_MINUS)),
}

# complex amplitudes simulated at once
_CHUNK_AMPLITUDES = 1 << 22


@dataclass(frozen=True)
class QuantumConvSpec:
    window: Tuple[int, int]
    encoding: EncodingSpec
    ansatz: AnsatzSpec
    stride: int = 1
    padding: int = 0
    shots: int = 0

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(self.window))
        kh, kw = self.window
        if kh * kw != self.encoding.n_inputs:
            raise ConfigurationError(
                f"{kh}x{kw} window has {kh * kw} pixels but the encoding takes {self.encoding.n_inputs}"
            )
        if self.ansatz.n_qubits != self.encoding.n_qubits:
            raise ConfigurationError("ansatz and encoding must act on the same qubits")
        if self.stride < 1 or self.padding < 0 or self.shots < 0:
            raise ConfigurationError("stride >= 1, padding >= 0 and shots >= 0 are required")

    @property
    def n_qubits(self) -> int:
        return self.encoding.n_qubits

    @property
    def out_channels(self) -> int:
        return self.encoding.n_qubits

    @property
    def n_params(self) -> int:
        return parameter_count(self.ansatz)

    def output_hw(self, h: int, w: int) -> Tuple[int, int]:
        return (
            conv_output_size(h, self.window[0], self.stride, self.padding),
            conv_output_size(w, self.window[1], self.stride, self.padding),
        )


def angle_conv_spec(window, ansatz_family="all_to_all", n_layers=1, stride=None, padding=0,
                    shots=0, angle_scale=1.0) -> QuantumConvSpec:
    """Square window, one ``Ry``-encoded qubit per pixel."""
    n = window * window
    if stride is None:
        stride = window if window == 2 else 1
    return QuantumConvSpec(
        (window, window),
        EncodingSpec(EncodingKind.ANGLE, n, angle_scale),
        AnsatzSpec(ansatz_family, n, n_layers),
        stride=stride,
        padding=padding,
        shots=shots,
    )


def dense_conv_spec(ansatz_family="all_to_all", n_layers=1, stride=1, padding=1, shots=0,
                    angle_scale=1.0) -> QuantumConvSpec:
    """3x3 window packed into three qubits by dense angle encoding."""
    return QuantumConvSpec(
        (3, 3),
        EncodingSpec(EncodingKind.DENSE_ANGLE, 3, angle_scale),
        AnsatzSpec(ansatz_family, 3, n_layers),
        stride=stride,
        padding=padding,
        shots=shots,
    )


@lru_cache(maxsize=None)
def layer_circuit(spec: QuantumConvSpec) -> Circuit:
    """Encoding template followed by the ansatz; pixel slots come first."""
    return encoding_template(spec.encoding).compose(build_ansatz(spec.ansatz))


@lru_cache(maxsize=None)
def _occurrences(circuit: Circuit):
    """Unshare slots: one slot per parameterized gate.

    Returns the rewritten circuit, the original slot of each new slot, and
    the gate kind behind each new slot.
    """
    ops, owners, kinds = [], [], []
    for op in circuit.ops:
        if op.is_parameterized:
            ops.append(GateOp(op.kind, op.targets, slot=len(owners)))
            owners.append(op.slot)
            kinds.append(op.kind)
        else:
            ops.append(op)
    return Circuit(circuit.n_qubits, ops, len(owners)), np.array(owners, dtype=int), tuple(kinds)


def _as_batch(x):
    """Accept (C, H, W) or (N, C, H, W); return the 4-D view and whether it was 3-D."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"feature maps must be (C, H, W) or (N, C, H, W), got {x.shape}")


def extract_patches(x, window, stride: int, padding: int) -> np.ndarray:
    """``(N, H, W)`` -> ``(N, Ho, Wo, kh * kw)``, zero padded, row-major within a window."""
    kh, kw = window
    n, h, w = x.shape
    conv_output_size(h, kh, stride, padding)
    conv_output_size(w, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    return win.reshape(win.shape[:3] + (kh * kw,))


def _chunk_rows(n_rows: int, per_row: int, n_qubits: int) -> int:
    return max(1, _CHUNK_AMPLITUDES // (per_row << n_qubits))


def evaluate_rows(circuit: Circuit, rows: np.ndarray, shots: int = 0, rng=None) -> np.ndarray:
    """Per-qubit zero probabilities for every parameter row, chunked for memory."""
    rows = np.asarray(rows, dtype=float)
    out = np.empty((rows.shape[0], circuit.n_qubits))
    step = _chunk_rows(rows.shape[0], 1, circuit.n_qubits)
    for start in range(0, rows.shape[0], step):
        state = run_circuit(circuit, rows[start : start + step])
        out[start : start + step] = measure_zero_probabilities(state, shots, rng)
    return out


def _base_rows(x4, spec: QuantumConvSpec, params):
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_params,):
        raise ShapeError(f"quantum layer takes {spec.n_params} parameters, got shape {params.shape}")
    if x4.shape[1] != 1:
        raise ShapeError(f"quantum layers encode a single channel; got {x4.shape[1]} (apply channel_mix)")
    check_encoding_domain(x4)
    patches = extract_patches(x4[:, 0], spec.window, spec.stride, spec.padding)
    n, ho, wo, k = patches.shape
    angles = spec.encoding.angle_scale * patches.reshape(-1, k)
    rows = np.concatenate([angles, np.broadcast_to(params, (angles.shape[0], params.size))], axis=1)
    return rows, (n, ho, wo)


def _need_rng(spec, rng):
    if spec.shots and rng is None:
        raise ValueError("shot-based quantum layers need an rng")


def qconv_forward(x, spec: QuantumConvSpec, params, rng=None) -> np.ndarray:
    """Quantum convolution of a single-channel map.

    ``x`` is ``(1, H, W)`` or ``(N, 1, H, W)``; the output has
    ``spec.out_channels`` channels and the same rank as ``x``.
    """
    _need_rng(spec, rng)
    x4, squeeze = _as_batch(x)
    rows, (n, ho, wo) = _base_rows(x4, spec, params)
    probs = evaluate_rows(layer_circuit(spec), rows, spec.shots, rng)
    out = probs.reshape(n, ho, wo, spec.out_channels).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    return out[0] if squeeze else out


def qconv_backward(x, spec: QuantumConvSpec, params, upstream, rng=None, input_grad: bool = True):
    """Parameter-shift gradients of ``sum(upstream * qconv_forward(x))``.

    Returns ``(d_params, d_input)``; ``d_input`` is ``None`` when
    ``input_grad`` is false, which skips the pixel shifts entirely.
    """
    _need_rng(spec, rng)
    x4, squeeze = _as_batch(x)
    up4, _ = _as_batch(upstream)
    rows, (n, ho, wo) = _base_rows(x4, spec, params)
    n_q, n_in = spec.n_qubits, spec.encoding.n_inputs
    if up4.shape != (n, n_q, ho, wo):
        raise ShapeError(f"upstream gradient {up4.shape} does not match output {(n, n_q, ho, wo)}")
    up = up4.transpose(0, 2, 3, 1).reshape(-1, n_q)

    circuit, owners, kinds = _occurrences(layer_circuit(spec))
    wanted = [i for i, owner in enumerate(owners) if input_grad or owner >= n_in]
    shift_slot, shift_val, shift_coef, shift_target = [], [], [], []
    for col, occ in enumerate(wanted):
        for shift, coef in SHIFT_RULES[kinds[occ]]:
            shift_slot.append(occ)
            shift_val.append(shift)
            shift_coef.append(coef)
            shift_target.append(col)
    shift_slot = np.array(shift_slot)
    shift_val = np.array(shift_val)
    n_terms = len(shift_slot)
    # (terms, occurrences) combination matrix
    combine = np.zeros((len(wanted), n_terms))
    combine[shift_target, np.arange(n_terms)] = shift_coef

    occ_rows = rows[:, owners]
    occ_grad = np.zeros((occ_rows.shape[0], len(wanted)))
    active = np.flatnonzero(np.any(up != 0, axis=1))
    step = _chunk_rows(active.size, n_terms, n_q)
    for start in range(0, active.size, step):
        idx = active[start : start + step]
        block = np.repeat(occ_rows[idx], n_terms, axis=0).reshape(idx.size, n_terms, -1)
        block[:, np.arange(n_terms), shift_slot] += shift_val
        probs = evaluate_rows(circuit, block.reshape(-1, block.shape[-1]), spec.shots, rng)
        probs = probs.reshape(idx.size, n_terms, n_q)
        # d p0(q) / d occurrence, contracted with the upstream gradient
        dprob = np.einsum("st,ptq->psq", combine, probs)
        occ_grad[idx] = np.einsum("psq,pq->ps", dprob, up[idx])

    slot_grad = np.zeros((occ_rows.shape[0], layer_circuit(spec).n_slots))
    np.add.at(slot_grad.T, owners[wanted], occ_grad.T)
    d_params = slot_grad[:, n_in:].sum(axis=0)
    if not input_grad:
        return d_params, None

    kh, kw = spec.window
    pad, stride = spec.padding, spec.stride
    per_pixel = (spec.encoding.angle_scale * slot_grad[:, :n_in]).reshape(n, ho, wo, kh, kw)
    h, w = x4.shape[2:]
    dpad = np.zeros((n, h + 2 * pad, w + 2 * pad))
    for i in range(kh):
        for j in range(kw):
            dpad[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += per_pixel[..., i, j]
    d_input = dpad[:, pad : pad + h, pad : pad + w][:, None]
    return d_params, d_input[0] if squeeze else d_input


def qconv_param_gradients(x, spec: QuantumConvSpec, params, upstream, rng=None) -> np.ndarray:
    return qconv_backward(x, spec, params, upstream, rng, input_grad=False)[0]


def qconv_input_gradients(x, spec: QuantumConvSpec, params, upstream, rng=None) -> np.ndarray:
    return qconv_backward(x, spec, params, upstream, rng, input_grad=True)[1]


_ONE_BELOW = np.nextafter(1.0, 0.0)


def _logistic(z):
    return np.clip(0.5 * (1.0 + np.tanh(0.5 * z)), 0.0, _ONE_BELOW)


def channel_mix(x, weights, bias) -> np.ndarray:
    """1x1 learned channel combination squashed into ``[0, 1)``."""
    x4, squeeze = _as_batch(x)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (x4.shape[1],):
        raise ShapeError(f"channel_mix needs {x4.shape[1]} weights, got {weights.shape}")
    out = _logistic(np.einsum("nchw,c->nhw", x4, weights) + bias)[:, None]
    return out[0] if squeeze else out


def channel_mix_backward(x, weights, out, upstream):
    """Returns ``(d_input, d_weights, d_bias)`` given the forward output."""
    x4, squeeze = _as_batch(x)
    out4, _ = _as_batch(out)
    up4, _ = _as_batch(upstream)
    dz = up4[:, 0] * out4[:, 0] * (1.0 - out4[:, 0])
    d_weights = np.einsum("nhw,nchw->c", dz, x4)
    d_input = dz[:, None] * np.asarray(weights)[None, :, None, None]
    return (d_input[0] if squeeze else d_input), d_weights, float(dz.sum())


class QuantumConv2d(Layer):
    quantum = True

    def __init__(self, name: str, spec: QuantumConvSpec):
        super().__init__()
        self.name = name
        self.spec = spec
        self.needs_input_grad = True

    def param_shapes(self):
        return {"theta": (self.spec.n_params,)}

    def init_params(self, rng):
        return {"theta": init_ansatz_params(self.spec.ansatz, rng)}

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if c != 1:
            raise ConfigurationError(f"{self.name}: quantum layers take 1 channel, got {c}")
        return (self.spec.out_channels,) + self.spec.output_hw(h, w)

    def forward(self, x, params, rng=None):
        # shot-mode backward keeps drawing from the forward pass's stream
        self._cache = (x, params["theta"], rng)
        return qconv_forward(x, self.spec, params["theta"], rng)

    def backward(self, grad):
        x, theta, rng = self._cached()
        d_theta, d_x = qconv_backward(x, self.spec, theta, grad, rng, input_grad=self.needs_input_grad)
        if d_x is None:
            d_x = np.zeros_like(x)
        return d_x, {"theta": d_theta}


class ChannelMix(Layer):
    def __init__(self, name: str, in_channels: int):
        super().__init__()
        self.name = name
        self.in_channels = in_channels

    def param_shapes(self):
        return {"weight": (self.in_channels,), "bias": (1,)}

    def init_params(self, rng):
        return {k: uniform_fan_in(rng, s, self.in_channels) for k, s in self.param_shapes().items()}

    def output_shape(self, in_shape):
        if in_shape[0] != self.in_channels:
            raise ConfigurationError(f"{self.name}: expects {self.in_channels} channels, got {in_shape[0]}")
        return (1,) + tuple(in_shape[1:])

    def forward(self, x, params, rng=None):
        out = channel_mix(x, params["weight"], params["bias"][0])
        self._cache = (x, params["weight"], out)
        return out

    def backward(self, grad):
        x, weight, out = self._cached()
        d_x, d_w, d_b = channel_mix_backward(x, weight, out, grad)
        return d_x, {"weight": d_w, "bias": np.array([d_b])}
