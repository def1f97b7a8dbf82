"""Angle and dense-angle encodings of pixel windows.

A window is flattened row-major. Under :attr:`EncodingKind.ANGLE` pixel
``j`` drives ``Ry`` on qubit ``j``. Under :attr:`EncodingKind.DENSE_ANGLE`
pixels ``3q, 3q+1, 3q+2`` drive ``Rx``, ``Rz``, ``Rx`` on qubit ``q``, in
that order of application.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import ConfigurationError, EncodingDomainError, ShapeError
from .simulator import Circuit, GateKind, GateOp

_DENSE_SEQUENCE = (GateKind.RX, GateKind.RZ, GateKind.RX)


class EncodingKind(str, Enum):
    ANGLE = "angle"
    DENSE_ANGLE = "dense_angle"


@dataclass(frozen=True)
class EncodingSpec:
    kind: EncodingKind
    n_qubits: int
    angle_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EncodingKind(self.kind))
        if self.n_qubits < 1:
            raise ConfigurationError(f"n_qubits must be positive, got {self.n_qubits}")
        if not self.angle_scale > 0:
            raise ConfigurationError(f"angle_scale must be > 0, got {self.angle_scale}")

    @property
    def n_inputs(self) -> int:
        return self.n_qubits if self.kind is EncodingKind.ANGLE else 3 * self.n_qubits


def _gate_layout(spec: EncodingSpec):
    """(kind, qubit) for each input position, in application order."""
    if spec.kind is EncodingKind.ANGLE:
        return [(GateKind.RY, q) for q in range(spec.n_qubits)]
    return [(_DENSE_SEQUENCE[j % 3], j // 3) for j in range(spec.n_inputs)]


def encoding_template(spec: EncodingSpec) -> Circuit:
    """Encoding circuit whose angles are parameter slots ``0..n_inputs-1``.

    Slot ``j`` receives ``angle_scale * x_j``. Quantum layers use this form
    so that every patch in a batch can run through one circuit.
    """
    ops = [GateOp.param(kind, (q,), j) for j, (kind, q) in enumerate(_gate_layout(spec))]
    return Circuit(spec.n_qubits, ops, spec.n_inputs)


def check_encoding_domain(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size and (not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() >= 1.0):
        raise EncodingDomainError(
            f"encoded values must lie in [0, 1); got range [{np.nanmin(x)}, {np.nanmax(x)}]"
        )
    return x


def encoding_angles(x, spec: EncodingSpec) -> np.ndarray:
    x = check_encoding_domain(x)
    if x.shape[-1] != spec.n_inputs:
        raise ShapeError(f"{spec.kind.value} encoding takes {spec.n_inputs} inputs, got {x.shape[-1]}")
    return spec.angle_scale * x


def _encode(x, spec: EncodingSpec) -> Circuit:
    angles = encoding_angles(x, spec)
    if angles.ndim != 1:
        raise ShapeError(f"expected a flat input vector, got shape {angles.shape}")
    return encoding_template(spec).bind(angles)


def angle_encode(x, spec: EncodingSpec) -> Circuit:
    """One fixed-angle ``Ry(scale * x_i)`` on each qubit ``i``."""
    if spec.kind is not EncodingKind.ANGLE:
        raise ConfigurationError("angle_encode needs an ANGLE EncodingSpec")
    return _encode(x, spec)


def dense_angle_encode(x, spec: EncodingSpec) -> Circuit:
    """Three fixed-angle rotations per qubit, ``Rx, Rz, Rx``."""
    if spec.kind is not EncodingKind.DENSE_ANGLE:
        raise ConfigurationError("dense_angle_encode needs a DENSE_ANGLE EncodingSpec")
    return _encode(x, spec)


def encode(x, spec: EncodingSpec) -> Circuit:
    return _encode(x, spec)
