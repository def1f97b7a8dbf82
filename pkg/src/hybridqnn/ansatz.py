"""Hardware-efficient ansatz families.

``ALL_TO_ALL``
    Per layer: ``Rx`` on every qubit, then a parameterized ``CRx`` for every
    unordered pair ``(i, j)``, ``i < j``, with ``i`` as control.
``CIRCUIT_BLOCK``
    Per layer: ``Ry`` on every qubit, then the open CNOT chain
    ``0->1, 1->2, ..., (n-2)->(n-1)``.

Layers are concatenated, each with fresh parameter slots.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import combinations

import numpy as np

from .exceptions import ConfigurationError
from .simulator import Circuit, GateKind, GateOp

INIT_HALF_WIDTH = 0.1


class AnsatzFamily(str, Enum):
    ALL_TO_ALL = "all_to_all"
    CIRCUIT_BLOCK = "circuit_block"


@dataclass(frozen=True)
class AnsatzSpec:
    family: AnsatzFamily
    n_qubits: int
    n_layers: int = 1

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", AnsatzFamily(self.family))
        except ValueError:
            raise ConfigurationError(
                f"unknown ansatz family {self.family!r}; "
                f"choose from {[f.value for f in AnsatzFamily]}"
            ) from None
        if self.n_qubits < 2:
            raise ConfigurationError(f"an ansatz needs at least 2 qubits, got {self.n_qubits}")
        if self.n_layers < 1:
            raise ConfigurationError(f"n_layers must be >= 1, got {self.n_layers}")

    def with_qubits(self, n_qubits: int) -> "AnsatzSpec":
        return AnsatzSpec(self.family, n_qubits, self.n_layers)


def parameter_count(spec: AnsatzSpec) -> int:
    n, layers = spec.n_qubits, spec.n_layers
    if spec.family is AnsatzFamily.ALL_TO_ALL:
        return layers * (n + n * (n - 1) // 2)
    return layers * n


def build_ansatz(spec: AnsatzSpec) -> Circuit:
    n = spec.n_qubits
    ops = []
    slot = 0
    for _ in range(spec.n_layers):
        single = GateKind.RX if spec.family is AnsatzFamily.ALL_TO_ALL else GateKind.RY
        for q in range(n):
            ops.append(GateOp.param(single, (q,), slot))
            slot += 1
        if spec.family is AnsatzFamily.ALL_TO_ALL:
            for control, target in combinations(range(n), 2):
                ops.append(GateOp.param(GateKind.CRX, (control, target), slot))
                slot += 1
        else:
            ops.extend(GateOp.fixed(GateKind.CNOT, (q, q + 1)) for q in range(n - 1))
    return Circuit(n, ops, slot)


def init_ansatz_params(spec: AnsatzSpec, rng: np.random.Generator) -> np.ndarray:
    """Small uniform angles in ``(-0.1, 0.1)`` so the circuit starts near identity."""
    return rng.uniform(-INIT_HALF_WIDTH, INIT_HALF_WIDTH, size=parameter_count(spec))
