"""Dense statevector simulator.

Conventions
-----------
* Qubit 0 is the least-significant bit of the basis-state index, so the
  amplitude of ``|q_{n-1} ... q_1 q_0>`` lives at ``sum(q_k << k)``.
* A :class:`StateVector` may carry a leading batch axis. Every kernel
  works on ``(batch, 2**n)`` arrays, which lets a quantum layer push all
  of its patches (and all parameter-shifted copies) through one circuit
  in a single vectorized sweep.
* Global phase is not tracked; only ``|amplitude|**2`` is consumed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from .exceptions import ParameterBindingError, ShapeError, SizeError

MAX_QUBITS = 12

ArrayLike = Union[float, np.ndarray]


class GateKind(str, Enum):
    RX = "Rx"
    RY = "Ry"
    RZ = "Rz"
    CNOT = "CNOT"
    CRX = "CRx"
    CRZ = "CRz"

    @property
    def n_targets(self) -> int:
        return 2 if self in (GateKind.CNOT, GateKind.CRX, GateKind.CRZ) else 1

    @property
    def has_angle(self) -> bool:
        return self is not GateKind.CNOT


@dataclass(frozen=True)
class GateOp:
    """One gate. ``targets`` is ``(qubit,)`` or ``(control, target)``.

    Exactly one of ``angle`` (fixed radians) and ``slot`` (parameter
    index) is set for rotation kinds; CNOT carries neither.
    """

    kind: GateKind
    targets: tuple
    angle: Optional[float] = None
    slot: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if len(self.targets) != self.kind.n_targets:
            raise ShapeError(
                f"{self.kind.value} needs {self.kind.n_targets} qubit index(es), got {self.targets}"
            )
        if len(set(self.targets)) != len(self.targets):
            raise ShapeError(f"control and target must differ, got {self.targets}")
        if min(self.targets) < 0:
            raise ShapeError(f"negative qubit index in {self.targets}")
        if self.kind.has_angle:
            if (self.angle is None) == (self.slot is None):
                raise ParameterBindingError(
                    f"{self.kind.value} needs exactly one of a fixed angle or a slot"
                )
            if self.slot is not None and self.slot < 0:
                raise ParameterBindingError(f"negative slot index {self.slot}")
        elif self.angle is not None or self.slot is not None:
            raise ParameterBindingError("CNOT carries no angle")

    @classmethod
    def fixed(cls, kind, targets, angle: float = None) -> "GateOp":
        return cls(kind, tuple(targets), angle=None if angle is None else float(angle))

    @classmethod
    def param(cls, kind, targets, slot: int) -> "GateOp":
        return cls(kind, tuple(targets), slot=int(slot))

    @property
    def is_parameterized(self) -> bool:
        return self.slot is not None


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    ops: tuple = ()
    n_slots: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        _check_n_qubits(self.n_qubits)
        used = set()
        for op in self.ops:
            if max(op.targets) >= self.n_qubits:
                raise ShapeError(
                    f"{op.kind.value} on {op.targets} exceeds {self.n_qubits} qubits"
                )
            if op.slot is not None:
                if op.slot >= self.n_slots:
                    raise ParameterBindingError(
                        f"slot {op.slot} out of range for {self.n_slots} slots"
                    )
                used.add(op.slot)
        if len(used) != self.n_slots:
            missing = sorted(set(range(self.n_slots)) - used)
            raise ParameterBindingError(f"slots {missing} are never used")

    def compose(self, other: "Circuit") -> "Circuit":
        """Append ``other`` after ``self``; its slots are renumbered after ours."""
        if other.n_qubits != self.n_qubits:
            raise ShapeError(
                f"cannot compose {self.n_qubits}-qubit and {other.n_qubits}-qubit circuits"
            )
        shifted = [
            GateOp(op.kind, op.targets, slot=op.slot + self.n_slots) if op.is_parameterized else op
            for op in other.ops
        ]
        return Circuit(self.n_qubits, self.ops + tuple(shifted), self.n_slots + other.n_slots)

    def bind(self, params) -> "Circuit":
        """Freeze every slot to the given value, returning a zero-slot circuit."""
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_slots,):
            raise ParameterBindingError(
                f"expected {self.n_slots} parameters, got shape {params.shape}"
            )
        ops = [
            GateOp.fixed(op.kind, op.targets, params[op.slot]) if op.is_parameterized else op
            for op in self.ops
        ]
        return Circuit(self.n_qubits, ops, 0)

    @property
    def n_gates(self) -> int:
        return len(self.ops)


@dataclass
class StateVector:
    """Amplitudes of an ``n_qubits`` register, optionally batched.

    ``amplitudes`` has shape ``(2**n,)`` or ``(batch, 2**n)``.
    """

    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_n_qubits(self.n_qubits)
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.ndim not in (1, 2) or self.amplitudes.shape[-1] != 2**self.n_qubits:
            raise ShapeError(
                f"amplitudes of shape {self.amplitudes.shape} do not match {self.n_qubits} qubits"
            )

    @property
    def batched(self) -> bool:
        return self.amplitudes.ndim == 2

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> np.ndarray:
        return self.probabilities().sum(axis=-1)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


def _check_n_qubits(n):
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
        raise SizeError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n!r}")


def init_zero_state(n_qubits: int, batch: Optional[int] = None) -> StateVector:
    _check_n_qubits(n_qubits)
    shape = (2**n_qubits,) if batch is None else (batch, 2**n_qubits)
    amps = np.zeros(shape, dtype=np.complex128)
    amps[..., 0] = 1.0
    return StateVector(n_qubits, amps)


# -- kernels -----------------------------------------------------------------
# ``psi`` is always a C-contiguous (batch, 2**n) array; it is viewed as a
# (batch, 2, ..., 2) tensor where axis ``n - q`` belongs to qubit ``q``.


def _coef(x, ndim):
    if np.ndim(x) == 0:
        return x
    return np.reshape(x, (-1,) + (1,) * (ndim - 1))


def _slices(ndim, axis):
    s0 = [slice(None)] * ndim
    s1 = [slice(None)] * ndim
    s0[axis] = 0
    s1[axis] = 1
    return tuple(s0), tuple(s1)


def _rotate(view, axis, m00, m01, m10, m11):
    s0, s1 = _slices(view.ndim, axis)
    a0 = view[s0].copy()
    a1 = view[s1].copy()
    nd = a0.ndim
    view[s0] = _coef(m00, nd) * a0 + _coef(m01, nd) * a1
    view[s1] = _coef(m10, nd) * a0 + _coef(m11, nd) * a1


def _phase(view, axis, p0, p1):
    s0, s1 = _slices(view.ndim, axis)
    nd = view.ndim - 1
    view[s0] *= _coef(p0, nd)
    view[s1] *= _coef(p1, nd)


def _flip(view, axis):
    s0, s1 = _slices(view.ndim, axis)
    a0 = view[s0].copy()
    view[s0] = view[s1]
    view[s1] = a0


def _apply_single(view, axis, kind, theta):
    if kind is GateKind.RZ:
        half = 0.5 * np.asarray(theta)
        _phase(view, axis, np.exp(-1j * half), np.exp(1j * half))
        return
    c = np.cos(0.5 * np.asarray(theta))
    s = np.sin(0.5 * np.asarray(theta))
    if kind is GateKind.RY:
        _rotate(view, axis, c, -s, s, c)
    elif kind is GateKind.RX:
        _rotate(view, axis, c, -1j * s, -1j * s, c)
    else:  # pragma: no cover - guarded by GateOp validation
        raise ValueError(kind)


def _apply_inplace(psi: np.ndarray, n: int, op: GateOp, theta) -> None:
    view = psi.reshape((psi.shape[0],) + (2,) * n)
    if op.kind.n_targets == 1:
        _apply_single(view, n - op.targets[0], op.kind, theta)
        return
    control, target = op.targets
    c_axis, t_axis = n - control, n - target
    idx = [slice(None)] * view.ndim
    idx[c_axis] = 1
    sub = view[tuple(idx)]
    t_axis -= t_axis > c_axis
    if op.kind is GateKind.CNOT:
        _flip(sub, t_axis)
    elif op.kind is GateKind.CRX:
        _apply_single(sub, t_axis, GateKind.RX, theta)
    else:
        _apply_single(sub, t_axis, GateKind.RZ, theta)


def _resolve_angle(op: GateOp, params: Optional[np.ndarray]):
    if not op.kind.has_angle:
        return None
    if op.slot is None:
        return op.angle
    if params is None or params.shape[-1] <= op.slot:
        raise ParameterBindingError(f"no parameter bound to slot {op.slot}")
    return params[..., op.slot]


def _as_params(params) -> Optional[np.ndarray]:
    if params is None:
        return None
    params = np.asarray(params, dtype=float)
    if params.ndim not in (1, 2):
        raise ShapeError(f"params must be 1-D or 2-D, got shape {params.shape}")
    return params


def _working_copy(state: StateVector, params: Optional[np.ndarray]):
    """Copy ``state`` into a (batch, 2**n) buffer sized for ``params``."""
    amps = state.amplitudes
    batch = amps.shape[0] if amps.ndim == 2 else None
    if params is not None and params.ndim == 2:
        if batch is None:
            batch = params.shape[0]
            amps = np.broadcast_to(amps, (batch, amps.shape[-1]))
        elif params.shape[0] != batch:
            raise ShapeError(
                f"parameter batch {params.shape[0]} does not match state batch {batch}"
            )
    squeeze = batch is None
    psi = np.array(amps.reshape(-1, amps.shape[-1]), dtype=np.complex128, order="C", copy=True)
    return psi, squeeze


def apply_gate(state: StateVector, op: GateOp, params=None) -> StateVector:
    """Return ``op`` applied to ``state``; the input is left untouched."""
    if max(op.targets) >= state.n_qubits:
        raise ShapeError(f"{op.kind.value} on {op.targets} exceeds {state.n_qubits} qubits")
    params = _as_params(params)
    theta = _resolve_angle(op, params)
    psi, squeeze = _working_copy(state, params)
    _apply_inplace(psi, state.n_qubits, op, theta)
    return StateVector(state.n_qubits, psi[0] if squeeze else psi)


def run_circuit(circuit: Circuit, params=None, initial: Optional[StateVector] = None) -> StateVector:
    """Apply every gate of ``circuit`` in order.

    ``params`` is ``(n_slots,)`` or ``(batch, n_slots)``; in the batched
    case each row drives its own copy of the state.
    """
    params = _as_params(params)
    if circuit.n_slots:
        if params is None or params.shape[-1] != circuit.n_slots:
            got = None if params is None else params.shape
            raise ShapeError(f"circuit has {circuit.n_slots} slots, params shape {got}")
    if initial is None:
        initial = init_zero_state(circuit.n_qubits)
    if initial.n_qubits != circuit.n_qubits:
        raise ShapeError(
            f"circuit acts on {circuit.n_qubits} qubits, state has {initial.n_qubits}"
        )
    psi, squeeze = _working_copy(initial, params)
    for op in circuit.ops:
        _apply_inplace(psi, circuit.n_qubits, op, _resolve_angle(op, params))
    return StateVector(circuit.n_qubits, psi[0] if squeeze else psi)


# -- measurement ---------------------------------------------------------------


def _zero_marginals(probs: np.ndarray, n: int) -> np.ndarray:
    flat = probs.reshape(-1, 2**n)
    out = np.empty((flat.shape[0], n))
    for q in range(n):
        out[:, q] = flat.reshape(-1, 2 ** (n - q - 1), 2, 2**q)[:, :, 0, :].sum(axis=(1, 2))
    return out.reshape(probs.shape[:-1] + (n,))


def qubit_zero_probabilities(state: StateVector) -> np.ndarray:
    """Probability of reading ``|0>`` on each qubit, shape ``(..., n_qubits)``."""
    return _zero_marginals(state.probabilities(), state.n_qubits)


def expectation_sigma_z(state: StateVector, qubit: int):
    if not 0 <= qubit < state.n_qubits:
        raise ShapeError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    return 2.0 * qubit_zero_probabilities(state)[..., qubit] - 1.0


def sample_bitstrings(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``shots`` basis indices per row by inverse-CDF sampling.

    Returns per-row counts of every basis index, shape ``probs.shape``.
    """
    flat = probs.reshape(-1, probs.shape[-1])
    cdf = np.cumsum(flat, axis=1)
    cdf /= cdf[:, -1:]
    counts = np.empty(flat.shape, dtype=np.int64)
    dim = flat.shape[1]
    for row in range(flat.shape[0]):
        draws = rng.random(shots)
        idx = np.searchsorted(cdf[row], draws, side="right")
        np.minimum(idx, dim - 1, out=idx)
        counts[row] = np.bincount(idx, minlength=dim)
    return counts.reshape(probs.shape)


def sample_zero_probabilities(state: StateVector, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Shot-based estimate of :func:`qubit_zero_probabilities`.

    Full-register bitstrings are sampled and then marginalized per qubit,
    so inter-qubit correlations are preserved in the underlying draws.
    """
    if shots is None or int(shots) < 1:
        raise ValueError(f"shots must be >= 1 (use the exact path for 0), got {shots}")
    counts = sample_bitstrings(state.probabilities(), int(shots), rng)
    return _zero_marginals(counts.astype(float), state.n_qubits) / int(shots)


def measure_zero_probabilities(state: StateVector, shots: int = 0, rng=None) -> np.ndarray:
    """Exact marginals when ``shots == 0``, sampled estimates otherwise."""
    if not shots:
        return qubit_zero_probabilities(state)
    if rng is None:
        raise ValueError("shot-based measurement needs an explicit rng")
    return sample_zero_probabilities(state, shots, rng)


def fidelity(a: StateVector, b: StateVector) -> np.ndarray:
    """``|<a|b>|**2``, row-wise for batched states."""
    return np.abs(np.sum(np.conj(a.amplitudes) * b.amplitudes, axis=-1)) ** 2


__all__ = [
    "MAX_QUBITS",
    "GateKind",
    "GateOp",
    "Circuit",
    "StateVector",
    "init_zero_state",
    "apply_gate",
    "run_circuit",
    "qubit_zero_probabilities",
    "expectation_sigma_z",
    "sample_bitstrings",
    "sample_zero_probabilities",
    "measure_zero_probabilities",
    "fidelity",
]
