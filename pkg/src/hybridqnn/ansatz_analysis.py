"""Expressibility and entangling capability of parameterized circuits.

Expressibility compares the histogram of pairwise state fidelities
``|<psi(theta)|psi(phi)>|**2`` over uniformly random parameters with the
Haar-random fidelity law ``(d - 1) (1 - F)**(d - 2)``; the score is the KL
divergence in nats (lower means more expressible). Entangling capability
is the mean Meyer-Wallach ``Q`` of the states the circuit produces.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ansatz import AnsatzSpec, build_ansatz, parameter_count
from .exceptions import DomainError, StatisticsError
from .simulator import Circuit, StateVector, fidelity, run_circuit

DEFAULT_BINS = 75
DEFAULT_PAIRS = 5000
DEFAULT_ENTANGLEMENT_SAMPLES = 1000

# amplitudes held in memory at once while sampling
_CHUNK_AMPLITUDES = 1 << 21


@dataclass
class ExpressibilityReport:
    n_samples: int
    n_bins: int
    kl_divergence: float
    histogram: np.ndarray = field(repr=False)
    haar_masses: np.ndarray = field(repr=False)


def _random_states(circuit: Circuit, count: int, rng: np.random.Generator):
    """Yield batches of states for ``count`` uniform draws of the parameters."""
    chunk = max(1, _CHUNK_AMPLITUDES >> circuit.n_qubits)
    done = 0
    while done < count:
        size = min(chunk, count - done)
        params = rng.uniform(0.0, 2 * np.pi, size=(size, circuit.n_slots))
        yield run_circuit(circuit, params)
        done += size


def fidelity_samples(circuit: Circuit, n_pairs: int, rng: np.random.Generator) -> np.ndarray:
    if n_pairs < 1:
        raise StatisticsError(f"n_pairs must be >= 1, got {n_pairs}")
    if circuit.n_slots == 0:
        return np.ones(n_pairs)
    out = []
    for batch in _random_states(circuit, 2 * n_pairs, rng):
        amps = batch.amplitudes
        half = amps.shape[0] // 2
        # pairs are formed within each batch; a leftover odd row is dropped
        a = StateVector(circuit.n_qubits, amps[:half])
        b = StateVector(circuit.n_qubits, amps[half : 2 * half])
        out.append(fidelity(a, b))
    fids = np.concatenate(out)[:n_pairs]
    if fids.size < n_pairs:
        extra = fidelity_samples(circuit, n_pairs - fids.size, rng)
        fids = np.concatenate([fids, extra])
    return np.clip(fids, 0.0, 1.0)


def haar_bin_log_masses(n_qubits: int, n_bins: int) -> np.ndarray:
    """Log of the Haar fidelity probability in each of ``n_bins`` equal bins.

    Uses the exact CDF ``1 - (1 - F)**(d - 1)``, evaluated in log space so
    the top bin stays finite for large ``d``.
    """
    d = 2**n_qubits
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    lo, hi = 1.0 - edges[:-1], 1.0 - edges[1:]
    with np.errstate(divide="ignore"):
        ratio = np.where(hi > 0, np.exp((d - 1) * (np.log(hi) - np.log(lo))), 0.0)
        return (d - 1) * np.log(lo) + np.log1p(-ratio)


def histogram_kl(histogram, n_qubits: int) -> float:
    """KL(histogram || Haar) in nats for a normalized histogram over equal bins of [0, 1]."""
    p = np.asarray(histogram, dtype=float)
    log_q = haar_bin_log_masses(n_qubits, p.size)
    nz = p > 0
    return max(float(np.sum(p[nz] * (np.log(p[nz]) - log_q[nz]))), 0.0)


def expressibility_kl(fidelities, n_qubits: int, n_bins: int = DEFAULT_BINS) -> ExpressibilityReport:
    fidelities = np.asarray(fidelities, dtype=float).ravel()
    if fidelities.size == 0:
        raise StatisticsError("cannot estimate expressibility from an empty sample set")
    if n_bins < 2:
        raise StatisticsError(f"n_bins must be >= 2, got {n_bins}")
    counts, _ = np.histogram(np.clip(fidelities, 0.0, 1.0), bins=n_bins, range=(0.0, 1.0))
    p = counts / counts.sum()
    return ExpressibilityReport(
        n_samples=int(fidelities.size),
        n_bins=n_bins,
        kl_divergence=histogram_kl(p, n_qubits),
        histogram=p,
        haar_masses=np.exp(haar_bin_log_masses(n_qubits, n_bins)),
    )


def single_qubit_purities(state: StateVector) -> np.ndarray:
    """``Tr(rho_q**2)`` for every qubit, shape ``(..., n_qubits)``."""
    n = state.n_qubits
    amps = state.amplitudes.reshape(-1, 2**n)
    out = np.empty((amps.shape[0], n))
    for q in range(n):
        m = amps.reshape(-1, 2 ** (n - q - 1), 2, 2**q).transpose(0, 2, 1, 3).reshape(-1, 2, 2 ** (n - 1))
        rho = m @ np.conj(m.transpose(0, 2, 1))
        out[:, q] = np.sum(np.abs(rho) ** 2, axis=(1, 2))
    return out.reshape(state.amplitudes.shape[:-1] + (n,))


def meyer_wallach(state: StateVector):
    if state.n_qubits < 2:
        raise DomainError("Meyer-Wallach entanglement needs at least 2 qubits")
    q = 2.0 * (1.0 - single_qubit_purities(state).mean(axis=-1))
    return np.clip(q, 0.0, 1.0)


def entangling_capability(circuit: Circuit, n_samples: int, rng: np.random.Generator) -> float:
    if n_samples < 1:
        raise StatisticsError(f"n_samples must be >= 1, got {n_samples}")
    if circuit.n_slots == 0:
        return float(meyer_wallach(run_circuit(circuit)))
    total = sum(float(np.sum(meyer_wallach(batch))) for batch in _random_states(circuit, n_samples, rng))
    return total / n_samples


def expressibility(
    circuit: Circuit,
    rng: np.random.Generator,
    n_pairs: int = DEFAULT_PAIRS,
    n_bins: int = DEFAULT_BINS,
) -> ExpressibilityReport:
    return expressibility_kl(fidelity_samples(circuit, n_pairs, rng), circuit.n_qubits, n_bins)


def analyze_ansatz(
    spec: AnsatzSpec,
    seed: int,
    n_pairs: int = DEFAULT_PAIRS,
    n_samples: int = DEFAULT_ENTANGLEMENT_SAMPLES,
    n_bins: int = DEFAULT_BINS,
) -> dict:
    """One report row for ``spec``; the two metrics use separate substreams."""
    circuit = build_ansatz(spec)
    expr_ss, ent_ss = np.random.SeedSequence(seed).spawn(2)
    report = expressibility(circuit, np.random.default_rng(expr_ss), n_pairs, n_bins)
    q = entangling_capability(circuit, n_samples, np.random.default_rng(ent_ss))
    return {
        "family": spec.family.value,
        "n_qubits": spec.n_qubits,
        "layers": spec.n_layers,
        "params": parameter_count(spec),
        "kl": report.kl_divergence,
        "q": q,
        "n_samples": n_pairs,
        "seed": seed,
    }
