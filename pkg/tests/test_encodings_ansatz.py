from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridqnn.ansatz import AnsatzFamily, AnsatzSpec, build_ansatz, init_ansatz_params, parameter_count
from hybridqnn.encodings import (
    EncodingKind,
    EncodingSpec,
    angle_encode,
    dense_angle_encode,
    encoding_template,
)
from hybridqnn.exceptions import ConfigurationError, EncodingDomainError, ShapeError
from hybridqnn.simulator import GateKind, StateVector, qubit_zero_probabilities, run_circuit

from oracles import circuit_unitary, ry, rx, rz

ANGLE4 = EncodingSpec(EncodingKind.ANGLE, 4)
DENSE3 = EncodingSpec(EncodingKind.DENSE_ANGLE, 3)


class TestAngleEncode:
    def test_zero_input(self):
        state = run_circuit(angle_encode(np.zeros(4), ANGLE4))
        np.testing.assert_array_equal(qubit_zero_probabilities(state), [1, 1, 1, 1])

    def test_single_pixel(self):
        p0 = qubit_zero_probabilities(run_circuit(angle_encode([0.8, 0, 0, 0], ANGLE4)))
        expected = abs((ry(0.8) @ [1, 0])[0]) ** 2
        np.testing.assert_allclose(p0, [expected, 1, 1, 1], atol=1e-14)
        assert p0[0] == pytest.approx(0.84835, abs=1e-5)

    def test_upper_edge_never_below_limit(self):
        xs = np.array([0.9, 0.99, 0.999, 0.99999, np.nextafter(1.0, 0.0)])
        p0 = [qubit_zero_probabilities(run_circuit(angle_encode([x, 0, 0, 0], ANGLE4)))[0] for x in xs]
        assert np.all(np.diff(p0) < 0)
        assert min(p0) >= np.cos(0.5) ** 2
        assert p0[-1] == pytest.approx(0.77015, abs=1e-5)

    @pytest.mark.parametrize("bad", [[1.0, 0, 0, 0], [-0.1, 0, 0, 0], [np.nan, 0, 0, 0]])
    def test_domain(self, bad):
        with pytest.raises(EncodingDomainError):
            angle_encode(bad, ANGLE4)

    def test_length(self):
        with pytest.raises(ShapeError):
            angle_encode([0.1, 0.2], ANGLE4)

    def test_only_fixed_angles(self):
        circuit = angle_encode([0.1, 0.2, 0.3, 0.4], ANGLE4)
        assert circuit.n_slots == 0
        assert all(op.kind is GateKind.RY and op.targets == (q,) for q, op in enumerate(circuit.ops))

    def test_scaled(self):
        spec = EncodingSpec(EncodingKind.ANGLE, 2, angle_scale=np.pi)
        p0 = qubit_zero_probabilities(run_circuit(angle_encode([0.5, 0.25], spec)))
        np.testing.assert_allclose(p0, np.cos(np.pi * np.array([0.5, 0.25]) / 2) ** 2)


class TestDenseAngleEncode:
    def test_zero_input(self):
        state = run_circuit(dense_angle_encode(np.zeros(9), DENSE3))
        np.testing.assert_allclose(state.amplitudes[0], 1)

    def test_quarter_turn_on_first_qubit(self):
        spec = EncodingSpec(EncodingKind.DENSE_ANGLE, 3, angle_scale=np.pi)
        x = np.zeros(9)
        x[0] = 0.5  # scaled angle pi/2
        p0 = qubit_zero_probabilities(run_circuit(dense_angle_encode(x, spec)))
        single = abs((rx(np.pi / 2) @ [1, 0])[0]) ** 2
        np.testing.assert_allclose(p0, [single, 1, 1], atol=1e-14)
        assert single == pytest.approx(0.5)

    def test_gate_count_and_order(self):
        circuit = dense_angle_encode(np.linspace(0, 0.8, 9), DENSE3)
        assert circuit.n_gates == 9
        kinds = [op.kind.value for op in circuit.ops]
        assert kinds == ["Rx", "Rz", "Rx"] * 3
        assert [op.targets[0] for op in circuit.ops] == [0, 0, 0, 1, 1, 1, 2, 2, 2]

    def test_matches_single_qubit_products(self):
        x = np.array([0.1, 0.5, 0.9, 0.3, 0.7, 0.2, 0.6, 0.4, 0.8])
        state = run_circuit(dense_angle_encode(x, DENSE3))
        factors = [rx(x[3 * q + 2]) @ rz(x[3 * q + 1]) @ rx(x[3 * q]) @ [1, 0] for q in range(3)]
        expected = np.kron(np.kron(factors[2], factors[1]), factors[0])
        np.testing.assert_allclose(state.amplitudes, expected, atol=1e-14)

    def test_length(self):
        with pytest.raises(ShapeError):
            dense_angle_encode(np.zeros(8), DENSE3)


def test_encoding_spec_validation():
    with pytest.raises(ConfigurationError):
        EncodingSpec(EncodingKind.ANGLE, 4, angle_scale=0)
    assert DENSE3.n_inputs == 9 and ANGLE4.n_inputs == 4


def test_template_slots_follow_pixels():
    t = encoding_template(DENSE3)
    assert [op.slot for op in t.ops] == list(range(9))
    assert [op.targets[0] for op in t.ops] == [j // 3 for j in range(9)]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 0.999999), min_size=4, max_size=4), st.floats(0.1, 4.0))
def test_angle_probability_law(xs, scale):
    spec = EncodingSpec(EncodingKind.ANGLE, 4, scale)
    p0 = qubit_zero_probabilities(run_circuit(angle_encode(xs, spec)))
    np.testing.assert_allclose(p0, np.cos(scale * np.array(xs) / 2) ** 2, atol=1e-13)


class TestAnsatz:
    def test_all_to_all_four(self):
        circuit = build_ansatz(AnsatzSpec("all_to_all", 4, 1))
        assert circuit.n_slots == 10
        assert sum(op.kind is GateKind.CRX for op in circuit.ops) == 6

    def test_circuit_block_four(self):
        circuit = build_ansatz(AnsatzSpec("circuit_block", 4, 1))
        assert circuit.n_slots == 4
        cnots = [op.targets for op in circuit.ops if op.kind is GateKind.CNOT]
        assert cnots == [(0, 1), (1, 2), (2, 3)]

    def test_circuit_block_nine_three_layers(self):
        assert build_ansatz(AnsatzSpec("circuit_block", 9, 3)).n_slots == 27

    @pytest.mark.parametrize(
        "family,n,layers,count",
        [("all_to_all", 9, 1, 45), ("circuit_block", 4, 4, 16), ("circuit_block", 4, 2, 8)],
    )
    def test_parameter_count(self, family, n, layers, count):
        assert parameter_count(AnsatzSpec(family, n, layers)) == count

    @pytest.mark.parametrize("family,n,layers", list(product(AnsatzFamily, range(2, 10), range(1, 5))))
    def test_count_matches_circuit(self, family, n, layers):
        spec = AnsatzSpec(family, n, layers)
        assert build_ansatz(spec).n_slots == parameter_count(spec)

    def test_too_few_qubits(self):
        with pytest.raises(ConfigurationError):
            AnsatzSpec("all_to_all", 1)

    def test_unknown_family(self):
        with pytest.raises(ConfigurationError):
            AnsatzSpec("ring", 4)

    def test_lower_index_controls(self):
        circuit = build_ansatz(AnsatzSpec("all_to_all", 4, 2))
        pairs = [op.targets for op in circuit.ops if op.kind is GateKind.CRX]
        assert all(c < t for c, t in pairs)
        assert len(set(pairs)) == 6 and len(pairs) == 12

    @pytest.mark.parametrize("layers", [1, 2])
    def test_all_to_all_identity_at_zero(self, layers):
        circuit = build_ansatz(AnsatzSpec("all_to_all", 3, layers))
        rng = np.random.default_rng(0)
        psi = rng.normal(size=8) + 1j * rng.normal(size=8)
        psi /= np.linalg.norm(psi)
        out = run_circuit(circuit, np.zeros(circuit.n_slots), StateVector(3, psi))
        np.testing.assert_allclose(out.amplitudes, psi, atol=1e-10)

    def test_circuit_block_zero_is_cnot_chain(self):
        circuit = build_ansatz(AnsatzSpec("circuit_block", 3, 1))
        rng = np.random.default_rng(1)
        psi = rng.normal(size=8) + 1j * rng.normal(size=8)
        psi /= np.linalg.norm(psi)
        out = run_circuit(circuit, np.zeros(3), StateVector(3, psi))
        np.testing.assert_allclose(out.amplitudes, circuit_unitary(circuit, np.zeros(3)) @ psi, atol=1e-10)
        assert not np.allclose(out.amplitudes, psi)

    def test_deterministic(self):
        spec = AnsatzSpec("all_to_all", 5, 2)
        assert build_ansatz(spec) == build_ansatz(spec)

    def test_init_range(self):
        values = init_ansatz_params(AnsatzSpec("all_to_all", 9, 2), np.random.default_rng(0))
        assert values.shape == (90,)
        assert np.all(np.abs(values) < 0.1)
