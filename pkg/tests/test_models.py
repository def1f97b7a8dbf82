import numpy as np
import pytest

from hybridqnn.ansatz import AnsatzSpec, parameter_count
from hybridqnn.exceptions import ConfigurationError, ShapeError, StateError
from hybridqnn.models import ModelKind, ModelSpec, ParameterLayout, build_model
from hybridqnn.training import cross_entropy_loss, sgd_step

from oracles import central_difference

KINDS = [k.value for k in ModelKind]


def small(kind, **kw):
    return build_model(ModelSpec(kind, input_size=6, **kw))


def images(rng, n, size):
    return rng.uniform(0.05, 0.95, (n, 1, size, size))


@pytest.mark.parametrize("kind", KINDS)
def test_full_size_logits(kind):
    model = build_model(ModelSpec(kind))
    rng = np.random.default_rng(0)
    logits = model.forward(images(rng, 2, 20), model.init_params(rng))
    assert logits.shape == (2, 4)
    assert np.all(np.isfinite(logits))


def test_qccnn1_shapes():
    shapes = dict(build_model(ModelSpec("qccnn1")).shapes)
    assert shapes["qconv1"] == (4, 10, 10)


@pytest.mark.parametrize(
    "kind,quantum",
    [
        ("cnn", 0),
        ("resnet", 0),
        ("qccnn1", parameter_count(AnsatzSpec("all_to_all", 4))),
        ("qccnn2", parameter_count(AnsatzSpec("all_to_all", 9)) + parameter_count(AnsatzSpec("all_to_all", 4))),
        ("qcresnet1", parameter_count(AnsatzSpec("all_to_all", 3))),
        ("qcresnet2", parameter_count(AnsatzSpec("all_to_all", 3)) + parameter_count(AnsatzSpec("all_to_all", 9))),
    ],
)
def test_quantum_parameter_counts(kind, quantum):
    model = build_model(ModelSpec(kind))
    assert model.layout.n_quantum == quantum
    assert sum(layer.spec.n_params for layer in model.quantum_layers()) == quantum
    assert model.kind.hybrid == (quantum > 0)


@pytest.mark.parametrize("kind", KINDS)
def test_layout_round_trip(kind):
    model = small(kind)
    flat = model.init_params(np.random.default_rng(1))
    named = model.layout.unflatten(flat)
    np.testing.assert_array_equal(model.layout.flatten(named), flat)
    assert sum(v.size for v in named.values()) == model.n_params
    assert model.layout.mask(True).sum() + model.layout.mask(False).sum() == model.n_params


def test_layout_rejects_bad_length():
    with pytest.raises(ShapeError):
        small("cnn").layout.unflatten(np.zeros(3))


@pytest.mark.parametrize("kind", KINDS)
def test_gradients_match_finite_differences(kind):
    model = small(kind)
    rng = np.random.default_rng(2)
    x, y = images(rng, 2, 6), np.array([0, 3])
    params = model.init_params(rng)
    _, dlogits = cross_entropy_loss(model.forward(x, params), y)
    grad = model.backward(dlogits)

    def loss(p):
        return cross_entropy_loss(model.forward(x, p), y)[0]

    quantum = np.flatnonzero(model.layout.mask(True))
    classical = rng.choice(np.flatnonzero(model.layout.mask(False)), 20, replace=False)
    idx = [(int(i),) for i in np.concatenate([quantum, classical])]
    fd = central_difference(loss, params, 1e-5, idx)
    sel = [i[0] for i in idx]
    np.testing.assert_allclose(grad[sel], fd[sel], atol=1e-7)


@pytest.mark.parametrize("kind", KINDS)
def test_every_segment_moves_after_a_step(kind):
    model = small(kind)
    rng = np.random.default_rng(3)
    x, y = images(rng, 4, 6), np.arange(4)
    params = model.init_params(rng)
    _, dlogits = cross_entropy_loss(model.forward(x, params), y)
    new = sgd_step(params, model.backward(dlogits), 0.05)
    for seg in model.layout:
        assert np.any(new[seg.slice] != params[seg.slice]), seg.name


def test_zero_quantum_params_reduce_to_encode_and_measure():
    model = build_model(ModelSpec("qccnn1"))
    rng = np.random.default_rng(4)
    x = images(rng, 1, 20)
    qconv = model.layers[0]
    out = qconv.forward(x, {"theta": np.zeros(qconv.spec.n_params)})
    # all-to-all ansatz at zero angles is the identity; qubit q reads pixel q of each 2x2 block
    blocks = x[0, 0].reshape(10, 2, 10, 2).transpose(1, 3, 0, 2).reshape(4, 10, 10)
    np.testing.assert_allclose(out[0], np.cos(blocks / 2) ** 2, atol=1e-12)


def test_backward_needs_fresh_forward():
    model = small("cnn")
    params = model.init_params(np.random.default_rng(0))
    model.forward(np.full((1, 1, 6, 6), 0.5), params)
    model.backward(np.zeros((1, 4)))
    with pytest.raises(StateError):
        model.backward(np.zeros((1, 4)))


def test_input_shape_checked():
    model = small("cnn")
    with pytest.raises(ShapeError):
        model.forward(np.zeros((1, 1, 5, 5)), np.zeros(model.n_params))


def test_unknown_kind():
    with pytest.raises(ConfigurationError):
        ModelSpec("lenet")


def test_first_quantum_layer_skips_input_gradient():
    model = build_model(ModelSpec("qccnn2"))
    first, second = model.quantum_layers()
    assert not first.needs_input_grad and second.needs_input_grad


def test_circuit_block_variant():
    model = build_model(ModelSpec("qccnn1", ansatz_family="circuit_block", ansatz_layers=2))
    assert model.layout.n_quantum == 8


def test_describe_names_every_layer():
    model = build_model(ModelSpec("qcresnet2"))
    lines = model.describe()
    assert len(lines) == len(model.layers)
    assert lines[-1].endswith(":4")


def test_layout_is_deterministic():
    a = ParameterLayout.from_layers(small("qcresnet1").layers)
    b = ParameterLayout.from_layers(small("qcresnet1").layers)
    assert [(s.name, s.offset) for s in a] == [(s.name, s.offset) for s in b]
