"""scikit-learn compatible front end.

:class:`HybridClassifier` trains any of the six architectures with the
package's SGD loop; :class:`QuanvolutionTransformer` applies one quantum
convolution with fixed angles as a feature extractor for a downstream
classical estimator.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigurationError
from .models import ModelSpec, build_model
from .qlayers import angle_conv_spec, dense_conv_spec, qconv_forward
from .training import TrainConfig, fit, make_streams, predict_logits
from .validation import check_images, check_labels


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class HybridClassifier(ClassifierMixin, BaseEstimator):
    """Image classifier backed by a (hybrid) convolutional network.

    ``X`` holds square single-channel images with pixels in ``[0, 1)``,
    either flat or as ``(N, H, W)`` / ``(N, 1, H, W)``. ``model`` is one of
    ``cnn``, ``resnet``, ``qccnn1``, ``qccnn2``, ``qcresnet1``,
    ``qcresnet2``.
    """

    def __init__(self, model="qccnn1", ansatz="all_to_all", n_layers=1, shots=0, angle_scale=1.0,
                 learning_rate=0.05, batch_size=10, epochs=50, random_state=0, shuffle=True):
        self.model = model
        self.ansatz = ansatz
        self.n_layers = n_layers
        self.shots = shots
        self.angle_scale = angle_scale
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state
        self.shuffle = shuffle

    def _spec(self, input_size, n_classes):
        return ModelSpec(self.model, self.ansatz, self.n_layers, self.shots, self.angle_scale,
                         input_size, n_classes)

    def fit(self, X, y, eval_set=None):
        """Train from scratch. ``eval_set=(X_val, y_val)`` fills the ``test_acc`` history column."""
        X = check_images(X)
        self.classes_, encoded = check_labels(y, len(X))
        self.input_size_ = X.shape[2]
        self.model_ = build_model(self._spec(self.input_size_, len(self.classes_)))
        test = None
        if eval_set is not None:
            X_val = check_images(eval_set[0], self.input_size_)
            lookup = {c: i for i, c in enumerate(self.classes_)}
            try:
                y_val = np.array([lookup[v] for v in np.asarray(eval_set[1])], dtype=int)
            except KeyError as exc:
                raise ConfigurationError(f"eval_set has a label unseen in training: {exc}") from None
            test = (X_val, y_val)
        config = TrainConfig(self.learning_rate, self.batch_size, self.epochs, int(self.random_state), self.shuffle)
        state = fit(self.model_, (X, encoded), config, test)
        self.params_ = state.params
        self.history_ = state.history
        self.n_iter_ = state.epoch
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_images(X, self.input_size_)
        # shot-mode inference draws from a fresh, seed-derived stream per call
        rng = make_streams(int(self.random_state))["shots"]
        return predict_logits(self.model_, X, self.params_, rng)

    def predict_proba(self, X):
        return _softmax(self.decision_function(X))

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


class QuanvolutionTransformer(TransformerMixin, BaseEstimator):
    """Fixed-angle quantum convolution as a feature map.

    ``encoding="angle"`` uses a ``window x window`` patch with one qubit per
    pixel; ``encoding="dense"`` uses a 3x3 patch on three qubits. Angles
    are drawn uniformly from ``[-init_scale, init_scale]`` at fit time.
    Output rows are the flattened ``(channels, H_out, W_out)`` maps.
    """

    def __init__(self, window=2, encoding="angle", ansatz="all_to_all", n_layers=1, stride=None, padding=0,
                 shots=0, angle_scale=1.0, init_scale=np.pi, random_state=0):
        self.window = window
        self.encoding = encoding
        self.ansatz = ansatz
        self.n_layers = n_layers
        self.stride = stride
        self.padding = padding
        self.shots = shots
        self.angle_scale = angle_scale
        self.init_scale = init_scale
        self.random_state = random_state

    def _conv_spec(self):
        if self.encoding == "angle":
            return angle_conv_spec(self.window, self.ansatz, self.n_layers, self.stride, self.padding,
                                   self.shots, self.angle_scale)
        if self.encoding == "dense":
            return dense_conv_spec(self.ansatz, self.n_layers, self.stride or 1, self.padding, self.shots,
                                   self.angle_scale)
        raise ConfigurationError(f"encoding must be 'angle' or 'dense', got {self.encoding!r}")

    def fit(self, X, y=None):
        X = check_images(X)
        self.spec_ = self._conv_spec()
        self.input_size_ = X.shape[2]
        self.output_shape_ = (self.spec_.out_channels,) + self.spec_.output_hw(self.input_size_, self.input_size_)
        rng = make_streams(int(self.random_state))["init"]
        self.theta_ = rng.uniform(-self.init_scale, self.init_scale, self.spec_.n_params)
        self.n_features_out_ = int(np.prod(self.output_shape_))
        return self

    def transform(self, X):
        check_is_fitted(self, "theta_")
        X = check_images(X, self.input_size_)
        rng = make_streams(int(self.random_state))["shots"] if self.shots else None
        out = qconv_forward(X, self.spec_, self.theta_, rng)
        return out.reshape(len(X), -1)
