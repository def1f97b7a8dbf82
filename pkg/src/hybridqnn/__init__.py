"""Hybrid quantum-classical convolutional networks on a numpy statevector simulator."""
__version__ = "0.1.0"

from .ansatz_analysis import analyze_ansatz, entangling_capability, expressibility, meyer_wallach
from .ansatz import AnsatzFamily, AnsatzSpec, build_ansatz, parameter_count
from .encodings import EncodingKind, EncodingSpec, angle_encode, dense_angle_encode
from .estimators import HybridClassifier, QuanvolutionTransformer
from .exceptions import (
    ConfigurationError,
    DomainError,
    EncodingDomainError,
    HybridQNNError,
    IngestionError,
    ParameterBindingError,
    ShapeError,
    SizeError,
    StateError,
    StatisticsError,
)
from .models import Model, ModelKind, ModelSpec, build_model
from .simulator import Circuit, GateKind, GateOp, StateVector, run_circuit

__all__ = [
    "AnsatzFamily", "AnsatzSpec", "Circuit", "ConfigurationError", "DomainError", "EncodingDomainError",
    "EncodingKind", "EncodingSpec", "GateKind", "GateOp", "HybridClassifier", "HybridQNNError",
    "IngestionError", "Model", "ModelKind", "ModelSpec", "ParameterBindingError", "QuanvolutionTransformer",
    "ShapeError", "SizeError", "StateError", "StateVector", "StatisticsError", "analyze_ansatz",
    "angle_encode", "build_ansatz", "build_model", "dense_angle_encode", "entangling_capability",
    "expressibility", "meyer_wallach", "parameter_count", "run_circuit",
]
