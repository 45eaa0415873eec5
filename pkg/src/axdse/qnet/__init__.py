from .cifar import CifarFormatError, Dataset, load_cifar10, synthetic_cifar, write_cifar10
from .engine import (
    ConfigurationError,
    evaluate_accuracy,
    exact_assignment,
    forward,
    infer,
    predict,
)
from .network import (
    FloatNetwork,
    NetworkFormatError,
    Node,
    QuantNetwork,
    QuantParams,
    UnsupportedTopology,
    count_mults,
    load_network,
    resnet_v1_cifar,
    save_network,
)
from .quantize import float_forward, quantize_network
from .reference import reference_forward, reference_predict

__all__ = [
    "CifarFormatError", "ConfigurationError", "Dataset", "FloatNetwork", "NetworkFormatError", "Node",
    "QuantNetwork", "QuantParams", "UnsupportedTopology", "count_mults", "evaluate_accuracy",
    "exact_assignment", "float_forward", "forward", "infer", "load_cifar10", "load_network", "predict",
    "quantize_network", "reference_forward", "reference_predict", "resnet_v1_cifar", "save_network",
    "synthetic_cifar", "write_cifar10",
]
