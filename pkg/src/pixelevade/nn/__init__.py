from .adam import AdamState, adam_step
from .checkpoint import (load_network, network_entries, network_from_entries,
                         read_container, save_network, write_container)
from .errors import CheckpointError, ShapeError
from .functional import cross_entropy, log_softmax, softmax
from .layers import Conv2d, Dense, Flatten, Relu
from .network import Network, sequential

__all__ = [
    "AdamState", "adam_step",
    "load_network", "network_entries", "network_from_entries",
    "read_container", "save_network", "write_container",
    "CheckpointError", "ShapeError",
    "cross_entropy", "log_softmax", "softmax",
    "Conv2d", "Dense", "Flatten", "Relu",
    "Network", "sequential",
]
