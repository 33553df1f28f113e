from .logger import get_logger
from .rng import derive_seed, individual_stream

__all__ = [
    'get_logger',
    'derive_seed',
    'individual_stream',
]
