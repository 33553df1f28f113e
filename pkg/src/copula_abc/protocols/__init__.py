from .logger import LoggerProtocol
from .sampler import PosteriorSamplerProtocol
from .simulator import DatasetSimulatorProtocol

__all__ = [
    'LoggerProtocol',
    'PosteriorSamplerProtocol',
    'DatasetSimulatorProtocol',
]
