from .base import AdaptationState, BasePosteriorSampler, ChainArchive, WeightedSample
from .importance import ImportanceSampler
from .mcmc import ABCMCMCSampler, abc_mcmc, adapt_proposal
from .rejection import RejectionSampler

__all__ = [
    'AdaptationState',
    'BasePosteriorSampler',
    'ChainArchive',
    'WeightedSample',
    'ABCMCMCSampler',
    'ImportanceSampler',
    'RejectionSampler',
    'abc_mcmc',
    'adapt_proposal',
]
