from .copula import DatasetSimulator
from .engine import InferenceEngine, Initialization, InitSettings
from .model import CountDataset, HyperParams, MarginalFamily, MarginalParams, ParameterLayout, StudyDesign
from .simstudy import SimulationStudy, StudySettings
from .summaries import KernelSpec, SummaryCalculator, SummaryVector

__all__ = [
    'DatasetSimulator',
    'InferenceEngine',
    'Initialization',
    'InitSettings',
    'CountDataset',
    'HyperParams',
    'MarginalFamily',
    'MarginalParams',
    'ParameterLayout',
    'StudyDesign',
    'SimulationStudy',
    'StudySettings',
    'KernelSpec',
    'SummaryCalculator',
    'SummaryVector',
]
