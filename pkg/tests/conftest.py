"""Общие фикстуры: маленькие полные дизайны, параметры и тихий логгер."""
import logging

import numpy as np
import pytest

from copula_abc.core.adjacency import AdjacencySpec
from copula_abc.core.copula import DatasetSimulator
from copula_abc.core.design import build_complete_design
from copula_abc.core.model import HyperParams, MarginalFamily, MarginalParams, ParameterLayout
from copula_abc.core.summaries import SummaryCalculator


@pytest.fixture
def silent_logger():
    logger = logging.getLogger("copula_abc.tests")
    logger.handlers.clear()
    logger.addHandler(logging.NullHandler())
    logger.propagate = False
    return logger


def make_design(n_individuals: int = 150, n_margins: int = 3, seed: int = 7):
    rng = np.random.default_rng(seed)
    covariates = rng.normal(size=(n_individuals, n_margins, 1))
    return build_complete_design(n_individuals, n_margins, covariates, ["x1"])


@pytest.fixture
def design():
    return make_design()


@pytest.fixture
def nb_params():
    return MarginalParams(
        family=MarginalFamily.NB_HURDLE,
        alpha=np.array([0.3, 0.5]),
        beta=np.array([0.5, 0.3]),
        phi=2.0,
    )


@pytest.fixture
def chain_adjacency():
    return AdjacencySpec.from_pairs("t", [(0, 1), (1, 2)])


@pytest.fixture
def layout(design, chain_adjacency):
    return ParameterLayout(
        family=MarginalFamily.NB_HURDLE,
        predictor_names=design.predictor_names,
        adjacency_names=(chain_adjacency.name,),
    )


@pytest.fixture
def truth_theta(layout, nb_params):
    return layout.pack(nb_params, np.array([0.3]))


@pytest.fixture
def simulator(design, chain_adjacency, layout, silent_logger):
    return DatasetSimulator(design, [chain_adjacency], layout, silent_logger)


@pytest.fixture
def calculator(design, chain_adjacency):
    return SummaryCalculator(design, [chain_adjacency], MarginalFamily.NB_HURDLE)


@pytest.fixture
def hyper():
    return HyperParams()
