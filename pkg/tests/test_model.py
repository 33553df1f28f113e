import numpy as np
import pytest

from copula_abc.core.model import (
    CountDataset,
    HyperParams,
    Margin,
    MarginalFamily,
    MarginalParams,
    ParameterLayout,
    StudyDesign,
)
from copula_abc.errors import ConfigError, DomainError, NumericOverflowError


def _partial_design() -> StudyDesign:
    margins = (Margin("11", 5), Margin("12", 5), Margin("11", 9))
    cells = np.array([[1, 2], [0, 1], [1, 0], [0, 0]])
    predictors = np.column_stack([np.ones(4), np.arange(4.0)])
    return StudyDesign(margins=margins, n_individuals=2, cells=cells, predictors=predictors)


class TestStudyDesign:
    def test_cells_sorted_lexicographically(self):
        design = _partial_design()
        assert design.cells.tolist() == [[0, 0], [0, 1], [1, 0], [1, 2]]
        # предикторы переставлены вместе с ячейками
        assert design.predictors[:, 1].tolist() == [3.0, 1.0, 2.0, 0.0]

    def test_patterns_and_observed_margins(self):
        design = _partial_design()
        assert design.observed_margins(1).tolist() == [0, 2]
        assert set(design.patterns) == {(0, 1), (0, 2)}
        assert design.observed_mask().sum() == 4

    def test_find_margin(self):
        design = _partial_design()
        assert design.find_margin("11", 9) == 2
        with pytest.raises(DomainError):
            design.find_margin("48", 23)

    def test_duplicate_cell_rejected(self):
        with pytest.raises(ConfigError):
            StudyDesign(
                margins=(Margin("1", 0),),
                n_individuals=1,
                cells=np.array([[0, 0], [0, 0]]),
                predictors=np.ones((2, 1)),
            )

    def test_intercept_column_required(self):
        with pytest.raises(ConfigError):
            StudyDesign(
                margins=(Margin("1", 0),),
                n_individuals=1,
                cells=np.array([[0, 0]]),
                predictors=np.array([[2.0]]),
            )

    def test_duplicate_margins_rejected(self):
        with pytest.raises(ConfigError):
            StudyDesign(
                margins=(Margin("1", 0), Margin("1", 0)),
                n_individuals=1,
                cells=np.array([[0, 0]]),
                predictors=np.ones((1, 1)),
            )

    def test_margin_label(self):
        assert Margin("55", 13).label == "(55,13)"


class TestMarginalParams:
    def test_hurdle_requires_alpha(self):
        with pytest.raises(ConfigError):
            MarginalParams(family=MarginalFamily.NB_HURDLE, beta=[0.1], phi=1.0)

    def test_plain_nb_rejects_alpha(self):
        with pytest.raises(ConfigError):
            MarginalParams(family=MarginalFamily.PLAIN_NB, alpha=[0.1], beta=[0.1], phi=1.0)

    def test_poisson_rejects_phi(self):
        with pytest.raises(ConfigError):
            MarginalParams(family="poisson-hurdle", alpha=[0.1], beta=[0.1], phi=1.0)

    @pytest.mark.parametrize("phi", [0.0, -1.0, np.inf])
    def test_phi_positive(self, phi):
        with pytest.raises(ConfigError):
            MarginalParams(family=MarginalFamily.NB_HURDLE, alpha=[0.1], beta=[0.1], phi=phi)

    def test_dimension_check(self, design):
        params = MarginalParams(family=MarginalFamily.NB_HURDLE, alpha=[0.1], beta=[0.1], phi=1.0)
        with pytest.raises(ConfigError):
            params.check_dimension(design)


class TestCountDataset:
    def test_negative_counts_rejected(self):
        design = _partial_design()
        with pytest.raises(DomainError):
            CountDataset(design=design, values=np.array([0, 1, -1, 2]))

    def test_non_integer_counts_rejected(self):
        design = _partial_design()
        with pytest.raises(DomainError):
            CountDataset(design=design, values=np.array([0, 1.5, 1, 2]))

    def test_matrix_has_gaps_for_unobserved(self):
        dataset = CountDataset(design=_partial_design(), values=np.array([0, 3, 1, 2]))
        matrix = dataset.to_matrix()
        assert matrix.shape == (2, 3)
        assert np.isnan(matrix[0, 2]) and np.isnan(matrix[1, 1])
        assert dataset.presence.tolist() == [False, True, True, True]
        assert dataset.as_dict()[(1, 2)] == 2


def test_hyper_params_positive():
    with pytest.raises(ConfigError):
        HyperParams(tau2_alpha=0.0)


class TestParameterLayout:
    def test_names_and_sizes(self):
        layout = ParameterLayout(
            family=MarginalFamily.NB_HURDLE,
            predictor_names=("intercept", "x1"),
            adjacency_names=("ct", "t"),
        )
        assert layout.size == 7
        assert layout.marginal_size == 5
        assert layout.names() == [
            "alpha:intercept",
            "alpha:x1",
            "beta:intercept",
            "beta:x1",
            "log_phi",
            "rho:ct",
            "rho:t",
        ]

    @pytest.mark.parametrize(
        "family, size",
        [(MarginalFamily.POISSON_HURDLE, 4), (MarginalFamily.PLAIN_NB, 3), (MarginalFamily.NB_HURDLE, 5)],
    )
    def test_family_blocks(self, family, size):
        layout = ParameterLayout(family=family, predictor_names=("intercept",), adjacency_names=("t",))
        assert layout.size == size
        assert layout.has_block("alpha") == family.has_presence
        assert layout.has_block("log_phi") == family.has_dispersion

    def test_pack_unpack(self, layout, nb_params):
        theta = layout.pack(nb_params, np.array([0.25]))
        assert theta[layout.slice_of("log_phi")][0] == pytest.approx(np.log(2.0))
        params, rho = layout.unpack(theta)
        np.testing.assert_allclose(params.alpha, nb_params.alpha)
        assert params.phi == pytest.approx(2.0)
        assert rho.tolist() == [0.25]

    def test_unpack_wrong_length(self, layout):
        with pytest.raises(DomainError):
            layout.unpack(np.zeros(layout.size + 1))

    def test_unpack_overflowing_dispersion(self, layout, truth_theta):
        theta = truth_theta.copy()
        theta[layout.slice_of("log_phi")] = 1e6
        with pytest.raises(NumericOverflowError):
            layout.unpack(theta)

    def test_missing_block(self):
        layout = ParameterLayout(family=MarginalFamily.PLAIN_NB, predictor_names=("intercept",))
        with pytest.raises(DomainError):
            layout.slice_of("alpha")
