"""Генерация данных гауссовой копулой: латентный вектор с корреляцией R → h(v)."""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from copula_abc.core.adjacency import AdjacencySpec
from copula_abc.core.marginals import DEFAULT_QUANTILE_CAP, latent_to_count_array
from copula_abc.core.model import CountDataset, MarginalParams, ParameterLayout, StudyDesign
from copula_abc.core.sar import CorrelationModel, DependenceParams, build_correlation
from copula_abc.errors import OutsideSupportError
from copula_abc.protocols import LoggerProtocol
from copula_abc.utils.rng import individual_stream


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    """Параметры одной генерации: seed и дизайн (паттерны пропусков берутся из него)."""

    seed: int
    design: StudyDesign
    quantile_cap: int = DEFAULT_QUANTILE_CAP

    @property
    def reuse_factor(self) -> float:
        """Среднее число индивидов на один множитель Холецкого."""
        n_patterns = len(self.design.patterns)
        return self.design.n_individuals / n_patterns if n_patterns else 0.0


def _factor(matrix: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(matrix, lower=True)
    except linalg.LinAlgError as e:
        raise OutsideSupportError("Подматрица R_i не положительно определена") from e


def draw_latent(R_i: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Ṽ_i ~ MVN(0, R_i) через нижний множитель Холецкого."""
    R_i = np.atleast_2d(np.asarray(R_i, dtype=float))
    return _factor(R_i) @ rng.standard_normal(R_i.shape[0])


def _pattern_factor(model: CorrelationModel, pattern: tuple[int, ...]) -> np.ndarray:
    if len(pattern) == model.n_margins:
        return model.cholesky
    return _factor(model.submatrix(pattern))


def simulate_latents(model: CorrelationModel, design: StudyDesign, seed: int) -> np.ndarray:
    """
    Латентные значения для всех ячеек ``design.cells``.

    Множитель Холецкого строится один раз на паттерн 𝒥_i; у каждого индивида
    собственный счётчиковый поток, поэтому результат не зависит от порядка групп.
    """
    latent = np.empty(design.n_cells)
    for pattern, members in design.patterns.items():
        factor = _pattern_factor(model, pattern)
        size = len(pattern)
        normals = np.empty((members.shape[0], size))
        for row, i in enumerate(members):
            normals[row] = individual_stream(seed, int(i)).standard_normal(size)
        values = normals @ factor.T
        for row, i in enumerate(members):
            latent[design.individual_rows(int(i))] = values[row]
    return latent


def generate_dataset(
    theta_M: MarginalParams,
    theta_D: DependenceParams | CorrelationModel,
    design: StudyDesign,
    config: SimulationConfig,
) -> CountDataset:
    """
    Генерирует полный набор данных на множестве наблюдений дизайна.

    Parameters
    ----------
    theta_M : MarginalParams
        Маргинальные параметры.
    theta_D : DependenceParams | CorrelationModel
        Параметры зависимости либо уже построенная корреляционная модель.
    design : StudyDesign
        Дизайн (маргинали, предикторы, 𝒟).
    config : SimulationConfig
        Seed и предел квантиля.

    Returns
    -------
    CountDataset
        Значения ровно для (i, j) ∈ 𝒟.

    Raises
    ------
    OutsideSupportError
        Если θ_D ∉ Θ_D.
    QuantileCapError
        При патологических маргинальных параметрах.
    """
    theta_M.check_dimension(design)
    model = theta_D if isinstance(theta_D, CorrelationModel) else theta_D.correlation(design.n_margins)
    latent = simulate_latents(model, design, config.seed)
    counts = latent_to_count_array(latent, design.predictors, theta_M, cap=config.quantile_cap)
    return CountDataset(design=design, values=counts)


class DatasetSimulator:
    """
    Генератор наборов данных по плоскому вектору θ для ABC-сэмплеров.

    Хранит дизайн, упорядоченные смежности и раскладку θ; последний построенный
    ``CorrelationModel`` кэшируется по значению ρ, так как шаги по маргинальным
    параметрам не меняют R.
    """

    def __init__(
        self,
        design: StudyDesign,
        adjacencies: Sequence[AdjacencySpec],
        layout: ParameterLayout,
        logger: LoggerProtocol,
        quantile_cap: int = DEFAULT_QUANTILE_CAP,
    ) -> None:
        self.design = design
        self.adjacencies = tuple(adjacencies)
        self.layout = layout
        self.logger = logger
        self.quantile_cap = quantile_cap
        self._cached_rho: np.ndarray | None = None
        self._cached_model: CorrelationModel | None = None
        self._lock = threading.Lock()

    def correlation(self, rho: np.ndarray) -> CorrelationModel:
        rho = np.asarray(rho, dtype=float)
        with self._lock:
            if self._cached_rho is None or not np.array_equal(rho, self._cached_rho):
                self._cached_model = build_correlation(self.adjacencies, rho, self.design.n_margins)
                self._cached_rho = rho.copy()
            return self._cached_model

    def simulate(self, theta: np.ndarray, seed: int) -> CountDataset:
        """Набор данных при θ (плоский вектор раскладки) и заданном seed."""
        params, rho = self.layout.unpack(theta)
        model = self.correlation(rho)
        config = SimulationConfig(seed=seed, design=self.design, quantile_cap=self.quantile_cap)
        return generate_dataset(params, model, self.design, config)

    def clone(self) -> "DatasetSimulator":
        """Копия с собственным кэшем R (для независимых цепочек)."""
        return DatasetSimulator(self.design, self.adjacencies, self.layout, self.logger, self.quantile_cap)
