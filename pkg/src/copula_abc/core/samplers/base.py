"""Базовые абстракции ABC-сэмплеров и форматы их результатов."""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from copula_abc.core.model import HyperParams
from copula_abc.core.summaries import KernelSpec, SummaryCalculator, SummaryVector
from copula_abc.errors import DomainError
from copula_abc.protocols import DatasetSimulatorProtocol, LoggerProtocol


@dataclass(frozen=True, eq=False)
class WeightedSample:
    """
    Взвешенная выборка θ из rejection- или importance-сэмплера.

    Веса нормированы к единице; ``summaries`` и ``distances`` выровнены по строкам θ.
    """

    theta: np.ndarray
    weights: np.ndarray
    summaries: np.ndarray
    distances: np.ndarray
    names: tuple[str, ...]
    sampler: str
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape[0] != self.theta.shape[0]:
            raise DomainError("Число весов не совпадает с числом выборок")
        total = weights.sum()
        if not total > 0:
            raise DomainError("Сумма весов должна быть положительной")
        object.__setattr__(self, "weights", weights / total)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def size(self) -> int:
        return self.theta.shape[0]

    @property
    def effective_sample_size(self) -> float:
        """1 / Σw²."""
        return float(1.0 / np.sum(self.weights**2))

    def mass_carriers(self, mass: float = 0.5) -> int:
        """Минимальное число выборок, несущих долю ``mass`` общего веса."""
        ordered = np.sort(self.weights)[::-1]
        return int(np.searchsorted(np.cumsum(ordered), mass) + 1)


@dataclass(frozen=True, eq=False)
class AdaptationState:
    """Состояние адаптации предложения: масштаб η, среднее μ̄ и ковариация Σ̄."""

    eta: float
    mean: np.ndarray
    cov: np.ndarray
    step: int = 0

    @property
    def proposal_cov(self) -> np.ndarray:
        """Σ_g = η_g Σ̄_g."""
        return self.eta * self.cov


@dataclass(frozen=True, eq=False)
class ChainArchive:
    """
    Полная история одной цепочки ABC-MCMC.

    Наборы данных y^(g) не хранятся, только их сводные статистики s^(g).
    """

    theta: np.ndarray
    summaries: np.ndarray
    distances: np.ndarray
    accepted: np.ndarray
    tau2_alpha: np.ndarray
    tau2_beta: np.ndarray
    adaptation: AdaptationState
    seed: int
    kernel: KernelSpec
    names: tuple[str, ...]
    initial_theta: np.ndarray
    failures: int = 0

    def __post_init__(self) -> None:
        n = self.theta.shape[0]
        for name in ("summaries", "distances", "accepted", "tau2_alpha", "tau2_beta"):
            if getattr(self, name).shape[0] != n:
                raise DomainError(f"Длина '{name}' не совпадает с числом итераций {n}")
        if np.any(self.distances < 0):
            raise DomainError("Расстояния Δ должны быть неотрицательны")
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def iterations(self) -> int:
        return self.theta.shape[0]

    def acceptance_per_100(self) -> float:
        """Число принятых предложений на 100 итераций."""
        return float(100.0 * np.mean(self.accepted)) if self.iterations else 0.0

    def post_burnin(self, burnin: int = 0, thin: int = 1) -> "ChainArchive":
        """Срез после прогрева с прореживанием (адаптация и ядро сохраняются)."""
        if burnin < 0 or burnin >= self.iterations or thin < 1:
            raise DomainError(f"Некорректные burnin={burnin} / thin={thin} для {self.iterations} итераций")
        index = slice(burnin, None, thin)
        return ChainArchive(
            theta=self.theta[index],
            summaries=self.summaries[index],
            distances=self.distances[index],
            accepted=self.accepted[index],
            tau2_alpha=self.tau2_alpha[index],
            tau2_beta=self.tau2_beta[index],
            adaptation=self.adaptation,
            seed=self.seed,
            kernel=self.kernel,
            names=self.names,
            initial_theta=self.initial_theta,
            failures=self.failures,
        )

    def unique_count(self) -> int:
        return int(np.unique(np.hstack([self.theta, self.summaries]), axis=0).shape[0])


class BasePosteriorSampler(ABC):
    """
    Абстрактный ABC-сэмплер.

    Сэмплеры разделяют генератор данных и вычислитель сводных статистик и
    отличаются только способом предлагать и взвешивать θ.

    Реализации:
        - ABCMCMCSampler: случайное блуждание с исчезающей адаптацией
        - RejectionSampler: отбор доли ближайших к s_obs выборок из априорного
        - ImportanceSampler: взвешивание выборок из гауссова предложения
    """

    def __init__(
        self,
        simulator: DatasetSimulatorProtocol,
        calculator: SummaryCalculator,
        logger: LoggerProtocol,
        hyper: HyperParams | None = None,
    ) -> None:
        """
        Parameters
        ----------
        simulator : DatasetSimulatorProtocol
            Генератор данных p(y | θ).
        calculator : SummaryCalculator
            Вычислитель s(Y) на том же дизайне.
        logger : LoggerProtocol
            Логгер прогресса.
        hyper : HyperParams, optional
            Гиперпараметры априорного распределения.
        """
        self.simulator = simulator
        self.calculator = calculator
        self.logger = logger
        self.hyper = hyper or HyperParams()

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.simulator.layout.names())

    @abstractmethod
    def sample(self, s_obs: SummaryVector, **kwargs) -> Any:
        """
        Запускает сэмплер.

        Parameters
        ----------
        s_obs : SummaryVector
            Сводная статистика наблюдённых данных.
        **kwargs : dict
            Параметры конкретного сэмплера.

        Returns
        -------
        WeightedSample | list[ChainArchive]
            Результат в формате сэмплера.
        """
        pass

    @abstractmethod
    def get_sampler_name(self) -> str:
        """Уникальное имя сэмплера ('abc-mcmc', 'rejection', 'importance')."""
        pass

    @abstractmethod
    def get_sampler_description(self) -> str:
        """Описание алгоритма для логов и манифеста."""
        pass
