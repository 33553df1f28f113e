"""Движок вывода — оркестратор ABC-сэмплеров."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any

import numpy as np

from copula_abc.core.gibbs import (
    DependenceInit,
    IndependenceFit,
    assemble_proposal,
    init_dependence,
    mle_initialization,
    run_independence_fit,
)
from copula_abc.core.model import CountDataset, HyperParams, MarginalFamily
from copula_abc.core.summaries import KernelSpec, SummaryVector, estimate_scaling
from copula_abc.protocols import PosteriorSamplerProtocol
from copula_abc.utils.rng import derive_seed


@dataclass(frozen=True)
class InitSettings:
    """Размеры этапа инициализации: Гиббс ℳ₀, поиск θ_D и оценка масштабов A."""

    gibbs_iters: int = 20_000
    gibbs_burnin: int = 5_000
    mh_width: float = 0.5
    init_G: int = 10_000
    init_keep: float = 0.01
    scaling_G: int = 10_000
    log_every: int = 1_000


@dataclass(frozen=True, eq=False)
class Initialization:
    """Всё, что нужно сэмплерам: s_obs, θ̃, Σ̃ и масштабы A."""

    s_obs: SummaryVector
    marginal: IndependenceFit
    dependence: DependenceInit
    theta: np.ndarray
    cov: np.ndarray
    scaling: np.ndarray

    def kernel(self, bandwidth: float) -> KernelSpec:
        return KernelSpec(bandwidth=bandwidth, scaling=self.scaling)


class InferenceEngine:
    """
    Оркестратор ABC-вывода.

    Инкапсулирует выбор сэмплера и общий этап инициализации.
    Позволяет переключаться между ABC-MCMC, rejection и importance sampling
    без изменения клиентского кода.

    Пример использования:
        >>> engine = InferenceEngine(mcmc_sampler)
        >>> init = engine.initialize(dataset, seed=1)
        >>> archives = engine.run(init, bandwidth=10.0, iters=20000, chains=3, seed=1)
        >>> print(archives[0].acceptance_per_100())
    """

    def __init__(
        self,
        sampler: PosteriorSamplerProtocol,
        settings: InitSettings | None = None,
        hyper: HyperParams | None = None,
    ) -> None:
        """
        Parameters
        ----------
        sampler : PosteriorSamplerProtocol
            Сэмплер для использования.
        settings : InitSettings, optional
            Размеры этапа инициализации.
        hyper : HyperParams, optional
            Гиперпараметры для Гиббс-сэмплера ℳ₀.
        """
        self._sampler = sampler
        self.settings = settings or InitSettings()
        self.hyper = hyper or sampler.hyper

    @property
    def logger(self):
        return self._sampler.logger

    def initialize(self, dataset: CountDataset, seed: int, threads: int = 1) -> Initialization:
        """
        Инициализация: s_obs, подгонка ℳ₀ (θ̃_M, Σ̃_M), поиск θ̃_D и масштабы A при θ̃.

        Потоки: Гиббс — ``derive_seed(seed, 1)``, θ_D — ``derive_seed(seed, 2)``,
        масштабы — ``derive_seed(seed, 3)``.
        """
        s = self.settings
        simulator = self._sampler.simulator
        calculator = self._sampler.calculator
        design = calculator.design
        s_obs = calculator.compute(dataset)

        started = time.perf_counter()
        if calculator.family is MarginalFamily.POISSON_HURDLE:
            marginal = mle_initialization(design, dataset)
        else:
            marginal = run_independence_fit(
                dataset,
                design,
                np.random.default_rng(derive_seed(seed, 1)),
                iters=s.gibbs_iters,
                burnin=s.gibbs_burnin,
                hyper=self.hyper,
                mh_width=s.mh_width,
                family=calculator.family,
                threads=threads,
                logger=self.logger,
                log_every=s.log_every,
            )
        self.logger.info(
            f"ℳ₀: θ̃_M получено за {time.perf_counter() - started:.1f} сек, "
            f"доля принятых сдвигов {marginal.shift_acceptance:.3f}"
        )

        dependence = init_dependence(
            marginal.theta_tilde,
            simulator,
            calculator,
            s_obs.s_D,
            derive_seed(seed, 2),
            G=s.init_G,
            keep=s.init_keep,
            threads=threads,
            logger=self.logger,
        )
        theta, cov = assemble_proposal(marginal, dependence)
        scaling = estimate_scaling(
            theta, simulator, calculator, derive_seed(seed, 3), G=s.scaling_G, threads=threads, logger=self.logger
        )
        return Initialization(
            s_obs=s_obs, marginal=marginal, dependence=dependence, theta=theta, cov=cov, scaling=scaling
        )

    def run(self, init: Initialization, bandwidth: float = 1.0, **kwargs) -> Any:
        """
        Запускает текущий сэмплер от точки инициализации.

        Parameters
        ----------
        init : Initialization
            Результат ``initialize`` (или прочитанный из файлов).
        bandwidth : float, optional
            Ширина ядра h (rejection использует только масштабы A).
        **kwargs : dict
            Параметры сэмплера (iters, chains, G, keep, inflation, seed, threads).

        Returns
        -------
        list[ChainArchive] | WeightedSample
            Результат в формате сэмплера.
        """
        info = self.get_sampler_info()
        self.logger.info(f"Сэмплер {info['name']}: {info['description']}")
        started = time.perf_counter()
        result = self._sampler.sample(
            init.s_obs,
            kernel=init.kernel(bandwidth),
            init_theta=init.theta,
            init_cov=init.cov,
            **kwargs,
        )
        self.logger.info(f"Сэмплер {info['name']} завершён за {time.perf_counter() - started:.1f} сек")
        return result

    @property
    def sampler(self) -> PosteriorSamplerProtocol:
        """Текущий сэмплер."""
        return self._sampler

    @sampler.setter
    def sampler(self, new_sampler: PosteriorSamplerProtocol) -> None:
        """Смена сэмплера во время выполнения."""
        self._sampler = new_sampler

    def get_sampler_info(self) -> dict[str, str]:
        """
        Возвращает информацию о текущем сэмплере.

        Returns
        -------
        dict
            {
                "name": str,
                "description": str
            }
        """
        return {
            "name": self._sampler.get_sampler_name(),
            "description": self._sampler.get_sampler_description(),
        }
