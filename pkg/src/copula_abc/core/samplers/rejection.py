"""ABC-отбор: доля ближайших к s_obs выборок из априорного распределения."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from copula_abc.core.priors import PriorSampler
from copula_abc.core.samplers.base import BasePosteriorSampler, WeightedSample
from copula_abc.core.summaries import SIMULATION_FAILURES, KernelSpec, SummaryVector, distance
from copula_abc.errors import ConfigError, InferenceFailure
from copula_abc.utils.rng import derive_seed

MIN_RETAINED = 50


class RejectionSampler(BasePosteriorSampler):
    """
    ABC rejection: G троек (θ, y, s) из π, сохраняются ``keep``·G с наименьшим Δ.

    Эквивалентно равномерному ядру с шириной, равной эмпирическому квантилю Δ.
    Равные Δ упорядочиваются по номеру выборки.
    """

    def sample(
        self,
        s_obs: SummaryVector,
        kernel: KernelSpec | None = None,
        G: int = 250_000,
        keep: float = 0.001,
        seed: int = 0,
        threads: int = 1,
        **kwargs,
    ) -> WeightedSample:
        """
        Parameters
        ----------
        s_obs : SummaryVector
            Наблюдённая сводная статистика.
        kernel : KernelSpec
            Масштабы A для Δ (ширина не используется).
        G : int
            Число выборок из априорного распределения.
        keep : float
            Доля сохраняемых выборок; G·keep ≥ 50.

        Raises
        ------
        ConfigError
            Если G·keep < 50.
        InferenceFailure
            Если ни одна симуляция не удалась.
        """
        if kernel is None:
            raise ConfigError("Rejection-сэмплеру нужны масштабы A (kernel)")
        n_keep = math.ceil(G * keep - 1e-9)
        if n_keep < MIN_RETAINED:
            raise ConfigError(f"G·keep = {G * keep:g} < {MIN_RETAINED}")

        layout = self.simulator.layout
        prior = PriorSampler(
            layout=layout,
            adjacencies=self.calculator.adjacencies,
            n_margins=self.simulator.design.n_margins,
            hyper=self.hyper,
        )
        rng = np.random.default_rng(derive_seed(seed, 0))
        draws = np.vstack([prior.draw(rng) for _ in range(G)])
        self.logger.info(f"Rejection: {G} выборок из π, перевыборок вне Θ_D: {prior.redraws}")

        s_obs_vec = s_obs.vector

        def one(g: int) -> tuple[float, np.ndarray | None]:
            try:
                summary = self.calculator.compute(self.simulator.simulate(draws[g], derive_seed(seed, 1, g)))
            except SIMULATION_FAILURES:
                return np.inf, None
            return distance(summary.vector, s_obs_vec, kernel), summary.vector

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            results = list(pool.map(one, range(G)))

        distances = np.array([delta for delta, _ in results])
        failures = int(np.sum(~np.isfinite(distances)))
        order = np.argsort(distances, kind="stable")[:n_keep]
        order = order[np.isfinite(distances[order])]
        if order.size == 0:
            raise InferenceFailure("Rejection: ни одна симуляция не удалась")

        summaries = np.vstack([results[g][1] for g in order])
        self.logger.info(
            f"Rejection: сохранено {order.size} из {G}, порог Δ={distances[order[-1]]:.4g}, "
            f"неудачных симуляций {failures}"
        )
        return WeightedSample(
            theta=draws[order],
            weights=np.ones(order.size),
            summaries=summaries,
            distances=distances[order],
            names=self.names,
            sampler=self.get_sampler_name(),
            info={
                "G": G,
                "keep": keep,
                "threshold": float(distances[order[-1]]),
                "redraws": prior.redraws,
                "failures": failures,
            },
        )

    def get_sampler_name(self) -> str:
        return "rejection"

    def get_sampler_description(self) -> str:
        return "ABC rejection: выборка из априорного, отбор доли keep с наименьшим Δ"
