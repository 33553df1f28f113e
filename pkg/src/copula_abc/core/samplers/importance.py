"""ABC importance sampling с гауссовым предложением вокруг θ̃."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import special, stats

from copula_abc.core.priors import log_prior
from copula_abc.core.samplers.base import BasePosteriorSampler, WeightedSample
from copula_abc.core.sar import check_support
from copula_abc.core.summaries import SIMULATION_FAILURES, KernelSpec, SummaryVector, distance
from copula_abc.errors import ConfigError, InferenceFailure
from copula_abc.utils.rng import derive_seed

PROPOSAL_INFLATION = 4.0


class ImportanceSampler(BasePosteriorSampler):
    """
    ABC importance sampling: θ ~ q̃ = MVN(θ̃, c²Σ̃), w ∝ K_h(Δ)·π(θ)/q̃(θ).

    τ² в π фиксированы на значениях гиперпараметров.
    """

    def sample(
        self,
        s_obs: SummaryVector,
        kernel: KernelSpec | None = None,
        init_theta: np.ndarray | None = None,
        init_cov: np.ndarray | None = None,
        G: int = 250_000,
        inflation: float = PROPOSAL_INFLATION,
        seed: int = 0,
        threads: int = 1,
        **kwargs,
    ) -> WeightedSample:
        """
        Returns
        -------
        WeightedSample
            G выборок с нормированными весами; ESS и число выборок, несущих
            половину веса, записываются в ``info`` и в лог.

        Raises
        ------
        InferenceFailure
            Если все веса нулевые.
        """
        if kernel is None or init_theta is None or init_cov is None:
            raise ConfigError("Importance-сэмплеру нужны kernel, init_theta и init_cov")
        layout = self.simulator.layout
        adjacencies = self.calculator.adjacencies
        n_margins = self.simulator.design.n_margins
        proposal = stats.multivariate_normal(
            mean=np.asarray(init_theta, dtype=float),
            cov=inflation * np.asarray(init_cov, dtype=float),
            allow_singular=True,
        )
        rng = np.random.default_rng(derive_seed(seed, 0))
        draws = np.atleast_2d(proposal.rvs(size=G, random_state=rng)).reshape(G, layout.size)
        log_q = np.atleast_1d(proposal.logpdf(draws))
        s_obs_vec = s_obs.vector

        def one(g: int) -> tuple[float, np.ndarray | None]:
            theta = draws[g]
            rho = theta[layout.slice_of("rho")]
            if rho.size and not check_support(adjacencies, rho, n_margins):
                return -np.inf, None
            try:
                summary = self.calculator.compute(self.simulator.simulate(theta, derive_seed(seed, 1, g)))
            except SIMULATION_FAILURES:
                return -np.inf, None
            delta = distance(summary.vector, s_obs_vec, kernel)
            log_weight = -delta / kernel.bandwidth + log_prior(theta, layout, self.hyper) - log_q[g]
            return float(log_weight), summary.vector

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            results = list(pool.map(one, range(G)))

        log_weights = np.array([lw for lw, _ in results])
        finite = np.isfinite(log_weights)
        if not finite.any():
            raise InferenceFailure("Importance: все веса нулевые")
        weights = np.exp(log_weights - special.logsumexp(log_weights[finite]))
        weights[~finite] = 0.0

        width = len(self.calculator.names())
        summaries = np.vstack([s if s is not None else np.full(width, np.nan) for _, s in results])
        deltas = np.where(finite, 0.0, np.inf)
        deltas[finite] = [distance(summaries[g], s_obs_vec, kernel) for g in np.flatnonzero(finite)]

        sample = WeightedSample(
            theta=draws,
            weights=weights,
            summaries=summaries,
            distances=deltas,
            names=self.names,
            sampler=self.get_sampler_name(),
            info={"G": G, "inflation": inflation, "failures": int(np.sum(~finite))},
        )
        carriers = sample.mass_carriers(0.5)
        sample.info.update(ess=sample.effective_sample_size, half_mass_carriers=carriers)
        self.logger.info(
            f"Importance: ESS={sample.effective_sample_size:.1f} из {G}, "
            f"половину веса несут {carriers} выборок, нулевых весов {int(np.sum(~finite))}"
        )
        return sample

    def get_sampler_name(self) -> str:
        return "importance"

    def get_sampler_description(self) -> str:
        return "ABC importance sampling: предложение MVN(θ̃, c²Σ̃), вес K_h(Δ)·π(θ)/q̃(θ)"
