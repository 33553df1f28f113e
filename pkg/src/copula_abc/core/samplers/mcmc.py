"""ABC-MCMC со случайным блужданием, исчезающей адаптацией и MH-шагами по τ²."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import linalg

from copula_abc.core.model import HyperParams
from copula_abc.core.priors import log_prior, tau2_mh_step
from copula_abc.core.samplers.base import AdaptationState, BasePosteriorSampler, ChainArchive
from copula_abc.core.summaries import SIMULATION_FAILURES, KernelSpec, SummaryCalculator, SummaryVector, distance
from copula_abc.errors import ConfigError, InferenceFailure
from copula_abc.protocols import DatasetSimulatorProtocol, LoggerProtocol
from copula_abc.utils.rng import derive_seed

TARGET_ACCEPTANCE = 0.1
ADAPTATION_SWITCH = 500
TAU2_PROPOSAL_SD = 0.3
_JITTER = 1e-10


def adapt_proposal(
    state: AdaptationState,
    theta_g: np.ndarray,
    accept_prob_g: float,
    g: int,
    target: float = TARGET_ACCEPTANCE,
    switch: int = ADAPTATION_SWITCH,
) -> AdaptationState:
    """
    Шаг исчезающей адаптации.

    ν_g = 1/switch при g ≤ switch, иначе 1/g;
    log η_g = log η_{g−1} + ν_g (A − target);
    μ̄_g = μ̄_{g−1} + ν_g (θ − μ̄_{g−1});
    Σ̄_g = Σ̄_{g−1} + ν_g ((θ − μ̄_g)(θ − μ̄_g)' − Σ̄_{g−1}).
    """
    if g < 1:
        raise ConfigError(f"Номер итерации адаптации должен быть ≥ 1, получено {g}")
    rate = 1.0 / switch if g <= switch else 1.0 / g
    eta = float(np.exp(np.log(state.eta) + rate * (accept_prob_g - target)))
    theta_g = np.asarray(theta_g, dtype=float)
    mean = state.mean + rate * (theta_g - state.mean)
    centred = theta_g - mean
    cov = state.cov + rate * (np.outer(centred, centred) - state.cov)
    return AdaptationState(eta=eta, mean=mean, cov=0.5 * (cov + cov.T), step=g)


def _proposal_factor(cov: np.ndarray) -> np.ndarray:
    jitter = 0.0
    scale = max(float(np.max(np.diag(cov))), 1.0)
    for _ in range(8):
        try:
            return linalg.cholesky(cov + jitter * np.eye(cov.shape[0]), lower=True)
        except linalg.LinAlgError:
            jitter = _JITTER * scale if jitter == 0.0 else jitter * 100.0
    raise InferenceFailure("Ковариация предложения не положительно определена")


def _coefficient_slopes(theta: np.ndarray, calculator: SummaryCalculator, block: str) -> np.ndarray:
    layout = calculator.layout
    if not layout.has_block(block):
        return np.zeros(0)
    return theta[layout.slice_of(block)][1:]


def abc_mcmc(
    simulator: DatasetSimulatorProtocol,
    calculator: SummaryCalculator,
    s_obs: SummaryVector,
    kernel: KernelSpec,
    init_theta: np.ndarray,
    init_cov: np.ndarray,
    iters: int,
    seed: int,
    hyper: HyperParams | None = None,
    logger: LoggerProtocol | None = None,
    log_every: int = 1000,
    target: float = TARGET_ACCEPTANCE,
    switch: int = ADAPTATION_SWITCH,
    tau2_sd: float = TAU2_PROPOSAL_SD,
) -> ChainArchive:
    """
    Одна цепочка ABC-MCMC.

    Вероятность принятия min{1, K_h(s')/K_h(s)·π(θ')/π(θ)}: правдоподобие не
    вычисляется. Предложения вне Θ_D и неудачные симуляции считаются отклонёнными
    и участвуют в адаптации с A = 0.

    Parameters
    ----------
    simulator : DatasetSimulatorProtocol
        Генератор данных (используется только этой цепочкой).
    calculator : SummaryCalculator
        Вычислитель s(Y).
    s_obs : SummaryVector
        Наблюдённая сводная статистика.
    kernel : KernelSpec
        Ширина h и масштабы A.
    init_theta, init_cov : np.ndarray
        θ̃ и Σ̃ из инициализации.
    iters : int
        Число итераций (длина архива).
    seed : int
        Seed цепочки; набор g генерируется с ``derive_seed(seed, g)``.

    Returns
    -------
    ChainArchive
        История цепочки.

    Raises
    ------
    InferenceFailure
        Если симуляция в стартовой точке невозможна.
    """
    hyper = hyper or HyperParams()
    layout = calculator.layout
    rng = np.random.default_rng(derive_seed(seed, 0))

    theta = np.asarray(init_theta, dtype=float).copy()
    try:
        summary = calculator.compute(simulator.simulate(theta, derive_seed(seed, 0, 1)))
    except SIMULATION_FAILURES as e:
        raise InferenceFailure(f"Стартовая точка цепочки недопустима: {e}") from e
    s_obs_vec = s_obs.vector
    current = summary.vector
    current_delta = distance(current, s_obs_vec, kernel)
    tau2_alpha, tau2_beta = hyper.tau2_alpha, hyper.tau2_beta
    current_prior = log_prior(theta, layout, hyper, tau2_alpha, tau2_beta)

    size = layout.size
    state = AdaptationState(eta=1.0, mean=theta.copy(), cov=np.asarray(init_cov, dtype=float).copy())
    thetas = np.empty((iters, size))
    summaries = np.empty((iters, current.shape[0]))
    distances = np.empty(iters)
    accepted = np.zeros(iters, dtype=bool)
    tau2_a = np.empty(iters)
    tau2_b = np.empty(iters)
    failures = 0

    for g in range(1, iters + 1):
        factor = _proposal_factor(state.proposal_cov)
        proposal = theta + factor @ rng.standard_normal(size)
        accept_prob = 0.0
        try:
            candidate = calculator.compute(simulator.simulate(proposal, derive_seed(seed, g))).vector
        except SIMULATION_FAILURES:
            failures += 1
        else:
            delta = distance(candidate, s_obs_vec, kernel)
            proposal_prior = log_prior(proposal, layout, hyper, tau2_alpha, tau2_beta)
            log_ratio = (current_delta - delta) / kernel.bandwidth + proposal_prior - current_prior
            accept_prob = float(np.exp(min(0.0, log_ratio))) if np.isfinite(log_ratio) else 0.0
            if rng.random() < accept_prob:
                theta, current, current_delta, current_prior = proposal, candidate, delta, proposal_prior
                accepted[g - 1] = True

        state = adapt_proposal(state, theta, accept_prob, g, target=target, switch=switch)

        slopes_alpha = _coefficient_slopes(theta, calculator, "alpha")
        if slopes_alpha.size:
            tau2_alpha, _ = tau2_mh_step(tau2_alpha, slopes_alpha, rng, hyper.lambda_alpha, tau2_sd)
        tau2_beta, _ = tau2_mh_step(
            tau2_beta, _coefficient_slopes(theta, calculator, "beta"), rng, hyper.lambda_beta, tau2_sd
        )
        current_prior = log_prior(theta, layout, hyper, tau2_alpha, tau2_beta)

        thetas[g - 1] = theta
        summaries[g - 1] = current
        distances[g - 1] = current_delta
        tau2_a[g - 1] = tau2_alpha
        tau2_b[g - 1] = tau2_beta

        if logger is not None and g % log_every == 0:
            recent = accepted[max(0, g - log_every):g]
            logger.info(
                f"ABC-MCMC seed={seed}: {g}/{iters}, принято на 100: {100 * recent.mean():.2f}, "
                f"η={state.eta:.4f}, Δ={current_delta:.3f}, неудачных симуляций {failures}"
            )

    return ChainArchive(
        theta=thetas,
        summaries=summaries,
        distances=distances,
        accepted=accepted,
        tau2_alpha=tau2_a,
        tau2_beta=tau2_b,
        adaptation=state,
        seed=seed,
        kernel=kernel,
        names=tuple(layout.names()),
        initial_theta=np.asarray(init_theta, dtype=float),
        failures=failures,
    )


class ABCMCMCSampler(BasePosteriorSampler):
    """
    Несколько независимых цепочек ABC-MCMC.

    Seed цепочки c выводится из главного seed как ``derive_seed(seed, c)``;
    каждая цепочка получает собственную копию генератора данных.
    """

    def __init__(
        self,
        simulator: DatasetSimulatorProtocol,
        calculator: SummaryCalculator,
        logger: LoggerProtocol,
        hyper: HyperParams | None = None,
        target: float = TARGET_ACCEPTANCE,
        switch: int = ADAPTATION_SWITCH,
        tau2_sd: float = TAU2_PROPOSAL_SD,
        log_every: int = 1000,
    ) -> None:
        super().__init__(simulator, calculator, logger, hyper)
        self.target = target
        self.switch = switch
        self.tau2_sd = tau2_sd
        self.log_every = log_every

    def sample(
        self,
        s_obs: SummaryVector,
        kernel: KernelSpec | None = None,
        init_theta: np.ndarray | None = None,
        init_cov: np.ndarray | None = None,
        iters: int = 20_000,
        chains: int = 3,
        seed: int = 0,
        threads: int = 1,
        **kwargs,
    ) -> list[ChainArchive]:
        """
        Запускает ``chains`` цепочек по ``iters`` итераций.

        Returns
        -------
        list[ChainArchive]
            Архивы в порядке номеров цепочек.
        """
        if kernel is None or init_theta is None or init_cov is None:
            raise ConfigError("ABC-MCMC требует kernel, init_theta и init_cov")
        if chains < 1 or iters < 1:
            raise ConfigError(f"chains ({chains}) и iters ({iters}) должны быть ≥ 1")

        def run(chain: int) -> ChainArchive:
            self.logger.info(f"Запуск цепочки {chain + 1}/{chains}: {iters} итераций, h={kernel.bandwidth}")
            return abc_mcmc(
                simulator=self.simulator.clone(),
                calculator=self.calculator,
                s_obs=s_obs,
                kernel=kernel,
                init_theta=init_theta,
                init_cov=init_cov,
                iters=iters,
                seed=derive_seed(seed, chain),
                hyper=self.hyper,
                logger=self.logger,
                log_every=self.log_every,
                target=self.target,
                switch=self.switch,
                tau2_sd=self.tau2_sd,
            )

        with ThreadPoolExecutor(max_workers=max(1, min(threads, chains))) as pool:
            archives = list(pool.map(run, range(chains)))
        for chain, archive in enumerate(archives):
            self.logger.info(
                f"Цепочка {chain + 1}: принято на 100 итераций {archive.acceptance_per_100():.2f}, "
                f"уникальных выборок {archive.unique_count()}"
            )
        return archives

    def get_sampler_name(self) -> str:
        return "abc-mcmc"

    def get_sampler_description(self) -> str:
        return (
            "ABC-MCMC: гауссово случайное блуждание с исчезающей адаптацией ковариации, "
            "гауссово ядро по сводным статистикам, MH-шаги по τ²"
        )
