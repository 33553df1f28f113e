"""
Точный Гиббс-сэмплер модели независимости ℳ₀ (аугментация Pólya-Gamma) и инициализация θ_D.

Результаты используются как стартовая точка θ̃ и ковариация Σ̃ предложений ABC-MCMC.
"""
from __future__ import annotations

from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from polyagamma import random_polyagamma
from scipy import linalg, special, stats

from copula_abc.core.marginals import clamp_linear_predictor, nb_logpmf
from copula_abc.core.model import CountDataset, HyperParams, MarginalFamily, ParameterLayout, StudyDesign
from copula_abc.core.priors import TAU2_SCALE, TAU2_SHAPE, PriorSampler
from copula_abc.core.summaries import SIMULATION_FAILURES, SummaryCalculator, logistic_irls, poisson_regression
from copula_abc.errors import ConfigError, InitializationError
from copula_abc.protocols import DatasetSimulatorProtocol, LoggerProtocol
from copula_abc.utils.rng import derive_seed

PG_TRUNCATION = 200
GIG_FLOOR = 1e-12
DEFAULT_MH_WIDTH = 0.5


def sample_pg(
    b: np.ndarray | float,
    z: np.ndarray | float,
    rng: np.random.Generator,
    trunc: int = PG_TRUNCATION,
) -> np.ndarray | float:
    """
    ω ~ PG(b, z).

    При b ≡ 1 используется точный сэмплер Devroye из ``polyagamma``; для прочих b —
    усечённый ряд из ``trunc`` гамма-слагаемых с поправкой среднего на полный ряд.
    """
    b_arr, z_arr = np.broadcast_arrays(np.asarray(b, dtype=float), np.asarray(z, dtype=float))
    scalar = b_arr.ndim == 0
    b_arr, z_arr = np.atleast_1d(b_arr).ravel(), np.atleast_1d(z_arr).ravel()
    if np.any(b_arr <= 0):
        raise ConfigError("Параметр формы PG должен быть > 0")
    if b_arr.size == 0:
        return np.zeros(0)

    if np.all(b_arr == 1.0):
        draws = np.empty_like(z_arr)
        random_polyagamma(1, z_arr, out=draws, random_state=rng, method="devroye")
    else:
        k_sq = (np.arange(trunc) + 0.5) ** 2
        denom = k_sq[None, :] + (z_arr[:, None] ** 2) / (4.0 * np.pi**2)
        gammas = rng.gamma(np.repeat(b_arr[:, None], trunc, axis=1), 1.0)
        draws = np.sum(gammas / denom, axis=1) / (2.0 * np.pi**2)
        half = np.maximum(np.abs(z_arr) / 2.0, 1e-8)
        full_mean = np.tanh(half) / half / 4.0
        truncated_mean = np.sum(1.0 / denom, axis=1) / (2.0 * np.pi**2)
        draws *= full_mean / truncated_mean

    return float(draws[0]) if scalar else draws


def sample_gig(
    m: float,
    a: np.ndarray | float,
    b: np.ndarray | float,
    rng: np.random.Generator,
) -> np.ndarray | float:
    """
    X ~ GIG(m, a, b) с плотностью ∝ x^{m−1} exp(−(a x + b/x)/2).

    Сводится к ``scipy.stats.geninvgauss`` (ratio-of-uniforms):
    X = √(b/a) · GIG*(p=m, √(ab)).
    """
    a = np.asarray(a, dtype=float)
    b = np.maximum(np.asarray(b, dtype=float), GIG_FLOOR)
    draws = stats.geninvgauss.rvs(m, np.sqrt(a * b), scale=np.sqrt(b / a), random_state=rng)
    return float(draws) if np.ndim(draws) == 0 else np.asarray(draws)


@dataclass(frozen=True, eq=False)
class GibbsState:
    """
    Состояние сэмплера ℳ₀.

    ``beta`` хранится в репараметризации μ = φ·e^{x'β}; при экспорте свободный член
    переводится обратно: β₀ ← β₀ + log φ.
    """

    alpha: np.ndarray
    beta: np.ndarray
    phi: float
    sigma2_alpha: np.ndarray
    sigma2_beta: np.ndarray
    tau2_alpha: float
    tau2_beta: float
    omega_alpha: np.ndarray
    omega_beta: np.ndarray
    accepted_shift: bool = False

    def __post_init__(self) -> None:
        positive = [self.phi, self.tau2_alpha, self.tau2_beta]
        if not all(np.isfinite(v) and v > 0 for v in positive):
            raise ConfigError("φ и τ² в состоянии Гиббса должны быть положительны")
        if np.any(self.sigma2_alpha <= 0) or np.any(self.sigma2_beta <= 0):
            raise ConfigError("Локальные дисперсии σ² должны быть положительны")

    @classmethod
    def initial(cls, n_coefficients: int) -> "GibbsState":
        d = n_coefficients - 1
        return cls(
            alpha=np.zeros(n_coefficients),
            beta=np.zeros(n_coefficients),
            phi=1.0,
            sigma2_alpha=np.ones(d),
            sigma2_beta=np.ones(d),
            tau2_alpha=1.0,
            tau2_beta=1.0,
            omega_alpha=np.zeros(0),
            omega_beta=np.zeros(0),
        )

    def export(self, family: MarginalFamily = MarginalFamily.NB_HURDLE) -> np.ndarray:
        """θ_M в раскладке ``ParameterLayout`` (α, β с исходным свободным членом, log φ)."""
        beta = self.beta.copy()
        beta[0] += np.log(self.phi)
        parts = [beta, np.array([np.log(self.phi)])]
        if MarginalFamily(family).has_presence:
            parts.insert(0, self.alpha)
        return np.concatenate(parts)


def _draw_gaussian(
    X: np.ndarray,
    omega: np.ndarray,
    rhs: np.ndarray,
    prior_var: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """N(Σ*·rhs, Σ*), Σ* = (X'ΩX + diag(prior_var)⁻¹)⁻¹, через Холецкого точности."""
    precision = X.T @ (X * omega[:, None]) + np.diag(1.0 / prior_var)
    factor = linalg.cholesky(precision, lower=True)
    mean = linalg.cho_solve((factor, True), rhs)
    noise = linalg.solve_triangular(factor.T, rng.standard_normal(rhs.shape[0]), lower=False)
    return mean + noise


def _shrinkage_update(
    coef: np.ndarray,
    tau2: float,
    lam: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Шаги (1b)-(1c): σ²_k ~ GIG(λ−½, 2λ/τ², α_k²), затем τ² ~ IG(1 + dλ, 1 + λΣσ²)."""
    slopes = coef[1:]
    if slopes.size == 0:
        return np.zeros(0), tau2
    sigma2 = np.atleast_1d(sample_gig(lam - 0.5, 2.0 * lam / tau2, slopes**2, rng))
    sigma2 = np.maximum(sigma2, GIG_FLOOR)
    shape = TAU2_SHAPE + slopes.size * lam
    scale = TAU2_SCALE + lam * float(np.sum(sigma2))
    tau2 = float(stats.invgamma.rvs(shape, scale=scale, random_state=rng))
    return sigma2, tau2


def _presence_block(state: GibbsState, X: np.ndarray, z: np.ndarray, hyper: HyperParams, rng):
    omega = np.atleast_1d(sample_pg(1.0, X @ state.alpha, rng))
    prior_var = np.concatenate([[hyper.c_alpha**2], state.sigma2_alpha])
    alpha = _draw_gaussian(X, omega, X.T @ (z - 0.5), prior_var, rng)
    sigma2, tau2 = _shrinkage_update(alpha, state.tau2_alpha, hyper.lambda_alpha, rng)
    return alpha, sigma2, tau2, omega


def _severity_loglik(y: np.ndarray, log_mu: np.ndarray, phi: float) -> float:
    return float(np.sum(nb_logpmf(y, np.exp(log_mu), phi)))


def _severity_block(
    state: GibbsState,
    X: np.ndarray,
    y: np.ndarray,
    hyper: HyperParams,
    mh_width: float,
    rng,
):
    phi = state.phi
    if y.size:
        omega = np.atleast_1d(sample_pg(y + phi, clamp_linear_predictor(X @ state.beta), rng))
    else:
        omega = np.zeros(0)
    prior_var = np.concatenate([[hyper.c_beta**2], state.sigma2_beta])
    beta = _draw_gaussian(X, omega, X.T @ ((y - phi) / 2.0), prior_var, rng)

    # (β₀, log φ) → (β₀ + δ, log φ − δ): μ = φ·e^{x'β} не меняется
    delta = rng.uniform(-mh_width, mh_width)
    log_phi = np.log(phi)
    log_mu = clamp_linear_predictor(np.log(phi) + X @ beta) if y.size else np.zeros(0)
    proposal_phi = float(np.exp(log_phi - delta))
    log_ratio = (
        _severity_loglik(y, log_mu, proposal_phi)
        - _severity_loglik(y, log_mu, phi)
        + stats.norm.logpdf(beta[0] + delta, 0.0, hyper.c_beta)
        - stats.norm.logpdf(beta[0], 0.0, hyper.c_beta)
        + stats.norm.logpdf(log_phi - delta, 0.0, hyper.c_phi)
        - stats.norm.logpdf(log_phi, 0.0, hyper.c_phi)
    )
    accepted = bool(np.isfinite(log_ratio) and np.log(rng.random()) < log_ratio and proposal_phi > 0)
    if accepted:
        beta = beta.copy()
        beta[0] += delta
        phi = proposal_phi

    sigma2, tau2 = _shrinkage_update(beta, state.tau2_beta, hyper.lambda_beta, rng)
    return beta, phi, sigma2, tau2, omega, accepted


class _GibbsData:
    """Предвычисленные матрицы блоков присутствия и тяжести."""

    def __init__(self, design: StudyDesign, dataset: CountDataset) -> None:
        values = dataset.values
        positive = values > 0
        self.X = design.predictors
        self.z = (values > 0).astype(float)
        self.X_severity = design.predictors[positive]
        self.y_severity = (values[positive] - 1).astype(float)
        self.y_all = values.astype(float)


def gibbs_step(
    state: GibbsState,
    dataset: CountDataset,
    design: StudyDesign,
    rng: np.random.Generator,
    hyper: HyperParams | None = None,
    mh_width: float = DEFAULT_MH_WIDTH,
    family: MarginalFamily = MarginalFamily.NB_HURDLE,
    executor: Executor | None = None,
    data: _GibbsData | None = None,
) -> GibbsState:
    """
    Один полный проход: блок присутствия (1a)-(1c) и блок тяжести (2a)-(2d).

    Блоки независимы и получают собственные дочерние генераторы, поэтому результат
    не зависит от того, выполняются ли они в ``executor`` параллельно.
    """
    hyper = hyper or HyperParams()
    family = MarginalFamily(family)
    data = data or _GibbsData(design, dataset)
    rng_presence, rng_severity = rng.spawn(2)

    def presence():
        if not family.has_presence:
            return state.alpha, state.sigma2_alpha, state.tau2_alpha, state.omega_alpha
        return _presence_block(state, data.X, data.z, hyper, rng_presence)

    def severity():
        if family.has_presence:
            X, y = data.X_severity, data.y_severity
        else:
            X, y = data.X, data.y_all
        return _severity_block(state, X, y, hyper, mh_width, rng_severity)

    if executor is not None:
        presence_future = executor.submit(presence)
        severity_future = executor.submit(severity)
        alpha, sigma2_alpha, tau2_alpha, omega_alpha = presence_future.result()
        beta, phi, sigma2_beta, tau2_beta, omega_beta, accepted = severity_future.result()
    else:
        alpha, sigma2_alpha, tau2_alpha, omega_alpha = presence()
        beta, phi, sigma2_beta, tau2_beta, omega_beta, accepted = severity()

    return replace(
        state,
        alpha=alpha,
        beta=beta,
        phi=phi,
        sigma2_alpha=sigma2_alpha,
        sigma2_beta=sigma2_beta,
        tau2_alpha=tau2_alpha,
        tau2_beta=tau2_beta,
        omega_alpha=omega_alpha,
        omega_beta=omega_beta,
        accepted_shift=accepted,
    )


@dataclass(frozen=True, eq=False)
class IndependenceFit:
    """Результат подгонки ℳ₀: апостериорное среднее θ̃_M, ковариация Σ̃_M и цепочка после прогрева."""

    theta_tilde: np.ndarray
    sigma_tilde: np.ndarray
    chain: np.ndarray
    names: tuple[str, ...]
    shift_acceptance: float = float("nan")


def run_independence_fit(
    dataset: CountDataset,
    design: StudyDesign,
    rng: np.random.Generator,
    iters: int = 20_000,
    burnin: int = 5_000,
    hyper: HyperParams | None = None,
    mh_width: float = DEFAULT_MH_WIDTH,
    family: MarginalFamily = MarginalFamily.NB_HURDLE,
    threads: int = 1,
    logger: LoggerProtocol | None = None,
    log_every: int = 1000,
) -> IndependenceFit:
    """
    Запускает Гиббс-сэмплер ℳ₀ и возвращает апостериорное среднее и ковариацию.

    Parameters
    ----------
    dataset : CountDataset
        Наблюдённые данные.
    design : StudyDesign
        Дизайн.
    rng : np.random.Generator
        Генератор цепочки.
    iters, burnin : int
        Общее число проходов и длина прогрева (iters > burnin).
    family : MarginalFamily
        NB-hurdle или plain-NB; для Poisson-hurdle используйте ``mle_initialization``.

    Returns
    -------
    IndependenceFit
        θ̃_M в раскладке ``ParameterLayout`` и Σ̃_M.
    """
    family = MarginalFamily(family)
    if family is MarginalFamily.POISSON_HURDLE:
        raise ConfigError("Гиббс-сэмплер ℳ₀ определён только для NB-семейств")
    if iters <= burnin:
        raise ConfigError(f"iters ({iters}) должно превышать burnin ({burnin})")

    layout = ParameterLayout(family=family, predictor_names=design.predictor_names)
    data = _GibbsData(design, dataset)
    state = GibbsState.initial(design.n_covariates + 1)
    chain = np.empty((iters - burnin, layout.marginal_size))
    shifts = 0

    executor = ThreadPoolExecutor(max_workers=2) if threads > 1 else None
    try:
        for g in range(iters):
            state = gibbs_step(state, dataset, design, rng, hyper, mh_width, family, executor, data)
            shifts += state.accepted_shift
            if g >= burnin:
                chain[g - burnin] = state.export(family)
            if logger is not None and (g + 1) % log_every == 0:
                logger.info(
                    f"Гиббс ℳ₀: {g + 1}/{iters}, φ={state.phi:.3f}, "
                    f"τ²_α={state.tau2_alpha:.3f}, τ²_β={state.tau2_beta:.3f}"
                )
    finally:
        if executor is not None:
            executor.shutdown()

    covariance = np.atleast_2d(np.cov(chain, rowvar=False))
    return IndependenceFit(
        theta_tilde=chain.mean(axis=0),
        sigma_tilde=0.5 * (covariance + covariance.T),
        chain=chain,
        names=tuple(layout.names()),
        shift_acceptance=shifts / iters,
    )


def mle_initialization(design: StudyDesign, dataset: CountDataset) -> IndependenceFit:
    """
    Инициализация для Poisson-hurdle: ОМП и обратная информация Фишера.

    Для Пуассона аугментация Pólya-Gamma неприменима, поэтому θ̃_M берётся из
    вспомогательных оценок, а Σ̃_M — блочно-диагональная из (X'WX)⁻¹.
    """
    X = design.predictors
    z = dataset.presence
    alpha = logistic_irls(X, z)
    prob = special.expit(X @ alpha)
    cov_alpha = linalg.inv(X.T @ (X * (prob * (1 - prob))[:, None]))

    positive = dataset.values > 0
    Xs = X[positive]
    beta = poisson_regression(Xs, dataset.values[positive] - 1)
    mu = np.exp(clamp_linear_predictor(Xs @ beta))
    cov_beta = linalg.inv(Xs.T @ (Xs * mu[:, None]))

    layout = ParameterLayout(family=MarginalFamily.POISSON_HURDLE, predictor_names=design.predictor_names)
    covariance = linalg.block_diag(cov_alpha, cov_beta)
    return IndependenceFit(
        theta_tilde=np.concatenate([alpha, beta]),
        sigma_tilde=0.5 * (covariance + covariance.T),
        chain=np.zeros((0, layout.marginal_size)),
        names=tuple(layout.names()),
    )


@dataclass(frozen=True, eq=False)
class DependenceInit:
    """θ̃_D, Σ̃_D и отобранные ρ поиска по симуляциям."""

    theta_tilde: np.ndarray
    sigma_tilde: np.ndarray
    retained: np.ndarray
    redraws: int = 0
    failures: int = 0


def init_dependence(
    theta_M_tilde: np.ndarray,
    simulator: DatasetSimulatorProtocol,
    calculator: SummaryCalculator,
    s_obs_D: np.ndarray,
    seed: int,
    G: int = 10_000,
    keep: float = 0.01,
    threads: int = 1,
    logger: LoggerProtocol | None = None,
) -> DependenceInit:
    """
    Инициализация θ_D: G равномерных ρ на положительной части Θ_D, генерация данных
    при (θ̃_M, ρ), отбор доли ``keep`` с наименьшим евклидовым расстоянием между
    s_D и s_D(y_obs).

    Raises
    ------
    InitializationError
        Если после отбора осталось меньше двух точек.
    """
    layout = simulator.layout
    K = layout.n_dependence
    if K == 0:
        return DependenceInit(np.zeros(0), np.zeros((0, 0)), np.zeros((0, 0)))

    sampler = PriorSampler(
        layout=layout,
        adjacencies=calculator.adjacencies,
        n_margins=simulator.design.n_margins,
        rho_low=0.0,
        rho_high=1.0,
    )
    rho_rng = np.random.default_rng(derive_seed(seed, 1))
    proposals = np.vstack([sampler.draw_dependence(rho_rng) for _ in range(G)])
    s_obs_D = np.asarray(s_obs_D, dtype=float)
    theta_M_tilde = np.asarray(theta_M_tilde, dtype=float)

    def one(g: int) -> float:
        theta = np.concatenate([theta_M_tilde, proposals[g]])
        try:
            dataset = simulator.simulate(theta, derive_seed(seed, 2, g))
            diff = calculator.dependence_summary(dataset) - s_obs_D
        except SIMULATION_FAILURES:
            return np.inf
        return float(np.sqrt(diff @ diff))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        distances = np.array(list(pool.map(one, range(G))))

    failures = int(np.sum(~np.isfinite(distances)))
    n_keep = max(int(round(G * keep)), 1)
    order = np.argsort(distances, kind="stable")[:n_keep]
    order = order[np.isfinite(distances[order])]
    if order.size < 2:
        raise InitializationError(
            f"Инициализация θ_D: отобрано {order.size} точек (G={G}, keep={keep}, неудач {failures})"
        )
    retained = proposals[order]
    covariance = np.atleast_2d(np.cov(retained, rowvar=False))
    if logger is not None:
        logger.info(
            f"Инициализация θ_D: отобрано {retained.shape[0]} из {G}, "
            f"перевыборок {sampler.redraws}, неудачных симуляций {failures}"
        )
    return DependenceInit(
        theta_tilde=retained.mean(axis=0),
        sigma_tilde=0.5 * (covariance + covariance.T),
        retained=retained,
        redraws=sampler.redraws,
        failures=failures,
    )


def assemble_proposal(
    marginal: IndependenceFit,
    dependence: DependenceInit,
) -> tuple[np.ndarray, np.ndarray]:
    """Стартовая точка θ̃ и блочно-диагональная ковариация diag(Σ̃_M, Σ̃_D)."""
    theta = np.concatenate([marginal.theta_tilde, dependence.theta_tilde])
    covariance = linalg.block_diag(marginal.sigma_tilde, dependence.sigma_tilde)
    return theta, covariance
