"""Априорное распределение π(θ): normal-gamma сжатие коэффициентов, log-normal φ, равномерное θ_D."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy import special, stats
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from copula_abc.core.adjacency import AdjacencySpec
from copula_abc.core.model import HyperParams, ParameterLayout
from copula_abc.core.sar import build_correlation
from copula_abc.errors import DomainError, OutsideSupportError

_LOG_2PI = np.log(2.0 * np.pi)

# Параметры IG-априорного распределения τ²
TAU2_SHAPE = 1.0
TAU2_SCALE = 1.0


def ng_log_density(x: np.ndarray | float, tau2: float, lam: float = 1.0) -> np.ndarray | float:
    """
    log-плотность коэффициента после интегрирования σ² ~ Gamma(λ, rate λ/τ²).

    p(x) = b^λ/(Γ(λ)√(2π)) · 2 (x²/2b)^{ν/2} K_ν(√(2b)|x|), b = λ/τ², ν = λ − ½.
    При λ = 1 совпадает с Laplace(0, τ/√2).
    """
    if tau2 <= 0 or lam <= 0:
        raise DomainError(f"τ² и λ должны быть > 0, получено τ²={tau2}, λ={lam}")
    x = np.abs(np.asarray(x, dtype=float))
    rate = lam / tau2
    order = lam - 0.5
    const = lam * np.log(rate) - special.gammaln(lam) - 0.5 * _LOG_2PI

    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.sqrt(2.0 * rate) * x
        body = (
            const
            + np.log(2.0)
            + 0.5 * order * np.log(x * x / (2.0 * rate))
            + np.log(special.kve(order, z))
            - z
        )
    if order > 0:
        at_zero = 0.5 * np.log(rate) + special.gammaln(order) - special.gammaln(lam) - 0.5 * _LOG_2PI
    else:
        at_zero = np.inf
    result = np.where(x == 0.0, at_zero, body)
    return float(result) if result.ndim == 0 else result


def ng_density(x: np.ndarray | float, tau2: float, lam: float = 1.0) -> np.ndarray | float:
    return np.exp(ng_log_density(x, tau2, lam))


def tau2_log_prior(tau2: float) -> float:
    """log IG(τ² | 1, 1) без нормирующей константы."""
    if tau2 <= 0:
        return -np.inf
    return float(-(TAU2_SHAPE + 1.0) * np.log(tau2) - TAU2_SCALE / tau2)


def tau2_log_target(tau2: float, coefficients: np.ndarray, lam: float = 1.0) -> float:
    """log p(τ² | коэффициенты) с проинтегрированными σ²."""
    if tau2 <= 0:
        return -np.inf
    return tau2_log_prior(tau2) + float(np.sum(ng_log_density(coefficients, tau2, lam)))


def tau2_mh_step(
    tau2: float,
    coefficients: np.ndarray,
    rng: np.random.Generator,
    lam: float = 1.0,
    sigma: float = 0.3,
) -> tuple[float, bool]:
    """
    Шаг случайного блуждания по log τ² с log-normal предложением.

    Returns
    -------
    tuple[float, bool]
        Новое τ² и флаг принятия.
    """
    proposal = tau2 * np.exp(sigma * rng.standard_normal())
    log_ratio = (
        tau2_log_target(proposal, coefficients, lam)
        - tau2_log_target(tau2, coefficients, lam)
        + np.log(proposal)
        - np.log(tau2)
    )
    if np.log(rng.random()) < log_ratio:
        return float(proposal), True
    return float(tau2), False


def log_prior(
    theta: np.ndarray,
    layout: ParameterLayout,
    hyper: HyperParams,
    tau2_alpha: float | None = None,
    tau2_beta: float | None = None,
    support: Callable[[np.ndarray], bool] | None = None,
) -> float:
    """
    log π(θ | τ²) с точностью до константы равномерного распределения на Θ_D.

    Свободные члены ~ N(0, c²), остальные коэффициенты — normal-gamma маргиналь,
    log φ ~ N(0, c_φ²). ``support`` проверяет ρ; вне Θ_D возвращается −inf.
    """
    theta = np.asarray(theta, dtype=float)
    tau2_alpha = hyper.tau2_alpha if tau2_alpha is None else tau2_alpha
    tau2_beta = hyper.tau2_beta if tau2_beta is None else tau2_beta
    total = 0.0

    blocks = [("beta", hyper.c_beta, tau2_beta, hyper.lambda_beta)]
    if layout.has_block("alpha"):
        blocks.insert(0, ("alpha", hyper.c_alpha, tau2_alpha, hyper.lambda_alpha))
    for block, scale, tau2, lam in blocks:
        coef = theta[layout.slice_of(block)]
        total += float(stats.norm.logpdf(coef[0], 0.0, scale))
        total += float(np.sum(ng_log_density(coef[1:], tau2, lam)))

    if layout.has_block("log_phi"):
        total += float(stats.norm.logpdf(theta[layout.slice_of("log_phi")][0], 0.0, hyper.c_phi))

    if support is not None and layout.n_dependence and not support(theta[layout.slice_of("rho")]):
        return -np.inf
    return total


class PriorSampler:
    """
    Генератор θ ~ π для rejection-сэмплера и инициализации θ_D.

    ρ равномерно на коробке [rho_low, rho_high]^K, сужённой до Θ_D; выборки вне
    носителя перевыбираются, их число накапливается в ``redraws``.
    """

    def __init__(
        self,
        layout: ParameterLayout,
        adjacencies: Sequence[AdjacencySpec],
        n_margins: int,
        hyper: HyperParams | None = None,
        rho_low: float = -1.0,
        rho_high: float = 1.0,
        max_redraws: int = 1000,
    ) -> None:
        if rho_low >= rho_high:
            raise DomainError(f"Пустая коробка для ρ: [{rho_low}, {rho_high}]")
        self.layout = layout
        self.adjacencies = tuple(adjacencies)
        self.n_margins = n_margins
        self.hyper = hyper or HyperParams()
        self.rho_low = rho_low
        self.rho_high = rho_high
        self.max_redraws = max_redraws
        self.redraws = 0

    def draw_dependence(self, rng: np.random.Generator) -> np.ndarray:
        """ρ из равномерного распределения на Θ_D ∩ коробка."""
        size = self.layout.n_dependence
        if size == 0:
            return np.zeros(0)
        retrying = Retrying(
            stop=stop_after_attempt(self.max_redraws),
            retry=retry_if_exception_type(OutsideSupportError),
            reraise=True,
        )
        for attempt in retrying:
            with attempt:
                rho = rng.uniform(self.rho_low, self.rho_high, size)
                build_correlation(self.adjacencies, rho, self.n_margins)
        self.redraws += attempt.retry_state.attempt_number - 1
        return rho

    def _draw_coefficients(self, rng: np.random.Generator, scale: float, lam: float) -> np.ndarray:
        tau2 = float(stats.invgamma.rvs(TAU2_SHAPE, scale=TAU2_SCALE, random_state=rng))
        size = len(self.layout.predictor_names)
        sigma2 = rng.gamma(lam, tau2 / lam, size - 1)
        return np.concatenate([[rng.normal(0.0, scale)], rng.normal(0.0, np.sqrt(sigma2))])

    def draw_marginal(self, rng: np.random.Generator) -> np.ndarray:
        parts: list[np.ndarray] = []
        if self.layout.has_block("alpha"):
            parts.append(self._draw_coefficients(rng, self.hyper.c_alpha, self.hyper.lambda_alpha))
        parts.append(self._draw_coefficients(rng, self.hyper.c_beta, self.hyper.lambda_beta))
        if self.layout.has_block("log_phi"):
            parts.append(np.array([rng.normal(0.0, self.hyper.c_phi)]))
        return np.concatenate(parts)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """Плоский θ = (θ_M, ρ)."""
        return np.concatenate([self.draw_marginal(rng), self.draw_dependence(rng)])
