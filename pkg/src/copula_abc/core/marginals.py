"""
Маргинальные hurdle-распределения: pmf, cdf, квантиль и латентное отображение h.

Скалярные функции считают cdf и квантиль одной и той же накопительной суммой pmf,
поэтому пара (cdf, quantile) согласована до последнего бита. Векторные варианты
(``*_array``) используются генератором данных и опираются на ppf из scipy.
"""
from __future__ import annotations

import numpy as np
from scipy import special, stats

from copula_abc.core.model import MarginalFamily, MarginalParams
from copula_abc.errors import DomainError, NumericOverflowError, QuantileCapError

ETA_BOUND = 35.0
DEFAULT_QUANTILE_CAP = 1_000_000


def clamp_linear_predictor(eta: np.ndarray | float) -> np.ndarray | float:
    """Ограничивает |x'θ| ≤ 35; inf/nan → NumericOverflowError."""
    eta_arr = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta_arr)):
        raise NumericOverflowError("Линейный предиктор не конечен")
    clipped = np.clip(eta_arr, -ETA_BOUND, ETA_BOUND)
    return float(clipped) if clipped.ndim == 0 else clipped


def nb_logpmf(k: np.ndarray | float, mu: np.ndarray | float, phi: np.ndarray | float) -> np.ndarray:
    """log NB(k | μ, φ) через log-gamma."""
    k = np.asarray(k, dtype=float)
    mu = np.asarray(mu, dtype=float)
    phi = np.asarray(phi, dtype=float)
    log_total = np.log(phi + mu)
    return (
        special.gammaln(k + phi)
        - special.gammaln(phi)
        - special.gammaln(k + 1.0)
        + phi * (np.log(phi) - log_total)
        + special.xlogy(k, mu)
        - k * log_total
    )


def poisson_logpmf(k: np.ndarray | float, mu: np.ndarray | float) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return special.xlogy(k, mu) - mu - special.gammaln(k + 1.0)


class _CellDistribution:
    """Распределение Y_ij для одного x_ij: вероятность нуля и pmf положительной части."""

    def __init__(self, x: np.ndarray, params: MarginalParams) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != params.beta.shape:
            raise DomainError(
                f"Длина x ({x.shape[0]}) не совпадает с числом коэффициентов ({params.n_coefficients})"
            )
        self.family = params.family
        self.phi = params.phi
        self.mu = float(np.exp(clamp_linear_predictor(x @ params.beta)))
        if self.family.has_presence:
            eta = clamp_linear_predictor(x @ params.alpha)
            self.zero_mass = float(special.expit(-eta))
            self.presence = float(special.expit(eta))
        else:
            self.zero_mass = 0.0
            self.presence = 1.0

    def base_pmf(self, k: int) -> float:
        """pmf счётчика без барьера: NB(k) или Poisson(k)."""
        if self.family is MarginalFamily.POISSON_HURDLE:
            return float(np.exp(poisson_logpmf(k, self.mu)))
        return float(np.exp(nb_logpmf(k, self.mu, self.phi)))

    def pmf(self, y: int) -> float:
        if y < 0:
            return 0.0
        if self.family is MarginalFamily.PLAIN_NB:
            return self.base_pmf(y)
        if y == 0:
            return self.zero_mass
        return self.presence * self.base_pmf(y - 1)


def _as_count(y: int | float) -> int:
    if float(y) != int(y):
        raise DomainError(f"Ожидалось целое значение, получено {y}")
    return int(y)


def hurdle_pmf(y: int, x: np.ndarray, params: MarginalParams) -> float:
    """
    P(Y = y | x, θ_M).

    Для hurdle-семейств: (1 − π) при y = 0 и π·NB(y − 1 | μ = e^{x'β}, φ) при y ≥ 1,
    π = logit⁻¹(x'α). Для plain-NB — обычная NB(y | μ, φ).
    """
    return _CellDistribution(x, params).pmf(_as_count(y))


def hurdle_cdf(y: int, x: np.ndarray, params: MarginalParams) -> float:
    """F(y) накопительной суммой pmf; F(y) = 0 при y < 0."""
    y = _as_count(y)
    if y < 0:
        return 0.0
    cell = _CellDistribution(x, params)
    total = 0.0
    for u in range(y + 1):
        total += cell.pmf(u)
    return min(total, 1.0)


def hurdle_quantile(
    p: float,
    x: np.ndarray,
    params: MarginalParams,
    cap: int = DEFAULT_QUANTILE_CAP,
) -> int:
    """
    Псевдообратная функция min{y ≥ 0 : p ≤ F(y)}.

    Parameters
    ----------
    p : float
        Уровень в [0, 1).
    x : np.ndarray
        Вектор предикторов x_ij (длина d+1).
    params : MarginalParams
        Маргинальные параметры.
    cap : int, optional
        Максимальное число шагов накопления (по умолчанию 10⁶).

    Returns
    -------
    int
        Квантиль; совпадение p = F(y) разрешается в пользу y.

    Raises
    ------
    DomainError
        Если p вне [0, 1).
    QuantileCapError
        Если за ``cap`` шагов F не достигла p.
    """
    if not 0.0 <= p < 1.0:
        raise DomainError(f"Уровень квантиля должен лежать в [0, 1), получено {p}")
    cell = _CellDistribution(x, params)
    total = 0.0
    for y in range(cap + 1):
        total += cell.pmf(y)
        if p <= total:
            return y
    raise QuantileCapError(
        f"Квантиль p={p} не достигнут за {cap} шагов (μ={cell.mu:.3g}, φ={cell.phi})"
    )


def latent_to_count(
    v: float,
    x: np.ndarray,
    params: MarginalParams,
    cap: int = DEFAULT_QUANTILE_CAP,
) -> int:
    """h(v) = Q(Φ(v)): латентная гауссова величина → счётчик."""
    if not np.isfinite(v):
        raise DomainError(f"Латентное значение должно быть конечным, получено {v}")
    return hurdle_quantile(float(stats.norm.cdf(v)), x, params, cap=cap)


def _base_frozen(family: MarginalFamily, mu: np.ndarray, phi: float | None):
    if family is MarginalFamily.POISSON_HURDLE:
        return stats.poisson(mu)
    return stats.nbinom(phi, phi / (phi + mu))


def latent_to_count_array(
    v: np.ndarray,
    predictors: np.ndarray,
    params: MarginalParams,
    cap: int = DEFAULT_QUANTILE_CAP,
) -> np.ndarray:
    """
    Векторное h(v) для набора ячеек.

    Parameters
    ----------
    v : np.ndarray
        Латентные значения формы (N,).
    predictors : np.ndarray
        Матрица x_ij формы (N, d+1) в том же порядке.
    params : MarginalParams
        Маргинальные параметры.
    cap : int, optional
        Верхняя граница допустимого счётчика.

    Returns
    -------
    np.ndarray
        Целочисленный массив y формы (N,).
    """
    v = np.asarray(v, dtype=float)
    u = np.minimum(stats.norm.cdf(v), np.nextafter(1.0, 0.0))
    mu = np.exp(clamp_linear_predictor(predictors @ params.beta))
    counts = np.zeros(v.shape[0], dtype=np.int64)

    if params.family is MarginalFamily.PLAIN_NB:
        positive = u > 0.0
        raw = _base_frozen(params.family, mu[positive], params.phi).ppf(u[positive])
        offset = 0
    else:
        eta = clamp_linear_predictor(predictors @ params.alpha)
        zero_mass = special.expit(-eta)
        positive = u > zero_mass
        level = (u[positive] - zero_mass[positive]) / special.expit(eta[positive])
        raw = _base_frozen(params.family, mu[positive], params.phi).ppf(np.minimum(level, 1.0))
        offset = 1

    if raw.size:
        if not np.all(np.isfinite(raw)) or raw.max() + offset > cap:
            raise QuantileCapError("Сгенерированный счётчик превысил допустимый предел")
        counts[positive] = np.maximum(raw, 0).astype(np.int64) + offset
    return counts


def hurdle_cdf_array(
    y: np.ndarray,
    predictors: np.ndarray,
    params: MarginalParams,
) -> np.ndarray:
    """Векторная F(y) для ячеек (через cdf scipy); используется диагностикой и тестами."""
    y = np.asarray(y, dtype=float)
    mu = np.exp(clamp_linear_predictor(predictors @ params.beta))
    base = _base_frozen(params.family, mu, params.phi)
    if params.family is MarginalFamily.PLAIN_NB:
        return np.where(y < 0, 0.0, base.cdf(y))
    eta = clamp_linear_predictor(predictors @ params.alpha)
    zero_mass = special.expit(-eta)
    tail = np.where(y >= 1, base.cdf(y - 1), 0.0)
    return np.where(y < 0, 0.0, zero_mass + special.expit(eta) * tail)
