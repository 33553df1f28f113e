"""
Сводные статистики s(Y) = (s_M, s_D), расстояние Δ, гауссово ядро и масштабирование A.

s_M — оценки максимального правдоподобия вспомогательной модели независимости
(логистическая регрессия присутствия и NB-регрессия сдвинутых счётчиков),
s_D — коэффициенты МНК-регрессии латентных оценок на суммы соседей.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import linalg, special, stats

from copula_abc.core.adjacency import AdjacencySpec
from copula_abc.core.marginals import clamp_linear_predictor
from copula_abc.core.model import CountDataset, MarginalFamily, ParameterLayout, StudyDesign
from copula_abc.errors import (
    DegenerateSummaryError,
    DomainError,
    NumericOverflowError,
    OutsideSupportError,
    QuantileCapError,
    SummaryFailure,
)
from copula_abc.protocols import DatasetSimulatorProtocol, LoggerProtocol
from copula_abc.utils.rng import derive_seed

logger = logging.getLogger(__name__)

LOGISTIC_TOL = 1e-8
LOGISTIC_MAX_ITER = 100
NB_TOL = 1e-6
NB_MAX_ITER = 500
LOG_PHI_BOUND = 10.0
COEF_BOUND = 30.0
RIDGE = 1e-8

# Ошибки генерации/оценки, которые означают «отклонить предложение»
SIMULATION_FAILURES = (SummaryFailure, QuantileCapError, NumericOverflowError, OutsideSupportError)


@dataclass(frozen=True, eq=False)
class SummaryVector:
    """s(Y): маргинальная часть s_M и часть зависимости s_D."""

    s_M: np.ndarray
    s_D: np.ndarray

    def __post_init__(self) -> None:
        s_M = np.asarray(self.s_M, dtype=float).ravel()
        s_D = np.asarray(self.s_D, dtype=float).ravel()
        if not (np.all(np.isfinite(s_M)) and np.all(np.isfinite(s_D))):
            raise SummaryFailure("Сводная статистика содержит нечисловые значения")
        object.__setattr__(self, "s_M", s_M)
        object.__setattr__(self, "s_D", s_D)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.s_M, self.s_D])

    def __len__(self) -> int:
        return self.s_M.shape[0] + self.s_D.shape[0]


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Ширина h гауссова ядра и диагональ матрицы масштабирования A."""

    bandwidth: float
    scaling: np.ndarray

    def __post_init__(self) -> None:
        scaling = np.asarray(self.scaling, dtype=float).ravel()
        if not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
            raise DomainError(f"Ширина ядра должна быть > 0, получено {self.bandwidth}")
        if np.any(~np.isfinite(scaling)) or np.any(scaling <= 0):
            raise DomainError("Элементы масштабирования A должны быть положительны")
        object.__setattr__(self, "bandwidth", float(self.bandwidth))
        object.__setattr__(self, "scaling", scaling)

    def with_bandwidth(self, bandwidth: float) -> "KernelSpec":
        return KernelSpec(bandwidth=bandwidth, scaling=self.scaling)


def _solve_normal_equations(hessian: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Решение взвешенных нормальных уравнений; при вырожденности добавляется гребень 1e-8."""
    try:
        return linalg.solve(hessian, rhs, assume_a="pos")
    except (linalg.LinAlgError, ValueError):
        logger.debug("Нормальные уравнения вырождены, добавлен гребень %.0e", RIDGE)
        try:
            return linalg.solve(hessian + RIDGE * np.eye(hessian.shape[0]), rhs, assume_a="pos")
        except (linalg.LinAlgError, ValueError) as e:
            raise SummaryFailure("Нормальные уравнения вырождены даже с гребнем") from e


def _check_coefficients(coef: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(coef)) or np.max(np.abs(coef)) > COEF_BOUND:
        raise SummaryFailure(f"{what}: коэффициенты расходятся (разделимость или вырожденные данные)")


def logistic_irls(X: np.ndarray, z: np.ndarray) -> np.ndarray:
    """
    Логистическая регрессия методом IRLS до ‖∇‖ < 1e-8 (не более 100 итераций).

    Raises
    ------
    SummaryFailure
        Один класс исхода, разделимость или отсутствие сходимости.
    """
    z = np.asarray(z, dtype=float)
    if z.size == 0 or z.min() == z.max():
        raise SummaryFailure("Логистическая оценка требует обоих классов исхода")
    coef = np.zeros(X.shape[1])
    for _ in range(LOGISTIC_MAX_ITER):
        prob = special.expit(X @ coef)
        gradient = X.T @ (z - prob)
        if np.linalg.norm(gradient) < LOGISTIC_TOL:
            return coef
        weights = prob * (1.0 - prob)
        hessian = X.T @ (X * weights[:, None])
        coef = coef + _solve_normal_equations(hessian, gradient)
        _check_coefficients(coef, "Логистическая регрессия")
    raise SummaryFailure(f"IRLS логистической регрессии не сошёлся за {LOGISTIC_MAX_ITER} итераций")


def _nb_dispersion_derivatives(y: np.ndarray, mu: np.ndarray, phi: float) -> tuple[float, float]:
    """Градиент и гессиан NB-правдоподобия по t = log φ."""
    total = phi + mu
    grad_phi = np.sum(
        special.digamma(y + phi) - special.digamma(phi) + np.log(phi) - np.log(total) + (mu - y) / total
    )
    hess_phi = np.sum(
        special.polygamma(1, y + phi)
        - special.polygamma(1, phi)
        + 1.0 / phi
        - 1.0 / total
        - (mu - y) / total**2
    )
    grad_t = phi * grad_phi
    hess_t = phi * grad_phi + phi**2 * hess_phi
    return float(grad_t), float(hess_t)


def _initial_intercept(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    mean = float(np.mean(y))
    if mean <= 0.0:
        raise SummaryFailure("Все сдвинутые счётчики равны нулю: оценка β не существует")
    coef = np.zeros(X.shape[1])
    coef[0] = np.log(mean)
    return coef


def nb_regression(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """
    NB-регрессия: чередование шага IRLS по β при фиксированном φ и шага Ньютона по log φ.

    log φ ограничен отрезком [−10, 10]; если оптимум лежит за границей, упор в
    границу с градиентом наружу считается сходимостью.

    Returns
    -------
    tuple[np.ndarray, float]
        (β̂, log φ̂).
    """
    y = np.asarray(y, dtype=float)
    coef = _initial_intercept(X, y)
    mean, var = float(np.mean(y)), float(np.var(y))
    log_phi = np.log(mean**2 / (var - mean)) if var > mean else LOG_PHI_BOUND
    log_phi = float(np.clip(log_phi, -LOG_PHI_BOUND, LOG_PHI_BOUND))

    for _ in range(NB_MAX_ITER):
        phi = np.exp(log_phi)
        mu = np.exp(clamp_linear_predictor(X @ coef))
        damping = 1.0 + mu / phi
        score = X.T @ ((y - mu) / damping)
        hessian = X.T @ (X * (mu / damping)[:, None])
        coef = coef + _solve_normal_equations(hessian, score)
        _check_coefficients(coef, "NB-регрессия")

        mu = np.exp(clamp_linear_predictor(X @ coef))
        grad_t, hess_t = _nb_dispersion_derivatives(y, mu, phi)
        step = -grad_t / hess_t if hess_t < 0 else float(np.sign(grad_t))
        log_phi = float(np.clip(log_phi + step, -LOG_PHI_BOUND, LOG_PHI_BOUND))

        phi = np.exp(log_phi)
        damping = 1.0 + mu / phi
        score = X.T @ ((y - mu) / damping)
        grad_t, _ = _nb_dispersion_derivatives(y, mu, phi)
        if abs(log_phi) >= LOG_PHI_BOUND and np.sign(grad_t) == np.sign(log_phi):
            grad_t = 0.0
        if not np.isfinite(grad_t):
            raise SummaryFailure("NB-регрессия: нечисловой градиент по log φ")
        if np.sqrt(score @ score + grad_t**2) < NB_TOL:
            return coef, log_phi
    raise SummaryFailure(f"NB-регрессия не сошлась за {NB_MAX_ITER} итераций")


def poisson_regression(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Пуассоновская регрессия методом IRLS (для семейства Poisson-hurdle)."""
    y = np.asarray(y, dtype=float)
    coef = _initial_intercept(X, y)
    for _ in range(NB_MAX_ITER):
        mu = np.exp(clamp_linear_predictor(X @ coef))
        score = X.T @ (y - mu)
        if np.linalg.norm(score) < NB_TOL:
            return coef
        coef = coef + _solve_normal_equations(X.T @ (X * mu[:, None]), score)
        _check_coefficients(coef, "Пуассоновская регрессия")
    raise SummaryFailure(f"Пуассоновская регрессия не сошлась за {NB_MAX_ITER} итераций")


def fit_logistic_mle(design: StudyDesign, dataset: CountDataset) -> np.ndarray:
    """α̂: логистическая регрессия Z_ij на x_ij по всем (i, j) ∈ 𝒟."""
    return logistic_irls(design.predictors, dataset.presence)


def fit_nb_mle(
    design: StudyDesign,
    dataset: CountDataset,
    family: MarginalFamily = MarginalFamily.NB_HURDLE,
) -> tuple[np.ndarray, float | None]:
    """
    (β̂, log φ̂) вспомогательной модели тяжести.

    Для hurdle-семейств используется 𝒟* = {y_ij > 0} и сдвиг y* = y − 1,
    для plain-NB — все наблюдения без сдвига. Для Poisson-hurdle log φ̂ = None.

    Raises
    ------
    SummaryFailure
        Пустое 𝒟*, все y* = 0 или отсутствие сходимости.
    """
    family = MarginalFamily(family)
    values = dataset.values
    if family is MarginalFamily.PLAIN_NB:
        X, y = design.predictors, values
    else:
        positive = values > 0
        if not positive.any():
            raise SummaryFailure("Нет положительных счётчиков: 𝒟* пусто")
        X, y = design.predictors[positive], values[positive] - 1
    if family is MarginalFamily.POISSON_HURDLE:
        return poisson_regression(X, y), None
    return nb_regression(X, y)


def estimate_latents(dataset: CountDataset, design: StudyDesign) -> np.ndarray:
    """
    Латентные оценки v̂_ij = Φ⁻¹(r_j(y_ij)/|ℐ_j|) по эмпирической функции распределения.

    r_j(y) = #{y_i'j < y} + ½·#{y_i'j = y}. Для ненаблюдаемых ячеек v̂ = 0.

    Returns
    -------
    np.ndarray
        Матрица n × J.
    """
    margins = pd.Series(design.cells[:, 1])
    grouped = pd.Series(dataset.values, dtype=float).groupby(margins)
    ranks = grouped.rank(method="average").to_numpy() - 0.5
    sizes = grouped.transform("size").to_numpy()
    latent = np.zeros((design.n_individuals, design.n_margins))
    latent[design.cells[:, 0], design.cells[:, 1]] = stats.norm.ppf(ranks / sizes)
    return latent


def _neighbour_columns(vhat: np.ndarray, weights: Sequence[np.ndarray], cells: np.ndarray) -> np.ndarray:
    if not weights:
        return np.zeros((cells.shape[0], 0))
    return np.column_stack([(vhat @ W)[cells[:, 0], cells[:, 1]] for W in weights])


def _sar_least_squares(vhat: np.ndarray, weights: Sequence[np.ndarray], cells: np.ndarray) -> np.ndarray:
    design_matrix = _neighbour_columns(vhat, weights, cells)
    if design_matrix.shape[1] == 0:
        return np.zeros(0)
    if np.linalg.matrix_rank(design_matrix) < design_matrix.shape[1]:
        raise SummaryFailure("Матрица сумм соседей не полного ранга")
    response = vhat[cells[:, 0], cells[:, 1]]
    coef, *_ = linalg.lstsq(design_matrix, response)
    return coef


def sar_summary(vhat: np.ndarray, adjacencies: Sequence[AdjacencySpec], design: StudyDesign) -> np.ndarray:
    """
    s_D = (Ṽ'Ṽ)⁻¹Ṽ'v̂ по строкам (i, j) ∈ 𝒟, ṽ_ij;k = Σ_j' w^(k)_jj' v̂_ij'.

    Raises
    ------
    SummaryFailure
        Если Ṽ не полного столбцового ранга.
    """
    weights = [spec.matrix(design.n_margins) for spec in adjacencies]
    return _sar_least_squares(np.asarray(vhat, dtype=float), weights, design.cells)


def distance(s: np.ndarray | SummaryVector, s_obs: np.ndarray | SummaryVector, kernel: KernelSpec) -> float:
    """Δ = (s − s_obs)' A (s − s_obs) при диагональной A."""
    s = s.vector if isinstance(s, SummaryVector) else np.asarray(s, dtype=float)
    s_obs = s_obs.vector if isinstance(s_obs, SummaryVector) else np.asarray(s_obs, dtype=float)
    if s.shape != s_obs.shape or s.shape != kernel.scaling.shape:
        raise DomainError(
            f"Размерности не совпадают: s {s.shape}, s_obs {s_obs.shape}, A {kernel.scaling.shape}"
        )
    diff = s - s_obs
    return float(np.sum(kernel.scaling * diff * diff))


def kernel_value(delta: float | np.ndarray, bandwidth: float) -> float | np.ndarray:
    """K_h(Δ) = exp(−Δ/h)."""
    if bandwidth <= 0:
        raise DomainError(f"Ширина ядра должна быть > 0, получено {bandwidth}")
    value = np.exp(-np.asarray(delta, dtype=float) / bandwidth)
    return float(value) if value.ndim == 0 else value


class SummaryCalculator:
    """
    Вычисляет s(Y) для наборов данных фиксированного дизайна.

    Плотные матрицы W^(k) строятся один раз; вызов ``compute`` потокобезопасен.
    """

    def __init__(
        self,
        design: StudyDesign,
        adjacencies: Sequence[AdjacencySpec],
        family: MarginalFamily = MarginalFamily.NB_HURDLE,
    ) -> None:
        self.design = design
        self.adjacencies = tuple(adjacencies)
        self.family = MarginalFamily(family)
        self._weights = [spec.matrix(design.n_margins) for spec in self.adjacencies]
        self.layout = ParameterLayout(
            family=self.family,
            predictor_names=design.predictor_names,
            adjacency_names=tuple(spec.name for spec in self.adjacencies),
        )

    @property
    def size(self) -> int:
        return self.layout.size

    def names(self) -> list[str]:
        """Имена компонент s: совпадают с именами соответствующих компонент θ."""
        return self.layout.names()

    def marginal_summary(self, dataset: CountDataset) -> np.ndarray:
        parts: list[np.ndarray] = []
        if self.family.has_presence:
            parts.append(fit_logistic_mle(self.design, dataset))
        beta, log_phi = fit_nb_mle(self.design, dataset, self.family)
        parts.append(beta)
        if log_phi is not None:
            parts.append(np.array([log_phi]))
        return np.concatenate(parts)

    def dependence_summary(self, dataset: CountDataset) -> np.ndarray:
        vhat = estimate_latents(dataset, self.design)
        return _sar_least_squares(vhat, self._weights, self.design.cells)

    def compute(self, dataset: CountDataset) -> SummaryVector:
        """
        s(Y) = (s_M, s_D).

        Raises
        ------
        SummaryFailure
            Если вспомогательная оценка не существует или не сошлась.
        """
        return SummaryVector(s_M=self.marginal_summary(dataset), s_D=self.dependence_summary(dataset))


def estimate_scaling(
    theta_tilde: np.ndarray,
    simulator: DatasetSimulatorProtocol,
    calculator: SummaryCalculator,
    seed: int,
    G: int = 10_000,
    threads: int = 1,
    logger: LoggerProtocol | None = None,
) -> np.ndarray:
    """
    Диагональ A = diag(1/σ̃²_k) по G наборам данных, сгенерированным при θ̃.

    Parameters
    ----------
    theta_tilde : np.ndarray
        Плоский вектор θ̃ (раскладка ``simulator.layout``).
    simulator : DatasetSimulatorProtocol
        Генератор данных.
    calculator : SummaryCalculator
        Вычислитель s(Y).
    seed : int
        Главный seed; набор g получает seed ``derive_seed(seed, g)``.
    G : int, optional
        Число симуляций (по умолчанию 10 000).
    threads : int, optional
        Размер пула потоков.
    logger : LoggerProtocol, optional
        Логгер прогресса.

    Returns
    -------
    np.ndarray
        Положительный вектор масштабов.

    Raises
    ------
    DegenerateSummaryError
        Если какая-либо компонента не варьирует или удачных симуляций меньше двух.
    """

    def one(g: int) -> np.ndarray | None:
        try:
            dataset = simulator.simulate(theta_tilde, derive_seed(seed, g))
            return calculator.compute(dataset).vector
        except SIMULATION_FAILURES:
            return None

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(one, range(G)))

    summaries = [s for s in results if s is not None]
    failed = G - len(summaries)
    if logger is not None:
        logger.info(f"Масштабирование: {len(summaries)} удачных симуляций из {G}, отклонено {failed}")
    if len(summaries) < 2:
        raise DegenerateSummaryError(f"Недостаточно удачных симуляций для оценки масштаба: {len(summaries)}")

    variance = np.var(np.vstack(summaries), axis=0, ddof=1)
    degenerate = np.flatnonzero(~(variance > 0.0))
    if degenerate.size:
        names = calculator.names()
        labels = [names[k] if k < len(names) else str(k) for k in degenerate]
        raise DegenerateSummaryError(f"Компоненты сводной статистики не варьируют: {labels}")
    return 1.0 / variance
