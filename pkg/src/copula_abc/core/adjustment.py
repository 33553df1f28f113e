"""Регрессионная коррекция ABC-выборок, z-преобразование, прореживание и сводные таблицы."""
from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Literal, Sequence

import numpy as np
import pandas as pd
from scipy import linalg

from copula_abc.core.adjacency import AdjacencySpec
from copula_abc.core.model import ParameterLayout
from copula_abc.core.samplers.base import ChainArchive, WeightedSample
from copula_abc.core.sar import build_correlation, check_support
from copula_abc.core.summaries import KernelSpec, SummaryVector
from copula_abc.errors import DomainError

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-10
NOISE_FRACTION = 1e-3
BACKTRACK_STEPS = 5
_RESIDUAL_FLOOR = 1e-300

Scale = Literal["identity", "z"]
AdjustmentMode = Literal["direct", "indirect"]


def z_transform(theta: np.ndarray | float) -> np.ndarray | float:
    """z(θ) = log((1 + θ)/(1 − θ)) на (−1, 1)."""
    theta = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(theta)) or np.any(np.abs(theta) >= 1.0):
        raise DomainError("z-преобразование определено только при |θ| < 1")
    result = np.log1p(theta) - np.log1p(-theta)
    return float(result) if result.ndim == 0 else result


def z_inverse(v: np.ndarray | float) -> np.ndarray | float:
    """Обратное к z: tanh(v/2), значения строго в (−1, 1) при конечном v."""
    result = np.tanh(0.5 * np.asarray(v, dtype=float))
    return float(result) if result.ndim == 0 else result


_FORWARD: dict[str, Callable] = {"identity": lambda x: np.asarray(x, dtype=float), "z": z_transform}
_INVERSE: dict[str, Callable] = {"identity": lambda x: np.asarray(x, dtype=float), "z": z_inverse}


@dataclass(frozen=True, eq=False)
class AdjustedSample:
    """
    Скорректированные (или сырые) выборки одной оцениваемой величины.

    ``values`` хранятся в исходной шкале величины; ``scale`` указывает, в какой
    шкале выполнялась регрессия. ``skipped`` — коррекция не выполнялась.
    """

    values: np.ndarray
    weights: np.ndarray
    estimand: str
    scale: Scale = "identity"
    skipped: bool = False
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if values.shape != weights.shape:
            raise DomainError(f"{self.estimand}: длины values и weights не совпадают")
        if not np.all(np.isfinite(values)):
            raise DomainError(f"{self.estimand}: скорректированные значения не конечны")
        if np.any(weights < 0) or not weights.sum() > 0:
            raise DomainError(f"{self.estimand}: веса должны быть неотрицательны с положительной суммой")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights / weights.sum())

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def mean(self) -> float:
        return float(np.sum(self.weights * self.values))

    @property
    def sd(self) -> float:
        return float(np.sqrt(np.sum(self.weights * (self.values - self.mean) ** 2)))

    def quantile(self, q: float | np.ndarray) -> float | np.ndarray:
        return weighted_quantile(self.values, self.weights, q)

    def interval(self, level: float) -> tuple[float, float]:
        """Равнохвостый интервал уровня ``level``."""
        if not 0.0 <= level <= 1.0:
            raise DomainError(f"Уровень интервала должен быть в [0, 1], получено {level}")
        tail = 0.5 * (1.0 - level)
        lower, upper = weighted_quantile(self.values, self.weights, np.array([tail, 1.0 - tail]))
        return float(lower), float(upper)


@dataclass(frozen=True)
class Estimand:
    """Оцениваемая величина: функция от строк θ и шкала регрессии."""

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    scale: Scale = "identity"


def weighted_quantile(values: np.ndarray, weights: np.ndarray, q: float | np.ndarray) -> float | np.ndarray:
    """Наименьшее x с F_w(x) ≥ q для взвешенного эмпирического распределения."""
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    q_arr = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any((q_arr < 0) | (q_arr > 1)):
        raise DomainError("Уровни квантилей должны быть в [0, 1]")
    order = np.argsort(values, kind="stable")
    cumulative = np.cumsum(weights[order])
    cumulative /= cumulative[-1]
    index = np.searchsorted(cumulative, q_arr - 1e-12, side="left")
    result = values[order][np.minimum(index, values.size - 1)]
    return float(result[0]) if np.ndim(q) == 0 else result


def epanechnikov_weights(deltas: np.ndarray, radius: float | None = None) -> np.ndarray:
    """K(Δ) = 1 − (Δ/r)² при Δ < r; при r = 0 все веса равны 1."""
    deltas = np.asarray(deltas, dtype=float)
    radius = float(np.max(deltas)) if radius is None else float(radius)
    if radius <= 0.0:
        return np.ones_like(deltas)
    return np.clip(1.0 - (deltas / radius) ** 2, 0.0, None)


def _weighted_lstsq(design: np.ndarray, response: np.ndarray, weights: np.ndarray) -> np.ndarray:
    root = np.sqrt(weights)
    coef, *_ = linalg.lstsq(design * root[:, None], response * root, lapack_driver="gelsd")
    return coef


def local_linear_adjust(
    theta: np.ndarray,
    s: np.ndarray,
    s_obs: np.ndarray | SummaryVector,
    weights_in: np.ndarray | None = None,
    deltas: np.ndarray | None = None,
    estimand: str = "theta",
) -> AdjustedSample:
    """
    Локально-линейная коррекция с условной гетероскедастичностью.

    (i) ВМНК ϑ на (s − s_obs) с весами Епанечникова по Δ (радиус = max Δ);
    (ii) регрессия log ε̂² на (s − s_obs) даёт σ̂(s);
    (iii) ϑ̈ = Ê(ϑ | s_obs) + σ̂(s_obs) · ε̂ / σ̂(s).

    Parameters
    ----------
    theta : np.ndarray
        Выборки величины (n,).
    s : np.ndarray
        Сводные статистики (n, q).
    s_obs : np.ndarray | SummaryVector
        Наблюдённая статистика.
    weights_in : np.ndarray, optional
        Входные веса (кратности); по умолчанию равные.
    deltas : np.ndarray, optional
        Δ(s, s_obs); по умолчанию квадрат евклидова расстояния.

    Returns
    -------
    AdjustedSample
        Значения, выровненные по входным строкам, с нормированными ``weights_in``.
        При числе уникальных строк < 2(q + 1) возвращаются сырые значения с
        ``skipped=True``.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    s = np.atleast_2d(np.asarray(s, dtype=float))
    s_obs = s_obs.vector if isinstance(s_obs, SummaryVector) else np.asarray(s_obs, dtype=float).ravel()
    n, q = s.shape
    if theta.shape[0] != n or s_obs.shape[0] != q:
        raise DomainError(f"Размерности не согласованы: θ {theta.shape}, s {s.shape}, s_obs {s_obs.shape}")
    weights_in = np.ones(n) if weights_in is None else np.asarray(weights_in, dtype=float).ravel()

    centred = s - s_obs
    if deltas is None:
        deltas = np.sum(centred * centred, axis=1)

    unique = np.unique(np.column_stack([theta, s]), axis=0).shape[0]
    minimum = 2 * (q + 1)
    if unique < minimum:
        logger.debug(f"{estimand}: уникальных выборок {unique} < {minimum}, коррекция пропущена")
        return AdjustedSample(
            values=theta, weights=weights_in, estimand=estimand, skipped=True,
            info={"unique": unique, "required": minimum},
        )
    if not np.any(centred):
        return AdjustedSample(values=theta, weights=weights_in, estimand=estimand, info={"unique": unique})

    regression_weights = weights_in * epanechnikov_weights(deltas)
    if not regression_weights.sum() > 0:
        regression_weights = weights_in
    design = np.column_stack([np.ones(n), centred])

    coef = _weighted_lstsq(design, theta, regression_weights)
    residuals = theta - design @ coef
    log_sq = np.log(np.maximum(residuals * residuals, _RESIDUAL_FLOOR))
    coef_var = _weighted_lstsq(design, log_sq, regression_weights)

    sigma_obs = max(float(np.exp(0.5 * coef_var[0])), SIGMA_FLOOR)
    sigma_s = np.maximum(np.exp(0.5 * (design @ coef_var)), SIGMA_FLOOR)
    adjusted = coef[0] + sigma_obs * residuals / sigma_s
    return AdjustedSample(
        values=adjusted,
        weights=weights_in,
        estimand=estimand,
        info={"unique": unique, "conditional_mean": float(coef[0]), "sigma_obs": sigma_obs},
    )


def _adjust_estimand(
    estimand: Estimand,
    theta: np.ndarray,
    s: np.ndarray,
    s_obs: np.ndarray,
    weights: np.ndarray,
    deltas: np.ndarray,
) -> AdjustedSample:
    raw = np.asarray(estimand.evaluate(theta), dtype=float)
    transformed = _FORWARD[estimand.scale](raw)
    result = local_linear_adjust(transformed, s, s_obs, weights, deltas, estimand=estimand.name)
    values = raw if result.skipped else _INVERSE[estimand.scale](result.values)
    info = dict(result.info, correction=result.values - transformed)
    return AdjustedSample(
        values=values, weights=weights, estimand=estimand.name, scale=estimand.scale,
        skipped=result.skipped, info=info,
    )


def _adjust_all(
    estimands: Sequence[Estimand],
    theta: np.ndarray,
    s: np.ndarray,
    s_obs: np.ndarray,
    weights: np.ndarray,
    deltas: np.ndarray,
    threads: int,
) -> dict[str, AdjustedSample]:
    def run(estimand: Estimand) -> AdjustedSample:
        return _adjust_estimand(estimand, theta, s, s_obs, weights, deltas)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, estimands))
    return {sample.estimand: sample for sample in results}


def _scaled_deltas(s: np.ndarray, s_obs: np.ndarray, kernel: KernelSpec | None) -> np.ndarray:
    diff = s - s_obs
    scaling = np.ones(s.shape[1]) if kernel is None else kernel.scaling
    return np.sum(scaling * diff * diff, axis=1)


def deduplicate(archive: ChainArchive) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Уникальные строки (θ, s) и их кратности."""
    stacked = np.hstack([archive.theta, archive.summaries])
    rows, counts = np.unique(stacked, axis=0, return_counts=True)
    width = archive.theta.shape[1]
    return rows[:, :width], rows[:, width:], counts.astype(float)


def add_summary_noise(
    summaries: np.ndarray, rng: np.random.Generator, fraction: float = NOISE_FRACTION
) -> np.ndarray:
    """s + Unif(±fraction·σ_s) покомпонентно, σ_s — выборочное стандартное отклонение."""
    spread = np.std(summaries, axis=0, ddof=1) if summaries.shape[0] > 1 else np.zeros(summaries.shape[1])
    return summaries + rng.uniform(-1.0, 1.0, summaries.shape) * fraction * spread


def adjust_chain(
    archive: ChainArchive,
    estimands: Sequence[Estimand],
    s_obs: np.ndarray | SummaryVector,
    noise: bool = False,
    rng: np.random.Generator | None = None,
    threads: int = 1,
) -> dict[str, AdjustedSample]:
    """
    Коррекция выборок цепочки (после прогрева).

    По умолчанию регрессия строится по уникальным записям (θ, s), а веса
    пропорциональны кратностям. В варианте ``noise=True`` к каждой записи
    добавляется шум Unif(±0.001σ) и все записи участвуют с равными весами.
    """
    s_obs_vec = s_obs.vector if isinstance(s_obs, SummaryVector) else np.asarray(s_obs, dtype=float)
    if noise:
        rng = rng or np.random.default_rng(archive.seed)
        theta = archive.theta
        summaries = add_summary_noise(archive.summaries, rng)
        weights = np.ones(theta.shape[0])
    else:
        theta, summaries, weights = deduplicate(archive)
    deltas = _scaled_deltas(summaries, s_obs_vec, archive.kernel)
    return _adjust_all(estimands, theta, summaries, s_obs_vec, weights, deltas, threads)


def adjust_sample(
    sample: WeightedSample,
    estimands: Sequence[Estimand],
    s_obs: np.ndarray | SummaryVector,
    threads: int = 1,
) -> dict[str, AdjustedSample]:
    """Коррекция взвешенной выборки rejection/importance (строки с нулевым весом исключаются)."""
    keep = sample.weights > 0
    s_obs_vec = s_obs.vector if isinstance(s_obs, SummaryVector) else np.asarray(s_obs, dtype=float)
    return _adjust_all(
        estimands,
        sample.theta[keep],
        sample.summaries[keep],
        s_obs_vec,
        sample.weights[keep],
        sample.distances[keep],
        threads,
    )


def raw_chain_samples(archive: ChainArchive, estimands: Sequence[Estimand]) -> dict[str, AdjustedSample]:
    """Нескорректированные выборки цепочки: каждая запись с равным весом."""
    weights = np.ones(archive.iterations)
    return {
        e.name: AdjustedSample(values=e.evaluate(archive.theta), weights=weights, estimand=e.name,
                               scale=e.scale, skipped=True)
        for e in estimands
    }


def raw_weighted_samples(sample: WeightedSample, estimands: Sequence[Estimand]) -> dict[str, AdjustedSample]:
    keep = sample.weights > 0
    return {
        e.name: AdjustedSample(values=e.evaluate(sample.theta[keep]), weights=sample.weights[keep],
                               estimand=e.name, scale=e.scale, skipped=True)
        for e in estimands
    }


class CorrelationEntries:
    """
    Элементы R(θ_D) для заданных пар маргиналей по строкам θ.

    R строится один раз на уникальное значение ρ; кэш разделяется потоками.
    """

    def __init__(
        self,
        layout: ParameterLayout,
        adjacencies: Sequence[AdjacencySpec],
        n_margins: int,
        pairs: Sequence[tuple[int, int]],
    ) -> None:
        self.layout = layout
        self.adjacencies = tuple(adjacencies)
        self.n_margins = n_margins
        self.pairs = [(int(a), int(b)) for a, b in pairs]
        self._rows = np.array([a for a, _ in self.pairs], dtype=np.int64)
        self._cols = np.array([b for _, b in self.pairs], dtype=np.int64)
        self._cache: dict[tuple[float, ...], np.ndarray] = {}
        self._lock = threading.Lock()

    def _entries(self, rho: np.ndarray) -> np.ndarray:
        key = tuple(float(v) for v in rho)
        with self._lock:
            cached = self._cache.get(key)
        if cached is None:
            cached = build_correlation(self.adjacencies, rho, self.n_margins).R[self._rows, self._cols]
            with self._lock:
                self._cache[key] = cached
        return cached

    def from_rho(self, rho: np.ndarray) -> np.ndarray:
        """Матрица (n, число пар) значений R_{jj'}."""
        rho = np.atleast_2d(np.asarray(rho, dtype=float))
        if rho.shape[1] == 0:
            return np.zeros((rho.shape[0], len(self.pairs)))
        unique, inverse = np.unique(rho, axis=0, return_inverse=True)
        entries = np.vstack([self._entries(value) for value in unique])
        return entries[np.asarray(inverse).ravel()]

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        return self.from_rho(theta[:, self.layout.slice_of("rho")])

    def estimands(self, labels: Sequence[str] | None = None) -> list[Estimand]:
        labels = labels or [f"R[{a},{b}]" for a, b in self.pairs]
        return [
            Estimand(name=label, evaluate=lambda theta, k=k: self(theta)[:, k], scale="z")
            for k, label in enumerate(labels)
        ]


def parameter_estimands(layout: ParameterLayout) -> list[Estimand]:
    """θ_M покомпонентно (log φ в лог-шкале) и θ_D в z-шкале."""
    estimands = []
    rho_slice = layout.slice_of("rho")
    for k, name in enumerate(layout.names()):
        scale: Scale = "z" if rho_slice.start <= k < rho_slice.stop else "identity"
        estimands.append(Estimand(name=name, evaluate=lambda theta, k=k: np.atleast_2d(theta)[:, k], scale=scale))
    return estimands


def adjust_dependence(
    archive: ChainArchive,
    adjacencies: Sequence[AdjacencySpec],
    s_obs: np.ndarray | SummaryVector,
    mode: AdjustmentMode,
    layout: ParameterLayout,
    n_margins: int,
    pairs: Sequence[tuple[int, int]] = (),
    labels: Sequence[str] | None = None,
    threads: int = 1,
) -> dict[str, AdjustedSample]:
    """
    Коррекция зависимости.

    ``direct``: каждый R_{jj'}(θ_D) корректируется отдельно в z-шкале; совместная
    согласованность матрицы не гарантируется.
    ``indirect``: θ_D корректируется покомпонентно в z-шкале; если результат вне
    Θ_D, поправка делится на 2^m для первого m ∈ {1..5}, дающего допустимое θ_D,
    иначе остаётся исходная выборка. R_{jj'} затем вычисляются по скорректированному θ_D.
    """
    entries = CorrelationEntries(layout, adjacencies, n_margins, pairs)
    if mode == "direct":
        return adjust_chain(archive, entries.estimands(labels), s_obs, threads=threads)
    if mode != "indirect":
        raise DomainError(f"Неизвестный режим коррекции зависимости: {mode}")

    rho_slice = layout.slice_of("rho")
    rho_estimands = [e for e in parameter_estimands(layout) if e.name.startswith("rho:")]
    adjusted = adjust_chain(archive, rho_estimands, s_obs, threads=threads)
    theta_unique, _, counts = deduplicate(archive)
    raw_rho = theta_unique[:, rho_slice]
    if any(adjusted[e.name].skipped for e in rho_estimands):
        corrected = raw_rho
        backtracked = np.zeros(raw_rho.shape[0], dtype=np.int64)
    else:
        correction = np.column_stack([adjusted[e.name].info["correction"] for e in rho_estimands])
        corrected, backtracked = _backtrack(raw_rho, correction, adjacencies, n_margins)

    result: dict[str, AdjustedSample] = {}
    for k, e in enumerate(rho_estimands):
        result[e.name] = AdjustedSample(
            values=corrected[:, k], weights=counts, estimand=e.name, scale="z",
            skipped=adjusted[e.name].skipped,
            info={"backtracked": int(np.sum(backtracked > 0)), "unadjusted": int(np.sum(backtracked < 0))},
        )
    if entries.pairs:
        values = entries.from_rho(corrected)
        for k, e in enumerate(entries.estimands(labels)):
            result[e.name] = AdjustedSample(values=values[:, k], weights=counts, estimand=e.name, scale="z")
    return result


def _backtrack(
    raw_rho: np.ndarray,
    correction: np.ndarray,
    adjacencies: Sequence[AdjacencySpec],
    n_margins: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Возвращает θ_D и номер шага m (0 — полная поправка, −1 — поправка отброшена)."""
    z_raw = z_transform(raw_rho)
    corrected = raw_rho.copy()
    steps = np.full(raw_rho.shape[0], -1, dtype=np.int64)
    for g in range(raw_rho.shape[0]):
        for m in range(BACKTRACK_STEPS + 1):
            candidate = np.atleast_1d(z_inverse(z_raw[g] + correction[g] / 2**m))
            if check_support(adjacencies, candidate, n_margins):
                corrected[g] = candidate
                steps[g] = m
                break
    return corrected, steps


def systematic_resample(weights: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Индексы систематического ресэмплинга по нормированным весам."""
    if size < 1:
        raise DomainError(f"Размер выборки должен быть ≥ 1, получено {size}")
    weights = np.asarray(weights, dtype=float)
    cumulative = np.cumsum(weights / weights.sum())
    cumulative[-1] = 1.0
    positions = (rng.random() + np.arange(size)) / size
    return np.searchsorted(cumulative, positions, side="left")


def thin(
    samples: dict[str, AdjustedSample], size: int, rng: np.random.Generator
) -> dict[str, AdjustedSample]:
    """
    Прореживание после коррекции до ``size`` выборок с равными весами.

    Все величины с одинаковыми весами ресэмплируются по одним и тем же индексам,
    так что совместная структура сохраняется.
    """
    result: dict[str, AdjustedSample] = {}
    index_cache: list[tuple[np.ndarray, np.ndarray]] = []
    for name, sample in samples.items():
        index = next((idx for w, idx in index_cache if w.shape == sample.weights.shape
                      and np.array_equal(w, sample.weights)), None)
        if index is None:
            index = systematic_resample(sample.weights, size, rng)
            index_cache.append((sample.weights, index))
        result[name] = AdjustedSample(
            values=sample.values[index], weights=np.ones(size), estimand=name,
            scale=sample.scale, skipped=sample.skipped, info={"thinned_from": sample.size},
        )
    return result


def combine_chains(per_chain: Sequence[dict[str, AdjustedSample]]) -> dict[str, AdjustedSample]:
    """Объединяет выборки цепочек; каждая цепочка получает равную общую массу."""
    if not per_chain:
        raise DomainError("Нет выборок для объединения")
    names = list(per_chain[0])
    combined = {}
    for name in names:
        parts = [chain[name] for chain in per_chain]
        combined[name] = AdjustedSample(
            values=np.concatenate([p.values for p in parts]),
            weights=np.concatenate([p.weights for p in parts]),
            estimand=name,
            scale=parts[0].scale,
            skipped=any(p.skipped for p in parts),
        )
    return combined


def summary_table(samples: dict[str, AdjustedSample], level: float = 0.95) -> pd.DataFrame:
    """Взвешенное среднее, стандартное отклонение и равнохвостый интервал по величинам."""
    rows = []
    for name, sample in samples.items():
        lower, upper = sample.interval(level)
        rows.append({
            "estimand": name,
            "mean": sample.mean,
            "sd": sample.sd,
            "lower": lower,
            "upper": upper,
            "adjusted": not sample.skipped,
        })
    return pd.DataFrame(rows, columns=["estimand", "mean", "sd", "lower", "upper", "adjusted"])


def acceptance_table(archives: Sequence[ChainArchive]) -> pd.DataFrame:
    """Принятия на 100 итераций и число уникальных выборок по цепочкам."""
    return pd.DataFrame(
        [
            {
                "chain": c + 1,
                "iterations": a.iterations,
                "accepted_per_100": a.acceptance_per_100(),
                "unique": a.unique_count(),
                "failures": a.failures,
            }
            for c, a in enumerate(archives)
        ]
    )
