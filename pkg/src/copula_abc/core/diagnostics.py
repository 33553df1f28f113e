"""Диагностика сходимости (R̂, ESS) и апостериорные предсказательные проверки (ppp)."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from copula_abc.core.model import CountDataset, StudyDesign
from copula_abc.core.samplers.base import ChainArchive
from copula_abc.core.summaries import SIMULATION_FAILURES
from copula_abc.errors import DomainError, UndefinedStatistic
from copula_abc.protocols import DatasetSimulatorProtocol, LoggerProtocol
from copula_abc.utils.rng import derive_seed

_logger = logging.getLogger(__name__)

RHAT_THRESHOLD = 1.1
MIN_CHAIN_LENGTH = 10
TAIL_THRESHOLDS = (3, 8)
BOXPLOT_LEVELS = (0.025, 0.25, 0.5, 0.75, 0.975)
PPP_ALERT = 0.05


def gelman_rubin(chains: Sequence[np.ndarray]) -> float:
    """
    R̂ = √(((n − 1)/n · W + B/n) / W).

    Raises
    ------
    DomainError
        Меньше двух цепочек, разные длины или длина < 10.
    UndefinedStatistic
        Если внутрицепочечная дисперсия W = 0.
    """
    if len(chains) < 2:
        raise DomainError("R̂ требует не менее двух цепочек")
    if len({np.size(c) for c in chains}) != 1:
        raise DomainError("Цепочки должны иметь одинаковую длину")
    data = np.vstack([np.asarray(c, dtype=float).ravel() for c in chains])
    n = data.shape[1]
    if n < MIN_CHAIN_LENGTH:
        raise DomainError(f"Длина цепочек {n} < {MIN_CHAIN_LENGTH}")
    within = float(np.mean(np.var(data, axis=1, ddof=1)))
    if within <= 0.0:
        raise UndefinedStatistic("R̂ не определён: внутрицепочечная дисперсия равна нулю")
    between = n * float(np.var(np.mean(data, axis=1), ddof=1))
    return float(np.sqrt(((n - 1) / n * within + between / n) / within))


def autocorrelation(chain: np.ndarray) -> np.ndarray:
    """ρ̂_t для t = 0..N−1 через БПФ (смещённая автоковариация)."""
    x = np.asarray(chain, dtype=float).ravel()
    n = x.size
    centred = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centred, size)
    acov = np.fft.irfft(spectrum * np.conjugate(spectrum), size)[:n] / n
    if acov[0] <= 0.0:
        raise UndefinedStatistic("Автокорреляция не определена для постоянной цепочки")
    return acov / acov[0]


def effective_sample_size(chain: np.ndarray) -> float:
    """
    N / (1 + 2 Σ ρ̂_t) с усечением по начальной положительной последовательности.

    Суммы пар Γ_k = ρ̂_{2k} + ρ̂_{2k+1} накапливаются до первой отрицательной.
    Время автокорреляции ограничено снизу 1/log10(N).
    """
    x = np.asarray(chain, dtype=float).ravel()
    n = x.size
    if n < MIN_CHAIN_LENGTH:
        raise DomainError(f"Длина цепочки {n} < {MIN_CHAIN_LENGTH}")
    rho = autocorrelation(x)
    if n % 2:
        rho = rho[:-1]
    pair_sums = rho[0::2] + rho[1::2]
    negative = np.flatnonzero(pair_sums < 0)
    if negative.size:
        pair_sums = pair_sums[: negative[0]]
    tau = -1.0 + 2.0 * float(np.sum(pair_sums))
    tau = max(tau, 1.0 / np.log10(n))
    return float(n / tau)


def combined_ess(chains: Sequence[np.ndarray]) -> float:
    """Сумма ESS по цепочкам."""
    return float(sum(effective_sample_size(c) for c in chains))


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Корреляция Пирсона средних рангов."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DomainError("Последовательности должны иметь одинаковую длину")
    if x.size < 3:
        raise DomainError("Корреляция Спирмена требует не менее трёх пар")
    rx = stats.rankdata(x, method="average")
    ry = stats.rankdata(y, method="average")
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt(np.sum(rx * rx) * np.sum(ry * ry))
    if denom == 0.0:
        raise UndefinedStatistic("Корреляция Спирмена не определена: нулевая дисперсия рангов")
    return float(np.clip(np.sum(rx * ry) / denom, -1.0, 1.0))


def _optional(fn: Callable[[], float]) -> float | None:
    try:
        return fn()
    except UndefinedStatistic:
        return None


def convergence_table(
    archives: Sequence[ChainArchive],
    burnin: int = 0,
    thin: int = 1,
    threshold: float = RHAT_THRESHOLD,
) -> pd.DataFrame:
    """
    R̂ и суммарный ESS по параметрам после прогрева.

    Неопределённые значения записываются как None; ``flagged`` — R̂ > threshold.
    """
    trimmed = [a.post_burnin(burnin, thin) for a in archives]
    names = trimmed[0].names
    rows = []
    for k, name in enumerate(names):
        columns = [a.theta[:, k] for a in trimmed]
        rhat = _optional(lambda: gelman_rubin(columns)) if len(columns) > 1 else None
        ess = _optional(lambda: combined_ess(columns))
        rows.append({
            "parameter": name,
            "rhat": rhat,
            "ess": ess,
            "flagged": rhat is not None and rhat > threshold,
        })
    return pd.DataFrame(rows, columns=["parameter", "rhat", "ess", "flagged"])


@dataclass(frozen=True)
class TestStatistics:
    """t(Y) = (t_M, t_R); ``pair_counts`` — число пар наблюдений для каждого t_R."""

    __test__ = False

    t_M: dict[str, float]
    t_R: dict[str, float]
    pair_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, value in self.t_R.items():
            if not -1.0 <= value <= 1.0:
                raise DomainError(f"{name}: корреляция Спирмена вне [−1, 1]")

    def as_dict(self) -> dict[str, float]:
        return {**{f"t_M:{k}": v for k, v in self.t_M.items()}, **{f"t_R:{k}": v for k, v in self.t_R.items()}}


def _is_binary(column: np.ndarray) -> bool:
    return bool(np.all(np.isin(column, (0.0, 1.0))))


def marginal_statistics(dataset: CountDataset, tails: Sequence[int] = TAIL_THRESHOLDS) -> dict[str, float]:
    """
    Статистики t_M.

    Среднее и дисперсия Y, P(Y > 0), среднее и дисперсия Y | Y > 0, P(Y ≥ k),
    среднее и дисперсия Y | Y ≥ max(k), контрасты по терцилям непрерывных
    предикторов и по группам бинарных. Неопределённые статистики пропускаются.
    """
    y = dataset.values.astype(float)
    design = dataset.design
    result: dict[str, float] = {}

    def put(name: str, subset: np.ndarray, fn: Callable[[np.ndarray], float], minimum: int = 1) -> None:
        if subset.size < minimum:
            _logger.debug(f"Статистика {name} не определена: пустое подмножество")
            return
        result[name] = float(fn(subset))

    put("mean", y, np.mean)
    put("var", y, lambda v: np.var(v, ddof=1), minimum=2)
    put("p_nonzero", y, lambda v: np.mean(v > 0))
    positive = y[y > 0]
    put("mean_nonzero", positive, np.mean)
    put("var_nonzero", positive, lambda v: np.var(v, ddof=1), minimum=2)
    for k in tails:
        put(f"p_ge_{k}", y, lambda v, k=k: np.mean(v >= k))
    top = max(tails)
    tail = y[y >= top]
    put(f"mean_ge_{top}", tail, np.mean)
    put(f"var_ge_{top}", tail, lambda v: np.var(v, ddof=1), minimum=2)

    for col, name in enumerate(design.predictor_names[1:], start=1):
        x = design.predictors[:, col]
        if _is_binary(x):
            inside, outside = y[x == 1.0], y[x == 0.0]
            label = f"contrast_{name}"
        else:
            low, high = np.quantile(x, [1.0 / 3.0, 2.0 / 3.0])
            inside, outside = y[x <= low], y[x > high]
            label = f"tertile_{name}"
        if inside.size == 0 or outside.size == 0:
            _logger.debug(f"Статистика {label} не определена: пустая группа")
            continue
        result[label] = float(inside.mean() - outside.mean())
    return result


def pair_label(design: StudyDesign, pair: tuple[int, int]) -> str:
    a, b = pair
    return f"{design.margins[a].label}~{design.margins[b].label}"


def dependence_statistics(
    dataset: CountDataset, pairs: Sequence[tuple[int, int]]
) -> tuple[dict[str, float], dict[str, int]]:
    """Корреляции Спирмена t_R по индивидам, наблюдаемым в обеих маргиналях пары."""
    matrix = dataset.to_matrix()
    values: dict[str, float] = {}
    counts: dict[str, int] = {}
    for pair in pairs:
        a, b = pair
        both = ~np.isnan(matrix[:, a]) & ~np.isnan(matrix[:, b])
        label = pair_label(dataset.design, pair)
        counts[label] = int(both.sum())
        if both.sum() < 3:
            continue
        value = _optional(lambda: spearman(matrix[both, a], matrix[both, b]))
        if value is not None:
            values[label] = value
    return values, counts


class StatisticBattery:
    """Набор t(Y) для фиксированного списка пар маргиналей."""

    def __init__(self, pairs: Sequence[tuple[int, int]], tails: Sequence[int] = TAIL_THRESHOLDS) -> None:
        self.pairs = [(int(a), int(b)) for a, b in pairs]
        self.tails = tuple(tails)

    def compute(self, dataset: CountDataset) -> TestStatistics:
        t_R, counts = dependence_statistics(dataset, self.pairs)
        return TestStatistics(t_M=marginal_statistics(dataset, self.tails), t_R=t_R, pair_counts=counts)


def two_sided_ppp(t_obs: float, t_rep: np.ndarray) -> float:
    """ppp = min(1, 2·min{Pr(t_rep ≥ t_obs), Pr(t_rep ≤ t_obs)}), совпадения — в оба хвоста."""
    t_rep = np.asarray(t_rep, dtype=float)
    t_rep = t_rep[np.isfinite(t_rep)]
    if t_rep.size == 0:
        raise UndefinedStatistic("Нет репликатов для ppp")
    upper = float(np.mean(t_rep >= t_obs))
    lower = float(np.mean(t_rep <= t_obs))
    return min(1.0, 2.0 * min(upper, lower))


@dataclass(frozen=True, eq=False)
class PredictiveCheck:
    """Наблюдённые статистики, репликаты (строка — репликат) и ppp по статистикам."""

    observed: TestStatistics
    replicates: pd.DataFrame
    ppp: dict[str, float | None]
    failures: int = 0

    def boxplot_table(self) -> pd.DataFrame:
        """Квантили репликатов и наблюдённое значение по статистикам."""
        observed = self.observed.as_dict()
        rows = []
        for name in self.replicates.columns:
            column = self.replicates[name].dropna().to_numpy()
            if column.size == 0:
                continue
            row = {"statistic": name, "observed": observed.get(name)}
            row.update({f"q{100 * level:g}": float(np.quantile(column, level)) for level in BOXPLOT_LEVELS})
            rows.append(row)
        return pd.DataFrame(rows)

    def ppp_table(self) -> pd.DataFrame:
        observed = self.observed.as_dict()
        return pd.DataFrame(
            [{"statistic": name, "observed": observed.get(name), "ppp": value} for name, value in self.ppp.items()]
        )


def _resample(weights: np.ndarray, n_rep: int, rng: np.random.Generator) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    return rng.choice(weights.shape[0], size=n_rep, replace=True, p=weights / weights.sum())


def posterior_predictive_check(
    dataset_obs: CountDataset,
    theta: np.ndarray,
    weights: np.ndarray | None,
    simulator: DatasetSimulatorProtocol,
    battery: StatisticBattery,
    n_rep: int = 1000,
    seed: int = 0,
    threads: int = 1,
    logger: LoggerProtocol | None = None,
) -> PredictiveCheck:
    """
    Генерирует n_rep репликатов y_rep ~ p(y | θ^(g)) по θ, отобранным пропорционально
    весам, и вычисляет двусторонний ppp для каждой статистики батареи.

    Неудачные симуляции пропускаются и учитываются в ``failures``.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.shape[0] == 0:
        raise DomainError("Нет апостериорных выборок для предсказательной проверки")
    weights = np.ones(theta.shape[0]) if weights is None else weights
    rng = np.random.default_rng(derive_seed(seed, 0))
    index = _resample(weights, n_rep, rng)
    observed = battery.compute(dataset_obs)

    def one(r: int) -> dict[str, float] | None:
        try:
            replicate = simulator.simulate(theta[index[r]], derive_seed(seed, 1, r))
        except SIMULATION_FAILURES:
            return None
        return battery.compute(replicate).as_dict()

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(one, range(n_rep)))
    failures = sum(r is None for r in results)
    names = list(observed.as_dict())
    replicates = pd.DataFrame([r for r in results if r is not None], columns=names, dtype=float)

    ppp: dict[str, float | None] = {}
    for name, t_obs in observed.as_dict().items():
        ppp[name] = _optional(lambda: two_sided_ppp(t_obs, replicates[name].to_numpy()))
    if logger is not None:
        flagged = sum(1 for v in ppp.values() if v is not None and v < PPP_ALERT)
        logger.info(
            f"Предсказательная проверка: {n_rep - failures} репликатов, статистик {len(ppp)}, "
            f"ppp < {PPP_ALERT}: {flagged}, неудачных симуляций {failures}"
        )
    return PredictiveCheck(observed=observed, replicates=replicates, ppp=ppp, failures=failures)


def ppp(
    dataset_obs: CountDataset,
    theta: np.ndarray,
    statistic: Callable[[CountDataset], float],
    simulator: DatasetSimulatorProtocol,
    weights: np.ndarray | None = None,
    n_rep: int = 1000,
    seed: int = 0,
) -> float:
    """Двусторонний ppp одной статистики."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.shape[0] == 0:
        raise DomainError("Нет апостериорных выборок для предсказательной проверки")
    rng = np.random.default_rng(derive_seed(seed, 0))
    index = _resample(np.ones(theta.shape[0]) if weights is None else weights, n_rep, rng)
    t_rep = []
    for r in range(n_rep):
        try:
            t_rep.append(statistic(simulator.simulate(theta[index[r]], derive_seed(seed, 1, r))))
        except SIMULATION_FAILURES + (UndefinedStatistic,):
            continue
    return two_sided_ppp(statistic(dataset_obs), np.asarray(t_rep))


def ppp_histogram(
    check: PredictiveCheck,
    min_pairs: int = 100,
    bins: int = 20,
    alert: float = PPP_ALERT,
) -> tuple[pd.DataFrame, float]:
    """
    Гистограмма ppp статистик t_R, вычисленных не менее чем по ``min_pairs`` парам.

    Returns
    -------
    tuple[pd.DataFrame, float]
        Таблица (left, right, count) на [0, 1] и доля ppp < alert.
    """
    values = [
        check.ppp.get(f"t_R:{label}")
        for label, count in check.observed.pair_counts.items()
        if count >= min_pairs
    ]
    values = np.array([v for v in values if v is not None], dtype=float)
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    table = pd.DataFrame({"left": edges[:-1], "right": edges[1:], "count": counts})
    fraction = float(np.mean(values < alert)) if values.size else float("nan")
    return table, fraction
