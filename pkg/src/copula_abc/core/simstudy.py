"""Имитационное исследование: репликации, bias / RMSE / ECR / OECS и агрегированные ранги методов."""
from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
import pandas as pd

from copula_abc.core.adjacency import AdjacencySpec, preset_names
from copula_abc.core.adjustment import (
    AdjustedSample,
    CorrelationEntries,
    Estimand,
    adjust_chain,
    adjust_dependence,
    adjust_sample,
    combine_chains,
    parameter_estimands,
    raw_chain_samples,
    raw_weighted_samples,
    thin,
    weighted_quantile,
)
from copula_abc.core.copula import DatasetSimulator
from copula_abc.core.design import StudyTruth
from copula_abc.core.diagnostics import pair_label
from copula_abc.core.gibbs import assemble_proposal, init_dependence, mle_initialization, run_independence_fit
from copula_abc.core.model import HyperParams, MarginalFamily, ParameterLayout, StudyDesign
from copula_abc.core.ranking import CrossEntropyConfig, aggregate_ranks, rank_by
from copula_abc.core.samplers import ABCMCMCSampler, ImportanceSampler, RejectionSampler
from copula_abc.core.summaries import KernelSpec, SummaryCalculator, estimate_scaling
from copula_abc.errors import ConfigError, CopulaABCError, DomainError
from copula_abc.protocols import LoggerProtocol
from copula_abc.utils.rng import derive_seed

ZETA_GRID = np.round(np.arange(1, 40) * 0.025, 3)
WIDTH_LEVEL = 0.8
METRICS = ("bias", "rmse", "oecs")

MethodKind = Literal["independence", "abc-mcmc", "rejection", "importance"]


@dataclass(frozen=True)
class StudyMethod:
    """Метод исследования: алгоритм, ширина ядра (для ABC-MCMC) и наличие коррекции."""

    name: str
    kind: MethodKind
    bandwidth: float | None = None
    adjusted: bool = False


_METHOD_PATTERN = re.compile(r"^(m0|mcmc|rejection|importance)(\+reg)?(?::h=?([0-9.eE+-]+))?$")


def parse_method(label: str) -> StudyMethod:
    """
    Разбирает метку метода: ``m0``, ``mcmc:h=10``, ``mcmc+reg:h=10``, ``rejection``,
    ``rejection+reg``, ``importance``, ``importance+reg``.
    """
    match = _METHOD_PATTERN.match(label.strip().lower())
    if match is None:
        raise ConfigError(f"Неизвестный метод '{label}'")
    base, reg, bandwidth = match.groups()
    adjusted = reg is not None
    if base == "m0":
        if adjusted or bandwidth:
            raise ConfigError("Метод m0 не имеет ширины ядра и коррекции")
        return StudyMethod(name="M0", kind="independence")
    if base == "mcmc":
        if bandwidth is None:
            raise ConfigError(f"Для '{label}' требуется ширина ядра, например mcmc:h=10")
        h = float(bandwidth)
        return StudyMethod(name=f"MCMC{'+Reg' if adjusted else ''} h={h:g}", kind="abc-mcmc",
                           bandwidth=h, adjusted=adjusted)
    name = {"rejection": "Rejection", "importance": "Importance"}[base]
    h = float(bandwidth) if bandwidth is not None else None
    suffix = f" h={h:g}" if h is not None else ""
    return StudyMethod(name=f"{name}{'+Reg' if adjusted else ''}{suffix}", kind=base, bandwidth=h, adjusted=adjusted)


@dataclass(frozen=True)
class StudySettings:
    """Размеры репликации; значения по умолчанию соответствуют настольному масштабу."""

    B: int = 10
    chains: int = 1
    iters: int = 20_000
    burnin: int = 5_000
    thin_size: int | None = 3_000
    gibbs_iters: int = 20_000
    gibbs_burnin: int = 5_000
    mh_width: float = 0.5
    scaling_G: int = 10_000
    init_G: int = 10_000
    init_keep: float = 0.01
    rejection_G: int = 50_000
    rejection_keep: float = 0.001
    importance_G: int = 50_000
    importance_bandwidth: float = 10.0
    importance_inflation: float = 4.0
    adjustment_mode: Literal["direct", "indirect"] = "direct"

    def __post_init__(self) -> None:
        if self.B < 2:
            raise ConfigError(f"Число репликаций B должно быть ≥ 2, получено {self.B}")
        if self.iters <= self.burnin:
            raise ConfigError(f"iters ({self.iters}) должно превышать burnin ({self.burnin})")

    @classmethod
    def full_scale(cls, **overrides) -> "StudySettings":
        """B = 100, 3 цепочки × 60000 итераций, rejection G = 250000."""
        base = cls(B=100, chains=3, iters=60_000, burnin=10_000, rejection_G=250_000, importance_G=250_000)
        return replace(base, **overrides)


@dataclass(frozen=True, eq=False)
class IntervalSummary:
    """Точечная оценка и равнохвостые интервалы на сетке ζ одной выборки."""

    mean: float
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def from_sample(cls, sample: AdjustedSample, grid: np.ndarray = ZETA_GRID) -> "IntervalSummary":
        tails = 0.5 * (1.0 - np.asarray(grid, dtype=float))
        lower = np.atleast_1d(weighted_quantile(sample.values, sample.weights, tails))
        upper = np.atleast_1d(weighted_quantile(sample.values, sample.weights, 1.0 - tails))
        return cls(mean=sample.mean, lower=lower, upper=upper)

    @classmethod
    def point_mass(cls, value: float, grid: np.ndarray = ZETA_GRID) -> "IntervalSummary":
        size = len(grid)
        return cls(mean=float(value), lower=np.full(size, float(value)), upper=np.full(size, float(value)))


@dataclass(frozen=True, eq=False)
class CoverageResult:
    ecr: np.ndarray
    oecs: float
    width80: float


def coverage_from_intervals(
    summaries: Sequence[IntervalSummary],
    truth: float,
    grid: np.ndarray = ZETA_GRID,
) -> CoverageResult:
    if len(summaries) < 2:
        raise DomainError(f"Покрытие требует не менее двух репликаций, получено {len(summaries)}")
    grid = np.asarray(grid, dtype=float)
    lower = np.vstack([s.lower for s in summaries])
    upper = np.vstack([s.upper for s in summaries])
    ecr = np.mean((lower <= truth) & (truth <= upper), axis=0)
    at_width = int(np.argmin(np.abs(grid - WIDTH_LEVEL)))
    width = float(np.mean(upper[:, at_width] - lower[:, at_width]))
    return CoverageResult(ecr=ecr, oecs=float(np.mean(ecr)), width80=width)


def coverage_metrics(
    draw_sets: Sequence[AdjustedSample],
    truth: float,
    zeta_grid: np.ndarray = ZETA_GRID,
) -> CoverageResult:
    """
    ECR(ζ) — доля репликаций, чей равнохвостый 100ζ% интервал накрывает истину;
    OECS — среднее ECR по сетке; width80 — средняя длина 80% интервала.
    """
    return coverage_from_intervals(
        [IntervalSummary.from_sample(s, zeta_grid) for s in draw_sets], truth, zeta_grid
    )


@dataclass(frozen=True, eq=False)
class MetricTable:
    """
    Метрики по (параметр, метод).

    Столбцы: parameter, group, method, truth, bias, rmse, oecs, width80, replicates.
    """

    frame: pd.DataFrame

    COLUMNS = ("parameter", "group", "method", "truth", "bias", "rmse", "oecs", "width80", "replicates")

    def __post_init__(self) -> None:
        missing = set(self.COLUMNS) - set(self.frame.columns)
        if missing:
            raise DomainError(f"В таблице метрик нет столбцов {sorted(missing)}")
        if np.any(self.frame["rmse"] < np.abs(self.frame["bias"]) - 1e-12):
            raise DomainError("RMSE меньше |bias|")
        if np.any((self.frame["oecs"] < 0) | (self.frame["oecs"] > 1)):
            raise DomainError("OECS вне [0, 1]")

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(self.frame["method"]))

    def wide(self, metric: str) -> pd.DataFrame:
        """Параметры × методы для одной метрики."""
        return self.frame.pivot(index="parameter", columns="method", values=metric).reindex(
            index=list(dict.fromkeys(self.frame["parameter"])), columns=self.methods
        )


def _metric_score(metric: str, value: float) -> float:
    if metric == "bias":
        return abs(value)
    if metric == "oecs":
        return abs(value - 0.5)
    return value


def rank_groupings(
    table: MetricTable,
    rng: np.random.Generator,
    config: CrossEntropyConfig | None = None,
) -> dict[str, tuple[str, ...]]:
    """
    Согласованные ранги методов по группам.

    Для каждой метрики (|bias|, RMSE, |OECS − 0.5|) и группы (θ_M, θ_R, вместе)
    списки по параметрам агрегируются в одну перестановку; ключ ``overall/<group>``
    объединяет списки всех трёх метрик.
    """
    frame = table.frame
    methods = table.methods
    groups = {
        "theta_M": frame["group"] == "theta_M",
        "theta_R": frame["group"] == "theta_R",
        "combined": frame["group"].isin(["theta_M", "theta_R"]),
    }
    result: dict[str, tuple[str, ...]] = {}
    for group, mask in groups.items():
        pooled: list[tuple[str, ...]] = []
        for metric in METRICS:
            lists = []
            for _, rows in frame[mask].groupby("parameter", sort=False):
                if set(rows["method"]) != set(methods):
                    continue
                scores = {m: _metric_score(metric, v) for m, v in zip(rows["method"], rows[metric])}
                lists.append(rank_by(scores))
            if not lists:
                continue
            pooled.extend(lists)
            result[f"{metric}/{group}"], _ = aggregate_ranks(lists, rng, config)
        if pooled:
            result[f"overall/{group}"], _ = aggregate_ranks(pooled, rng, config)
    return result


@dataclass(frozen=True, eq=False)
class StudyResult:
    metrics: MetricTable
    ecr: pd.DataFrame
    rankings: dict[str, tuple[str, ...]]
    failures: dict[str, int]
    manifest: dict = field(default_factory=dict)


class SimulationStudy:
    """
    Репликационное исследование: B наборов данных при истинных (θ_M, θ_D),
    подгонка каждым методом, метрики по параметрам θ_M, θ_D и θ_R.

    Методы ABC разделяют инициализацию и масштабирование внутри репликации;
    варианты с коррекцией и без используют одни и те же выборки.
    """

    def __init__(
        self,
        design: StudyDesign,
        truth: StudyTruth,
        truth_adjacencies: Sequence[AdjacencySpec],
        fit_adjacencies: Sequence[AdjacencySpec],
        methods: Sequence[StudyMethod],
        settings: StudySettings,
        logger: LoggerProtocol,
        pairs: Sequence[tuple[int, int]] = (),
        hyper: HyperParams | None = None,
        family: MarginalFamily = MarginalFamily.NB_HURDLE,
        ranking: CrossEntropyConfig | None = None,
    ) -> None:
        if not methods:
            raise ConfigError("Не задано ни одного метода")
        self.design = design
        self.truth = truth
        self.truth_adjacencies = tuple(truth_adjacencies)
        self.fit_adjacencies = tuple(fit_adjacencies)
        self.methods = tuple(methods)
        self.settings = settings
        self.logger = logger
        self.pairs = list(pairs)
        self.hyper = hyper or HyperParams()
        self.family = MarginalFamily(family)
        self.ranking = ranking

        self.truth_layout = ParameterLayout(
            family=truth.marginal.family,
            predictor_names=design.predictor_names,
            adjacency_names=tuple(a.name for a in self.truth_adjacencies),
        )
        self.fit_layout = ParameterLayout(
            family=self.family,
            predictor_names=design.predictor_names,
            adjacency_names=tuple(a.name for a in self.fit_adjacencies),
        )
        self.truth_theta = self.truth_layout.pack(
            truth.marginal, truth.rho_vector(self.truth_layout.adjacency_names)
        )
        self.pair_labels = [f"R:{pair_label(design, p)}" for p in self.pairs]
        self.fit_entries = CorrelationEntries(self.fit_layout, self.fit_adjacencies, design.n_margins, self.pairs)
        self.estimands: list[Estimand] = parameter_estimands(self.fit_layout) + self.fit_entries.estimands(
            self.pair_labels
        )
        self.truth_values, self.groups = self._truth_table()

    def _truth_table(self) -> tuple[dict[str, float], dict[str, str]]:
        values: dict[str, float] = {}
        groups: dict[str, str] = {}
        if self.truth.marginal.family is self.family:
            marginal = self.truth_layout.pack(self.truth.marginal)[: self.fit_layout.marginal_size]
            for name, value in zip(self.fit_layout.names(), marginal):
                values[name] = float(value)
                groups[name] = "theta_M"
        truth_names = set(preset_names(self.truth.preset))
        for name in self.fit_layout.adjacency_names:
            if name in truth_names:
                values[f"rho:{name}"] = float(self.truth.rho.get(name, 0.0))
                groups[f"rho:{name}"] = "theta_D"
        if self.pairs:
            truth_entries = CorrelationEntries(
                self.truth_layout, self.truth_adjacencies, self.design.n_margins, self.pairs
            )
            entries = truth_entries(self.truth_theta)[0]
            for label, value in zip(self.pair_labels, entries):
                values[label] = float(value)
                groups[label] = "theta_R"
        return values, groups

    def _simulator(self, layout: ParameterLayout, adjacencies: Sequence[AdjacencySpec]) -> DatasetSimulator:
        return DatasetSimulator(self.design, adjacencies, layout, self.logger)

    def _independence_summaries(self, marginal) -> dict[str, IntervalSummary]:
        summaries: dict[str, IntervalSummary] = {}
        weights = np.ones(marginal.chain.shape[0])
        for k, name in enumerate(marginal.names):
            sample = AdjustedSample(values=marginal.chain[:, k], weights=weights, estimand=name)
            summaries[name] = IntervalSummary.from_sample(sample)
        for name in self.fit_layout.names()[self.fit_layout.marginal_size:]:
            summaries[name] = IntervalSummary.point_mass(0.0)
        for label in self.pair_labels:
            summaries[label] = IntervalSummary.point_mass(0.0)
        return summaries

    def _finish(self, samples: dict[str, AdjustedSample]) -> dict[str, IntervalSummary]:
        return {name: IntervalSummary.from_sample(sample) for name, sample in samples.items()}

    def _chain_samples(self, archives, s_obs, adjusted: bool, seed: int) -> dict[str, AdjustedSample]:
        s = self.settings
        per_chain = []
        for c, archive in enumerate(archives):
            post = archive.post_burnin(s.burnin)
            if not adjusted:
                samples = raw_chain_samples(post, self.estimands)
            elif s.adjustment_mode == "indirect" and self.fit_layout.n_dependence:
                marginal = [e for e in self.estimands if not e.name.startswith(("rho:", "R:"))]
                samples = adjust_chain(post, marginal, s_obs)
                samples.update(adjust_dependence(
                    post, self.fit_adjacencies, s_obs, "indirect", self.fit_layout,
                    self.design.n_margins, self.pairs, self.pair_labels,
                ))
            else:
                samples = adjust_chain(post, self.estimands, s_obs)
            if s.thin_size is not None:
                samples = thin(samples, s.thin_size, np.random.default_rng(derive_seed(seed, c)))
            per_chain.append(samples)
        return combine_chains(per_chain)

    def run_replicate(self, b: int, seed: int) -> tuple[dict[str, dict[str, IntervalSummary]], dict[str, str]]:
        """
        Одна репликация: генерация набора, подгонка всеми методами.

        Returns
        -------
        tuple[dict, dict]
            Интервальные сводки по методам и сообщения об ошибках методов.
        """
        s = self.settings
        rep = derive_seed(seed, b)
        truth_sim = self._simulator(self.truth_layout, self.truth_adjacencies)
        dataset = truth_sim.simulate(self.truth_theta, derive_seed(rep, 0))
        fit_sim = self._simulator(self.fit_layout, self.fit_adjacencies)
        calculator = SummaryCalculator(self.design, self.fit_adjacencies, self.family)
        s_obs = calculator.compute(dataset)

        if self.family is MarginalFamily.POISSON_HURDLE:
            marginal = mle_initialization(self.design, dataset)
        else:
            marginal = run_independence_fit(
                dataset, self.design, np.random.default_rng(derive_seed(rep, 1)),
                iters=s.gibbs_iters, burnin=s.gibbs_burnin, hyper=self.hyper, mh_width=s.mh_width,
                family=self.family,
            )

        results: dict[str, dict[str, IntervalSummary]] = {}
        errors: dict[str, str] = {}
        if any(m.kind == "independence" for m in self.methods):
            if marginal.chain.shape[0] < 2:
                errors["M0"] = "Для Poisson-hurdle цепочка ℳ₀ недоступна"
            else:
                results["M0"] = self._independence_summaries(marginal)

        abc_methods = [m for m in self.methods if m.kind != "independence"]
        if not abc_methods:
            return results, errors
        dependence = init_dependence(
            marginal.theta_tilde, fit_sim, calculator, s_obs.s_D, derive_seed(rep, 2),
            G=s.init_G, keep=s.init_keep,
        )
        init_theta, init_cov = assemble_proposal(marginal, dependence)
        scaling = estimate_scaling(init_theta, fit_sim, calculator, derive_seed(rep, 3), G=s.scaling_G)

        cache: dict[tuple, object] = {}
        for method in abc_methods:
            try:
                if method.kind == "abc-mcmc":
                    key = ("abc-mcmc", method.bandwidth)
                    if key not in cache:
                        cache[key] = ABCMCMCSampler(fit_sim, calculator, self.logger, self.hyper).sample(
                            s_obs, kernel=KernelSpec(method.bandwidth, scaling), init_theta=init_theta,
                            init_cov=init_cov, iters=s.iters, chains=s.chains,
                            seed=derive_seed(rep, 4, int(round(method.bandwidth * 1000))),
                        )
                    samples = self._chain_samples(cache[key], s_obs, method.adjusted, derive_seed(rep, 5))
                elif method.kind == "rejection":
                    key = ("rejection",)
                    if key not in cache:
                        cache[key] = RejectionSampler(fit_sim, calculator, self.logger, self.hyper).sample(
                            s_obs, kernel=KernelSpec(1.0, scaling), G=s.rejection_G,
                            keep=s.rejection_keep, seed=derive_seed(rep, 6),
                        )
                    samples = self._weighted_samples(cache[key], s_obs, method.adjusted)
                else:
                    h = method.bandwidth or s.importance_bandwidth
                    key = ("importance", h)
                    if key not in cache:
                        cache[key] = ImportanceSampler(fit_sim, calculator, self.logger, self.hyper).sample(
                            s_obs, kernel=KernelSpec(h, scaling), init_theta=init_theta, init_cov=init_cov,
                            G=s.importance_G, inflation=s.importance_inflation, seed=derive_seed(rep, 7),
                        )
                    samples = self._weighted_samples(cache[key], s_obs, method.adjusted)
            except CopulaABCError as e:
                errors[method.name] = f"{type(e).__name__}: {e}"
                continue
            results[method.name] = self._finish(samples)
        return results, errors

    def _weighted_samples(self, sample, s_obs, adjusted: bool) -> dict[str, AdjustedSample]:
        if adjusted:
            return adjust_sample(sample, self.estimands, s_obs)
        return raw_weighted_samples(sample, self.estimands)

    def run(self, seed: int, threads: int = 1) -> StudyResult:
        """Запускает B репликаций (параллельно по ``threads``) и сводит метрики."""
        s = self.settings
        method_names = [m.name for m in self.methods]
        self.logger.info(
            f"Имитационное исследование: B={s.B}, методы {method_names}, "
            f"смежности истины {self.truth_layout.adjacency_names}, подгонки {self.fit_layout.adjacency_names}"
        )

        def one(b: int):
            try:
                outcome = self.run_replicate(b, seed)
            except CopulaABCError as e:
                self.logger.warning(f"Репликация {b + 1}: отказ ({type(e).__name__}: {e})")
                return None
            self.logger.info(f"Репликация {b + 1}/{s.B} завершена")
            return outcome

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            outcomes = list(pool.map(one, range(s.B)))

        failures = {name: 0 for name in method_names}
        collected: dict[str, dict[str, list[IntervalSummary]]] = {name: {} for name in method_names}
        for b, outcome in enumerate(outcomes):
            if outcome is None:
                for name in method_names:
                    failures[name] += 1
                continue
            results, errors = outcome
            for name, message in errors.items():
                failures[name] += 1
                self.logger.warning(f"Репликация {b + 1}, метод {name}: {message}")
            for name, summaries in results.items():
                for estimand, summary in summaries.items():
                    collected[name].setdefault(estimand, []).append(summary)

        rows, ecr_rows = [], []
        for method in method_names:
            for estimand, truth in self.truth_values.items():
                summaries = collected[method].get(estimand, [])
                if len(summaries) < 2:
                    continue
                estimates = np.array([x.mean for x in summaries])
                coverage = coverage_from_intervals(summaries, truth)
                rows.append({
                    "parameter": estimand,
                    "group": self.groups[estimand],
                    "method": method,
                    "truth": truth,
                    "bias": float(np.mean(estimates - truth)),
                    "rmse": float(np.sqrt(np.mean((estimates - truth) ** 2))),
                    "oecs": coverage.oecs,
                    "width80": coverage.width80,
                    "replicates": len(summaries),
                })
                ecr_rows.extend(
                    {"parameter": estimand, "method": method, "zeta": float(z), "ecr": float(e)}
                    for z, e in zip(ZETA_GRID, coverage.ecr)
                )
        if not rows:
            raise CopulaABCError("Ни одна репликация не дала результатов")
        table = MetricTable(pd.DataFrame(rows, columns=list(MetricTable.COLUMNS)))
        rankings = rank_groupings(table, np.random.default_rng(derive_seed(seed, 10**6)), self.ranking)
        for name, count in failures.items():
            if count:
                self.logger.warning(f"Метод {name}: исключено репликаций {count}")
        return StudyResult(
            metrics=table,
            ecr=pd.DataFrame(ecr_rows, columns=["parameter", "method", "zeta", "ecr"]),
            rankings=rankings,
            failures=failures,
            manifest={
                "seed": seed,
                "B": s.B,
                "methods": method_names,
                "truth": self.truth_values,
                "truth_preset": self.truth.preset,
                "fit_adjacencies": list(self.fit_layout.adjacency_names),
                "settings": asdict(s),
                "replicate_seeds": [derive_seed(seed, b) for b in range(s.B)],
            },
        )


def run_simulation_study(
    truth: StudyTruth,
    design: StudyDesign,
    truth_adjacencies: Sequence[AdjacencySpec],
    methods: Sequence[StudyMethod | str],
    settings: StudySettings,
    seed: int,
    logger: LoggerProtocol,
    fit_adjacencies: Sequence[AdjacencySpec] | None = None,
    pairs: Sequence[tuple[int, int]] = (),
    threads: int = 1,
    hyper: HyperParams | None = None,
    family: MarginalFamily = MarginalFamily.NB_HURDLE,
    ranking: CrossEntropyConfig | None = None,
) -> StudyResult:
    """Функциональная обёртка над ``SimulationStudy``."""
    parsed = [m if isinstance(m, StudyMethod) else parse_method(m) for m in methods]
    study = SimulationStudy(
        design=design,
        truth=truth,
        truth_adjacencies=truth_adjacencies,
        fit_adjacencies=truth_adjacencies if fit_adjacencies is None else fit_adjacencies,
        methods=parsed,
        settings=settings,
        logger=logger,
        pairs=pairs,
        hyper=hyper,
        family=family,
        ranking=ranking,
    )
    return study.run(seed, threads)
