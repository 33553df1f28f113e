"""Фабрика для создания компонентов из конфигурации."""
from logging import Logger
from pathlib import Path

import numpy as np

from copula_abc.config.models import AppConfig
from copula_abc.core.adjacency import (
    AGES,
    AdjacencySpec,
    flagship_catalog,
    load_flagship_catalog,
    preset_names,
    read_edge_list,
    select_adjacencies,
)
from copula_abc.core.copula import DatasetSimulator
from copula_abc.core.design import (
    DEFAULT_TRUTH,
    StudyTruth,
    build_flagship_design,
    flagship_margins,
    representative_pairs,
)
from copula_abc.core.engine import InferenceEngine, InitSettings
from copula_abc.core.model import HyperParams, MarginalFamily, MarginalParams, ParameterLayout, StudyDesign
from copula_abc.core.ranking import CrossEntropyConfig
from copula_abc.core.samplers import ABCMCMCSampler, ImportanceSampler, RejectionSampler
from copula_abc.core.sar import build_correlation
from copula_abc.core.simstudy import SimulationStudy, StudySettings, parse_method
from copula_abc.core.summaries import SummaryCalculator
from copula_abc.errors import ConfigError
from copula_abc.protocols import PosteriorSamplerProtocol
from copula_abc.storage import read_design
from copula_abc.utils import get_logger

SAMPLERS = ("abc-mcmc", "rejection", "importance")


class ComponentFactory:
    """
    Фабрика компонентов — создаёт все части системы из конфигурации.

    Дизайн, каталог смежностей и логгер строятся один раз и кэшируются;
    остальные компоненты создаются заново при каждом вызове.
    """

    def __init__(self, config: AppConfig, process_name: str = "copula_abc") -> None:
        self.config = config
        self.process_name = process_name
        self._logger = None
        self._design: StudyDesign | None = None
        self._catalog: dict[str, AdjacencySpec] | None = None

    def get_logger(self) -> Logger:
        """Создаёт или возвращает кэшированный логгер."""
        if self._logger is None:
            logger_config = {
                "log_dir": self.config.logging.log_dir,
                "level": self.config.logging.level,
                "max_log_days": self.config.logging.max_log_days,
                "console": self.config.logging.console,
            }
            self._logger = get_logger(logger_config, self.process_name)
        return self._logger

    @property
    def family(self) -> MarginalFamily:
        return MarginalFamily(self.config.model.family)

    def get_hyper(self) -> HyperParams:
        prior = self.config.prior
        return HyperParams(
            tau2_alpha=prior.tau2_alpha,
            tau2_beta=prior.tau2_beta,
            lambda_alpha=prior.lambda_alpha,
            lambda_beta=prior.lambda_beta,
            c_alpha=prior.c_alpha,
            c_beta=prior.c_beta,
            c_phi=prior.c_phi,
        )

    def get_design(self) -> StudyDesign:
        """Дизайн из таблицы предикторов или сгенерированный дизайн «зуб × возраст»."""
        if self._design is None:
            model = self.config.model
            if model.predictors_file:
                self._design = read_design(model.predictors_file)
            else:
                self._design = build_flagship_design(
                    n_individuals=model.n_individuals,
                    seed=model.design_seed,
                    ages=model.ages,
                )
            self.get_logger().info(
                f"Дизайн: n={self._design.n_individuals}, J={self._design.n_margins}, "
                f"наблюдений {self._design.n_cells}, предикторов {self._design.n_covariates}"
            )
        return self._design

    def get_catalog(self) -> dict[str, AdjacencySpec]:
        """
        Каталог смежностей, дополненный парами из конфига.

        Источник: файл рёбер из конфига; для полной сетки 52 × 5 — файл рёбер
        пакета; для подсеток возрастов каталог строится по маргиналям дизайна.
        """
        if self._catalog is None:
            section = self.config.adjacency
            if section.edge_list:
                catalog = {spec.name: spec for spec in read_edge_list(section.edge_list)}
            elif self.get_design().margins == flagship_margins(AGES):
                catalog = load_flagship_catalog()
            else:
                catalog = flagship_catalog(self.get_design().margins)
            for entry in section.inline:
                catalog[entry.name] = AdjacencySpec.from_pairs(entry.name, entry.pairs)
            self._catalog = catalog
        return self._catalog

    def adjacency_names(self) -> tuple[str, ...]:
        section = self.config.adjacency
        if section.names is not None:
            return tuple(section.names)
        if section.preset is not None:
            return preset_names(section.preset)
        return tuple(entry.name for entry in section.inline)

    def get_adjacencies(self, names: tuple[str, ...] | None = None) -> list[AdjacencySpec]:
        """Упорядоченный набор смежностей; порядок задаёт выравнивание вектора ρ."""
        names = self.adjacency_names() if names is None else names
        adjacencies = select_adjacencies(self.get_catalog(), names)
        n_margins = self.get_design().n_margins
        for spec in adjacencies:
            if spec.max_index >= n_margins:
                raise ConfigError(
                    f"Смежность '{spec.name}' ссылается на маргиналь {spec.max_index} при J={n_margins}"
                )
        return adjacencies

    def get_layout(self, adjacencies: list[AdjacencySpec] | None = None) -> ParameterLayout:
        adjacencies = self.get_adjacencies() if adjacencies is None else adjacencies
        return ParameterLayout(
            family=self.family,
            predictor_names=self.get_design().predictor_names,
            adjacency_names=tuple(spec.name for spec in adjacencies),
        )

    def get_truth(self) -> StudyTruth:
        """
        Истинные параметры генерации: значения по умолчанию (DEFAULT_TRUTH), переопределённые конфигом.

        Raises
        ------
        ConfigError
            Если длины векторов не совпадают с числом предикторов или семейство
            требует отсутствующих параметров.
        OutsideSupportError
            Если ρ истины не принадлежит Θ_D.
        """
        truth = self.config.model.truth
        family = self.family
        base = DEFAULT_TRUTH.marginal
        alpha = np.asarray(truth.alpha if truth.alpha is not None else base.alpha, dtype=float)
        beta = np.asarray(truth.beta if truth.beta is not None else base.beta, dtype=float)
        phi = truth.phi if truth.phi is not None else base.phi
        marginal = MarginalParams(
            family=family,
            alpha=alpha if family.has_presence else None,
            beta=beta,
            phi=phi if family.has_dispersion else None,
        )
        marginal.check_dimension(self.get_design())

        preset = (truth.preset or DEFAULT_TRUTH.preset).upper()
        rho = dict(truth.rho) if truth.rho is not None else dict(DEFAULT_TRUTH.rho)
        names = preset_names(preset)
        unknown = sorted(set(rho) - set(names))
        if unknown:
            raise ConfigError(f"ρ истины для {unknown} не входят в модель {preset} {names}")
        result = StudyTruth(marginal=marginal, preset=preset, rho=rho)
        build_correlation(self.get_adjacencies(names), result.rho_vector(names), self.get_design().n_margins)
        return result

    def get_truth_theta(self) -> tuple[np.ndarray, list[AdjacencySpec]]:
        """Плоский θ истины и смежности модели истины."""
        truth = self.get_truth()
        adjacencies = self.get_adjacencies(preset_names(truth.preset))
        layout = self.get_layout(adjacencies)
        return layout.pack(truth.marginal, truth.rho_vector(layout.adjacency_names)), adjacencies

    def get_simulator(self, adjacencies: list[AdjacencySpec] | None = None) -> DatasetSimulator:
        adjacencies = self.get_adjacencies() if adjacencies is None else adjacencies
        return DatasetSimulator(
            design=self.get_design(),
            adjacencies=adjacencies,
            layout=self.get_layout(adjacencies),
            logger=self.get_logger(),
            quantile_cap=self.config.abc.quantile_cap,
        )

    def get_calculator(self, adjacencies: list[AdjacencySpec] | None = None) -> SummaryCalculator:
        adjacencies = self.get_adjacencies() if adjacencies is None else adjacencies
        return SummaryCalculator(self.get_design(), adjacencies, self.family)

    def get_pairs(self) -> list[tuple[int, int]]:
        """Пары маргиналей для оценок R: из конфига или представительные пары θ_R."""
        if self.config.abc.r_pairs is not None:
            pairs = [tuple(int(v) for v in pair) for pair in self.config.abc.r_pairs]
            n_margins = self.get_design().n_margins
            for a, b in pairs:
                if not (0 <= a < n_margins and 0 <= b < n_margins) or a == b:
                    raise ConfigError(f"Пара ({a}, {b}) вне диапазона маргиналей J={n_margins}")
            return pairs
        return representative_pairs(self.get_design())

    def get_sampler(self, name: str = "abc-mcmc") -> PosteriorSamplerProtocol:
        """Создаёт сэмплер по имени."""
        logger = self.get_logger()
        simulator = self.get_simulator()
        calculator = self.get_calculator(list(simulator.adjacencies))
        hyper = self.get_hyper()
        if name == "abc-mcmc":
            abc = self.config.abc
            return ABCMCMCSampler(
                simulator=simulator,
                calculator=calculator,
                logger=logger,
                hyper=hyper,
                target=abc.target_acceptance,
                switch=abc.adaptation_switch,
                tau2_sd=self.config.prior.tau2_proposal_sd,
                log_every=abc.log_every,
            )
        elif name == "rejection":
            return RejectionSampler(simulator, calculator, logger, hyper)
        elif name == "importance":
            return ImportanceSampler(simulator, calculator, logger, hyper)
        else:
            raise ConfigError(f"Неизвестный сэмплер: {name}, ожидался один из {SAMPLERS}")

    def get_engine(self, sampler: str = "abc-mcmc") -> InferenceEngine:
        """Создаёт движок вывода с выбранным сэмплером."""
        abc = self.config.abc
        settings = InitSettings(
            gibbs_iters=abc.gibbs_iters,
            gibbs_burnin=abc.gibbs_burnin,
            mh_width=abc.mh_width,
            init_G=abc.init_G,
            init_keep=abc.init_keep,
            scaling_G=abc.scaling_G,
            log_every=abc.log_every,
        )
        return InferenceEngine(sampler=self.get_sampler(sampler), settings=settings, hyper=self.get_hyper())

    def get_study_settings(self) -> StudySettings:
        study = self.config.study
        abc = self.config.abc
        common = dict(
            thin_size=abc.thin_size,
            gibbs_iters=abc.gibbs_iters,
            gibbs_burnin=abc.gibbs_burnin,
            mh_width=abc.mh_width,
            scaling_G=abc.scaling_G,
            init_G=abc.init_G,
            init_keep=abc.init_keep,
            rejection_keep=abc.rejection_keep,
            importance_bandwidth=abc.h,
            importance_inflation=abc.importance_inflation,
            adjustment_mode=abc.adjustment_mode,
        )
        if study.full_scale:
            return StudySettings.full_scale(**common)
        return StudySettings(
            B=study.B,
            chains=study.chains,
            iters=study.iters,
            burnin=study.burnin,
            rejection_G=study.rejection_G,
            importance_G=study.importance_G,
            **common,
        )

    def get_ranking_config(self) -> CrossEntropyConfig:
        ranking = self.config.study.ranking
        return CrossEntropyConfig(
            sample_factor=ranking.sample_factor,
            elite_fraction=ranking.elite_fraction,
            smoothing=ranking.smoothing,
            patience=ranking.patience,
        )

    def get_study(self) -> SimulationStudy:
        """Имитационное исследование: истина из конфига, подгонка моделью fit_preset."""
        truth = self.get_truth()
        truth_adjacencies = self.get_adjacencies(preset_names(truth.preset))
        fit_preset = self.config.study.fit_preset
        fit_adjacencies = self.get_adjacencies(preset_names(fit_preset)) if fit_preset else truth_adjacencies
        return SimulationStudy(
            design=self.get_design(),
            truth=truth,
            truth_adjacencies=truth_adjacencies,
            fit_adjacencies=fit_adjacencies,
            methods=[parse_method(label) for label in self.config.study.methods],
            settings=self.get_study_settings(),
            logger=self.get_logger(),
            pairs=self.get_pairs(),
            hyper=self.get_hyper(),
            family=self.family,
            ranking=self.get_ranking_config(),
        )

    def get_output_dir(self) -> Path:
        """Возвращает директорию для сохранения результатов."""
        return Path(self.config.output_dir).resolve()
