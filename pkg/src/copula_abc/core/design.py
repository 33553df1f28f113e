"""
Дизайн «зуб × возраст»: маргинали, предикторы, структурные пропуски и истинные параметры
для имитационного исследования.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from copula_abc.core.adjacency import (
    AGES,
    LOCATIONS,
    PERMANENT_TEETH,
    PRIMARY_SUCCESSOR,
    PRIMARY_TEETH,
)
from copula_abc.core.model import Margin, MarginalFamily, MarginalParams, StudyDesign
from copula_abc.errors import ConfigError

PREDICTOR_NAMES = (
    "intercept",
    "visits",
    "fluoride",
    "brushing",
    "sugar",
    "premolar",
    "incisor",
    "canine",
    "primary",
    "age5",
    "age13",
    "age17",
    "age23",
)
CONTINUOUS_PREDICTORS = ("visits", "fluoride", "brushing", "sugar")

# Посещаемость по возрастам: 696, 629, 549, 463, 342 из 728
RETENTION = (696 / 728, 629 / 728, 549 / 728, 463 / 728, 342 / 728)
# Доля прорезавшихся постоянных преемников к 9 и к 13 годам
ERUPTION = (0.35, 0.85)

_MOLARS = {"1", "2", "3", "14", "15", "16", "17", "18", "19", "30", "31", "32",
           "A", "B", "I", "J", "K", "L", "S", "T"}
_PREMOLARS = {"4", "5", "12", "13", "20", "21", "28", "29"}
_CANINES = {"6", "11", "22", "27", "C", "H", "M", "R"}
_THIRD_MOLARS = {"1", "16", "17", "32"}
_SUCCESSOR_OF = {permanent: primary for primary, permanent in PRIMARY_SUCCESSOR.items()}

REPRESENTATIVE_PAIRS: tuple[tuple[tuple[str, int], tuple[str, int]], ...] = (
    (("7", 13), ("8", 13)),
    (("7", 13), ("9", 13)),
    (("7", 13), ("14", 13)),
    (("7", 13), ("7", 17)),
    (("7", 13), ("7", 23)),
    (("7", 13), ("8", 17)),
    (("7", 13), ("26", 13)),
    (("14", 13), ("19", 13)),
    (("2", 13), ("31", 13)),
    (("2", 13), ("31", 17)),
    (("2", 13), ("31", 23)),
    (("3", 13), ("30", 13)),
    (("3", 13), ("30", 17)),
    (("3", 13), ("30", 23)),
    (("J", 5), ("I", 5)),
    (("J", 5), ("H", 5)),
    (("J", 5), ("J", 9)),
    (("J", 5), ("I", 9)),
    (("J", 5), ("K", 5)),
    (("J", 5), ("K", 9)),
    (("I", 5), ("14", 9)),
    (("B", 9), ("3", 9)),
    (("B", 5), ("3", 9)),
    (("D", 5), ("8", 9)),
)


@dataclass(frozen=True, eq=False)
class StudyTruth:
    """Истинные θ_M и θ_D, по которым генерируются данные исследования."""

    marginal: MarginalParams
    preset: str
    rho: dict[str, float] = field(default_factory=dict)

    def rho_vector(self, names: Sequence[str]) -> np.ndarray:
        return np.array([self.rho.get(name, 0.0) for name in names], dtype=float)


DEFAULT_TRUTH = StudyTruth(
    marginal=MarginalParams(
        family=MarginalFamily.NB_HURDLE,
        alpha=np.array([
            -3.059, -0.241, -0.003, -0.145, 0.232, -0.905, -0.509,
            -0.502, -0.070, -0.119, -0.035, 0.403, 0.150,
        ]),
        beta=np.array([
            -0.831, -0.196, -0.084, -0.040, 0.200, 0.134, -0.150,
            -0.245, 0.273, -0.114, -0.206, -0.001, 0.073,
        ]),
        phi=0.865,
    ),
    preset="M4",
    rho={"ct": 0.012, "t": 0.12},
)


def tooth_type(location: str) -> str:
    if location in _MOLARS:
        return "molar"
    if location in _PREMOLARS:
        return "premolar"
    if location in _CANINES:
        return "canine"
    return "incisor"


def flagship_margins(ages: Sequence[int] = AGES) -> tuple[Margin, ...]:
    """52 места × возраст, порядок: сначала возраст, затем место."""
    return tuple(Margin(location, int(age)) for age in ages for location in LOCATIONS)


def _tooth_predictors(location: str, age: int) -> list[float]:
    kind = tooth_type(location)
    return [
        float(kind == "premolar"),
        float(kind == "incisor"),
        float(kind == "canine"),
        float(location in PRIMARY_TEETH),
        float(age == 5),
        float(age == 13),
        float(age == 17),
        float(age == 23),
    ]


def _present_teeth(age: int, erupted_by: dict[str, int]) -> list[str]:
    """Зубы, записываемые у индивида в данном возрасте."""
    teeth: list[str] = []
    if age <= 5:
        return list(PRIMARY_TEETH)
    if age <= 13:
        for primary, successor in PRIMARY_SUCCESSOR.items():
            teeth.append(successor if erupted_by[successor] <= age else primary)
        if age >= 13:
            teeth += sorted(_PREMOLARS, key=LOCATIONS.index)
        return teeth
    return [tooth for tooth in PERMANENT_TEETH if tooth not in _THIRD_MOLARS]


def build_flagship_design(
    n_individuals: int = 728,
    seed: int = 2024,
    ages: Sequence[int] = AGES,
    retention: Sequence[float] = RETENTION,
    eruption: Sequence[float] = ERUPTION,
) -> StudyDesign:
    """
    Генерирует дизайн «52 места × 5 возрастов» со структурными пропусками и выбыванием.

    Parameters
    ----------
    n_individuals : int, optional
        Число индивидов (по умолчанию 728).
    seed : int, optional
        Seed генератора дизайна (предикторы, прорезывание, посещаемость).
    ages : Sequence[int], optional
        Возрасты обследований; должны быть подмножеством (5, 9, 13, 17, 23).
    retention : Sequence[float], optional
        Вероятность явки на каждом возрасте.
    eruption : Sequence[float], optional
        Накопленная доля прорезавшихся преемников к 9 и к 13 годам.

    Returns
    -------
    StudyDesign
        Дизайн с d = 12 предикторами в порядке ``PREDICTOR_NAMES``.

    Raises
    ------
    ConfigError
        Если возрасты или вероятности заданы некорректно.
    """
    ages = tuple(int(a) for a in ages)
    if not set(ages) <= set(AGES):
        raise ConfigError(f"Возрасты {ages} вне сетки {AGES}")
    if len(retention) != len(AGES) or not all(0.0 < p <= 1.0 for p in retention):
        raise ConfigError("retention должен содержать 5 вероятностей из (0, 1]")
    if len(eruption) != 2 or not 0.0 <= eruption[0] <= eruption[1] <= 1.0:
        raise ConfigError("eruption должен быть парой неубывающих вероятностей")

    rng = np.random.default_rng(seed)
    margins = flagship_margins(ages)
    index = {margin: j for j, margin in enumerate(margins)}
    attendance_prob = np.array([retention[AGES.index(age)] for age in ages])

    cells: list[tuple[int, int]] = []
    rows: list[list[float]] = []
    for i in range(n_individuals):
        attends = rng.random(len(ages)) < attendance_prob
        if not attends.any():
            attends[int(np.argmax(attendance_prob))] = True
        draws = rng.random(len(PRIMARY_SUCCESSOR))
        erupted_by = {
            successor: 9 if u < eruption[0] else (13 if u < eruption[1] else 17)
            for successor, u in zip(PRIMARY_SUCCESSOR.values(), draws)
        }
        behaviour = rng.standard_normal((len(ages), len(CONTINUOUS_PREDICTORS)))
        for a, age in enumerate(ages):
            if not attends[a]:
                continue
            for location in _present_teeth(age, erupted_by):
                cells.append((i, index[Margin(location, age)]))
                rows.append([1.0, *behaviour[a], *_tooth_predictors(location, age)])

    return StudyDesign(
        margins=margins,
        n_individuals=n_individuals,
        cells=np.array(cells, dtype=np.int64),
        predictors=np.array(rows, dtype=float),
        predictor_names=PREDICTOR_NAMES,
    )


def build_complete_design(
    n_individuals: int,
    margins: Sequence[Margin] | int,
    covariates: np.ndarray | None = None,
    covariate_names: Sequence[str] | None = None,
) -> StudyDesign:
    """
    Полный дизайн без пропусков: каждый индивид наблюдается во всех маргиналях.

    ``covariates`` — массив формы (n, J, d) или None (только свободный член).
    """
    if isinstance(margins, int):
        margins = tuple(Margin(str(j + 1), 0) for j in range(margins))
    margins = tuple(margins)
    n_margins = len(margins)
    ii, jj = np.meshgrid(np.arange(n_individuals), np.arange(n_margins), indexing="ij")
    cells = np.column_stack([ii.ravel(), jj.ravel()])
    intercept = np.ones((cells.shape[0], 1))
    if covariates is None:
        predictors = intercept
        names: tuple[str, ...] = ("intercept",)
    else:
        covariates = np.asarray(covariates, dtype=float)
        if covariates.shape[:2] != (n_individuals, n_margins):
            raise ConfigError(
                f"Ковариаты формы {covariates.shape} не согласованы с ({n_individuals}, {n_margins}, d)"
            )
        predictors = np.hstack([intercept, covariates.reshape(cells.shape[0], -1)])
        names = ("intercept", *(covariate_names or [f"x{k}" for k in range(1, predictors.shape[1])]))
    return StudyDesign(
        margins=margins,
        n_individuals=n_individuals,
        cells=cells,
        predictors=predictors,
        predictor_names=names,
    )


def representative_pairs(design: StudyDesign) -> list[tuple[int, int]]:
    """Индексы маргиналей θ_R, присутствующих в дизайне."""
    pairs = []
    for (loc_a, t_a), (loc_b, t_b) in REPRESENTATIVE_PAIRS:
        a = design.margin_index.get(Margin(loc_a, t_a))
        b = design.margin_index.get(Margin(loc_b, t_b))
        if a is not None and b is not None:
            pairs.append((a, b))
    return pairs
