"""Доменные типы: дизайн исследования, маргинальные параметры, данные, гиперпараметры."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from copula_abc.errors import ConfigError, DomainError, NumericOverflowError


class MarginalFamily(str, Enum):
    """Семейство маргинальных распределений счётчика."""

    NB_HURDLE = "nb-hurdle"
    POISSON_HURDLE = "poisson-hurdle"
    PLAIN_NB = "plain-nb"

    @property
    def has_presence(self) -> bool:
        """Есть ли логистическая часть (α)."""
        return self is not MarginalFamily.PLAIN_NB

    @property
    def has_dispersion(self) -> bool:
        """Есть ли параметр размера φ."""
        return self is not MarginalFamily.POISSON_HURDLE


@dataclass(frozen=True, order=True)
class Margin:
    """Маргиналь j: место (зуб) l_j и момент времени t_j."""

    location: str
    time: int

    @property
    def label(self) -> str:
        return f"({self.location},{self.time})"


@dataclass(frozen=True, eq=False)
class StudyDesign:
    """
    Дизайн исследования: маргинали 𝒥, индивиды, предикторы и множество наблюдений 𝒟.

    Наблюдения хранятся плоско: ``cells[r] = (i, j)`` в лексикографическом порядке,
    ``predictors[r]`` — вектор x_ij длины d+1 с единицей в нулевой позиции.
    Предикторы для ненаблюдаемых пар не хранятся: ни одна операция их не использует.

    Parameters
    ----------
    margins : tuple[Margin, ...]
        Уникальные дескрипторы маргиналей, индекс в кортеже — номер j.
    n_individuals : int
        Число индивидов n.
    cells : np.ndarray
        Массив формы (N, 2) пар (i, j).
    predictors : np.ndarray
        Массив формы (N, d+1).
    predictor_names : tuple[str, ...]
        Имена столбцов предикторов, первый — 'intercept'.
    """

    margins: tuple[Margin, ...]
    n_individuals: int
    cells: np.ndarray
    predictors: np.ndarray
    predictor_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        margins = tuple(self.margins)
        object.__setattr__(self, "margins", margins)
        if len(set(margins)) != len(margins):
            raise ConfigError("Дескрипторы маргиналей должны быть уникальны")

        cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)
        predictors = np.asarray(self.predictors, dtype=float)
        if predictors.ndim != 2 or predictors.shape[0] != cells.shape[0]:
            raise ConfigError(
                f"Матрица предикторов {predictors.shape} не согласована с {cells.shape[0]} наблюдениями"
            )
        if cells.size and (
            cells[:, 0].min() < 0
            or cells[:, 0].max() >= self.n_individuals
            or cells[:, 1].min() < 0
            or cells[:, 1].max() >= len(margins)
        ):
            raise ConfigError("Наблюдение ссылается на несуществующего индивида или маргиналь")

        order = np.lexsort((cells[:, 1], cells[:, 0]))
        cells = cells[order]
        predictors = predictors[order]
        if cells.shape[0] > 1 and np.any(np.all(np.diff(cells, axis=0) == 0, axis=1)):
            raise ConfigError("Пара (i, j) встречается в 𝒟 более одного раза")
        if predictors.size and not np.all(predictors[:, 0] == 1.0):
            raise ConfigError("Первый столбец предикторов должен быть равен 1")

        names = tuple(self.predictor_names) or (
            "intercept",
            *(f"x{k}" for k in range(1, predictors.shape[1])),
        )
        if len(names) != predictors.shape[1]:
            raise ConfigError("Число имён предикторов не совпадает с числом столбцов")

        cells.setflags(write=False)
        predictors.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "predictors", predictors)
        object.__setattr__(self, "predictor_names", names)

    @property
    def n_margins(self) -> int:
        """J."""
        return len(self.margins)

    @property
    def n_covariates(self) -> int:
        """d (без свободного члена)."""
        return self.predictors.shape[1] - 1

    @property
    def n_cells(self) -> int:
        """|𝒟|."""
        return self.cells.shape[0]

    @cached_property
    def margin_index(self) -> dict[Margin, int]:
        return {margin: j for j, margin in enumerate(self.margins)}

    @cached_property
    def _individual_bounds(self) -> np.ndarray:
        starts = np.searchsorted(self.cells[:, 0], np.arange(self.n_individuals + 1))
        return starts

    def individual_rows(self, i: int) -> slice:
        """Строки ``cells`` индивида i (непрерывный блок)."""
        bounds = self._individual_bounds
        return slice(int(bounds[i]), int(bounds[i + 1]))

    def observed_margins(self, i: int) -> np.ndarray:
        """𝒥_i — наблюдаемые маргинали индивида i."""
        return self.cells[self.individual_rows(i), 1]

    @cached_property
    def patterns(self) -> dict[tuple[int, ...], np.ndarray]:
        """Группы индивидов с одинаковым 𝒥_i (пустые паттерны пропускаются)."""
        groups: dict[tuple[int, ...], list[int]] = {}
        for i in range(self.n_individuals):
            pattern = tuple(int(j) for j in self.observed_margins(i))
            if pattern:
                groups.setdefault(pattern, []).append(i)
        return {pattern: np.asarray(members) for pattern, members in groups.items()}

    def observed_mask(self) -> np.ndarray:
        """Булева матрица n × J наблюдаемости."""
        mask = np.zeros((self.n_individuals, self.n_margins), dtype=bool)
        mask[self.cells[:, 0], self.cells[:, 1]] = True
        return mask

    def margin_rows(self, j: int) -> np.ndarray:
        """Строки ``cells`` маргинали j (ℐ_j)."""
        return np.flatnonzero(self.cells[:, 1] == j)

    def find_margin(self, location: str, time: int) -> int:
        try:
            return self.margin_index[Margin(str(location), int(time))]
        except KeyError:
            raise DomainError(f"Маргиналь ({location},{time}) отсутствует в дизайне") from None


@dataclass(frozen=True, eq=False)
class MarginalParams:
    """
    θ_M: коэффициенты присутствия α, тяжести β и размер NB φ.

    Для plain-NB ``alpha`` отсутствует, для Poisson-hurdle отсутствует ``phi``.
    """

    family: MarginalFamily
    beta: np.ndarray
    alpha: np.ndarray | None = None
    phi: float | None = None

    def __post_init__(self) -> None:
        family = MarginalFamily(self.family)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).ravel())

        if family.has_presence:
            if self.alpha is None:
                raise ConfigError(f"Семейство {family.value} требует коэффициенты alpha")
            alpha = np.asarray(self.alpha, dtype=float).ravel()
            if alpha.shape != self.beta.shape:
                raise ConfigError("Длины alpha и beta должны совпадать")
            object.__setattr__(self, "alpha", alpha)
        elif self.alpha is not None:
            raise ConfigError("Семейство plain-nb не имеет коэффициентов alpha")

        if family.has_dispersion:
            if self.phi is None or not np.isfinite(self.phi) or self.phi <= 0:
                raise ConfigError(f"phi должен быть положительным, получено {self.phi}")
            object.__setattr__(self, "phi", float(self.phi))
        elif self.phi is not None:
            raise ConfigError("Семейство poisson-hurdle не имеет параметра phi")

    @property
    def n_coefficients(self) -> int:
        """d + 1."""
        return self.beta.shape[0]

    def check_dimension(self, design: StudyDesign) -> None:
        if self.n_coefficients != design.n_covariates + 1:
            raise ConfigError(
                f"Ожидалось {design.n_covariates + 1} коэффициентов, получено {self.n_coefficients}"
            )


@dataclass(frozen=True, eq=False)
class CountDataset:
    """Наблюдённые счётчики y_ij, выровненные по ``design.cells``."""

    design: StudyDesign
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.shape != (self.design.n_cells,):
            raise DomainError(
                f"Ожидалось {self.design.n_cells} значений, получено {values.shape}"
            )
        if values.size and (np.any(values < 0) or not np.all(np.equal(np.mod(values, 1), 0))):
            raise DomainError("Счётчики должны быть неотрицательными целыми")
        values = values.astype(np.int64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def presence(self) -> np.ndarray:
        """Z_ij = 1(Y_ij > 0)."""
        return (self.values > 0).astype(float)

    def as_dict(self) -> dict[tuple[int, int], int]:
        return {
            (int(i), int(j)): int(y) for (i, j), y in zip(self.design.cells, self.values)
        }

    def to_matrix(self, fill: float = np.nan) -> np.ndarray:
        """Матрица n × J, пропуски заполнены ``fill``."""
        matrix = np.full((self.design.n_individuals, self.design.n_margins), fill, dtype=float)
        matrix[self.design.cells[:, 0], self.design.cells[:, 1]] = self.values
        return matrix


@dataclass(frozen=True)
class HyperParams:
    """Гиперпараметры normal-gamma априорного распределения."""

    tau2_alpha: float = 1.0
    tau2_beta: float = 1.0
    lambda_alpha: float = 1.0
    lambda_beta: float = 1.0
    c_alpha: float = 2.0
    c_beta: float = 2.0
    c_phi: float = 2.0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"Гиперпараметр {name} должен быть > 0, получено {value}")


@dataclass(frozen=True)
class ParameterLayout:
    """
    Раскладка плоского вектора θ = (α, β, log φ, ρ) для семейства и набора смежностей.

    Сэмплеры работают с плоским вектором; ``unpack`` восстанавливает доменные типы.
    """

    family: MarginalFamily
    predictor_names: tuple[str, ...]
    adjacency_names: tuple[str, ...] = ()
    _slices: dict[str, slice] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", MarginalFamily(self.family))
        object.__setattr__(self, "predictor_names", tuple(self.predictor_names))
        object.__setattr__(self, "adjacency_names", tuple(self.adjacency_names))
        p = len(self.predictor_names)
        slices: dict[str, slice] = {}
        offset = 0
        if self.family.has_presence:
            slices["alpha"] = slice(offset, offset + p)
            offset += p
        slices["beta"] = slice(offset, offset + p)
        offset += p
        if self.family.has_dispersion:
            slices["log_phi"] = slice(offset, offset + 1)
            offset += 1
        slices["rho"] = slice(offset, offset + len(self.adjacency_names))
        object.__setattr__(self, "_slices", slices)

    @property
    def size(self) -> int:
        return self._slices["rho"].stop

    @property
    def marginal_size(self) -> int:
        return self._slices["rho"].start

    @property
    def n_dependence(self) -> int:
        return len(self.adjacency_names)

    def slice_of(self, block: str) -> slice:
        """Срез блока 'alpha' | 'beta' | 'log_phi' | 'rho'."""
        try:
            return self._slices[block]
        except KeyError:
            raise DomainError(f"Блок {block} отсутствует для семейства {self.family.value}") from None

    def has_block(self, block: str) -> bool:
        return block in self._slices

    def names(self) -> list[str]:
        labels: list[str] = []
        if self.family.has_presence:
            labels += [f"alpha:{name}" for name in self.predictor_names]
        labels += [f"beta:{name}" for name in self.predictor_names]
        if self.family.has_dispersion:
            labels.append("log_phi")
        labels += [f"rho:{name}" for name in self.adjacency_names]
        return labels

    def pack(self, params: MarginalParams, rho: np.ndarray | None = None) -> np.ndarray:
        if params.family is not self.family:
            raise ConfigError("Семейство параметров не совпадает с раскладкой")
        parts: list[np.ndarray] = []
        if self.family.has_presence:
            parts.append(params.alpha)
        parts.append(params.beta)
        if self.family.has_dispersion:
            parts.append(np.array([np.log(params.phi)]))
        rho_vec = np.zeros(self.n_dependence) if rho is None else np.asarray(rho, dtype=float).ravel()
        if rho_vec.shape[0] != self.n_dependence:
            raise ConfigError(
                f"Ожидалось {self.n_dependence} коэффициентов SAR, получено {rho_vec.shape[0]}"
            )
        parts.append(rho_vec)
        return np.concatenate(parts)

    def unpack(self, theta: np.ndarray) -> tuple[MarginalParams, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise DomainError(f"Вектор θ должен иметь длину {self.size}, получено {theta.shape}")
        alpha = theta[self._slices["alpha"]] if self.family.has_presence else None
        phi = None
        if self.family.has_dispersion:
            with np.errstate(over="ignore", under="ignore"):
                phi = float(np.exp(theta[self._slices["log_phi"]][0]))
            if not np.isfinite(phi) or phi <= 0.0:
                raise NumericOverflowError(f"log φ = {theta[self._slices['log_phi']][0]} вне представимого диапазона")
        params = MarginalParams(
            family=self.family,
            alpha=None if alpha is None else alpha.copy(),
            beta=theta[self._slices["beta"]].copy(),
            phi=phi,
        )
        return params, theta[self._slices["rho"]].copy()
