"""SAR-параметризация корреляционной матрицы R(θ_D) = (I − B)⁻¹ Γ (I − B)⁻¹."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from copula_abc.core.adjacency import AdjacencySpec
from copula_abc.errors import ConfigError, DomainError, OutsideSupportError

RCOND_THRESHOLD = 1e-12
DIAGONAL_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class CorrelationModel:
    """
    Проверенная корреляционная модель.

    ``cholesky`` — нижний множитель R; построение уже выполнило факторизацию,
    поэтому генератор данных может использовать его повторно.
    """

    R: np.ndarray
    gamma2: np.ndarray
    B: np.ndarray
    cholesky: np.ndarray

    @property
    def n_margins(self) -> int:
        return self.R.shape[0]

    def submatrix(self, observed_margins: Sequence[int] | np.ndarray) -> np.ndarray:
        return submatrix(self, observed_margins)


@dataclass(frozen=True, eq=False)
class DependenceParams:
    """θ_D: коэффициенты ρ, выровненные по упорядоченному списку смежностей."""

    adjacencies: tuple[AdjacencySpec, ...]
    rho: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "adjacencies", tuple(self.adjacencies))
        rho = np.asarray(self.rho, dtype=float).ravel()
        if rho.shape[0] != len(self.adjacencies):
            raise ConfigError(
                f"Число коэффициентов ρ ({rho.shape[0]}) не равно числу смежностей ({len(self.adjacencies)})"
            )
        object.__setattr__(self, "rho", rho)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(spec.name for spec in self.adjacencies)

    def correlation(self, n_margins: int) -> CorrelationModel:
        return build_correlation(self.adjacencies, self.rho, n_margins)


def _resolve_size(adjacencies: Sequence[AdjacencySpec], n_margins: int | None) -> int:
    if n_margins is not None:
        return int(n_margins)
    return max((spec.max_index for spec in adjacencies), default=-1) + 1


def build_composite(
    adjacencies: Sequence[AdjacencySpec],
    rho: Sequence[float] | np.ndarray,
    n_margins: int | None = None,
) -> np.ndarray:
    """
    B = Σ_k ρ_k W^(k).

    Parameters
    ----------
    adjacencies : Sequence[AdjacencySpec]
        Упорядоченный список смежностей.
    rho : array_like
        Коэффициенты той же длины.
    n_margins : int, optional
        J; по умолчанию — наибольший индекс в парах + 1.

    Returns
    -------
    np.ndarray
        Симметричная матрица (J, J) с нулевой диагональю.

    Raises
    ------
    ConfigError
        При несовпадении длин.
    """
    rho = np.asarray(rho, dtype=float).ravel()
    if rho.shape[0] != len(adjacencies):
        raise ConfigError(
            f"Число коэффициентов ρ ({rho.shape[0]}) не равно числу смежностей ({len(adjacencies)})"
        )
    size = _resolve_size(adjacencies, n_margins)
    composite = np.zeros((size, size))
    for spec, weight in zip(adjacencies, rho):
        if weight == 0.0 or not spec.pairs:
            continue
        idx = spec.index_array
        if spec.max_index >= size:
            raise ConfigError(f"Смежность '{spec.name}' ссылается на маргиналь вне J={size}")
        composite[idx[:, 0], idx[:, 1]] += weight
        composite[idx[:, 1], idx[:, 0]] += weight
    return composite


def _lu_with_rcond(matrix: np.ndarray, what: str):
    """LU с частичным выбором; вырожденность по оценке обратного числа обусловленности."""
    if not np.all(np.isfinite(matrix)):
        raise OutsideSupportError(f"{what}: нечисловые элементы")
    lu, piv, info = lapack.dgetrf(matrix)
    if info != 0:
        raise OutsideSupportError(f"{what}: матрица вырождена (info={info})")
    anorm = np.linalg.norm(matrix, 1)
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or not rcond >= RCOND_THRESHOLD:
        raise OutsideSupportError(f"{what}: rcond={rcond:.3g} < {RCOND_THRESHOLD}")
    return lu, piv


def build_correlation(
    adjacencies: Sequence[AdjacencySpec],
    rho: Sequence[float] | np.ndarray,
    n_margins: int | None = None,
) -> CorrelationModel:
    """
    Строит R(θ_D) и проверяет принадлежность θ_D к Θ_D.

    M = (I − B)⁻¹, γ² = [M ∘ M]⁻¹ 1 (суммы строк обратной матрицы), Γ = diag(γ²),
    R = M Γ M.

    Raises
    ------
    OutsideSupportError
        Если (I − B) или (M ∘ M) вырождены, какое-либо γ_j² ≤ 0, диагональ R
        отличается от 1 или разложение Холецкого не проходит.
    """
    composite = build_composite(adjacencies, rho, n_margins)
    size = composite.shape[0]
    identity = np.eye(size)

    if not np.any(composite):
        return CorrelationModel(R=identity, gamma2=np.ones(size), B=composite, cholesky=identity.copy())

    lu, piv = _lu_with_rcond(identity - composite, "I − B")
    inverse = linalg.lu_solve((lu, piv), identity)
    inverse = 0.5 * (inverse + inverse.T)

    hadamard = inverse * inverse
    lu_h, piv_h = _lu_with_rcond(hadamard, "M ∘ M")
    gamma2 = linalg.lu_solve((lu_h, piv_h), np.ones(size))
    if not np.all(np.isfinite(gamma2)) or np.any(gamma2 <= 0.0):
        raise OutsideSupportError(f"γ² не положительны: min={np.min(gamma2):.3g}")

    correlation = (inverse * gamma2) @ inverse
    correlation = 0.5 * (correlation + correlation.T)
    if np.max(np.abs(np.diag(correlation) - 1.0)) > DIAGONAL_TOLERANCE:
        raise OutsideSupportError("Диагональ R отличается от 1")

    try:
        factor = linalg.cholesky(correlation, lower=True)
    except linalg.LinAlgError as e:
        raise OutsideSupportError("R не положительно определена") from e

    return CorrelationModel(R=correlation, gamma2=gamma2, B=composite, cholesky=factor)


def check_support(
    adjacencies: Sequence[AdjacencySpec],
    rho: Sequence[float] | np.ndarray,
    n_margins: int | None = None,
) -> bool:
    """True тогда и только тогда, когда ``build_correlation`` успешен."""
    try:
        build_correlation(adjacencies, rho, n_margins)
    except (OutsideSupportError, ConfigError, ValueError, linalg.LinAlgError):
        return False
    return True


def submatrix(model: CorrelationModel, observed_margins: Sequence[int] | np.ndarray) -> np.ndarray:
    """R_i: строки и столбцы R по индексам 𝒥_i."""
    index = np.asarray(observed_margins, dtype=np.int64).ravel()
    if index.size == 0:
        raise DomainError("Множество наблюдаемых маргиналей пусто")
    if index.min() < 0 or index.max() >= model.n_margins:
        raise DomainError(f"Индексы маргиналей вне [0, {model.n_margins})")
    return model.R[np.ix_(index, index)]
