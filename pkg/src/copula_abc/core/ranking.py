"""Агрегация ранжированных списков методов: футрул Спирмена и поиск Cross-Entropy Monte Carlo."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from copula_abc.errors import DomainError

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 8


@dataclass(frozen=True)
class RankedLists:
    """Списки меток от лучшей к худшей; каждый — перестановка одного набора меток."""

    lists: tuple[tuple[Hashable, ...], ...]

    def __post_init__(self) -> None:
        lists = tuple(tuple(items) for items in self.lists)
        if not lists:
            raise DomainError("Нужен хотя бы один ранжированный список")
        labels = set(lists[0])
        for items in lists:
            if len(set(items)) != len(items) or set(items) != labels:
                raise DomainError("Все списки должны быть перестановками одного набора меток")
        object.__setattr__(self, "lists", lists)

    @property
    def labels(self) -> tuple[Hashable, ...]:
        return tuple(sorted(self.lists[0], key=str))

    def positions(self) -> np.ndarray:
        """Матрица (число списков, t): позиция метки labels[i] в списке j (с 1)."""
        index = {label: i for i, label in enumerate(self.labels)}
        result = np.empty((len(self.lists), len(index)), dtype=np.int64)
        for j, items in enumerate(self.lists):
            for position, label in enumerate(items, start=1):
                result[j, index[label]] = position
        return result


@dataclass(frozen=True)
class CrossEntropyConfig:
    """Настройки поиска: 10·t² кандидатов на итерацию, элита 10%, сглаживание 0.7."""

    sample_factor: int = 10
    elite_fraction: float = 0.1
    smoothing: float = 0.7
    patience: int = 15
    max_iter: int = 1000

    def __post_init__(self) -> None:
        if self.sample_factor < 1 or not 0.0 < self.elite_fraction <= 1.0:
            raise DomainError("sample_factor ≥ 1 и elite_fraction ∈ (0, 1]")
        if not 0.0 < self.smoothing <= 1.0 or self.patience < 1 or self.max_iter < 1:
            raise DomainError("smoothing ∈ (0, 1], patience ≥ 1, max_iter ≥ 1")


def footrule(list_a: Sequence[Hashable], list_b: Sequence[Hashable]) -> int:
    """Σ_t |r_a(t) − r_b(t)|."""
    if len(list_a) != len(list_b) or set(list_a) != set(list_b) or len(set(list_a)) != len(list_a):
        raise DomainError("Списки должны быть перестановками одного набора меток")
    position_b = {label: k for k, label in enumerate(list_b)}
    return int(sum(abs(k - position_b[label]) for k, label in enumerate(list_a)))


def _objective(candidates: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """O для каждой строки ``candidates`` (позиции меток), суммарный футрул по спискам."""
    return np.abs(candidates[:, None, :] - positions[None, :, :]).sum(axis=(1, 2))


def _order_to_positions(orders: np.ndarray) -> np.ndarray:
    positions = np.empty_like(orders)
    rows = np.arange(orders.shape[0])[:, None]
    positions[rows, orders] = np.arange(1, orders.shape[1] + 1)
    return positions


def brute_force_aggregate(lists: RankedLists) -> tuple[tuple[Hashable, ...], int]:
    """Точный минимум перебором всех перестановок (t ≤ 8)."""
    labels = lists.labels
    t = len(labels)
    if t > BRUTE_FORCE_LIMIT:
        raise DomainError(f"Перебор ограничен {BRUTE_FORCE_LIMIT} метками, получено {t}")
    orders = np.array(list(itertools.permutations(range(t))), dtype=np.int64)
    scores = _objective(_order_to_positions(orders), lists.positions())
    best = int(np.argmin(scores))
    return tuple(labels[i] for i in orders[best]), int(scores[best])


def _sample_orders(probabilities: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Последовательно по позициям: метка выбирается среди свободных пропорционально P[:, r]."""
    t = probabilities.shape[0]
    orders = np.empty((size, t), dtype=np.int64)
    available = np.ones((size, t), dtype=bool)
    rows = np.arange(size)
    for position in range(t):
        weights = probabilities[:, position][None, :] * available
        totals = weights.sum(axis=1)
        empty = totals <= 0.0
        if np.any(empty):
            weights[empty] = available[empty]
            totals[empty] = weights[empty].sum(axis=1)
        cumulative = np.cumsum(weights / totals[:, None], axis=1)
        u = rng.random(size)[:, None]
        items = np.minimum((cumulative < u).sum(axis=1), t - 1)
        # Округление cumsum может указать на занятую метку
        taken = ~available[rows, items]
        if np.any(taken):
            for s in np.flatnonzero(taken):
                items[s] = int(np.flatnonzero(available[s])[-1])
        orders[:, position] = items
        available[rows, items] = False
    return orders


def cross_entropy_aggregate(
    lists: RankedLists,
    rng: np.random.Generator,
    config: CrossEntropyConfig | None = None,
) -> tuple[tuple[Hashable, ...], int]:
    """
    Стохастический поиск перестановки, минимизирующей Σ_j d(ℛ, ℛ_j).

    Матрица P[i, r] — вероятность метки i на позиции r; на каждой итерации
    генерируется 10·t² перестановок, P заменяется сглаженными частотами элиты.
    Останов после ``patience`` итераций без улучшения лучшего значения.
    """
    config = config or CrossEntropyConfig()
    labels = lists.labels
    t = len(labels)
    positions = lists.positions()
    if t == 1:
        return labels, 0

    size = config.sample_factor * t * t
    n_elite = max(1, math.ceil(config.elite_fraction * size))
    probabilities = np.full((t, t), 1.0 / t)
    best_order = np.arange(t)
    best_score = int(_objective(_order_to_positions(best_order[None, :]), positions)[0])
    stagnant = 0
    for iteration in range(config.max_iter):
        orders = _sample_orders(probabilities, size, rng)
        scores = _objective(_order_to_positions(orders), positions)
        elite = orders[np.argsort(scores, kind="stable")[:n_elite]]
        frequencies = np.zeros((t, t))
        for position in range(t):
            np.add.at(frequencies[:, position], elite[:, position], 1.0)
        probabilities = config.smoothing * frequencies / n_elite + (1.0 - config.smoothing) * probabilities

        candidate = int(np.min(scores))
        if candidate < best_score:
            best_score = candidate
            best_order = orders[int(np.argmin(scores))]
            stagnant = 0
        else:
            stagnant += 1
        if stagnant >= config.patience:
            logger.debug(f"CE-MC остановлен на итерации {iteration + 1}, O={best_score}")
            break
    return tuple(labels[i] for i in best_order), best_score


def aggregate_ranks(
    lists: RankedLists | Sequence[Sequence[Hashable]],
    rng: np.random.Generator | None = None,
    config: CrossEntropyConfig | None = None,
) -> tuple[tuple[Hashable, ...], int]:
    """
    Согласованная перестановка по CE-MC.

    При t ≤ 8 результат сверяется с перебором; расхождение только пишется
    в лог, возвращается всегда результат CE-MC.

    Returns
    -------
    tuple[tuple, int]
        Перестановка меток и значение целевой функции O.
    """
    if not isinstance(lists, RankedLists):
        lists = RankedLists(tuple(tuple(items) for items in lists))
    rng = rng or np.random.default_rng(0)
    consensus, score = cross_entropy_aggregate(lists, rng, config)
    if len(lists.labels) <= BRUTE_FORCE_LIMIT:
        _, exact_score = brute_force_aggregate(lists)
        if exact_score < score:
            logger.warning(f"CE-MC не достиг минимума: O={score}, перебор O={exact_score}")
    return consensus, score


def rank_by(values: Mapping[Hashable, float]) -> tuple[Hashable, ...]:
    """Метки по возрастанию значения; равные значения упорядочены по метке."""
    return tuple(sorted(values, key=lambda label: (values[label], str(label))))
