import itertools
import logging

import numpy as np
import pytest

from copula_abc.core import ranking
from copula_abc.core.ranking import (
    CrossEntropyConfig,
    RankedLists,
    aggregate_ranks,
    brute_force_aggregate,
    cross_entropy_aggregate,
    footrule,
    rank_by,
)
from copula_abc.errors import DomainError


def test_footrule():
    assert footrule(("a", "b", "c"), ("c", "b", "a")) == 4
    assert footrule(("a", "b", "c"), ("a", "b", "c")) == 0
    with pytest.raises(DomainError):
        footrule(("a", "b"), ("a", "c"))


def test_ranked_lists_validation():
    with pytest.raises(DomainError):
        RankedLists(())
    with pytest.raises(DomainError):
        RankedLists((("a", "b"), ("a", "a")))


def test_positions():
    lists = RankedLists((("b", "a", "c"), ("a", "c", "b")))
    assert lists.labels == ("a", "b", "c")
    assert lists.positions().tolist() == [[2, 1, 3], [1, 3, 2]]


def test_unanimous_lists():
    lists = RankedLists((("x", "y", "z"),) * 4)
    assert brute_force_aggregate(lists) == (("x", "y", "z"), 0)
    consensus, score = aggregate_ranks(lists, np.random.default_rng(0))
    assert consensus == ("x", "y", "z") and score == 0


def _random_lists(t: int, n: int, seed: int) -> RankedLists:
    rng = np.random.default_rng(seed)
    labels = [f"m{k}" for k in range(t)]
    return RankedLists(tuple(tuple(rng.permutation(labels)) for _ in range(n)))


def _objective(order, lists):
    return sum(footrule(order, items) for items in lists.lists)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_brute_force_is_minimal(seed):
    lists = _random_lists(4, 5, seed)
    consensus, score = brute_force_aggregate(lists)
    assert score == _objective(consensus, lists)
    assert score == min(_objective(p, lists) for p in itertools.permutations(lists.labels))


def test_cross_entropy_finds_exhaustive_optimum():
    rng = np.random.default_rng(2024)
    for instance in range(50):
        t = int(rng.integers(4, 9))
        n = int(rng.integers(3, 21))
        lists = _random_lists(t, n, seed=1000 + instance)
        _, exact = brute_force_aggregate(lists)
        consensus, score = cross_entropy_aggregate(lists, np.random.default_rng(instance))
        assert score == _objective(consensus, lists)
        assert score == exact, f"t={t}, n={n}, seed={1000 + instance}"


def test_aggregate_returns_cross_entropy_result(monkeypatch, caplog):
    lists = _random_lists(5, 7, 8)
    _, exact = brute_force_aggregate(lists)
    worse = max(itertools.permutations(lists.labels), key=lambda order: _objective(order, lists))
    monkeypatch.setattr(ranking, "cross_entropy_aggregate", lambda *_: (worse, _objective(worse, lists)))
    with caplog.at_level(logging.WARNING, logger=ranking.__name__):
        consensus, score = aggregate_ranks(lists, np.random.default_rng(1))
    assert consensus == worse and score > exact
    assert "не достиг минимума" in caplog.text


def test_brute_force_limit():
    with pytest.raises(DomainError):
        brute_force_aggregate(_random_lists(9, 2, 0))


def test_large_problem_uses_cross_entropy():
    lists = _random_lists(10, 4, 9)
    consensus, score = aggregate_ranks(lists, np.random.default_rng(2), CrossEntropyConfig(patience=5))
    assert sorted(consensus) == sorted(lists.labels)
    assert score == _objective(consensus, lists)


def test_rank_by_breaks_ties_by_label():
    assert rank_by({"b": 1.0, "a": 1.0, "c": 0.5}) == ("c", "a", "b")


def test_config_validation():
    with pytest.raises(DomainError):
        CrossEntropyConfig(elite_fraction=0.0)
    with pytest.raises(DomainError):
        CrossEntropyConfig(smoothing=1.5)
