"""Матрицы смежности W^(k): типы, текстовый формат рёбер и каталог для зубной схемы."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from copula_abc.core.model import Margin
from copula_abc.errors import ConfigError

PERMANENT_TEETH = tuple(str(k) for k in range(1, 33))
PRIMARY_TEETH = tuple("ABCDEFGHIJKLMNOPQRST")
LOCATIONS = PERMANENT_TEETH + PRIMARY_TEETH
AGES = (5, 9, 13, 17, 23)
FLAGSHIP_EDGE_LIST = Path(__file__).resolve().parent.parent / "data" / "flagship_adjacency.txt"

# Молочный зуб → постоянный зуб, связанный с ним в каталоге pp
PRIMARY_SUCCESSOR = {
    "A": "2", "B": "3", "C": "6", "D": "7", "E": "8", "F": "9", "G": "10",
    "H": "11", "I": "14", "J": "15", "K": "18", "L": "19", "M": "22", "N": "23",
    "O": "24", "P": "25", "Q": "26", "R": "27", "S": "30", "T": "31",
}

MODEL_PRESETS: dict[str, tuple[str, ...]] = {
    "M0": (),
    "M1": ("t", "h"),
    "M2": ("t", "h", "pp"),
    "M3": ("t", "h", "pp", "v"),
    "M4": ("ct", "t"),
    "M5": ("ct", "t", "h"),
    "M6": ("ce",),
    "M7": ("ce", "t"),
    "M8": ("ce", "t", "h"),
}


@dataclass(frozen=True)
class AdjacencySpec:
    """
    Одно бинарное симметричное отношение соседства.

    Пары хранятся неупорядоченными (j < j'); петли запрещены.
    """

    name: str
    pairs: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        normalised = set()
        for a, b in self.pairs:
            a, b = int(a), int(b)
            if a == b:
                raise ConfigError(f"Смежность '{self.name}': петля ({a}, {a}) недопустима")
            if a < 0 or b < 0:
                raise ConfigError(f"Смежность '{self.name}': отрицательный индекс маргинали")
            normalised.add((min(a, b), max(a, b)))
        object.__setattr__(self, "pairs", frozenset(normalised))

    @classmethod
    def from_pairs(cls, name: str, pairs: Iterable[tuple[int, int]]) -> "AdjacencySpec":
        return cls(name=name, pairs=frozenset((int(a), int(b)) for a, b in pairs))

    @cached_property
    def index_array(self) -> np.ndarray:
        if not self.pairs:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(self.pairs), dtype=np.int64)

    @property
    def max_index(self) -> int:
        return int(self.index_array.max()) if self.pairs else -1

    def matrix(self, n_margins: int) -> np.ndarray:
        """Плотная матрица W формы (J, J)."""
        if self.max_index >= n_margins:
            raise ConfigError(
                f"Смежность '{self.name}' ссылается на маргиналь {self.max_index} при J={n_margins}"
            )
        weights = np.zeros((n_margins, n_margins))
        idx = self.index_array
        weights[idx[:, 0], idx[:, 1]] = 1.0
        weights[idx[:, 1], idx[:, 0]] = 1.0
        return weights


def read_edge_list(path: str | Path) -> list[AdjacencySpec]:
    """
    Читает каталог смежностей из текстового файла ``name j j'`` (по тройке на строку).

    Строки, начинающиеся с '#', игнорируются. Порядок отношений — порядок первого
    появления имени в файле.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Файл смежностей не найден: {path.resolve()}")
    table = pd.read_csv(
        path,
        sep=r"\s+",
        header=None,
        names=["name", "j", "k"],
        comment="#",
        dtype={"name": str, "j": np.int64, "k": np.int64},
        engine="python",
    )
    specs = []
    for name in pd.unique(table["name"]):
        rows = table[table["name"] == name]
        specs.append(AdjacencySpec.from_pairs(name, zip(rows["j"], rows["k"])))
    return specs


def load_flagship_catalog() -> dict[str, AdjacencySpec]:
    """Каталог полной сетки 52 места × 5 возрастов из файла рёбер пакета."""
    return {spec.name: spec for spec in read_edge_list(FLAGSHIP_EDGE_LIST)}


def write_edge_list(specs: Sequence[AdjacencySpec], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [(spec.name, a, b) for spec in specs for a, b in spec.index_array.tolist()]
    frame = pd.DataFrame(rows, columns=["name", "j", "k"])
    frame.to_csv(path, sep=" ", header=False, index=False)
    return path


def select_adjacencies(catalog: dict[str, AdjacencySpec], names: Sequence[str]) -> list[AdjacencySpec]:
    """Упорядоченный набор смежностей по именам (порядок задаёт выравнивание ρ)."""
    missing = [name for name in names if name not in catalog]
    if missing:
        raise ConfigError(f"Смежности {missing} отсутствуют в каталоге {sorted(catalog)}")
    return [catalog[name] for name in names]


def preset_names(preset: str) -> tuple[str, ...]:
    try:
        return MODEL_PRESETS[preset.upper()]
    except KeyError:
        raise ConfigError(f"Неизвестная модель '{preset}', ожидалась одна из {sorted(MODEL_PRESETS)}") from None


def _time_neighbours(ages: Sequence[int]) -> list[tuple[int, int]]:
    ordered = sorted(ages)
    return list(zip(ordered[:-1], ordered[1:]))


def _horizontal_locations() -> list[tuple[str, str]]:
    pairs = [(PERMANENT_TEETH[k], PERMANENT_TEETH[k + 1]) for k in range(len(PERMANENT_TEETH) - 1)]
    # J и K стоят на разных челюстях
    pairs += [
        (PRIMARY_TEETH[k], PRIMARY_TEETH[k + 1])
        for k in range(len(PRIMARY_TEETH) - 1)
        if (PRIMARY_TEETH[k], PRIMARY_TEETH[k + 1]) != ("J", "K")
    ]
    return pairs


def _vertical_locations() -> list[tuple[str, str]]:
    pairs = [(str(k), str(33 - k)) for k in range(1, 17)]
    pairs += [(PRIMARY_TEETH[k], PRIMARY_TEETH[19 - k]) for k in range(10)]
    return pairs


def flagship_catalog(margins: Sequence[Margin]) -> dict[str, AdjacencySpec]:
    """
    Каталог t, h, v, pp, ct, ce для сетки «зуб × возраст».

    Пары, у которых хотя бы одна маргиналь отсутствует в ``margins``, пропускаются,
    поэтому функция работает и для подсеток.

    Parameters
    ----------
    margins : Sequence[Margin]
        Маргинали дизайна; индекс в последовательности — номер j.

    Returns
    -------
    dict[str, AdjacencySpec]
        Отношения по именам: temporal 't', horizontal 'h', vertical 'v',
        primary-permanent 'pp', within-time 'ct', everywhere 'ce'.
    """
    index = {margin: j for j, margin in enumerate(margins)}
    ages = sorted({margin.time for margin in margins})
    locations = sorted({margin.location for margin in margins}, key=_location_order)

    def collect(candidates: Iterable[tuple[Margin, Margin]]) -> list[tuple[int, int]]:
        found = []
        for a, b in candidates:
            if a in index and b in index:
                found.append((index[a], index[b]))
        return found

    temporal = collect(
        (Margin(loc, t1), Margin(loc, t2)) for loc in locations for t1, t2 in _time_neighbours(ages)
    )
    horizontal = collect(
        (Margin(a, t), Margin(b, t)) for t in ages for a, b in _horizontal_locations()
    )
    vertical = collect((Margin(a, t), Margin(b, t)) for t in ages for a, b in _vertical_locations())
    primary_permanent = collect(
        (Margin(primary, t1), Margin(successor, t2))
        for t1, t2 in _time_neighbours(ages)
        for primary, successor in PRIMARY_SUCCESSOR.items()
    )
    within_time = collect(
        (Margin(a, t), Margin(b, t)) for t in ages for a, b in combinations(locations, 2)
    )
    everywhere = list(combinations(range(len(margins)), 2))

    return {
        "t": AdjacencySpec.from_pairs("t", temporal),
        "h": AdjacencySpec.from_pairs("h", horizontal),
        "v": AdjacencySpec.from_pairs("v", vertical),
        "pp": AdjacencySpec.from_pairs("pp", primary_permanent),
        "ct": AdjacencySpec.from_pairs("ct", within_time),
        "ce": AdjacencySpec.from_pairs("ce", everywhere),
    }


def _location_order(location: str) -> int:
    try:
        return LOCATIONS.index(location)
    except ValueError:
        return len(LOCATIONS)
