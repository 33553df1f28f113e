"""
Форматы файлов и манифест запуска.

Наборы данных, предикторы, цепочки, выборки и таблицы метрик — CSV; манифесты,
отчёты и метаданные — JSON. Числа пишутся с 17 значащими цифрами и читаются
парсером ``round_trip``, так что запись-чтение воспроизводит массивы точно.
"""
from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from copula_abc import __version__
from copula_abc.core.adjustment import AdjustedSample
from copula_abc.core.gibbs import DependenceInit, IndependenceFit
from copula_abc.core.model import CountDataset, Margin, StudyDesign
from copula_abc.core.samplers.base import AdaptationState, ChainArchive, WeightedSample
from copula_abc.core.summaries import KernelSpec, SummaryVector
from copula_abc.errors import ConfigError, CopulaABCError

FLOAT_FORMAT = "%.17g"
SUMMARY_PREFIX = "s:"
CHAIN_COLUMNS = ("delta", "accepted", "tau2_alpha", "tau2_beta")


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Тип {type(value).__name__} не сериализуется в JSON")


def write_json(payload: Any, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, default=_to_builtin)
    return path


def read_json(path: str | Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Файл не найден: {path.resolve()}")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_table(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_table(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Файл не найден: {path.resolve()}")
    return pd.read_csv(path, float_precision="round_trip")


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


# --- Дизайн и данные ---------------------------------------------------------


def margins_path_for(predictors_path: str | Path) -> Path:
    """Таблица маргиналей лежит рядом с таблицей предикторов."""
    return Path(predictors_path).with_name("margins.csv")


def write_design(design: StudyDesign, predictors_path: str | Path) -> tuple[Path, Path]:
    """
    Пишет предикторы (``individual,margin,x1..xd``) и таблицу маргиналей
    (``margin,location,time``) рядом.
    """
    predictors = pd.DataFrame(design.predictors[:, 1:], columns=list(design.predictor_names[1:]))
    predictors.insert(0, "margin", design.cells[:, 1])
    predictors.insert(0, "individual", design.cells[:, 0])
    margins = pd.DataFrame(
        {
            "margin": np.arange(design.n_margins),
            "location": [m.location for m in design.margins],
            "time": [m.time for m in design.margins],
        }
    )
    predictors_path = write_table(predictors, predictors_path)
    margins_path = write_table(margins, margins_path_for(predictors_path))
    return predictors_path, margins_path


def read_design(
    predictors_path: str | Path,
    margins_path: str | Path | None = None,
    n_individuals: int | None = None,
) -> StudyDesign:
    """
    Восстанавливает дизайн из таблицы предикторов и таблицы маргиналей.

    Raises
    ------
    ConfigError
        Если таблицы отсутствуют или не согласованы.
    """
    predictors = read_table(predictors_path)
    margins = read_table(margins_path or margins_path_for(predictors_path))
    margins["location"] = margins["location"].astype(str)
    if list(margins["margin"]) != list(range(len(margins))):
        raise ConfigError("Таблица маргиналей должна перечислять маргинали 0..J-1 по порядку")
    for column in ("individual", "margin"):
        if column not in predictors.columns:
            raise ConfigError(f"В таблице предикторов нет столбца '{column}'")
    names = [c for c in predictors.columns if c not in ("individual", "margin")]
    cells = predictors[["individual", "margin"]].to_numpy(dtype=np.int64)
    values = predictors[names].to_numpy(dtype=float)
    n = int(cells[:, 0].max()) + 1 if n_individuals is None else n_individuals
    return StudyDesign(
        margins=tuple(Margin(loc, int(t)) for loc, t in zip(margins["location"], margins["time"])),
        n_individuals=n,
        cells=cells,
        predictors=np.hstack([np.ones((values.shape[0], 1)), values]),
        predictor_names=("intercept", *names),
    )


def write_dataset(dataset: CountDataset, path: str | Path) -> Path:
    """CSV ``individual,margin,y`` в порядке ``design.cells``."""
    frame = pd.DataFrame(
        {
            "individual": dataset.design.cells[:, 0],
            "margin": dataset.design.cells[:, 1],
            "y": dataset.values,
        }
    )
    return write_table(frame, path)


def read_dataset(path: str | Path, design: StudyDesign) -> CountDataset:
    """
    Читает счётчики и выравнивает их по ``design.cells``.

    Raises
    ------
    ConfigError
        Если множество пар (i, j) файла не совпадает с 𝒟 дизайна.
    """
    frame = read_table(path)
    missing = {"individual", "margin", "y"} - set(frame.columns)
    if missing:
        raise ConfigError(f"В наборе данных нет столбцов {sorted(missing)}")
    frame = frame.sort_values(["individual", "margin"], kind="stable")
    cells = frame[["individual", "margin"]].to_numpy(dtype=np.int64)
    if cells.shape != design.cells.shape or not np.array_equal(cells, design.cells):
        raise ConfigError(
            f"Наблюдения файла ({cells.shape[0]}) не совпадают с дизайном ({design.n_cells})"
        )
    return CountDataset(design=design, values=frame["y"].to_numpy())


# --- Сводные статистики и инициализация -------------------------------------


def write_summary_vector(s: SummaryVector, names: list[str], path: str | Path) -> Path:
    return write_json({"names": names, "s_M": s.s_M, "s_D": s.s_D}, path)


def read_summary_vector(path: str | Path) -> SummaryVector:
    payload = read_json(path)
    return SummaryVector(s_M=np.array(payload["s_M"], dtype=float), s_D=np.array(payload["s_D"], dtype=float))


def write_kernel(kernel: KernelSpec, path: str | Path) -> Path:
    return write_json({"bandwidth": kernel.bandwidth, "scaling": kernel.scaling}, path)


def read_kernel(path: str | Path) -> KernelSpec:
    payload = read_json(path)
    return KernelSpec(bandwidth=float(payload["bandwidth"]), scaling=np.array(payload["scaling"], dtype=float))


def write_initialization(
    marginal: IndependenceFit,
    dependence: DependenceInit,
    theta: np.ndarray,
    cov: np.ndarray,
    path: str | Path,
) -> Path:
    """θ̃, Σ̃ и их блоки; цепочка ℳ₀ — в соседний CSV ``<имя>_m0.csv``."""
    path = Path(path)
    chain_path = path.with_name(f"{path.stem}_m0.csv")
    write_table(pd.DataFrame(marginal.chain, columns=list(marginal.names)), chain_path)
    return write_json(
        {
            "theta": theta,
            "cov": cov,
            "marginal": {
                "theta_tilde": marginal.theta_tilde,
                "sigma_tilde": marginal.sigma_tilde,
                "names": list(marginal.names),
                "shift_acceptance": None if np.isnan(marginal.shift_acceptance) else marginal.shift_acceptance,
                "chain": chain_path.name,
            },
            "dependence": {
                "theta_tilde": dependence.theta_tilde,
                "sigma_tilde": dependence.sigma_tilde,
                "retained": dependence.retained,
                "redraws": dependence.redraws,
                "failures": dependence.failures,
            },
        },
        path,
    )


def read_initialization(path: str | Path) -> tuple[IndependenceFit, DependenceInit, np.ndarray, np.ndarray]:
    path = Path(path)
    payload = read_json(path)
    m, d = payload["marginal"], payload["dependence"]
    chain = read_table(path.with_name(m["chain"])).to_numpy(dtype=float)
    k = len(d["theta_tilde"])
    marginal = IndependenceFit(
        theta_tilde=np.array(m["theta_tilde"], dtype=float),
        sigma_tilde=np.array(m["sigma_tilde"], dtype=float),
        chain=chain.reshape(-1, len(m["names"])),
        names=tuple(m["names"]),
        shift_acceptance=float("nan") if m["shift_acceptance"] is None else m["shift_acceptance"],
    )
    dependence = DependenceInit(
        theta_tilde=np.array(d["theta_tilde"], dtype=float),
        sigma_tilde=np.array(d["sigma_tilde"], dtype=float).reshape(k, k),
        retained=np.array(d["retained"], dtype=float).reshape(-1, k),
        redraws=int(d["redraws"]),
        failures=int(d["failures"]),
    )
    return marginal, dependence, np.array(payload["theta"], dtype=float), np.array(payload["cov"], dtype=float)


# --- Цепочки и выборки ------------------------------------------------------


def write_chain(archive: ChainArchive, path: str | Path) -> Path:
    """
    CSV цепочки: iteration, θ, Δ, accepted, τ², s; метаданные (ядро, адаптация,
    seed) — в JSON с тем же именем.
    """
    path = Path(path)
    frame = pd.DataFrame(archive.theta, columns=list(archive.names))
    frame.insert(0, "iteration", np.arange(1, archive.iterations + 1))
    frame["delta"] = archive.distances
    frame["accepted"] = archive.accepted.astype(np.int64)
    frame["tau2_alpha"] = archive.tau2_alpha
    frame["tau2_beta"] = archive.tau2_beta
    summaries = pd.DataFrame(archive.summaries, columns=[SUMMARY_PREFIX + n for n in archive.names])
    write_table(pd.concat([frame, summaries], axis=1), path)
    write_json(
        {
            "seed": archive.seed,
            "kernel": {"bandwidth": archive.kernel.bandwidth, "scaling": archive.kernel.scaling},
            "adaptation": {
                "eta": archive.adaptation.eta,
                "mean": archive.adaptation.mean,
                "cov": archive.adaptation.cov,
                "step": archive.adaptation.step,
            },
            "initial_theta": archive.initial_theta,
            "failures": archive.failures,
            "names": list(archive.names),
        },
        _sidecar(path),
    )
    return path


def read_chain(path: str | Path) -> ChainArchive:
    path = Path(path)
    frame = read_table(path)
    meta = read_json(_sidecar(path))
    names = meta["names"]
    adaptation = meta["adaptation"]
    k = len(names)
    return ChainArchive(
        theta=frame[names].to_numpy(dtype=float).reshape(-1, k),
        summaries=frame[[SUMMARY_PREFIX + n for n in names]].to_numpy(dtype=float).reshape(-1, k),
        distances=frame["delta"].to_numpy(dtype=float),
        accepted=frame["accepted"].to_numpy().astype(bool),
        tau2_alpha=frame["tau2_alpha"].to_numpy(dtype=float),
        tau2_beta=frame["tau2_beta"].to_numpy(dtype=float),
        adaptation=AdaptationState(
            eta=float(adaptation["eta"]),
            mean=np.array(adaptation["mean"], dtype=float),
            cov=np.array(adaptation["cov"], dtype=float).reshape(k, k),
            step=int(adaptation["step"]),
        ),
        seed=int(meta["seed"]),
        kernel=KernelSpec(
            bandwidth=float(meta["kernel"]["bandwidth"]),
            scaling=np.array(meta["kernel"]["scaling"], dtype=float),
        ),
        names=tuple(names),
        initial_theta=np.array(meta["initial_theta"], dtype=float),
        failures=int(meta["failures"]),
    )


def write_weighted_sample(sample: WeightedSample, path: str | Path) -> Path:
    """CSV: θ, weight, delta, s; сэмплер и info — в JSON-спутнике."""
    path = Path(path)
    frame = pd.DataFrame(sample.theta, columns=list(sample.names))
    frame["weight"] = sample.weights
    frame["delta"] = sample.distances
    summaries = pd.DataFrame(sample.summaries, columns=[SUMMARY_PREFIX + n for n in sample.names])
    write_table(pd.concat([frame, summaries], axis=1), path)
    write_json({"sampler": sample.sampler, "names": list(sample.names), "info": sample.info}, _sidecar(path))
    return path


def read_weighted_sample(path: str | Path) -> WeightedSample:
    path = Path(path)
    frame = read_table(path)
    meta = read_json(_sidecar(path))
    names = meta["names"]
    k = len(names)
    return WeightedSample(
        theta=frame[names].to_numpy(dtype=float).reshape(-1, k),
        weights=frame["weight"].to_numpy(dtype=float),
        summaries=frame[[SUMMARY_PREFIX + n for n in names]].to_numpy(dtype=float).reshape(-1, k),
        distances=frame["delta"].to_numpy(dtype=float),
        names=tuple(names),
        sampler=meta["sampler"],
        info=meta["info"],
    )


def write_adjusted(samples: dict[str, AdjustedSample], path: str | Path) -> Path:
    """Длинный CSV ``estimand,value,weight``; шкала и флаг коррекции — в JSON-спутнике."""
    path = Path(path)
    frame = pd.concat(
        [
            pd.DataFrame({"estimand": name, "value": s.values, "weight": s.weights})
            for name, s in samples.items()
        ],
        ignore_index=True,
    )
    write_table(frame, path)
    write_json(
        {name: {"scale": s.scale, "skipped": s.skipped, "info": s.info} for name, s in samples.items()},
        _sidecar(path),
    )
    return path


def read_adjusted(path: str | Path) -> dict[str, AdjustedSample]:
    path = Path(path)
    frame = read_table(path)
    meta = read_json(_sidecar(path))
    result = {}
    for name, attrs in meta.items():
        rows = frame[frame["estimand"] == name]
        result[name] = AdjustedSample(
            values=rows["value"].to_numpy(dtype=float),
            weights=rows["weight"].to_numpy(dtype=float),
            estimand=name,
            scale=attrs["scale"],
            skipped=bool(attrs["skipped"]),
            info=attrs["info"],
        )
    return result


# --- Манифест ----------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunManifest(BaseModel):
    """Манифест запуска команды: конфигурация, seed, ядро, инициализация и выходные файлы."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    command: str
    config_digest: str = Field(..., min_length=64, max_length=64)
    seed: int
    version: str = Field(default=__version__)
    started_at: str = Field(default_factory=_now)
    finished_at: str | None = None
    kernel: dict[str, Any] | None = Field(default=None, description="h и диагональ A")
    initialization: dict[str, Any] | None = Field(default=None, description="θ̃ и Σ̃")
    files: dict[str, str] = Field(default_factory=dict, description="Выходные файлы по ролям")
    inputs: dict[str, str] = Field(default_factory=dict, description="Входные файлы по ролям")
    extra: dict[str, Any] = Field(default_factory=dict)

    def add_file(self, role: str, path: str | Path) -> None:
        self.files = {**self.files, role: str(path)}

    def finish(self, directory: str | Path) -> Path:
        """
        Проставляет время завершения и пишет ``manifest.json`` в ``directory``.

        Raises
        ------
        CopulaABCError
            Если какой-либо из перечисленных файлов не существует.
        """
        missing = [path for path in self.files.values() if not Path(path).exists()]
        if missing:
            raise CopulaABCError(f"Файлы манифеста не созданы: {missing}")
        self.finished_at = _now()
        path = Path(directory) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return path


def read_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    return RunManifest.model_validate(read_json(path))
