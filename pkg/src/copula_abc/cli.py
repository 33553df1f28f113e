"""CLI интерфейс ABC-вывода для копульной модели счётных данных."""
import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from copula_abc import __version__
from copula_abc.config.factory import ComponentFactory
from copula_abc.config.loader import config_digest, format_validation_error, load_config
from copula_abc.config.models import AppConfig
from copula_abc.core.adjacency import write_edge_list
from copula_abc.core.adjustment import (
    CorrelationEntries,
    acceptance_table,
    adjust_chain,
    adjust_dependence,
    adjust_sample,
    combine_chains,
    parameter_estimands,
    raw_chain_samples,
    raw_weighted_samples,
    summary_table,
    thin,
)
from copula_abc.core.diagnostics import (
    StatisticBattery,
    convergence_table,
    pair_label,
    posterior_predictive_check,
    ppp_histogram,
)
from copula_abc.core.engine import Initialization
from copula_abc.core.ranking import RankedLists, aggregate_ranks
from copula_abc.core.samplers import ChainArchive, WeightedSample
from copula_abc.core.simstudy import MetricTable, rank_groupings
from copula_abc.errors import (
    ConfigError,
    DegenerateSummaryError,
    DomainError,
    InferenceFailure,
    InitializationError,
    OutsideSupportError,
)
from copula_abc.storage import (
    RunManifest,
    read_chain,
    read_dataset,
    read_initialization,
    read_kernel,
    read_summary_vector,
    read_weighted_sample,
    write_adjusted,
    write_chain,
    write_dataset,
    write_design,
    write_initialization,
    write_json,
    write_kernel,
    write_summary_vector,
    write_table,
    write_weighted_sample,
)
from copula_abc.utils.rng import derive_seed

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INFERENCE = 3
EXIT_INTERRUPTED = 130

CONFIG_ERRORS = (ConfigError, DomainError, OutsideSupportError)
INFERENCE_ERRORS = (DegenerateSummaryError, InitializationError, InferenceFailure)

# Ключи путей ветвления главного seed по командам
SEED_SIMULATE, SEED_INIT, SEED_MCMC, SEED_REJECTION, SEED_IMPORTANCE, SEED_PPCHECK, SEED_ADJUST, SEED_RANK = range(8)


def build_parser() -> argparse.ArgumentParser:
    """Парсер с подкомандами; общие флаги доступны у каждой подкоманды."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="YAML/JSON конфигурация (по умолчанию — встроенная)")
    common.add_argument("--seed", type=int, help="Главный seed (переопределяет конфиг)")
    common.add_argument("--threads", type=int, help="Размер пула потоков")
    common.add_argument("--out", type=str, help="Директория результатов (переопределяет output_dir)")

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument("--h", type=float, help="Ширина ядра h")
    sampling.add_argument("--chains", type=int, help="Число цепочек")
    sampling.add_argument("--iters", type=int, help="Итераций на цепочку")
    sampling.add_argument("--burnin", type=int, help="Длина прогрева")
    sampling.add_argument("--thin", type=int, help="Шаг прореживания архива")

    parser = argparse.ArgumentParser(
        prog="copula-abc",
        description=(
            "ABC-вывод для копульной модели счётных данных с hurdle-маргиналями и SAR-корреляцией.\n\n"
            "Конвейер: simulate → init → fit-abc | fit-rejection | fit-importance → adjust → "
            "diagnose / ppcheck.\n"
            "Коды выхода: 0 — успех, 2 — ошибка конфигурации или входных файлов, "
            "3 — отказ вывода, 130 — прерывание."
        ),
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"copula-abc {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help_text: str, *parents: argparse.ArgumentParser) -> argparse.ArgumentParser:
        return commands.add_parser(
            name, help=help_text, parents=[common, *parents], formatter_class=argparse.RawTextHelpFormatter
        )

    add("simulate", "Сгенерировать набор данных при истинных параметрах")

    sub = add("init", "Подгонка ℳ₀, инициализация θ_D и масштабы A", sampling)
    sub.add_argument("--data", required=True, help="CSV набора данных individual,margin,y")

    for name, help_text in (
        ("fit-abc", "Цепочки ABC-MCMC"),
        ("fit-rejection", "ABC rejection"),
        ("fit-importance", "ABC importance sampling"),
    ):
        sub = add(name, help_text, sampling)
        sub.add_argument("--init", required=True, help="Директория результатов команды init")

    sub = add("adjust", "Регрессионная коррекция выборок", sampling)
    sub.add_argument("--input", required=True, help="Директория результатов fit-*")

    sub = add("diagnose", "R̂, ESS и доля принятия цепочек", sampling)
    sub.add_argument("--input", required=True, help="Директория результатов fit-abc")

    sub = add("ppcheck", "Апостериорная предсказательная проверка", sampling)
    sub.add_argument("--data", required=True, help="CSV наблюдённого набора данных")
    sub.add_argument("--input", required=True, help="Директория fit-* или init (для ℳ₀)")

    add("simstudy", "Имитационное исследование", sampling)

    sub = add("rank-aggregate", "Согласованный ранг методов")
    sub.add_argument("--input", required=True, help="JSON со списками меток или CSV таблицы метрик")
    return parser


def apply_overrides(config: AppConfig, args: argparse.Namespace) -> AppConfig:
    """Переопределяет поля конфига флагами командной строки и валидирует результат заново."""
    raw = config.model_dump()
    for flag, key in (("seed", "seed"), ("threads", "threads"), ("out", "output_dir")):
        if getattr(args, flag, None) is not None:
            raw[key] = getattr(args, flag)
    for flag in ("h", "chains", "iters", "burnin", "thin"):
        if getattr(args, flag, None) is not None:
            raw["abc"][flag] = getattr(args, flag)
    if args.command == "simstudy":
        for flag in ("chains", "iters", "burnin"):
            if getattr(args, flag, None) is not None:
                raw["study"][flag] = getattr(args, flag)
    try:
        return AppConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e)) from e


def _require_dir(path: str) -> Path:
    directory = Path(path)
    if not directory.is_dir():
        raise ConfigError(f"Директория не найдена: {directory.resolve()}")
    return directory


def load_initialization(directory: str | Path) -> Initialization:
    """Собирает ``Initialization`` из файлов команды init."""
    directory = _require_dir(str(directory))
    marginal, dependence, theta, cov = read_initialization(directory / "init.json")
    return Initialization(
        s_obs=read_summary_vector(directory / "s_obs.json"),
        marginal=marginal,
        dependence=dependence,
        theta=theta,
        cov=cov,
        scaling=read_kernel(directory / "scaling.json").scaling,
    )


def load_fit(directory: str | Path) -> list[ChainArchive] | WeightedSample:
    """Цепочки ``chain_*.csv`` или взвешенная выборка ``sample.csv`` из директории fit-*."""
    directory = _require_dir(str(directory))
    chains = sorted(directory.glob("chain_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if chains:
        return [read_chain(path) for path in chains]
    if (directory / "sample.csv").exists():
        return read_weighted_sample(directory / "sample.csv")
    raise ConfigError(f"В {directory.resolve()} нет ни chain_*.csv, ни sample.csv")


def _check_names(factory: ComponentFactory, names: tuple[str, ...]) -> None:
    expected = tuple(factory.get_layout().names())
    if names != expected:
        raise ConfigError(f"Параметры файла {list(names)} не совпадают с раскладкой конфигурации {list(expected)}")


def _initialization_record(init: Initialization) -> dict:
    return {"theta": init.theta.tolist(), "cov": init.cov.tolist()}


def _kernel_record(h: float, scaling: np.ndarray) -> dict:
    return {"bandwidth": h, "scaling": scaling.tolist()}


def cmd_simulate(factory: ComponentFactory, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    logger = factory.get_logger()
    theta, adjacencies = factory.get_truth_theta()
    simulator = factory.get_simulator(adjacencies)
    dataset = simulator.simulate(theta, derive_seed(factory.config.seed, SEED_SIMULATE))
    zero_share = float(np.mean(dataset.values == 0))
    logger.info(f"Сгенерировано {dataset.design.n_cells} наблюдений, доля нулей {zero_share:.3f}")

    manifest.add_file("dataset", write_dataset(dataset, out / "dataset.csv"))
    predictors, margins = write_design(dataset.design, out / "predictors.csv")
    manifest.add_file("predictors", predictors)
    manifest.add_file("margins", margins)
    manifest.add_file("adjacency", write_edge_list(adjacencies, out / "adjacency.txt"))
    truth = write_json(
        {"names": simulator.layout.names(), "theta": theta, "preset": factory.get_truth().preset},
        out / "truth.json",
    )
    manifest.add_file("truth", truth)
    manifest.extra = {"zero_share": zero_share}


def cmd_init(factory: ComponentFactory, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    config = factory.config
    dataset = read_dataset(args.data, factory.get_design())
    manifest.inputs = {"dataset": str(Path(args.data).resolve())}
    engine = factory.get_engine("abc-mcmc")
    init = engine.initialize(dataset, derive_seed(config.seed, SEED_INIT), threads=config.threads)

    names = factory.get_layout().names()
    manifest.add_file("s_obs", write_summary_vector(init.s_obs, names, out / "s_obs.json"))
    manifest.add_file(
        "initialization", write_initialization(init.marginal, init.dependence, init.theta, init.cov, out / "init.json")
    )
    manifest.add_file("m0_chain", out / "init_m0.csv")
    manifest.add_file("scaling", write_kernel(init.kernel(config.abc.h), out / "scaling.json"))
    manifest.initialization = _initialization_record(init)
    manifest.kernel = _kernel_record(config.abc.h, init.scaling)


def _fit_common(
    factory: ComponentFactory, args: argparse.Namespace, out: Path, manifest: RunManifest
) -> Initialization:
    init = load_initialization(args.init)
    manifest.inputs = {"init": str(Path(args.init).resolve())}
    if init.theta.shape[0] != factory.get_layout().size:
        raise ConfigError(
            f"Инициализация содержит {init.theta.shape[0]} параметров, раскладка — {factory.get_layout().size}"
        )
    manifest.add_file("s_obs", write_summary_vector(init.s_obs, factory.get_layout().names(), out / "s_obs.json"))
    manifest.initialization = _initialization_record(init)
    return init


def cmd_fit_abc(factory: ComponentFactory, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    config = factory.config
    abc = config.abc
    init = _fit_common(factory, args, out, manifest)
    engine = factory.get_engine("abc-mcmc")
    archives = engine.run(
        init,
        bandwidth=abc.h,
        iters=abc.iters,
        chains=abc.chains,
        seed=derive_seed(config.seed, SEED_MCMC, int(round(abc.h * 1000))),
        threads=config.threads,
    )
    for c, archive in enumerate(archives, start=1):
        manifest.add_file(f"chain_{c}", write_chain(archive, out / f"chain_{c}.csv"))
    manifest.add_file("acceptance", write_table(acceptance_table(archives), out / "acceptance.csv"))
    manifest.kernel = _kernel_record(abc.h, init.scaling)


def cmd_fit_rejection(factory: ComponentFactory, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    config = factory.config
    init = _fit_common(factory, args, out, manifest)
    sample = factory.get_engine("rejection").run(
        init,
        G=config.abc.rejection_G,
        keep=config.abc.rejection_keep,
        seed=derive_seed(config.seed, SEED_REJECTION),
        threads=config.threads,
    )
    manifest.add_file("sample", write_weighted_sample(sample, out / "sample.csv"))
    manifest.kernel = _kernel_record(float(sample.info["threshold"]), init.scaling)


def cmd_fit_importance(factory: ComponentFactory, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    config = factory.config
    init = _fit_common(factory, args, out, manifest)
    sample = factory.get_engine("importance").run(
        init,
        bandwidth=config.abc.h,
        G=config.abc.importance_G,
        inflation=config.abc.importance_inflation,
        seed=derive_seed(config.seed, SEED_IMPORTANCE),
        threads=config.threads,
    )
    manifest.add_file("sample", write_weighted_sample(sample, out / "sample.csv"))
    manifest.kernel = _kernel_record(config.abc.h, init.scaling)


def _estimands(factory: ComponentFactory):
    layout = factory.get_layout()
    design = factory.get_design()
    pairs = factory.get_pairs()
    labels = [f"R:{pair_label(design, pair)}" for pair in pairs]
    entries = CorrelationEntries(layout, factory.get_adjacencies(), design.n_margins, pairs)
    return parameter_estimands(layout) + entries.estimands(labels), pairs, labels


def cmd_adjust(factory: ComponentFactory, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    config = factory.config
    abc = config.abc
    logger = factory.get_logger()
    fit = load_fit(args.input)
    s_obs = read_summary_vector(Path(args.input) / "s_obs.json")
    manifest.inputs = {"fit": str(Path(args.input).resolve())}
    estimands, pairs, labels = _estimands(factory)
    layout = factory.get_layout()
    rng = np.random.default_rng(derive_seed(config.seed, SEED_ADJUST))
    report: dict = {"mode": abc.adjustment_mode, "noise": abc.noise}

    if isinstance(fit, WeightedSample):
        _check_names(factory, fit.names)
        raw = raw_weighted_samples(fit, estimands)
        adjusted = adjust_sample(fit, estimands, s_obs, threads=config.threads)
        report["sampler"] = fit.sampler
    else:
        _check_names(factory, fit[0].names)
        raw_chains, adjusted_chains, unique = [], [], []
        for archive in fit:
            post = archive.post_burnin(abc.burnin, abc.thin)
            unique.append(post.unique_count())
            raw_chains.append(raw_chain_samples(post, estimands))
            if abc.adjustment_mode == "indirect" and layout.n_dependence:
                marginal = [e for e in estimands if not e.name.startswith(("rho:", "R:"))]
                samples = adjust_chain(post, marginal, s_obs, abc.noise, rng, config.threads)
                samples.update(adjust_dependence(
                    post, factory.get_adjacencies(), s_obs, "indirect", layout,
                    factory.get_design().n_margins, pairs, labels, config.threads,
                ))
            else:
                samples = adjust_chain(post, estimands, s_obs, abc.noise, rng, config.threads)
            if abc.thin_size is not None:
                samples = thin(samples, abc.thin_size, rng)
            adjusted_chains.append(samples)
        raw, adjusted = combine_chains(raw_chains), combine_chains(adjusted_chains)
        report["unique_per_chain"] = unique

    skipped = sorted(name for name, sample in adjusted.items() if sample.skipped)
    if skipped:
        logger.warning(f"Коррекция пропущена для {len(skipped)} величин: {skipped}")
    report["adjustment_skipped"] = skipped
    report["details"] = {
        name: {key: value for key, value in sample.info.items() if key != "correction"}
        for name, sample in adjusted.items()
        if sample.info
    }

    manifest.add_file("adjusted", write_adjusted(adjusted, out / "adjusted.csv"))
    manifest.add_file("summary", write_table(summary_table(adjusted), out / "summary.csv"))
    manifest.add_file("raw_summary", write_table(summary_table(raw), out / "raw_summary.csv"))
    manifest.add_file("report", write_json(report, out / "report.json"))


def cmd_diagnose(factory: ComponentFactory, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    abc = factory.config.abc
    logger = factory.get_logger()
    fit = load_fit(args.input)
    if isinstance(fit, WeightedSample):
        raise ConfigError("Диагностика сходимости определена только для цепочек fit-abc")
    manifest.inputs = {"fit": str(Path(args.input).resolve())}
    table = convergence_table(fit, burnin=abc.burnin, thin=abc.thin)
    flagged = table.loc[table["flagged"], "parameter"].tolist()
    rhat = table["rhat"].dropna()
    if flagged:
        logger.warning(f"R̂ > 1.1 для {len(flagged)} параметров: {flagged}")
    else:
        logger.info("R̂ ≤ 1.1 для всех параметров")
    report = {
        "chains": len(fit),
        "flagged": flagged,
        "max_rhat": float(rhat.max()) if len(rhat) else None,
        "acceptance_per_100": [a.acceptance_per_100() for a in fit],
        "unique": [a.unique_count() for a in fit],
    }
    manifest.add_file("convergence", write_table(table, out / "convergence.csv"))
    manifest.add_file("acceptance", write_table(acceptance_table(fit), out / "acceptance.csv"))
    manifest.add_file("report", write_json(report, out / "report.json"))


def _posterior_draws(factory: ComponentFactory, directory: Path) -> tuple[np.ndarray, np.ndarray | None]:
    """θ и веса для предсказательной проверки; init — цепочка ℳ₀ с ρ = 0."""
    abc = factory.config.abc
    if not any(directory.glob("chain_*.csv")) and not (directory / "sample.csv").exists():
        marginal, _, _, _ = read_initialization(directory / "init.json")
        if marginal.chain.shape[0] == 0:
            raise ConfigError("Цепочка ℳ₀ отсутствует (Poisson-hurdle инициализируется без Гиббса)")
        rho = np.zeros((marginal.chain.shape[0], factory.get_layout().n_dependence))
        return np.hstack([marginal.chain, rho]), None
    fit = load_fit(directory)
    if isinstance(fit, WeightedSample):
        _check_names(factory, fit.names)
        keep = fit.weights > 0
        return fit.theta[keep], fit.weights[keep]
    _check_names(factory, fit[0].names)
    return np.vstack([a.post_burnin(abc.burnin, abc.thin).theta for a in fit]), None


def cmd_ppcheck(factory: ComponentFactory, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    config = factory.config
    dataset = read_dataset(args.data, factory.get_design())
    theta, weights = _posterior_draws(factory, _require_dir(args.input))
    manifest.inputs = {"dataset": str(Path(args.data).resolve()), "fit": str(Path(args.input).resolve())}
    check = posterior_predictive_check(
        dataset,
        theta,
        weights,
        factory.get_simulator(),
        StatisticBattery(factory.get_pairs()),
        n_rep=config.abc.n_rep,
        seed=derive_seed(config.seed, SEED_PPCHECK),
        threads=config.threads,
        logger=factory.get_logger(),
    )
    histogram, fraction = ppp_histogram(check, min_pairs=config.abc.min_pairs)
    manifest.add_file("ppp", write_table(check.ppp_table(), out / "ppp.csv"))
    manifest.add_file("boxplot", write_table(check.boxplot_table(), out / "boxplot.csv"))
    manifest.add_file("ppp_histogram", write_table(histogram, out / "ppp_histogram.csv"))
    report = {
        "replicates": config.abc.n_rep - check.failures,
        "failures": check.failures,
        "fraction_below_alert": None if np.isnan(fraction) else fraction,
    }
    manifest.add_file("report", write_json(report, out / "report.json"))


def cmd_simstudy(factory: ComponentFactory, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    config = factory.config
    result = factory.get_study().run(config.seed, threads=config.threads)
    manifest.add_file("metrics", write_table(result.metrics.frame, out / "metrics.csv"))
    manifest.add_file("ecr", write_table(result.ecr, out / "ecr.csv"))
    manifest.add_file(
        "rankings",
        write_json({key: list(order) for key, order in result.rankings.items()}, out / "rankings.json"),
    )
    manifest.extra = {**result.manifest, "failures": result.failures}


def cmd_rank_aggregate(factory: ComponentFactory, args: argparse.Namespace, out: Path, manifest: RunManifest) -> None:
    config = factory.config
    path = Path(args.input)
    if not path.exists():
        raise ConfigError(f"Файл не найден: {path.resolve()}")
    manifest.inputs = {"input": str(path.resolve())}
    rng = np.random.default_rng(derive_seed(config.seed, SEED_RANK))
    ranking = factory.get_ranking_config()
    if path.suffix.lower() == ".json":
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        lists = payload["lists"] if isinstance(payload, dict) else payload
        consensus, score = aggregate_ranks(RankedLists(tuple(tuple(items) for items in lists)), rng, ranking)
        result = {"consensus": list(consensus), "objective": score}
    else:
        table = MetricTable(pd.read_csv(path, float_precision="round_trip"))
        result = {key: list(order) for key, order in rank_groupings(table, rng, ranking).items()}
    factory.get_logger().info(f"Согласованный ранг: {result}")
    manifest.add_file("consensus", write_json(result, out / "consensus.json"))


COMMANDS = {
    "simulate": cmd_simulate,
    "init": cmd_init,
    "fit-abc": cmd_fit_abc,
    "fit-rejection": cmd_fit_rejection,
    "fit-importance": cmd_fit_importance,
    "adjust": cmd_adjust,
    "diagnose": cmd_diagnose,
    "ppcheck": cmd_ppcheck,
    "simstudy": cmd_simstudy,
    "rank-aggregate": cmd_rank_aggregate,
}


def run(argv: list[str] | None = None) -> int:
    """Разбирает аргументы, выполняет команду и возвращает код выхода."""
    args = build_parser().parse_args(argv)

    try:
        config = apply_overrides(load_config(args.config), args)
    except CONFIG_ERRORS as e:
        print(f"❌ Ошибка конфигурации (config): {e}", file=sys.stderr)
        return EXIT_CONFIG

    factory = ComponentFactory(config, process_name=args.command)
    logger = factory.get_logger()
    out = factory.get_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command=args.command, config_digest=config_digest(config), seed=config.seed)
    logger.info(f"Команда {args.command}: seed={config.seed}, потоков {config.threads}, результаты → {out}")

    try:
        COMMANDS[args.command](factory, args, out, manifest)
        manifest.finish(out)
    except KeyboardInterrupt:
        logger.warning("Прервано пользователем")
        return EXIT_INTERRUPTED
    except CONFIG_ERRORS as e:
        tag = "outside-support" if isinstance(e, OutsideSupportError) else "config"
        logger.error(f"{type(e).__name__}: {e}")
        print(f"❌ Ошибка конфигурации ({tag}): {e}", file=sys.stderr)
        return EXIT_CONFIG
    except INFERENCE_ERRORS as e:
        logger.error(f"Отказ вывода ({type(e).__name__}): {e}")
        write_json({"command": args.command, "error": type(e).__name__, "message": str(e)}, out / "failure.json")
        return EXIT_INFERENCE
    except Exception as e:
        logger.exception(f"Критическая ошибка: {e}")
        return EXIT_FAILURE

    logger.info(f"Команда {args.command} завершена, манифест: {out / 'manifest.json'}")
    return EXIT_OK


def main() -> None:
    try:
        sys.exit(run())
    except KeyboardInterrupt:
        print("\n⚠️  Прервано пользователем")
        sys.exit(EXIT_INTERRUPTED)


if __name__ == "__main__":
    main()
