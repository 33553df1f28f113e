from __future__ import annotations

from typing import TYPE_CHECKING, Any, Protocol, runtime_checkable

if TYPE_CHECKING:
    from copula_abc.core.model import HyperParams
    from copula_abc.core.summaries import SummaryCalculator, SummaryVector
    from copula_abc.protocols.logger import LoggerProtocol
    from copula_abc.protocols.simulator import DatasetSimulatorProtocol


@runtime_checkable
class PosteriorSamplerProtocol(Protocol):
    """
    Апостериорный ABC-сэмплер, которым управляет движок вывода.

    Любой класс с этим интерфейсом можно передать в ``InferenceEngine``
    независимо от схемы выборки (ABC-MCMC, rejection, importance).

    Attributes
    ----------
    simulator : DatasetSimulatorProtocol
        Генератор данных p(y | θ).
    calculator : SummaryCalculator
        Вычисление s(y) на дизайне.
    logger : LoggerProtocol
        Логгер процесса.
    hyper : HyperParams
        Гиперпараметры априорного распределения.
    """

    simulator: DatasetSimulatorProtocol
    calculator: SummaryCalculator
    logger: LoggerProtocol
    hyper: HyperParams

    def sample(self, s_obs: SummaryVector, **kwargs) -> Any:
        """
        Запускает сэмплер.

        Parameters
        ----------
        s_obs : SummaryVector
            Наблюдённая сводная статистика.
        **kwargs
            Ядро, начальная точка и размеры выборки; набор зависит от реализации.

        Returns
        -------
        list[ChainArchive] | WeightedSample
            Архивы цепочек или взвешенная выборка.
        """
        ...

    def get_sampler_name(self) -> str:
        """Уникальное имя сэмплера ('abc-mcmc', 'rejection', 'importance')."""
        ...

    def get_sampler_description(self) -> str:
        """Короткое описание схемы выборки для лога."""
        ...
