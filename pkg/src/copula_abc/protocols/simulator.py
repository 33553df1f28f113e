from __future__ import annotations

from typing import TYPE_CHECKING, Protocol, runtime_checkable

import numpy as np

if TYPE_CHECKING:
    from copula_abc.core.model import CountDataset, ParameterLayout, StudyDesign


@runtime_checkable
class DatasetSimulatorProtocol(Protocol):
    """
    Генератор данных p(y | θ) для сэмплеров, не использующих правдоподобие.

    Attributes
    ----------
    design : StudyDesign
        Дизайн, на множестве наблюдений которого генерируются данные.
    layout : ParameterLayout
        Раскладка плоского вектора θ.
    """

    design: StudyDesign
    layout: ParameterLayout

    def simulate(self, theta: np.ndarray, seed: int) -> CountDataset:
        """
        Генерирует набор данных.

        Parameters
        ----------
        theta : np.ndarray
            Плоский вектор параметров.
        seed : int
            Seed набора данных.

        Returns
        -------
        CountDataset
            Сгенерированные счётчики.

        Raises
        ------
        OutsideSupportError
            θ_D вне Θ_D.
        QuantileCapError, NumericOverflowError
            Патологические маргинальные параметры.
        """
        ...

    def clone(self) -> DatasetSimulatorProtocol:
        """Независимая копия для отдельного рабочего потока (цепочки)."""
        ...
