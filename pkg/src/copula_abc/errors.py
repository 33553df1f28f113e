"""Иерархия исключений пакета."""


class CopulaABCError(Exception):
    """Базовое исключение пакета."""


class ConfigError(CopulaABCError, ValueError):
    """Конфигурация не загружена или не прошла валидацию."""


class DomainError(CopulaABCError, ValueError):
    """Аргумент вне области определения операции."""


class OutsideSupportError(CopulaABCError):
    """Параметры зависимости вне Θ_D: матрица R не строится."""


class NumericOverflowError(CopulaABCError, ArithmeticError):
    """Нечисловой (inf/nan) линейный предиктор."""


class QuantileCapError(CopulaABCError):
    """Поиск квантиля превысил допустимое число шагов."""


class SummaryFailure(CopulaABCError):
    """
    Вспомогательная оценка (IRLS / Ньютон / МНК) не сошлась.

    В ABC-циклах трактуется как отклонение предложения, а не как авария.
    """


class DegenerateSummaryError(CopulaABCError):
    """Компонента сводной статистики не варьирует между симуляциями."""


class InitializationError(CopulaABCError):
    """Инициализация θ_D не дала достаточного числа отобранных точек."""


class InferenceFailure(CopulaABCError):
    """Вывод невозможен (например, все веса важности нулевые)."""


class UndefinedStatistic(CopulaABCError):
    """Диагностика не определена на переданных данных."""
