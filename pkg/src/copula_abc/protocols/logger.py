from typing import Any, Protocol, runtime_checkable


@runtime_checkable
class LoggerProtocol(Protocol):
    """
    Протокол логгера, совместимый с ``logging.Logger``.

    Компоненты, работающие долго (генератор, сэмплеры, движок, исследование),
    получают логгер через конструктор; в тестах достаточно любого объекта
    с этими методами.
    """

    def debug(self, msg: str, *args, **kwargs) -> Any:
        """Отладочные сообщения: численные откаты, детали итераций."""
        ...

    def info(self, msg: str, *args, **kwargs) -> Any:
        """Ход работы: прогресс цепочек, итоговые метрики."""
        ...

    def warning(self, msg: str, *args, **kwargs) -> Any:
        """Проблемы, не останавливающие вывод (пропуск регрессионной поправки и т.п.)."""
        ...

    def error(self, msg: str, *args, **kwargs) -> Any:
        """Ошибки отдельной операции (неудачная репликация исследования)."""
        ...

    def exception(self, msg: str, *args, **kwargs) -> Any:
        """ERROR с трассировкой текущего исключения."""
        ...
