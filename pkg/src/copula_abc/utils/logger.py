import logging
import os
from logging.handlers import TimedRotatingFileHandler

_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
    "critical": logging.CRITICAL,
}

FILE_FORMAT = '%(asctime)s - %(levelname)s - [%(module)s] %(message)s'
CONSOLE_FORMAT = '%(asctime)s - %(levelname)s - {%(processName)s} [%(name)s] [%(module)s] %(message)s'


def _plain_file_handler(path: str, level: int, formatter: logging.Formatter) -> logging.FileHandler:
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(formatter)
    return handler


def get_logger(config: dict, process_name: str, logger_name: str | None = None) -> logging.Logger:
    """
    Настраивает логгер запуска с изолированной директорией и набором файлов.

    Для каждого запуска (команды CLI, цепочки, репликации исследования) создаётся
    своя директория ``{log_dir}/{process_name}`` с основным ротируемым логом и
    отдельными файлами предупреждений и ошибок. Дублирует вывод в консоль.

    Parameters
    ----------
    config : dict
        Параметры логирования:

        - log_dir : str
            Корневая директория логов (по умолчанию 'logs')
        - level : str, optional
            'debug' | 'info' | 'warning' | 'error' | 'critical' (по умолчанию 'info')
        - max_log_days : int
            Сколько дней хранить ротированные файлы
        - console : bool, optional
            Выводить ли сообщения в консоль (по умолчанию True)

    process_name : str
        Имя процесса/команды, например 'fit-abc'; задаёт директорию и имена файлов.
    logger_name : str, optional
        Имя логгера. Если не указано, используется process_name.

    Returns
    -------
    logging.Logger
        Логгер с файловыми и консольным хэндлерами, без передачи в root.

    Raises
    ------
    OSError
        Если директорию логов невозможно создать.

    Notes
    -----
    - Основной файл ротируется в полночь.
    - Повторный вызов с тем же именем заменяет хэндлеры, а не добавляет новые.
    """
    log_root = config.get("log_dir", "logs")
    process_log_dir = os.path.join(log_root, process_name)
    os.makedirs(process_log_dir, exist_ok=True)

    level = _LEVELS.get(str(config.get("level", "info")).lower(), logging.INFO)
    file_formatter = logging.Formatter(FILE_FORMAT)

    # Основной лог с ротацией в полночь
    file_handler = TimedRotatingFileHandler(
        os.path.join(process_log_dir, f"{process_name}.log"),
        when="midnight",
        interval=1,
        backupCount=config.get("max_log_days", 7),
        encoding="utf-8",
    )
    file_handler.setFormatter(file_formatter)
    file_handler.setLevel(level)

    handlers: list[logging.Handler] = [
        file_handler,
        _plain_file_handler(
            os.path.join(process_log_dir, f"{process_name}_warning.log"),
            logging.WARNING,
            file_formatter,
        ),
        _plain_file_handler(
            os.path.join(process_log_dir, f"{process_name}_error.log"),
            logging.ERROR,
            file_formatter,
        ),
    ]

    if config.get("console", True):
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
        console_handler.setLevel(level)
        handlers.append(console_handler)

    logger = logging.getLogger(logger_name or process_name)
    logger.setLevel(level)

    # Старые хэндлеры закрываем, иначе при повторном вызове файлы остаются открытыми
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    for handler in handlers:
        logger.addHandler(handler)

    logger.propagate = False
    return logger
