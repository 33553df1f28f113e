"""ABC-вывод для копульной модели счётных данных с нулевой инфляцией и SAR-корреляцией."""

__version__ = "0.1.0"
