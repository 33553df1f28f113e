"""Запуск CLI из корня репозитория без установки пакета."""
import sys
from pathlib import Path

# Добавляем src в путь для запуска из корня
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root / "src"))

from copula_abc.cli import main  # noqa: E402

if __name__ == "__main__":
    main()
