import asyncio
import json
import logging
import os
import tempfile
import threading
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)


class ReportWriter:
    """
    Запись результатов пакетной обработки в выходной каталог.

    Каждый файл пишется во временный файл в том же каталоге и затем
    атомарно переименовывается. Операции с диском выполняются через
    asyncio.to_thread.
    """

    def __init__(self, out_dir: Path) -> None:
        self.out_dir = out_dir
        self.written: list[str] = []
        self._dirs: set[Path] = set()
        self._lock = threading.Lock()

    def _ensure_dir(self, directory: Path) -> None:
        """Создание каталога один раз; double-checked locking для параллельных задач."""
        if directory not in self._dirs:
            with self._lock:
                if directory not in self._dirs:
                    directory.mkdir(parents=True, exist_ok=True)
                    self._dirs.add(directory)

    def _write_atomic(self, relative: str, content: str) -> None:
        target = self.out_dir / relative
        self._ensure_dir(target.parent)

        fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(content)
            os.replace(tmp_name, target)
        except BaseException:
            Path(tmp_name).unlink(missing_ok=True)
            raise

        with self._lock:
            self.written.append(relative)

    async def write_text(self, relative: str, content: str) -> None:
        """
        Запись текстового файла (CSV, SVG).

        Args:
            relative: Путь относительно выходного каталога
            content: Содержимое в UTF-8

        Raises:
            OSError: При ошибках записи
        """
        try:
            await asyncio.to_thread(self._write_atomic, relative, content)
            logger.debug("Записан файл %s (%s байт)", relative, len(content.encode("utf-8")))
        except OSError as e:
            logger.error("Ошибка записи файла %s: %s", relative, e, exc_info=True)
            raise

    async def write_json(self, relative: str, payload: Any) -> None:
        """Запись JSON с сортированными ключами и отступом 2 для побайтовой воспроизводимости."""
        await self.write_text(relative, json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
