from __future__ import annotations

import os
from collections.abc import Callable
from pathlib import Path
from typing import IO

from .errors import IoFailure
from .logging_setup import get_logger

log = get_logger(__name__)


def atomic_write(path: Path | str, writer: Callable[[IO[str]], None]) -> None:
    """Write through ``writer`` into a temp file next to ``path``, then rename it into place."""
    target = Path(path)
    tmp_file = target.with_name(f".{target.name}.{os.getpid()}.tmp")
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with tmp_file.open("w", encoding="utf-8", newline="") as file:
            writer(file)
        tmp_file.replace(target)
    except OSError as exc:
        tmp_file.unlink(missing_ok=True)
        raise IoFailure(f"cannot write {target}: {exc}") from exc
    log.debug("`io` Wrote %s", target)


def atomic_write_text(path: Path | str, text: str) -> None:
    atomic_write(path, lambda file: file.write(text))
