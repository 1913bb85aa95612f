# -*- coding: utf-8 -*-
"""
Project-wide logging helpers.

Creates ./log/routine_discovery_log_<date>.log automatically and exposes helpers
to configure the root logger once. Import get_logger() in any module to reuse
the same file.
"""

from __future__ import annotations

import logging
import os
from datetime import datetime
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

ROOT_DIR = Path(__file__).resolve().parents[2]
load_dotenv(ROOT_DIR / ".env")

LOG_FILE_STEM = "routine_discovery_log"

_configured: bool = False
_current_log_file: Optional[Path] = None


def _log_dir() -> Path:
    # ROUTINE_LOG_DIR 用于测试或只读仓库，默认写到仓库根目录下的 log/
    override = os.getenv("ROUTINE_LOG_DIR")
    return Path(override) if override else ROOT_DIR / "log"


def parse_level(raw: str) -> Optional[int]:
    """Numeric level for a name such as ``debug``; None when the name is unknown."""

    level = logging.getLevelName(raw.strip().upper())
    return level if isinstance(level, int) else None


def _env_level(default: int) -> int:
    raw = os.getenv("ROUTINE_LOG_LEVEL")
    if not raw:
        return default
    level = parse_level(raw)
    return default if level is None else level


def setup_logging(level: int = logging.INFO) -> Path:
    """Ensure the root logger writes to ./log/routine_discovery_log_<date>.log and stdout."""

    global _configured, _current_log_file
    log_dir = _log_dir()
    if _configured:
        return _current_log_file or log_dir / f"{LOG_FILE_STEM}_{datetime.now().strftime('%Y%m%d')}.log"

    log_dir.mkdir(parents=True, exist_ok=True)
    current_file = log_dir / f"{LOG_FILE_STEM}_{datetime.now().strftime('%Y%m%d')}.log"
    # backupCount=0 表示不删除旧文件，按日期无限保留
    rotating_file_handler = TimedRotatingFileHandler(
        current_file, when="midnight", interval=1, backupCount=0, encoding="utf-8"
    )
    rotating_file_handler.suffix = "%Y%m%d"

    logging.basicConfig(
        level=_env_level(level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.StreamHandler(),
            rotating_file_handler,
        ],
    )
    _configured = True
    _current_log_file = current_file
    return current_file


def get_logger(name: Optional[str] = None, level: int = logging.INFO) -> logging.Logger:
    """Retrieve a module logger, configuring logging on first use."""

    setup_logging(level=level)
    return logging.getLogger(name)


__all__ = ["get_logger", "parse_level", "setup_logging"]
