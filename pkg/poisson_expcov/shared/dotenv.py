from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable

from dotenv import load_dotenv

REPO_ROOT = Path(__file__).resolve().parents[2]
DOTENV_PATH_ENV = "POISSON_EXPCOV_DOTENV"


def default_dotenv_candidates() -> list[Path]:
    """An explicit ``POISSON_EXPCOV_DOTENV`` file first, then the working directory, then the repo root."""
    explicit = os.getenv(DOTENV_PATH_ENV, "").strip()
    found = [Path(explicit)] if explicit else []
    return found + [Path.cwd() / ".env", REPO_ROOT / ".env"]


def auto_load_dotenv(candidates: Iterable[Path] | None = None, *, override: bool = False) -> Path | None:
    """Load the first ``.env`` that exists and return its path; set variables win unless ``override``."""
    pool = default_dotenv_candidates() if candidates is None else candidates
    existing = (Path(item).expanduser() for item in pool)
    path = next((item for item in existing if item.is_file()), None)
    if path is not None:
        load_dotenv(path, override=override)
    return path
