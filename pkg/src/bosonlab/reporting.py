"""Deterministic CSV/JSON emission shared by every study."""

from __future__ import annotations

import json
import math
import platform
import time
from pathlib import Path

import numpy as np
import scipy


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.17g}"
    return str(x)


def write_csv(path, columns, rows, config_hash: str) -> None:
    """Write rows with a leading comment line carrying the config hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_manifest(path, config, meta: dict) -> None:
    payload = {
        "config_hash": config.config_hash,
        "study_kind": config.kind,
        "seed": config.seed,
        "threads": config.threads,
        "memory_budget_bytes": config.memory_budget_bytes,
        "config": config.raw,
        "versions": {
            "bosonlab": _pkg_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_clock_unix": time.time(),
    }
    payload.update(meta)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _pkg_version() -> str:
    from . import __version__

    return __version__
