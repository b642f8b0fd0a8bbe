import json
import logging
import re
from pathlib import Path
from typing import Any

import pandas as pd
from rich.logging import RichHandler

DEFAULT_OUTPUT_ROOT = "mpmh-out"
_RANGE = re.compile(r"^\s*(-?\d+(?:\.\d+)?)\s*\.\.\s*(-?\d+(?:\.\d+)?)\s*$")


def configure_logging(verbose: bool = False) -> None:
    """Route the package logger through rich; DEBUG when verbose, WARNING otherwise."""
    logger = logging.getLogger("mpmh_cli")
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        logger.addHandler(RichHandler(show_path=False, markup=False))
    logger.propagate = False


def parse_loads(text: str) -> list[float]:
    """Accept `1..10` (step 1) or a comma-separated list."""
    match = _RANGE.match(text)
    if match:
        start, stop = float(match.group(1)), float(match.group(2))
        if stop < start:
            raise ValueError(f"Empty load range '{text}'")
        values = [start + i for i in range(int(stop - start) + 1)]
    else:
        values = [float(part) for part in text.split(",") if part.strip()]
    if not values:
        raise ValueError("No loads given")
    if any(v <= 0 for v in values):
        raise ValueError("Loads must be positive")
    return values


def parse_names(text: str) -> list[str]:
    names = [part.strip() for part in text.split(",") if part.strip()]
    if not names:
        raise ValueError("No names given")
    return names


def parse_ints(text: str) -> list[int]:
    return [int(v) for v in parse_loads(text)]


def output_directory(root: str, name: str, digest: str) -> Path:
    """One directory per scenario content; re-runs overwrite it."""
    path = Path(root) / f"{name}-{digest}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(data: Any, path: Path) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
    return path
