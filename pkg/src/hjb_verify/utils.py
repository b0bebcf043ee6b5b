#!/usr/bin/env python3
import os
import sys
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

try:
    from dotenv import load_dotenv
    load_dotenv()  # Load HJB_* variables from .env file
except ImportError:
    pass  # dotenv is optional

console = Console()

OUTPUT_DIR_ENV = "HJB_OUTPUT_DIR"
LOG_LEVEL_ENV = "HJB_LOG_LEVEL"

REQUIRED_PACKAGES = ["numpy", "scipy", "rich"]


def check_python_version() -> bool:
    """Check if Python version is compatible"""
    major, minor = sys.version_info[:2]
    if major < 3 or (major == 3 and minor < 9):
        console.print("[red]Error: hjb-verify requires Python 3.9 or higher[/red]")
        return False
    return True


def check_dependencies() -> List[str]:
    """Check if all required dependencies are installed"""
    missing_dependencies = []
    for package in REQUIRED_PACKAGES:
        try:
            __import__(package)
        except ImportError:
            missing_dependencies.append(package)
    return missing_dependencies


def setup_logging(level: Optional[str] = None) -> logging.Logger:
    """Attach a rich handler to the package logger (idempotent)"""
    level_name = (level or os.environ.get(LOG_LEVEL_ENV, "INFO")).upper()
    logger = logging.getLogger("hjb_verify")
    logger.setLevel(getattr(logging, level_name, logging.INFO))
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=console, show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
    logger.propagate = False
    return logger


def _get_config_dir() -> Path:
    """Per-platform configuration directory for hjb-verify"""
    if sys.platform == "win32":
        config_dir = Path(os.environ.get("APPDATA", "")) / "hjb-verify"
    elif sys.platform == "darwin":
        config_dir = Path.home() / "Library" / "Application Support" / "hjb-verify"
    else:  # Linux and other Unix-like systems
        config_dir = Path.home() / ".config" / "hjb-verify"
    return config_dir


def resolve_output_dir(configured: Optional[str] = None) -> Path:
    """Environment override first, then the configured directory, then the per-user default"""
    override = os.environ.get(OUTPUT_DIR_ENV)
    if override:
        path = Path(override)
    elif configured:
        path = Path(configured)
    else:
        path = _get_config_dir() / "runs"
    path.mkdir(parents=True, exist_ok=True)
    return path


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays (and nested containers) to plain JSON types"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        # JSON has no inf/nan
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    """Write a JSON document with stable key order"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(to_jsonable(payload), f, indent=2, sort_keys=True)
    return path


def read_json(path: Path) -> Dict[str, Any]:
    with open(path, "r") as f:
        return json.load(f)


def display_metrics(title: str, metrics: Dict[str, Any]) -> None:
    """Render a flat metrics dict as a rich table"""
    table = Table(title=title)
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green")
    for key, value in metrics.items():
        if isinstance(value, float):
            text = f"{value:.6g}"
        elif isinstance(value, (list, dict)):
            continue
        else:
            text = str(value)
        table.add_row(key, text)
    console.print(table)
