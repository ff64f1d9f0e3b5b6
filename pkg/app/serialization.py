"""Byte-reproducible writers for JSON and CSV artifacts."""

import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

SIGNIFICANT_DIGITS = 9


def sig9(value: float) -> float:
    """Round to 9 significant digits; non-finite values pass through."""
    value = float(value)
    if not math.isfinite(value):
        return value
    return float(format(value, f".{SIGNIFICANT_DIGITS}g"))


def rounded(obj: Any) -> Any:
    """Recursively round every float in a JSON-ready structure; non-finite floats become null."""
    if isinstance(obj, bool | int | str) or obj is None:
        return obj
    if isinstance(obj, float | np.floating):
        return sig9(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return rounded(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): rounded(v) for k, v in obj.items()}
    if isinstance(obj, list | tuple):
        return [rounded(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj: Any) -> str:
    return json.dumps(rounded(obj), indent=2, allow_nan=False) + "\n"


def write_json(obj: Any, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj), encoding="utf-8")
    return path


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, float_format="%.9g", lineterminator="\n")
    return path
