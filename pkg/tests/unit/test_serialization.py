import json
import math

import numpy as np
import pandas as pd
import pytest

from app.serialization import dumps_json, rounded, sig9, write_csv, write_json


def test_sig9_rounds_to_nine_significant_digits():
    assert sig9(1.23456789012) == 1.23456789
    assert sig9(0.000123456789012) == 0.000123456789
    assert sig9(42) == 42.0


def test_sig9_passes_non_finite_through():
    assert math.isinf(sig9(float("inf")))
    assert math.isnan(sig9(float("nan")))


def test_rounded_converts_numpy_and_non_finite_values():
    data = {
        "a": np.float64(1.0000000001),
        "b": np.int64(3),
        "c": np.array([0.1, 0.2]),
        "d": float("inf"),
        "e": np.bool_(True),
        "f": (1, "x"),
    }
    out = rounded(data)
    assert out == {"a": 1.0, "b": 3, "c": [0.1, 0.2], "d": None, "e": True, "f": [1, "x"]}
    assert isinstance(out["e"], bool)


def test_rounded_rejects_unknown_types():
    with pytest.raises(TypeError):
        rounded({"x": object()})


def test_dumps_json_is_indented_with_trailing_newline():
    text = dumps_json({"b": 1.5, "a": [1, 2]})
    assert text.endswith("\n")
    assert text.startswith('{\n  "b": 1.5')
    assert json.loads(text) == {"b": 1.5, "a": [1, 2]}


def test_write_json_and_csv_are_reproducible(tmp_path):
    frame = pd.DataFrame({"t_ms": [0, 17], "w": [1 / 3, 2 / 3]})
    first = write_csv(frame, tmp_path / "a.csv").read_bytes()
    second = write_csv(frame, tmp_path / "b.csv").read_bytes()
    assert first == second
    assert first == b"t_ms,w\n0,0.333333333\n17,0.666666667\n"

    path = write_json({"x": 1 / 3}, tmp_path / "x.json")
    assert path.read_text(encoding="utf-8") == '{\n  "x": 0.333333333\n}\n'
