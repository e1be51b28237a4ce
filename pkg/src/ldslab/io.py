"""File formats: mixture/model JSON, trajectory JSONL, CSV/JSON reports.

All writes are atomic (temp file in the target directory, then rename).
Floating-point values are emitted with 17 significant digits, which
round-trips IEEE doubles exactly, so re-reading a file reproduces the
in-memory objects bit for bit.

Model/mixture file (UTF-8 JSON)::

    {"m": 2, "n": 2, "p": 2, "k": 2,
     "weights": [0.5, 0.5],
     "components": [{"a": [[...]], "b": [[...]], "c": [[...]], "d": [[...]]}, ...]}

Dataset file (JSON Lines), one trajectory per line, 0-based time::

    {"label": 0, "u": [[...], ...], "y": [[...], ...]}

``label`` is null for unlabelled data.
"""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import DataError
from .lds import LdsParams, MixtureSpec, Trajectory

__all__ = [
    "dumps_json",
    "atomic_write_text",
    "save_mixture",
    "load_mixture",
    "save_dataset",
    "load_dataset",
    "save_report",
]


def _format_float(x: float) -> str:
    if not np.isfinite(x):
        raise DataError(f"cannot serialize non-finite value {x!r}")
    return format(float(x), ".17g")


def dumps_json(obj, indent: int = 0, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits.

    Supports the JSON subset used by this package (dict/list/str/num/
    bool/None plus numpy scalars and arrays).
    """
    pad = "\n" + " " * (indent * (_level + 1)) if indent else ""
    end = "\n" + " " * (indent * _level) if indent else ""
    sep = "," + (pad if indent else " ")
    if isinstance(obj, dict):
        items = sep.join(
            f"{json.dumps(str(key))}: {dumps_json(val, indent, _level + 1)}"
            for key, val in obj.items()
        )
        return "{" + pad + items + end + "}" if obj else "{}"
    if isinstance(obj, (list, tuple)):
        items = sep.join(dumps_json(val, indent, _level + 1) for val in obj)
        return "[" + pad + items + end + "]" if len(obj) else "[]"
    if isinstance(obj, np.ndarray):
        return dumps_json(obj.tolist(), indent, _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise DataError(f"cannot serialize object of type {type(obj)!r}")


def atomic_write_text(path: str, text: str) -> None:
    """Write text to ``path`` via a temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def mixture_to_dict(model) -> dict:
    """Mixture (or anything with weights/components) as a plain dict."""
    components = [
        {"a": c.a, "b": c.b, "c": c.c, "d": c.d} for c in model.components
    ]
    m, n, p = model.components[0].dims
    return {
        "m": m,
        "n": n,
        "p": p,
        "k": len(model.components),
        "weights": list(np.asarray(model.weights, dtype=float)),
        "components": components,
    }


def save_mixture(path: str, model) -> None:
    atomic_write_text(path, dumps_json(mixture_to_dict(model), indent=2) + "\n")


def load_mixture(path: str) -> MixtureSpec:
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.load(handle)
    try:
        components = tuple(
            LdsParams(a=c["a"], b=c["b"], c=c["c"], d=c["d"])
            for c in raw["components"]
        )
        weights = np.asarray(raw["weights"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed mixture file {path}: {exc}") from exc
    mix = MixtureSpec(components=components, weights=weights)
    declared = (raw.get("m"), raw.get("n"), raw.get("p"))
    if None not in declared and tuple(declared) != mix.dims:
        raise DataError(
            f"mixture file {path} declares dims {declared}, matrices have {mix.dims}"
        )
    return mix


def save_dataset(path: str, dataset) -> None:
    lines = []
    for traj in dataset:
        label = "null" if traj.label is None else str(int(traj.label))
        u = ",".join(
            "[" + ",".join(_format_float(v) for v in row) + "]" for row in traj.u
        )
        y = ",".join(
            "[" + ",".join(_format_float(v) for v in row) + "]" for row in traj.y
        )
        lines.append(f'{{"label": {label}, "u": [{u}], "y": [{y}]}}')
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_dataset(path: str) -> list:
    dataset = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                traj = Trajectory(
                    u=np.asarray(raw["u"], dtype=float),
                    y=np.asarray(raw["y"], dtype=float),
                    label=None if raw.get("label") is None else int(raw["label"]),
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed trajectory: {exc}") from exc
            dataset.append(traj)
    if not dataset:
        raise DataError(f"dataset file {path} is empty")
    return dataset


def save_report(path_base: str, header, rows) -> None:
    """Write a CSV and its JSON mirror (path_base + '.csv' / '.json')."""
    header = list(header)
    csv_lines = [",".join(header)]
    for row in rows:
        cells = []
        for value in row:
            if isinstance(value, (float, np.floating)):
                cells.append(_format_float(value))
            else:
                cells.append(str(value))
        csv_lines.append(",".join(cells))
    atomic_write_text(path_base + ".csv", "\n".join(csv_lines) + "\n")
    mirror = [dict(zip(header, row)) for row in rows]
    atomic_write_text(path_base + ".json", dumps_json(mirror, indent=2) + "\n")
