"""Text formats for graphs, labelings, JSON records and CSV tables."""

from __future__ import annotations

import csv
import json
import math
import re
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

import numpy as np

from .defaults import FLOAT_DIGITS
from .errors import ValidationError
from .graph_model import Graph, Labeling

# json writes floats with repr; full-precision numbers go through a marked string.
_FLOAT_MARK = "__float17__:"
_FLOAT_TOKEN = re.compile(rf'"{_FLOAT_MARK}([^"]+)"')


def format_float(value: float) -> str:
    """Render a float with full precision (17 significant digits)."""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, f".{FLOAT_DIGITS}g")


def graph_to_text(graph: Graph) -> str:
    """
    Serialize a graph.

    The first line is ``"n m"``, followed by ``m`` lines ``"i j"`` with 1-based
    endpoints, ``i < j``, sorted lexicographically.
    """
    edges = graph.edges()
    lines = [f"{graph.n} {len(edges)}"]
    lines.extend(f"{i + 1} {j + 1}" for i, j in edges)
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> Graph:
    """Parse the format written by :func:`graph_to_text`."""
    lines = [line.split() for line in text.splitlines() if line.strip()]
    if not lines or len(lines[0]) != 2:
        raise ValidationError("graph text must start with a line 'n m'")
    try:
        n, m = map(int, lines[0])
        edges = [(int(i) - 1, int(j) - 1) for i, j in lines[1:]]
    except ValueError as exc:
        raise ValidationError(f"malformed graph text: {exc}") from exc
    if len(edges) != m:
        raise ValidationError(f"graph header declares {m} edges, found {len(edges)}")
    if any(i >= j for i, j in edges):
        raise ValidationError("graph edges must be written as 'i j' with i < j")
    graph = Graph.from_edges(n, edges)
    if graph.edge_count != m:
        raise ValidationError("graph text repeats an edge")
    return graph


def labeling_to_text(sigma: Labeling) -> str:
    """One line of space-separated labels in ``1..K``."""
    return f"{sigma}\n"


def labeling_from_text(text: str, k: int) -> Labeling:
    """Parse one line of labels in ``1..k``."""
    try:
        return Labeling(tuple(int(x) for x in text.split()), k)
    except ValueError as exc:
        raise ValidationError(f"malformed labeling text: {exc}") from exc


def read_graph(path: Path) -> Graph:
    """Read a graph file."""
    return graph_from_text(Path(path).read_text())


def write_graph(graph: Graph, path: Path) -> None:
    """Write a graph file."""
    Path(path).write_text(graph_to_text(graph))


def read_labeling(path: Path, k: int) -> Labeling:
    """Read a labeling file."""
    return labeling_from_text(Path(path).read_text(), k)


def write_labeling(sigma: Labeling, path: Path) -> None:
    """Write a labeling file."""
    Path(path).write_text(labeling_to_text(sigma))


def _jsonable(value):
    if isinstance(value, Labeling):
        return list(value.assignments)
    if isinstance(value, Graph):
        return {"n": value.n, "edges": [[i + 1, j + 1] for i, j in value.edges()]}
    if isinstance(value, (np.generic, np.ndarray)):
        return _jsonable(value.tolist())
    if isinstance(value, Mapping):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, float):
        if not math.isfinite(value):
            return format_float(value)
        return f"{_FLOAT_MARK}{format_float(value)}"
    return value


def dumps(record) -> str:
    """
    Canonical JSON: sorted keys, two-space indent, trailing newline.

    Finite floats are written as bare numbers with 17 significant digits;
    non-finite ones as the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    text = json.dumps(_jsonable(record), sort_keys=True, indent=2)
    return _FLOAT_TOKEN.sub(r"\1", text) + "\n"


def write_json(record, path: Path) -> None:
    """Write ``record`` as canonical JSON."""
    Path(path).write_text(dumps(record))


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return str(value)


def write_csv(rows: Iterable[Mapping], columns: Sequence[str], path: Path) -> None:
    """Write rows with exactly ``columns`` as header, floats at full precision."""
    with open(path, "w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[column]) for column in columns])
