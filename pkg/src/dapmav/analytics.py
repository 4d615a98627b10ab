"""Positional structure of topics and topic-topic interaction.

Positions are normalised per document: token ``i`` of an ``n``-token
document occupies ``[i/n, (i+1)/n)``. A positional density ``p(x | t)`` is the
total occupancy of topic ``t`` at ``x`` across documents divided by the
topic's total occupancy, ``sum_d |{x : t_x^d = t}|``. It is piecewise constant
on ``G`` equal bins and is computed exactly from integer interval overlaps,
so each density integrates to one up to floating-point rounding.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DataError

DEFAULT_GRID = 200


class PositionInterval(NamedTuple):
    start: float
    end: float

    @property
    def width(self) -> float:
        return self.end - self.start


def normalized_positions(document) -> list[PositionInterval]:
    """Interval occupied by each token of ``document`` (a Document or a sequence)."""
    n = len(document)
    if n == 0:
        raise DataError("cannot position the tokens of an empty document")
    return [PositionInterval(i / n, (i + 1) / n) for i in range(n)]


@dataclass(frozen=True, eq=False)
class PositionalDensity:
    topic: int
    values: np.ndarray  # one value per bin

    @property
    def grid(self) -> int:
        return len(self.values)

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.grid + 1) / self.grid

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.grid) + 0.5) / self.grid

    def integral(self) -> float:
        return float(math.fsum(self.values.tolist()) / self.grid)

    def cdf(self) -> np.ndarray:
        """Cumulative mass at each bin edge."""
        return np.concatenate([[0.0], np.cumsum(self.values) / self.grid])

    def median(self) -> float:
        """Position where the cumulative mass first reaches one half."""
        c = self.cdf()
        k = int(np.searchsorted(c, 0.5 - 1e-12, side="left"))
        if k == 0:
            return 0.0
        k -= 1  # the half-mass point lies inside bin k
        v = self.values[k]
        frac = 0.0 if v == 0 else (0.5 - c[k]) * self.grid / v
        return float((k + min(max(frac, 0.0), 1.0)) / self.grid)

    def __call__(self, x: float) -> float:
        k = min(int(x * self.grid), self.grid - 1)
        return float(self.values[k])


def _occupancy(token_topics: Sequence[Sequence[int]], n_topics: int, grid: int):
    """Per-bin occupancy (in bin widths) and total occupancy per topic."""
    occ = np.zeros((grid, n_topics))
    total = np.zeros(n_topics)
    k = np.arange(grid + 1)
    for seq in token_topics:
        n = len(seq)
        if n == 0:
            continue
        seq = np.asarray(seq, dtype=np.int64)
        onehot = np.zeros((n + 1, n_topics), dtype=np.int64)
        np.add.at(onehot, (np.arange(n), seq), 1)
        cum = np.zeros((n + 1, n_topics), dtype=np.int64)
        cum[1:] = np.cumsum(onehot[:-1], axis=0)
        # occupancy up to edge k/G in units of 1/(nG): whole tokens plus a partial one
        j, rem = np.divmod(k * n, grid)
        F = cum[j] * grid + onehot[j] * rem[:, None]
        occ += np.diff(F, axis=0) / n
        total += np.bincount(seq, minlength=n_topics) / n
    return occ, total


def positional_densities(token_topics: Sequence[Sequence[int]], topics: Iterable[int] | None = None,
                         grid: int = DEFAULT_GRID) -> dict[int, PositionalDensity]:
    """``p(x | t)`` for each requested topic (default: every topic that occurs).

    ``token_topics`` holds, per document, the topic id of each token in order.
    """
    if grid < 1:
        raise ValueError("grid must have at least one bin")
    seen = {int(t) for seq in token_topics for t in seq}
    if not seen:
        raise DataError("no tokens to position")
    if any(t < 0 for t in seen):
        raise DataError("topic ids must be non-negative")
    wanted = sorted(seen) if topics is None else [int(t) for t in topics]
    missing = [t for t in wanted if t not in seen]
    if missing:
        raise DataError(f"topic(s) {missing} never occur in the corpus")
    occ, total = _occupancy(token_topics, max(seen) + 1, grid)
    return {t: PositionalDensity(t, occ[:, t] / total[t]) for t in wanted}


def positional_density(token_topics: Sequence[Sequence[int]], topic: int,
                       grid: int = DEFAULT_GRID) -> PositionalDensity:
    return positional_densities(token_topics, [topic], grid)[topic]


def stack_order(densities: Mapping[int, PositionalDensity] | Iterable[PositionalDensity]) -> list[int]:
    """Topics sorted by median position, ties by topic id."""
    items = densities.values() if isinstance(densities, Mapping) else densities
    return [d.topic for d in sorted(items, key=lambda d: (round(d.median(), 12), d.topic))]


# -- topic interaction ----------------------------------------------------------

def cooccurrence_from_counts(doc_topic: np.ndarray) -> np.ndarray:
    """``C[t, u]`` proportional to ``sum_d n_dt n_du``, normalised to sum to one."""
    n = np.asarray(doc_topic, dtype=float)
    c = n.T @ n
    s = c.sum()
    if s == 0:
        raise DataError("no tokens to co-occur")
    c = c / s
    return (c + c.T) / 2


def cooccurrence_matrix(partition, graph, level: int) -> np.ndarray:
    """Two-step topic interaction: topics to documents and back to topics."""
    from .topic_model import doc_topic_counts

    return cooccurrence_from_counts(doc_topic_counts(graph, partition, level))


def _check_square(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12):
        raise ValueError(f"{what} must be symmetric")
    return m


def dissimilarity(cooc: np.ndarray) -> np.ndarray:
    """``max(C) - C`` with a zero diagonal."""
    c = _check_square(cooc, "co-occurrence matrix")
    d = c.max() - c if c.size else c.copy()
    np.fill_diagonal(d, 0.0)
    return d


# -- segmentation ---------------------------------------------------------------

class Segment(NamedTuple):
    start: float
    end: float
    label: str


def dominant_topic_segments(densities: Mapping[int, PositionalDensity],
                            labels: Mapping[int, str] | None = None) -> list[Segment]:
    """Split ``[0, 1]`` by which label group has the highest summed density.

    Topics without a label form their own group named by their id. At a tie
    the lexicographically first label wins.
    """
    if not densities:
        raise DataError("no densities to segment")
    labels = labels or {}
    grids = {d.grid for d in densities.values()}
    if len(grids) != 1:
        raise DataError("densities are on different grids")
    grid = grids.pop()
    groups: dict[str, np.ndarray] = {}
    for t in sorted(densities):
        lab = str(labels.get(t, t))
        groups[lab] = groups.get(lab, 0) + densities[t].values
    names = sorted(groups)
    stack = np.stack([groups[n] for n in names])
    winner = np.argmax(stack >= stack.max(axis=0) - 1e-12, axis=0)  # first of the tied maxima
    segments = []
    start = 0
    for k in range(1, grid + 1):
        if k == grid or winner[k] != winner[start]:
            segments.append(Segment(start / grid, k / grid, names[winner[start]]))
            start = k
    return segments


# -- files ----------------------------------------------------------------------

def read_labels(path) -> dict[int, str]:
    """Labels CSV with header ``topic_id,label``."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read labels file {path}: {exc}") from exc
    out: dict[int, str] = {}
    with fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or {"topic_id", "label"} - set(reader.fieldnames):
            raise DataError(f"{path}: expected header 'topic_id,label'")
        for lineno, row in enumerate(reader, start=2):
            tid = (row["topic_id"] or "").strip()
            if not tid or tid.startswith("#"):
                continue
            if row["label"] is None or not row["label"].strip():
                raise DataError(f"{path}:{lineno}: topic {tid} has no label")
            try:
                out[int(tid)] = row["label"].strip()
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad topic id {tid!r}") from exc
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def write_densities_csv(densities: Mapping[int, PositionalDensity], path) -> None:
    """Long format: ``topic_id,bin_start,bin_end,density`` for every bin."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["topic_id", "bin_start", "bin_end", "density"])
        for t in sorted(densities):
            d = densities[t]
            e = d.edges
            for k, v in enumerate(d.values):
                w.writerow([t, _fmt(e[k]), _fmt(e[k + 1]), _fmt(v)])


def write_matrix_csv(matrix: np.ndarray, path, ids: Sequence[int] | None = None) -> None:
    """Square matrix with a ``topic_id`` header row and column."""
    m = np.asarray(matrix)
    ids = list(range(len(m))) if ids is None else list(ids)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["topic_id", *ids])
        for t, row in zip(ids, m):
            w.writerow([t, *map(_fmt, row)])


def write_segments_csv(segments: Sequence[Segment], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start", "end", "label"])
        for s in segments:
            w.writerow([_fmt(s.start), _fmt(s.end), s.label])


def _rows(path, header: list[str]):
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got is None or got[:len(header)] != header:
            raise DataError(f"{path}: expected header {','.join(header)}")
        yield from reader


def read_densities_csv(path) -> dict[int, PositionalDensity]:
    vals: dict[int, list[float]] = {}
    for row in _rows(path, ["topic_id", "bin_start", "bin_end", "density"]):
        vals.setdefault(int(row[0]), []).append(float(row[3]))
    return {t: PositionalDensity(t, np.array(v)) for t, v in vals.items()}


def read_matrix_csv(path) -> tuple[list[int], np.ndarray]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["topic_id"]:
        raise DataError(f"{path}: expected a topic_id header")
    ids = [int(x) for x in rows[0][1:]]
    m = np.array([[float(x) for x in r[1:]] for r in rows[1:]]).reshape(len(ids), len(ids))
    return ids, m


def read_segments_csv(path) -> list[Segment]:
    return [Segment(float(a), float(b), lab) for a, b, lab in _rows(path, ["start", "end", "label"])]


__all__ = [
    "read_densities_csv", "read_matrix_csv", "read_segments_csv",
    "PositionInterval", "PositionalDensity", "Segment", "DEFAULT_GRID",
    "normalized_positions", "positional_density", "positional_densities", "stack_order",
    "cooccurrence_from_counts", "cooccurrence_matrix", "dissimilarity",
    "dominant_topic_segments", "read_labels", "write_densities_csv", "write_matrix_csv",
    "write_segments_csv",
]
