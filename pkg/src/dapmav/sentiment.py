"""Lexicon valence scoring and the positional emotional arc.

Every lexicon-matched token carries one unit of mass spread uniformly over
its normalised position interval. The arc at ``x`` is the mean valence of
these tokens weighted by the Gaussian kernel (bandwidth ``h``) averaged over
each token's interval; ``support`` is the summed weight. As ``h`` grows the
arc flattens to the plain mean over matched tokens.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from collections.abc import Mapping
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import DataError

log = logging.getLogger(__name__)

DEFAULT_GRID = 101
DEFAULT_BANDWIDTH = 0.05


class Lexicon(Mapping):
    """Read-only ``word -> valence`` map with 0 as neutral."""

    def __init__(self, scores: Mapping[str, float], source: str = "<memory>"):
        clean = {}
        for w, s in scores.items():
            s = float(s)
            if not math.isfinite(s):
                raise DataError(f"{source}: non-finite score for {w!r}")
            clean[str(w).lower()] = s
        self._scores = clean
        self.source = source

    def __getitem__(self, word):
        return self._scores[word]

    def __iter__(self):
        return iter(self._scores)

    def __len__(self):
        return len(self._scores)

    @property
    def min(self) -> float:
        return min(self._scores.values())

    @property
    def max(self) -> float:
        return max(self._scores.values())


def load_lexicon(path=None) -> Lexicon:
    """Parse a ``word<TAB>score`` file; ``None`` loads the bundled demo lexicon.

    A first line whose score does not parse is taken as a header. Blank lines
    and ``#`` comments are ignored. Later duplicates override earlier ones
    with a warning.
    """
    if path is None:
        ref = resources.files("dapmav") / "data" / "demo_lexicon.tsv"
        text, source = ref.read_text(encoding="utf-8"), "demo lexicon"
    else:
        try:
            text, source = Path(path).read_text(encoding="utf-8"), str(path)
        except OSError as exc:
            raise DataError(f"cannot read lexicon {path}: {exc}") from exc
    scores: dict[str, float] = {}
    first = True
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.rstrip("\n\r").split("\t")
        if len(parts) < 2:
            raise DataError(f"{source}:{lineno}: expected 'word<TAB>score', got {line!r}")
        word, raw = parts[0].strip().lower(), parts[1].strip()
        try:
            score = float(raw)
        except ValueError:
            if first:
                first = False
                continue
            raise DataError(f"{source}:{lineno}: unparsable score {raw!r}") from None
        first = False
        if not math.isfinite(score):
            raise DataError(f"{source}:{lineno}: non-finite score {raw!r}")
        if word in scores:
            warnings.warn(f"{source}:{lineno}: duplicate entry {word!r}, keeping the last",
                          stacklevel=2)
        scores[word] = score
    if not scores:
        raise DataError(f"{source}: lexicon is empty")
    return Lexicon(scores, source)


def _surfaces(tokens) -> list[str]:
    if hasattr(tokens, "words"):
        return list(tokens.words)
    return [t if isinstance(t, str) else t.surface for t in tokens]


def score_document(tokens, lexicon: Mapping[str, float]) -> float | None:
    """Mean valence of the matched tokens, or ``None`` when nothing matches."""
    vals = [lexicon[w] for w in _surfaces(tokens) if w in lexicon]
    if not vals:
        return None
    return math.fsum(vals) / len(vals)


@dataclass(frozen=True, eq=False)
class EmotionalArc:
    grid: np.ndarray
    mean_valence: np.ndarray
    support: np.ndarray
    bandwidth: float
    n_matched: int

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["position", "mean_valence", "support"])
            for x, v, s in zip(self.grid, self.mean_valence, self.support):
                w.writerow([repr(float(x)), repr(float(v)), repr(float(s))])


def read_arc_csv(path, bandwidth: float = float("nan")) -> EmotionalArc:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["position", "mean_valence", "support"]:
            raise DataError(f"{path}: expected header position,mean_valence,support")
        rows = [tuple(map(float, r)) for r in reader]
    if len(rows) < 2:
        raise DataError(f"{path}: an arc needs at least two points")
    x, v, s = (np.array(c) for c in zip(*rows))
    return EmotionalArc(x, v, s, bandwidth, 0)


def _matched(corpus: Iterable, lexicon) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    starts, ends, vals = [], [], []
    for doc in corpus:
        words = _surfaces(doc)
        n = len(words)
        for i, w in enumerate(words):
            v = lexicon.get(w)
            if v is not None:
                starts.append(i / n)
                ends.append((i + 1) / n)
                vals.append(v)
    return np.array(starts), np.array(ends), np.array(vals, dtype=float)


def emotional_arc(corpus: Sequence, lexicon: Mapping[str, float], grid: int = DEFAULT_GRID,
                  bandwidth: float = DEFAULT_BANDWIDTH, chunk: int = 65536) -> EmotionalArc:
    if grid < 2:
        raise ValueError(f"grid must have at least 2 points, got {grid}")
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    a, b, v = _matched(corpus, lexicon)
    if len(v) == 0:
        raise DataError("no token of the corpus is in the lexicon; cannot build an arc")
    x = np.linspace(0.0, 1.0, grid)
    num = np.zeros(grid)
    den = np.zeros(grid)
    for lo in range(0, len(v), chunk):
        sa, sb, sv = a[lo:lo + chunk], b[lo:lo + chunk], v[lo:lo + chunk]
        # kernel mass over the token interval, per unit of interval width
        w = (ndtr((sb[None, :] - x[:, None]) / bandwidth)
             - ndtr((sa[None, :] - x[:, None]) / bandwidth)) / (sb - sa)[None, :]
        num += w @ sv
        den += w.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(den > 0, num / den, np.nan)
    if np.isnan(mean).any():
        log.warning("arc undefined at %d grid points (no kernel support)", int(np.isnan(mean).sum()))
    lo_v, hi_v = v.min(), v.max()
    mean = np.where(np.isnan(mean), mean, np.clip(mean, lo_v, hi_v))
    return EmotionalArc(x, mean, den, float(bandwidth), int(len(v)))


__all__ = ["Lexicon", "load_lexicon", "score_document", "EmotionalArc", "emotional_arc", "read_arc_csv",
           "DEFAULT_GRID", "DEFAULT_BANDWIDTH"]
