"""Two-dimensional topic layouts and word-cloud selections.

``classical_mds`` is the deterministic default. ``sne_layout`` is a
t-distributed neighbour embedding that emphasises local structure; it uses
plain gradient descent with backtracking so every accepted step lowers the
KL divergence.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True, eq=False)
class LayoutCoords:
    ids: tuple[int, ...]
    coords: np.ndarray  # T x dims, centred
    stress: float
    method: str = "mds"
    kl_history: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if not np.isfinite(self.coords).all():
            raise DataError("layout has non-finite coordinates")

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["topic_id", "x", "y"])
            for t, (x, y) in zip(self.ids, self.coords[:, :2]):
                w.writerow([t, repr(float(x)), repr(float(y))])


def _check_dissimilarity(d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"dissimilarity must be square, got shape {d.shape}")
    if not np.isfinite(d).all():
        raise ValueError("dissimilarity contains non-finite entries")
    scale = max(1.0, float(np.abs(d).max())) if d.size else 1.0
    if not np.allclose(d, d.T, rtol=0, atol=1e-12 * scale):
        raise ValueError("dissimilarity must be symmetric")
    if (d < -1e-12 * scale).any():
        raise ValueError("dissimilarity must be non-negative")
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _fix_signs(x: np.ndarray) -> np.ndarray:
    for j in range(x.shape[1]):
        i = int(np.argmax(np.abs(x[:, j])))
        if x[i, j] < 0:
            x[:, j] = -x[:, j]
    return x


def kruskal_stress(d: np.ndarray, x: np.ndarray) -> float:
    """Stress-1: residual of embedded distances relative to the input."""
    iu = np.triu_indices(len(d), 1)
    if not len(iu[0]):
        return 0.0
    delta = d[iu]
    emb = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))[iu]
    den = (delta ** 2).sum()
    return 0.0 if den == 0 else float(math.sqrt(((emb - delta) ** 2).sum() / den))


def classical_mds(dissimilarity, dims: int = 2, ids: Sequence[int] | None = None) -> LayoutCoords:
    """Torgerson scaling: eigenvectors of the double-centred ``-D^2 / 2``.

    Axes with non-positive eigenvalues collapse to zero. Each axis is flipped
    so its largest-magnitude coordinate is positive.
    """
    d = _check_dissimilarity(dissimilarity)
    n = len(d)
    ids = tuple(range(n)) if ids is None else tuple(int(i) for i in ids)
    if n == 0:
        return LayoutCoords(ids, np.zeros((0, dims)), 0.0)
    j = np.eye(n) - 1.0 / n
    b = -0.5 * j @ (d ** 2) @ j
    vals, vecs = np.linalg.eigh((b + b.T) / 2)
    order = np.argsort(vals)[::-1][:dims]
    x = np.zeros((n, dims))
    for k, i in enumerate(order):
        if vals[i] > 1e-12 * max(1.0, abs(vals).max()):
            x[:, k] = vecs[:, i] * math.sqrt(vals[i])
    x -= x.mean(axis=0)
    x = _fix_signs(x)
    return LayoutCoords(ids, x, kruskal_stress(d, x), "mds")


# -- neighbour embedding ------------------------------------------------------------

def _affinities(d2: np.ndarray, perplexity: float, tol: float = 1e-10, max_iter: int = 200):
    """Symmetric input affinities whose rows match ``perplexity``."""
    n = len(d2)
    target = math.log(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d2[i], i)
        lo, hi, beta = 0.0, math.inf, 1.0
        for _ in range(max_iter):
            w = np.exp(-(row - row.min()) * beta)
            s = w.sum()
            q = w / s
            h = -(q[q > 0] * np.log(q[q > 0])).sum()
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2 if hi == math.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (beta + lo) / 2
        p[i, np.arange(n) != i] = q
    p = (p + p.T) / (2 * n)
    return np.maximum(p, 1e-300)


def _kl_and_grad(p: np.ndarray, y: np.ndarray):
    diff = y[:, None, :] - y[None, :, :]
    num = 1.0 / (1.0 + (diff ** 2).sum(-1))
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), 1e-300)
    mask = ~np.eye(len(p), dtype=bool)
    kl = float((p[mask] * np.log(p[mask] / q[mask])).sum())
    grad = 4 * (((p - q) * num)[:, :, None] * diff).sum(axis=1)
    return kl, grad


def sne_layout(dissimilarity, perplexity: float = 3.0, iterations: int = 1000, seed: int = 0,
               ids: Sequence[int] | None = None, learning_rate: float = 10.0,
               checkpoint_every: int = 10) -> LayoutCoords:
    """t-SNE style embedding in two dimensions.

    Deterministic for a fixed seed. ``kl_history`` records ``(iteration, KL)``
    at every checkpoint and is non-increasing.
    """
    d = _check_dissimilarity(dissimilarity)
    n = len(d)
    if n < 4:
        raise ValueError(f"neighbour embedding needs at least 4 topics, got {n}")
    if not 1 <= perplexity < n:
        raise ValueError(f"perplexity must lie in [1, {n}), got {perplexity}")
    ids = tuple(range(n)) if ids is None else tuple(int(i) for i in ids)
    scale = d[~np.eye(n, dtype=bool)].max()
    d2 = (d / scale) ** 2 if scale > 0 else d ** 2
    p = _affinities(d2, perplexity)

    rng = np.random.default_rng(seed)
    y = rng.normal(scale=1e-2, size=(n, 2))
    kl, grad = _kl_and_grad(p, y)
    step = learning_rate
    history = [(0, kl)]
    for it in range(1, iterations + 1):
        while True:
            trial = y - step * grad
            if not np.isfinite(trial).all():
                raise DataError(f"neighbour embedding diverged at iteration {it}")
            new_kl, new_grad = _kl_and_grad(p, trial)
            if not math.isfinite(new_kl):
                raise DataError(f"neighbour embedding diverged at iteration {it}")
            if new_kl <= kl or step < 1e-12:
                break
            step /= 2
        if new_kl <= kl:
            y, kl, grad = trial, new_kl, new_grad
            step *= 1.2
        if it % checkpoint_every == 0 or it == iterations:
            history.append((it, kl))
        if float(np.abs(grad).max()) < 1e-9:
            history.append((it, kl))
            break
    y = y - y.mean(axis=0)
    y = _fix_signs(y)
    return LayoutCoords(ids, y, kruskal_stress(d, y), "sne", tuple(history))


# -- word clouds -------------------------------------------------------------------

@dataclass(frozen=True)
class WordCloudSpec:
    words: tuple[tuple[str, float], ...]
    top_k: int
    topic: int | None = None
    level: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ws = [w for _, w in self.words]
        if any(a < b for a, b in zip(ws, ws[1:])):
            raise ValueError("word cloud weights must be descending")
        if any(not 0 <= w <= 1 for w in ws):
            raise ValueError("word cloud weights must lie in [0, 1]")


def wordcloud_data(distribution: Mapping[str, float] | np.ndarray, top_k: int,
                   words: Sequence[str] | None = None, topic: int | None = None,
                   level: int | None = None) -> WordCloudSpec:
    """The ``top_k`` most probable words, ties in lexicographic order.

    ``distribution`` is either a ``word -> probability`` map or an array over
    ``words``. Words with probability zero are left out. Weights are the
    input probabilities unchanged.
    """
    if not isinstance(top_k, (int, np.integer)) or top_k < 1:
        raise ValueError(f"top_k must be a positive integer, got {top_k!r}")
    if isinstance(distribution, Mapping):
        items = [(str(w), float(p)) for w, p in distribution.items()]
    else:
        probs = np.asarray(distribution, dtype=float)
        if words is None or len(words) != len(probs):
            raise ValueError("an array distribution needs a matching word list")
        items = list(zip(map(str, words), probs.tolist()))
    for w, p in items:
        if not (math.isfinite(p) and 0 <= p <= 1 + 1e-12):
            raise ValueError(f"probability of {w!r} is {p}, not in [0, 1]")
    items = [(w, min(p, 1.0)) for w, p in items if p > 0]
    items.sort(key=lambda wp: (-wp[1], wp[0]))
    return WordCloudSpec(tuple(items[:top_k]), int(top_k), topic, level)


__all__ = ["LayoutCoords", "classical_mds", "sne_layout", "kruskal_stress",
           "WordCloudSpec", "wordcloud_data"]
