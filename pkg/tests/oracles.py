"""Independent reference computations used by the tests.

Nothing here imports the code under test, apart from data containers.
"""

from __future__ import annotations

import math
from functools import lru_cache
from math import lgamma, log

import numpy as np


def set_partitions(n: int):
    """All set partitions of ``range(n)`` as restricted growth strings."""
    if n == 0:
        yield ()
        return

    def rec(prefix, m):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for g in range(m + 1):
            yield from rec(prefix + [g], max(m, g + 1))

    yield from rec([0], 1)


def _lmultiset(n, k):
    return 0.0 if k == 0 else lgamma(n + k) - lgamma(k + 1) - lgamma(n)


def _part_prior(sizes):
    sizes = [s for s in sizes if s]
    if not sizes:
        return 0.0
    N, B = sum(sizes), len(sizes)
    return (lgamma(N) - lgamma(B) - lgamma(N - B + 1) + lgamma(N + 1)
            - sum(lgamma(s + 1) for s in sizes) + log(N))


def _block(e, bw, bd):
    """Aggregate a word x doc count matrix by word labels ``bw`` and doc labels ``bd``."""
    nw, nd = max(bw) + 1, max(bd) + 1
    out = [[0] * nd for _ in range(nw)]
    for i, row in enumerate(e):
        for j, c in enumerate(row):
            out[bw[i]][bd[j]] += c
    return tuple(tuple(r) for r in out)


@lru_cache(maxsize=None)
def upper_cost(e: tuple) -> tuple[float, tuple]:
    """Cheapest nested hierarchy above a block multigraph ``e`` (words x docs).

    Returns the cost and the sequence of (word labels, doc labels) coarsenings.
    """
    nw, nd = len(e), len(e[0])
    if nw <= 1 and nd <= 1:
        return 0.0, ()
    best = (math.inf, ())
    for bw in set_partitions(nw):
        for bd in set_partitions(nd):
            if max(bw) + 1 == nw and max(bd) + 1 == nd:
                continue  # identity
            sw = np.bincount(bw).tolist()
            sd = np.bincount(bd).tolist()
            up = _block(e, bw, bd)
            cost = _part_prior(sw) + _part_prior(sd)
            cost += sum(_lmultiset(sw[r] * sd[s], up[r][s])
                        for r in range(len(sw)) for s in range(len(sd)))
            rest, chain = upper_cost(up)
            if cost + rest < best[0]:
                best = (cost + rest, ((bw, bd),) + chain)
    return best


def base_cost(e, bw, bd) -> float:
    """Bottom-level likelihood, degree prior and partition prior."""
    kw = [sum(r) for r in e]
    kd = [sum(c) for c in zip(*e)]
    blk = _block(e, bw, bd)
    ew = [sum(r) for r in blk]
    ed = [sum(c) for c in zip(*blk)]
    nw = np.bincount(bw).tolist()
    nd = np.bincount(bd).tolist()
    s = sum(lgamma(x + 1) for x in ew + ed)
    s -= sum(lgamma(x + 1) for r in blk for x in r)
    s -= sum(lgamma(x + 1) for x in kw + kd)
    s += sum(lgamma(x + 1) for r in e for x in r)
    s += sum(_lmultiset(n, k) for n, k in zip(nw + nd, ew + ed))
    return s + _part_prior(nw) + _part_prior(nd)


def _dense(labels):
    uniq = sorted(set(labels))
    pos = {u: i for i, u in enumerate(uniq)}
    return [pos[x] for x in labels], uniq


def hierarchy_dl(e, levels) -> float:
    """Description length of an explicit stack in the package's node numbering.

    Nodes at each level are the non-empty groups of the level below; labels
    may be arbitrary non-negative integers.
    """
    e = [list(r) for r in e]
    nw = len(e)
    lv0 = [int(x) for x in levels[0]]
    bw, uw = _dense(lv0[:nw])
    bd, ud = _dense(lv0[nw:])
    cost = base_cost(e, bw, bd)
    blk = _block(e, bw, bd)
    for lv in levels[1:]:
        cw, uw = _dense([int(lv[g]) for g in uw])
        cd, ud = _dense([int(lv[g]) for g in ud])
        sw = np.bincount(cw).tolist()
        sd = np.bincount(cd).tolist()
        up = _block(blk, cw, cd)
        cost += _part_prior(sw) + _part_prior(sd)
        cost += sum(_lmultiset(sw[r] * sd[s], up[r][s]) for r in range(len(sw)) for s in range(len(sd)))
        blk = up
    return cost


def exhaustive_min_dl(e) -> tuple[float, list]:
    """Global minimum description length over every nested bipartite hierarchy.

    ``e`` is the word x doc count matrix. Returns the minimum and one optimal
    stack expressed in the package's node numbering (words then docs).
    """
    e = [list(r) for r in e]
    nw, nd = len(e), len(e[0])
    best = (math.inf, None)
    for bw in set_partitions(nw):
        for bd in set_partitions(nd):
            blk = _block(e, bw, bd)
            rest, chain = upper_cost(blk)
            total = base_cost(e, bw, bd) + rest
            if total < best[0] - 1e-12:
                best = (total, (bw, bd, chain))
    bw, bd, chain = best[1]
    Bw = max(bw) + 1
    levels = [np.array(list(bw) + [Bw + x for x in bd])]
    for cw, cd in chain:
        Cw = max(cw) + 1
        levels.append(np.array(list(cw) + [Cw + x for x in cd]))
    if len(levels) == 1 and (Bw > 1 or max(bd) > 0):
        raise AssertionError("unreachable: bottom level must be the top")
    return best[0], levels


def nmi(a, b) -> float:
    """Normalised mutual information (arithmetic-mean normalisation)."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = len(a)
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    c = np.zeros((len(ua), len(ub)))
    np.add.at(c, (ia, ib), 1)
    p = c / n
    pa, pb = p.sum(1), p.sum(0)
    nz = p > 0
    mi = (p[nz] * np.log(p[nz] / np.outer(pa, pb)[nz])).sum()
    ha = -(pa * np.log(pa)).sum()
    hb = -(pb * np.log(pb)).sum()
    if ha + hb == 0:
        return 1.0
    return float(2 * mi / (ha + hb))


def procrustes_error(X, Y) -> float:
    """RMS residual after optimal translation + rotation/reflection of Y onto X."""
    X = np.asarray(X, float) - np.mean(X, axis=0)
    Y = np.asarray(Y, float) - np.mean(Y, axis=0)
    if X.shape[1] < Y.shape[1]:
        X = np.hstack([X, np.zeros((len(X), Y.shape[1] - X.shape[1]))])
    if Y.shape[1] < X.shape[1]:
        Y = np.hstack([Y, np.zeros((len(Y), X.shape[1] - Y.shape[1]))])
    u, _, vt = np.linalg.svd(Y.T @ X)
    R = u @ vt
    return float(np.sqrt(np.mean(np.sum((Y @ R - X) ** 2, axis=1))))


def random_small_graph(rng, max_nodes=10):
    """Random word x doc count matrix with every node used at least once."""
    while True:
        nw = int(rng.integers(2, 6))
        nd = int(rng.integers(2, max_nodes - nw + 1)) if max_nodes - nw >= 2 else 2
        nd = min(nd, 5)
        if nw + nd > max_nodes:
            continue
        if rng.random() < 0.5:
            e = rng.integers(0, 4, size=(nw, nd)) * (rng.random((nw, nd)) < 0.55)
        else:
            # two planted blocks with heavy within-block counts
            gw = rng.integers(0, 2, nw)
            gd = rng.integers(0, 2, nd)
            same = gw[:, None] == gd[None, :]
            e = np.where(same, rng.integers(3, 9, size=(nw, nd)), rng.integers(0, 2, size=(nw, nd)))
        if (e.sum(1) > 0).all() and (e.sum(0) > 0).all():
            return e


def planted_corpus(seed, n_topics=2, words_per_topic=20, n_docs=40, doc_len=30):
    """Word-id documents drawn from disjoint vocabularies; returns (docs, word truth)."""
    rng = np.random.default_rng(seed)
    docs = []
    for d in range(n_docs):
        t = d % n_topics
        docs.append((t * words_per_topic + rng.integers(0, words_per_topic, doc_len)).tolist())
    truth = np.repeat(np.arange(n_topics), words_per_topic)
    return docs, truth
