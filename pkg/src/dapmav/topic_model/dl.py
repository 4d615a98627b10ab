r"""Description length of a nested, bipartite, degree-corrected block model.

The model is the microcanonical nested SBM with the bipartite constraint (no
group ever mixes word and document nodes). For a stack of partitions
``b_0 .. b_L``, where ``b_0`` groups the graph nodes, ``b_l`` groups the
level-``(l-1)`` groups and ``b_L`` has one group per node type, the code
length in nats is

.. math::

    \Sigma = S_0 + K_0 + \sum_{l=0}^{L} P_l + \sum_{l=1}^{L} M_l

with

* ``S_0 = sum_r ln e_r! - sum_{r,s} ln e_rs! - sum_i ln k_i! + sum_{ij} ln A_ij!``,
  the degree-corrected multigraph likelihood at the bottom level (pairs
  ``(r, s)`` run over word-group/doc-group pairs);
* ``K_0 = sum_r ln multiset(n_r, e_r)``, a uniform prior on the degree
  sequence inside each bottom group;
* ``P_l = sum_type [ln C(N-1, B-1) + ln N! - sum_r ln n_r! + ln N]``, the
  partition prior at level ``l`` for each node type, with ``N`` the number of
  non-empty nodes at that level and ``B`` the number of non-empty groups;
* ``M_l = sum_{R,S} ln multiset(n_R n_S, e^l_RS)``, the prior of the level
  ``l-1`` block multigraph given the level ``l`` partition.

``multiset(n, k) = C(n + k - 1, k)``. The top block matrix holds only the
(fixed) total edge count and contributes nothing.

This module evaluates the formula from scratch; :mod:`.state` maintains
the same quantity incrementally.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from ..errors import DataError
from .graph import BipartiteGraph


class PartitionError(DataError):
    pass


def lbinom(n, k):
    return gammaln(np.asarray(n) + 1.0) - gammaln(np.asarray(k) + 1.0) - gammaln(np.asarray(n) - np.asarray(k) + 1.0)


def lmultiset(n, k):
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    out = np.where(k > 0, lbinom(np.maximum(n + k - 1, 0), k), 0.0)
    return out


def partition_prior(sizes) -> float:
    sizes = np.asarray([s for s in sizes if s > 0], dtype=float)
    if sizes.size == 0:
        return 0.0
    N, B = sizes.sum(), sizes.size
    return float(lbinom(N - 1, B - 1) + gammaln(N + 1) - gammaln(sizes + 1).sum() + math.log(N))


def _aggregate(src, dst, weights):
    """Sum ``weights`` over unique ``(src, dst)`` label pairs."""
    if len(src) == 0:
        return (np.zeros(0, dtype=np.int64),) * 2 + (np.zeros(0),)
    width = int(max(src.max(), dst.max())) + 1
    key = src.astype(np.int64) * width + dst
    uniq, inv = np.unique(key, return_inverse=True)
    tot = np.bincount(inv, weights=weights)
    return uniq // width, uniq % width, tot


def validate_levels(graph: BipartiteGraph, levels: Sequence) -> list[np.ndarray]:
    """Check the bipartite and nesting invariants; returns int arrays."""
    if not levels:
        raise PartitionError("a partition needs at least one level")
    out = [np.asarray(lv, dtype=np.int64) for lv in levels]
    if len(out[0]) != graph.n_nodes:
        raise PartitionError(f"level 0 has {len(out[0])} labels for {graph.n_nodes} nodes")
    types = graph.node_types
    alive = np.ones(graph.n_nodes, dtype=bool)
    for l, b in enumerate(out):
        if b.ndim != 1 or (b < 0).any():
            raise PartitionError(f"level {l} labels must be a flat non-negative array")
        if l and len(b) < len(types):
            raise PartitionError(f"level {l} does not cover every group of level {l - 1}")
        n_lab = int(b[:len(types)][alive].max()) + 1 if alive.any() else 0
        gtype = np.full(n_lab, -1)
        for t in (0, 1):
            labs = np.unique(b[:len(types)][alive & (types == t)])
            if (gtype[labs] != -1).any():
                raise PartitionError(f"level {l} mixes word and document nodes in one group")
            gtype[labs] = t
        present = np.zeros(n_lab, dtype=bool)
        present[b[:len(types)][alive]] = True
        alive, types = present, gtype
    for t in (0, 1):
        if ((types == t) & alive).sum() > 1:
            raise PartitionError("the top level must hold one group per node type")
    return out


def description_length(graph: BipartiteGraph, levels: Sequence, terms: bool = False):
    """Total description length in nats of ``levels`` on ``graph``.

    With ``terms=True`` a dict of the individual contributions is returned as
    well (``likelihood``, ``degree``, ``partition`` per level, ``edges`` per
    level from 1).
    """
    levels = validate_levels(graph, levels)
    types = graph.node_types
    b = levels[0]
    V = graph.n_words
    k = graph.degrees.astype(float)
    A = graph.edge_count.astype(float)

    r, s, ers = _aggregate(b[graph.edge_word], b[V + graph.edge_doc], A)
    n_lab = int(b.max()) + 1
    er = np.bincount(b, weights=k, minlength=n_lab)
    nr = np.bincount(b, minlength=n_lab)
    likelihood = float(gammaln(er + 1).sum() - gammaln(ers + 1).sum()
                       - gammaln(k + 1).sum() + gammaln(A + 1).sum())
    degree = float(lmultiset(nr, er).sum())

    parts, edges = [], []
    alive = np.ones(len(b), dtype=bool)
    node_types = types
    for l, b in enumerate(levels):
        bl = b[:len(node_types)]
        sizes_by_type = []
        n_lab = int(bl[alive].max()) + 1
        nr = np.bincount(bl[alive], minlength=n_lab)
        gtype = np.full(n_lab, -1)
        gtype[bl[alive]] = node_types[alive]
        for t in (0, 1):
            sizes_by_type.append(partition_prior(nr[gtype == t]))
        parts.append(sum(sizes_by_type))
        if l > 0:
            R, S = b[r], b[s]
            r, s, ers = _aggregate(R, S, ers)
            edges.append(float(lmultiset(nr[r] * nr[s], ers).sum()))
        alive = nr > 0
        node_types = gtype
    total = math.fsum([likelihood, degree] + parts + edges)
    if terms:
        return total, {"likelihood": likelihood, "degree": degree,
                       "partition": parts, "edges": edges}
    return total
