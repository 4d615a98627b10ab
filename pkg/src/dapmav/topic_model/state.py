"""Mutable nested block state with exact incremental description-length updates.

The terms of the description length (see :mod:`.dl`) are local: each one
depends on a single group, a single pair of groups, or the group counts of
one level and node type. Moving a node from group ``r`` to ``s`` at level
``l`` only touches the rows, sizes and level counts along the two ancestor
chains of ``r`` and ``s``. ``move_delta`` evaluates exactly those terms
before and after applying the move and then undoes it.
"""

from __future__ import annotations

import math
from math import lgamma, log

import numpy as np

from .graph import BipartiteGraph


def _lbinom(n, k):
    return lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1)


def _lmultiset(n, k):
    if k == 0:
        return 0.0
    return lgamma(n + k) - lgamma(k + 1) - lgamma(n)


class NestedState:
    def __init__(self, graph: BipartiteGraph, levels):
        self.graph = graph
        self.adj = graph.adjacency()
        self.k = graph.degrees.tolist()
        self.node_type = graph.node_types.tolist()
        self.type_count = [self.node_type.count(0), self.node_type.count(1)]
        self._const = math.fsum(lgamma(float(c) + 1) for c in graph.edge_count.tolist()) \
            - math.fsum(lgamma(float(d) + 1) for d in self.k)

        self.b = [list(map(int, lv)) for lv in levels]
        self.L = len(self.b) - 1
        self.gtype, self.n, self.e, self.members, self.B, self.nonempty = [], [], [], [], [], []
        node_types = self.node_type
        alive = [True] * len(node_types)
        for l, b in enumerate(self.b):
            if l < self.L:
                size = len(self.b[l + 1])
            else:
                size = max(b) + 1
            gtype = [-1] * size
            n = [0] * size
            members = [set() for _ in range(size)]
            for v, g in enumerate(b[:len(node_types)]):
                members[g].add(v)
                if not alive[v]:
                    continue
                if gtype[g] == -1:
                    gtype[g] = node_types[v]
                elif gtype[g] != node_types[v]:
                    raise ValueError(f"level {l} group {g} mixes node types")
                n[g] += 1
            for v, g in enumerate(b[:len(node_types)]):
                if gtype[g] == -1:
                    gtype[g] = node_types[v]
            e = [dict() for _ in range(size)]
            if l == 0:
                deg = [0] * size
                for v, g in enumerate(b):
                    deg[g] += self.k[v]
                    if node_types[v] == 0:
                        row = e[g]
                        for u, m in self.adj[v]:
                            h = b[u]
                            row[h] = row.get(h, 0) + m
                self.deg = deg
            else:
                lower = self.e[l - 1]
                for g, row in enumerate(lower):
                    if self.gtype[l - 1][g] != 0:
                        continue
                    R = b[g]
                    up = e[R]
                    for t, m in row.items():
                        S = b[t]
                        up[S] = up.get(S, 0) + m
            # mirror word rows into doc rows
            for g in range(size):
                if gtype[g] == 0:
                    for t, m in e[g].items():
                        e[t][g] = m
            self.gtype.append(gtype)
            self.n.append(n)
            self.e.append(e)
            self.members.append(members)
            self.B.append([sum(1 for g in range(size) if n[g] and gtype[g] == t) for t in (0, 1)])
            self.nonempty.append([{g for g in range(size) if n[g] and gtype[g] == t} for t in (0, 1)])
            node_types = gtype
            alive = [c > 0 for c in n]

    # -- bookkeeping ---------------------------------------------------------

    def n_nodes(self, l: int) -> int:
        return len(self.b[l]) if l else len(self.node_type)

    def node_alive(self, l: int, v: int) -> bool:
        return l == 0 or self.n[l - 1][v] > 0

    def node_kind(self, l: int, v: int) -> int:
        return self.node_type[v] if l == 0 else self.gtype[l - 1][v]

    def level_nodes(self, l: int) -> list[int]:
        if l == 0:
            return list(range(len(self.node_type)))
        return [v for v, c in enumerate(self.n[l - 1]) if c > 0]

    def N(self, l: int, t: int) -> int:
        return self.type_count[t] if l == 0 else self.B[l - 1][t]

    def new_group(self, l: int, t: int, upper: int | None = None) -> int:
        """Append an empty group of type ``t`` at level ``l``."""
        g = len(self.n[l])
        self.n[l].append(0)
        self.gtype[l].append(t)
        self.e[l].append({})
        self.members[l].append(set())
        if l == 0:
            self.deg.append(0)
        if l < self.L:
            if upper is None:
                raise ValueError("a new non-top group needs an upper group")
            self.b[l + 1].append(upper)
            self.members[l + 1][upper].add(g)
        return g

    def set_upper(self, l: int, g: int, upper: int) -> None:
        """Re-parent an *empty* group ``g`` of level ``l``."""
        assert self.n[l][g] == 0
        old = self.b[l + 1][g]
        self.members[l + 1][old].discard(g)
        self.members[l + 1][upper].add(g)
        self.b[l + 1][g] = upper

    # -- description length terms --------------------------------------------

    def _row_term(self, l, g):
        row = self.e[l][g]
        if l == 0:
            return -math.fsum(lgamma(c + 1) for c in row.values())
        ng = self.n[l][g]
        nl = self.n[l]
        return math.fsum(_lmultiset(ng * nl[t], c) for t, c in row.items())

    def _group_term(self, l, g):
        ng = self.n[l][g]
        s = -lgamma(ng + 1)
        if l == 0:
            eg = self.deg[g]
            s += lgamma(eg + 1) + _lmultiset(ng, eg)
        return s

    def _level_term(self, l, t):
        N, B = self.N(l, t), self.B[l][t]
        if N == 0:
            return 0.0
        return _lbinom(N - 1, B - 1) + lgamma(N + 1) + log(N)

    def dl(self) -> float:
        """Full description length recomputed from the maintained tables."""
        terms = [self._const]
        for l in range(self.L + 1):
            for t in (0, 1):
                terms.append(self._level_term(l, t))
            for g in range(len(self.n[l])):
                if self.n[l][g] or (l == 0 and self.deg[g]):
                    terms.append(self._group_term(l, g))
                if self.gtype[l][g] == 0:
                    terms.append(self._row_term(l, g))
        return math.fsum(terms)

    def _chain(self, l, r, s):
        chain = []
        while True:
            chain.append((l, r, s))
            if l == self.L:
                return chain
            r, s = self.b[l + 1][r], self.b[l + 1][s]
            l += 1

    def _local(self, chain, t):
        terms = []
        for l, r, s in chain:
            terms.append(self._level_term(l, t))
            for g in ((r,) if r == s else (r, s)):
                terms.append(self._group_term(l, g))
                terms.append(self._row_term(l, g))
        return math.fsum(terms)

    # -- moves -----------------------------------------------------------------

    def _shift(self, l, r, s, vec, dr, ds, kdeg):
        """Transfer edge vector ``vec`` and ``dr``/``ds`` node counts from r to s."""
        while True:
            e = self.e[l]
            if r != s and vec:
                er, es = e[r], e[s]
                for t, m in vec.items():
                    c = er[t] - m
                    et = e[t]
                    if c:
                        er[t] = c
                        et[r] = c
                    else:
                        del er[t]
                        del et[r]
                    c = es.get(t, 0) + m
                    es[t] = c
                    et[s] = c
                if l == 0:
                    self.deg[r] -= kdeg
                    self.deg[s] += kdeg
            n = self.n[l]
            t = self.gtype[l][r]
            nr0, ns0 = n[r], n[s]
            n[r] -= dr
            n[s] += ds
            emptied = nr0 > 0 and n[r] == 0
            created = ns0 == 0 and n[s] > 0
            if emptied:
                self.B[l][t] -= 1
                self.nonempty[l][t].discard(r)
            if created:
                self.B[l][t] += 1
                self.nonempty[l][t].add(s)
            if l == self.L:
                return
            bu = self.b[l + 1]
            R, S = bu[r], bu[s]
            if R == S:
                if not (emptied or created):
                    return
                vec = None
            elif vec:
                up = {}
                for g, m in vec.items():
                    G = bu[g]
                    up[G] = up.get(G, 0) + m
                vec = up
            r, s, dr, ds = R, S, int(emptied), int(created)
            l += 1

    def node_vector(self, l, v) -> dict:
        """Edges of level-``l`` node ``v`` aggregated by the groups of its neighbours."""
        vec = {}
        if l == 0:
            b = self.b[0]
            for u, m in self.adj[v]:
                g = b[u]
                vec[g] = vec.get(g, 0) + m
        else:
            b = self.b[l]
            for u, m in self.e[l - 1][v].items():
                g = b[u]
                vec[g] = vec.get(g, 0) + m
        return vec

    def move(self, l, v, s, vec=None):
        r = self.b[l][v]
        if r == s:
            return
        if vec is None:
            vec = self.node_vector(l, v)
        alive = 1 if self.node_alive(l, v) else 0
        self._shift(l, r, s, vec, alive, alive, self.k[v] if l == 0 else 0)
        self.b[l][v] = s
        self.members[l][r].discard(v)
        self.members[l][s].add(v)

    def move_delta(self, l, v, s, vec=None) -> float:
        r = self.b[l][v]
        if r == s:
            return 0.0
        if vec is None:
            vec = self.node_vector(l, v)
        chain = self._chain(l, r, s)
        t = self.gtype[l][r]
        before = self._local(chain, t)
        self.move(l, v, s, vec)
        after = self._local(chain, t)
        self.move(l, v, r, vec)
        return after - before

    def merge(self, l, r, s):
        """Move every member of group ``r`` into ``s`` at level ``l``."""
        if r == s:
            return
        self._shift(l, r, s, dict(self.e[l][r]), self.n[l][r], self.n[l][r],
                    self.deg[r] if l == 0 else 0)
        b = self.b[l]
        for v in self.members[l][r]:
            b[v] = s
        self.members[l][s] |= self.members[l][r]
        self.members[l][r] = set()

    def merge_delta(self, l, r, s) -> float:
        if r == s:
            return 0.0
        chain = self._chain(l, r, s)
        t = self.gtype[l][r]
        vec = dict(self.e[l][r])
        nr = self.n[l][r]
        kdeg = self.deg[r] if l == 0 else 0
        before = self._local(chain, t)
        self._shift(l, r, s, vec, nr, nr, kdeg)
        after = self._local(chain, t)
        self._shift(l, s, r, vec, nr, nr, kdeg)
        return after - before

    # -- export ------------------------------------------------------------------

    def levels(self) -> list[np.ndarray]:
        """Compact copy of the stack: dense labels, word groups before doc groups."""
        out = []
        prev_map = None
        for l in range(self.L + 1):
            b = self.b[l]
            if prev_map is None:
                nodes = list(range(len(self.node_type)))
                labels = [b[v] for v in nodes]
            else:
                nodes = sorted(prev_map, key=prev_map.get)
                labels = [b[v] for v in nodes]
            order = {}
            for t in (0, 1):
                for v, g in zip(nodes, labels):
                    if self.gtype[l][g] == t and g not in order:
                        order[g] = len(order)
            out.append(np.array([order[g] for g in labels], dtype=np.int64))
            prev_map = order
        return out
