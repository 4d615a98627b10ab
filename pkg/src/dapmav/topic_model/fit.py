"""Inference of the nested partition by description-length minimisation.

One restart builds the hierarchy bottom-up. Each level starts from
singleton groups, is reduced by greedy agglomerative merges and polished
with single-node sweeps; a new level is then stacked on its groups until a
level collapses to one group per node type. Finally every level is swept
again against the full nested objective. The best of ``n_restarts``
independent restarts wins.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .dl import description_length
from .graph import BipartiteGraph
from .partition import NestedPartition
from .state import NestedState

_EPS = 1e-10


@dataclass(frozen=True)
class FitConfig:
    seed: int = 0
    n_restarts: int = 10
    max_sweeps: int = 50
    move_tolerance: float = 0.001
    beta_schedule: tuple[float, ...] = ()
    max_candidates: int = 24
    n_jobs: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta_schedule"] = list(self.beta_schedule)
        return d


def _top(types) -> np.ndarray:
    return np.asarray(types, dtype=np.int64).copy()


def _candidates(state: NestedState, l: int, row: dict, exclude: int, t: int,
                rng: np.random.Generator, limit: int) -> list[int]:
    """Same-type groups reachable in two steps through ``row``, best connected first."""
    pool = state.nonempty[l][t]
    if len(pool) <= limit + 1:
        return sorted(g for g in pool if g != exclude)
    score: dict[int, float] = {}
    e = state.e[l]
    for u, m in row.items():
        eu = e[u]
        tot = sum(eu.values())
        for g, c in eu.items():
            if g != exclude:
                score[g] = score.get(g, 0.0) + m * c / tot
    ranked = sorted(score, key=lambda g: (-score[g], g))[:limit]
    others = sorted(pool - set(ranked) - {exclude})
    if others:
        extra = rng.choice(len(others), size=min(2, len(others)), replace=False)
        ranked += [others[i] for i in extra]
    return sorted(ranked)


def _best_merges(state: NestedState, l: int, rng: np.random.Generator, limit: int):
    proposals = []
    groups = sorted(state.nonempty[l][0] | state.nonempty[l][1])
    for r in rng.permutation(groups).tolist():
        t = state.gtype[l][r]
        best, best_c = math.inf, None
        for c in _candidates(state, l, state.e[l][r], r, t, rng, limit):
            d = state.merge_delta(l, r, c)
            if d < best - _EPS or (best_c is not None and abs(d - best) <= _EPS and c < best_c):
                best, best_c = d, c
        if best_c is not None:
            proposals.append((best, min(r, best_c), max(r, best_c)))
    proposals.sort()
    return proposals


def agglomerate(state: NestedState, l: int, rng: np.random.Generator, limit: int
                ) -> tuple[NestedState, int]:
    """Merge level-``l`` groups all the way down to one group per node type.

    Rounds apply every non-conflicting improving merge; once none improves,
    the cheapest tenth of the proposals is forced through so the search can
    cross barriers. The lowest description length seen along the way is
    restored and returned with the number of merges it took to reach it.
    """
    snapshot = list(state.b[l])
    best_dl = state.dl()
    best_count = count = 0
    while not _collapsed(state, l):
        proposals = _best_merges(state, l, rng, limit)
        if not proposals:
            break
        improving = [p for p in proposals if p[0] < -_EPS]
        quota = len(improving) or max(1, len(proposals) // 10)
        used, merged = set(), 0
        for _, r, c in proposals:
            if merged >= quota:
                break
            if r in used or c in used or not state.n[l][r] or not state.n[l][c]:
                continue
            if improving and state.merge_delta(l, r, c) >= -_EPS:
                continue
            state.merge(l, r, c)
            used.update((r, c))
            merged += 1
        if not merged:
            break
        count += merged
        dl = state.dl()
        if dl < best_dl - _EPS:
            best_dl, best_count, snapshot = dl, count, list(state.b[l])
    if list(state.b[l]) != snapshot:
        levels = [list(b) for b in state.b]
        levels[l] = snapshot
        state = NestedState(state.graph, levels)
    return state, best_count


def _spare(state: NestedState, l: int, t: int, upper, cache: dict) -> int:
    g = cache.get((l, t))
    if g is None or state.n[l][g]:
        g = state.new_group(l, t, upper)
        cache[(l, t)] = g
    elif l < state.L and state.b[l + 1][g] != upper:
        state.set_upper(l, g, upper)
    return g


def sweep(state: NestedState, l: int, rng: np.random.Generator, limit: int,
          beta: float | None = None) -> int:
    """One pass over the level-``l`` nodes in random order; returns moves made.

    With ``beta=None`` each node goes to its best candidate group if that
    lowers the description length (ties to the lower group id). Otherwise
    one random candidate is proposed and accepted with probability
    ``min(1, exp(-beta * delta))``.
    """
    moved = 0
    spares: dict = {}
    for v in rng.permutation(state.level_nodes(l)).tolist():
        r = state.b[l][v]
        t = state.node_kind(l, v)
        vec = state.node_vector(l, v)
        row = vec if vec else state.e[l][r]
        cands = _candidates(state, l, row, r, t, rng, limit)
        if state.n[l][r] > 1:
            upper = state.b[l + 1][r] if l < state.L else None
            cands.append(_spare(state, l, t, upper, spares))
        if not cands:
            continue
        if beta is None:
            best, best_s = -_EPS, None
            for s in cands:
                d = state.move_delta(l, v, s, vec)
                if d < best - _EPS:
                    best, best_s = d, s
            if best_s is not None:
                state.move(l, v, best_s, vec)
                moved += 1
        else:
            s = cands[rng.integers(len(cands))]
            d = state.move_delta(l, v, s, vec)
            if d <= 0 or rng.random() < math.exp(-beta * d):
                state.move(l, v, s, vec)
                moved += 1
    return moved


def _sweep_until_stable(state, levels, rng, config, betas=()):
    n_nodes = sum(len(state.level_nodes(l)) for l in levels)
    for beta in betas:
        for l in levels:
            sweep(state, l, rng, config.max_candidates, beta)
    for _ in range(config.max_sweeps):
        moved = sum(sweep(state, l, rng, config.max_candidates) for l in levels)
        if moved <= config.move_tolerance * n_nodes:
            break


def _collapsed(state: NestedState, l: int) -> bool:
    return all(state.B[l][t] <= 1 for t in (0, 1))


def _fit_once(graph: BipartiteGraph, seed_seq, config: FitConfig):
    rng = np.random.default_rng(seed_seq)
    types = graph.node_types
    limit = config.max_candidates

    state = NestedState(graph, [np.arange(graph.n_nodes), _top(types)])
    state, _ = agglomerate(state, 0, rng, limit)
    _sweep_until_stable(state, [0], rng, config, config.beta_schedule)
    levels = state.levels()
    if _collapsed(state, 0):
        levels = levels[:1]

    while len(levels) > 1:
        below = levels[-2]
        top = levels[-1]
        n_below = int(below.max()) + 1
        trial = levels[:-1] + [np.arange(n_below), top]
        state = NestedState(graph, trial)
        L = len(trial) - 2
        state, merges = agglomerate(state, L, rng, limit)
        if not merges:
            break
        _sweep_until_stable(state, [L], rng, config)
        if _collapsed(state, L):
            break
        levels = state.levels()

    if len(levels) > 1:
        state = NestedState(graph, levels)
        _sweep_until_stable(state, list(range(state.L)), rng, config, config.beta_schedule)
        levels = simplify(graph, state.levels())
    return prune_levels(graph, levels)


def prune_levels(graph: BipartiteGraph, levels: list[np.ndarray]) -> tuple[list[np.ndarray], float]:
    """Greedily delete whole levels while that lowers the description length.

    Deleting level ``j`` replaces it by its composition with level ``j + 1``;
    deleting the last non-top level collapses the model onto the trivial
    one-group-per-type partition.
    """
    levels = list(levels)
    dl = description_length(graph, levels)
    while len(levels) > 1:
        best = None
        for j in range(len(levels) - 1):
            trial = levels[:j] + [levels[j + 1][levels[j]]] + levels[j + 2:]
            d = description_length(graph, trial)
            if d < dl - _EPS and (best is None or d < best[0] - _EPS):
                best = (d, trial)
        if best is None:
            break
        dl, levels = best
    return levels, dl


def simplify(graph: BipartiteGraph, levels: list[np.ndarray]) -> list[np.ndarray]:
    """Drop identity levels and levels stacked above a collapsed one.

    Neither kind can lower the description length.
    """
    out = [levels[0]]
    gt = _group_types(graph.node_types, levels[0])
    pending = None
    for b in levels[1:]:
        if _is_top(gt):
            break
        if pending is not None:
            b = b[pending]
        if len(np.unique(b)) == len(b):
            pending = b
            continue
        pending = None
        out.append(b)
        gt = _group_types(gt, b)
    return out


def _is_top(gtypes: np.ndarray) -> bool:
    return all((gtypes == t).sum() <= 1 for t in (0, 1))


def _group_types(node_types: np.ndarray, b: np.ndarray) -> np.ndarray:
    gt = np.full(int(b.max()) + 1, -1, dtype=np.int64)
    gt[b] = node_types[:len(b)]
    return gt


def fit_nested_partition(graph: BipartiteGraph, config: FitConfig | None = None) -> NestedPartition:
    """Lowest description-length nested partition over ``config.n_restarts`` restarts.

    Restart seeds are spawned from ``config.seed``, so results do not depend
    on ``n_jobs``.
    """
    config = config or FitConfig()
    if graph.n_edges == 0:
        raise ValueError("cannot fit a graph without edges")
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_restarts)
    if config.n_jobs > 1 and config.n_restarts > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            results = list(pool.map(_fit_once, [graph] * len(seeds), seeds,
                                    [config] * len(seeds)))
    else:
        results = [_fit_once(graph, s, config) for s in seeds]
    best = min(range(len(results)), key=lambda i: (results[i][1], i))
    levels, dl = results[best]
    return NestedPartition.from_levels(graph, levels, dl, config=config.to_dict())
