import math
from collections import Counter

import numpy as np
import pytest

from dapmav.errors import DataError
from dapmav.preprocess import Document, Vocabulary, reindex
from dapmav.topic_model import (BipartiteGraph, FitConfig, NestedPartition, NestedState,
                                PartitionError, build_bipartite_graph, description_length,
                                doc_topic_counts, document_topic_mixture, fit_nested_partition,
                                token_topics, topic_densities, topic_word_distribution)

from oracles import hierarchy_dl, planted_corpus, random_small_graph


def corpus_of(*docs):
    corpus = [Document(doc_id=f"d{i}", kind="submission", tokens=reindex(d.split()))
              for i, d in enumerate(docs)]
    return corpus, Vocabulary.from_corpus(corpus)


def graph_from_matrix(e):
    """``e`` is words x docs."""
    e = np.asarray(e)
    edges = [(d, w, int(e[w, d])) for w in range(e.shape[0]) for d in range(e.shape[1])]
    return BipartiteGraph.from_edges(e.shape[1], e.shape[0], edges)


def planted_graph(seed=0):
    docs, truth = planted_corpus(seed)
    counts = [Counter(d) for d in docs]
    edges = [(d, w, c) for d, cnt in enumerate(counts) for w, c in cnt.items()]
    return BipartiteGraph.from_edges(len(docs), len(truth), edges), truth


# -- graph ------------------------------------------------------------------------------

def test_graph_counts_multiplicities():
    corpus, vocab = corpus_of("a b a")
    g = build_bipartite_graph(corpus, vocab)
    edges = {(int(d), vocab.word(int(w))): int(c) for d, w, c in zip(g.edge_doc, g.edge_word, g.edge_count)}
    assert edges == {(0, "a"): 2, (0, "b"): 1}
    assert g.n_edges == 3 and g.n_nodes == 3


def test_graph_components():
    corpus, vocab = corpus_of("a b", "c d")
    assert build_bipartite_graph(corpus, vocab).n_components() == 2


def test_graph_conserves_tokens():
    corpus, vocab = corpus_of("a b c a", "b b", "c a d", "d d d a", "e a")
    g = build_bipartite_graph(corpus, vocab)
    assert g.n_edges == sum(len(d) for d in corpus)
    assert g.doc_lengths.tolist() == [len(d) for d in corpus]
    assert g.word_degrees.tolist() == list(vocab.counts)


def test_graph_empty_corpus_is_fatal():
    with pytest.raises(DataError):
        build_bipartite_graph([], Vocabulary((), ()))


# -- description length ---------------------------------------------------------------------

def test_dl_golden_null_model():
    # Doc "a b a": words a (degree 2), b (degree 1); one doc (degree 3); everything
    # in one word group and one doc group.
    #   likelihood: ln 3! + ln 3! - ln 3! - (ln 2! + ln 1! + ln 3!) + ln 2! = 0
    #   degree prior: ln multiset(2, 3) + ln multiset(1, 3) = ln C(4, 3) + ln C(3, 3) = ln 4
    #   partition prior: words ln C(1, 0) + ln 2! - ln 2! + ln 2 = ln 2; docs 0
    corpus, vocab = corpus_of("a b a")
    g = build_bipartite_graph(corpus, vocab)
    total, terms = description_length(g, [[0, 0, 1]], terms=True)
    assert total == pytest.approx(math.log(8), abs=1e-12)
    assert terms["likelihood"] == pytest.approx(0.0, abs=1e-12)
    assert terms["degree"] == pytest.approx(math.log(4), abs=1e-12)
    assert terms["partition"] == [pytest.approx(math.log(2), abs=1e-12)]
    assert terms["edges"] == []


def test_dl_golden_two_levels():
    # Docs "a a" and "b": level 0 separates everything, level 1 is the top.
    #   likelihood at level 0 is 0 (every group holds one node)
    #   degree prior: two words and two docs alone in their groups, each ln C(k, k) = 0
    #   level-0 prior: words ln C(1,1) + ln 2! - 0 + ln 2 = 2 ln 2, docs the same
    #   level-1 prior: 2 word groups -> 1, ln C(1,0) + ln 2! - ln 2! + ln 2 = ln 2, docs the same
    #   edges: one block pair with n = 2*2 = 4, e = 3 -> ln C(6, 3) = ln 20
    e = [[2, 0], [0, 1]]
    g = graph_from_matrix(e)
    got = description_length(g, [[0, 1, 2, 3], [0, 0, 1, 1]])
    assert got == pytest.approx(4 * math.log(2) + 2 * math.log(2) + math.log(20), abs=1e-12)


def test_dl_matches_independent_evaluator():
    rng = np.random.default_rng(5)
    for _ in range(50):
        e = random_small_graph(rng)
        g = graph_from_matrix(e)
        nw, nd = e.shape
        bw = rng.integers(0, 3, nw)
        bd = rng.integers(0, 3, nd) + 3
        up = np.array([0, 0, 1, 2, 2, 3])  # three word groups -> 2, three doc groups -> 2
        levels = [np.concatenate([bw, bd]), up, np.array([0, 0, 1, 1])]
        assert description_length(g, levels) == pytest.approx(hierarchy_dl(e, levels), abs=1e-9)


def test_dl_relabel_invariance():
    g, _ = planted_graph(1)
    rng = np.random.default_rng(0)
    b0 = np.concatenate([rng.integers(0, 4, g.n_words), 4 + rng.integers(0, 3, g.n_docs)])
    levels = [b0, np.array([0, 0, 1, 1, 2, 2, 3]), np.array([0, 0, 1, 1])]
    base = description_length(g, levels)
    perm = np.array([2, 0, 3, 1, 6, 4, 5])  # within-type permutation of level-0 groups
    relabelled = [perm[b0], np.empty(7, dtype=int), levels[2]]
    relabelled[1][perm] = levels[1]
    assert description_length(g, relabelled) == pytest.approx(base, abs=1e-9)


def test_planted_split_beats_merged():
    g, truth = planted_graph(0)
    docs_truth = np.arange(g.n_docs) % 2
    split = [np.concatenate([truth, 2 + docs_truth]), np.array([0, 0, 1, 1])]
    merged = [np.concatenate([np.zeros(g.n_words, int), np.ones(g.n_docs, int)])]
    assert description_length(g, split) < description_length(g, merged)


@pytest.mark.parametrize("levels, why", [
    ([[0, 0, 0]], "mixes"),
    ([[0, 1, 2]], "top level"),
    ([[0, 0]], "labels for"),
    ([[0, 1, 2], [0, 0]], "cover"),
    ([[0, 0, -1]], "non-negative"),
])
def test_invalid_partitions_are_fatal(levels, why):
    corpus, vocab = corpus_of("a b a")
    g = build_bipartite_graph(corpus, vocab)
    with pytest.raises(PartitionError, match=why):
        description_length(g, levels)


# -- incremental state -------------------------------------------------------------------------

def _random_state(seed):
    g, _ = planted_graph(seed)
    rng = np.random.default_rng(seed)
    b0 = np.concatenate([rng.integers(0, 5, g.n_words), 5 + rng.integers(0, 4, g.n_docs)])
    levels = [b0, np.array([0, 0, 1, 1, 1, 2, 2, 3, 3]), np.array([0, 0, 1, 1])]
    return g, NestedState(g, levels), rng


def _random_move(state, rng):
    l = int(rng.integers(0, state.L))
    nodes = state.level_nodes(l)
    v = nodes[int(rng.integers(len(nodes)))]
    t = state.node_kind(l, v)
    groups = [h for h in range(len(state.n[l])) if state.gtype[l][h] == t]
    if rng.random() < 0.05:
        if l < state.L - 1:
            uppers = [h for h in range(len(state.n[l + 1])) if state.gtype[l + 1][h] == t]
            upper = uppers[int(rng.integers(len(uppers)))]
        else:
            upper = next(h for h in range(len(state.n[l + 1])) if state.gtype[l + 1][h] == t)
        return l, v, state.new_group(l, t, upper)
    return l, v, groups[int(rng.integers(len(groups)))]


def test_incremental_dl_matches_scratch_over_1000_moves():
    g, state, rng = _random_state(3)
    assert state.dl() == pytest.approx(description_length(g, state.levels()), abs=1e-9)
    worst = 0.0
    for _ in range(1000):
        l, v, s = _random_move(state, rng)
        before = state.dl()
        delta = state.move_delta(l, v, s)
        assert state.dl() == before  # move_delta leaves the state untouched
        state.move(l, v, s)
        scratch = description_length(g, state.levels())
        worst = max(worst, abs(state.dl() - scratch), abs((scratch - before) - delta))
    assert worst < 1e-9


def test_merge_delta_matches_scratch():
    g, state, rng = _random_state(4)
    for _ in range(40):
        l = int(rng.integers(0, state.L))
        t = int(rng.integers(2))
        live = sorted(state.nonempty[l][t])
        if len(live) < 2:
            continue
        r, s = rng.choice(live, 2, replace=False)
        before = description_length(g, state.levels())
        delta = state.merge_delta(l, int(r), int(s))
        state.merge(l, int(r), int(s))
        assert description_length(g, state.levels()) - before == pytest.approx(delta, abs=1e-9)


# -- fitting -----------------------------------------------------------------------------------

def _check_structure(part: NestedPartition, graph):
    description_length(graph, part.levels)  # validates bipartite, nesting and top
    assert part.n_topics(part.n_levels - 1) == 1
    for l in range(part.n_levels - 1):
        lower, upper = part.word_groups(l), part.word_groups(l + 1)
        for t in np.unique(lower):
            assert len(np.unique(upper[lower == t])) == 1  # monotone coarsening
    assert part.description_length == pytest.approx(description_length(graph, part.levels), abs=1e-9)


def test_fit_structure_on_random_graphs():
    rng = np.random.default_rng(11)
    for _ in range(10):
        g = graph_from_matrix(random_small_graph(rng))
        _check_structure(fit_nested_partition(g, FitConfig(seed=1, n_restarts=2)), g)


def test_fit_planted_structure_and_recovery():
    g, truth = planted_graph(2)
    part = fit_nested_partition(g, FitConfig(seed=0, n_restarts=3))
    _check_structure(part, g)
    wg = part.word_groups(0)
    assert part.n_topics(0) == 2
    assert all(len(np.unique(wg[truth == t])) == 1 for t in (0, 1))


def test_fit_never_worse_than_trivial():
    g, _ = planted_graph(5)
    part = fit_nested_partition(g, FitConfig(seed=3, n_restarts=1, max_sweeps=2))
    trivial = [np.concatenate([np.zeros(g.n_words, int), np.ones(g.n_docs, int)])]
    assert part.description_length <= description_length(g, trivial) + 1e-9


def test_fit_is_deterministic():
    g, _ = planted_graph(7)
    cfg = FitConfig(seed=42, n_restarts=2)
    a, b = fit_nested_partition(g, cfg), fit_nested_partition(g, cfg)
    assert a.description_length == b.description_length
    assert all(np.array_equal(x, y) for x, y in zip(a.levels, b.levels))
    assert a.to_dict() == b.to_dict()


def test_parallel_restarts_match_serial():
    g, _ = planted_graph(8)
    a = fit_nested_partition(g, FitConfig(seed=4, n_restarts=2, n_jobs=1))
    b = fit_nested_partition(g, FitConfig(seed=4, n_restarts=2, n_jobs=2))
    assert a.to_dict()["levels"] == b.to_dict()["levels"]
    assert a.description_length == b.description_length


def test_fit_rejects_empty_graph():
    with pytest.raises(ValueError):
        fit_nested_partition(BipartiteGraph.from_edges(1, 1, []))


# -- topic quantities -----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def fitted():
    corpus, vocab = corpus_of("a a a b x y", "a b b x y y", "x y x y a b", "c c d c d", "d c d d c c")
    g = build_bipartite_graph(corpus, vocab)
    return corpus, vocab, g, fit_nested_partition(g, FitConfig(seed=0, n_restarts=2))


def _manual(levels, g):
    return NestedPartition.from_levels(g, levels, description_length(g, levels))


def test_word_distribution_counting():
    corpus, vocab = corpus_of("a a a b", "c")
    g = build_bipartite_graph(corpus, vocab)
    # topics: {a, b} and {c}; docs split the same way
    part = _manual([[0, 0, 1, 2, 3], [0, 0, 1, 1]], g)
    p = topic_word_distribution(part, 0, 0)
    assert p.tolist() == [0.75, 0.25, 0.0]
    assert topic_word_distribution(part, 0, 1).tolist() == [0.0, 0.0, 1.0]
    with pytest.raises(DataError):
        topic_word_distribution(part, 0, 2)


def test_densities_counting():
    corpus, vocab = corpus_of(" ".join(["a"] * 30), " ".join(["b"] * 70))
    g = build_bipartite_graph(corpus, vocab)
    part = _manual([[0, 1, 2, 3], [0, 0, 1, 1]], g)
    assert topic_densities(part, 0).tolist() == pytest.approx([0.3, 0.7], abs=1e-15)
    assert topic_densities(part, 1).tolist() == [1.0]


def test_mixtures(fitted):
    corpus, vocab = corpus_of("a a b b")
    g = build_bipartite_graph(corpus, vocab)
    part = _manual([[0, 1, 2], [0, 0, 1]], g)
    assert document_topic_mixture(g, part, 0, 0).tolist() == [0.5, 0.5]
    assert document_topic_mixture(g, part, 1, 0).tolist() == [1.0]
    with pytest.raises(DataError):
        document_topic_mixture(g, part, 0, 3)


def test_length_weighted_mixtures_equal_densities(fitted):
    corpus, vocab, g, part = fitted
    for l in range(part.n_levels):
        mix = np.array([document_topic_mixture(g, part, l, d) for d in range(g.n_docs)])
        weighted = (mix * g.doc_lengths[:, None]).sum(0) / g.doc_lengths.sum()
        assert weighted == pytest.approx(topic_densities(part, l), abs=1e-12)
        assert doc_topic_counts(g, part, l).sum(0) / g.n_edges == pytest.approx(topic_densities(part, l))


def test_token_topics_follow_word_groups(fitted):
    corpus, vocab, g, part = fitted
    tt = token_topics(part, 0, vocab, corpus)
    wg = part.word_groups(0)
    assert [len(t) for t in tt] == [len(d) for d in corpus]
    assert tt[0] == [int(wg[vocab.id(w)]) for w in corpus[0].words]


def test_model_json_round_trip(tmp_path, fitted):
    *_, part = fitted
    part.save(tmp_path / "m.json")
    back = NestedPartition.load(tmp_path / "m.json")
    assert back.to_dict() == part.to_dict()
    back.save(tmp_path / "n.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "n.json").read_bytes()


def test_hierarchy_tree(fitted):
    corpus, vocab, g, part = fitted
    tree = part.hierarchy()
    assert tree["size"] == g.n_edges

    def leaves(node):
        if "children" not in node:
            return [node]
        assert node["size"] == sum(c["size"] for c in node["children"])
        return [x for c in node["children"] for x in leaves(c)]

    got = {leaf["name"]: leaf["size"] for leaf in leaves(tree)}
    assert got == {w: vocab.count(w) for w in vocab.words}
