"""Document-word bipartite multigraph."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from ..errors import DataError

WORD, DOC = 0, 1


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Edges ``(doc, word)`` with multiplicity equal to the term count.

    Node numbering used by the block model: words are ``0..V-1`` and documents
    ``V..V+D-1``.
    """

    n_docs: int
    n_words: int
    edge_doc: np.ndarray
    edge_word: np.ndarray
    edge_count: np.ndarray
    words: tuple[str, ...] = ()
    doc_ids: tuple[str, ...] = ()

    @classmethod
    def from_edges(cls, n_docs: int, n_words: int, edges, words=(), doc_ids=()) -> "BipartiteGraph":
        """Build from ``(doc, word, count)`` triples; repeated pairs add up."""
        acc = Counter()
        for d, w, c in edges:
            if not (0 <= d < n_docs and 0 <= w < n_words):
                raise ValueError(f"edge ({d}, {w}) out of range")
            if c < 0:
                raise ValueError("edge counts must be non-negative")
            if c:
                acc[int(d), int(w)] += int(c)
        keys = sorted(acc)
        return cls(
            n_docs, n_words,
            np.array([k[0] for k in keys], dtype=np.int64),
            np.array([k[1] for k in keys], dtype=np.int64),
            np.array([acc[k] for k in keys], dtype=np.int64),
            tuple(words), tuple(doc_ids),
        )

    @property
    def n_nodes(self) -> int:
        return self.n_words + self.n_docs

    @property
    def n_edges(self) -> int:
        return int(self.edge_count.sum())

    @cached_property
    def node_types(self) -> np.ndarray:
        return np.array([WORD] * self.n_words + [DOC] * self.n_docs, dtype=np.int64)

    @cached_property
    def word_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_word, weights=self.edge_count,
                           minlength=self.n_words).astype(np.int64)

    @cached_property
    def doc_lengths(self) -> np.ndarray:
        return np.bincount(self.edge_doc, weights=self.edge_count,
                           minlength=self.n_docs).astype(np.int64)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.concatenate([self.word_degrees, self.doc_lengths])

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per node, ``(neighbour, multiplicity)`` pairs in node numbering."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        V = self.n_words
        for d, w, c in zip(self.edge_doc.tolist(), self.edge_word.tolist(),
                           self.edge_count.tolist()):
            adj[w].append((V + d, c))
            adj[V + d].append((w, c))
        return adj

    def doc_word_matrix(self) -> np.ndarray:
        m = np.zeros((self.n_docs, self.n_words), dtype=np.int64)
        np.add.at(m, (self.edge_doc, self.edge_word), self.edge_count)
        return m

    def n_components(self) -> int:
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        V, n = self.n_words, self.n_nodes
        rows = np.concatenate([self.edge_word, V + self.edge_doc])
        cols = np.concatenate([V + self.edge_doc, self.edge_word])
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        return int(connected_components(adj, directed=False)[0])


def build_bipartite_graph(corpus: Sequence, vocabulary) -> BipartiteGraph:
    """One doc node per document, one word node per vocabulary entry."""
    if not corpus:
        raise DataError("cannot build a graph from an empty corpus")
    edges = []
    for d, doc in enumerate(corpus):
        counts = Counter(doc.words)
        for word, c in counts.items():
            if word not in vocabulary:
                raise DataError(f"document {doc.doc_id} uses {word!r}, absent from the vocabulary")
            edges.append((d, vocabulary.id(word), c))
    return BipartiteGraph.from_edges(len(corpus), len(vocabulary), edges,
                                     words=vocabulary.words,
                                     doc_ids=tuple(d.doc_id for d in corpus))
