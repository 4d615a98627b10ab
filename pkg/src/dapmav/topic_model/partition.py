"""Fitted nested partitions and the topic quantities derived from them.

Topics at a level are the word groups of that level, numbered ``0..T-1``.
Level 0 is the finest; the last level holds a single topic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError
from .graph import WORD, BipartiteGraph

FORMAT = "dapmav.nested-sbm/1"


@dataclass(frozen=True, eq=False)
class NestedPartition:
    levels: tuple[np.ndarray, ...]
    n_words: int
    n_docs: int
    word_degrees: np.ndarray
    description_length: float
    block_edges: tuple[np.ndarray, ...] = ()   # per level: rows (topic, doc group, count)
    words: tuple[str, ...] = ()
    doc_ids: tuple[str, ...] = ()
    config: dict = field(default_factory=dict)

    @classmethod
    def from_levels(cls, graph: BipartiteGraph, levels, dl: float, config=None) -> "NestedPartition":
        levels = tuple(np.asarray(b, dtype=np.int64) for b in levels)
        part = cls(levels, graph.n_words, graph.n_docs, graph.word_degrees.copy(), float(dl),
                   words=graph.words, doc_ids=graph.doc_ids, config=dict(config or {}))
        blocks = []
        for l in range(len(levels)):
            wg = part.word_groups(l)
            dg = part.doc_groups(l)
            m = np.zeros((part.n_topics(l), part.n_doc_groups(l)), dtype=np.int64)
            np.add.at(m, (wg[graph.edge_word], dg[graph.edge_doc]), graph.edge_count)
            r, s = np.nonzero(m)
            blocks.append(np.stack([r, s, m[r, s]], axis=1))
        object.__setattr__(part, "block_edges", tuple(blocks))
        return part

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def _check_level(self, level: int) -> None:
        if not 0 <= level < self.n_levels:
            raise DataError(f"level {level} outside 0..{self.n_levels - 1}")

    def node_groups(self, level: int) -> np.ndarray:
        self._check_level(level)
        g = self.levels[0]
        for b in self.levels[1:level + 1]:
            g = b[g]
        return g

    def word_groups(self, level: int) -> np.ndarray:
        """Topic id of every word at ``level``."""
        return self.node_groups(level)[:self.n_words]

    def doc_groups(self, level: int) -> np.ndarray:
        """Document-group id (``0..``) of every document at ``level``."""
        return self.node_groups(level)[self.n_words:] - self.n_topics(level)

    def n_topics(self, level: int) -> int:
        return int(self.node_groups(level)[:self.n_words].max()) + 1 if self.n_words else 0

    def n_doc_groups(self, level: int) -> int:
        return int(self.node_groups(level)[self.n_words:].max()) + 1 - self.n_topics(level)

    def topic_counts(self) -> list[int]:
        """Topics per level, finest first."""
        return [self.n_topics(l) for l in range(self.n_levels)]

    def block_matrix(self, level: int) -> np.ndarray:
        self._check_level(level)
        m = np.zeros((self.n_topics(level), self.n_doc_groups(level)), dtype=np.int64)
        be = self.block_edges[level]
        if len(be):
            m[be[:, 0], be[:, 1]] = be[:, 2]
        return m

    # -- serialisation -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "n_words": self.n_words,
            "n_docs": self.n_docs,
            "description_length": self.description_length,
            "topics_per_level": self.topic_counts(),
            "levels": [b.tolist() for b in self.levels],
            "block_edges": [be.tolist() for be in self.block_edges],
            "word_degrees": self.word_degrees.tolist(),
            "words": list(self.words),
            "doc_ids": list(self.doc_ids),
            "config": self.config,
            "seed": self.config.get("seed"),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NestedPartition":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        if d.get("format") != FORMAT:
            raise DataError(f"{path} is not a {FORMAT} model file")
        return cls(
            levels=tuple(np.asarray(b, dtype=np.int64) for b in d["levels"]),
            n_words=d["n_words"], n_docs=d["n_docs"],
            word_degrees=np.asarray(d["word_degrees"], dtype=np.int64),
            description_length=d["description_length"],
            block_edges=tuple(np.asarray(be, dtype=np.int64).reshape(-1, 3)
                              for be in d["block_edges"]),
            words=tuple(d["words"]), doc_ids=tuple(d["doc_ids"]), config=d["config"],
        )

    def hierarchy(self) -> dict:
        """Nested tree from the single top topic down to word leaves.

        Every node carries ``size``, the summed word frequency beneath it.
        """
        deg = self.word_degrees
        words = self.words or tuple(str(i) for i in range(self.n_words))
        top = self.n_levels - 1

        def build(level: int, topic: int, word_mask: np.ndarray) -> dict:
            node = {"name": f"L{level}-T{topic}", "level": level, "topic": topic,
                    "size": int(deg[word_mask].sum())}
            if level == 0:
                idx = np.flatnonzero(word_mask)
                idx = idx[np.lexsort((idx, -deg[idx]))]
                node["children"] = [{"name": words[i], "size": int(deg[i])} for i in idx]
            else:
                below = self.word_groups(level - 1)
                node["children"] = [build(level - 1, int(t), word_mask & (below == t))
                                    for t in np.unique(below[word_mask])]
            return node

        return build(top, 0, np.ones(self.n_words, dtype=bool))


def topic_word_distribution(partition: NestedPartition, level: int, topic: int) -> np.ndarray:
    """P(word | topic) over the whole vocabulary.

    The share of the topic's word-side edge endpoints that land on each word.
    """
    n = partition.n_topics(level)
    if not 0 <= topic < n:
        raise DataError(f"topic {topic} does not exist at level {level} (0..{n - 1})")
    mask = partition.word_groups(level) == topic
    w = np.where(mask, partition.word_degrees, 0).astype(float)
    return w / w.sum()


def topic_densities(partition: NestedPartition, level: int) -> np.ndarray:
    """Fraction of all tokens whose word belongs to each topic at ``level``."""
    wg = partition.word_groups(level)
    mass = np.bincount(wg, weights=partition.word_degrees, minlength=partition.n_topics(level))
    return mass / mass.sum()


def doc_topic_counts(graph: BipartiteGraph, partition: NestedPartition, level: int) -> np.ndarray:
    """``D x T`` matrix of token counts per document and topic."""
    wg = partition.word_groups(level)
    n = np.zeros((graph.n_docs, partition.n_topics(level)), dtype=np.int64)
    np.add.at(n, (graph.edge_doc, wg[graph.edge_word]), graph.edge_count)
    return n


def document_topic_mixture(graph: BipartiteGraph, partition: NestedPartition, level: int,
                           doc: int) -> np.ndarray:
    if not 0 <= doc < graph.n_docs:
        raise DataError(f"document {doc} is not in the graph")
    wg = partition.word_groups(level)
    sel = graph.edge_doc == doc
    mix = np.bincount(wg[graph.edge_word[sel]], weights=graph.edge_count[sel],
                      minlength=partition.n_topics(level)).astype(float)
    if mix.sum() == 0:
        raise DataError(f"document {doc} has no tokens")
    return mix / mix.sum()


def token_topics(partition: NestedPartition, level: int, vocabulary, corpus) -> list[list[int]]:
    """Topic id of every token of every document, in token order."""
    wg = partition.word_groups(level)
    return [[int(wg[vocabulary.id(w)]) for w in doc.words] for doc in corpus]


__all__ = [
    "NestedPartition", "topic_word_distribution", "topic_densities", "doc_topic_counts",
    "document_topic_mixture", "token_topics", "WORD",
]
