"""Tokenization, stopword removal, rare-word pruning and short-document filtering.

Stage order is fixed: tokenize, remove stopwords, prune rare words, drop short
documents. Pruning and length filtering are repeated until neither changes the
corpus, so that afterwards every vocabulary word occurs at least ``min_count``
times and every document has at least ``min_tokens`` tokens.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .errors import DataError
from .ingest import NarrativeMetadata, RawPost, extract_metadata

# a run of letters/digits, joined internally by apostrophes or hyphens, or by
# a decimal point/comma between digits ("4.5", "1,000")
_TOKEN_RE = re.compile(r"[^\W_]+(?:['\-][^\W_]+|(?<=\d)[.,]\d+)*")
_APOSTROPHES = str.maketrans({"’": "'", "‘": "'", "ʼ": "'"})

DEFAULT_MIN_TOKENS = 10
DEFAULT_MIN_COUNT = 3


class Token(NamedTuple):
    surface: str
    position: int


@dataclass(frozen=True)
class Document:
    doc_id: str
    kind: str
    tokens: tuple[Token, ...]
    metadata: NarrativeMetadata = field(default_factory=NarrativeMetadata)
    created_utc: int = 0

    @property
    def words(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def __len__(self):
        return len(self.tokens)

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "kind": self.kind,
            "created_utc": self.created_utc,
            "tokens": self.words,
            "metadata": self.metadata.to_record(),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Document":
        return cls(
            doc_id=str(rec["doc_id"]),
            kind=rec["kind"],
            tokens=reindex(rec["tokens"]),
            metadata=NarrativeMetadata.from_record(rec.get("metadata")),
            created_utc=int(rec.get("created_utc", 0)),
        )


@dataclass(frozen=True)
class Vocabulary:
    words: tuple[str, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._index

    def id(self, word: str) -> int:
        return self._index[word]

    def word(self, word_id: int) -> str:
        return self.words[word_id]

    def count(self, word: str) -> int:
        return self.counts[self._index[word]]

    @classmethod
    def from_corpus(cls, corpus: Iterable[Document]) -> "Vocabulary":
        counts = Counter(t.surface for d in corpus for t in d.tokens)
        words = tuple(sorted(counts))
        return cls(words, tuple(counts[w] for w in words))

    def write_tsv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("word_id\tword\tcount\n")
            for i, (w, c) in enumerate(zip(self.words, self.counts)):
                fh.write(f"{i}\t{w}\t{c}\n")

    @classmethod
    def read_tsv(cls, path) -> "Vocabulary":
        words, counts = [], []
        with Path(path).open(encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                _, w, c = line.rstrip("\n").split("\t")
                words.append(w)
                counts.append(int(c))
        return cls(tuple(words), tuple(counts))


def reindex(surfaces: Iterable[str]) -> tuple[Token, ...]:
    return tuple(Token(s, i) for i, s in enumerate(surfaces))


def tokenize(text: str) -> list[Token]:
    """Lowercase and split on whitespace and punctuation.

    Apostrophes and hyphens survive inside words, decimal separators inside
    numbers; pure punctuation is dropped.

    >>> [t.surface for t in tokenize("PSA=4.5 ng/mL")]
    ['psa', '4.5', 'ng', 'ml']
    """
    text = text.translate(_APOSTROPHES).lower()
    return list(reindex(m.group(0) for m in _TOKEN_RE.finditer(text)))


def load_stoplist(path=None) -> frozenset[str]:
    """One word per line; ``None`` loads the bundled English list."""
    if path is None:
        text = resources.files("dapmav").joinpath("data/stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def remove_stopwords(tokens: Sequence[Token], stoplist: frozenset[str] | set[str]) -> list[Token]:
    return list(reindex(t.surface for t in tokens if t.surface not in stoplist))


def filter_short_documents(corpus: Sequence[Document], min_tokens: int = DEFAULT_MIN_TOKENS
                           ) -> list[Document]:
    kept = [d for d in corpus if len(d.tokens) >= min_tokens]
    if corpus and not kept:
        raise DataError(f"no document has at least {min_tokens} tokens "
                        f"(longest has {max(len(d.tokens) for d in corpus)})")
    return kept


def prune_rare_words(corpus: Sequence[Document], min_count: int = DEFAULT_MIN_COUNT
                     ) -> tuple[list[Document], Vocabulary]:
    """Drop word types seen fewer than ``min_count`` times in the whole corpus."""
    counts = Counter(t.surface for d in corpus for t in d.tokens)
    keep = {w for w, c in counts.items() if c >= min_count}
    if not keep:
        raise DataError(f"no word occurs at least {min_count} times")
    pruned = [replace(d, tokens=reindex(t.surface for t in d.tokens if t.surface in keep))
              for d in corpus]
    return pruned, Vocabulary.from_corpus(pruned)


def document_from_post(post: RawPost, stoplist: frozenset[str], include_titles: bool = True
                       ) -> Document:
    text = post.text if include_titles else post.body
    return Document(
        doc_id=post.id,
        kind=post.kind,
        tokens=tuple(remove_stopwords(tokenize(text), stoplist)),
        metadata=extract_metadata(text),
        created_utc=post.created_utc,
    )


def preprocess_posts(posts: Sequence[RawPost], stoplist: frozenset[str] | None = None,
                     min_tokens: int = DEFAULT_MIN_TOKENS, min_count: int = DEFAULT_MIN_COUNT,
                     include_titles: bool = True, merge_replies: bool = False
                     ) -> tuple[list[Document], Vocabulary]:
    """Run the full preprocessing chain on raw posts."""
    if stoplist is None:
        stoplist = load_stoplist()
    if not posts:
        raise DataError("no posts to preprocess")
    if merge_replies:
        posts = merge_replies_into_parents(posts)
    corpus = [document_from_post(p, stoplist, include_titles) for p in posts]
    while True:
        corpus, vocab = prune_rare_words(corpus, min_count)
        filtered = filter_short_documents(corpus, min_tokens)
        if len(filtered) == len(corpus):
            return filtered, vocab
        corpus = filtered


def merge_replies_into_parents(posts: Sequence[RawPost]) -> list[RawPost]:
    """Append each reply's body to its thread's submission, in time order.

    Replies are followed up their ``parent_id`` chain; replies whose thread
    root is absent stay as documents of their own.
    """
    by_id = {p.id: p for p in posts}

    def root(p: RawPost) -> RawPost:
        seen = set()
        while p.kind == "reply" and p.parent_id in by_id and p.id not in seen:
            seen.add(p.id)
            p = by_id[p.parent_id]
        return p

    extra: dict[str, list[RawPost]] = {}
    out = []
    for p in posts:
        r = root(p) if p.kind == "reply" else p
        if r is not p and r.kind == "submission":
            extra.setdefault(r.id, []).append(p)
        else:
            out.append(p)
    merged = []
    for p in out:
        if p.id in extra:
            bodies = [q.body for q in sorted(extra[p.id], key=lambda q: (q.created_utc, q.id))]
            p = replace(p, body="\n".join([p.body, *bodies]))
        merged.append(p)
    return merged


def write_documents(corpus: Iterable[Document], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for doc in corpus:
            fh.write(json.dumps(doc.to_record(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def read_documents(path) -> list[Document]:
    with Path(path).open(encoding="utf-8") as fh:
        return [Document.from_record(json.loads(line)) for line in fh if line.strip()]
