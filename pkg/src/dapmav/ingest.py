"""Acquisition of Reddit-style posts from NDJSON dumps or a Pushshift-compatible API.

Records follow public Pushshift field names so that archive dumps load
unchanged: ``selftext`` is the body of a submission, ``body`` the body of a
comment, and flair comes from ``link_flair_text`` or ``author_flair_text``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataError, FetchError

log = logging.getLogger(__name__)

SUBMISSION = "submission"
REPLY = "reply"
KINDS = (SUBMISSION, REPLY)

FAMILY_ROLES = ("brother", "father", "grandfather", "husband", "son", "uncle")

_ENDPOINT = {SUBMISSION: "submission", REPLY: "comment"}
_RETRYABLE = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class RawPost:
    id: str
    created_utc: int
    body: str
    kind: str
    subreddit: str = ""
    parent_id: str | None = None
    title: str | None = None
    flair: str | None = None
    author: str | None = None  # sha256 prefix of the author name

    def __post_init__(self):
        if not self.id:
            raise ValueError("post id must be non-empty")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == REPLY and not self.parent_id:
            raise ValueError(f"reply {self.id} has no parent_id")
        if self.created_utc < 0:
            raise ValueError(f"post {self.id} has negative created_utc")

    @property
    def text(self) -> str:
        """Narrative text: title and body joined by a newline for submissions."""
        if self.kind == SUBMISSION and self.title:
            return f"{self.title}\n{self.body}"
        return self.body

    def to_record(self) -> dict:
        return asdict(self)


class PostBatch(list):
    """A list of posts plus bookkeeping about how it was obtained."""

    def __init__(self, posts: Iterable[RawPost] = (), skipped: int = 0,
                 requests: int = 0, retries: int = 0):
        super().__init__(posts)
        self.skipped = skipped
        self.requests = requests
        self.retries = retries


@dataclass(frozen=True)
class FilterCriteria:
    subreddit: str | None = None
    after: int | None = None    # inclusive
    before: int | None = None   # exclusive
    flair_allowlist: frozenset[str] | None = None
    kinds: frozenset[str] = frozenset(KINDS)

    def __post_init__(self):
        if self.after is not None and self.before is not None and self.after >= self.before:
            raise ValueError("criteria require after < before")
        if self.flair_allowlist is not None and not isinstance(self.flair_allowlist, frozenset):
            object.__setattr__(self, "flair_allowlist", frozenset(self.flair_allowlist))
        if not isinstance(self.kinds, frozenset):
            object.__setattr__(self, "kinds", frozenset(self.kinds))
        unknown = set(self.kinds) - set(KINDS)
        if unknown:
            raise ValueError(f"unknown kinds {sorted(unknown)}")

    def matches(self, post: RawPost) -> bool:
        if post.kind not in self.kinds:
            return False
        if self.subreddit is not None and post.subreddit.lower() != self.subreddit.lower():
            return False
        if self.after is not None and post.created_utc < self.after:
            return False
        if self.before is not None and post.created_utc >= self.before:
            return False
        if self.flair_allowlist is not None and post.flair not in self.flair_allowlist:
            return False
        return True


class AgeBracket(NamedTuple):
    low: int
    high: int

    def __str__(self):
        return f"{self.low}-{self.high}"

    @classmethod
    def of(cls, age: int) -> "AgeBracket":
        low = age // 10 * 10
        return cls(low, low + 9)

    @classmethod
    def parse(cls, text: str) -> "AgeBracket":
        low, high = text.split("-")
        return cls(int(low), int(high))


@dataclass(frozen=True)
class NarrativeMetadata:
    age_brackets: frozenset[AgeBracket] = frozenset()
    family_roles: frozenset[str] = frozenset()

    def to_record(self) -> dict:
        return {
            "age_brackets": sorted(str(b) for b in self.age_brackets),
            "family_roles": sorted(self.family_roles),
        }

    @classmethod
    def from_record(cls, rec: dict | None) -> "NarrativeMetadata":
        rec = rec or {}
        return cls(
            frozenset(AgeBracket.parse(b) for b in rec.get("age_brackets", ())),
            frozenset(rec.get("family_roles", ())),
        )


@dataclass(frozen=True)
class CorpusStats:
    n_total: int = 0
    n_submissions: int = 0
    n_replies: int = 0
    mean_tokens_submissions: float = 0.0
    mean_tokens_replies: float = 0.0
    mean_tokens_combined: float = 0.0
    max_tokens: int = 0
    age_bracket_counts: dict = field(default_factory=dict)
    family_role_counts: dict = field(default_factory=dict)


# -- record mapping ---------------------------------------------------------

def _hash_author(name) -> str | None:
    if not name or name in ("[deleted]", "[removed]"):
        return None
    return hashlib.sha256(str(name).encode("utf-8")).hexdigest()[:16]


def _strip_fullname(value) -> str | None:
    if value is None or value == "":
        return None
    value = str(value)
    if re.match(r"^t[1-6]_", value):
        return value[3:]
    return value


def _infer_kind(rec: dict) -> str:
    if rec.get("kind") in KINDS:
        return rec["kind"]
    if "selftext" in rec or "title" in rec:
        return SUBMISSION
    if "parent_id" in rec or "link_id" in rec:
        return REPLY
    return SUBMISSION


def post_from_record(rec: dict, kind: str | None = None) -> RawPost:
    """Map a Pushshift-style (or canonical) JSON object to a :class:`RawPost`.

    Raises ``ValueError``/``KeyError``/``TypeError`` on records that cannot be
    mapped; callers treat those as malformed.
    """
    if not isinstance(rec, dict):
        raise TypeError("record is not a JSON object")
    kind = kind or _infer_kind(rec)
    if "selftext" in rec and kind == SUBMISSION:
        body = rec["selftext"]
    else:
        body = rec["body"]
    if not isinstance(body, str):
        raise TypeError("body is not a string")
    flair = rec.get("flair", rec.get("link_flair_text") or rec.get("author_flair_text"))
    parent = rec.get("parent_id")
    if kind == REPLY and not parent:
        parent = rec.get("link_id")
    author = rec.get("author")
    if "kind" not in rec:  # raw dump: hash on ingest
        author = _hash_author(author)
    return RawPost(
        id=str(rec["id"]),
        created_utc=int(float(rec["created_utc"])),
        body=body,
        kind=kind,
        subreddit=str(rec.get("subreddit") or ""),
        parent_id=_strip_fullname(parent),
        title=rec.get("title"),
        flair=flair,
        author=author,
    )


# -- offline loading ----------------------------------------------------------

def load_ndjson(path, kind: str | None = None) -> PostBatch:
    """Read posts from an NDJSON file, one JSON object per line.

    Malformed lines are skipped and counted in ``PostBatch.skipped``; a file
    in which more than half the non-blank lines are malformed is rejected.
    Duplicate ids keep their first occurrence.
    """
    path = Path(path)
    try:
        handle = path.open(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    posts, seen, bad = [], set(), []
    n_lines = 0
    with handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            n_lines += 1
            try:
                post = post_from_record(json.loads(line), kind)
            except (ValueError, KeyError, TypeError) as exc:
                bad.append((lineno, str(exc)))
                continue
            if post.id in seen:
                bad.append((lineno, f"duplicate id {post.id}"))
                continue
            seen.add(post.id)
            posts.append(post)

    if n_lines and len(bad) > n_lines / 2:
        detail = "; ".join(f"line {n}: {msg}" for n, msg in bad[:5])
        raise DataError(f"{path}: {len(bad)}/{n_lines} malformed lines ({detail})")
    if bad:
        log.warning("%s: skipped %d malformed line(s)", path, len(bad))
    return PostBatch(posts, skipped=len(bad))


def write_ndjson(posts: Sequence[RawPost], path) -> None:
    """Write the canonical corpus NDJSON (the fields of :class:`RawPost`)."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for post in posts:
            fh.write(json.dumps(post.to_record(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


# -- live fetching ------------------------------------------------------------

def _http_get_json(url: str, timeout: float):
    req = urllib.request.Request(url, headers={"User-Agent": "dapmav/0.1"})
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


def fetch_pushshift(base_url: str, criteria: FilterCriteria, page_size: int = 100, *,
                    max_retries: int = 5, backoff: float = 1.0, timeout: float = 30.0,
                    sleep: Callable[[float], None] = time.sleep) -> PostBatch:
    """Page through ``{base_url}/reddit/search/{submission|comment}``.

    Pages are requested in ascending ``created_utc`` order; each new request
    sets ``after`` to the newest timestamp seen so far and paging stops at the
    first empty page. HTTP 429 and 5xx responses are retried with exponential
    backoff. Results are deduplicated by id and returned sorted by
    ``(created_utc, id)``, then narrowed with :func:`filter_posts`.
    """
    if not 1 <= page_size <= 500:
        raise ValueError("page_size must be in [1, 500]")
    base_url = base_url.rstrip("/")
    found: dict[str, RawPost] = {}
    requests = retries = 0

    for kind in sorted(criteria.kinds):
        after = criteria.after - 1 if criteria.after is not None else None
        while True:
            params = {"size": page_size, "sort": "asc", "sort_type": "created_utc"}
            if criteria.subreddit:
                params["subreddit"] = criteria.subreddit
            if after is not None:
                params["after"] = after
            if criteria.before is not None:
                params["before"] = criteria.before
            url = f"{base_url}/reddit/search/{_ENDPOINT[kind]}?{urllib.parse.urlencode(params)}"

            attempt = 0
            while True:
                requests += 1
                try:
                    payload = _http_get_json(url, timeout)
                    break
                except urllib.error.HTTPError as exc:
                    if exc.code not in _RETRYABLE or attempt >= max_retries:
                        raise FetchError(f"HTTP {exc.code} for {url}") from exc
                except urllib.error.URLError as exc:
                    if attempt >= max_retries:
                        raise FetchError(f"{exc.reason} for {url}") from exc
                sleep(backoff * 2 ** attempt)
                attempt += 1
                retries += 1

            data = payload.get("data", []) if isinstance(payload, dict) else []
            if not data:
                break
            newest = after
            for rec in data:
                post = post_from_record(rec, kind)
                found.setdefault(post.id, post)
                newest = post.created_utc if newest is None else max(newest, post.created_utc)
            if newest == after:
                break
            after = newest

    posts = sorted(found.values(), key=lambda p: (p.created_utc, p.id))
    return PostBatch(filter_posts(posts, criteria), requests=requests, retries=retries)


# -- thinning and filtering ---------------------------------------------------

def filter_posts(posts: Iterable[RawPost], criteria: FilterCriteria) -> list[RawPost]:
    return [p for p in posts if criteria.matches(p)]


def sample_without_replacement(posts: Sequence[RawPost], n: int, seed: int) -> list[RawPost]:
    """Uniformly sample ``n`` distinct posts; the result order is the draw order."""
    if not 0 <= n <= len(posts):
        raise DataError(f"cannot sample {n} posts from {len(posts)}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(posts), size=n, replace=False)
    return [posts[i] for i in idx]


# -- narrative metadata -------------------------------------------------------

_PERSON = (r"(?:i|i'm|me|myself|he|him|my|his|dad|father|husband|brother|son|uncle|"
           r"grandfather|grandpa|granddad|grandad|man|guy|mom|mum|mother|wife|friend|"
           r"partner|fil|bil|stepdad|pops|pop)")
_AGE = r"(?P<age>\d{2})"
_AGE_PATTERNS = [
    # "dad (72)", "me (61m)", "husband (m58)", with up to three words in between
    re.compile(rf"\b{_PERSON}\b(?:\W+\w+){{0,3}}?\W*\(\s*[mf]?\s*{_AGE}\s*[mf]?\s*\)", re.I),
    # "72 years old", "72-year-old", "72 yrs old", "72 y/o", "72yo", "72 yo"
    re.compile(rf"\b{_AGE}\s*-?\s*(?:years?|yrs?)\s*-?\s*old\b", re.I),
    re.compile(rf"\b{_AGE}\s*(?:yo|y/o|y\.o\.)(?!\w)", re.I),
    # "age 72", "aged 72", "age of 72", "at the age of 72"
    re.compile(rf"\bage(?:d|\s+of)?\s*:?\s*{_AGE}\b", re.I),
    # "my dad, 72, was"
    re.compile(rf"\b{_PERSON},\s*{_AGE}\s*,", re.I),
    # "i'm 72", "he is 72" unless a unit follows
    re.compile(rf"\b(?:i'm|i am|he's|he is|he was|i was)\s+(?:only\s+|just\s+)?{_AGE}\b"
               rf"(?!\s*(?:%|percent|ng|mg|ml|cm|mm|kg|lbs?|days?|weeks?|months?|hours?|minutes?|\.\d))",
               re.I),
    # "72m", "m72" tags, e.g. "(me) 61M here"
    re.compile(rf"(?<![\w.]){_AGE}\s?[mf](?![\w])", re.I),
]
_DECADE = re.compile(r"\bin\s+(?:his|my|her|their|our|your)\s+(?:early\s+|mid\s+|late\s+)?"
                     r"(?P<decade>[1-9]0)'?s\b", re.I)

_ROLE_SYNONYMS = {
    "brother": "brother", "father": "father", "dad": "father", "daddy": "father",
    "grandfather": "grandfather", "grandpa": "grandfather", "granddad": "grandfather",
    "grandad": "grandfather", "husband": "husband", "son": "son", "uncle": "uncle",
}
_ROLE_RE = re.compile(r"\b(" + "|".join(sorted(_ROLE_SYNONYMS, key=len, reverse=True)) + r")s?\b",
                      re.I)


def extract_age_brackets(text: str) -> frozenset[AgeBracket]:
    """Decade brackets of ages mentioned near an age cue; ages outside 18-99 are ignored."""
    ages = set()
    for pattern in _AGE_PATTERNS:
        for m in pattern.finditer(text):
            ages.add(int(m.group("age")))
    for m in _DECADE.finditer(text):
        ages.add(int(m.group("decade")))
    return frozenset(AgeBracket.of(a) for a in ages if 18 <= a <= 99)


def extract_family_roles(text: str) -> frozenset[str]:
    return frozenset(_ROLE_SYNONYMS[m.group(1).lower()] for m in _ROLE_RE.finditer(text))


def extract_metadata(text: str) -> NarrativeMetadata:
    return NarrativeMetadata(extract_age_brackets(text), extract_family_roles(text))


def corpus_stats(documents) -> CorpusStats:
    """Counts and token-length means over preprocessed documents."""
    docs = list(documents)
    if not docs:
        return CorpusStats()
    sub = [len(d.tokens) for d in docs if d.kind == SUBMISSION]
    rep = [len(d.tokens) for d in docs if d.kind == REPLY]
    both = sub + rep
    ages: dict[str, int] = {}
    roles: dict[str, int] = {}
    for d in docs:
        for b in d.metadata.age_brackets:
            ages[str(b)] = ages.get(str(b), 0) + 1
        for r in d.metadata.family_roles:
            roles[r] = roles.get(r, 0) + 1
    return CorpusStats(
        n_total=len(both),
        n_submissions=len(sub),
        n_replies=len(rep),
        mean_tokens_submissions=float(np.mean(sub)) if sub else 0.0,
        mean_tokens_replies=float(np.mean(rep)) if rep else 0.0,
        mean_tokens_combined=float(np.mean(both)),
        max_tokens=max(both),
        age_bracket_counts=dict(sorted(ages.items())),
        family_role_counts=dict(sorted(roles.items())),
    )
