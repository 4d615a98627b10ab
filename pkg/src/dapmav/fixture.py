"""Deterministic synthetic forum corpus for demos, tests and smoke runs.

Submissions tell a story in order: diagnosis early, treatment and symptoms
in the middle, experience and support late. Sentiment words follow a
fall-rise shape. Replies are shorter and lean towards support. Nothing
here resembles real user content.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .ingest import REPLY, SUBMISSION, RawPost, write_ndjson

SUBREDDIT = "SyntheticHealth"
START_UTC = 1546300800  # 2019-01-01
SPAN = 3 * 365 * 86400

THEMES = {
    "diagnosis": "psa biopsy urologist gleason score mri scan results diagnosed screening "
                 "exam prostate cores staging positive tests referral specialist elevated "
                 "ultrasound pathology report".split(),
    "treatment": "surgery prostatectomy radiation therapy robotic surgeon hospital catheter "
                 "recovery hormone adt treatment oncologist sessions proton brachytherapy "
                 "surveillance procedure options".split(),
    "symptoms": "incontinence pads leakage erectile function pain fatigue urination night "
                "bladder hot flashes sleep side effects pelvic floor exercises".split(),
    "experience": "family wife support group thanks life journey community friends kids "
                  "grateful story hope advice forum love years share".split(),
    "general": "cancer doctor time week month day news question information".split(),
}
NEGATIVE = "scared worried afraid terrible anxious shock bad sad hurt".split()
POSITIVE = "good great happy relieved glad best hopeful positive wonderful".split()
FILLER = "the and of in to a my was is it that with for on at".split()
ROLES = ("father", "dad", "husband", "brother", "uncle", "son", "grandpa")

# theme weights at the start, middle and end of a submission
_SCHEDULE = {
    "diagnosis": (0.70, 0.15, 0.05),
    "treatment": (0.10, 0.40, 0.10),
    "symptoms": (0.05, 0.30, 0.10),
    "experience": (0.05, 0.05, 0.65),
    "general": (0.10, 0.10, 0.10),
}
_THEME_NAMES = tuple(THEMES)


def _theme_probs(x: float, focus: int | None = None) -> np.ndarray:
    w = []
    for name in _THEME_NAMES:
        a, b, c = _SCHEDULE[name]
        w.append(a + (b - a) * 2 * x if x < 0.5 else b + (c - b) * (2 * x - 1))
    w = np.array(w)
    w = w / w.sum()
    if focus is not None:
        # each author dwells on one theme, which takes most of the topical words
        w = 0.35 * w
        w[focus] += 0.65
    return w


def _sentence(rng: np.random.Generator, x: float, length: int, focus: int | None = None
              ) -> list[str]:
    words = []
    for _ in range(length):
        u = rng.random()
        if u < 0.30:
            words.append(FILLER[rng.integers(len(FILLER))])
        elif u < 0.40:
            # fall-rise: mixed at the start, darkest around a third, bright at the end
            p_pos = 0.5 - 1.2 * x if x < 1 / 3 else 0.1 + 1.2 * (x - 1 / 3)
            pool = POSITIVE if rng.random() < p_pos else NEGATIVE
            words.append(pool[rng.integers(len(pool))])
        else:
            theme = _THEME_NAMES[rng.choice(len(_THEME_NAMES), p=_theme_probs(x, focus))]
            vocab = THEMES[theme]
            # Zipf-like preference for the first words of each theme
            r = min(int(rng.zipf(1.6)) - 1, len(vocab) - 1)
            words.append(vocab[r])
    return words


def _opening(rng: np.random.Generator) -> str:
    age = int(rng.integers(45, 86))
    role = ROLES[rng.integers(len(ROLES))]
    forms = (f"My {role} ({age}) was just diagnosed.",
             f"I am {age} years old and",
             f"Asking for my {role}, age {age}.",
             "Long time reader, first post.")
    return forms[rng.integers(len(forms))]


def generate_posts(n_submissions: int = 90, replies_per: tuple[int, int] = (1, 4),
                   seed: int = 7) -> list[RawPost]:
    """Submissions with threaded replies, ordered by creation time."""
    rng = np.random.default_rng(seed)
    posts: list[RawPost] = []
    for i in range(n_submissions):
        sid = f"s{i:04d}"
        t0 = START_UTC + int(rng.integers(SPAN))
        n = int(rng.integers(25, 75))
        focus = int(rng.integers(4))
        body = " ".join(_sentence(rng, k / n, 1, focus)[0] for k in range(n))
        title_words = _sentence(rng, 0.0, int(rng.integers(3, 7)))
        posts.append(RawPost(
            id=sid, created_utc=t0, body=f"{_opening(rng)} {body}.", kind=SUBMISSION,
            subreddit=SUBREDDIT, title=" ".join(title_words).capitalize(),
            flair="Diagnosis" if rng.random() < 0.5 else "Treatment",
            author=f"user{int(rng.integers(10_000)):05d}"))
        for j in range(int(rng.integers(replies_per[0], replies_per[1] + 1))):
            m = int(rng.integers(8, 40))
            # replies start mid-story: support and experience
            rf = focus if rng.random() < 0.5 else int(rng.integers(4))
            words = [_sentence(rng, 0.5 + 0.5 * k / m, 1, rf)[0] for k in range(m)]
            if rng.random() < 0.2:
                words = words[:5]  # too short to survive preprocessing
            posts.append(RawPost(
                id=f"r{i:04d}{j:02d}", created_utc=t0 + int(rng.integers(60, 7 * 86400)),
                body=" ".join(words), kind=REPLY, subreddit=SUBREDDIT, parent_id=sid,
                author=f"user{int(rng.integers(10_000)):05d}"))
    posts.sort(key=lambda p: (p.created_utc, p.id))
    return posts


FIXTURE_CONFIG = """\
# Synthetic fixture: small enough for a full run in well under two minutes.
seed = 11

[paths]
input = ["fixture_posts.ndjson"]
output_dir = "bundle"
lexicon = "builtin"
labels = "fixture_labels.csv"

[acquire]
subreddit = "SyntheticHealth"
after = 2019-01-01
before = 2022-01-01

[preprocess]
min_tokens = 10
min_count = 3

[model]
n_restarts = 3

[analyse]
grid = 200

[sentiment]
enabled = true
grid = 101
bandwidth = 0.05

[visualise]
top_k = 25
"""

# level-0 topics of the fixture fit (seed 11); topic ids depend on the fit
FIXTURE_LABELS = """\
topic_id,label
0,general
1,experience
2,symptoms
3,diagnosis
4,treatment
"""


def write_fixture(directory) -> Path:
    """Write posts, labels and a config into ``directory``; returns the config path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_ndjson(generate_posts(), d / "fixture_posts.ndjson")
    (d / "fixture_labels.csv").write_text(FIXTURE_LABELS, encoding="utf-8")
    cfg = d / "fixture.toml"
    cfg.write_text(FIXTURE_CONFIG, encoding="utf-8")
    return cfg
