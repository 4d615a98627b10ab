"""Pipeline configuration: TOML file, built-in defaults and ``section.key=value`` overrides.

Relative paths are resolved against the directory of the config file (or
the working directory when no file is given). Validation happens once, up
front, so a bad config fails before any stage does work.
"""

from __future__ import annotations

import copy
import datetime as dt
import sys
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .ingest import KINDS, FilterCriteria

BUILTIN_LEXICON = "builtin"

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "paths": {
        "input": [],            # offline NDJSON dumps
        "fetch_url": "",        # Pushshift-compatible endpoint, used when no input is given
        "output_dir": "dapmav-out",
        "stoplist": "",         # empty: bundled list
        "lexicon": "",          # "builtin" for the bundled demo lexicon
        "labels": "",           # CSV topic_id,label for labels_level topics
        "labels_level": 0,
    },
    "acquire": {
        "subreddit": "",
        "after": None,
        "before": None,
        "flairs": [],
        "kinds": list(KINDS),
        "sample_n": 0,          # 0 keeps every post
        "page_size": 100,
        "max_retries": 5,
    },
    "preprocess": {
        "min_tokens": 10,
        "min_count": 3,
        "include_titles": True,
        "merge_replies": False,
    },
    "model": {
        "n_restarts": 10,
        "max_sweeps": 50,
        "move_tolerance": 0.001,
        "beta_schedule": [],
        "max_candidates": 24,
        "n_jobs": 1,
    },
    "analyse": {
        "level": 1,             # positional densities and stacking
        "grid": 200,
    },
    "sentiment": {
        "enabled": True,
        "grid": 101,
        "bandwidth": 0.05,
    },
    "layout": {
        "method": "mds",        # or "sne"
        "level": 0,
        "perplexity": 3.0,
        "iterations": 1000,
    },
    "visualise": {
        "top_k": 30,
        "wordcloud_level": 1,
        "style": {},
    },
}


def _merge(base: dict, over: Mapping, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{where}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(base[k], dict) and k != "style":
            if not isinstance(v, Mapping):
                raise ConfigError(f"{key} must be a table")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = v
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """``section.key=value``; the value is read as a TOML literal, else as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    key, raw = text.split("=", 1)
    parts = [p.strip() for p in key.strip().split(".") if p.strip()]
    if not parts:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return parts, value


def _apply_override(cfg: dict, parts: list[str], value) -> None:
    node = cfg
    for i, p in enumerate(parts[:-1]):
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config section {'.'.join(parts[:i + 1])!r}")
        node = node[p]
    leaf = parts[-1]
    if leaf not in node and node is not cfg["visualise"]["style"]:
        raise ConfigError(f"unknown config key {'.'.join(parts)!r}")
    node[leaf] = value


def _timestamp(value, key: str) -> int | None:
    if value is None or value == "":
        return None
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be a date or epoch seconds")
    if isinstance(value, int):
        return value
    if isinstance(value, dt.datetime):
        v = value if value.tzinfo else value.replace(tzinfo=dt.timezone.utc)
        return int(v.timestamp())
    if isinstance(value, dt.date):
        return int(dt.datetime(value.year, value.month, value.day, tzinfo=dt.timezone.utc).timestamp())
    if isinstance(value, str):
        try:
            return _timestamp(dt.datetime.fromisoformat(value), key)
        except ValueError:
            pass
    raise ConfigError(f"{key}: cannot read {value!r} as a date or epoch seconds")


def _int(cfg, section, key, lo=None, hi=None):
    v = cfg[section][key] if section else cfg[key]
    name = f"{section}.{key}" if section else key
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"{name}={v} outside [{lo}, {hi if hi is not None else 'inf'}]")
    return v


def _num(cfg, section, key, positive=False):
    v = cfg[section][key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{section}.{key} must be positive, got {v}")
    return float(v)


class Config(dict):
    """Validated configuration (a plain nested dict plus its base directory)."""

    base_dir: Path

    def path(self, key: str) -> Path | None:
        v = self["paths"][key]
        if not v:
            return None
        p = Path(v).expanduser()
        return p if p.is_absolute() else self.base_dir / p

    @property
    def output_dir(self) -> Path:
        return self.path("output_dir")

    @property
    def inputs(self) -> list[Path]:
        items = self["paths"]["input"]
        items = [items] if isinstance(items, str) else items
        return [Path(p) if Path(p).is_absolute() else self.base_dir / p for p in items]

    def criteria(self) -> FilterCriteria:
        a = self["acquire"]
        return FilterCriteria(
            subreddit=a["subreddit"] or None,
            after=_timestamp(a["after"], "acquire.after"),
            before=_timestamp(a["before"], "acquire.before"),
            flair_allowlist=frozenset(a["flairs"]) if a["flairs"] else None,
            kinds=frozenset(a["kinds"]),
        )


def validate(cfg: Config, require_lexicon: bool = True) -> Config:
    _int(cfg, None, "seed")
    p = cfg["paths"]
    if isinstance(p["input"], str):
        p["input"] = [p["input"]] if p["input"] else []
    if not isinstance(p["input"], list) or not all(isinstance(x, str) for x in p["input"]):
        raise ConfigError("paths.input must be a list of file paths")
    if not p["output_dir"]:
        raise ConfigError("paths.output_dir must be set")
    _int(cfg, "paths", "labels_level", 0)

    a = cfg["acquire"]
    bad = set(a["kinds"]) - set(KINDS)
    if bad or not a["kinds"]:
        raise ConfigError(f"acquire.kinds must be a non-empty subset of {list(KINDS)}")
    _int(cfg, "acquire", "sample_n", 0)
    _int(cfg, "acquire", "page_size", 1, 500)
    _int(cfg, "acquire", "max_retries", 0)
    try:
        cfg.criteria()
    except ValueError as exc:
        raise ConfigError(f"acquire: {exc}") from exc

    _int(cfg, "preprocess", "min_tokens", 0)
    _int(cfg, "preprocess", "min_count", 1)
    for k in ("include_titles", "merge_replies"):
        if not isinstance(cfg["preprocess"][k], bool):
            raise ConfigError(f"preprocess.{k} must be true or false")

    _int(cfg, "model", "n_restarts", 1)
    _int(cfg, "model", "max_sweeps", 0)
    _int(cfg, "model", "max_candidates", 1)
    _int(cfg, "model", "n_jobs", 1)
    _num(cfg, "model", "move_tolerance")
    if not all(isinstance(b, (int, float)) and b > 0 for b in cfg["model"]["beta_schedule"]):
        raise ConfigError("model.beta_schedule must be a list of positive numbers")

    _int(cfg, "analyse", "level", 0)
    _int(cfg, "analyse", "grid", 1)

    s = cfg["sentiment"]
    if not isinstance(s["enabled"], bool):
        raise ConfigError("sentiment.enabled must be true or false")
    _int(cfg, "sentiment", "grid", 2)
    _num(cfg, "sentiment", "bandwidth", positive=True)
    if require_lexicon and s["enabled"] and not p["lexicon"]:
        raise ConfigError("sentiment is enabled but paths.lexicon is not set "
                          f"(give a TSV path or {BUILTIN_LEXICON!r} for the bundled demo lexicon)")

    lay = cfg["layout"]
    if lay["method"] not in ("mds", "sne"):
        raise ConfigError(f"layout.method must be 'mds' or 'sne', got {lay['method']!r}")
    _int(cfg, "layout", "level", 0)
    _int(cfg, "layout", "iterations", 1)
    _num(cfg, "layout", "perplexity", positive=True)

    _int(cfg, "visualise", "top_k", 1)
    _int(cfg, "visualise", "wordcloud_level", 0)
    if not isinstance(cfg["visualise"]["style"], Mapping):
        raise ConfigError("visualise.style must be a table")
    from .render import Style
    try:
        Style.from_dict(cfg["visualise"]["style"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"visualise.style: {exc}") from exc
    return cfg


def load_config(path=None, overrides=(), output_dir=None, require_lexicon: bool = True) -> Config:
    """Defaults, then the TOML file, then each override in order; validated."""
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = path.resolve().parent
    cfg = Config(_merge(DEFAULTS, raw))
    for item in overrides:
        _apply_override(cfg, *parse_override(item))
    if output_dir is not None:
        cfg["paths"]["output_dir"] = str(Path(output_dir).resolve())
    cfg.base_dir = base
    return validate(cfg, require_lexicon)
