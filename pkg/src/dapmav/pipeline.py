"""Stage runner: acquire, preprocess, model, analyse, visualise.

Each stage reads files written by earlier stages in the output directory
and records a manifest entry with its config hash and the sha256 of every
input and output. Wall-clock durations vary between runs, so they go to a
timing log in the cache directory instead of the bundle, which keeps the
bundle byte-reproducible. Before a stage runs, the
manifest chain is checked so that edited or outdated upstream files are
refused unless ``force`` is set.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import asdict
from pathlib import Path
from typing import Callable

import numpy as np

from . import analytics, layout, render
from .config import BUILTIN_LEXICON, Config
from .errors import ConfigError, DataError, StageDependencyError, StaleInputError
from .ingest import (PostBatch, corpus_stats, fetch_pushshift, filter_posts, load_ndjson,
                     sample_without_replacement, write_ndjson)
from .preprocess import Vocabulary, load_stoplist, preprocess_posts, read_documents, write_documents
from .sentiment import emotional_arc, load_lexicon, read_arc_csv, score_document
from .topic_model import (FitConfig, NestedPartition, build_bipartite_graph, fit_nested_partition,
                          token_topics, topic_densities, topic_word_distribution)

log = logging.getLogger(__name__)

STAGES = ("acquire", "preprocess", "model", "analyse", "visualise")
MANIFEST = "manifest.json"
MANIFEST_FORMAT = "dapmav.manifest/1"
CACHE_ENV = "DAPMAV_CACHE_DIR"

# file -> producing stage
PRODUCER = {
    "raw_posts.ndjson": "acquire",
    "acquire_report.json": "acquire",
    "documents.ndjson": "preprocess",
    "vocabulary.tsv": "preprocess",
    "corpus_stats.json": "preprocess",
    "model.json": "model",
    "hierarchy.json": "model",
    "topics.csv": "model",
    "doc_sentiment.csv": "model",
    "analysis.json": "analyse",
    "densities.csv": "analyse",
    "cooccurrence.csv": "analyse",
    "dissimilarity.csv": "analyse",
    "segments.csv": "analyse",
    "arc.csv": "analyse",
}

REQUIRES = {
    "acquire": (),
    "preprocess": ("raw_posts.ndjson",),
    "model": ("documents.ndjson", "vocabulary.tsv"),
    "analyse": ("documents.ndjson", "vocabulary.tsv", "model.json"),
    "visualise": ("model.json", "analysis.json", "densities.csv", "dissimilarity.csv",
                  "segments.csv"),
}


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=1, ensure_ascii=False) + "\n",
                    encoding="utf-8")


def stage_config(cfg: Config, stage: str) -> dict:
    """The part of the config a stage depends on; its hash goes in the manifest."""
    p, lex = cfg["paths"], cfg["paths"]["lexicon"]
    parts = {
        "acquire": {"acquire": cfg["acquire"], "input": p["input"], "fetch_url": p["fetch_url"]},
        "preprocess": {"preprocess": cfg["preprocess"], "stoplist": p["stoplist"]},
        "model": {"model": cfg["model"], "sentiment": cfg["sentiment"], "lexicon": lex},
        "analyse": {"analyse": cfg["analyse"], "sentiment": cfg["sentiment"], "lexicon": lex,
                    "labels": p["labels"], "labels_level": p["labels_level"],
                    "layout_level": cfg["layout"]["level"]},
        "visualise": {"visualise": cfg["visualise"], "layout": cfg["layout"],
                      "labels": p["labels"], "labels_level": p["labels_level"]},
    }[stage]
    parts["seed"] = cfg["seed"]
    return parts


def config_hash(cfg: Config, stage: str) -> str:
    blob = json.dumps(stage_config(cfg, stage), sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# -- manifest ---------------------------------------------------------------------

class Manifest:
    def __init__(self, out: Path):
        self.path = out / MANIFEST
        self.out = out
        if self.path.exists():
            try:
                data = json.loads(self.path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise DataError(f"unreadable manifest {self.path}: {exc}") from exc
            self.stages = data.get("stages", {})
        else:
            self.stages = {}

    def record(self, stage, cfg_hash, inputs, outputs) -> None:
        self.stages[stage] = {
            "stage": stage, "config_hash": cfg_hash, "inputs": inputs, "outputs": outputs,
        }

    def save(self) -> None:
        ordered = {s: self.stages[s] for s in STAGES if s in self.stages}
        _write_json(self.path, {"format": MANIFEST_FORMAT, "stages": ordered})


# user-supplied files each stage reads
EXTERNAL = {
    "acquire": (),
    "preprocess": ("stoplist",),
    "model": ("lexicon",),
    "analyse": ("lexicon", "labels"),
    "visualise": ("labels",),
}


def _external_inputs(cfg: Config, stage: str) -> dict[str, str]:
    # keyed by the path as written in the config, so moving a project keeps its manifest valid
    out = {}
    if stage == "acquire":
        raw = cfg["paths"]["input"]
        for name, p in zip([raw] if isinstance(raw, str) else raw, cfg.inputs):
            if not p.exists():
                raise DataError(f"input file {p} does not exist")
            out[f"input:{name}"] = sha256_file(p)
    for key in EXTERNAL[stage]:
        v = cfg["paths"][key]
        if v and v != BUILTIN_LEXICON:
            p = cfg.path(key)
            if p.exists():
                out[f"{key}:{v}"] = sha256_file(p)
    return out


def check_upstream(cfg: Config, stage: str, manifest: Manifest, force: bool = False) -> None:
    """Refuse to run ``stage`` on missing, edited or outdated upstream artifacts."""
    out = cfg.output_dir
    for name in REQUIRES[stage]:
        if not (out / name).exists():
            raise StageDependencyError(f"{name} not found in {out}; run {PRODUCER[name]} first")
    if force:
        return
    upstream = STAGES[:STAGES.index(stage)]
    for up in upstream:
        entry = manifest.stages.get(up)
        needed = any(PRODUCER.get(n) == up for n in REQUIRES[stage]) or entry is not None
        if not needed:
            continue
        if entry is None:
            raise StaleInputError(f"no manifest entry for stage {up}; re-run {up} or pass --force")
        if entry["config_hash"] != config_hash(cfg, up):
            raise StaleInputError(f"stage {up} ran with a different configuration; "
                                  f"re-run {up} or pass --force")
        for name, digest in entry["outputs"].items():
            p = out / name
            if p.exists() and sha256_file(p) != digest:
                raise StaleInputError(f"{name} changed after stage {up} wrote it; "
                                      f"re-run {up} or pass --force")
        try:
            external = _external_inputs(cfg, up)
        except DataError:
            external = {}  # a deleted source dump does not invalidate what was built from it
        for name, digest in entry["inputs"].items():
            if ":" in name:
                current = external.get(name, digest)
            else:
                current = sha256_file(out / name) if (out / name).exists() else digest
            if current != digest:
                raise StaleInputError(f"stage {up} is out of date: its input {name} has changed; "
                                      f"re-run {up} or pass --force")


# -- stages -------------------------------------------------------------------------

def _effective_level(partition: NestedPartition, level: int) -> int:
    """Clamp to the deepest level below the single-topic top (or 0)."""
    return min(level, max(0, partition.n_levels - 2))


def _lexicon(cfg: Config):
    v = cfg["paths"]["lexicon"]
    return load_lexicon(None if v == BUILTIN_LEXICON else cfg.path("lexicon"))


def cache_directory() -> Path:
    return Path(os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "dapmav")


TIMINGS = "timings.ndjson"


def _record_timing(out: Path, stage: str, cfg_hash: str, duration: float) -> None:
    """Append one line to the timing log; a read-only cache only loses the timing."""
    line = json.dumps({"output_dir": str(out.resolve()), "stage": stage, "config_hash": cfg_hash,
                       "duration_s": round(duration, 3), "finished_utc": int(time.time())})
    try:
        d = cache_directory()
        d.mkdir(parents=True, exist_ok=True)
        with (d / TIMINGS).open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
    except OSError as exc:
        log.debug("timing not recorded: %s", exc)


def _fetch_cached(cfg: Config) -> PostBatch:
    url = cfg["paths"]["fetch_url"]
    crit = cfg.criteria()
    key = hashlib.sha256(json.dumps({"url": url, "criteria": asdict(crit)}, sort_keys=True,
                                    default=sorted).encode()).hexdigest()[:24]
    cache_dir = cache_directory()
    cached = cache_dir / f"pushshift-{key}.ndjson"
    if cached.exists():
        log.info("using cached fetch %s", cached)
        return load_ndjson(cached)
    posts = fetch_pushshift(url, crit, cfg["acquire"]["page_size"],
                            max_retries=cfg["acquire"]["max_retries"])
    cache_dir.mkdir(parents=True, exist_ok=True)
    write_ndjson(posts, cached)
    return posts


def run_acquire(cfg: Config) -> dict:
    out = cfg.output_dir
    crit = cfg.criteria()
    skipped = 0
    if cfg.inputs:
        seen, posts = set(), []
        for path in cfg.inputs:
            batch = load_ndjson(path)
            skipped += batch.skipped
            for p in batch:
                if p.id not in seen:
                    seen.add(p.id)
                    posts.append(p)
        loaded = len(posts)
        posts = filter_posts(posts, crit)
    elif cfg["paths"]["fetch_url"]:
        posts = list(_fetch_cached(cfg))
        loaded = len(posts)
    else:
        raise ConfigError("nothing to acquire: set paths.input or paths.fetch_url")
    n_filtered = len(posts)
    n = cfg["acquire"]["sample_n"]
    if n:
        if n > len(posts):
            raise DataError(f"acquire.sample_n={n} exceeds the {len(posts)} posts that pass the filter")
        order = {p.id: i for i, p in enumerate(posts)}
        posts = sorted(sample_without_replacement(posts, n, cfg["seed"]), key=lambda p: order[p.id])
    if not posts:
        raise DataError("no posts left after filtering")
    write_ndjson(posts, out / "raw_posts.ndjson")
    report = {"loaded": loaded, "skipped_lines": skipped, "after_filter": n_filtered,
              "kept": len(posts), "submissions": sum(p.kind == "submission" for p in posts),
              "replies": sum(p.kind == "reply" for p in posts)}
    _write_json(out / "acquire_report.json", report)
    return report


def run_preprocess(cfg: Config) -> dict:
    out = cfg.output_dir
    batch = load_ndjson(out / "raw_posts.ndjson")
    stop = load_stoplist(cfg.path("stoplist"))
    pp = cfg["preprocess"]
    corpus, vocab = preprocess_posts(batch, stop, pp["min_tokens"], pp["min_count"],
                                     include_titles=pp["include_titles"],
                                     merge_replies=pp["merge_replies"])
    write_documents(corpus, out / "documents.ndjson")
    vocab.write_tsv(out / "vocabulary.tsv")
    stats = asdict(corpus_stats(corpus))
    stats["vocabulary_size"] = len(vocab)
    _write_json(out / "corpus_stats.json", stats)
    return stats


def _fit_config(cfg: Config) -> FitConfig:
    m = cfg["model"]
    return FitConfig(seed=cfg["seed"], n_restarts=m["n_restarts"], max_sweeps=m["max_sweeps"],
                     move_tolerance=m["move_tolerance"], beta_schedule=tuple(m["beta_schedule"]),
                     max_candidates=m["max_candidates"], n_jobs=m["n_jobs"])


def _top_words(partition: NestedPartition, level: int, topic: int, k: int):
    dist = topic_word_distribution(partition, level, topic)
    spec = layout.wordcloud_data(dist, k, words=partition.words)
    return spec


def run_model(cfg: Config) -> dict:
    out = cfg.output_dir
    corpus = read_documents(out / "documents.ndjson")
    vocab = Vocabulary.read_tsv(out / "vocabulary.tsv")
    graph = build_bipartite_graph(corpus, vocab)
    part = fit_nested_partition(graph, _fit_config(cfg))
    part.save(out / "model.json")
    _write_json(out / "hierarchy.json", part.hierarchy())
    with (out / "topics.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("level,topic_id,n_words,density,top_words\n")
        for l in range(part.n_levels):
            dens = topic_densities(part, l)
            sizes = np.bincount(part.word_groups(l), minlength=part.n_topics(l))
            for t in range(part.n_topics(l)):
                words = " ".join(w for w, _ in _top_words(part, l, t, 10).words)
                fh.write(f"{l},{t},{int(sizes[t])},{float(dens[t])!r},{words}\n")
    if cfg["sentiment"]["enabled"]:
        lex = _lexicon(cfg)
        with (out / "doc_sentiment.csv").open("w", encoding="utf-8", newline="") as fh:
            fh.write("doc_id,kind,valence,n_matched\n")
            for d in corpus:
                v = score_document(d, lex)
                n = sum(w in lex for w in d.words)
                fh.write(f"{d.doc_id},{d.kind},{'' if v is None else repr(v)},{n}\n")
    return {"topics_per_level": part.topic_counts(), "description_length": part.description_length}


def run_analyse(cfg: Config) -> dict:
    out = cfg.output_dir
    corpus = read_documents(out / "documents.ndjson")
    vocab = Vocabulary.read_tsv(out / "vocabulary.tsv")
    part = NestedPartition.load(out / "model.json")
    graph = build_bipartite_graph(corpus, vocab)
    if graph.n_words != part.n_words or graph.n_docs != part.n_docs:
        raise StaleInputError("model.json does not match the current corpus; re-run model")
    grid = cfg["analyse"]["grid"]

    level = _effective_level(part, cfg["analyse"]["level"])
    dens = analytics.positional_densities(token_topics(part, level, vocab, corpus), grid=grid)
    order = analytics.stack_order(dens)
    analytics.write_densities_csv(dens, out / "densities.csv")

    lay_level = _effective_level(part, cfg["layout"]["level"])
    cooc = analytics.cooccurrence_matrix(part, graph, lay_level)
    analytics.write_matrix_csv(cooc, out / "cooccurrence.csv")
    analytics.write_matrix_csv(analytics.dissimilarity(cooc), out / "dissimilarity.csv")

    labels, lab_level = _labels(cfg, part)
    if labels:
        seg_dens = analytics.positional_densities(token_topics(part, lab_level, vocab, corpus),
                                                  grid=grid)
        segments = analytics.dominant_topic_segments(seg_dens, labels)
    else:
        segments = analytics.dominant_topic_segments(dens)
    analytics.write_segments_csv(segments, out / "segments.csv")

    if cfg["sentiment"]["enabled"]:
        s = cfg["sentiment"]
        emotional_arc(corpus, _lexicon(cfg), s["grid"], s["bandwidth"]).write_csv(out / "arc.csv")
    summary = {
        "density_level": level,
        "layout_level": lay_level,
        "labels_level": lab_level if labels else None,
        "stack_order": order,
        "medians": {str(t): dens[t].median() for t in order},
        "usage_density": {str(t): float(v) for t, v in enumerate(topic_densities(part, level))},
        "segments": [list(s) for s in segments],
    }
    _write_json(out / "analysis.json", summary)
    return summary


def _labels(cfg: Config, part: NestedPartition) -> tuple[dict[int, str], int]:
    path = cfg.path("labels")
    level = cfg["paths"]["labels_level"]
    if path is None:
        return {}, level
    labels = analytics.read_labels(path)
    if not labels:
        return {}, level
    if level >= part.n_levels:
        raise DataError(f"paths.labels_level={level} but the model has {part.n_levels} levels")
    n = part.n_topics(level)
    bad = sorted(t for t in labels if not 0 <= t < n)
    if bad:
        raise DataError(f"{path}: topic ids {bad} do not exist at level {level} (0..{n - 1})")
    return labels, level


def run_visualise(cfg: Config) -> dict:
    out = cfg.output_dir
    part = NestedPartition.load(out / "model.json")
    summary = json.loads((out / "analysis.json").read_text(encoding="utf-8"))
    style = render.Style.from_dict(cfg["visualise"]["style"])
    labels, lab_level = _labels(cfg, part)
    lay = cfg["layout"]

    ids, dis = analytics.read_matrix_csv(out / "dissimilarity.csv")
    if lay["method"] == "sne" and len(ids) >= 4:
        perp = min(float(lay["perplexity"]), len(ids) - 1.0)
        coords = layout.sne_layout(dis, perp, lay["iterations"], cfg["seed"], ids=ids)
    else:
        if lay["method"] == "sne":
            log.warning("only %d topics; using classical MDS instead of neighbour embedding", len(ids))
        coords = layout.classical_mds(dis, ids=ids)
    coords.write_csv(out / "layout.csv")

    lay_level = summary["layout_level"]
    deg = part.word_degrees
    wg = part.word_groups(lay_level)
    top3 = {}
    for t in ids:
        idx = sorted(np.flatnonzero(wg == t).tolist(), key=lambda i: (-deg[i], part.words[i]))[:3]
        top3[t] = [(part.words[i], float(deg[i] / deg.max())) for i in idx]
    land_labels = labels if labels and lab_level == lay_level else {}
    (out / "landscape.svg").write_text(
        render.render_svg(render.Landscape(coords, top3, land_labels), style), encoding="utf-8")

    dens = analytics.read_densities_csv(out / "densities.csv")
    d_labels = labels if labels and lab_level == summary["density_level"] else {}
    (out / "stacked_densities.svg").write_text(
        render.render_svg(render.DensityStack(dens, summary["stack_order"], d_labels), style),
        encoding="utf-8")

    if (out / "arc.csv").exists() and cfg["sentiment"]["enabled"]:
        arc = read_arc_csv(out / "arc.csv", cfg["sentiment"]["bandwidth"])
        segs = analytics.read_segments_csv(out / "segments.csv")
        (out / "arc.svg").write_text(render.render_svg(render.ArcFigure(arc, segs), style),
                                     encoding="utf-8")

    wc_dir = out / "wordclouds"
    wc_dir.mkdir(exist_ok=True)
    for old in sorted(wc_dir.glob("*")):
        old.unlink()
    wc_level = _effective_level(part, cfg["visualise"]["wordcloud_level"])
    index = []
    for t in range(part.n_topics(wc_level)):
        spec = layout.wordcloud_data(topic_word_distribution(part, wc_level, t),
                                     cfg["visualise"]["top_k"], words=part.words,
                                     topic=t, level=wc_level)
        name = f"L{wc_level}_T{t:03d}"
        (wc_dir / f"{name}.svg").write_text(render.render_svg(spec, style), encoding="utf-8")
        index.append({"topic": t, "level": wc_level, "file": f"{name}.svg",
                      "words": [[w, p] for w, p in spec.words]})
    _write_json(wc_dir / "wordclouds.json", index)
    return {"layout": coords.method, "stress": coords.stress, "wordclouds": len(index)}


RUNNERS: dict[str, Callable[[Config], dict]] = {
    "acquire": run_acquire,
    "preprocess": run_preprocess,
    "model": run_model,
    "analyse": run_analyse,
    "visualise": run_visualise,
}

# files each stage writes; wordclouds are listed dynamically
OUTPUTS = {s: tuple(f for f, p in PRODUCER.items() if p == s) for s in STAGES}
OUTPUTS["visualise"] = ("layout.csv", "landscape.svg", "stacked_densities.svg", "arc.svg")


def _outputs(out: Path, stage: str) -> dict[str, str]:
    names = [n for n in OUTPUTS[stage] if (out / n).exists()]
    if stage == "visualise" and (out / "wordclouds").is_dir():
        names += [f"wordclouds/{p.name}" for p in sorted((out / "wordclouds").iterdir())]
    return {n: sha256_file(out / n) for n in names}


def _inputs(cfg: Config, stage: str) -> dict[str, str]:
    out = cfg.output_dir
    names = list(REQUIRES[stage])
    if stage == "visualise" and (out / "arc.csv").exists():
        names.append("arc.csv")
    found = {n: sha256_file(out / n) for n in names if (out / n).exists()}
    return {**found, **_external_inputs(cfg, stage)}


def run_stage(cfg: Config, stage: str, force: bool = False) -> dict:
    if stage not in RUNNERS:
        raise ConfigError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out)
    check_upstream(cfg, stage, manifest, force)
    # stale optional outputs from an earlier configuration must not linger
    for name in OUTPUTS[stage]:
        if (out / name).exists():
            (out / name).unlink()
    inputs = _inputs(cfg, stage)
    t0 = time.perf_counter()
    result = RUNNERS[stage](cfg)
    duration = time.perf_counter() - t0
    h = config_hash(cfg, stage)
    manifest.record(stage, h, inputs, _outputs(out, stage))
    manifest.save()
    _record_timing(out, stage, h, duration)
    log.info("%s done in %.2fs", stage, duration)
    return result


def run_all(cfg: Config, force: bool = False) -> dict:
    return {s: run_stage(cfg, s, force) for s in STAGES}


__all__ = ["STAGES", "run_stage", "run_all", "check_upstream", "config_hash", "Manifest",
           "sha256_file", "CACHE_ENV", "TIMINGS", "cache_directory"]
