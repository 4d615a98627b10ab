import xml.etree.ElementTree as ET

import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from dapmav.analytics import PositionalDensity, Segment
from dapmav.errors import DataError
from dapmav.layout import (LayoutCoords, WordCloudSpec, classical_mds, kruskal_stress, sne_layout,
                           wordcloud_data)
from dapmav.render import (ArcFigure, DensityStack, Landscape, Style, font_sizes, render_svg,
                           spiral_placement)
from dapmav.sentiment import EmotionalArc

from oracles import procrustes_error

NS = "{http://www.w3.org/2000/svg}"


def parse(svg: str):
    return ET.fromstring(svg.encode("utf-8"))


def find(root, tag):
    return root.iter(NS + tag)


# -- MDS ----------------------------------------------------------------------------------

def test_mds_unit_square():
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    lay = classical_mds(squareform(pdist(pts)))
    assert procrustes_error(pts, lay.coords) < 1e-6
    assert lay.stress < 1e-9
    assert np.allclose(lay.coords.mean(axis=0), 0, atol=1e-12)


def test_mds_equilateral_triangle():
    d = np.ones((3, 3)) - np.eye(3)
    x = classical_mds(d).coords
    sides = pdist(x)
    assert sides == pytest.approx([1.0, 1.0, 1.0], abs=1e-9)


def test_mds_single_point():
    lay = classical_mds(np.zeros((1, 1)), ids=[7])
    assert lay.coords.tolist() == [[0.0, 0.0]] and lay.ids == (7,)


def test_mds_sign_convention_and_determinism():
    rng = np.random.default_rng(1)
    d = squareform(pdist(rng.normal(size=(8, 2))))
    a, b = classical_mds(d), classical_mds(d.copy())
    assert a.coords.tobytes() == b.coords.tobytes()
    for j in range(2):
        col = a.coords[:, j]
        assert col[np.argmax(np.abs(col))] > 0


@pytest.mark.parametrize("bad", [
    np.array([[0.0, 1.0], [2.0, 0.0]]),
    np.ones((2, 3)),
    np.array([[0.0, -1.0], [-1.0, 0.0]]),
])
def test_mds_rejects_invalid(bad):
    with pytest.raises(ValueError):
        classical_mds(bad)


def test_kruskal_stress_zero_for_exact():
    x = np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 0.0]])
    assert kruskal_stress(squareform(pdist(x)), x) == pytest.approx(0.0, abs=1e-12)


def test_layout_rejects_non_finite():
    with pytest.raises(DataError):
        LayoutCoords((0,), np.array([[np.nan, 0.0]]), 0.0)


# -- neighbour embedding -----------------------------------------------------------------------

def two_clusters(seed=0):
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.normal(0, 0.05, (5, 3)), rng.normal(0, 0.05, (5, 3)) + 5])
    return squareform(pdist(pts))


def test_sne_separates_planted_clusters():
    lay = sne_layout(two_clusters(), perplexity=3, iterations=500, seed=1)
    y = lay.coords
    a, b = y[:5], y[5:]
    inter = np.linalg.norm(a.mean(0) - b.mean(0))
    intra = max(np.linalg.norm(a - a.mean(0), axis=1).mean(), np.linalg.norm(b - b.mean(0), axis=1).mean())
    assert inter > 3 * intra


def test_sne_is_deterministic_and_monotone():
    d = two_clusters(2)
    a = sne_layout(d, perplexity=3, iterations=300, seed=5)
    b = sne_layout(d, perplexity=3, iterations=300, seed=5)
    assert a.coords.tobytes() == b.coords.tobytes()
    kls = [kl for _, kl in a.kl_history]
    assert all(x >= y for x, y in zip(kls, kls[1:]))
    assert a.method == "sne"


def test_sne_smallest_case():
    d = squareform(pdist(np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)))
    lay = sne_layout(d, perplexity=2, iterations=100, seed=0)
    assert np.isfinite(lay.coords).all() and lay.coords.shape == (4, 2)


def test_sne_preconditions():
    d3 = np.ones((3, 3)) - np.eye(3)
    with pytest.raises(ValueError):
        sne_layout(d3)
    with pytest.raises(ValueError):
        sne_layout(two_clusters(), perplexity=10)


# -- word clouds --------------------------------------------------------------------------------

def test_wordcloud_top_k():
    spec = wordcloud_data({"a": 0.5, "b": 0.3, "c": 0.2}, 2)
    assert spec.words == (("a", 0.5), ("b", 0.3))


def test_wordcloud_top_k_larger_than_vocabulary():
    assert len(wordcloud_data({"a": 0.5, "b": 0.5}, 10).words) == 2


def test_wordcloud_ties_are_lexicographic():
    spec = wordcloud_data({"pear": 0.25, "apple": 0.25, "fig": 0.25, "date": 0.25}, 4)
    assert [w for w, _ in spec.words] == ["apple", "date", "fig", "pear"]


def test_wordcloud_weights_are_unchanged():
    probs = np.array([0.1, 0.0, 0.6, 0.3])
    spec = wordcloud_data(probs, 3, words=["w", "x", "y", "z"])
    assert spec.words == (("y", 0.6), ("z", 0.3), ("w", 0.1))


def test_wordcloud_rejects_zero_k():
    with pytest.raises(ValueError):
        wordcloud_data({"a": 1.0}, 0)


def test_wordcloud_spec_invariants():
    with pytest.raises(ValueError):
        WordCloudSpec((("a", 0.2), ("b", 0.5)), 2)
    with pytest.raises(ValueError):
        WordCloudSpec((("a", 1.5),), 1)


# -- SVG -------------------------------------------------------------------------------------------

def test_wordcloud_svg_structure():
    svg = render_svg(wordcloud_data({"psa": 0.5, "biopsy": 0.3, "scan": 0.2}, 3, topic=1))
    root = parse(svg)
    texts = list(find(root, "text"))
    assert [t.text for t in texts] == ["psa", "biopsy", "scan"]
    sizes = [float(t.get("font-size")) for t in texts]
    assert sizes == sorted(sizes, reverse=True) and sizes[0] > sizes[-1]
    assert [float(t.get("data-weight")) for t in texts] == [0.5, 0.3, 0.2]


def test_spiral_words_do_not_overlap():
    style = Style()
    words = [f"word{i}" for i in range(25)]
    sizes = font_sizes(list(np.linspace(1, 0.1, 25)), style)
    pos = spiral_placement(words, sizes, style)
    boxes = [(x - 0.3 * s * len(w), y - 0.8 * s, x + 0.3 * s * len(w), y + 0.2 * s)
             for (x, y), w, s in zip(pos, words, sizes)]
    for i in range(len(boxes)):
        for j in range(i):
            a, b = boxes[i], boxes[j]
            assert not (a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3])


def _landscape():
    rng = np.random.default_rng(0)
    lay = classical_mds(squareform(pdist(rng.normal(size=(5, 2)))), ids=[0, 1, 2, 3, 4])
    top = {t: [(f"w{t}a", 0.5), (f"w{t}b", 0.3), (f"w{t}c", 0.1), (f"w{t}d", 0.05)] for t in range(5)}
    labels = {0: "diagnosis", 1: "treatment", 2: "side effects", 3: "support", 4: "family"}
    return Landscape(lay, top, labels)


def test_landscape_svg_structure():
    root = parse(render_svg(_landscape()))
    texts = [t for t in find(root, "text") if t.get("class") == "word"]
    assert len(texts) == 15
    assert len({t.get("fill") for t in texts}) == 5
    for t in range(5):
        sizes = [float(x.get("font-size")) for x in texts if x.get("data-topic") == str(t)]
        assert sizes == sorted(sizes, reverse=True)


def test_landscape_unlabelled_topics_use_fallback_colour():
    land = _landscape()
    root = parse(render_svg(Landscape(land.coords, land.top_words, {})))
    fills = {t.get("fill") for t in find(root, "text") if t.get("class") == "word"}
    assert fills == {Style().unlabelled_color}


def _arc():
    x = np.linspace(0, 1, 11)
    return EmotionalArc(x, np.sin(3 * x) - 0.5, np.ones(11), 0.05, 100)


def test_arc_svg_structure():
    segs = [Segment(0.0, 0.4, "diagnosis"), Segment(0.4, 1.0, "support")]
    root = parse(render_svg(ArcFigure(_arc(), segs)))
    assert len(list(find(root, "polyline"))) == 1
    rects = [r for r in find(root, "rect") if r.get("class") == "segment"]
    assert len(rects) == 2
    assert [r.find(NS + "title").text for r in rects] == ["diagnosis", "support"]


def test_arc_without_segments_still_has_a_rectangle():
    root = parse(render_svg(_arc()))
    assert len(list(find(root, "polyline"))) == 1
    assert len([r for r in find(root, "rect") if r.get("class") == "segment"]) >= 1


def test_stacked_densities_svg():
    dens = {t: PositionalDensity(t, np.full(4, 1.0)) for t in (3, 1, 2)}
    root = parse(render_svg(DensityStack(dens, [2, 3, 1], {1: "a"})))
    assert len(list(find(root, "polygon"))) == 3
    labels = [t.text for t in find(root, "text") if t.text and t.text.startswith("T")]
    assert labels == ["T2", "T3", "T1"]


def test_svgs_are_byte_identical_across_calls():
    for artifact in (_landscape(), ArcFigure(_arc()), wordcloud_data({"a": 0.6, "b": 0.4}, 2)):
        assert render_svg(artifact) == render_svg(artifact)


def test_style_overrides_and_escaping():
    style = Style.from_dict({"width": 300, "height": 200, "palette": ["#111111"]})
    svg = render_svg(wordcloud_data({"<&>": 1.0}, 1), style)
    root = parse(svg)
    assert root.get("width") == "300"
    assert next(find(root, "text")).text == "<&>"
    with pytest.raises(ValueError, match="unknown style"):
        Style.from_dict({"colour": "red"})


def test_render_rejects_unknown_artifact():
    with pytest.raises(TypeError):
        render_svg(object())
