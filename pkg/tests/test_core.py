import json

import pytest
from hypothesis import given, strategies as st

from sceneseg.core import (
    ClassLabel,
    InvalidIntervalError,
    Taxonomy,
    TaxonomyError,
    internal_boundaries,
    load_taxonomy,
    make_annotation,
    tiou,
    toy_taxonomy,
    validate_annotation,
)
from sceneseg.core import Scene, VideoAnnotation


def test_default_taxonomy_shape(tax):
    assert tax.num_classes == 82
    assert tax.group_sizes == (25, 34, 23)
    assert tax.groups == ("presentation form", "style", "place")
    assert [c.id for c in tax.classes] == list(range(82))
    assert all(1 <= len(c.path) <= 3 for c in tax.classes)
    names = {c.name for c in tax.classes}
    for expected in ("office", "dubbing", "lovers", "friends", "family", "teaching", "animation", "interview", "studio"):
        assert expected in names


def test_taxonomy_roundtrip_through_file(tmp_path, tax):
    p = tmp_path / "tax.json"
    p.write_text(json.dumps(tax.to_dict()))
    assert load_taxonomy(p) == tax


def test_taxonomy_rejects_sparse_ids_and_deep_paths():
    with pytest.raises(TaxonomyError):
        Taxonomy(("a",), (ClassLabel(1, "x", 0, ("x",)),))
    with pytest.raises(TaxonomyError):
        Taxonomy(("a",), (ClassLabel(0, "x", 0, ("a", "b", "c", "x")),))
    with pytest.raises(TaxonomyError):
        Taxonomy.from_dict({"groups": ["a"]})


def test_tiou_examples():
    assert tiou((0, 2), (0, 2)) == 1.0
    assert tiou((0, 1), (2, 3)) == 0.0
    assert tiou((0, 2), (1, 3)) == pytest.approx(1 / 3, abs=1e-15)


def test_tiou_rejects_empty_interval():
    with pytest.raises(InvalidIntervalError):
        tiou((1, 1), (0, 2))
    with pytest.raises(InvalidIntervalError):
        tiou((0, 2), (3, 2))


intervals = st.tuples(st.integers(0, 400), st.integers(1, 200)).map(lambda p: (p[0] / 4, (p[0] + p[1]) / 4))


@given(intervals, intervals, st.integers(-100, 100))
def test_tiou_properties(a, b, shift):
    v = tiou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == tiou(b, a)
    assert (v == 1.0) == (a == b)
    # quarter-second grid and integer shifts keep the arithmetic exact
    assert tiou((a[0] + shift, a[1] + shift), (b[0] + shift, b[1] + shift)) == v


def test_internal_boundaries_examples():
    assert internal_boundaries(make_annotation("v", [], [{0}], 30.0)) == []
    ann = make_annotation("v", [3, 7], [{0}, {1}, {2}], 10.0)
    assert internal_boundaries(ann) == [3, 7]


def test_internal_boundaries_on_corpus(corpus):
    for ann in corpus.split.annotations:
        b = internal_boundaries(ann)
        assert all(0 < x < ann.duration_s for x in b)
        assert all(x < y for x, y in zip(b, b[1:]))
        assert sum(s.duration for s in ann.scenes) == pytest.approx(ann.duration_s, abs=1e-9)


def test_validate_clean_annotation(tax):
    ann = make_annotation("v", [3, 7], [{0, 1}, {2}, {30}], 10.0)
    assert validate_annotation(ann, tax).valid


def test_validate_gap():
    ann = VideoAnnotation("v", 7.0, (Scene(0, 3, frozenset({0})), Scene(4, 7, frozenset({1}))))
    report = validate_annotation(ann, toy_taxonomy(3))
    assert report.kinds() == ["gap"]


def test_validate_mutual_exclusion():
    tax = toy_taxonomy(4, exclusion={1: 0, 2: 0})
    ann = make_annotation("v", [5], [{0, 1}, {2}], 10.0)
    report = validate_annotation(ann, tax)
    assert report.kinds() == ["mutual-exclusion"]
    # one member of the group alone is fine
    assert validate_annotation(make_annotation("v", [5], [{0, 1}, {1}], 10.0), tax).valid


def test_validate_reports_every_problem():
    tax = toy_taxonomy(3)
    ann = VideoAnnotation("v", 10.0, (
        Scene(0.5, 3, frozenset({0})),
        Scene(2, 2, frozenset()),
        Scene(2, 9, frozenset({7})),
    ))
    kinds = set(validate_annotation(ann, tax).kinds())
    assert {"start", "end", "non-positive", "empty-labels", "unknown-label", "overlap"} <= kinds


def test_validate_tolerance():
    ann = VideoAnnotation("v", 10.0, (Scene(0, 3.0004, frozenset({0})), Scene(3.0, 10, frozenset({1}))))
    assert validate_annotation(ann).kinds() == ["overlap"]
    assert validate_annotation(ann, tol=1e-3).valid
