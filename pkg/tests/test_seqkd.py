import inspect
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stp.errors import AlignmentError, MissingFrameCountError, ParseError, ValidationError
from stp.lm import train_ngram_lm
from stp.search import DecodeConfig, beam_search, make_ngram_scorer
from stp.seqkd import (
    ParallelDataset,
    Reference,
    Utterance,
    build_multi_ref,
    filter_utterances,
    format_tsv,
    generate_pseudo_labels,
    parse_recipe,
    parse_tsv,
)

from toys import ForcedScorer

ORIG = ParallelDataset.from_pairs([
    ("u1", "Hello, World!", "Hallo Welt!"),
    ("u2", "Good morning.", "Guten Morgen."),
    ("u3", "Thank you", "Danke"),
])
Y = {"u1": "hallo welt", "u2": "guten morgen", "u3": "danke"}
Z = [("u3", "vielen dank"), ("u1", "hallo, welt"), ("u2", "morgen")]


def test_default_beam_is_five():
    assert inspect.signature(generate_pseudo_labels).parameters["beam_width"].default == 5


def test_forced_teacher():
    teacher = ForcedScorer(4, [2, 1, 2], eos=3)
    out = generate_pseudo_labels(teacher, [("a", "x y"), ("b", "")])
    assert out == [("a", "t2 t1 t2"), ("b", "t2 t1 t2")]


def test_ngram_teacher_equals_direct_beam_search():
    lm = train_ngram_lm(["Hallo Welt !", "Guten Morgen .", "Danke schön"], order=3)
    teacher = make_ngram_scorer(lm)
    sources = [("u1", "Hallo"), ("u2", "Guten"), ("u3", "Danke")]
    out = generate_pseudo_labels(teacher, sources, max_len=12)
    for (utt, src), (utt2, tgt) in zip(sources, out):
        best = beam_search(teacher, src.split(), DecodeConfig(5, 12))[0].tokens
        if best and best[-1] == teacher.eos:
            best = best[:-1]
        assert utt == utt2 and tgt == " ".join(teacher.vocab[t] for t in best)


def test_pseudo_labels_order_and_jobs():
    teacher = ForcedScorer(3, [0, 1], eos=2)
    sources = [(f"u{i}", "s") for i in range(50)]
    a = generate_pseudo_labels(teacher, sources)
    assert [u for u, _ in a] == [u for u, _ in sources]
    assert generate_pseudo_labels(teacher, sources, jobs=2) == a


def test_recipe_parsing():
    assert parse_recipe("X+Y+Z") == ("X", "Y", "Z")
    for bad in ["", "X++Y", "X+X"]:
        with pytest.raises(ValidationError):
            parse_recipe(bad)


def test_x_plus_y():
    ds = build_multi_ref(ORIG, {"Y": Y}, "X+Y")
    flat = ds.flatten()
    assert len(flat) == 2 * len(ORIG)
    assert flat[0] == ("u1", "X", "Hello, World!", "Hallo Welt!")
    assert flat[1] == ("u1", "Y", "Hello, World!", "hallo welt")


def test_y_replaces_original():
    ds = build_multi_ref(ORIG, {"Y": Y}, "Y")
    assert all(len(r.refs) == 1 and r.refs[0].tag == "Y" for r in ds)


def test_x_y_z_and_partitioning():
    ds = build_multi_ref(ORIG, {"Y": Y, "Z": Z}, "X+Y+Z")
    flat = ds.flatten()
    assert len(flat) == 3 * len(ORIG)
    groups = {}
    for utt, tag, _, _ in flat:
        groups.setdefault(utt, Counter())[tag] += 1
    assert groups == {u: Counter("XYZ") for u in ORIG.utt_ids}


def test_alignment_errors():
    with pytest.raises(AlignmentError):
        build_multi_ref(ORIG, {"Y": Y, "Z": Z[:2]}, "X+Y+Z")
    with pytest.raises(AlignmentError):
        build_multi_ref(ORIG, {"Y": {**Y, "u9": "extra"}}, "X+Y")
    with pytest.raises(AlignmentError):
        build_multi_ref(ORIG, {}, "X+Y")


def test_dataset_invariants():
    with pytest.raises(ValidationError):
        ParallelDataset.from_pairs([("a", "s", "t"), ("a", "s", "t")])
    with pytest.raises(ValidationError):
        Utterance("a", "s", ())


def test_frame_boundary():
    ds = ParallelDataset.from_pairs([("a", "s", "t"), ("b", "s", "t")])
    out = filter_utterances(ds, {"a": 3000, "b": 3001})
    assert out.utt_ids == ["a"]


def test_char_boundary():
    ds = ParallelDataset.from_pairs([("a", "s" * 400, "t" * 400), ("b", "s", "t" * 401), ("c", "s" * 401, "t")])
    out = filter_utterances(ds, {"a": 1, "b": 1, "c": 1})
    assert out.utt_ids == ["a"]


def test_char_limit_checks_every_reference():
    ds = ParallelDataset((Utterance("a", "s", (Reference("X", "t"), Reference("Y", "t" * 401))),))
    assert len(filter_utterances(ds, {"a": 10})) == 0


def test_empty_and_missing():
    assert len(filter_utterances(ParallelDataset(), {})) == 0
    with pytest.raises(MissingFrameCountError):
        filter_utterances(ORIG, {"u1": 1})


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6000), st.integers(0, 500)), max_size=30))
def test_filter_is_order_preserving_subset(rows):
    ds = ParallelDataset.from_pairs([(f"u{i}", "s" * n, "t") for i, (_, n) in enumerate(rows)])
    frames = {f"u{i}": f for i, (f, _) in enumerate(rows)}
    out = filter_utterances(ds, frames)
    expected = [f"u{i}" for i, (f, n) in enumerate(rows) if f <= 3000 and n <= 400]
    assert out.utt_ids == expected


def test_tsv_roundtrip():
    ds = build_multi_ref(ORIG, {"Y": Y, "Z": Z}, "X+Y+Z")
    text = format_tsv(ds)
    assert parse_tsv(text.splitlines(True)) == ds
    assert text.count("\n") == 9


def test_tsv_errors():
    with pytest.raises(ParseError) as err:
        parse_tsv(["a\tX\ts\tt\n", "b\tX\ts\n"])
    assert err.value.line == 2
    with pytest.raises(ParseError):
        parse_tsv(["a\tX\ts\tt\n", "a\tY\tother\tt\n"])
