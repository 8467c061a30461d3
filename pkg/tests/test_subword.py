from collections import Counter

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from stp.errors import ParseError
from stp.subword import EOW, MergeTable, apply_bpe, decode_bpe, learn_bpe, normalize_asr_text, word_counts

TOY = {"low": 5, "lower": 2, "newest": 6, "widest": 3}


@pytest.mark.parametrize("raw,norm", [
    ("Hello, World!", "hello world"),
    ("it's Fine.", "it's fine"),
    ("", ""),
    ("  «Quote»   —  dash… ", "quote dash"),
    ("Don't   STOP", "don't stop"),
])
def test_normalize_asr_text(raw, norm):
    assert normalize_asr_text(raw) == norm


def brute_pair_counts(corpus):
    counts = Counter()
    for word, f in corpus.items():
        syms = list(word[:-1]) + [word[-1] + EOW]
        for a, b in zip(syms, syms[1:]):
            counts[(a, b)] += f
    return counts


def test_first_merge_on_toy_corpus():
    counts = brute_pair_counts(TOY)
    top = max(counts.values())
    assert top == 9
    assert min(p for p, c in counts.items() if c == top) == ("e", "s")
    assert learn_bpe(TOY, 1).merges == (("e", "s"),)


def test_zero_merges():
    assert learn_bpe(TOY, 0).merges == ()


def test_single_word():
    assert learn_bpe({"aaaa": 1}, 1).merges[0] == ("a", "a")


def test_stops_when_no_pair_repeats():
    table = learn_bpe({"ab": 1, "cd": 1}, 10)
    assert table.merges == ()


def test_every_learned_merge_was_most_frequent():
    # replay learning with brute-force counts after each merge
    table = learn_bpe(TOY, 12)
    words = {w: list(w[:-1]) + [w[-1] + EOW] for w in TOY}
    for pair in table.merges:
        counts = Counter()
        for w, syms in words.items():
            for a, b in zip(syms, syms[1:]):
                counts[(a, b)] += TOY[w]
        top = max(counts.values())
        assert counts[pair] == top
        assert pair == min(p for p, c in counts.items() if c == top)
        for w, syms in words.items():
            out, i = [], 0
            while i < len(syms):
                if i + 1 < len(syms) and (syms[i], syms[i + 1]) == pair:
                    out.append(syms[i] + syms[i + 1])
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            words[w] = out


def test_empty_table_gives_characters():
    assert apply_bpe(MergeTable(), "ab c") == ["a", "b" + EOW, "c" + EOW]


def test_newest_by_hand_replay():
    table = learn_bpe(TOY, 10)
    assert table.merges[:6] == (("e", "s"), ("es", "t</w>"), ("l", "o"), ("e", "w"), ("ew", "est</w>"),
                                ("n", "ewest</w>"))
    # n e w e s t</w> -> n e w es t</w> -> n e w est</w> -> n ew est</w>
    assert apply_bpe(MergeTable(table.merges[:4]), "newest") == ["n", "ew", "est</w>"]
    assert apply_bpe(table, "newest") == ["newest</w>"]


def test_merges_undo_to_characters():
    table = learn_bpe(TOY, 10)
    for word in TOY:
        toks = apply_bpe(table, word)
        assert list("".join(toks).replace(EOW, "")) == list(word)


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=60))
def test_lossless(text):
    assume(EOW not in text)
    table = learn_bpe(word_counts(["the lowest newer widest tests", text, text]), 40)
    assert decode_bpe(apply_bpe(table, text)) == " ".join(text.split())


def test_lossless_random_codepoints():
    rng = np.random.default_rng(8)
    table = learn_bpe(word_counts(["the lowest newer widest tests"] * 3), 20)
    for _ in range(200):
        cps = rng.integers(0x20, 0x3000, size=rng.integers(0, 40))
        text = "".join(chr(c) for c in cps if not 0xD800 <= c < 0xE000)
        assert decode_bpe(apply_bpe(table, text)) == " ".join(text.split())


def test_monotone_token_count():
    rng = np.random.default_rng(0)
    words = ["".join(rng.choice(list("abcde"), size=rng.integers(1, 8))) for _ in range(200)]
    corpus = Counter(words)
    table = learn_bpe(corpus, 60)
    for w in list(corpus)[:50]:
        lengths = [len(apply_bpe(MergeTable(table.merges[:k]), w)) for k in range(len(table) + 1)]
        assert all(a >= b for a, b in zip(lengths, lengths[1:]))


def test_deterministic_bytes(tmp_path):
    corpus = Counter("the quick brown fox jumps over the lazy dog the end".split() * 3)
    a, b = learn_bpe(corpus, 30), learn_bpe(dict(reversed(list(corpus.items()))), 30)
    assert a.dumps() == b.dumps()


def test_table_roundtrip(tmp_path):
    table = learn_bpe(TOY, 8)
    path = tmp_path / "codes.txt"
    table.save(path)
    back = MergeTable.load(path)
    assert back == table
    assert path.read_text().startswith("#version")


def test_table_bad_header():
    with pytest.raises(ParseError):
        MergeTable.loads("e s\n")
    with pytest.raises(ParseError):
        MergeTable.loads("#version: 1\na b c\n")
