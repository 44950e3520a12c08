import itertools

import pytest
from hypothesis import given, settings, strategies as st

from phondrift import phonetics as P
from phondrift import targets as T


def test_g2p_examples():
    assert P.g2p("yes").phonemes == ("Y", "EH", "S")
    assert [P.phone_class(p) for p in ("Y", "EH", "S")] == ["approximant", "vowel", "fricative"]
    assert P.g2p("").phonemes == ()
    seq = P.g2p("zzxqk")
    assert seq.tokens == (P.OOV,)
    assert seq.oov_count == 1
    assert seq.phonemes == ()


def test_g2p_keeps_word_boundaries():
    seq = P.g2p("open the door")
    assert len(seq.words) == 3
    assert seq.phonemes == sum((w for w in seq.words), ())


def test_lexicon_covers_every_target():
    for t in T.TARGETS:
        assert P.g2p(t.text).oov_count == 0, t.target_id


def test_lexicon_format_and_homographs():
    lex = P.Lexicon.from_lines([
        ";;; comment",
        "READ  R IY1 D",
        "READ(1)  R EH1 D",
        "A  AH0",
    ])
    assert lex["READ"][0] == ("R", "IY", "D")
    assert P.g2p("read a", lex).phonemes == ("R", "IY", "D", "AH")


def test_every_lexicon_symbol_is_classified():
    lex = P.default_lexicon()
    for prons in lex.values():
        for pron in prons:
            for p in pron:
                assert P.phone_class(p) in {"vowel", "stop", "fricative", "affricate", "nasal",
                                            "approximant"}


def test_align_examples():
    assert P.align(["S", "IY"], ["SH", "IY"]) == [P.EditOp("sub", "S", "SH"),
                                                   P.EditOp("match", "IY", "IY")]
    ops = P.align(["P", "AE", "K"], ["B", "AE"])
    assert [o.kind for o in ops] == ["sub", "match", "del"]
    assert P.alignment_distance(ops) == 2
    same = P.align(["K", "AE", "T"], ["K", "AE", "T"])
    assert all(o.kind == "match" for o in same) and P.alignment_distance(same) == 0


def test_align_tie_break_prefers_substitution():
    # "A B" vs "B C": sub+sub or del+match+ins, both distance 2; sub comes first
    ops = P.align(["A", "B"], ["C", "D"])
    assert [o.kind for o in ops] == ["sub", "sub"]


def _brute_distance(a, b):
    """Exhaustive search over edit scripts via memoized recursion, independent of the DP table."""
    from functools import lru_cache

    @lru_cache(None)
    def d(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(d(i + 1, j + 1) + (a[i] != b[j]), d(i + 1, j) + 1, d(i, j + 1) + 1)
    return d(0, 0)


syms = st.lists(st.sampled_from(["AA", "B", "S", "SH", "IY"]), max_size=6)


@settings(max_examples=150)
@given(syms, syms, syms)
def test_distance_is_metric(a, b, c):
    dab, dba = P.edit_distance(a, b), P.edit_distance(b, a)
    assert dab == dba == _brute_distance(tuple(a), tuple(b))
    assert P.alignment_distance(P.align(a, b)) == dab
    assert P.edit_distance(a, c) <= dab + P.edit_distance(b, c)
    assert (dab == 0) == (a == b)


@settings(max_examples=100)
@given(syms, syms)
def test_alignment_reconstructs_sequences(a, b):
    ops = P.align(a, b)
    assert [o.ref for o in ops if o.kind != "ins"] == a
    assert [o.hyp for o in ops if o.kind != "del"] == b


def test_confusion_examples():
    c = P.confusion_matrix([(["S", "IY"], ["SH", "IY"])])
    assert c.count("S", "SH") == 1
    assert c.class_rollup[("fricative", "fricative")] == 1
    empty = P.confusion_matrix([])
    assert empty.total_ops == 0 and empty.centralization is None
    c = P.confusion_matrix([(["AE"], ["AH"]), (["IY"], ["AH"]), (["AA"], ["AA"])])
    assert c.centralization == 1.0


def test_confusion_voicing_rollup():
    c = P.confusion_matrix([(["B"], ["P"])])
    assert c.voicing_rollup[("stop voiced", "stop unvoiced")] == 1


@settings(max_examples=50)
@given(st.lists(st.tuples(syms, syms), max_size=5))
def test_confusion_total_matches_ops(pairs):
    c = P.confusion_matrix(pairs)
    assert c.total_ops == sum(len(P.align(a, b)) for a, b in pairs)
    assert all(isinstance(v, int) and v >= 0 for v in c.matrix.values())


def test_confusion_csv(tmp_path):
    c = P.confusion_matrix([(["S", "IY"], ["SH", "IY", "N"]), (["K"], [])])
    c.write_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0].startswith("ref,") and lines[0].endswith(",del")
    assert lines[-1].startswith("ins,")


def test_profiles():
    assert P.profile_target("yes").vc_ratio == "1:2"
    assert P.profile_target("a").vc_ratio == "1:0"
    p = P.profile_target("call emergency services")
    assert p.syllables == 8
    # table note says 8:16; the shipped lexicon gives 10 consonants
    assert p.vc_ratio == "8:10"
    assert p.n_vowels + p.n_consonants == p.n_phonemes


def test_profile_report_flags_discrepancies():
    rows = {r["target_id"]: r for r in P.profile_report(T.TARGETS)}
    assert rows["T1"]["vc_match"] is True
    assert rows["T3"]["vc_match"] is False
    assert rows["T3"]["syllables_match"] is True


def test_wer_cer():
    assert P.wer_cer("open the door", "open door")[0] == pytest.approx(1 / 3)
    assert P.wer_cer("abc", "axc")[1] == pytest.approx(1 / 3)
    assert P.wer_cer("", "ab") == (1.0, 2.0)


@given(st.text(alphabet="ab ", max_size=12))
def test_wer_cer_identity(x):
    assert P.wer_cer(x, x) == (0.0, 0.0)


def test_targets_table():
    assert len(T.TARGETS) == 16
    assert [t.target_id for t in T.TARGETS] == [f"T{i}" for i in range(1, 17)]
    assert T.get("T1").text == "yes"
    assert "fidgety vixen" in T.get("T13").chart_text
    assert "flighty kitten" in T.get("T13").text
    assert T.get("T13").variant_note
    assert T.SHORT_GROUP == ("T1", "T2", "T6")
    for t in T.TARGETS:
        assert set(t.text) <= set(" abcdefghijklmnopqrstuvwxyz")
    with pytest.raises(KeyError):
        T.get("T99")
