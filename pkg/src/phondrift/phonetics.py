"""Lexicon-based G2P, ARPABET phone classes, alignment, confusion counting,
target profiles, and WER/CER."""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import NamedTuple

VOWELS = frozenset("AA AE AH AO AW AY EH ER EY IH IY OW OY UH UW".split())
CENTRAL_VOWELS = frozenset({"AH", "ER"})
PHONE_CLASS = {
    **{p: "vowel" for p in VOWELS},
    **{p: "stop" for p in "B D G K P T".split()},
    **{p: "affricate" for p in "CH JH".split()},
    **{p: "fricative" for p in "DH F HH S SH TH V Z ZH".split()},
    **{p: "nasal" for p in "M N NG".split()},
    **{p: "approximant" for p in "L R W Y".split()},
}
ARPABET = frozenset(PHONE_CLASS)
VOICED = frozenset("B D G JH DH V Z ZH M N NG L R W Y".split())
OOV = "<OOV>"


def phone_class(p):
    return PHONE_CLASS[p]


def is_voiced(p):
    """Voicing for consonants; vowels are reported as voiced."""
    return p in VOICED or p in VOWELS


def voicing_class(p):
    """Class label with voicing for consonants, e.g. 'stop voiced'."""
    c = PHONE_CLASS[p]
    if c == "vowel":
        return "vowel central" if p in CENTRAL_VOWELS else "vowel"
    return f"{c} {'voiced' if p in VOICED else 'unvoiced'}"


def strip_stress(p):
    return re.sub(r"\d", "", p)


class Lexicon(dict):
    """WORD -> list of pronunciations (tuples of stressless ARPABET symbols)."""

    @classmethod
    def from_lines(cls, lines):
        lex = cls()
        for n, line in enumerate(lines, 1):
            line = line.strip()
            if not line or line.startswith(";;;"):
                continue
            parts = line.split()
            word = re.sub(r"\(\d+\)$", "", parts[0]).upper()
            phones = tuple(strip_stress(p) for p in parts[1:])
            unknown = [p for p in phones if p not in ARPABET]
            if unknown or not phones:
                raise ValueError(f"lexicon line {n}: bad phonemes {unknown or parts}")
            lex.setdefault(word, []).append(phones)
        return lex

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh)

    @classmethod
    def default(cls):
        text = resources.files("phondrift.data").joinpath("cmudict_subset.dict").read_text("utf-8")
        return cls.from_lines(text.splitlines())


_default_lexicon = None


def default_lexicon():
    global _default_lexicon
    if _default_lexicon is None:
        _default_lexicon = Lexicon.default()
    return _default_lexicon


@dataclass(frozen=True)
class PhonemeSequence:
    """Per-word pronunciations; ``None`` marks an out-of-vocabulary word."""

    words: tuple = ()
    oov_words: tuple = ()

    @classmethod
    def of(cls, phonemes):
        return cls((tuple(phonemes),)) if phonemes else cls()

    @property
    def phonemes(self):
        return tuple(p for w in self.words if w is not None for p in w)

    @property
    def tokens(self):
        """Flat symbols with the OOV marker in place of unknown words."""
        out = []
        for w in self.words:
            out.extend([OOV] if w is None else w)
        return tuple(out)

    @property
    def oov_count(self):
        return len(self.oov_words)

    def __len__(self):
        return len(self.phonemes)


def g2p(text, lex=None) -> PhonemeSequence:
    lex = default_lexicon() if lex is None else lex
    words, oov = [], []
    for raw in text.split():
        word = re.sub(r"[^A-Z']", "", raw.upper().replace("’", "'"))
        if not word:
            continue
        prons = lex.get(word) or lex.get(word.replace("'", ""))
        if prons:
            words.append(prons[0])
        else:
            words.append(None)
            oov.append(word)
    return PhonemeSequence(tuple(words), tuple(oov))


class EditOp(NamedTuple):
    kind: str  # match | sub | ins | del
    ref: str | None
    hyp: str | None


def edit_table(ref, hyp):
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]))
    return d


def edit_distance(ref, hyp):
    return edit_table(ref, hyp)[-1][-1]


def align(ref, hyp):
    """Unit-cost Levenshtein alignment.

    Traceback prefers the diagonal (match or substitution), then deletion,
    then insertion.
    """
    ref = ref.phonemes if isinstance(ref, PhonemeSequence) else tuple(ref)
    hyp = hyp.phonemes if isinstance(hyp, PhonemeSequence) else tuple(hyp)
    d = edit_table(ref, hyp)
    i, j = len(ref), len(hyp)
    ops = []
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            kind = "match" if ref[i - 1] == hyp[j - 1] else "sub"
            ops.append(EditOp(kind, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            ops.append(EditOp("del", ref[i - 1], None))
            i -= 1
        else:
            ops.append(EditOp("ins", None, hyp[j - 1]))
            j -= 1
    ops.reverse()
    return ops


def alignment_distance(ops):
    return sum(op.kind != "match" for op in ops)


@dataclass
class Confusion:
    matrix: Counter = field(default_factory=Counter)  # (ref, hyp) -> count, diagonal = matches
    insertions: Counter = field(default_factory=Counter)  # hyp -> count
    deletions: Counter = field(default_factory=Counter)  # ref -> count
    class_rollup: Counter = field(default_factory=Counter)  # (class, class) over substitutions
    voicing_rollup: Counter = field(default_factory=Counter)

    def count(self, ref, hyp):
        return self.matrix[(ref, hyp)]

    @property
    def substitutions(self):
        return sum(c for (a, b), c in self.matrix.items() if a != b)

    @property
    def matches(self):
        return sum(c for (a, b), c in self.matrix.items() if a == b)

    @property
    def total_ops(self):
        return sum(self.matrix.values()) + sum(self.insertions.values()) + sum(
            self.deletions.values())

    @property
    def centralization(self):
        """Fraction of vowel->vowel substitutions landing on a central vowel (AH/ER).

        Returns None when there are no vowel substitutions.
        """
        vowel_subs = [(a, b, c) for (a, b), c in self.matrix.items()
                      if a != b and a in VOWELS and b in VOWELS]
        total = sum(c for _, _, c in vowel_subs)
        if total == 0:
            return None
        return sum(c for _, b, c in vowel_subs if b in CENTRAL_VOWELS) / total

    def write_csv(self, path):
        refs = sorted({a for a, _ in self.matrix} | set(self.deletions))
        hyps = sorted({b for _, b in self.matrix} | set(self.insertions))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ref"] + hyps + ["del"])
            for a in refs:
                writer.writerow([a] + [self.matrix[(a, b)] for b in hyps] + [self.deletions[a]])
            writer.writerow(["ins"] + [self.insertions[b] for b in hyps] + [0])


def confusion_matrix(pairs) -> Confusion:
    conf = Confusion()
    for ref, hyp in pairs:
        for op in align(ref, hyp):
            if op.kind in ("match", "sub"):
                conf.matrix[(op.ref, op.hyp)] += 1
                if op.kind == "sub":
                    conf.class_rollup[(phone_class(op.ref), phone_class(op.hyp))] += 1
                    conf.voicing_rollup[(voicing_class(op.ref), voicing_class(op.hyp))] += 1
            elif op.kind == "ins":
                conf.insertions[op.hyp] += 1
            else:
                conf.deletions[op.ref] += 1
    return conf


@dataclass(frozen=True)
class Profile:
    text: str
    n_phonemes: int
    n_vowels: int
    n_consonants: int
    class_counts: dict
    oov_words: tuple

    @property
    def syllables(self):
        """Vowel-phoneme count, used as a syllable proxy."""
        return self.n_vowels

    @property
    def vc_ratio(self):
        return f"{self.n_vowels}:{self.n_consonants}"


def profile_target(text, lex=None) -> Profile:
    seq = g2p(text, lex)
    phones = seq.phonemes
    classes = Counter(phone_class(p) for p in phones)
    n_v = classes.get("vowel", 0)
    return Profile(text, len(phones), n_v, len(phones) - n_v, dict(sorted(classes.items())),
                   seq.oov_words)


def note_claims(note):
    """Pull the 'N syll.' and 'V:C' figures out of a short phonetic note."""
    syl = re.search(r"(\d+)\s*syll", note)
    vc = re.search(r"(\d+):(\d+)\s*V:C", note)
    if "mono-syll" in note and not syl:
        syl_n = 1
    else:
        syl_n = int(syl.group(1)) if syl else None
    return {"syllables": syl_n, "vc": f"{vc.group(1)}:{vc.group(2)}" if vc else None}


def profile_report(targets, lex=None):
    """One row per target comparing lexicon-derived counts with the note's figures."""
    rows = []
    for t in targets:
        p = profile_target(t.text, lex)
        claims = note_claims(t.note)
        rows.append({
            "target_id": t.target_id,
            "text": t.text,
            "n_phonemes": p.n_phonemes,
            "syllable_proxy": p.syllables,
            "vc_ratio": p.vc_ratio,
            "note_syllables": claims["syllables"],
            "note_vc": claims["vc"],
            "syllables_match": None if claims["syllables"] is None
            else claims["syllables"] == p.syllables,
            "vc_match": None if claims["vc"] is None else claims["vc"] == p.vc_ratio,
            "oov": " ".join(p.oov_words),
            **{f"n_{c}": p.class_counts.get(c, 0) for c in
               ("vowel", "stop", "affricate", "fricative", "nasal", "approximant")},
        })
    return rows


def wer_cer(ref_text, hyp_text):
    """Word and character error rates.

    An empty reference is scored against a denominator of 1, so the rate
    equals the number of inserted tokens.
    """
    ref_w, hyp_w = ref_text.split(), hyp_text.split()
    ref_c, hyp_c = " ".join(ref_w), " ".join(hyp_w)
    wer = edit_distance(ref_w, hyp_w) / max(len(ref_w), 1)
    cer = edit_distance(ref_c, hyp_c) / max(len(ref_c), 1)
    return wer, cer
