"""The sixteen attack target transcriptions T1-T16.

``text`` is the attack target (lowercase, letters and spaces only). Where the
bundled reference d' table spells a phrase differently, the table spelling is
kept in ``chart_text`` and ``variant_note`` says why.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


@dataclass(frozen=True)
class Target:
    target_id: str
    text: str
    note: str = ""
    chart_text: str = ""
    variant_note: str = ""

    @property
    def n_chars(self):
        return len(self.text)


TARGETS = (
    Target("T1", "yes", "mono-syll.; 1:2 V:C; glide+fric stop"),
    Target("T2", "open the door", "4 syll.; 4:6 V:C; dental fric. + stops"),
    Target("T3", "call emergency services", "fricative-rich; 8 syll.; 8:16 V:C"),
    Target("T4", "the quick brown fox jumped over the lazy dog", "pangram; 11 syll.; broad coverage",
           chart_text="The quick brown fox..."),
    Target("T5", "shhh she sees the sea fish", "fricative-rich: /sh, s, z/; 6 syll."),
    Target("T6", "do go big bag dig", "voiced stops chain; minimal vowels; 5 syll."),
    Target("T7", "two tall teachers talk to tim", "stop alliteration"),
    Target("T8", "i whisper while walking wildly", "vowel-rich; glides"),
    Target("T9", "pack my box with five dozen liquor jugs", "pangram; many consonant clusters"),
    Target("T10", "glib jocks quiz nymph to vex dwarf", "pangram; high fricative/affricate load"),
    Target("T11", "a mad boxer shot a quick gloved jab to the jaw of his dizzy opponent",
           "pangram"),
    Target("T12",
           "just before twilight the wizard quickly jabbed five boxes of hazy quartz to vex "
           "a plump knights jovial frog",
           "very long pangram; many clusters; vowel centralization",
           variant_note="reference table spells knight's; apostrophe dropped (not in the ASR vocabulary)"),
    Target("T13",
           "twelve jolly grizzlies briskly danced over waxy benches while a flighty kitten kept "
           "humming jazz tunes in the background",
           "long pangram",
           chart_text="twelve jolly grizzlies briskly danced over waxy benches while a fidgety "
                      "vixen kept humming jazz tunes in the background",
           variant_note="reference table reads 'a fidgety vixen'; attacked text reads 'a flighty kitten'"),
    Target("T14",
           "quantum driven flux engines jam beneath zigzagging vortex panels as cryptic bioforms "
           "whisper behind polymorphic glass domes",
           "dense consonant clusters; many fricatives/affricates"),
    Target("T15",
           "while whispering winds wander westward jittery jackals jiggled jellies above velvet "
           "jars beyond flickering bonfires in a frozen jungle",
           "long alliterative pangram",
           chart_text="while whispering winds wander westward jittery jackals juggle velvet jars "
                      "beyond flickering bonfires in a frozen jungle",
           variant_note="reference table reads 'juggle velvet'; attacked text reads 'jiggled jellies above "
                        "velvet'"),
    Target("T16",
           "kindly expedite bizarre frozen jumpsuits for victors whirlwind gala to maximize "
           "xenon emissions before daybreak",
           "long pangram"),
)

BY_ID = {t.target_id: t for t in TARGETS}

# Length groups used for the identity-drift trend check.
SHORT_GROUP = ("T1", "T2", "T6")
# Long targets that fit in (nearly) every synthetic source utterance; T12-T16
# exceed the frame count of the shorter sources.
LONG_GROUP = ("T4", "T9", "T11")


def get(target_id) -> Target:
    try:
        return BY_ID[target_id]
    except KeyError:
        raise KeyError(f"unknown target id {target_id!r}; expected T1..T16") from None


def normalize_text(text):
    """Lowercase, drop characters other than a-z and space, squeeze whitespace."""
    text = text.lower().replace("’", "'")
    text = re.sub(r"[^a-z ]", "", text)
    return " ".join(text.split())


def all_words():
    words = set()
    for t in TARGETS:
        words.update(t.text.split())
        words.update(normalize_text(t.chart_text).split())
    return sorted(words)
