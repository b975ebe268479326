import io

import pytest
from hypothesis import given, strategies as st

from stressnet.errors import EmptyLexicon, NoNucleus, UnknownVowel
from stressnet.lexicon import (
    NUCLEUS_TAGS,
    PronEntry,
    StressLevel,
    nucleus_type_of,
    parse_dictionary,
    stress_from_digit,
    syllabify,
)


def parse(text):
    return parse_dictionary(io.StringIO(text))


class TestParseDictionary:
    def test_single_line(self):
        lex = parse("OVERCOME  OW2 V ER0 K AH1 M\n")
        entries = lex.lookup("overcome")
        assert len(entries) == 1
        assert len(entries[0].phonemes) == 6
        assert entries[0].vowel_count() == 3

    def test_comment_lines_skipped(self):
        lex = parse(";;; a comment\nCAT  K AE1 T\n;;; another\n")
        assert lex.report.n_comments == 2
        assert lex.report.n_entries == 1

    def test_alternate_pronunciations_grouped(self):
        lex = parse("READ  R IY1 D\nREAD(1)  R EH1 D\n")
        variants = lex.lookup("READ")
        assert len(variants) == 2
        assert [v.variant_index for v in variants] == [0, 1]
        assert variants[0].phonemes == ("R", "IY1", "D")
        assert variants[1].phonemes == ("R", "EH1", "D")

    def test_empty_stream_raises(self):
        with pytest.raises(EmptyLexicon):
            parse(";;; nothing but comments\n")

    def test_malformed_line_counted_and_skipped(self):
        lex = parse("CAT  K AE1 T\nBAD  K AE T\nWORSE\n")
        assert lex.report.n_entries == 1
        assert len(lex.report.skipped) == 2

    def test_lookup_strips_punctuation_and_case(self):
        lex = parse("CAT  K AE1 T\n")
        assert lex.lookup("Cat!") == lex.lookup("CAT")
        assert "cat," in lex


class TestSyllabify:
    def test_overcome(self):
        entry = PronEntry("OVERCOME", ("OW2", "V", "ER0", "K", "AH1", "M"))
        syl = syllabify(entry)
        assert syl.stresses() == [StressLevel.SECONDARY, StressLevel.NON_STRESS,
                                  StressLevel.PRIMARY]
        assert syl.nucleus_tags() == ["ow", "er", "ah"]

    def test_emotion(self):
        entry = PronEntry("EMOTION", ("IH0", "M", "OW1", "SH", "AH0", "N"))
        syl = syllabify(entry)
        assert syl.stresses() == [StressLevel.NON_STRESS, StressLevel.PRIMARY,
                                  StressLevel.NON_STRESS]

    def test_single_vowel(self):
        syl = syllabify(PronEntry("CAT", ("K", "AE1", "T")))
        assert len(syl.syllables) == 1
        assert syl.syllables[0].onset == ("K",)
        assert syl.syllables[0].coda == ("T",)
        assert syl.syllables[0].stress == StressLevel.PRIMARY

    def test_medial_consonants_go_to_following_onset(self):
        syl = syllabify(PronEntry("X", ("AE1", "B", "S", "T", "AH0")))
        assert syl.syllables[0].coda == ()
        assert syl.syllables[1].onset == ("B", "S", "T")

    def test_no_vowel_raises(self):
        with pytest.raises(NoNucleus):
            syllabify(PronEntry("SHH", ("SH",)))


class TestNucleusType:
    def test_unstressed_ah_is_schwa(self):
        assert nucleus_type_of("AH", 0) == "ax"

    def test_stressed_ah(self):
        assert nucleus_type_of("AH", 1) == "ah"
        assert nucleus_type_of("AH", 2) == "ah"

    def test_identity_lowercase(self):
        assert nucleus_type_of("IY", 2) == "iy"
        assert nucleus_type_of("ER", 0) == "er"

    def test_unknown_vowel(self):
        with pytest.raises(UnknownVowel):
            nucleus_type_of("ZH", 1)

    def test_tag_set_closed(self):
        assert len(NUCLEUS_TAGS) == 16
        assert len(set(NUCLEUS_TAGS)) == 16


class TestFullDictionary:
    def test_round_trip_every_entry(self, lexicon):
        for word in lexicon.words():
            for entry in lexicon.lookup(word):
                assert syllabify(entry).flatten() == list(entry.phonemes)

    def test_syllable_count_equals_vowel_count(self, lexicon):
        for word in lexicon.words():
            for entry in lexicon.lookup(word):
                assert len(syllabify(entry).syllables) == entry.vowel_count()

    def test_tag_inventory_is_exactly_sixteen(self, lexicon):
        produced = set()
        for word in lexicon.words():
            for entry in lexicon.lookup(word):
                produced.update(syllabify(entry).nucleus_tags())
        assert produced == set(NUCLEUS_TAGS)

    def test_golden_stress_patterns(self, lexicon):
        golden = {
            "overcome": [2, 0, 1],
            "emotion": [0, 1, 0],
            "underwear": [1, 0, 2],
        }
        for word, pattern in golden.items():
            syl = syllabify(lexicon.lookup(word)[0])
            assert [int(s) for s in syl.stresses()] == pattern


@given(st.integers(min_value=0, max_value=2))
def test_stress_digit_bijection(digit):
    assert int(stress_from_digit(digit)) == digit
