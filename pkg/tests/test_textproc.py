"""Chunker unit tests, including a truth oracle over generated sentences."""

import pytest

from phrasecritic import chunk_sentence, tokenize
from phrasecritic.textproc import (ADJ, CONJ, DET, NOUN, OTHER, VERB,
                                   chunk_attribute_phrases, phrase_to_text,
                                   pos_tag)


def chunks(text, taxonomy):
    return chunk_sentence(tokenize(text), taxonomy)


def test_tokenize_lowercases_and_splits():
    assert tokenize("This  Bird HAS a\tRED beak") == \
        ["this", "bird", "has", "a", "red", "beak"]


def test_pos_tag_uses_lexicon(taxonomy):
    tagged = pos_tag(["this", "is", "a", "red", "beak", "and"],
                     taxonomy.lexicon)
    assert [t.pos for t in tagged] == [DET, VERB, DET, ADJ, NOUN, CONJ]
    assert tagged[3].category == "color"
    assert tagged[4].category == "part"


def test_pos_tag_unknown_token_is_other(taxonomy):
    (tagged,) = pos_tag(["xylophone"], taxonomy.lexicon)
    assert (tagged.pos, tagged.category) == (OTHER, None)


def test_adjective_noun_phrase(taxonomy):
    (phrase,) = chunks("red beak", taxonomy)
    assert phrase.adjectives == ("red",)
    assert phrase.noun == "beak"
    assert phrase.span == (0, 2)
    assert phrase.categories == ("color",)


def test_conjoined_adjectives_collapse_into_one_phrase(taxonomy):
    (phrase,) = chunks("red and small beak", taxonomy)
    assert phrase.adjectives == ("red", "small")
    assert phrase.categories == ("color", "size")
    assert phrase.adj_positions == (0, 2)
    assert phrase.noun_position == 3


def test_stacked_adjectives_without_conjunction(taxonomy):
    (phrase,) = chunks("small red beak", taxonomy)
    assert phrase.adjectives == ("small", "red")
    assert phrase.adj_positions == (0, 1)


def test_noun_verb_adjective_normalises_to_same_shape(taxonomy):
    (phrase,) = chunks("beak is red", taxonomy)
    assert phrase.adjectives == ("red",)
    assert phrase.noun == "beak"
    assert phrase.adj_positions == (2,)
    assert phrase.noun_position == 0


def test_scan_is_left_to_right_without_overlap(taxonomy):
    phrases = chunks("this is a red bird with a small beak", taxonomy)
    assert [p.tokens() for p in phrases] == \
        [("red", "bird"), ("small", "beak")]
    spans = [p.span for p in phrases]
    assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))


def test_sentence_with_no_lexicon_words_yields_nothing(taxonomy):
    assert chunks("the weather is nice today", taxonomy) == []


def test_bare_adjective_without_noun_is_not_a_phrase(taxonomy):
    assert chunks("red and small", taxonomy) == []


def test_positions_index_into_the_sentence(tiny_dataset):
    """adj_positions and noun_position must point at the surface tokens."""
    taxonomy = tiny_dataset.taxonomy
    checked = 0
    for sentence in tiny_dataset.sentences:
        for phrase in chunk_sentence(sentence.tokens, taxonomy):
            assert sentence.tokens[phrase.noun_position] == phrase.noun
            for pos, adj in zip(phrase.adj_positions, phrase.adjectives):
                assert sentence.tokens[pos] == adj
            lo, hi = phrase.span
            assert {phrase.noun_position, *phrase.adj_positions} <= \
                set(range(lo, hi))
            checked += 1
    assert checked > 100


def test_every_generated_sentence_chunks(tiny_dataset):
    for sentence in tiny_dataset.sentences:
        assert chunk_sentence(sentence.tokens, tiny_dataset.taxonomy)


def test_phrase_text_round_trips_through_the_chunker(taxonomy):
    (original,) = chunks("red and small beak", taxonomy)
    (rechunked,) = chunks(phrase_to_text(original), taxonomy)
    assert rechunked.adjectives == original.adjectives
    assert rechunked.noun == original.noun


def test_chunking_empty_sentence():
    assert chunk_attribute_phrases([]) == []


@pytest.mark.parametrize("text,expected", [
    ("red beak and small wing", [("red", "beak"), ("small", "wing")]),
    ("beak is red and wing is small",
     [("red", "beak"), ("small", "wing")]),
    ("this bird has a red beak", [("red", "beak")]),
])
def test_phrase_inventory(taxonomy, text, expected):
    got = [p.tokens() for p in chunks(text, taxonomy)]
    assert got == expected
