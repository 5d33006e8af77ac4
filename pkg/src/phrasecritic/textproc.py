"""Tokenisation, lexicon-based POS tagging, and attribute-phrase chunking.

The chunker is rule based. Two patterns are recognised, longest match first,
scanning left to right without overlap:

  pattern A:  NOUN VERB ADJ                  "beak is black"  -> (black; beak)
  pattern B:  ADJ (CONJ? ADJ)* NOUN          "red and orange head"
                                             -> (red, orange; head)

Both normalise to an adjective list plus a head noun, so downstream code
never sees the surface order.
"""

from __future__ import annotations

from dataclasses import dataclass

NOUN = "NOUN"
ADJ = "ADJ"
VERB = "VERB"
CONJ = "CONJ"
DET = "DET"
OTHER = "OTHER"

POS_TAGS = (NOUN, ADJ, VERB, CONJ, DET, OTHER)


@dataclass(frozen=True)
class TaggedToken:
    """A surface token with its POS tag and attribute category.

    category is the lexicon category ("color", "size", "pattern", "part") or
    None for function words and out-of-lexicon tokens.
    """

    text: str
    pos: str
    category: str | None


@dataclass(frozen=True)
class AttributePhrase:
    """A normalised attribute phrase: adjectives plus one head noun.

    span is the half-open token range the phrase was chunked from.
    adj_positions/noun_position record the sentence indices of the content
    tokens so the phrase can be edited in place.
    """

    adjectives: tuple[str, ...]
    noun: str
    span: tuple[int, int]
    categories: tuple[str, ...]
    adj_positions: tuple[int, ...]
    noun_position: int

    def tokens(self) -> tuple[str, ...]:
        return self.adjectives + (self.noun,)


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokenisation; the world has no punctuation."""
    return text.lower().split()


def pos_tag(tokens, lexicon) -> list[TaggedToken]:
    """Tag tokens from a lexicon mapping token -> (pos, category).

    Unknown tokens get OTHER/None rather than raising, so foreign words in
    a sentence degrade to unchunkable filler.
    """
    tagged = []
    for tok in tokens:
        pos, category = lexicon.get(tok, (OTHER, None))
        tagged.append(TaggedToken(tok, pos, category))
    return tagged


def _match_pattern_a(tagged, i):
    # NOUN VERB ADJ
    if i + 2 >= len(tagged):
        return None
    noun, verb, adj = tagged[i], tagged[i + 1], tagged[i + 2]
    if noun.pos == NOUN and verb.pos == VERB and adj.pos == ADJ:
        return AttributePhrase(
            adjectives=(adj.text,),
            noun=noun.text,
            span=(i, i + 3),
            categories=(adj.category,),
            adj_positions=(i + 2,),
            noun_position=i,
        )
    return None


def _match_pattern_b(tagged, i):
    # ADJ (CONJ? ADJ)* NOUN, greedy over the adjective run
    if tagged[i].pos != ADJ:
        return None
    adjs = [tagged[i]]
    adj_positions = [i]
    j = i + 1
    while j < len(tagged):
        if tagged[j].pos == ADJ:
            adjs.append(tagged[j])
            adj_positions.append(j)
            j += 1
        elif (
            tagged[j].pos == CONJ
            and j + 1 < len(tagged)
            and tagged[j + 1].pos == ADJ
        ):
            adjs.append(tagged[j + 1])
            adj_positions.append(j + 1)
            j += 2
        else:
            break
    if j < len(tagged) and tagged[j].pos == NOUN:
        return AttributePhrase(
            adjectives=tuple(a.text for a in adjs),
            noun=tagged[j].text,
            span=(i, j + 1),
            categories=tuple(a.category for a in adjs),
            adj_positions=tuple(adj_positions),
            noun_position=j,
        )
    return None


def chunk_attribute_phrases(tagged) -> list[AttributePhrase]:
    """Extract attribute phrases in sentence order.

    At each position the applicable pattern is tried (A starts on a noun, B
    on an adjective); matches are greedy, and the scan resumes past the end
    of a match so phrases never overlap.
    """
    phrases = []
    i = 0
    n = len(tagged)
    while i < n:
        match = _match_pattern_b(tagged, i) or _match_pattern_a(tagged, i)
        if match is not None:
            phrases.append(match)
            i = match.span[1]
        else:
            i += 1
    return phrases


def chunk_sentence(tokens, taxonomy) -> list[AttributePhrase]:
    """Tag with the taxonomy lexicon and chunk in one step."""
    return chunk_attribute_phrases(pos_tag(tokens, taxonomy.lexicon))


def phrase_to_text(phrase: AttributePhrase) -> str:
    """Render a phrase as plain text: adjectives then the noun.

    Conjunctions are not reconstructed, so chunking the result returns a
    phrase with the same adjectives and noun.
    """
    return " ".join(phrase.tokens())
