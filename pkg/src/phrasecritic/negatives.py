"""Hard-negative mining by within-category attribute flipping.

Negatives are built from a true sentence by flipping one token in one or
two of its phrases, so they stay grammatical, mention the same parts, and
differ from the positive in a small, targeted way. Pair construction
additionally drops any negative that happens to still be true of the
scene, so every training pair is genuinely rankable.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import textproc
from .textproc import AttributePhrase
from .worldsim import Dataset, Scene, Taxonomy


@dataclass
class RankPair:
    """One positive/negative sentence pair for margin ranking."""

    scene_id: int
    positive: list[str]
    negative: list[str]
    flips: tuple[int, ...]
    split: str

    def to_json(self) -> dict:
        return {"scene_id": self.scene_id, "positive": list(self.positive),
                "negative": list(self.negative), "flips": list(self.flips)}


def _phrase_flips(phrase: AttributePhrase, taxonomy: Taxonomy):
    """All (sentence position, replacement) edits for one phrase."""
    flips = []
    for pos, adj in zip(phrase.adj_positions, phrase.adjectives):
        for alt in taxonomy.flip_pool(adj):
            flips.append((pos, alt))
    for alt in taxonomy.flip_pool(phrase.noun):
        flips.append((phrase.noun_position, alt))
    return flips


def flip_phrase(phrase: AttributePhrase, taxonomy: Taxonomy,
                seed=0) -> AttributePhrase:
    """Flip one adjective or the head noun to a same-category token.

    The flip is uniform over all valid (position, replacement) edits.
    """
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    flips = _phrase_flips(phrase, taxonomy)
    if not flips:
        raise ValueError("phrase has no same-category alternatives")
    pos, replacement = flips[int(rng.integers(len(flips)))]
    if pos == phrase.noun_position:
        return AttributePhrase(
            adjectives=phrase.adjectives, noun=replacement, span=phrase.span,
            categories=phrase.categories,
            adj_positions=phrase.adj_positions,
            noun_position=phrase.noun_position)
    which = phrase.adj_positions.index(pos)
    adjectives = list(phrase.adjectives)
    adjectives[which] = replacement
    return AttributePhrase(
        adjectives=tuple(adjectives), noun=phrase.noun, span=phrase.span,
        categories=phrase.categories, adj_positions=phrase.adj_positions,
        noun_position=phrase.noun_position)


def _apply_edits(tokens, edits) -> tuple[str, ...]:
    out = list(tokens)
    for pos, replacement in edits:
        out[pos] = replacement
    return tuple(out)


def _flip_counts(n_phrases: int):
    # Uniform over {1, 2}, capped so at least one phrase stays unflipped
    # whenever the sentence has more than one phrase.
    cap = max(1, n_phrases - 1)
    return [f for f in (1, 2) if f <= cap] or [1]


def _enumerate_space(phrases, taxonomy, n_phrases):
    """Every negative reachable under the flip policy, in a fixed order."""
    per_phrase = [_phrase_flips(p, taxonomy) for p in phrases]
    space = []
    for i, flips in enumerate(per_phrase):
        for edit in flips:
            space.append((edit,))
    if 2 in _flip_counts(n_phrases):
        for i, j in combinations(range(n_phrases), 2):
            for edit_i in per_phrase[i]:
                for edit_j in per_phrase[j]:
                    space.append((edit_i, edit_j))
    return space


def make_negatives(tokens, taxonomy: Taxonomy, k: int = 10,
                   seed=0) -> list[list[str]]:
    """Mine up to k distinct negatives for a sentence's token list.

    Each negative flips one token in each of one or two phrases (flip count
    uniform, at least one phrase left untouched when possible). Duplicates
    of the positive or of each other are rejected; if rejection sampling
    stalls the full flip space is enumerated, so the result always has
    exactly min(k, |space|) entries.
    """
    if k < 1:
        raise ValueError("k must be positive")
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    phrases = textproc.chunk_sentence(list(tokens), taxonomy)
    if not phrases:
        raise ValueError("sentence has no attribute phrases to flip")
    positive = tuple(tokens)
    per_phrase = [_phrase_flips(p, taxonomy) for p in phrases]
    counts = _flip_counts(len(phrases))

    seen = {positive}
    negatives: list[list[str]] = []
    budget = 60 * k
    while len(negatives) < k and budget > 0:
        budget -= 1
        n_flip = counts[int(rng.integers(len(counts)))]
        flippable = [i for i in range(len(phrases)) if per_phrase[i]]
        if len(flippable) < n_flip:
            n_flip = len(flippable)
        if n_flip == 0:
            break
        chosen = rng.choice(len(flippable), size=n_flip, replace=False)
        edits = []
        for c in sorted(int(c) for c in chosen):
            flips = per_phrase[flippable[c]]
            edits.append(flips[int(rng.integers(len(flips)))])
        negative = _apply_edits(positive, edits)
        if negative not in seen:
            seen.add(negative)
            negatives.append(list(negative))

    if len(negatives) < k:
        # Rejection sampling exhausted its budget: the space is small, so
        # enumerate it to return exactly min(k, |space|) negatives.
        for edits in _enumerate_space(phrases, taxonomy, len(phrases)):
            negative = _apply_edits(positive, edits)
            if negative not in seen:
                seen.add(negative)
                negatives.append(list(negative))
                if len(negatives) == k:
                    break
    return negatives


def contradicts_scene(tokens, scene: Scene, taxonomy: Taxonomy) -> bool:
    """True if any phrase mentions an attribute the scene does not have."""
    for phrase in textproc.chunk_sentence(list(tokens), taxonomy):
        part = taxonomy.canonical_part(phrase.noun)
        region = scene.region_for(part) if part else None
        if region is None:
            return True
        truths = set(region.attrs.values())
        if any(adj not in truths for adj in phrase.adjectives):
            return True
    return False


def build_rank_pairs(dataset: Dataset, k: int = 10, seed: int = 0,
                     sentences_per_scene: int = 1) -> list[RankPair]:
    """Build (positive, negative) pairs for every scene's true sentences.

    Negatives that fail to contradict the scene (a noun flip can land on a
    part that really has the attribute) are discarded, so extra candidates
    are mined and the first k contradicting ones kept.
    """
    scene_by_id = {s.scene_id: s for s in dataset.scenes}
    gt_by_scene: dict[int, list] = {}
    for sentence in dataset.sentences:
        if sentence.foil is None:
            gt_by_scene.setdefault(sentence.scene_id, []).append(sentence)

    pairs = []
    for scene in dataset.scenes:
        for sentence in gt_by_scene.get(scene.scene_id, [])[:sentences_per_scene]:
            rng = np.random.default_rng([seed, 5, scene.scene_id])
            mined = make_negatives(sentence.tokens, taxonomy=dataset.taxonomy,
                                   k=3 * k, seed=rng)
            kept = 0
            for negative in mined:
                if kept == k:
                    break
                if not contradicts_scene(negative, scene_by_id[scene.scene_id],
                                         dataset.taxonomy):
                    continue
                flips = tuple(i for i, (a, b)
                              in enumerate(zip(sentence.tokens, negative))
                              if a != b)
                pairs.append(RankPair(scene.scene_id, list(sentence.tokens),
                                      negative, flips, scene.split))
                kept += 1
    return pairs


def pairs_to_json(pairs) -> dict:
    return {"format": 1, "pairs": [p.to_json() for p in pairs]}


def ground_rank_pairs(dataset: Dataset, pairs):
    """Chunk and ground both sides of each pair in its own scene.

    Returns a dict keyed by split whose values are lists of
    (positive grounded sequence, negative grounded sequence) ready for
    ranker training. Per scene the feature matrix is computed once.
    """
    from . import grounding

    scene_by_id = {s.scene_id: s for s in dataset.scenes}
    features: dict[int, np.ndarray] = {}
    grouped: dict[str, list] = {}
    for pair in pairs:
        scene = scene_by_id[pair.scene_id]
        if pair.scene_id not in features:
            features[pair.scene_id] = grounding.scene_features(
                scene, dataset.taxonomy, dataset.grounder)
        shared = features[pair.scene_id]
        sides = []
        for tokens in (pair.positive, pair.negative):
            phrases = textproc.chunk_sentence(list(tokens), dataset.taxonomy)
            sides.append(grounding.ground_all(phrases, scene, dataset.taxonomy,
                                              dataset.grounder, shared))
        grouped.setdefault(pair.split, []).append(tuple(sides))
    return grouped
