"""Retrieval-style phrase grounding against scene regions.

A phrase and a region are both embedded as indicator vectors over attribute
tokens plus part nouns; the matched region is the argmax of their dot
product (first index on ties). Raw scores are deliberately incomparable
across parts: each part carries a fixed scale kappa sampled once per
taxonomy, plus Gaussian observation noise, so downstream consumers must
learn to normalise rather than trust score magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .textproc import AttributePhrase
from .worldsim import GrounderConfig, Region, Scene, Taxonomy

GEOMETRY_DIMS = 4


@dataclass
class GroundedPhrase:
    """A phrase with its matched region, alignment evidence, and raw score.

    mention is the phrase's indicator vector; match is its elementwise
    product with the landed region's indicator bits, i.e. which mentioned
    tokens the region actually supports. Both are byproducts of the argmax
    the matcher computes anyway; score compresses the alignment to one
    noisy part-scaled number and is deliberately the weakest of the three.
    """

    phrase: AttributePhrase
    part: str
    region_index: int
    box: tuple[float, float, float, float]
    features: np.ndarray
    mention: np.ndarray
    match: np.ndarray
    score: float


def feature_dim(taxonomy: Taxonomy) -> int:
    return taxonomy.vector_dim + GEOMETRY_DIMS


def embed_phrase(phrase: AttributePhrase, taxonomy: Taxonomy) -> np.ndarray:
    """Indicator over the phrase's adjectives and canonical head-noun part.

    Out-of-lexicon adjectives and unknown nouns simply contribute nothing.
    """
    vec = np.zeros(taxonomy.vector_dim)
    index = taxonomy.vector_index
    for adj in phrase.adjectives:
        dim = index.get(adj)
        if dim is not None:
            vec[dim] = 1.0
    part = taxonomy.canonical_part(phrase.noun)
    if part is not None:
        vec[index[part]] = 1.0
    return vec


def region_features(region: Region, taxonomy: Taxonomy, noise: float = 0.0,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Indicator over the region's true attributes and part, plus geometry.

    With noise > 0, each active indicator bit is dropped independently with
    that probability (so the expected number of flipped bits is
    noise * active bits), emulating an unreliable detector.
    """
    vec = np.zeros(taxonomy.vector_dim + GEOMETRY_DIMS)
    index = taxonomy.vector_index
    active = [index[tok] for tok in region.attrs.values() if tok in index]
    active.append(index[region.part])
    for dim in active:
        vec[dim] = 1.0
    if noise > 0.0:
        if rng is None:
            raise ValueError("feature noise requires an rng")
        for dim in active:
            if rng.random() < noise:
                vec[dim] = 0.0
    vec[taxonomy.vector_dim:] = region.box
    return vec


def scene_features(scene: Scene, taxonomy: Taxonomy,
                   config: GrounderConfig) -> np.ndarray:
    """Feature matrix for all regions, with noise seeded per scene."""
    rng = None
    if config.feature_noise > 0.0:
        rng = np.random.default_rng([config.seed, 1, scene.scene_id])
    return np.stack([
        region_features(r, taxonomy, config.feature_noise, rng)
        for r in scene.regions
    ])


def _score_noise_draws(config: GrounderConfig, scene_id: int,
                       count: int) -> np.ndarray:
    # One stream per scene, indexed by phrase position, so grounding phrases
    # one at a time or all at once yields identical scores.
    rng = np.random.default_rng([config.seed, 2, scene_id])
    return rng.standard_normal(count) * config.sigma


def ground_phrase(phrase: AttributePhrase, scene: Scene, taxonomy: Taxonomy,
                  config: GrounderConfig, phrase_index: int = 0,
                  features: np.ndarray | None = None) -> GroundedPhrase:
    """Match a phrase to its best region and attach the raw score.

    The returned region maximises the indicator dot product m (ties go to
    the first region in the scene's proposal order). The raw score is
    kappa(part) * min(m, 1) plus Gaussian noise drawn per (scene, phrase
    index): the grounder reports its part-scaled confidence that it found
    a match at all, so score magnitudes say nothing about whether every
    word of the phrase holds. Downstream consumers that average raw scores
    inherit exactly this blindness.
    """
    if features is None:
        features = scene_features(scene, taxonomy, config)
    vec = embed_phrase(phrase, taxonomy)
    match = features[:, :taxonomy.vector_dim] @ vec
    best = int(np.argmax(match))
    region = scene.regions[best]
    noise = _score_noise_draws(config, scene.scene_id, phrase_index + 1)[-1]
    score = taxonomy.kappa[region.part] * min(float(match[best]), 1.0) \
        + float(noise)
    overlap = features[best, :taxonomy.vector_dim] * vec
    return GroundedPhrase(phrase=phrase, part=region.part, region_index=best,
                          box=region.box, features=features[best].copy(),
                          mention=vec, match=overlap, score=score)


def ground_all(phrases, scene: Scene, taxonomy: Taxonomy,
               config: GrounderConfig,
               features: np.ndarray | None = None) -> list[GroundedPhrase]:
    """Ground a sentence's phrases in order, preserving sentence order."""
    if features is None:
        features = scene_features(scene, taxonomy, config)
    return [ground_phrase(p, scene, taxonomy, config, i, features)
            for i, p in enumerate(phrases)]


def mean_grounding_score(grounded) -> float:
    """Average raw score; the naive sentence ranker used by baselines."""
    if not grounded:
        return float("-inf")
    return float(np.mean([g.score for g in grounded]))
