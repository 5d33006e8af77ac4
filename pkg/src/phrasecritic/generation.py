"""Candidate sentence generation and a smoothed bigram fluency model.

The generator is class conditioned: it fills the same sentence frames the
ground-truth sampler uses, but each mentioned attribute is drawn from the
class profile (the class prior) instead of the scene's true attribute with
probability error_rate. Fluency is the total bigram log-probability of the
sentence under a model fit per class, in log base 10; base 10 puts typical
well-formed sentences in the single digits so a fixed gate threshold is
meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import textproc, worldsim
from .worldsim import ClassProfile, Dataset, Scene, Sentence, Taxonomy

START = "<s>"
END = "</s>"
UNK = "<unk>"

_LOG10 = math.log(10.0)


@dataclass
class BigramLM:
    """Add-alpha smoothed bigram model over a closed vocabulary.

    Contexts are START plus every vocabulary token (plus UNK); targets are
    every vocabulary token plus END and UNK. logp[i, j] is log10 of
    P(target j | context i); each row sums to one in probability space.
    """

    vocab: tuple[str, ...]
    alpha: float
    logp: np.ndarray = field(repr=False)
    contexts: dict[str, int] = field(repr=False)
    targets: dict[str, int] = field(repr=False)

    def logprob(self, prev: str, nxt: str) -> float:
        i = self.contexts.get(prev, self.contexts[UNK])
        j = self.targets.get(nxt, self.targets[UNK])
        return float(self.logp[i, j])


def fit_language_model(corpus, alpha: float = 0.1) -> BigramLM:
    """Fit a bigram model on an iterable of token lists."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    vocab = sorted({tok for tokens in corpus for tok in tokens})
    contexts = {tok: i for i, tok in enumerate([START] + vocab + [UNK])}
    targets = {tok: i for i, tok in enumerate(vocab + [END, UNK])}
    counts = np.zeros((len(contexts), len(targets)))
    for tokens in corpus:
        prev = START
        for tok in tokens:
            counts[contexts[prev], targets[tok]] += 1.0
            prev = tok
        counts[contexts[prev], targets[END]] += 1.0
    smoothed = counts + alpha
    probs = smoothed / smoothed.sum(axis=1, keepdims=True)
    return BigramLM(vocab=tuple(vocab), alpha=alpha,
                    logp=np.log10(probs), contexts=contexts, targets=targets)


def fluency(tokens, lm: BigramLM) -> float:
    """Sentence log10-probability, including the end-marker transition.

    An empty sentence scores log P(END | START). Always <= 0.
    """
    score = 0.0
    prev = START
    for tok in tokens:
        score += lm.logprob(prev, tok)
        prev = tok
    score += lm.logprob(prev, END)
    return score


@dataclass
class Candidate:
    """A generated explanation sentence with its fluency and phrase list."""

    tokens: list[str]
    fluency: float
    phrases: list[textproc.AttributePhrase]
    class_id: int

    def text(self) -> str:
        return " ".join(self.tokens)


def sample_candidates(scene: Scene, profile: ClassProfile, taxonomy: Taxonomy,
                      lm: BigramLM, n: int = 100, error_rate: float = 0.3,
                      seed=0) -> list[Candidate]:
    """Sample n candidate sentences for a scene.

    Attributes default to the scene's true region attribute; with
    probability error_rate each mention is drawn from the class profile
    instead, yielding class-plausible but image-irrelevant mentions (when
    render noise made the scene deviate from its profile).
    """
    if not 0.0 <= error_rate <= 1.0:
        raise ValueError(f"error_rate {error_rate} outside [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    candidates = []
    for _ in range(n):
        frame_id, uses_bird, n_parts = worldsim._pick_frame(rng)
        bird_color = None
        if uses_bird:
            true = scene.region_for("body").attrs["color"]
            prior = profile.attributes["body"]["color"]
            bird_color = prior if rng.random() < error_rate else true
        picks = []
        for part in worldsim._pick_parts(taxonomy, rng, n_parts):
            category = worldsim._pick_category(rng)
            true = scene.region_for(part).attrs[category]
            prior = profile.attributes[part][category]
            attr = prior if rng.random() < error_rate else true
            picks.append((attr, part))
        tokens = worldsim.compose_frame(frame_id, bird_color, picks)
        candidates.append(Candidate(
            tokens=tokens,
            fluency=fluency(tokens, lm),
            phrases=textproc.chunk_sentence(tokens, taxonomy),
            class_id=profile.class_id,
        ))
    return candidates


def fit_class_lms(dataset: Dataset, alpha: float = 0.1,
                  split: str = "train") -> dict[int, BigramLM]:
    """Fit one bigram model per class on that class's true split sentences."""
    scene_class = {s.scene_id: s.class_id for s in dataset.scenes}
    scene_split = {s.scene_id: s.split for s in dataset.scenes}
    corpora: dict[int, list[list[str]]] = {
        p.class_id: [] for p in dataset.profiles}
    for sentence in dataset.sentences:
        if sentence.foil is not None:
            continue
        if scene_split[sentence.scene_id] != split:
            continue
        corpora[scene_class[sentence.scene_id]].append(sentence.tokens)
    return {class_id: fit_language_model(corpus, alpha)
            for class_id, corpus in corpora.items()}
