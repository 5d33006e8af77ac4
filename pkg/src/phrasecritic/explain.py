"""Fluency-gated explanation selection and counterfactual evidence.

Selection first discards candidates whose fluency falls at or below the
threshold, then returns the survivor with the highest critic relevance
(the gated score is S_r when S_f is above threshold and 0 otherwise). If
the gate removes everything scorable, selection falls back to the most
fluent candidate and flags it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import generation, grounding, textproc
from .critic import CriticModel
from .grounding import GroundedPhrase
from .textproc import AttributePhrase
from .worldsim import Dataset, Scene

DEFAULT_FLUENCY_THRESHOLD = -5.0


@dataclass
class Explanation:
    """The selected candidate with scores and grounding evidence."""

    candidate: generation.Candidate
    fluency: float
    relevance: float | None
    gated_score: float
    groundings: list[GroundedPhrase]
    rank: int
    fallback: bool

    @property
    def tokens(self):
        return self.candidate.tokens

    @property
    def phrases(self):
        return self.candidate.phrases


def explanation_to_json(explanation: "Explanation", scene: Scene) -> dict:
    record = {
        "scene_id": scene.scene_id,
        "class_id": scene.class_id,
        "tokens": list(explanation.tokens),
        "text": " ".join(explanation.tokens),
        "fluency": explanation.fluency,
        "relevance": explanation.relevance,
        "gated_score": explanation.gated_score,
        "fallback": explanation.fallback,
        "rank": explanation.rank,
        "phrases": [{
            "text": textproc.phrase_to_text(g.phrase),
            "adjectives": list(g.phrase.adjectives),
            "noun": g.phrase.noun,
            "part": g.part,
            "region_index": g.region_index,
            "box": list(g.box),
            "score": g.score,
        } for g in explanation.groundings],
    }
    return record


def ground_candidates(candidates, scene, taxonomy, config):
    """Ground every candidate's phrases against one shared feature matrix."""
    features = grounding.scene_features(scene, taxonomy, config)
    return [grounding.ground_all(c.phrases, scene, taxonomy, config, features)
            for c in candidates]


def select_explanation(candidates, scene: Scene, model: CriticModel,
                       taxonomy, config,
                       threshold: float = DEFAULT_FLUENCY_THRESHOLD,
                       groundings=None) -> Explanation:
    """Pick the most relevant sufficiently fluent candidate.

    Candidates with no chunkable phrases cannot be scored by the critic and
    are treated like gated ones. Ties resolve to the earliest candidate.
    """
    if not candidates:
        raise ValueError("no candidates to select from")
    if groundings is None:
        groundings = ground_candidates(candidates, scene, taxonomy, config)

    survivor_idx = [i for i, c in enumerate(candidates)
                    if c.fluency > threshold and c.phrases]
    if survivor_idx:
        scores = model.score_many([groundings[i] for i in survivor_idx])
        best_pos = int(np.argmax(scores))
        best = survivor_idx[best_pos]
        relevance = float(scores[best_pos])
        return Explanation(candidates[best], candidates[best].fluency,
                           relevance, relevance, groundings[best], best,
                           fallback=False)

    # Everything gated (or unscorable): fall back to the most fluent
    # candidate; its gated score is zero by definition.
    fluencies = [c.fluency for c in candidates]
    best = int(np.argmax(fluencies))
    relevance = None
    if candidates[best].phrases:
        relevance = model.score(groundings[best])
    return Explanation(candidates[best], candidates[best].fluency,
                       relevance, 0.0, groundings[best], best, fallback=True)


def counterfactual_class(scene: Scene, profiles) -> int:
    """Most attribute-similar other class for a scene (never its own)."""
    assignment = scene.assignment()
    best_id = None
    best_distance = None
    for profile in profiles:
        if profile.class_id == scene.class_id:
            continue
        d = sum(1 for key, tok in profile.assignment().items()
                if assignment.get(key) != tok)
        if best_distance is None or d < best_distance:
            best_distance = d
            best_id = profile.class_id
    if best_id is None:
        raise ValueError("no other class available for a counterfactual")
    return best_id


def _nearest_scene(query: Scene, scenes) -> Scene:
    assignment = query.assignment()
    best = None
    best_distance = None
    for scene in scenes:
        d = sum(1 for key, tok in scene.assignment().items()
                if assignment.get(key) != tok)
        if best_distance is None or d < best_distance:
            best_distance = d
            best = scene
    return best


def counterfactual_evidence(query: Scene, cf_class: int, dataset: Dataset,
                            model: CriticModel, lms, n: int = 100,
                            error_rate: float = 0.3, seed: int = 0,
                            threshold: float = DEFAULT_FLUENCY_THRESHOLD):
    """Find the counterfactual-class phrase least supported by the query.

    The explanation pipeline runs on the nearest scene of the
    counterfactual class; each of its phrases is then grounded in the query
    scene and scored alone by the critic, and the lowest-scoring phrase is
    returned as evidence, along with all per-phrase scores and the
    neighbour scene.
    """
    neighbours = [s for s in dataset.scenes if s.class_id == cf_class]
    if not neighbours:
        raise ValueError(f"no scenes of class {cf_class}")
    neighbour = _nearest_scene(query, neighbours)
    profile = dataset.profile_for(cf_class)
    candidates = generation.sample_candidates(
        neighbour, profile, dataset.taxonomy, lms[cf_class], n=n,
        error_rate=error_rate,
        seed=np.random.default_rng([seed, 6, query.scene_id]))
    explanation = select_explanation(candidates, neighbour, model,
                                     dataset.taxonomy, dataset.grounder,
                                     threshold)
    phrases = explanation.phrases
    grounded = grounding.ground_all(phrases, query, dataset.taxonomy,
                                    dataset.grounder)
    scores = [model.score([g]) for g in grounded]
    evidence = phrases[int(np.argmin(scores))]
    return evidence, scores, explanation, neighbour


_PLURAL_NOUNS = {"feet", "feathers"}


def _article(noun: str) -> str:
    if noun in _PLURAL_NOUNS or noun.endswith("s"):
        return ""
    return "a "


def negate_phrase(phrase, cf_class_name: str) -> tuple[str, str]:
    """Render the negation and the counterfactual conditional for a phrase.

    Accepts an AttributePhrase or plain text. Plural head nouns drop the
    article ("does not have black wings", "does not have a long flat bill").
    """
    if isinstance(phrase, AttributePhrase):
        text = textproc.phrase_to_text(phrase)
        noun = phrase.noun
    else:
        text = str(phrase)
        noun = text.split()[-1]
    article = _article(noun)
    negation = f"this bird does not have {article}{text}"
    conditional = (f"if this bird had been a {cf_class_name}, "
                   f"it would have had {article}{text}")
    return negation, conditional
