"""Foil tasks: example building, detection/correction logic, evaluation."""

import numpy as np
import pytest

from phrasecritic import grounding, textproc
from phrasecritic.critic import CriticHyper, CriticModel, _sigmoid
from phrasecritic.foil import (build_foil_examples, classify,
                               content_word_indices, correct_foil_word,
                               detect_foil_word, run_foil_eval,
                               train_foil_classifier, tune_tau,
                               _holdout_detect, _substitution_correct)
from phrasecritic.negatives import contradicts_scene
from phrasecritic.worldsim import ATTRIBUTE_CATEGORIES

from conftest import load_schema


@pytest.fixture(scope="module")
def model(tiny_dataset):
    hyper = CriticHyper(embed_dim=4, input_dim=8, hidden_dim=8, head_dim=8)
    return CriticModel.for_taxonomy(tiny_dataset.taxonomy, hyper, seed=0,
                                    objective="binary")


def truth_scorer(scene, taxonomy):
    """Scores 1.0 when the sentence is fully supported by the scene."""
    def score(tokens):
        return 0.0 if contradicts_scene(tokens, scene, taxonomy) else 1.0
    return score


# -- example building ----------------------------------------------------------

def test_build_foil_examples_balanced(tiny_dataset, scene_by_id):
    for split in ("train", "val", "test"):
        examples = build_foil_examples(tiny_dataset, split)
        n_foils = sum(1 for s in tiny_dataset.sentences
                      if s.foil is not None
                      and scene_by_id[s.scene_id].split == split)
        assert len(examples) == 2 * n_foils
        labels = [ex.label for ex in examples]
        assert labels.count(True) == labels.count(False)
        for restored, foiled in zip(examples[::2], examples[1::2]):
            assert restored.label and not foiled.label
            assert restored.scene_id == foiled.scene_id
            diff = [i for i, (a, b)
                    in enumerate(zip(restored.tokens, foiled.tokens))
                    if a != b]
            assert diff == [foiled.foil_index]
            assert restored.tokens[foiled.foil_index] == foiled.correction
            assert scene_by_id[restored.scene_id].split == split


def test_restored_examples_are_true(tiny_dataset, scene_by_id):
    examples = build_foil_examples(tiny_dataset, "test")
    for ex in examples:
        scene = scene_by_id[ex.scene_id]
        contradicts = contradicts_scene(ex.tokens, scene,
                                        tiny_dataset.taxonomy)
        assert contradicts == (not ex.label)


# -- classification -------------------------------------------------------------

def test_classify_matches_sigmoid_of_score(tiny_dataset, model, scene_by_id):
    examples = build_foil_examples(tiny_dataset, "test")[:8]
    for ex in examples:
        scene = scene_by_id[ex.scene_id]
        result = classify(ex.tokens, scene, model, tiny_dataset.taxonomy,
                          tiny_dataset.grounder)
        phrases = textproc.chunk_sentence(ex.tokens, tiny_dataset.taxonomy)
        seq = grounding.ground_all(phrases, scene, tiny_dataset.taxonomy,
                                   tiny_dataset.grounder)
        expected = float(_sigmoid(np.array(model.score(seq))))
        assert result.probability == pytest.approx(expected, abs=1e-12)
        assert result.relevant == (expected > 0.5)
        assert not result.zero_phrases


def test_classify_zero_phrases_is_foil(tiny_dataset, model):
    scene = tiny_dataset.scenes[0]
    result = classify(["this", "is", "a"], scene, model,
                      tiny_dataset.taxonomy, tiny_dataset.grounder)
    assert result.zero_phrases
    assert not result.relevant
    assert result.probability == 0.0


# -- content words ----------------------------------------------------------------

def test_content_word_indices(tiny_dataset, taxonomy):
    tokens = ["this", "is", "a", "red", "bird", "with", "a", "long", "beak"]
    got = content_word_indices(tokens, taxonomy)
    expected = [i for i, t in enumerate(tokens)
                if taxonomy.category_of(t) in ATTRIBUTE_CATEGORIES
                or taxonomy.category_of(t) == "part"]
    assert got == expected == [3, 4, 7, 8]


# -- detection --------------------------------------------------------------------

def test_holdout_detect_with_truth_scorer(tiny_dataset, taxonomy):
    """Removing the foiled adjective (and nothing before it) restores
    truth, so a perfect scorer pins the foil exactly."""
    scene = tiny_dataset.scenes[0]
    wing = scene.region_for("wing")
    head = scene.region_for("head")
    wrong = next(c for c in taxonomy.categories["color"]
                 if c != wing.attrs["color"])
    tokens = ["this", "bird", "has", "a", wrong, "wing", "and", "a",
              head.attrs["color"], "head"]
    assert contradicts_scene(tokens, scene, taxonomy)
    got = _holdout_detect(tokens, taxonomy, truth_scorer(scene, taxonomy))
    assert got == 4


def test_holdout_detect_tie_breaks_to_first_content_word(tiny_dataset,
                                                         taxonomy):
    tokens = ["this", "bird", "has", "a", "red", "wing"]
    assert content_word_indices(tokens, taxonomy) == [1, 4, 5]
    got = _holdout_detect(tokens, taxonomy, lambda _: 0.5)
    assert got == 1


def test_holdout_detect_requires_content_words(taxonomy):
    with pytest.raises(ValueError, match="content"):
        _holdout_detect(["this", "is", "a"], taxonomy, lambda _: 0.0)


def test_detect_foil_word_uses_critic(tiny_dataset, model, scene_by_id):
    examples = [ex for ex in build_foil_examples(tiny_dataset, "test")
                if not ex.label][:5]
    for ex in examples:
        scene = scene_by_id[ex.scene_id]
        got = detect_foil_word(ex.tokens, scene, model,
                               tiny_dataset.taxonomy, tiny_dataset.grounder)
        assert got in content_word_indices(ex.tokens, tiny_dataset.taxonomy)


# -- correction -------------------------------------------------------------------

def test_substitution_correct_with_truth_scorer(tiny_dataset, scene_by_id):
    """The original token is the unique truth-restoring substitution for an
    attribute foil, so a perfect scorer always recovers it."""
    taxonomy = tiny_dataset.taxonomy
    examples = [ex for ex in build_foil_examples(tiny_dataset, "test")
                if not ex.label]
    assert len(examples) >= 8
    for ex in examples:
        scene = scene_by_id[ex.scene_id]
        targets = taxonomy.flip_pool(ex.tokens[ex.foil_index])
        got = _substitution_correct(ex.tokens, ex.foil_index, targets,
                                    truth_scorer(scene, taxonomy))
        assert got == ex.correction


def test_substitution_correct_lexicographic_ties():
    got = _substitution_correct(["the", "wing"], 1, ("red", "blue", "green"),
                                lambda _: 1.0)
    assert got == "blue"


def test_substitution_correct_rejects_empty_targets():
    with pytest.raises(ValueError, match="empty"):
        _substitution_correct(["a", "red", "wing"], 1, (), lambda _: 0.0)


def test_correct_foil_word_default_targets(tiny_dataset, model, scene_by_id):
    ex = next(e for e in build_foil_examples(tiny_dataset, "test")
              if not e.label)
    scene = scene_by_id[ex.scene_id]
    got = correct_foil_word(ex.tokens, ex.foil_index, scene, model,
                            tiny_dataset.taxonomy, tiny_dataset.grounder)
    assert got in tiny_dataset.taxonomy.flip_pool(ex.tokens[ex.foil_index])
    assert got != ex.tokens[ex.foil_index]


# -- baseline threshold ------------------------------------------------------------

def test_tune_tau_is_optimal_midpoint(tiny_dataset, scene_by_id):
    taxonomy, config = tiny_dataset.taxonomy, tiny_dataset.grounder
    examples = build_foil_examples(tiny_dataset, "train")
    tau = tune_tau(examples, scene_by_id, taxonomy, config)

    means = []
    labels = []
    for ex in examples:
        phrases = textproc.chunk_sentence(ex.tokens, taxonomy)
        seq = grounding.ground_all(phrases, scene_by_id[ex.scene_id],
                                   taxonomy, config)
        means.append(grounding.mean_grounding_score(seq) if seq
                     else float("-inf"))
        labels.append(ex.label)
    means = np.array(means)
    labels = np.array(labels)

    def accuracy(threshold):
        return float(np.mean((means > threshold) == labels))

    finite = np.unique(means[np.isfinite(means)])
    midpoints = (finite[:-1] + finite[1:]) / 2.0
    best = max(accuracy(m) for m in midpoints)
    assert accuracy(tau) == best
    optimal = [m for m in midpoints if accuracy(m) == best]
    assert tau == pytest.approx(min(optimal))


def test_tune_tau_degenerate_cases(tiny_dataset, scene_by_id):
    taxonomy, config = tiny_dataset.taxonomy, tiny_dataset.grounder
    examples = build_foil_examples(tiny_dataset, "train")

    class Hollow:
        def __init__(self, scene_id):
            self.scene_id = scene_id
            self.tokens = ["this", "is", "a"]
            self.label = False

    # no finite means at all
    hollow = [Hollow(examples[0].scene_id)]
    assert tune_tau(hollow, scene_by_id, taxonomy, config) == 0.0
    # a single distinct mean: threshold sits one unit below it
    single = [examples[0], examples[0]]
    tau = tune_tau(single, scene_by_id, taxonomy, config)
    phrases = textproc.chunk_sentence(examples[0].tokens, taxonomy)
    seq = grounding.ground_all(phrases, scene_by_id[examples[0].scene_id],
                               taxonomy, config)
    assert tau == pytest.approx(grounding.mean_grounding_score(seq) - 1.0)


# -- end-to-end evaluation -----------------------------------------------------------

def test_train_foil_classifier_mechanics(tiny_dataset):
    hyper = CriticHyper(embed_dim=4, input_dim=8, hidden_dim=8, head_dim=8,
                        epochs=3)
    model, report = train_foil_classifier(tiny_dataset, hyper, seed=0)
    assert model.objective == "binary"
    assert report.epochs == 3
    assert len(report.train_loss) == 3
    assert len(report.val_metric) == 3


def test_run_foil_eval_report(tiny_dataset, model):
    report = run_foil_eval(tiny_dataset, model)
    n_foils = sum(1 for s in tiny_dataset.sentences if s.foil is not None
                  and s.scene_id in {sc.scene_id for sc in
                                     tiny_dataset.scenes_in_split("test")})
    assert report.num_examples == 2 * n_foils
    assert report.num_foils == n_foils
    for value in (report.classification, report.detection, report.correction,
                  report.baseline_classification, report.baseline_detection,
                  report.baseline_correction):
        assert 0.0 <= value <= 1.0
    assert np.isfinite(report.tau)

    forced = run_foil_eval(tiny_dataset, model, tau=2.5)
    assert forced.tau == 2.5

    table = report.to_table()
    assert "phrase critic" in table and "grounding mean" in table
    assert "%" in table


def test_foil_report_json_matches_schema(tiny_dataset, model):
    jsonschema = pytest.importorskip("jsonschema")
    payload = run_foil_eval(tiny_dataset, model, tau=1.0).to_json()
    assert payload["format"] == 1
    jsonschema.validate(payload, load_schema("foil_report"))
