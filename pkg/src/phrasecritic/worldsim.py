"""Synthetic bird-scene world: taxonomy, class profiles, scenes, sentences.

Everything is a pure function of (config, seed). Scenes and sentences draw
from RNG streams derived from (seed, scene index), so generating scene 512
alone yields the same scene as generating all of them in order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import textproc
from .errors import ConfigurationError, GenerationError
from .jsonio import read_json, write_json

PARTS = ("beak", "head", "belly", "eye", "wing", "feet", "neck", "body")

ATTRIBUTE_CATEGORIES = ("color", "size", "pattern")

_TOKEN_POOLS = {
    "color": ("red", "black", "yellow", "white", "blue", "green", "orange",
              "brown", "grey", "pink"),
    "size": ("small", "large", "long", "short", "tiny", "broad"),
    "pattern": ("speckled", "spotted", "striped", "plain", "mottled",
                "barred"),
}

# Nouns that refer to the bird as a whole ground to the body region.
NOUN_ALIASES = {"bird": "body", "feathers": "body"}

_FUNCTION_WORDS = {
    "this": textproc.DET,
    "a": textproc.DET,
    "the": textproc.DET,
    "is": textproc.VERB,
    "are": textproc.VERB,
    "has": textproc.VERB,
    "and": textproc.CONJ,
    "with": textproc.OTHER,
}

# Mean region geometry (cx, cy, w, h) on the unit canvas, y pointing up:
# heads sit high on the canvas, feet low, the body spans the middle.
_PART_LAYOUT = {
    "beak": (0.66, 0.76, 0.12, 0.07),
    "head": (0.52, 0.74, 0.20, 0.18),
    "belly": (0.48, 0.28, 0.30, 0.22),
    "eye": (0.54, 0.78, 0.06, 0.05),
    "wing": (0.42, 0.44, 0.26, 0.20),
    "feet": (0.50, 0.08, 0.16, 0.08),
    "neck": (0.52, 0.58, 0.16, 0.13),
    "body": (0.46, 0.40, 0.44, 0.38),
}

_CENTER_JITTER = 0.03
_SIZE_JITTER = 0.12
_MIN_BOX_SIDE = 0.02

SPLITS = ("train", "val", "test")


@dataclass
class WorldConfig:
    """Knobs for dataset generation; defaults give the standard benchmark."""

    colors: int = 8
    sizes: int = 4
    patterns: int = 4
    num_classes: int = 20
    scenes_per_class: int = 150
    sentences_per_scene: int = 10
    foils_per_scene: int = 1
    noise: float = 0.15
    splits: tuple[float, float, float] = (0.7, 0.1, 0.2)
    kappa_range: tuple[float, float] = (0.3, 3.0)
    sigma: float = 0.05
    feature_noise: float = 0.0
    min_profile_distance: int = 2

    def category_counts(self):
        return {"color": self.colors, "size": self.sizes,
                "pattern": self.patterns}


@dataclass
class GrounderConfig:
    """Grounder parameters carried inside the dataset for reproducibility."""

    sigma: float = 0.05
    feature_noise: float = 0.0
    seed: int = 0


@dataclass
class Taxonomy:
    """Attribute categories, part nouns, the lexicon, and grounder scales.

    kappa holds the fixed per-part scale applied to raw grounding scores;
    it is sampled once per taxonomy so scores are never comparable across
    parts unless a model learns to normalise them.
    """

    parts: tuple[str, ...]
    categories: dict[str, tuple[str, ...]]
    kappa: dict[str, float]
    aliases: dict[str, str]
    lexicon: dict[str, tuple[str, str | None]] = field(init=False, repr=False)
    vector_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        seen = set()
        for cat, tokens in self.categories.items():
            for tok in tokens:
                if tok in seen:
                    raise ConfigurationError(
                        f"attribute token {tok!r} appears in two categories")
                seen.add(tok)
        lexicon = {}
        for cat, tokens in self.categories.items():
            for tok in tokens:
                lexicon[tok] = (textproc.ADJ, cat)
        for part in self.parts:
            lexicon[part] = (textproc.NOUN, "part")
        for alias in self.aliases:
            lexicon[alias] = (textproc.NOUN, "part")
        for word, pos in _FUNCTION_WORDS.items():
            lexicon.setdefault(word, (pos, None))
        index = {}
        for cat in ATTRIBUTE_CATEGORIES:
            for tok in self.categories.get(cat, ()):
                index[tok] = len(index)
        for part in self.parts:
            index[part] = len(index)
        self.lexicon = lexicon
        self.vector_index = index

    @property
    def vector_dim(self) -> int:
        return len(self.vector_index)

    def attribute_tokens(self) -> tuple[str, ...]:
        out = []
        for cat in ATTRIBUTE_CATEGORIES:
            out.extend(self.categories.get(cat, ()))
        return tuple(out)

    def category_of(self, token: str) -> str | None:
        entry = self.lexicon.get(token)
        return entry[1] if entry else None

    def canonical_part(self, noun: str) -> str | None:
        """Map a noun to the part whose region it refers to."""
        if noun in self.parts:
            return noun
        return self.aliases.get(noun)

    def flip_pool(self, token: str) -> tuple[str, ...]:
        """Same-category replacement candidates for a content token."""
        cat = self.category_of(token)
        if cat is None:
            return ()
        if cat == "part":
            original = self.canonical_part(token)
            return tuple(p for p in self.parts if p != original)
        return tuple(t for t in self.categories[cat] if t != token)

    def to_json(self) -> dict:
        return {
            "parts": list(self.parts),
            "categories": {c: list(t) for c, t in self.categories.items()},
            "kappa": dict(self.kappa),
            "aliases": dict(self.aliases),
        }

    @classmethod
    def from_json(cls, obj) -> "Taxonomy":
        return cls(
            parts=tuple(obj["parts"]),
            categories={c: tuple(t) for c, t in obj["categories"].items()},
            kappa={p: float(v) for p, v in obj["kappa"].items()},
            aliases=dict(obj["aliases"]),
        )


@dataclass
class ClassProfile:
    """Characteristic attribute per (part, category) for one bird class."""

    class_id: int
    name: str
    attributes: dict[str, dict[str, str]]
    noise_rate: float

    def assignment(self) -> dict[tuple[str, str], str]:
        return {(part, cat): tok
                for part, cats in self.attributes.items()
                for cat, tok in cats.items()}

    def distance(self, other: "ClassProfile") -> int:
        return assignment_distance(self.assignment(), other.assignment())

    def to_json(self) -> dict:
        return {"class_id": self.class_id, "name": self.name,
                "noise_rate": self.noise_rate,
                "attributes": {p: dict(c) for p, c in self.attributes.items()}}

    @classmethod
    def from_json(cls, obj) -> "ClassProfile":
        return cls(class_id=int(obj["class_id"]), name=obj["name"],
                   attributes={p: dict(c)
                               for p, c in obj["attributes"].items()},
                   noise_rate=float(obj["noise_rate"]))


def assignment_distance(a, b) -> int:
    """Count of (part, category) slots whose tokens differ."""
    keys = set(a) | set(b)
    return sum(1 for k in keys if a.get(k) != b.get(k))


@dataclass
class Region:
    part: str
    box: tuple[float, float, float, float]
    attrs: dict[str, str]


@dataclass
class Scene:
    scene_id: int
    class_id: int
    regions: list[Region]
    keypoints: dict[str, tuple[float, float]]
    split: str

    def region_for(self, part: str) -> Region | None:
        for region in self.regions:
            if region.part == part:
                return region
        return None

    def assignment(self) -> dict[tuple[str, str], str]:
        return {(r.part, cat): tok
                for r in self.regions for cat, tok in r.attrs.items()}

    def to_json(self) -> dict:
        return {
            "id": self.scene_id,
            "class": self.class_id,
            "split": self.split,
            "regions": [{"part": r.part, "box": list(r.box),
                         "attrs": dict(r.attrs)} for r in self.regions],
            "keypoints": {p: list(k) for p, k in self.keypoints.items()},
        }

    @classmethod
    def from_json(cls, obj) -> "Scene":
        return cls(
            scene_id=int(obj["id"]),
            class_id=int(obj["class"]),
            split=obj["split"],
            regions=[Region(r["part"], tuple(float(v) for v in r["box"]),
                            dict(r["attrs"])) for r in obj["regions"]],
            keypoints={p: tuple(float(v) for v in k)
                       for p, k in obj["keypoints"].items()},
        )


@dataclass
class FoilInfo:
    index: int
    original: str


@dataclass
class Sentence:
    scene_id: int
    tokens: list[str]
    foil: FoilInfo | None = None

    def text(self) -> str:
        return " ".join(self.tokens)

    def to_json(self) -> dict:
        foil = None
        if self.foil is not None:
            foil = {"index": self.foil.index, "original": self.foil.original}
        return {"scene_id": self.scene_id, "tokens": list(self.tokens),
                "foil": foil}

    @classmethod
    def from_json(cls, obj) -> "Sentence":
        foil = obj.get("foil")
        info = FoilInfo(int(foil["index"]), foil["original"]) if foil else None
        return cls(int(obj["scene_id"]), list(obj["tokens"]), info)


@dataclass
class Dataset:
    taxonomy: Taxonomy
    profiles: list[ClassProfile]
    scenes: list[Scene]
    sentences: list[Sentence]
    grounder: GrounderConfig
    seed: int

    FORMAT = 1

    def profile_for(self, class_id: int) -> ClassProfile:
        return self.profiles[class_id]

    def scenes_in_split(self, split: str) -> list[Scene]:
        return [s for s in self.scenes if s.split == split]

    def sentences_for_scene(self, scene_id: int) -> list[Sentence]:
        return [s for s in self.sentences if s.scene_id == scene_id]

    def to_json(self) -> dict:
        return {
            "format": self.FORMAT,
            "seed": self.seed,
            "taxonomy": self.taxonomy.to_json(),
            "profiles": [p.to_json() for p in self.profiles],
            "grounder": asdict(self.grounder),
            "scenes": [s.to_json() for s in self.scenes],
            "sentences": [s.to_json() for s in self.sentences],
        }

    @classmethod
    def from_json(cls, obj) -> "Dataset":
        if obj.get("format") != cls.FORMAT:
            raise ConfigurationError(
                f"unsupported dataset format {obj.get('format')!r}")
        return cls(
            taxonomy=Taxonomy.from_json(obj["taxonomy"]),
            profiles=[ClassProfile.from_json(p) for p in obj["profiles"]],
            scenes=[Scene.from_json(s) for s in obj["scenes"]],
            sentences=[Sentence.from_json(s) for s in obj["sentences"]],
            grounder=GrounderConfig(**obj["grounder"]),
            seed=int(obj["seed"]),
        )

    def save(self, path) -> None:
        write_json(path, self.to_json())

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls.from_json(read_json(path))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def build_taxonomy(config: WorldConfig, seed: int) -> Taxonomy:
    """Instantiate category token lists and per-part grounder scales."""
    categories = {}
    for cat, count in config.category_counts().items():
        pool = _TOKEN_POOLS[cat]
        if count < 2:
            raise ConfigurationError(f"need at least 2 {cat} tokens, got {count}")
        if count > len(pool):
            raise ConfigurationError(
                f"at most {len(pool)} {cat} tokens supported, got {count}")
        categories[cat] = pool[:count]
    rng = _rng([seed, 0])
    lo, hi = config.kappa_range
    if not (0.0 < lo <= hi):
        raise ConfigurationError(f"bad kappa range {config.kappa_range}")
    kappa = {part: float(rng.uniform(lo, hi)) for part in PARTS}
    return Taxonomy(parts=PARTS, categories=categories, kappa=kappa,
                    aliases=dict(NOUN_ALIASES))


def sample_class_profiles(taxonomy: Taxonomy, num_classes: int, seed: int,
                          noise_rate: float = 0.15, min_distance: int = 2,
                          max_retries: int = 1000) -> list[ClassProfile]:
    """Draw class profiles with pairwise assignment distance >= min_distance."""
    rng = _rng([seed, 1])
    profiles: list[ClassProfile] = []
    for class_id in range(num_classes):
        for _ in range(max_retries):
            attributes = {
                part: {cat: str(rng.choice(taxonomy.categories[cat]))
                       for cat in ATTRIBUTE_CATEGORIES}
                for part in taxonomy.parts
            }
            candidate = ClassProfile(class_id, f"species {class_id:02d}",
                                     attributes, noise_rate)
            if all(candidate.distance(p) >= min_distance for p in profiles):
                profiles.append(candidate)
                break
        else:
            raise GenerationError(
                f"could not place class {class_id} at distance "
                f">= {min_distance} after {max_retries} tries")
    return profiles


def _jittered_box(part: str, rng: np.random.Generator):
    cx, cy, w, h = _PART_LAYOUT[part]
    cx += rng.normal(0.0, _CENTER_JITTER)
    cy += rng.normal(0.0, _CENTER_JITTER)
    w = float(np.clip(w * math.exp(rng.normal(0.0, _SIZE_JITTER)),
                      _MIN_BOX_SIDE, 0.9))
    h = float(np.clip(h * math.exp(rng.normal(0.0, _SIZE_JITTER)),
                      _MIN_BOX_SIDE, 0.9))
    x = float(np.clip(cx - w / 2.0, 0.0, 1.0 - w))
    y = float(np.clip(cy - h / 2.0, 0.0, 1.0 - h))
    return (x, y, w, h)


def render_scene(profile: ClassProfile, taxonomy: Taxonomy, noise: float,
                 seed, scene_id: int = 0, split: str = "train") -> Scene:
    """Render one scene from a profile.

    Each region's attribute is independently resampled (uniformly within its
    category, possibly landing on the same token) with probability noise.
    Keypoints land in the central half of their box, so they always lie
    strictly inside it.
    """
    rng = _rng(seed)
    regions = []
    keypoints = {}
    for part in taxonomy.parts:
        box = _jittered_box(part, rng)
        attrs = {}
        for cat in ATTRIBUTE_CATEGORIES:
            token = profile.attributes[part][cat]
            if rng.random() < noise:
                token = str(rng.choice(taxonomy.categories[cat]))
            attrs[cat] = token
        regions.append(Region(part, box, attrs))
        x, y, w, h = box
        kx = x + w / 2.0 + rng.uniform(-w / 4.0, w / 4.0)
        ky = y + h / 2.0 + rng.uniform(-h / 4.0, h / 4.0)
        keypoints[part] = (float(kx), float(ky))
    # Region order is a per-scene permutation: detectors emit proposals in
    # arbitrary order, and grounding tie-breaks must not be able to rely on a
    # fixed layout.
    order = rng.permutation(len(regions))
    regions = [regions[i] for i in order]
    return Scene(scene_id, profile.class_id, regions, keypoints, split)


# Sentence frames. Each is (frame_id, uses_bird, part_slots) where uses_bird
# means the sentence opens with "this is a <color> bird".
_FRAMES = (
    (0, True, 1),   # this is a C bird with a A P
    (1, True, 2),   # ... and a A P
    (2, True, 3),   # ... and a A P and a A P
    (3, False, 2),  # this bird has a A P and a A P
    (4, False, 2),  # the P is A and the P is A
    (5, False, 3),  # this bird has a A P and a A P and a A P
)

_CATEGORY_WEIGHTS = {"color": 0.6, "size": 0.2, "pattern": 0.2}


def compose_frame(frame_id: int, bird_color: str | None,
                  part_picks: list[tuple[str, str]]) -> list[str]:
    """Assemble the token list for a frame from its attribute picks."""
    if frame_id in (0, 1, 2):
        tokens = ["this", "is", "a", bird_color, "bird"]
        glue = "with"
        for attr, part in part_picks:
            tokens += [glue, "a", attr, part]
            glue = "and"
        return tokens
    if frame_id in (3, 5):
        tokens = ["this", "bird", "has"]
        glue = None
        for attr, part in part_picks:
            tokens += ([glue] if glue else []) + ["a", attr, part]
            glue = "and"
        return tokens
    if frame_id == 4:
        tokens = []
        for attr, part in part_picks:
            if tokens:
                tokens.append("and")
            tokens += ["the", part, "is", attr]
        return tokens
    raise ValueError(f"unknown frame {frame_id}")


def _pick_frame(rng) -> tuple[int, bool, int]:
    return _FRAMES[int(rng.integers(len(_FRAMES)))]


def _pick_parts(taxonomy, rng, count):
    pool = [p for p in taxonomy.parts if p != "body"]
    idx = rng.choice(len(pool), size=count, replace=False)
    return [pool[i] for i in sorted(int(i) for i in idx)]


def _pick_category(rng) -> str:
    cats = list(_CATEGORY_WEIGHTS)
    probs = np.array([_CATEGORY_WEIGHTS[c] for c in cats])
    return cats[int(rng.choice(len(cats), p=probs / probs.sum()))]


def ground_truth_sentence(scene: Scene, taxonomy: Taxonomy, seed) -> Sentence:
    """Sample a true sentence: every mentioned attribute holds in the scene."""
    rng = seed if isinstance(seed, np.random.Generator) else _rng(seed)
    frame_id, uses_bird, n_parts = _pick_frame(rng)
    bird_color = None
    if uses_bird:
        bird_color = scene.region_for("body").attrs["color"]
    picks = []
    for part in _pick_parts(taxonomy, rng, n_parts):
        category = _pick_category(rng)
        picks.append((scene.region_for(part).attrs[category], part))
    return Sentence(scene.scene_id,
                    compose_frame(frame_id, bird_color, picks))


def make_foil_sentence(sentence: Sentence, taxonomy: Taxonomy, seed) -> Sentence:
    """Replace one content token with a same-category alternative.

    Attribute tokens are preferred as foil targets: flipping an adjective of
    a true sentence is guaranteed to contradict the scene, whereas moving a
    noun to another part may accidentally stay true. Nouns are only foiled
    when the sentence has no attribute tokens at all.
    """
    rng = seed if isinstance(seed, np.random.Generator) else _rng(seed)
    attr_positions = []
    noun_positions = []
    for i, token in enumerate(sentence.tokens):
        cat = taxonomy.category_of(token)
        if cat in ATTRIBUTE_CATEGORIES:
            attr_positions.append(i)
        elif cat == "part":
            noun_positions.append(i)
    positions = attr_positions or noun_positions
    if not positions:
        raise ValueError("sentence has no content tokens to foil")
    index = positions[int(rng.integers(len(positions)))]
    original = sentence.tokens[index]
    pool = taxonomy.flip_pool(original)
    if not pool:
        raise ValueError(f"no same-category alternative for {original!r}")
    replacement = pool[int(rng.integers(len(pool)))]
    tokens = list(sentence.tokens)
    tokens[index] = replacement
    return Sentence(sentence.scene_id, tokens, FoilInfo(index, original))


def _split_counts(n: int, fractions) -> list[int]:
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions {fractions} do not sum to 1")
    raw = [n * f for f in fractions]
    counts = [math.floor(r) for r in raw]
    leftover = n - sum(counts)
    order = sorted(range(len(raw)),
                   key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def _check_config(config: WorldConfig) -> None:
    for name in ("num_classes", "scenes_per_class", "sentences_per_scene"):
        value = getattr(config, name)
        if value < 1:
            raise ConfigurationError(f"{name} must be >= 1, got {value}")
    if config.foils_per_scene < 0:
        raise ConfigurationError(
            f"foils_per_scene must be >= 0, got {config.foils_per_scene}")
    if not 0.0 <= config.noise <= 1.0:
        raise ConfigurationError(f"noise must be in [0, 1], got {config.noise}")
    for name in ("sigma", "feature_noise"):
        value = getattr(config, name)
        if value < 0.0:
            raise ConfigurationError(f"{name} must be >= 0, got {value}")


def generate_dataset(config: WorldConfig, seed: int) -> Dataset:
    """Generate the full dataset: world, scenes, sentences, and foils."""
    _check_config(config)
    taxonomy = build_taxonomy(config, seed)
    profiles = sample_class_profiles(
        taxonomy, config.num_classes, seed, noise_rate=config.noise,
        min_distance=config.min_profile_distance)
    per_class = _split_counts(config.scenes_per_class, config.splits)

    scenes = []
    sentences = []
    for class_id in range(config.num_classes):
        profile = profiles[class_id]
        split_labels = [label
                        for label, count in zip(SPLITS, per_class)
                        for _ in range(count)]
        for j in range(config.scenes_per_class):
            scene_id = class_id * config.scenes_per_class + j
            scene = render_scene(profile, taxonomy, config.noise,
                                 [seed, 2, scene_id], scene_id,
                                 split_labels[j])
            scenes.append(scene)
            gt_sentences = []
            seen = set()
            for k in range(config.sentences_per_scene):
                rng = _rng([seed, 3, scene_id, k])
                for _ in range(50):
                    candidate = ground_truth_sentence(scene, taxonomy, rng)
                    key = tuple(candidate.tokens)
                    if key not in seen:
                        seen.add(key)
                        gt_sentences.append(candidate)
                        break
                else:
                    raise GenerationError(
                        f"scene {scene_id}: could not draw "
                        f"{config.sentences_per_scene} distinct sentences")
            sentences.extend(gt_sentences)
            for k in range(config.foils_per_scene):
                sentences.append(make_foil_sentence(
                    gt_sentences[k % len(gt_sentences)], taxonomy,
                    [seed, 4, scene_id, k]))

    grounder = GrounderConfig(sigma=config.sigma,
                              feature_noise=config.feature_noise, seed=seed)
    return Dataset(taxonomy, profiles, scenes, sentences, grounder, seed)
