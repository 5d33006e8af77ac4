"""Recurrent phrase-sequence critic with hand-derived gradients.

Each grounded phrase becomes one step: the mean of its token embeddings is
concatenated with the matched region's feature vector (indicators plus
geometry), the phrase's mention indicator, the elementwise mention/region
overlap, and the raw grounding score, then projected to the recurrent
input size. A gated recurrent (LSTM) encoder consumes the steps in sentence
order; the final hidden state feeds a two-layer tanh head that emits the
scalar relevance score S_r. The overlap channel matters: the raw score
saturates and so reports only that the grounder landed somewhere, while
mention minus overlap exposes exactly which claimed attributes the landed
region fails to support.

All gradients are computed manually (no autograd) and checked against
central finite differences in the test suite. Sequences are packed into
length groups so batches run as a handful of matrix products per step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, TrainingDivergedError
from .jsonio import read_json, write_json

UNK = "<unk>"

_PARAM_NAMES = ("emb", "w_in", "b_in", "w_x", "w_h", "b_g",
                "w_1", "b_1", "w_2", "b_2")


@dataclass
class CriticHyper:
    embed_dim: int = 16
    input_dim: int = 32
    hidden_dim: int = 32
    head_dim: int = 32
    margin: float = 1.0
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 30

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in (
            "embed_dim", "input_dim", "hidden_dim", "head_dim", "margin",
            "lr", "momentum", "batch_size", "epochs")}


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class CriticModel:
    """Parameter container plus forward machinery for the critic."""

    def __init__(self, vocab, feature_dim: int,
                 hyper: CriticHyper | None = None, seed: int = 0,
                 objective: str = "rank"):
        if vocab[0] != UNK:
            vocab = (UNK,) + tuple(t for t in vocab if t != UNK)
        self.vocab = tuple(vocab)
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        self.feature_dim = int(feature_dim)
        self.hyper = hyper or CriticHyper()
        self.objective = objective
        self.params = self._init_params(seed)

    @classmethod
    def for_taxonomy(cls, taxonomy, hyper=None, seed: int = 0,
                     objective: str = "rank") -> "CriticModel":
        from .grounding import feature_dim
        vocab = (UNK,) + tuple(sorted(taxonomy.lexicon))
        # region features, then mention and overlap indicator channels
        width = feature_dim(taxonomy) + 2 * taxonomy.vector_dim
        return cls(vocab, width, hyper, seed, objective)

    # -- parameters ---------------------------------------------------------

    @property
    def step_input_dim(self) -> int:
        # mean token embedding (+) evidence channels (+) raw grounding score
        return self.hyper.embed_dim + self.feature_dim + 1

    def _init_params(self, seed: int) -> dict[str, np.ndarray]:
        h = self.hyper
        rng = np.random.default_rng([seed, 0])
        v = len(self.vocab)

        def uni(*shape):
            return rng.uniform(-0.1, 0.1, size=shape)

        params = {
            "emb": uni(v, h.embed_dim),
            "w_in": uni(self.step_input_dim, h.input_dim),
            "b_in": np.zeros(h.input_dim),
            "w_x": uni(h.input_dim, 4 * h.hidden_dim),
            "w_h": uni(h.hidden_dim, 4 * h.hidden_dim),
            "b_g": np.zeros(4 * h.hidden_dim),
            "w_1": uni(h.hidden_dim, h.head_dim),
            "b_1": np.zeros(h.head_dim),
            "w_2": uni(h.head_dim),
            "b_2": np.zeros(1),
        }
        # Open forget gate at init so early steps are remembered.
        params["b_g"][h.hidden_dim:2 * h.hidden_dim] = 1.0
        return params

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def flatten_params(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in _PARAM_NAMES])

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for name in _PARAM_NAMES:
            size = self.params[name].size
            self.params[name] = flat[offset:offset + size] \
                .reshape(self.params[name].shape).copy()
            offset += size

    # -- forward ------------------------------------------------------------

    def encode_step(self, grounded) -> np.ndarray:
        """Project one grounded phrase to the recurrent input space."""
        tokens = grounded.phrase.tokens()
        ids = [self.index.get(tok, 0) for tok in tokens]
        mean_emb = self.params["emb"][ids].mean(axis=0)
        u = np.concatenate([mean_emb, grounded.features, grounded.mention,
                            grounded.match, [grounded.score]])
        return u @ self.params["w_in"] + self.params["b_in"]

    def score(self, grounded_seq) -> float:
        """Relevance score for one sequence of grounded phrases."""
        if not grounded_seq:
            raise ValueError("cannot score an empty phrase sequence")
        return float(self.score_many([grounded_seq])[0])

    def score_many(self, sequences) -> np.ndarray:
        packed = pack_sequences(sequences, self)
        scores, _ = _forward_packed(self.params, self.hyper, packed,
                                    want_cache=False)
        return scores

    def clone(self) -> "CriticModel":
        other = CriticModel(self.vocab, self.feature_dim, self.hyper,
                            objective=self.objective)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other


# -- losses -----------------------------------------------------------------

def rank_loss(s_p: float, s_n: float, margin: float = 1.0) -> float:
    """Margin ranking loss max(0, s_n - s_p + margin); zero iff the
    positive clears the negative by the full margin."""
    return float(max(0.0, s_n - s_p + margin))


def binary_loss(s: float, label) -> float:
    """Logistic cross-entropy of sigmoid(s) against a boolean label."""
    s = float(s)
    return float(np.logaddexp(0.0, -s) if label else np.logaddexp(0.0, s))


# -- packing ----------------------------------------------------------------

@dataclass
class _Group:
    rows: np.ndarray      # positions in the original sequence list
    ids: np.ndarray       # (n, T, L) token ids, 0-padded
    wts: np.ndarray       # (n, T, L) 1/len token weights, 0 on pads
    feats: np.ndarray     # (n, T, F)
    svals: np.ndarray     # (n, T)


@dataclass
class PackedSequences:
    groups: list[_Group]
    n: int
    locator: np.ndarray = field(repr=False)  # (n, 2): group idx, row in group


def pack_sequences(sequences, model: CriticModel) -> PackedSequences:
    """Group sequences by length and lay them out as padded arrays."""
    by_len: dict[int, list[int]] = {}
    for i, seq in enumerate(sequences):
        if not seq:
            raise ValueError("cannot pack an empty phrase sequence")
        by_len.setdefault(len(seq), []).append(i)

    groups = []
    locator = np.zeros((len(sequences), 2), dtype=np.int64)
    for gid, (t, rows) in enumerate(sorted(by_len.items())):
        n = len(rows)
        max_tok = max(len(sequences[r][s].phrase.tokens())
                      for r in rows for s in range(t))
        ids = np.zeros((n, t, max_tok), dtype=np.int64)
        wts = np.zeros((n, t, max_tok))
        feats = np.zeros((n, t, model.feature_dim))
        svals = np.zeros((n, t))
        for j, r in enumerate(rows):
            locator[r] = (gid, j)
            for s, g in enumerate(sequences[r]):
                tokens = g.phrase.tokens()
                for l, tok in enumerate(tokens):
                    ids[j, s, l] = model.index.get(tok, 0)
                    wts[j, s, l] = 1.0 / len(tokens)
                feats[j, s] = np.concatenate([g.features, g.mention, g.match])
                svals[j, s] = g.score
        groups.append(_Group(np.asarray(rows, dtype=np.int64),
                             ids, wts, feats, svals))
    return PackedSequences(groups, len(sequences), locator)


def _forward_group(params, hyper, ids, wts, feats, svals, want_cache):
    n, t, _ = ids.shape
    hd = hyper.hidden_dim
    mean_emb = (params["emb"][ids] * wts[..., None]).sum(axis=2)
    u = np.concatenate([mean_emb, feats, svals[..., None]], axis=2)
    x = u @ params["w_in"] + params["b_in"]
    h = np.zeros((n, hd))
    c = np.zeros((n, hd))
    steps = []
    for step in range(t):
        z = x[:, step] @ params["w_x"] + h @ params["w_h"] + params["b_g"]
        i = _sigmoid(z[:, :hd])
        f = _sigmoid(z[:, hd:2 * hd])
        o = _sigmoid(z[:, 2 * hd:3 * hd])
        g = np.tanh(z[:, 3 * hd:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        if want_cache:
            steps.append((i, f, o, g, c, h, tc))
        c, h = c_new, h_new
    a1 = h @ params["w_1"] + params["b_1"]
    m = np.tanh(a1)
    scores = m @ params["w_2"] + params["b_2"][0]
    cache = (u, x, steps, h, m) if want_cache else None
    return scores, cache


def _backward_group(params, hyper, grads, group_arrays, cache, d_scores):
    ids, wts, feats, svals = group_arrays
    u, x, steps, h_final, m = cache
    hd = hyper.hidden_dim
    de = hyper.embed_dim
    n, t, _ = ids.shape

    grads["w_2"] += m.T @ d_scores
    grads["b_2"] += d_scores.sum(keepdims=True)
    dm = d_scores[:, None] * params["w_2"][None, :]
    da1 = dm * (1.0 - m * m)
    grads["w_1"] += h_final.T @ da1
    grads["b_1"] += da1.sum(axis=0)

    dh = da1 @ params["w_1"].T
    dc = np.zeros((n, hd))
    dx = np.zeros_like(x)
    for step in reversed(range(t)):
        i, f, o, g, c_prev, h_prev, tc = steps[step]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc = dc * f
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            do * o * (1.0 - o),
            dg * (1.0 - g * g),
        ], axis=1)
        grads["w_x"] += x[:, step].T @ dz
        grads["w_h"] += h_prev.T @ dz
        grads["b_g"] += dz.sum(axis=0)
        dx[:, step] = dz @ params["w_x"].T
        dh = dz @ params["w_h"].T

    grads["w_in"] += u.reshape(-1, u.shape[2]).T @ dx.reshape(-1, dx.shape[2])
    grads["b_in"] += dx.sum(axis=(0, 1))
    du = dx @ params["w_in"].T
    dmean = du[:, :, :de]
    contrib = wts[..., None] * dmean[:, :, None, :]
    np.add.at(grads["emb"], ids.reshape(-1),
              contrib.reshape(-1, de))


def _forward_packed(params, hyper, packed: PackedSequences, want_cache):
    scores = np.zeros(packed.n)
    caches = []
    for group in packed.groups:
        s, cache = _forward_group(params, hyper, group.ids, group.wts,
                                  group.feats, group.svals, want_cache)
        scores[group.rows] = s
        if want_cache:
            caches.append((group, cache))
    return scores, caches


def _backward_packed(params, hyper, grads, caches, d_scores):
    for group, cache in caches:
        _backward_group(params, hyper, grads,
                        (group.ids, group.wts, group.feats, group.svals),
                        cache, d_scores[group.rows])


def _slice_packed(packed: PackedSequences, rows) -> PackedSequences:
    """View of a packed dataset restricted to the given sequence rows."""
    rows = np.asarray(rows, dtype=np.int64)
    loc = packed.locator[rows]
    groups = []
    locator = np.zeros((len(rows), 2), dtype=np.int64)
    for gid, group in enumerate(packed.groups):
        member = np.nonzero(loc[:, 0] == gid)[0]
        if member.size == 0:
            continue
        inner = loc[member, 1]
        groups.append(_Group(member, group.ids[inner], group.wts[inner],
                             group.feats[inner], group.svals[inner]))
        locator[member, 0] = len(groups) - 1
        locator[member, 1] = np.arange(member.size, dtype=np.int64)
    return PackedSequences(groups, len(rows), locator)


# -- gradients --------------------------------------------------------------

def gradients(model: CriticModel, batch, kind: str = "rank"):
    """Mean loss and parameter gradients for a batch.

    For kind "rank" the batch is (positive sequence, negative sequence)
    pairs; for "binary" it is (sequence, boolean label) examples.
    """
    params, hyper = model.params, model.hyper
    grads = model.zero_grads()
    if kind == "rank":
        pos = pack_sequences([p for p, _ in batch], model)
        neg = pack_sequences([n for _, n in batch], model)
        s_p, cache_p = _forward_packed(params, hyper, pos, True)
        s_n, cache_n = _forward_packed(params, hyper, neg, True)
        _check_finite(np.concatenate([s_p, s_n]))
        b = len(batch)
        active = (s_n - s_p + hyper.margin) > 0.0
        loss = float(np.mean(np.maximum(0.0, s_n - s_p + hyper.margin)))
        d_p = -active.astype(float) / b
        d_n = active.astype(float) / b
        _backward_packed(params, hyper, grads, cache_p, d_p)
        _backward_packed(params, hyper, grads, cache_n, d_n)
        return loss, grads
    if kind == "binary":
        packed = pack_sequences([s for s, _ in batch], model)
        labels = np.array([1.0 if y else 0.0 for _, y in batch])
        s, cache = _forward_packed(params, hyper, packed, True)
        _check_finite(s)
        loss = float(np.mean(np.logaddexp(0.0, np.where(labels > 0.5, -s, s))))
        d = (_sigmoid(s) - labels) / len(batch)
        _backward_packed(params, hyper, grads, cache, d)
        return loss, grads
    raise ValueError(f"unknown loss kind {kind!r}")


def _check_finite(values):
    if not np.all(np.isfinite(values)):
        raise TrainingDivergedError("non-finite critic score encountered")


# -- training ---------------------------------------------------------------

@dataclass
class TrainReport:
    objective: str
    epochs: int
    train_loss: list[float]
    val_metric: list[float]
    wall_clock: float
    final_train_loss: float = 0.0

    def to_json(self, include_timing: bool = False) -> dict:
        out = {
            "objective": self.objective,
            "epochs": self.epochs,
            "train_loss": list(self.train_loss),
            "val_metric": list(self.val_metric),
            "final_train_loss": self.final_train_loss,
        }
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out


def _run_training(model: CriticModel, forward_loss, n_examples: int,
                  val_metric, seed: int) -> TrainReport:
    hyper = model.hyper
    rng = np.random.default_rng([seed, 1])
    velocity = model.zero_grads()
    losses = []
    metrics = []
    start = time.monotonic()
    for epoch in range(hyper.epochs):
        order = rng.permutation(n_examples)
        total = 0.0
        for lo in range(0, n_examples, hyper.batch_size):
            rows = order[lo:lo + hyper.batch_size]
            loss, grads = forward_loss(rows)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss diverged at epoch {epoch}",
                    report=TrainReport(model.objective, epoch, losses,
                                       metrics, time.monotonic() - start))
            total += loss * len(rows)
            for name, grad in grads.items():
                velocity[name] = hyper.momentum * velocity[name] + grad
                model.params[name] -= hyper.lr * velocity[name]
        losses.append(total / n_examples)
        if val_metric is not None:
            metrics.append(val_metric())
    return TrainReport(model.objective, hyper.epochs, losses, metrics,
                       time.monotonic() - start,
                       losses[-1] if losses else 0.0)


def train_ranker(model: CriticModel, train_pairs, val_pairs=None,
                 seed: int = 0) -> TrainReport:
    """Fit the critic on (positive, negative) grounded-sequence pairs."""
    model.objective = "rank"
    params, hyper = model.params, model.hyper
    pos = pack_sequences([p for p, _ in train_pairs], model)
    neg = pack_sequences([n for _, n in train_pairs], model)
    val = None
    if val_pairs:
        val = (pack_sequences([p for p, _ in val_pairs], model),
               pack_sequences([n for _, n in val_pairs], model))

    def forward_loss(rows):
        grads = model.zero_grads()
        pos_slice = _slice_packed(pos, rows)
        neg_slice = _slice_packed(neg, rows)
        s_p, cache_p = _forward_packed(params, hyper, pos_slice, True)
        s_n, cache_n = _forward_packed(params, hyper, neg_slice, True)
        _check_finite(np.concatenate([s_p, s_n]))
        active = (s_n - s_p + hyper.margin) > 0.0
        loss = float(np.mean(np.maximum(0.0, s_n - s_p + hyper.margin)))
        scale = 1.0 / len(rows)
        _backward_packed(params, hyper, grads, cache_p,
                         -active.astype(float) * scale)
        _backward_packed(params, hyper, grads, cache_n,
                         active.astype(float) * scale)
        return loss, grads

    def val_metric():
        s_p, _ = _forward_packed(params, hyper, val[0], False)
        s_n, _ = _forward_packed(params, hyper, val[1], False)
        return float(np.mean(s_p > s_n))

    return _run_training(model, forward_loss, len(train_pairs),
                         val_metric if val else None, seed)


def train_classifier(model: CriticModel, train_examples, val_examples=None,
                     seed: int = 0) -> TrainReport:
    """Fit the critic with the binary objective on labeled sequences."""
    model.objective = "binary"
    params, hyper = model.params, model.hyper
    packed = pack_sequences([s for s, _ in train_examples], model)
    labels = np.array([1.0 if y else 0.0 for _, y in train_examples])
    val = None
    if val_examples:
        val = (pack_sequences([s for s, _ in val_examples], model),
               np.array([1.0 if y else 0.0 for _, y in val_examples]))

    def forward_loss(rows):
        grads = model.zero_grads()
        batch = _slice_packed(packed, rows)
        y = labels[rows]
        s, cache = _forward_packed(params, hyper, batch, True)
        _check_finite(s)
        loss = float(np.mean(np.logaddexp(0.0, np.where(y > 0.5, -s, s))))
        _backward_packed(params, hyper, grads, cache,
                         (_sigmoid(s) - y) / len(rows))
        return loss, grads

    def val_metric():
        s, _ = _forward_packed(params, hyper, val[0], False)
        return float(np.mean((s > 0.0) == (val[1] > 0.5)))

    return _run_training(model, forward_loss, len(train_examples),
                         val_metric if val else None, seed)


def pairwise_accuracy(model: CriticModel, pairs) -> float:
    """Fraction of pairs where the positive outranks the negative."""
    s_p = model.score_many([p for p, _ in pairs])
    s_n = model.score_many([n for _, n in pairs])
    return float(np.mean(s_p > s_n))


# -- checkpointing ----------------------------------------------------------

CHECKPOINT_FORMAT = 1


def save_checkpoint(model: CriticModel, path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "kind": "critic",
        "objective": model.objective,
        "vocab": list(model.vocab),
        "feature_dim": model.feature_dim,
        "hyper": model.hyper.to_json(),
        "params": {
            name: {"shape": list(arr.shape),
                   "data": [float(v) for v in arr.ravel()]}
            for name, arr in model.params.items()
        },
    }
    write_json(path, payload)


def load_checkpoint(path) -> CriticModel:
    try:
        payload = read_json(path)
    except ValueError as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("kind") != "critic":
        raise CheckpointError(f"{path} is not a critic checkpoint")
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"unsupported checkpoint format {payload.get('format')!r}")
    try:
        hyper = CriticHyper(**payload["hyper"])
        model = CriticModel(tuple(payload["vocab"]),
                            int(payload["feature_dim"]), hyper,
                            objective=payload.get("objective", "rank"))
        for name in _PARAM_NAMES:
            entry = payload["params"][name]
            arr = np.array(entry["data"], dtype=np.float64) \
                .reshape(entry["shape"])
            if arr.shape != model.params[name].shape:
                raise CheckpointError(
                    f"parameter {name} has shape {arr.shape}, "
                    f"expected {model.params[name].shape}")
            model.params[name] = arr
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    for name, arr in model.params.items():
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"non-finite values in parameter {name}")
    return model
