"""Per-variant classification channels and late score fusion.

Lightweight classifiers (softmax regression or nearest class mean) stand in
for the fine-tuned ConvNet channels; the fusion stage is agnostic to the
score source, so any channel emitting per-class scores can plug in. Scores
fuse by elementwise multiply (the primary rule), average, or max, and the
predicted class is the argmax with lowest-index tie-breaking.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .features import POOL_HW, action_map_features

FUSION_RULES = ("multiply", "average", "max")

_SOFTMAX_EPOCHS = 400
_SOFTMAX_LR = 2.0


@dataclass
class ScoreVector:
    """Nonnegative per-class scores from one classifier channel."""

    scores: np.ndarray
    channel_tag: str

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 1:
            raise DataError("scores must be a vector")
        if np.any(s < 0) or not np.any(s > 0):
            raise DataError("scores must be nonnegative and not all zero")
        self.scores = s


@dataclass
class ClassifierModel:
    """A trained channel. ``kind`` is "linear-softmax" or
    "nearest-class-mean"; ``classes`` maps score indices to labels."""

    kind: str
    variant_tag: str
    classes: list
    input_spec: tuple
    weights: dict = field(default_factory=dict)
    trained: bool = False


def _check_training_maps(maps):
    if not maps:
        raise DataError("no training maps")
    tags = {m.variant_tag for m, _ in maps}
    if len(tags) != 1:
        raise DataError(f"mixed variant tags in one channel: {sorted(tags)}")
    shapes = {m.shape for m, _ in maps}
    if len(shapes) != 1:
        raise DataError("training maps differ in dimensions")
    labels = sorted({label for _, label in maps})
    if len(labels) < 2:
        raise DataError("need at least two classes")
    return tags.pop(), labels


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _fit_softmax(x, y, num_classes, epochs=_SOFTMAX_EPOCHS, lr=_SOFTMAX_LR):
    n, dim = x.shape
    w = np.zeros((num_classes, dim))
    b = np.zeros(num_classes)
    one_hot = np.zeros((n, num_classes))
    one_hot[np.arange(n), y] = 1.0
    for _ in range(epochs):
        probs = _softmax(x @ w.T + b)
        dlogits = (probs - one_hot) / n
        w -= lr * (dlogits.T @ x)
        b -= lr * dlogits.sum(axis=0)
    return w, b


def train_channel(maps, kind="linear-softmax", seed=0):
    """Train one classifier channel on (ActionMap, label) pairs.

    Training is deterministic for a fixed seed (both kinds currently use
    closed-form or zero initialization, so the seed is recorded but unused).
    """
    if kind not in ("linear-softmax", "nearest-class-mean"):
        raise DataError(f"unknown classifier kind {kind!r}")
    tag, classes = _check_training_maps(maps)
    feats = np.stack([action_map_features(m) for m, _ in maps])
    label_to_idx = {c: i for i, c in enumerate(classes)}
    y = np.array([label_to_idx[label] for _, label in maps], dtype=np.int64)

    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    std[std < 1e-12] = 1.0
    xs = (feats - mean) / std

    model = ClassifierModel(
        kind=kind,
        variant_tag=tag,
        classes=classes,
        input_spec=(POOL_HW, POOL_HW, 3),
        weights={"mean": mean, "std": std, "seed": seed},
    )
    if kind == "linear-softmax":
        w, b = _fit_softmax(xs, y, len(classes))
        model.weights["w"] = w
        model.weights["b"] = b
    else:
        means = np.stack([xs[y == i].mean(axis=0) for i in range(len(classes))])
        model.weights["class_means"] = means
    model.trained = True
    return model


def predict_scores(model, amap):
    """Score one ActionMap with a trained channel.

    Softmax channels emit probabilities; nearest-class-mean channels emit
    inverse-distance scores normalized to sum 1. Entries lie in (0, 1].
    """
    if not model.trained:
        raise DataError("model is not trained")
    if amap.variant_tag != model.variant_tag:
        raise DataError(
            f"variant mismatch: model {model.variant_tag}, map {amap.variant_tag}"
        )
    x = (action_map_features(amap) - model.weights["mean"]) / model.weights["std"]
    if model.kind == "linear-softmax":
        scores = _softmax(x @ model.weights["w"].T + model.weights["b"])
    else:
        dists = np.linalg.norm(model.weights["class_means"] - x, axis=1)
        inv = 1.0 / (dists + 1e-12)
        scores = inv / inv.sum()
    return ScoreVector(scores, model.variant_tag)


def fuse_scores(vectors, rule="multiply"):
    """Fuse >= 2 score vectors elementwise; returns (fused vector, argmax).

    Ties at the argmax break toward the lowest class index.
    """
    if rule not in FUSION_RULES:
        raise DataError(f"unknown fusion rule {rule!r}")
    if len(vectors) < 2:
        raise DataError("need at least two score vectors to fuse")
    lengths = {len(v.scores) for v in vectors}
    if len(lengths) != 1:
        raise DataError("score vectors differ in length")
    stack = np.stack([v.scores for v in vectors])
    if rule == "multiply":
        fused = stack.prod(axis=0)
    elif rule == "average":
        fused = stack.mean(axis=0)
    else:
        fused = stack.max(axis=0)
    predicted = int(np.argmax(fused))
    return ScoreVector(fused, f"fused-{rule}"), predicted


def save_model(path, model):
    """Serialize a trained channel as JSON (floats round-trip exactly)."""
    import json

    payload = {
        "kind": model.kind,
        "variant_tag": model.variant_tag,
        "classes": model.classes,
        "input_spec": list(model.input_spec),
        "trained": model.trained,
        "weights": {
            k: (v.tolist() if isinstance(v, np.ndarray) else v)
            for k, v in model.weights.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    import json

    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    weights = {
        k: (np.asarray(v, dtype=np.float64) if isinstance(v, list) else v)
        for k, v in payload["weights"].items()
    }
    return ClassifierModel(
        kind=payload["kind"],
        variant_tag=payload["variant_tag"],
        classes=payload["classes"],
        input_spec=tuple(payload["input_spec"]),
        weights=weights,
        trained=payload["trained"],
    )


def write_scores(path, entries, classes):
    """Write one ``sample_id score_1 ... score_C`` line per sample."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# classes: " + " ".join(str(c) for c in classes) + "\n")
        for sample_id, scores in entries:
            fh.write(sample_id + " " + " ".join(repr(float(s)) for s in scores) + "\n")


def read_scores(path):
    """Read a score file; returns (ordered {sample_id: scores}, classes)."""
    classes = None
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "classes:" in line:
                    classes = line.split("classes:", 1)[1].split()
                continue
            parts = line.split()
            if len(parts) < 2:
                raise DataError(f"{path}: malformed score line: {line!r}")
            entries[parts[0]] = np.array([float(v) for v in parts[1:]])
    if not entries:
        raise DataError(f"{path}: no scores found")
    return entries, classes
