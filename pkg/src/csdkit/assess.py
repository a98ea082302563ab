"""Article-organization assessment from multi-size CSD-1 features.

Pipeline: merge rater scores onto the half-point label grid, extract a
90-dimensional feature vector per essay (10 rank quantiles of the block
score distribution at 9 block sizes), train a one-vs-one RBF SVM on a
label-stratified 80-20 split, and report tolerance-banded metrics for the
exact / +-0.5 / +-1 bands.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._smo import rbf_kernel, smo_train
from .csd1 import block_size, sample_uniform_blocks, score_blocks, _sorted_curve_arrays
from .textmodel import Article, EmbeddingMatrix, binomial, enumerate_blocks

__all__ = [
    "EssayRecord",
    "FeatureVector",
    "SvcParams",
    "SvmModel",
    "DEFAULT_SIZES",
    "QUANTILE_POSITIONS",
    "merge_scores",
    "extract_features",
    "split_dataset",
    "train_svc",
    "predict_svc",
    "evaluate",
    "save_model",
    "load_model",
]

DEFAULT_SIZES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
QUANTILE_POSITIONS = (0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95)
DEFAULT_FEATURE_SAMPLES = 1000

MODEL_FORMAT_VERSION = 1


def merge_scores(rater_scores) -> float:
    """Arithmetic mean snapped to the nearest half point; exact quarter-point
    midpoints round up."""
    scores = list(rater_scores)
    if not scores:
        raise ValueError("need at least one rater score")
    mean = sum(scores) / len(scores)
    return math.floor(mean * 2.0 + 0.5) / 2.0


@dataclass(frozen=True)
class EssayRecord:
    article: Article
    rater_scores: tuple[float, ...]
    label: float

    def __post_init__(self):
        if isinstance(self.rater_scores, list):
            object.__setattr__(self, "rater_scores", tuple(self.rater_scores))
        if abs(self.label * 2.0 - round(self.label * 2.0)) > 1e-9:
            raise ValueError(f"label must sit on the half-point grid, got {self.label}")


@dataclass(frozen=True)
class FeatureVector:
    """Concatenated per-size rank quantiles; each 10-value group is
    non-increasing because it reads a sorted score list."""

    values: np.ndarray = field(repr=False)
    essay_id: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size % len(QUANTILE_POSITIONS) != 0:
            raise ValueError(f"feature length must be a multiple of 10, got {vals.shape}")
        if np.any(vals < -1e-12) or np.any(vals > 1.0 + 1e-12):
            raise ValueError("features must lie in [0, 1]")
        groups = vals.reshape(-1, len(QUANTILE_POSITIONS))
        if np.any(np.diff(groups, axis=1) > 1e-12):
            raise ValueError("per-size quantile groups must be non-increasing")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def extract_features(
    article: Article,
    emb: EmbeddingMatrix,
    n_samples: int = DEFAULT_FEATURE_SAMPLES,
    sizes: tuple[float, ...] = DEFAULT_SIZES,
    rng: np.random.Generator | None = None,
    jobs: int = 1,
) -> FeatureVector:
    """Rank quantiles of the block score distribution at each size.

    Per size c: k = max(1, floor(c*n)); all blocks are scored when
    C(n, k) <= n_samples, otherwise n_samples uniform draws are scored
    after deduplication (no top-up).  Quantiles are read at the 1-based
    ranks ceil(p * M) for the decile midpoints p.
    """
    if rng is None:
        rng = np.random.default_rng(42)
    n = article.n
    values: list[float] = []
    for c in sorted(sizes):
        k = block_size(c, n)
        total = binomial(n, k)
        if total <= n_samples:
            blocks = [b.indices for b in enumerate_blocks(n, k)]
        else:
            drawn = sample_uniform_blocks(n, k, n_samples, rng)
            blocks = sorted({b.indices for b in drawn})
        scores = score_blocks(emb, blocks, jobs=jobs)
        _, ys = _sorted_curve_arrays(blocks, scores)
        m = len(blocks)
        for p in QUANTILE_POSITIONS:
            rank = min(max(math.ceil(p * m), 1), m)
            values.append(float(ys[rank - 1]))
    return FeatureVector(values=np.array(values), essay_id=article.id)


def split_dataset(
    records: list,
    train_frac: float = 0.8,
    rng: np.random.Generator | None = None,
) -> tuple[list, list]:
    """Label-stratified random split.

    Largest-remainder allocation hits round(train_frac * total) while every
    label with at least two members lands in both partitions when the
    arithmetic allows.  Works on any records exposing a `label` attribute.
    """
    if rng is None:
        rng = np.random.default_rng(42)
    if len(records) < 5:
        raise ValueError(f"need at least 5 records to split, got {len(records)}")
    if not (0.0 < train_frac < 1.0):
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")

    groups: dict[float, list[int]] = {}
    for idx, rec in enumerate(records):
        groups.setdefault(rec.label, []).append(idx)
    labels = sorted(groups)
    target = round(train_frac * len(records))

    quota = {}
    frac = {}
    for lab in labels:
        exact = train_frac * len(groups[lab])
        quota[lab] = math.floor(exact)
        frac[lab] = exact - quota[lab]
    remainder = target - sum(quota.values())
    for lab in sorted(labels, key=lambda l: (-frac[l], -len(groups[l]), l))[:remainder]:
        quota[lab] += 1
    for lab in labels:
        size = len(groups[lab])
        if size >= 2:
            quota[lab] = min(max(quota[lab], 1), size - 1)
        else:
            quota[lab] = min(quota[lab], size)

    train: list = []
    test: list = []
    for lab in labels:
        idxs = np.array(groups[lab])
        perm = rng.permutation(idxs.size)
        shuffled = idxs[perm]
        take = quota[lab]
        train.extend(records[int(i)] for i in shuffled[:take])
        test.extend(records[int(i)] for i in shuffled[take:])
    return train, test


# ---------------------------------------------------------------------------
# One-vs-one SVC
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SvcParams:
    C: float = 1.0
    kernel: str = "rbf"
    gamma: float | str = "scale"
    tol: float = 1e-3
    max_iter: int = 10000

    def __post_init__(self):
        if self.kernel != "rbf":
            raise ValueError(f"only the rbf kernel is supported, got {self.kernel!r}")
        if self.C <= 0.0:
            raise ValueError(f"C must be positive, got {self.C}")


@dataclass(frozen=True)
class PairModel:
    neg_label: float
    pos_label: float
    support_vectors: np.ndarray = field(repr=False)
    dual_coef: np.ndarray = field(repr=False)
    bias: float = 0.0


@dataclass(frozen=True)
class SvmModel:
    """One-vs-one SVM over the half-point label grid; the standardization
    stats travel with the model so prediction is self-contained."""

    classes: tuple[float, ...]
    gamma: float
    C: float
    kernel: str
    mean: np.ndarray = field(repr=False)
    std: np.ndarray = field(repr=False)
    pairs: tuple[PairModel, ...] = ()

    @property
    def dim(self) -> int:
        return self.mean.size


def _as_matrix(features) -> tuple[np.ndarray, list[str]]:
    if isinstance(features, np.ndarray):
        return np.asarray(features, dtype=np.float64), [""] * features.shape[0]
    rows = [fv.values for fv in features]
    ids = [fv.essay_id for fv in features]
    return np.array(rows, dtype=np.float64), ids


def train_svc(features, labels, params: SvcParams = SvcParams()) -> SvmModel:
    """Train one-vs-one binary SVMs by SMO on z-scored features.

    gamma "scale" resolves to 1 / (d * mean feature variance) measured on
    the standardized training features.
    """
    x, _ = _as_matrix(features)
    y = np.asarray(labels, dtype=np.float64)
    if x.shape[0] != y.size:
        raise ValueError(f"{x.shape[0]} feature rows but {y.size} labels")
    classes = tuple(sorted(set(float(v) for v in y)))
    if len(classes) < 2:
        raise ValueError("need at least 2 distinct labels to train")

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std_safe = np.where(std > 0.0, std, 1.0)  # zero-variance dims pass through
    xs = (x - mean) / std_safe

    if params.gamma == "scale":
        mean_var = float(xs.var(axis=0).mean())
        gamma = 1.0 / (x.shape[1] * mean_var) if mean_var > 0.0 else 1.0
    else:
        gamma = float(params.gamma)

    pairs = []
    for ai in range(len(classes)):
        for bi in range(ai + 1, len(classes)):
            neg, pos = classes[ai], classes[bi]
            mask = (y == neg) | (y == pos)
            sub_x = xs[mask]
            sub_y = np.where(y[mask] == pos, 1.0, -1.0)
            kernel = rbf_kernel(sub_x, sub_x, gamma)
            alpha, bias, _, _ = smo_train(
                kernel, sub_y, params.C, tol=params.tol, max_iter=params.max_iter
            )
            sv = alpha > 1e-10
            pairs.append(
                PairModel(
                    neg_label=neg,
                    pos_label=pos,
                    support_vectors=sub_x[sv].copy(),
                    dual_coef=(alpha[sv] * sub_y[sv]).copy(),
                    bias=bias,
                )
            )
    return SvmModel(
        classes=classes,
        gamma=gamma,
        C=params.C,
        kernel=params.kernel,
        mean=mean,
        std=std_safe,
        pairs=tuple(pairs),
    )


def _vote(classes: tuple[float, ...], pair_winners: list[float]) -> float:
    """Pairwise-vote winner; ties go to the smallest label."""
    counts = {c: 0 for c in classes}
    for w in pair_winners:
        counts[w] += 1
    best = max(counts.values())
    return min(c for c, v in counts.items() if v == best)


def predict_svc(model: SvmModel, feature_vector) -> float:
    """Label of one feature vector by one-vs-one vote."""
    vals = feature_vector.values if isinstance(feature_vector, FeatureVector) else feature_vector
    vals = np.asarray(vals, dtype=np.float64)
    if vals.shape != (model.dim,):
        raise ValueError(f"feature dimension {vals.shape} does not match model {model.dim}")
    z = (vals - model.mean) / model.std
    winners = []
    for pair in model.pairs:
        if pair.support_vectors.shape[0] == 0:
            winners.append(pair.neg_label)
            continue
        k = rbf_kernel(pair.support_vectors, z[None, :], model.gamma)[:, 0]
        decision = float(pair.dual_coef @ k + pair.bias)
        winners.append(pair.pos_label if decision > 0.0 else pair.neg_label)
    return _vote(model.classes, winners)


def evaluate(preds, labels, tolerances=(0.0, 0.5, 1.0)) -> dict:
    """Hit-rate and tolerance-relaxed macro-F1 per tolerance band.

    For band tau, a prediction p hits class l when |p - l| <= tau; per class
    TP counts true-l items hit, FP counts items predicted within tau of l
    whose true label is outside tau of l, FN counts true-l items missed.
    """
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(labels, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions but {t.size} labels")
    classes = sorted(set(float(v) for v in t))
    out = {}
    for tau in tolerances:
        eps = tau + 1e-9
        hit = float(np.mean(np.abs(p - t) <= eps))
        f1s = []
        for cls in classes:
            true_c = t == cls
            pred_near = np.abs(p - cls) <= eps
            true_near = np.abs(t - cls) <= eps
            tp = int(np.sum(true_c & pred_near))
            fn = int(np.sum(true_c & ~pred_near))
            fp = int(np.sum(pred_near & ~true_near))
            denom = 2 * tp + fp + fn
            f1s.append(2 * tp / denom if denom > 0 else 0.0)
        out[float(tau)] = {"hit_rate": hit, "macro_f1": float(np.mean(f1s))}
    return out


# ---------------------------------------------------------------------------
# Model serialization (versioned JSON)
# ---------------------------------------------------------------------------


def model_to_dict(model: SvmModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "csd-organization-svc",
        "classes": list(model.classes),
        "kernel": model.kernel,
        "gamma": model.gamma,
        "C": model.C,
        "standardization": {
            "mean": model.mean.tolist(),
            "std": model.std.tolist(),
        },
        "pairs": [
            {
                "neg_label": p.neg_label,
                "pos_label": p.pos_label,
                "support_vectors": p.support_vectors.tolist(),
                "dual_coef": p.dual_coef.tolist(),
                "bias": p.bias,
            }
            for p in model.pairs
        ],
    }


def model_from_dict(doc: dict) -> SvmModel:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")
    dim = len(doc["standardization"]["mean"])
    pairs = tuple(
        PairModel(
            neg_label=float(p["neg_label"]),
            pos_label=float(p["pos_label"]),
            support_vectors=np.array(p["support_vectors"], dtype=np.float64).reshape(-1, dim),
            dual_coef=np.array(p["dual_coef"], dtype=np.float64),
            bias=float(p["bias"]),
        )
        for p in doc["pairs"]
    )
    return SvmModel(
        classes=tuple(float(c) for c in doc["classes"]),
        gamma=float(doc["gamma"]),
        C=float(doc["C"]),
        kernel=doc["kernel"],
        mean=np.array(doc["standardization"]["mean"], dtype=np.float64),
        std=np.array(doc["standardization"]["std"], dtype=np.float64),
        pairs=pairs,
    )


def save_model(model: SvmModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n")


def load_model(path) -> SvmModel:
    return model_from_dict(json.loads(Path(path).read_text()))
