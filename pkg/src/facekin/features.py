"""Fixed-length sequence features from smoothed displacement fields, CSV
export, and a deterministic softmax-regression baseline classifier.

Per descriptor i the features are: kernel-weighted mean of r'', kernel-
weighted max of r'', temporal peak position (argmax of the kernel-weighted
field mean, as a fraction of the pair index range), kernel-weighted circular
mean and circular variance of theta'. Two globals (mean and max of r'' over
valid points) follow, giving 5m + 2 values. Statistics run over valid points
only; the kernel weights are the same Gaussian RBF kernels the smoothing
gate uses.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import MuscleDescriptorSet, frozen_array
from .errors import DegenerateTraining, EmptySequence
from .smoothing import descriptor_kernels

CV_SEED = 20240  # documented default seed for stratified fold shuffling


@dataclass(frozen=True)
class SequenceFeatures:
    """One fixed-length feature vector (5m + 2 entries) for a sequence."""

    names: tuple
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if len(self.names) != vals.shape[0]:
            raise ValueError("feature names/values lengths differ")
        if not np.all(np.isfinite(vals)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", frozen_array(vals))


def feature_names(descriptors: MuscleDescriptorSet) -> tuple:
    names = []
    for n in descriptors.names:
        names += [
            f"{n}_wmean",
            f"{n}_wmax",
            f"{n}_peak_frac",
            f"{n}_cmean",
            f"{n}_cvar",
        ]
    names += ["global_mean", "global_max"]
    return tuple(names)


def extract_features(
    smoothed_fields,
    descriptors: MuscleDescriptorSet,
    points: np.ndarray,
) -> SequenceFeatures:
    """Aggregate the smoothed fields of one sequence into a feature vector."""
    parts = list(smoothed_fields)
    if not parts:
        raise EmptySequence("need at least one smoothed field")
    t_len = len(parts)
    kernels = descriptor_kernels(points, descriptors)  # (n, m)
    m = descriptors.count

    r = np.stack([p.r_double_prime for p in parts])  # (T, n)
    theta = np.stack([p.theta_prime for p in parts])
    valid = np.stack([p.valid for p in parts])
    vmask = valid.astype(np.float64)

    values = []
    for i in range(m):
        k = kernels[:, i][None, :]  # (1, n)
        kw = k * vmask
        denom = kw.sum()
        wmean = float((kw * r).sum() / denom) if denom > 0 else 0.0
        gated = np.where(valid, k * r, 0.0)
        wmax = float(gated.max()) if denom > 0 else 0.0
        # Temporal profile: kernel-weighted mean magnitude per field.
        row_denom = kw.sum(axis=1)
        profile = np.where(row_denom > 0, (kw * r).sum(axis=1) / np.where(row_denom > 0, row_denom, 1.0), 0.0)
        peak = float(np.argmax(profile)) / max(t_len - 1, 1)
        c = float((kw * np.cos(theta)).sum())
        s = float((kw * np.sin(theta)).sum())
        if denom > 0:
            cmean = float(np.arctan2(s, c))
            cvar = float(1.0 - np.hypot(c, s) / denom)
        else:
            cmean = 0.0
            cvar = 0.0
        values += [wmean, wmax, peak, cmean, cvar]

    n_valid = vmask.sum()
    if n_valid > 0:
        values.append(float((r * vmask).sum() / n_valid))
        values.append(float(np.where(valid, r, 0.0).max()))
    else:
        values += [0.0, 0.0]
    return SequenceFeatures(feature_names(descriptors), np.asarray(values))


# ---------------------------------------------------------------------------
# CSV export

def write_features_csv(rows, path) -> None:
    """rows: iterable of (SequenceFeatures, label); label may be ''.
    Floats use shortest round-trip repr so parsing is exact."""
    rows = list(rows)
    if not rows:
        raise EmptySequence("no feature rows to write")
    header = list(rows[0][0].names) + ["label"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for feats, label in rows:
            writer.writerow([repr(float(v)) for v in feats.values] + [label])


def read_features_csv(path):
    """Returns (names, values (n, d) array, labels list)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != "label":
            raise ValueError(f"{path}: last column must be 'label'")
        names = tuple(header[:-1])
        values = []
        labels = []
        for row in reader:
            if len(row) != len(header):
                raise ValueError(f"{path}: row width mismatch")
            values.append([float(v) for v in row[:-1]])
            labels.append(row[-1])
    return names, np.asarray(values, dtype=np.float64), labels


def write_predictions_csv(rows, class_names, path) -> None:
    """rows: iterable of (sequence_id, predicted_label, scores)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence_id", "predicted"] + [f"score_{c}" for c in class_names])
        for seq_id, label, scores in rows:
            writer.writerow([seq_id, label] + [repr(float(s)) for s in scores])


# ---------------------------------------------------------------------------
# baseline classifier

@dataclass(frozen=True)
class BaselineModel:
    classes: tuple
    weights: np.ndarray  # (C, d + 1), bias last
    mean: np.ndarray
    scale: np.ndarray

    def scores(self, x: np.ndarray) -> np.ndarray:
        z = (np.atleast_2d(x) - self.mean) / self.scale
        logits = z @ self.weights[:, :-1].T + self.weights[:, -1]
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, x: np.ndarray):
        p = self.scores(x)
        return [self.classes[i] for i in np.argmax(p, axis=1)], p


def train_baseline(
    x: np.ndarray,
    y,
    l2: float = 1e-3,
    lr: float = 0.5,
    iters: int = 500,
    standardize: bool = True,
) -> BaselineModel:
    """Multinomial softmax regression by full-batch gradient descent.

    Deterministic: zero-initialized weights, fixed iteration budget, no
    stochasticity. With standardization on, predictions are invariant to
    per-feature positive affine scaling of the inputs.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = list(y)
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise DegenerateTraining(f"training set has {len(classes)} class(es)")
    if standardize:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    else:
        mean = np.zeros(x.shape[1])
        scale = np.ones(x.shape[1])
    z = (x - mean) / scale
    n, d = z.shape
    c = len(classes)
    onehot = np.zeros((n, c))
    lut = {cls: i for i, cls in enumerate(classes)}
    for i, lab in enumerate(labels):
        onehot[i, lut[lab]] = 1.0
    w = np.zeros((c, d + 1))
    zb = np.concatenate([z, np.ones((n, 1))], axis=1)
    for _ in range(iters):
        logits = zb @ w.T
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        p = e / e.sum(axis=1, keepdims=True)
        grad = (p - onehot).T @ zb / n
        grad[:, :-1] += l2 * w[:, :-1]
        w -= lr * grad
    return BaselineModel(classes, w, mean, scale)


def baseline_classify(train_x, train_y, test_x, **kwargs):
    """Train on (train_x, train_y), predict test_x.
    Returns (predicted_labels, score_matrix)."""
    model = train_baseline(np.asarray(train_x), train_y, **kwargs)
    return model.predict(np.asarray(test_x))


def stratified_kfold(labels, k: int = 10, seed: int = CV_SEED):
    """Deterministic stratified folds: per class, indices are shuffled with
    the seeded generator and dealt round-robin. Returns a list of k
    (train_idx, test_idx) pairs."""
    labels = list(labels)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    for cls in sorted(set(labels)):
        idx = np.array([i for i, lab in enumerate(labels) if lab == cls])
        rng.shuffle(idx)
        for pos, i in enumerate(idx):
            folds[pos % k].append(int(i))
    all_idx = set(range(len(labels)))
    out = []
    for f in folds:
        test = sorted(f)
        train = sorted(all_idx - set(test))
        out.append((np.array(train, dtype=np.int64), np.array(test, dtype=np.int64)))
    return out


def cross_validate(x, y, k: int = 10, seed: int = CV_SEED, **kwargs) -> float:
    """Mean accuracy over deterministic stratified k-fold splits."""
    x = np.asarray(x, dtype=np.float64)
    labels = list(y)
    correct = 0
    total = 0
    for train_idx, test_idx in stratified_kfold(labels, k, seed):
        if len(test_idx) == 0:
            continue
        pred, _ = baseline_classify(
            x[train_idx], [labels[i] for i in train_idx], x[test_idx], **kwargs
        )
        correct += sum(p == labels[i] for p, i in zip(pred, test_idx))
        total += len(test_idx)
    return correct / total if total else 0.0
