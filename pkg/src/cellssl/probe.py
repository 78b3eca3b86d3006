"""Downstream evaluation of frozen embeddings.

The probe is an L2-regularized hinge-loss linear classifier (one-vs-rest
for more than two classes) trained by full-batch gradient descent, which
keeps every result a pure function of the seed.  Embeddings are
standardized with statistics of the training fold only.  Protocols:
stratified k-fold linear probing, a pseudo-labeling protocol that fits on
a small labeled fraction and relabels the rest, and the random-trimming
study that re-embeds each graph with random subsets of its 2-cell
contributions zeroed out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ccnn import CCNNConfig, CCNNParams, ComplexBatch, encode_batch

log = logging.getLogger(__name__)


@dataclass
class ProbeConfig:
    folds: int = 10
    seeds: int = 5
    reg: float = 1e-3
    epochs: int = 200
    label_fraction: float = 0.1
    lr: float = 0.5

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least two folds")
        if not (0 < self.label_fraction <= 1):
            raise ValueError("label fraction must lie in (0, 1]")


def stratified_folds(labels: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold index per sample; every fold's class counts within one of proportional."""
    assignment = np.empty(len(labels), dtype=np.int64)
    start = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < folds:
            raise ValueError(f"class {cls} has {len(idx)} members for {folds} folds")
        idx = idx[rng.permutation(len(idx))]
        assignment[idx] = (np.arange(len(idx)) + start) % folds
        start += len(idx)
    return assignment


def _standardize(train: np.ndarray):
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return mu, sd


def _fit_hinge(x: np.ndarray, y_signed: np.ndarray, cfg: ProbeConfig):
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(cfg.epochs):
        margins = y_signed * (x @ w + b)
        active = margins < 1.0
        gw = -(x[active] * y_signed[active, None]).sum(axis=0) / n + 2 * cfg.reg * w
        gb = -y_signed[active].sum() / n
        w -= cfg.lr * gw
        b -= cfg.lr * gb
    return w, b


class LinearProbe:
    """One-vs-rest hinge classifier over standardized features."""

    def __init__(self, cfg: ProbeConfig):
        self.cfg = cfg

    def fit(self, x: np.ndarray, y: np.ndarray, num_classes: int):
        self.mu, self.sd = _standardize(x)
        xs = (x - self.mu) / self.sd
        self.classes = num_classes
        self.planes = []
        for cls in range(num_classes):
            signed = np.where(y == cls, 1.0, -1.0)
            self.planes.append(_fit_hinge(xs, signed, self.cfg))
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        xs = (x - self.mu) / self.sd
        scores = np.stack([xs @ w + b for w, b in self.planes], axis=1)
        return scores.argmax(axis=1)

    def accuracy(self, x: np.ndarray, y: np.ndarray) -> float:
        return float((self.predict(x) == y).mean())


def linear_probe_cv(embeddings: np.ndarray, labels: np.ndarray,
                    cfg: ProbeConfig, base_seed: int = 0):
    """Stratified k-fold linear probing over several seeds.

    Returns (mean, std, rows) with one (seed, fold, accuracy) row per fold.
    """
    labels = np.asarray(labels)
    num_classes = int(labels.max()) + 1
    rows = []
    for seed in range(cfg.seeds):
        rng = np.random.default_rng([base_seed, seed])
        fold_of = stratified_folds(labels, cfg.folds, rng)
        for fold in range(cfg.folds):
            test = fold_of == fold
            probe = LinearProbe(cfg).fit(embeddings[~test], labels[~test], num_classes)
            rows.append((seed, fold, probe.accuracy(embeddings[test], labels[test])))
    accs = np.array([r[2] for r in rows])
    return float(accs.mean()), float(accs.std()), rows


def _stratified_fraction(labels: np.ndarray, fraction: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Index subset of about ``fraction`` of samples, proportional per class.

    Proportional rounding can starve a rare class; such draws are resampled
    with a warning, up to ten attempts.
    """
    n = len(labels)
    want = max(int(round(fraction * n)), 1)
    classes = np.unique(labels)
    for attempt in range(10):
        quota = {}
        fractional = []
        total = 0
        for cls in classes:
            cnt = int((labels == cls).sum())
            exact = fraction * cnt
            quota[cls] = int(exact)
            fractional.append((exact - int(exact), cls))
            total += quota[cls]
        fractional.sort(key=lambda t: (-t[0], t[1]))
        for _, cls in fractional:
            if total >= want:
                break
            quota[cls] += 1
            total += 1
        picked = []
        for cls in classes:
            idx = np.flatnonzero(labels == cls)
            idx = idx[rng.permutation(len(idx))]
            picked.extend(idx[:quota[cls]])
        if all(quota[cls] > 0 for cls in classes):
            return np.array(sorted(picked), dtype=np.int64)
        log.warning("labeled fraction missed a class (attempt %d); resampling", attempt + 1)
    raise ValueError("could not draw a labeled subset covering every class")


def semi_supervised_probe(embeddings: np.ndarray, labels: np.ndarray,
                          cfg: ProbeConfig, base_seed: int = 0):
    """Pseudo-labeling protocol: fit on a labeled fraction, relabel the rest, refit."""
    labels = np.asarray(labels)
    num_classes = int(labels.max()) + 1
    rows = []
    for seed in range(cfg.seeds):
        rng = np.random.default_rng([base_seed, seed])
        fold_of = stratified_folds(labels, cfg.folds, rng)
        for fold in range(cfg.folds):
            test = fold_of == fold
            train_idx = np.flatnonzero(~test)
            x_train, y_train = embeddings[train_idx], labels[train_idx]
            if cfg.label_fraction >= 1.0:
                final = LinearProbe(cfg).fit(x_train, y_train, num_classes)
            else:
                lab_local = _stratified_fraction(y_train, cfg.label_fraction, rng)
                unlab = np.setdiff1d(np.arange(len(train_idx)), lab_local)
                first = LinearProbe(cfg).fit(x_train[lab_local], y_train[lab_local], num_classes)
                pseudo = first.predict(x_train[unlab])
                x_all = np.vstack([x_train[lab_local], x_train[unlab]])
                y_all = np.concatenate([y_train[lab_local], pseudo])
                final = LinearProbe(cfg).fit(x_all, y_all, num_classes)
            rows.append((seed, fold, final.accuracy(embeddings[test], labels[test])))
    accs = np.array([r[2] for r in rows])
    return float(accs.mean()), float(accs.std()), rows


@dataclass
class StudyResult:
    """Random-trimming study scatter: accuracy per (ratio, trial) plus baseline."""

    baseline: float
    rows: list[tuple[float, int, float]] = field(default_factory=list)

    def to_tsv(self) -> str:
        out = ["ratio\ttrial\taccuracy\tbaseline"]
        for ratio, trial, acc in self.rows:
            out.append(f"{ratio:g}\t{trial}\t{acc:.6f}\t{self.baseline:.6f}")
        return "\n".join(out) + "\n"


def embed_dataset(batch: ComplexBatch, params: CCNNParams, cfg: CCNNConfig,
                  mask: np.ndarray | None = None) -> np.ndarray:
    """Eval-mode embeddings of every packed graph."""
    return encode_batch(batch, params, cfg, mask=mask, training=False).h.data.copy()


def random_trim_study(
    batch: ComplexBatch,
    params: CCNNParams,
    cfg: CCNNConfig,
    labels: np.ndarray,
    ratios: list[float],
    trials: int,
    probe_cfg: ProbeConfig,
    seed: int = 0,
) -> StudyResult:
    """Zero random 2-cell readout contributions at each ratio; probe each trial."""
    for ratio in ratios:
        if not (0.0 <= ratio <= 1.0):
            raise ValueError(f"trim ratio {ratio} outside [0, 1]")
    base_emb = embed_dataset(batch, params, cfg, mask=np.ones(batch.n2))
    baseline, _, _ = linear_probe_cv(base_emb, labels, probe_cfg, base_seed=seed)
    result = StudyResult(baseline=baseline)
    rng = np.random.default_rng([seed, 1])
    for ratio in ratios:
        for trial in range(trials):
            mask = np.ones(batch.n2)
            for start, end in batch.n2_slices:
                count = end - start
                drop = int(np.floor(ratio * count))
                if drop > 0:
                    chosen = rng.choice(count, size=drop, replace=False)
                    mask[start + chosen] = 0.0
            emb = embed_dataset(batch, params, cfg, mask=mask)
            acc, _, _ = linear_probe_cv(emb, labels, probe_cfg, base_seed=seed)
            result.rows.append((ratio, trial, acc))
    return result
