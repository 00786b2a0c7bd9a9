"""Real-vs-synthetic comparison: unbiased MMD and a classifier two-sample test."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .dataset import BinaryDataset
from .errors import InputError
from .forest import ForestSettings, fit_forest

MEDIAN_SUBSAMPLE = 2000
DEFAULT_TEST_FRACTION = 0.3
_BLOCK = 2048

METRIC_COLUMNS = ("accuracy", "recall", "precision", "specificity", "mmd")


@dataclass(frozen=True)
class EvalReport:
    """Distinguisher metrics with synthetic rows as the positive class."""

    accuracy: float
    recall: float
    precision: float
    specificity: float
    mmd: float
    distinguisher: str
    seed: int

    HEADER = METRIC_COLUMNS + ("distinguisher", "seed")

    def csv_row(self) -> list:
        return [format_metric(getattr(self, c)) for c in METRIC_COLUMNS] + [
            self.distinguisher,
            str(self.seed),
        ]


def format_metric(v: float) -> str:
    return format(float(v), ".17g")


# -- MMD ----------------------------------------------------------------------

def _distance_histogram(a: np.ndarray, b: np.ndarray, d: int) -> np.ndarray:
    """Counts of each squared distance (Hamming distance) over all pairs (row of a, row of b)."""
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    na = a.sum(axis=1)
    nb = b.sum(axis=1)
    hist = np.zeros(d + 1, dtype=np.int64)
    for start in range(0, a.shape[0], _BLOCK):
        blk = a[start : start + _BLOCK]
        h = na[start : start + _BLOCK, None] + nb[None, :] - 2.0 * (blk @ b.T)
        hist += np.bincount(np.rint(h).astype(np.int64).ravel(), minlength=d + 1)
    return hist


def _canonical_subsample(x: np.ndarray, cap: int) -> np.ndarray:
    if x.shape[0] <= cap:
        return x
    order = np.lexsort(x.T[::-1])
    pick = np.linspace(0, x.shape[0] - 1, cap).round().astype(np.intp)
    return x[order[pick]]


def median_bandwidth(a: BinaryDataset, b: BinaryDataset, cap: int = MEDIAN_SUBSAMPLE) -> float:
    """Median pairwise Euclidean distance over the pooled rows.

    Pools larger than ``cap`` rows are thinned by sorting the rows and taking
    evenly spaced ones, so the result depends neither on row order nor on
    argument order. Falls back to 1.0 when every pooled row is identical.
    """
    pool = _canonical_subsample(np.vstack([a.values, b.values]), cap)
    d = pool.shape[1]
    hist = _distance_histogram(pool, pool, d)
    hist[0] -= pool.shape[0]  # self pairs
    hist //= 2
    total = int(hist.sum())
    if total == 0 or hist[0] == total:
        return 1.0
    cum = np.cumsum(hist)
    # np.median convention on the sorted pair distances
    lo = int(np.searchsorted(cum, (total - 1) // 2, side="right"))
    hi = int(np.searchsorted(cum, total // 2, side="right"))
    return 0.5 * (math.sqrt(lo) + math.sqrt(hi))


def mmd_unbiased(
    a: BinaryDataset, b: BinaryDataset, bandwidth: Union[float, str] = "median"
) -> float:
    """Unbiased MMD^2 U-statistic with the Gaussian kernel ``exp(-|x-y|^2 / (2 sigma^2))``.

    Between binary rows the squared distance is the Hamming distance, so each
    kernel sum is computed exactly from integer distance histograms. This
    keeps the statistic symmetric in its arguments and independent of row
    order to the last bit.
    """
    if a.n_cols != b.n_cols:
        raise InputError(f"feature count mismatch: {a.n_cols} vs {b.n_cols}")
    n, m = a.n_rows, b.n_rows
    if n < 2 or m < 2:
        raise InputError(f"each sample needs at least 2 rows, got {n} and {m}")
    if isinstance(bandwidth, str):
        if bandwidth != "median":
            raise InputError(f"bandwidth must be positive or 'median', got {bandwidth!r}")
        sigma = median_bandwidth(a, b)
    else:
        sigma = float(bandwidth)
        if not sigma > 0:
            raise InputError(f"bandwidth must be positive, got {bandwidth}")
    d = a.n_cols
    kern = np.exp(-np.arange(d + 1) / (2.0 * sigma**2))
    haa = _distance_histogram(a.values, a.values, d)
    haa[0] -= n
    hbb = _distance_histogram(b.values, b.values, d)
    hbb[0] -= m
    hab = _distance_histogram(a.values, b.values, d)
    kaa = float(haa @ kern) / (n * (n - 1))
    kbb = float(hbb @ kern) / (m * (m - 1))
    kab = float(hab @ kern) / (n * m)
    return (kaa + kbb) - 2.0 * kab


# -- classifier two-sample test ---------------------------------------------------

def confusion_metrics(y_true, y_pred) -> dict:
    """Accuracy, recall, precision, specificity with label 1 as positive.

    A rate with an empty denominator is reported as 0.
    """
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    tp = int(np.sum(y_true & y_pred))
    tn = int(np.sum(~y_true & ~y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))

    def rate(num, den):
        return num / den if den else 0.0

    return {
        "accuracy": rate(tp + tn, tp + tn + fp + fn),
        "recall": rate(tp, tp + fn),
        "precision": rate(tp, tp + fp),
        "specificity": rate(tn, tn + fp),
    }


def grouped_stratified_split(x, y, test_fraction, rng):
    """Stratified train/test split that keeps identical rows together.

    Distinct row patterns are visited in random order and moved to the test
    side whole while neither class exceeds its quota of
    ``round(test_fraction * n_c)`` rows. A quota left unfilled (only possible
    when some pattern is very frequent) is topped up with single rows.

    Keeping duplicates together matters: a test row whose exact twin sits in
    training with the other label is misclassified by any memorizing
    learner, which drags accuracy below chance for near-copies.
    """
    y = np.asarray(y)
    _, group = np.unique(x, axis=0, return_inverse=True)
    group = group.ravel()
    n_groups = int(group.max()) + 1
    per_class = np.stack([np.bincount(group[y == c], minlength=n_groups) for c in (0, 1)], axis=1)
    quota = np.array([round(test_fraction * np.sum(y == c)) for c in (0, 1)])
    taken = np.zeros(2, dtype=np.int64)
    in_test = np.zeros(n_groups, dtype=bool)
    for g in rng.permutation(n_groups):
        if np.all(taken + per_class[g] <= quota):
            in_test[g] = True
            taken += per_class[g]
    test_mask = in_test[group]
    for c in (0, 1):
        short = int(quota[c] - taken[c])
        if short > 0:
            pool = np.flatnonzero(~test_mask & (y == c))
            test_mask[rng.choice(pool, short, replace=False)] = True
    train, test = np.flatnonzero(~test_mask), np.flatnonzero(test_mask)
    for label in (0, 1):
        if not (np.any(y[train] == label) and np.any(y[test] == label)):
            raise InputError(
                f"test_fraction={test_fraction} leaves an empty train or test part for class {label}"
            )
    return train, test


def classifier_two_sample_test(
    real: BinaryDataset,
    synth: BinaryDataset,
    settings: ForestSettings = ForestSettings(),
    test_fraction: float = DEFAULT_TEST_FRACTION,
    seed: int = 0,
    n_jobs: int = 1,
    bandwidth: Union[float, str] = "median",
) -> EvalReport:
    """Train a forest to tell real (label 0) from synthetic (label 1) rows.

    The larger side is subsampled to the size of the smaller one; ``seed``
    drives that subsample and the train/test split (see
    :func:`grouped_stratified_split`), ``settings.seed`` the forest. The MMD is
    computed on the full inputs.
    """
    if real.n_cols != synth.n_cols:
        raise InputError(f"feature count mismatch: {real.n_cols} vs {synth.n_cols}")
    if real.n_rows < 10 or synth.n_rows < 10:
        raise InputError("each side needs at least 10 rows")
    if not 0.0 < test_fraction < 1.0:
        raise InputError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    n = min(real.n_rows, synth.n_rows)

    def take(values):
        if values.shape[0] == n:
            return values
        return values[np.sort(rng.choice(values.shape[0], n, replace=False))]

    x = np.vstack([take(real.values), take(synth.values)])
    y = np.concatenate([np.zeros(n, dtype=np.int8), np.ones(n, dtype=np.int8)])
    train, test = grouped_stratified_split(x, y, test_fraction, rng)
    forest = fit_forest(x[train], y[train], settings, n_jobs=n_jobs)
    metrics = confusion_metrics(y[test], forest.predict(x[test]))
    return EvalReport(
        mmd=mmd_unbiased(real, synth, bandwidth),
        distinguisher=settings.describe(),
        seed=seed,
        **metrics,
    )


def with_seed(settings: ForestSettings, seed: int) -> ForestSettings:
    return replace(settings, seed=seed)
