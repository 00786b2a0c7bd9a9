"""Naive Bayes mixture over binary features, plus the independent-features baseline.

Sampling randomness follows one rule everywhere: row ``r`` of a sample drawn
with ``seed`` reads its uniforms from ``PCG64(SeedSequence(seed, spawn_key=(r,)))``.
Rows therefore do not depend on how the work is chunked across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .dataset import BinaryDataset
from .errors import InputError

FORMAT_VERSION = 1
_WEIGHT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class NaiveBayesModel:
    """Mixing weights ``weights`` (k,) and ``cond_probs`` (d, k) with
    ``cond_probs[i, j] = Prob[X_i = 1 | Y = j]``."""

    weights: np.ndarray
    cond_probs: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        p = np.array(self.cond_probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != w.size or w.size < 1 or p.shape[0] < 1:
            raise InputError(f"incompatible shapes: weights {w.shape}, cond_probs {p.shape}")
        if (w < 0).any() or abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise InputError(f"weights must be non-negative and sum to 1, got sum {w.sum()!r}")
        if not np.isfinite(p).all() or (p < 0).any() or (p > 1).any():
            raise InputError("cond_probs entries must lie in [0, 1]")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != p.shape[0]:
            raise InputError(f"{len(names)} feature names for {p.shape[0]} features")
        w.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "cond_probs", p)
        object.__setattr__(self, "feature_names", names)

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def d(self) -> int:
        return self.cond_probs.shape[0]

    def permuted(self, perm) -> "NaiveBayesModel":
        perm = np.asarray(perm)
        return NaiveBayesModel(self.weights[perm], self.cond_probs[:, perm], self.feature_names)

    def marginals(self) -> np.ndarray:
        return self.cond_probs @ self.weights

    def __eq__(self, other):
        if not isinstance(other, NaiveBayesModel):
            return NotImplemented
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.cond_probs, other.cond_probs)
        )


@dataclass(frozen=True, eq=False)
class BaselineModel:
    """Per-feature firing frequencies; features are sampled independently."""

    freqs: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        f = np.array(self.freqs, dtype=np.float64).reshape(-1)
        if f.size < 1 or not np.isfinite(f).all() or (f < 0).any() or (f > 1).any():
            raise InputError("baseline frequencies must lie in [0, 1]")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != f.size:
            raise InputError(f"{len(names)} feature names for {f.size} features")
        f.setflags(write=False)
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "feature_names", names)

    @property
    def d(self) -> int:
        return self.freqs.size

    def __eq__(self, other):
        if not isinstance(other, BaselineModel):
            return NotImplemented
        return self.feature_names == other.feature_names and np.array_equal(self.freqs, other.freqs)


# -- sampling -----------------------------------------------------------------

def row_uniforms(seed: int, start: int, stop: int, width: int) -> np.ndarray:
    """Uniforms for rows ``start..stop-1``, ``width`` per row, one stream per row."""
    out = np.empty((stop - start, width))
    for i, r in enumerate(range(start, stop)):
        ss = np.random.SeedSequence(seed, spawn_key=(r,))
        out[i] = np.random.Generator(np.random.PCG64(ss)).random(width)
    return out


def _chunked(m, n_jobs, fn):
    n_jobs = max(1, int(n_jobs))
    if n_jobs == 1 or m < 2:
        return fn(0, m)
    bounds = np.linspace(0, m, n_jobs + 1).astype(int)
    with ThreadPoolExecutor(n_jobs) as pool:
        parts = list(pool.map(fn, bounds[:-1], bounds[1:]))
    return np.vstack(parts)


def sample(model: NaiveBayesModel, m: int, seed: int, n_jobs: int = 1) -> BinaryDataset:
    """Draw ``m`` rows: a latent state from the weights, then independent Bernoulli features.

    The first uniform of each row picks the latent state by inverse CDF; the
    next ``d`` decide the features (feature fires iff uniform < probability).
    """
    if m < 1:
        raise InputError(f"m must be >= 1, got {m}")
    cdf = np.cumsum(model.weights)
    cdf[-1] = np.inf
    probs_t = model.cond_probs.T

    def block(start, stop):
        u = row_uniforms(seed, start, stop, model.d + 1)
        z = np.searchsorted(cdf, u[:, 0], side="right")
        # side='right' never selects a zero-weight state
        return (u[:, 1:] < probs_t[z]).astype(np.uint8)

    return BinaryDataset(_chunked(m, n_jobs, block), model.feature_names)


def sample_baseline(model: BaselineModel, m: int, seed: int, n_jobs: int = 1) -> BinaryDataset:
    if m < 1:
        raise InputError(f"m must be >= 1, got {m}")

    def block(start, stop):
        u = row_uniforms(seed, start, stop, model.d)
        return (u < model.freqs).astype(np.uint8)

    return BinaryDataset(_chunked(m, n_jobs, block), model.feature_names)


def fit_baseline(data: BinaryDataset) -> BaselineModel:
    return BaselineModel(data.as_float().mean(axis=0), data.feature_names)


# -- likelihood ---------------------------------------------------------------

def component_log_probs(cond_probs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(N, k) matrix of log Prob[x_n | Y = j]; exact 0/1 probabilities give -inf."""
    p = np.asarray(cond_probs, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_p = np.log(p)
        log_q = np.log1p(-p)
    hit0 = np.isneginf(log_p)
    hit1 = np.isneginf(log_q)
    out = x @ np.where(hit0, 0.0, log_p) + (1.0 - x) @ np.where(hit1, 0.0, log_q)
    if hit0.any() or hit1.any():
        impossible = x @ hit0 + (1.0 - x) @ hit1
        out[impossible > 0] = -np.inf
    return out


def joint_log_probs(model: NaiveBayesModel, x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_w = np.log(model.weights)
    return component_log_probs(model.cond_probs, x) + log_w


def row_log_likelihood(model: NaiveBayesModel, data: BinaryDataset) -> np.ndarray:
    _check_dims(model.d, data)
    return logsumexp(joint_log_probs(model, data.as_float()), axis=1)


def log_likelihood(model: NaiveBayesModel, data: BinaryDataset) -> float:
    """Total log-likelihood of ``data``; may be ``-inf`` for boundary probabilities."""
    return float(np.sum(row_log_likelihood(model, data)))


def _check_dims(d, data):
    if data.n_cols != d:
        raise InputError(f"model has {d} features but data has {data.n_cols}")


# -- serialization --------------------------------------------------------------

def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in values)


def save_model(model, path) -> None:
    """Write a ``.nbm`` text file (either model kind)."""
    lines = [f"nbm {FORMAT_VERSION}"]
    if isinstance(model, NaiveBayesModel):
        lines += ["kind naive_bayes", f"k {model.k}", f"d {model.d}"]
        lines += [f"feature {n}" for n in model.feature_names]
        lines.append("weights " + _fmt(model.weights))
        lines.append("cond_probs")
        lines += [_fmt(row) for row in model.cond_probs]
    elif isinstance(model, BaselineModel):
        lines += ["kind baseline", f"d {model.d}"]
        lines += [f"feature {n}" for n in model.feature_names]
        lines.append("freqs " + _fmt(model.freqs))
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    lines = path.read_text().splitlines()
    try:
        return _parse_model(lines)
    except (IndexError, StopIteration, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{path}: malformed model file ({str(exc) or 'truncated'})") from None


def _parse_model(lines):
    it = iter(lines)

    def field(name):
        line = next(it)
        key, _, rest = line.partition(" ")
        if key != name:
            raise ValueError(f"expected {name!r}, found {line!r}")
        return rest

    version = int(field("nbm"))
    if version != FORMAT_VERSION:
        raise InputError(f"unsupported model format version {version}")
    kind = field("kind")
    if kind == "naive_bayes":
        k = int(field("k"))
        d = int(field("d"))
        names = [field("feature") for _ in range(d)]
        weights = np.array(field("weights").split(), dtype=np.float64)
        field("cond_probs")
        probs = np.array([next(it).split() for _ in range(d)], dtype=np.float64)
        if weights.size != k or probs.shape != (d, k):
            raise ValueError("dimension mismatch")
        return NaiveBayesModel(weights, probs, names)
    if kind == "baseline":
        d = int(field("d"))
        names = [field("feature") for _ in range(d)]
        return BaselineModel(np.array(field("freqs").split(), dtype=np.float64), names)
    raise ValueError(f"unknown model kind {kind!r}")
