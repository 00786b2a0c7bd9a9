"""Whitening, tensor power method and parameter recovery.

With ``W`` whitening the completed second moment (``W^T M2 W = I``), the
whitened third moment ``T = M3(W, W, W)`` is orthogonally decomposable:
``T = sum_j lambda_j v_j^{(x)3}`` with ``lambda_j = 1 / sqrt(w_j)``. Each
component's conditional probabilities come back as ``lambda_j * B^T v_j``
where ``B`` is the pseudo-inverse of the whitening map.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .dataset import BinaryDataset
from .errors import DeflationError, InputError, RankDeficiencyError
from .model import NaiveBayesModel
from .moments import (
    DEFAULT_ITERS,
    DEFAULT_TOL,
    MomentSet,
    complete_fibers,
    top_eigen,
    whitened_repeated,
)

PROB_FLOOR = 1e-6
WEIGHT_FLOOR = 1e-6
EIG_RTOL = 1e-10
SYMMETRY_TOL = 1e-8
_BLOCK_ROWS = 4096


@dataclass(frozen=True, eq=False)
class WhiteningMap:
    w: np.ndarray  # (d, k)
    pseudo_inverse: np.ndarray  # (k, d)
    eigenvalues: np.ndarray

    @property
    def k(self) -> int:
        return self.w.shape[1]


@dataclass(frozen=True)
class EigenPair:
    eigenvalue: float
    eigenvector: np.ndarray


def whiten(m2: np.ndarray, k: int) -> WhiteningMap:
    """Whitening map from the top-``k`` eigenpairs of a completed second moment.

    Raises :class:`RankDeficiencyError` if fewer than ``k`` eigenvalues exceed
    ``1e-10`` times the largest one.
    """
    m2 = np.asarray(m2, dtype=np.float64)
    d = m2.shape[0]
    if m2.shape != (d, d) or np.isnan(m2).any():
        raise InputError("whiten expects a completed square second moment")
    if not 1 <= k <= d:
        raise InputError(f"k must lie in [1, d={d}], got {k}")
    if np.max(np.abs(m2 - m2.T)) > SYMMETRY_TOL:
        raise InputError("second moment is not symmetric")
    vals, vecs = top_eigen(m2, d)
    tol = EIG_RTOL * max(vals[0], 0.0)
    rank = int(np.sum(vals > tol)) if vals[0] > 0 else 0
    if rank < k:
        raise RankDeficiencyError(k, rank)
    vals, vecs = vals[:k], vecs[:, :k]
    root = np.sqrt(vals)
    return WhiteningMap(vecs / root, (vecs * root).T, vals)


def raw_whitened_moment(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``(1/N) sum_n (W^T x_n)^{(x)3}`` accumulated in row blocks."""
    n = x.shape[0]
    k = w.shape[1]
    acc = np.zeros((k, k * k))
    for start in range(0, n, _BLOCK_ROWS):
        y = x[start : start + _BLOCK_ROWS] @ w
        acc += y.T @ (y[:, :, None] * y[:, None, :]).reshape(len(y), k * k)
    return acc.reshape(k, k, k) / n


def symmetrize(t: np.ndarray) -> np.ndarray:
    return sum(t.transpose(p) for p in permutations(range(3))) / 6.0


def whitened_third_moment(
    data: BinaryDataset,
    w: WhiteningMap,
    correction: MomentSet,
    iters: int = DEFAULT_ITERS,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Whitened image of the completed third moment, computed from the rows.

    The raw whitened moment is corrected on the repeated-index entries: the
    raw binary values (``m2`` off-diagonal, ``m1`` on it) are swapped for the
    completed ones in ``correction.m3_fibers``. When no completed fibers are
    available (large d, no dense ``m3``) they are completed here, in whitened
    coordinates.
    """
    d = data.n_cols
    if w.w.shape[0] != d or correction.d != d:
        raise InputError(
            f"dimension mismatch: data d={d}, whitening d={w.w.shape[0]}, moments d={correction.d}"
        )
    x = data.as_float()
    t_distinct = raw_whitened_moment(x, w.w) - whitened_repeated(correction.raw_fibers(), w.w)
    fibers = correction.m3_fibers
    if fibers is None:
        f0 = np.nan_to_num(correction.m2, nan=0.0) * correction.m1[:, None]
        f0[np.diag_indices(d)] = correction.m1**2
        fibers, _, _ = complete_fibers(t_distinct, w.w, w.pseudo_inverse.T, f0, iters, tol)
    return symmetrize(t_distinct + whitened_repeated(fibers, w.w))


def dense_whitened_third_moment(m3: np.ndarray, w: WhiteningMap) -> np.ndarray:
    return np.einsum("abc,ap,bq,cr->pqr", m3, w.w, w.w, w.w, optimize=True)


def _apply(t, v):
    """Rows of ``v`` are vectors; returns ``t(I, v, v)`` per row."""
    return np.einsum("pqr,sq,sr->sp", t, v, v)


def _power(t, v, iters, tol):
    for _ in range(iters):
        nxt = _apply(t, v)
        norms = np.linalg.norm(nxt, axis=1, keepdims=True)
        nxt = np.where(norms > 0, nxt / np.where(norms > 0, norms, 1.0), v)
        done = np.max(np.linalg.norm(nxt - v, axis=1)) < tol
        v = nxt
        if done:
            break
    return v


def tensor_power_method(
    t: np.ndarray,
    restarts: int = 10,
    iters: int = 100,
    seed: int = 0,
    tol: float = 1e-10,
) -> list[EigenPair]:
    """Robust tensor power method with deflation.

    For each component, ``restarts`` random unit vectors are iterated
    ``v <- T(I, v, v) / |T(I, v, v)|``; the start with the largest eigenvalue
    ``T(v, v, v)`` wins (earliest start on ties), gets another ``iters``
    iterations, and is deflated away.
    """
    t = np.array(t, dtype=np.float64)
    k = t.shape[0]
    if t.shape != (k, k, k):
        raise InputError(f"expected a cubic tensor, got shape {t.shape}")
    if max(np.max(np.abs(t - t.transpose(p))) for p in permutations(range(3))) > SYMMETRY_TOL:
        raise InputError("tensor is not symmetric")
    rng = np.random.default_rng(seed)
    pairs = []
    for comp in range(k):
        starts = rng.standard_normal((restarts, k))
        starts /= np.linalg.norm(starts, axis=1, keepdims=True)
        v = _power(t, starts, iters, tol)
        lams = np.einsum("sp,sp->s", _apply(t, v), v)
        best = int(np.argmax(lams))
        if not lams[best] > 1e-12:
            raise DeflationError(comp)
        v = _power(t, v[best : best + 1], iters, tol)[0]
        lam = float(np.einsum("pqr,p,q,r->", t, v, v, v))
        if not lam > 1e-12:
            raise DeflationError(comp)
        pairs.append(EigenPair(lam, v))
        t = t - lam * np.einsum("p,q,r->pqr", v, v, v)
    return pairs


def recover_parameters(pairs, w: WhiteningMap, feature_names) -> NaiveBayesModel:
    """Undo the whitening and clip into a valid model.

    ``w_j = 1 / lambda_j^2`` and ``P[:, j] = lambda_j * B^T v_j``; probabilities
    are clipped to ``[1e-6, 1 - 1e-6]``, weights floored at ``1e-6`` and
    renormalized.
    """
    lams = np.array([p.eigenvalue for p in pairs], dtype=np.float64)
    vecs = np.array([p.eigenvector for p in pairs], dtype=np.float64).T
    weights = 1.0 / lams**2
    probs = (w.pseudo_inverse.T @ vecs) * lams
    return sanitize(weights, probs, feature_names)


def sanitize(weights, probs, feature_names) -> NaiveBayesModel:
    probs = np.clip(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    weights = np.maximum(weights, WEIGHT_FLOOR)
    weights = weights / weights.sum()
    return NaiveBayesModel(weights, probs, feature_names)
