"""Empirical low-order moments of binary data and low-rank completion of
their repeated-index entries.

For binary features ``E[X_a X_a] = E[X_a]`` and ``E[X_a X_a X_b] = E[X_a X_b]``,
so the raw diagonal of the second moment and the repeated-index entries of the
third moment do not follow the mixture's low-rank form. They are marked
invalid (NaN) by :func:`estimate_moments` and reconstructed by
:func:`complete_low_rank`.

Repeated-index entries of the third moment are described by a d x d "fiber"
matrix ``F`` with ``F[a, b] = m3[a, a, b]`` (so ``F[a, a] = m3[a, a, a]``).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .dataset import BinaryDataset
from .errors import CompletionError, InputError

DENSE_LIMIT = 128
DEFAULT_ITERS = 50
DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MomentSet:
    """First, second and (optionally dense) third empirical moments.

    Invalid entries are NaN. ``m3`` is ``None`` when the feature count exceeds
    the dense limit. ``m3_fibers`` holds completed repeated-index values once
    they are known.
    """

    m1: np.ndarray
    m2: np.ndarray
    m3: Optional[np.ndarray]
    n_samples: int
    m3_fibers: Optional[np.ndarray] = None

    @property
    def d(self) -> int:
        return self.m1.size

    def m2_valid(self) -> np.ndarray:
        return ~np.isnan(self.m2)

    def m3_valid(self) -> Optional[np.ndarray]:
        return None if self.m3 is None else ~np.isnan(self.m3)

    def raw_fibers(self) -> np.ndarray:
        """Fiber matrix the raw binary data would give: ``m2`` off the diagonal, ``m1`` on it."""
        f = np.where(np.eye(self.d, dtype=bool), 0.0, self.m2)
        f[np.diag_indices(self.d)] = self.m1
        return f

    def dump_csv(self, prefix) -> None:
        np.savetxt(f"{prefix}_m1.csv", self.m1[None, :], delimiter=",", fmt="%.17g")
        np.savetxt(f"{prefix}_m2.csv", self.m2, delimiter=",", fmt="%.17g")


def repeated_index_mask(d: int) -> np.ndarray:
    """Boolean (d, d, d) mask of entries with at least two equal indices."""
    i = np.arange(d)
    a, b, c = np.meshgrid(i, i, i, indexing="ij")
    return (a == b) | (b == c) | (a == c)


def estimate_moments(data: BinaryDataset, dense_limit: int = DENSE_LIMIT) -> MomentSet:
    """Exact empirical moments over the rows of ``data``.

    The third moment is accumulated slice by slice: slice ``a`` only involves
    the rows where feature ``a`` fires, which keeps the cost proportional to
    the number of ones.
    """
    n = data.n_rows
    if n < 3:
        raise InputError(f"need at least 3 rows to estimate third moments, got {n}")
    x = data.as_float()
    d = data.n_cols
    m1 = x.sum(axis=0) / n
    m2 = (x.T @ x) / n
    m2[np.diag_indices(d)] = np.nan
    m3 = None
    if d <= dense_limit:
        m3 = np.empty((d, d, d))
        for a in range(d):
            xa = x[x[:, a] == 1.0]
            m3[a] = (xa.T @ xa) / n
        m3[repeated_index_mask(d)] = np.nan
    return MomentSet(m1, m2, m3, n)


# -- fixed-point machinery ------------------------------------------------------

def anderson_fixed_point(
    g: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    iters: int,
    tol: float,
    depth: int = 5,
    lower: float = 0.0,
    upper: float = 1.0,
):
    """Iterate ``x <- g(x)`` with Anderson (type II) mixing.

    Returns ``(x, iterations, converged)``. Convergence means the max change
    of one plain step fell below ``tol``. Extrapolated iterates are clipped
    to ``[lower, upper]``.
    """
    x = np.asarray(x0, dtype=np.float64)
    xs, gs = [], []
    for it in range(1, iters + 1):
        gx = g(x)
        f = gx - x
        if not np.isfinite(gx).all():
            raise CompletionError("low-rank completion produced non-finite values")
        if np.max(np.abs(f), initial=0.0) < tol:
            return gx, it, True
        xs.append(x)
        gs.append(gx)
        del xs[: -(depth + 1)], gs[: -(depth + 1)]
        if len(xs) > 1:
            fs = np.array(gs) - np.array(xs)
            df = np.diff(fs, axis=0).T
            dg = np.diff(np.array(gs), axis=0).T
            gamma = np.linalg.lstsq(df, f, rcond=None)[0]
            x = np.clip(gx - dg @ gamma, lower, upper)
        else:
            x = gx
    return g(x), iters, False


def top_eigen(m: np.ndarray, k: int):
    """Largest ``k`` eigenvalues (descending) and eigenvectors of a symmetric matrix."""
    try:
        vals, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise CompletionError(f"eigendecomposition did not converge: {exc}") from exc
    order = np.argsort(vals)[::-1][:k]
    return vals[order], vecs[:, order]


def whitened_repeated(fibers: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Multilinear image ``R(W, W, W)`` of the tensor whose only non-zero
    entries are the repeated-index ones given by ``fibers``."""
    off = fibers - np.diag(np.diag(fibers))
    z = off @ w
    s = np.einsum("ap,aq,ar->pqr", w, w, z)
    t = s + s.transpose(0, 2, 1) + s.transpose(2, 0, 1)
    return t + np.einsum("a,ap,aq,ar->pqr", np.diag(fibers), w, w, w)


def fibers_of(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Repeated-index fibers of the d x d x d tensor ``t(V^T, V^T, V^T)``."""
    ta = np.einsum("pqr,ap,aq->ar", t, v, v)
    return ta @ v.T


def complete_fibers(
    t_distinct: np.ndarray,
    w: np.ndarray,
    v: np.ndarray,
    f0: np.ndarray,
    iters: int = DEFAULT_ITERS,
    tol: float = DEFAULT_TOL,
):
    """Alternating projection for the repeated-index entries of a third moment.

    ``t_distinct`` is the image under ``w`` of the third moment with its
    repeated-index entries zeroed. With ``v @ w.T`` the orthogonal projector
    onto the rank-k column space, each step lifts the current tensor into the
    rank-k multilinear subspace and reads back its repeated-index entries.
    Everything happens in k dimensions so no d^3 array is formed.
    """
    d = f0.shape[0]

    def step(flat):
        t = t_distinct + whitened_repeated(flat.reshape(d, d), w)
        return np.clip(fibers_of(t, v), 0.0, 1.0).ravel()

    flat, n_iter, converged = anderson_fixed_point(step, f0.ravel(), iters, tol)
    return flat.reshape(d, d), n_iter, converged


def _multilinear(t: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = np.tensordot(t, u, axes=([2], [0]))
    out = np.tensordot(out, u, axes=([1], [0]))
    out = np.tensordot(out, u, axes=([0], [0]))
    # axes come out reversed: (r, q, p)
    return out.transpose(2, 1, 0)


def _fill_from_fibers(m3: np.ndarray, fibers: np.ndarray) -> np.ndarray:
    out = m3.copy()
    d = fibers.shape[0]
    a, b = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    for idx in ((a, a, b), (a, b, a), (b, a, a)):
        cur = out[idx]
        out[idx] = np.where(np.isnan(cur), fibers, cur)
    return out


def complete_low_rank(
    moments: MomentSet, k: int, iters: int = DEFAULT_ITERS, tol: float = DEFAULT_TOL
) -> MomentSet:
    """Fill the invalid entries of ``m2`` (and of a dense ``m3``) so the
    result is consistent with a rank-``k`` mixture.

    Second moment: invalid entries start at ``m1[a] * m1[b]``; each step takes
    the best rank-k PSD approximation from the top-k eigenpairs, copies its
    values into the invalid entries only and clips to [0, 1]. Steps are
    Anderson-accelerated. The third moment is then completed the same way,
    projecting onto the span of the completed ``m2``'s top-k eigenvectors.
    Valid entries are never changed.
    """
    d = moments.d
    if not 1 <= k <= d:
        raise InputError(f"k must lie in [1, d={d}], got {k}")
    m2 = moments.m2.copy()
    invalid = np.isnan(m2)
    if invalid.any():
        m2[invalid] = np.outer(moments.m1, moments.m1)[invalid]

        def step(x):
            m2[invalid] = x
            vals, vecs = top_eigen(m2, k)
            approx = (vecs * vals) @ vecs.T
            return np.clip(approx[invalid], 0.0, 1.0)

        x, _, _ = anderson_fixed_point(step, m2[invalid], iters, tol)
        m2[invalid] = x
        m2 = 0.5 * (m2 + m2.T)
        m2[~invalid] = moments.m2[~invalid]

    m3 = moments.m3
    fibers = moments.m3_fibers
    if m3 is not None:
        if np.isnan(m3).any():
            _, u = top_eigen(m2, k)
            t_distinct = _multilinear(np.nan_to_num(m3, nan=0.0), u)
            f0 = m2 * moments.m1[:, None]
            fibers, _, _ = complete_fibers(t_distinct, u, u, f0, iters, tol)
            m3 = _fill_from_fibers(m3, fibers)
        elif fibers is None:
            i = np.arange(d)
            fibers = m3[i[:, None], i[:, None], i[None, :]]
    return replace(moments, m2=m2, m3=m3, m3_fibers=fibers)
