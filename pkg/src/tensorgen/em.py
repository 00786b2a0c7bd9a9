"""Expectation-Maximization refinement of a naive Bayes mixture."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .dataset import BinaryDataset
from .errors import InputError
from .model import NaiveBayesModel, component_log_probs

SMOOTHING = 1e-4
EMPTY_MASS = 1e-8
DEFAULT_MAX_ITERS = 100
DEFAULT_REL_TOL = 1e-6


@dataclass
class EmReport:
    iterations_run: int = 0
    loglik_trace: list = field(default_factory=list)
    converged: bool = False
    empty_components: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "iterations_run": self.iterations_run,
            "loglik_trace": [float(v) for v in self.loglik_trace],
            "converged": self.converged,
            "empty_components": sorted(set(self.empty_components)),
        }


def _e_step(weights, probs, x):
    with np.errstate(divide="ignore"):
        joint = component_log_probs(probs, x) + np.log(weights)
    row_ll = logsumexp(joint, axis=1)
    with np.errstate(invalid="ignore"):
        resp = np.exp(joint - row_ll[:, None])
    dead = ~np.isfinite(row_ll)
    if dead.any():
        resp[dead] = 1.0 / weights.size
    return resp, float(row_ll.sum())


def em_refine(
    model: NaiveBayesModel,
    data: BinaryDataset,
    max_iters: int = DEFAULT_MAX_ITERS,
    rel_tol: float = DEFAULT_REL_TOL,
    smoothing: float = SMOOTHING,
):
    """Bernoulli-mixture EM starting from ``model``.

    The M-step uses ``smoothing`` pseudo-counts on each side of every
    probability. ``loglik_trace[0]`` is the starting log-likelihood and each
    iteration appends the log-likelihood of the updated model. Stops once the
    relative improvement drops below ``rel_tol``, or when an update would
    lower the log-likelihood, in which case that update is discarded.
    """
    if data.n_cols != model.d:
        raise InputError(f"model has {model.d} features but data has {data.n_cols}")
    if max_iters < 0:
        raise InputError(f"max_iters must be >= 0, got {max_iters}")
    report = EmReport()
    if max_iters == 0:
        return model, report
    x = data.as_float()
    n = x.shape[0]
    weights = model.weights.copy()
    probs = model.cond_probs.copy()
    resp, ll = _e_step(weights, probs, x)
    report.loglik_trace.append(ll)
    for _ in range(max_iters):
        mass = resp.sum(axis=0)
        empty = mass < EMPTY_MASS
        new_probs = (x.T @ resp + smoothing) / (mass + 2.0 * smoothing)
        if empty.any():
            new_probs[:, empty] = probs[:, empty]
        new_weights = np.maximum(mass / n, np.where(empty, EMPTY_MASS, 0.0))
        new_weights /= new_weights.sum()
        new_resp, new_ll = _e_step(new_weights, new_probs, x)
        if new_ll < ll:
            # smoothing or the empty-component floor can cost likelihood near
            # the optimum; keep the better model and stop
            report.converged = True
            break
        if empty.any():
            report.empty_components.extend(int(j) for j in np.flatnonzero(empty))
        weights, probs, resp = new_weights, new_probs, new_resp
        report.iterations_run += 1
        report.loglik_trace.append(new_ll)
        improved = new_ll - ll
        ll = new_ll
        if improved < rel_tol * abs(ll):
            report.converged = True
            break
    return NaiveBayesModel(weights, probs, model.feature_names), report
