"""End-to-end learner: moments -> completion -> spectral recovery -> EM."""

from __future__ import annotations

from dataclasses import dataclass

from . import em, moments, spectral
from .dataset import BinaryDataset
from .errors import TensorGenError
from .model import NaiveBayesModel


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 10
    power_iters: int = 100
    completion_iters: int = moments.DEFAULT_ITERS
    em_max_iters: int = em.DEFAULT_MAX_ITERS
    em_rel_tol: float = em.DEFAULT_REL_TOL


@dataclass
class FitResult:
    model: NaiveBayesModel
    spectral_model: NaiveBayesModel
    em_report: em.EmReport


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if isinstance(exc, TensorGenError) and not hasattr(exc, "stage"):
            exc.stage = self.name
        return False


def spectral_fit(
    data: BinaryDataset, k: int, seed: int = 0, options: FitOptions = FitOptions()
) -> NaiveBayesModel:
    """Method-of-moments estimate, before any EM."""
    with _stage("moments"):
        raw = moments.estimate_moments(data)
    with _stage("completion"):
        done = moments.complete_low_rank(raw, k, options.completion_iters)
    with _stage("whitening"):
        wmap = spectral.whiten(done.m2, k)
    with _stage("third moment"):
        t = spectral.whitened_third_moment(data, wmap, done, options.completion_iters)
    with _stage("tensor power method"):
        pairs = spectral.tensor_power_method(t, options.restarts, options.power_iters, seed)
    return spectral.recover_parameters(pairs, wmap, data.feature_names)


def fit_tensorgen(
    data: BinaryDataset, k: int, seed: int = 0, options: FitOptions = FitOptions()
) -> FitResult:
    """Learn a ``k``-state naive Bayes model from ``data``.

    ``seed`` only affects the random starts of the tensor power method.
    """
    init = spectral_fit(data, k, seed, options)
    with _stage("em"):
        model, report = em.em_refine(init, data, options.em_max_iters, options.em_rel_tol)
    return FitResult(model, init, report)
