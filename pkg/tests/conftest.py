import itertools

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from tensorgen import NaiveBayesModel


def names(d, prefix="f"):
    return [f"{prefix}{i}" for i in range(d)]


def random_model(rng, k, d, min_weight=0.05, low=0.0, high=1.0):
    weights = rng.dirichlet(np.ones(k))
    while weights.min() < min_weight:
        weights = rng.dirichlet(np.ones(k))
    probs = rng.uniform(low, high, (d, k))
    return NaiveBayesModel(weights, probs, names(d))


def separated_model(k=3, d=20, hi=0.8, lo=0.1, weights=None):
    """Each component lights up its own block of features."""
    probs = np.full((d, k), lo)
    block = d // k
    for j in range(k):
        probs[j * block : (j + 1) * block, j] = hi
    if weights is None:
        weights = np.full(k, 1.0 / k)
    return NaiveBayesModel(weights, probs, names(d))


def analytic_m2(model):
    p, w = model.cond_probs, model.weights
    return (p * w) @ p.T


def analytic_m3(model):
    p, w = model.cond_probs, model.weights
    return np.einsum("j,aj,bj,cj->abc", w, p, p, p)


def brute_force_moments(x):
    """Triple-loop averages, the slow obvious way."""
    n, d = x.shape
    m1 = np.zeros(d)
    m2 = np.zeros((d, d))
    m3 = np.zeros((d, d, d))
    for a in range(d):
        m1[a] = sum(int(x[r, a]) for r in range(n)) / n
        for b in range(d):
            m2[a, b] = sum(int(x[r, a]) * int(x[r, b]) for r in range(n)) / n
            for c in range(d):
                m3[a, b, c] = sum(int(x[r, a]) * int(x[r, b]) * int(x[r, c]) for r in range(n)) / n
    return m1, m2, m3


def brute_force_loglik(model, x):
    total = 0.0
    for row in np.asarray(x):
        prob = 0.0
        for j in range(model.k):
            term = model.weights[j]
            for i, v in enumerate(row):
                pij = model.cond_probs[i, j]
                term *= pij if v else 1.0 - pij
            prob += term
        total += np.log(prob)
    return total


def match_components(true_probs, est_probs):
    """Permutation ``perm`` so that est[:, perm[j]] best matches true[:, j] (max correlation)."""
    k = true_probs.shape[1]
    score = np.zeros((k, k))
    for i, j in itertools.product(range(k), range(k)):
        a, b = true_probs[:, i], est_probs[:, j]
        if a.std() == 0 or b.std() == 0:
            score[i, j] = -np.abs(a - b).max()
        else:
            score[i, j] = np.corrcoef(a, b)[0, 1]
    rows, cols = linear_sum_assignment(-score)
    return cols[np.argsort(rows)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
