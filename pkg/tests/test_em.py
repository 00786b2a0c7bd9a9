import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import names, random_model
from tensorgen import BinaryDataset, InputError, NaiveBayesModel, em_refine, log_likelihood, sample
from tensorgen.em import SMOOTHING


def random_pair(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 5))
    d = int(rng.integers(2, 12))
    truth = random_model(rng, int(rng.integers(1, 5)), d)
    data = sample(truth, int(rng.integers(20, 300)), seed=seed)
    init = random_model(rng, k, d, min_weight=0.01, low=0.05, high=0.95)
    return init, data


def test_single_component_closed_form():
    rng = np.random.default_rng(0)
    data = BinaryDataset(rng.integers(0, 2, (40, 5)), names(5))
    init = NaiveBayesModel([1.0], rng.uniform(0.1, 0.9, (5, 1)), names(5))
    model, report = em_refine(init, data, max_iters=1)
    x = data.as_float()
    expect = (x.sum(axis=0) + SMOOTHING) / (40 + 2 * SMOOTHING)
    assert np.allclose(model.cond_probs[:, 0], expect, atol=1e-14)
    assert model.weights.tolist() == [1.0]
    assert report.iterations_run == 1


def test_zero_iterations_returns_input():
    init, data = random_pair(1)
    model, report = em_refine(init, data, max_iters=0)
    assert model is init
    assert report.loglik_trace == [] and report.iterations_run == 0


def test_dimension_mismatch():
    init, _ = random_pair(2)
    with pytest.raises(InputError):
        em_refine(init, BinaryDataset(np.ones((3, init.d + 1)), names(init.d + 1)))


def _grid_search_two_blocks(data, steps=41):
    """Best log-likelihood over the family w=(a, 1-a), P columns (p, p), (q, q)."""
    x = data.as_float()
    ones = x.sum(axis=1)
    best = -np.inf
    grid = np.linspace(0.0005, 0.9995, steps)
    for a in np.linspace(0.05, 0.95, 19):
        for p in grid:
            for q in grid:
                lp = np.log(a) + ones * np.log(p) + (2 - ones) * np.log1p(-p)
                lq = np.log1p(-a) + ones * np.log(q) + (2 - ones) * np.log1p(-q)
                best = max(best, float(np.logaddexp(lp, lq).sum()))
    return best


def test_two_block_dataset_converges_to_separation():
    data = BinaryDataset([[1, 1], [0, 0]] * 20, names(2))
    init = NaiveBayesModel([0.45, 0.55], [[0.8, 0.3], [0.7, 0.2]], names(2))
    model, report = em_refine(init, data, max_iters=500, rel_tol=1e-12)
    hi = int(np.argmax(model.cond_probs[0]))
    assert model.weights == pytest.approx([0.5, 0.5], abs=1e-6)
    assert model.cond_probs[:, hi] == pytest.approx([1.0, 1.0], abs=1e-3)
    assert model.cond_probs[:, 1 - hi] == pytest.approx([0.0, 0.0], abs=1e-3)
    assert log_likelihood(model, data) >= _grid_search_two_blocks(data) - 1e-6


@pytest.mark.parametrize("seed", range(100))
def test_monotone_trace(seed):
    init, data = random_pair(seed)
    _, report = em_refine(init, data, max_iters=60, rel_tol=0.0)
    assert np.all(np.diff(report.loglik_trace) >= -1e-8)


def test_fixed_point():
    init, data = random_pair(7)
    model, report = em_refine(init, data, max_iters=1000, rel_tol=1e-6)
    assert report.converged
    ll = log_likelihood(model, data)
    again, _ = em_refine(model, data, max_iters=1)
    assert log_likelihood(again, data) - ll < 1e-6 * abs(ll)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_label_permutation_equivariance(seed):
    init, data = random_pair(seed)
    perm = np.random.default_rng(seed).permutation(init.k)
    a, _ = em_refine(init, data, max_iters=20)
    b, _ = em_refine(init.permuted(perm), data, max_iters=20)
    assert np.allclose(b.weights, a.weights[perm], atol=1e-10)
    assert np.allclose(b.cond_probs, a.cond_probs[:, perm], atol=1e-10)


def test_empty_component_is_kept_and_reported():
    data = BinaryDataset([[1, 1]] * 10, names(2))
    init = NaiveBayesModel([0.999999, 1e-6], [[0.99, 1e-9], [0.99, 1e-9]], names(2))
    model, report = em_refine(init, data, max_iters=3)
    assert 1 in report.empty_components
    assert model.cond_probs[0, 1] == pytest.approx(1e-9)
    assert model.weights[1] > 0
