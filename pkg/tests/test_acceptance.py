"""Acceptance gate: one test per numbered criterion, each reporting PASS or FAIL.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines appear in the
"acceptance criteria" section at the end of the session.
"""

import time

import numpy as np
import pytest

from conftest import (
    ACCEPTANCE_LINES,
    analytic_m2,
    analytic_m3,
    brute_force_moments,
    match_components,
    names,
    random_model,
    separated_model,
)
from tensorgen import (
    BinaryDataset,
    ForestSettings,
    NaiveBayesModel,
    classifier_two_sample_test,
    complete_low_rank,
    em_refine,
    estimate_moments,
    fit_baseline,
    fit_tensorgen,
    mmd_unbiased,
    recover_parameters,
    sample,
    sample_baseline,
    split_holdout,
    tensor_power_method,
    whiten,
)
from tensorgen.cli import main
from tensorgen.evaluate import median_bandwidth
from tensorgen.moments import MomentSet, repeated_index_mask
from tensorgen.spectral import dense_whitened_third_moment


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def best_errors(truth, est):
    perm = match_components(truth.cond_probs, est.cond_probs)
    return (
        float(np.max(np.abs(est.cond_probs[:, perm] - truth.cond_probs))),
        float(np.max(np.abs(est.weights[perm] - truth.weights))),
    )


# -- 1 ----------------------------------------------------------------------

def test_criterion_1_exact_moment_recovery():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        k = int(rng.integers(1, 6))
        d = int(rng.integers(max(3 * k, 6), 21))
        truth = random_model(rng, k, d)
        m2 = analytic_m2(truth)
        m2[np.diag_indices(d)] = np.nan
        m3 = analytic_m3(truth)
        m3[repeated_index_mask(d)] = np.nan
        done = complete_low_rank(MomentSet(truth.marginals(), m2, m3, 1), k)
        wmap = whiten(done.m2, k)
        pairs = tensor_power_method(dense_whitened_third_moment(done.m3, wmap), seed=seed)
        est = recover_parameters(pairs, wmap, truth.feature_names)
        worst = max(worst, *best_errors(truth, est))
    elapsed = time.perf_counter() - start
    report(1, worst < 1e-4 and elapsed < 10,
           f"max abs error {worst:.2e} (< 1e-4), {elapsed:.1f} s (< 10 s)")


# -- 2 ----------------------------------------------------------------------

def test_criterion_2_sampled_recovery():
    truth = separated_model(k=3, d=20, hi=0.8, lo=0.1, weights=[0.2, 0.3, 0.5])
    data = sample(truth, 100_000, seed=2)
    start = time.perf_counter()
    est = fit_tensorgen(data, 3, seed=0).model
    elapsed = time.perf_counter() - start
    p_err, w_err = best_errors(truth, est)
    report(2, p_err < 0.05 and w_err < 0.03 and elapsed < 60,
           f"P error {p_err:.4f} (< 0.05), weight error {w_err:.4f} (< 0.03), {elapsed:.1f} s (< 60 s)")


# -- 3 ----------------------------------------------------------------------

def test_criterion_3_em_monotone():
    worst = np.inf
    for seed in range(100):
        rng = np.random.default_rng(3000 + seed)
        d = int(rng.integers(2, 15))
        truth = random_model(rng, int(rng.integers(1, 5)), d)
        data = sample(truth, int(rng.integers(20, 500)), seed=seed)
        init = random_model(rng, int(rng.integers(1, 5)), d, min_weight=0.01, low=0.05, high=0.95)
        _, rep = em_refine(init, data, max_iters=100, rel_tol=0.0)
        steps = np.diff(rep.loglik_trace)
        if steps.size:
            worst = min(worst, float(steps.min()))
    report(3, worst >= -1e-8, f"smallest log-likelihood step {worst:.3e} over 100 pairs (>= -1e-8)")


# -- 4 ----------------------------------------------------------------------

def test_criterion_4_null_calibration():
    truth = random_model(np.random.default_rng(4), 5, 20)
    acc = []
    for seed in range(20):
        real = sample(truth, 1000, seed=2 * seed)
        synth = sample(truth, 1000, seed=2 * seed + 1)
        acc.append(classifier_two_sample_test(real, synth, ForestSettings(seed=seed), seed=seed).accuracy)
    mean = float(np.mean(acc))
    report(4, 0.45 <= mean <= 0.55, f"mean accuracy {mean:.4f} over 20 seeds (in [0.45, 0.55])")


# -- 5 and 6 share one experiment -----------------------------------------------

def proxy_model(rng, d=100, k=10, signature=12):
    """Sparse background with a block of co-firing 'signature' features per component."""
    weights = rng.dirichlet(np.full(k, 2.0))
    probs = rng.uniform(0.01, 0.08, (d, k))
    for j in range(k):
        rows = rng.choice(d, signature, replace=False)
        probs[rows, j] = rng.uniform(0.5, 0.9, signature)
    return NaiveBayesModel(weights, probs, names(d, "code"))


def mmd_permutation_sd(a, b, bandwidth, n_perm=200, seed=0, block=1000):
    """Standard deviation of the unbiased MMD under random relabelling of the pooled rows.

    With K the pooled kernel matrix (zero diagonal) and s the 0/1 indicator of
    the first side, the within and cross sums are quadratic forms in s, so one
    blocked pass over K serves every permutation.
    """
    x = np.concatenate([a.as_float(), b.as_float()])
    n, m = a.n_rows, b.n_rows
    rng = np.random.default_rng(seed)
    labels = np.zeros((n + m, n_perm + 1))
    for p in range(n_perm):
        labels[rng.permutation(n + m)[:n], p] = 1.0
    labels[:, -1] = 1.0  # row sums ride along as the last column
    ones = x.sum(axis=1)
    kern = np.exp(-np.arange(x.shape[1] + 1) / (2 * bandwidth**2))
    k_lab = np.empty_like(labels)
    for lo in range(0, n + m, block):
        hi = min(lo + block, n + m)
        dist = np.rint(ones[lo:hi, None] + ones[None, :] - 2 * (x[lo:hi] @ x.T)).astype(np.int64)
        kb = kern[dist]
        kb[np.arange(hi - lo), np.arange(lo, hi)] = 0.0
        k_lab[lo:hi] = kb @ labels
    s, ks, row_sums = labels[:, :-1], k_lab[:, :-1], k_lab[:, -1]
    s_aa = np.einsum("ip,ip->p", s, ks)
    s_ab = s.T @ row_sums - s_aa
    s_bb = row_sums.sum() - 2 * s_ab - s_aa
    stat = s_aa / (n * (n - 1)) + s_bb / (m * (m - 1)) - 2 * s_ab / (n * m)
    return float(stat.std(ddof=1))


@pytest.fixture(scope="module")
def proxy_runs():
    truth = proxy_model(np.random.default_rng(20))
    data = sample(truth, 20_000, seed=20)
    start = time.perf_counter()
    runs = []
    for seed in range(10):
        train, holdout = split_holdout(data, 0.2, seed)
        m = holdout.n_rows
        synth = {"baseline": sample_baseline(fit_baseline(train), m, seed)}
        for k in (5, 10):
            synth[k] = sample(fit_tensorgen(train, k, seed=seed).model, m, seed)
        evals = {
            name: classifier_two_sample_test(holdout, s, ForestSettings(seed=seed), seed=seed)
            for name, s in synth.items()
        }
        runs.append({"holdout": holdout, "synth": synth, "evals": evals})
    return runs, time.perf_counter() - start


def test_criterion_5_accuracy_ordering(proxy_runs):
    runs, elapsed = proxy_runs
    acc = {name: np.mean([r["evals"][name].accuracy for r in runs]) for name in ("baseline", 5, 10)}
    gap_a = acc["baseline"] - acc[5]
    gap_b = acc[5] - acc[10]
    ok = gap_a >= 0.03 and gap_b >= 0.03 and elapsed < 600
    report(5, ok,
           f"accuracy baseline {acc['baseline']:.3f} > k=5 {acc[5]:.3f} > k=10 {acc[10]:.3f}, "
           f"gaps {gap_a:.3f} and {gap_b:.3f} (>= 0.03), {elapsed:.0f} s (< 600 s)")


def test_criterion_6_mmd_ordering(proxy_runs):
    runs, _ = proxy_runs
    mmd = {name: np.mean([r["evals"][name].mmd for r in runs]) for name in ("baseline", 5, 10)}
    sds = []
    for seed, r in enumerate(runs):
        bw = median_bandwidth(r["holdout"], r["synth"][10])
        sds.append(mmd_permutation_sd(r["holdout"], r["synth"][10], bw, seed=seed))
    null_sd = float(np.mean(sds))
    ordered = mmd["baseline"] > mmd[5] and mmd["baseline"] > mmd[10]
    near_zero = abs(mmd[10]) <= 3 * null_sd
    report(6, ordered and near_zero,
           f"MMD baseline {mmd['baseline']:.2e} > k=5 {mmd[5]:.2e}, k=10 {mmd[10]:.2e}; "
           f"|MMD k=10| {abs(mmd[10]):.2e} <= 3 x null sd {null_sd:.2e}")


# -- 7 ----------------------------------------------------------------------

def test_criterion_7_mmd_closed_form():
    zeros = BinaryDataset(np.zeros((6, 4)), names(4))
    ones = BinaryDataset(np.ones((9, 4)), names(4))
    value = mmd_unbiased(zeros, ones, bandwidth=1.0)
    expect = float(2 - 2 * np.exp(-2))
    report(7, abs(value - expect) < 1e-12, f"MMD {value!r} vs 2 - 2 exp(-2) = {expect!r}")


# -- 8 ----------------------------------------------------------------------

def test_criterion_8_cli_determinism(tmp_path):
    from tensorgen import write_csv

    write_csv(sample(separated_model(k=4, d=16), 4000, seed=8), tmp_path / "data.csv")
    outputs = {}
    for run, threads in (("a", 1), ("b", 1), ("c", 4)):
        base = tmp_path / run
        codes = [
            main(["fit", "--input", str(tmp_path / "data.csv"), "--k", "4", "--seed", "3",
                  "--threads", str(threads), "--out", str(base / "fit")]),
            main(["sample", "--model", str(base / "fit" / "model.nbm"), "--m", "800", "--seed", "3",
                  "--threads", str(threads), "--out", str(base / "synth.csv")]),
            main(["evaluate", "--real", str(base / "fit" / "holdout.csv"), "--synth", str(base / "synth.csv"),
                  "--seed", "3", "--threads", str(threads), "--out", str(base / "report.csv")]),
        ]
        assert codes == [0, 0, 0]
        outputs[run] = {
            p.relative_to(base).as_posix(): p.read_bytes() for p in sorted(base.rglob("*")) if p.is_file()
        }
    same = outputs["a"] == outputs["b"] == outputs["c"]
    report(8, same, f"{len(outputs['a'])} output files byte-identical across 2 runs and threads 1 vs 4")


# -- 9 ----------------------------------------------------------------------

def test_criterion_9_moment_oracle():
    mismatches = 0
    for seed in range(50):
        rng = np.random.default_rng(9000 + seed)
        n, d = int(rng.integers(3, 101)), int(rng.integers(1, 9))
        x = (rng.random((n, d)) < rng.uniform(0.05, 0.95)).astype(np.uint8)
        m1, m2, m3 = brute_force_moments(x)
        mom = estimate_moments(BinaryDataset(x, names(d)))
        v2, v3 = mom.m2_valid(), mom.m3_valid()
        fibers = m3[np.arange(d), np.arange(d), :]
        ok = (
            np.array_equal(mom.m1, m1)
            and np.array_equal(mom.m2[v2], m2[v2])
            and np.array_equal(mom.m3[v3], m3[v3])
            and np.array_equal(v3, ~repeated_index_mask(d))
            and np.array_equal(mom.raw_fibers(), fibers)
        )
        mismatches += not ok
    report(9, mismatches == 0, f"{50 - mismatches}/50 datasets match the triple-loop oracle exactly")


# -- 10 ---------------------------------------------------------------------

def test_criterion_10_clinical_reproduction():
    line = "criterion 10: SKIP  needs credentialed clinical data; not required"
    ACCEPTANCE_LINES.append(line)
    print(line)
    pytest.skip("credentialed clinical data not available")
