"""
Recovering a known mixture
==========================

Draw rows from a naive Bayes model whose parameters we know, learn a model
back from the rows alone and compare the two.

"""

import numpy as np

import tensorgen as tg

# %%
# A three-state model over twenty features. Each state switches on its own
# block of features, which keeps the columns of the probability matrix well
# apart.

d, k = 20, 3
probs = np.full((d, k), 0.1)
for j in range(k):
    probs[j * 6 : (j + 1) * 6, j] = 0.8
truth = tg.NaiveBayesModel([0.2, 0.3, 0.5], probs, [f"x{i}" for i in range(d)])

data = tg.sample(truth, 100_000, seed=0)
print(data.n_rows, "rows,", data.n_cols, "features")

# %%
# The moment estimate alone is already close. EM then polishes it.

result = tg.fit_tensorgen(data, k, seed=0)
spectral, refined = result.spectral_model, result.model
print("EM iterations:", result.em_report.iterations_run)

# %%
# Latent states come back in arbitrary order, so line them up by their
# weights before comparing.

order_true = np.argsort(truth.weights)
for name, est in (("spectral", spectral), ("after EM", refined)):
    order = np.argsort(est.weights)
    p_err = np.abs(est.cond_probs[:, order] - truth.cond_probs[:, order_true]).max()
    w_err = np.abs(est.weights[order] - truth.weights[order_true]).max()
    print(f"{name:>9}: max |P error| {p_err:.4f}, max |weight error| {w_err:.4f}")

# %%
# The learned model explains held-out rows about as well as the truth does.

fresh = tg.sample(truth, 10_000, seed=1)
print("log-likelihood per row, truth  ", tg.log_likelihood(truth, fresh) / fresh.n_rows)
print("log-likelihood per row, learned", tg.log_likelihood(refined, fresh) / fresh.n_rows)
