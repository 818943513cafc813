"""
Bayesian optimization against random search
===========================================

A noise-free quadratic with its peak at x = 0.3, searched with the same
budget and seeds by both optimizers.
"""

import numpy as np

from churnvec.hpo import SearchSpace, bayes_optimize, random_search, uniform

space = SearchSpace((uniform("x", 0.0, 1.0),))


def objective(params):
    return -(params["x"] - 0.3) ** 2


bo, rs = [], []
for seed in range(20):
    bo.append(bayes_optimize(space, objective, budget=30, seed=seed))
    rs.append(random_search(space, objective, budget=30, seed=seed))

print("median best objective, BO:    ", np.median([r.best_objective for r in bo]))
print("median best objective, random:", np.median([r.best_objective for r in rs]))
print("BO runs within 0.05 of 0.3:", sum(abs(r.best_params["x"] - 0.3) <= 0.05 for r in bo), "/ 20")

# Best-so-far curves: the first 8 trials are shared random draws.
curve_bo = np.median([r.best_so_far() for r in bo], axis=0)
curve_rs = np.median([r.best_so_far() for r in rs], axis=0)
for k in (1, 8, 12, 20, 30):
    print(f"after {k:2d} trials: BO {curve_bo[k - 1]:.2e}  random {curve_rs[k - 1]:.2e}")
