"""
Shrinkage of one-feature estimators
===================================

With a single feature every estimator has a closed form.  Lasso and ARD
subtract a constant from the least-squares slope; the masked estimator
reweights samples instead, so a noiseless slope survives untouched.
"""
import numpy as np

from bayesmask.analysis import fab_1d_estimator
from bayesmask.baselines import ard_1d, lasso_1d

rng = np.random.default_rng(0)
x = rng.uniform(0.5, 1.5, size=50)
y = 0.8 * x + rng.normal(0.0, 0.3, size=50)
lam = 1 / 0.09

ls = x @ y / (x @ x)
print(f"least squares  {ls:.4f}")
print(f"lasso (a=2)    {lasso_1d(x, y, lam, 2.0):.4f}")
print(f"ARD            {ard_1d(x, y, lam)[0]:.4f}")

# any mask that is constant across samples leaves the slope unchanged
for c in (1.0, 0.5, 0.1):
    print(f"masked, mu={c}  {fab_1d_estimator(x, y, np.full(50, c)):.4f}")
