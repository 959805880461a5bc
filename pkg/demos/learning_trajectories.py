"""
How fast does the irrelevant feature leave the model?
=====================================================

Starting from one point in the (beta_1, pi_1) plane, we follow FAB-EM and
two gradient variants until the irrelevant toy feature is pruned.
"""
from bayesmask import experiments as ex

records = ex.run_trajectories(seed=0, n_samples=100, initial_points=[(0.3, 0.32)], budget=20_000)
for r in records:
    where = "never" if r.pruned_at is None else f"at iteration {r.pruned_at}"
    print(f"{r.algorithm:>14}: pruned {where}; last (beta_1, pi_1) = ({r.beta1[-1]:.4f}, {r.pi1[-1]:.4f})")

# each record also holds the full path, e.g. for plotting
path = records[1]
print(list(zip(path.beta1[:5].round(4), path.pi1[:5].round(4))))
