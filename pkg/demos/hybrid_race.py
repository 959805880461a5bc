"""
Hybrid FAB-EM/EG against plain FAB-EM
=====================================

On a uniform random design with half the weights zero, count correctly
and wrongly pruned features as the iterations go by.
"""
from bayesmask import experiments as ex

race = ex.run_convergence_race(seed=0, k=20, switch=200)
for name, s in race.items():
    print(
        f"{name:>6}: {s.final_correct} correct / {s.final_wrong} wrong prunes after "
        f"{s.iterations[-1]} iterations ({s.elapsed[-1]:.1f} s, {s.status})"
    )
    for target in (3, 6, 9):
        print(f"        {target} correct prunes reached at iteration {s.first_reaching(target)}")
