"""
Rate function and exact occupancy probabilities
===============================================

On a two-state chain the probability that the chain spends at least 70% of
its time in state 0 decays exponentially; its slope approaches the minimum
of the rate function over that event.
"""

import numpy as np

from mhldp import GridChain, HalfSpaceEvent, ldp_slope_experiment, rate_function, stationary_distribution

chain = GridChain(np.array([[0.9, 0.1], [0.2, 0.8]]))
pi = stationary_distribution(chain)
print("stationary:", pi)

# I vanishes at pi and equals -log K_ii at the point masses.
for m0 in (pi[0], 0.5, 0.7, 0.9, 1.0):
    res = rate_function(chain, [m0, 1 - m0])
    print(f"I(({m0:.3f}, {1 - m0:.3f})) = {res.value:.6f}  (dual {res.dual_value:.6f})")

rep = ldp_slope_experiment(chain, HalfSpaceEvent.at_least(0, 0.7, 2), [10, 20, 40, 60], mesh_steps=200)
for n, s in zip(rep.n_values, rep.s_n):
    print(f"n={n:3d}  -log P / n = {s:.5f}")
print(f"inf over the event: {rep.inf_rate:.6f} at mu = {rep.argmin_mu}")
