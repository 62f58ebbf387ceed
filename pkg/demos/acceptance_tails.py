"""
Acceptance mass far from the origin
===================================

How often does each sampler move when it starts deep in the tail?
"""

import numpy as np

from mhldp import (
    GaussianIncrement,
    IndependentProposal,
    MalaProposal,
    MhKernel,
    RandomWalkProposal,
    TargetSpec,
    acceptance_mass,
)

radii = [1.0, 10.0, 100.0, 1000.0]

# MALA on a Gaussian target exp(-|x|^2).  With gamma = 1 the product
# eps * gamma decides the fate of the chain: below 2 nearly every proposal
# is accepted, at 2 about half of them, above 2 almost none.
for eps in (1.0, 2.0, 4.0):
    k = MhKernel(TargetSpec(1.0, 2.0, 1), MalaProposal(eps, 1))
    vals = [acceptance_mass(k, [x]) for x in radii]
    print(f"MALA eps={eps}:", np.array2string(np.array(vals), precision=4))

# The independence sampler only keeps moving when the proposal has heavier
# tails than the target.
for eta, gamma in ((2.0, 1.0), (1.0, 1.0), (1.0, 2.0)):
    k = MhKernel(TargetSpec(eta, 2.0, 1), IndependentProposal(2.0, gamma, 1))
    vals = [acceptance_mass(k, [x]) for x in radii[:3]]
    print(f"IMH eta={eta} gamma={gamma}:", np.array2string(np.array(vals), precision=4))

# Random-walk Metropolis on a Gaussian target settles at 1/2: inward moves
# are always accepted, outward moves almost never.
k = MhKernel(TargetSpec(0.5, 2.0, 1), RandomWalkProposal(GaussianIncrement(1.0), 1))
print("RWM:", np.array2string(np.array([acceptance_mass(k, [x]) for x in radii]), precision=4))
