"""
Geometric decay on a discretised MALA chain
===========================================

Discretise the kernel on cell centres, follow the total-variation distance
to stationarity and compare the fitted rate with the spectrum.
"""

import numpy as np

from mhldp import GridSpec, IndependentProposal, MalaProposal, MhKernel, TargetSpec, discretize
from mhldp.ergodicity import DriftCertificate, drift_implies_property_a, second_eigenvalue_modulus, tv_decay

k = MhKernel(TargetSpec(1.0, 1.5, 1), MalaProposal(0.5, 1))
chain = discretize(k, GridSpec.uniform(-8.0, 8.0, 40))
rep = tv_decay(chain, 20, 400)
print("tv at i = 0, 5, 10, 20:", np.array2string(rep.tv[[0, 5, 10, 20]], precision=3))
print(f"fitted r = {rep.fitted_r:.4f}, 1/|lambda_2| = {1 / second_eigenvalue_modulus(chain.trans):.4f}")

# A drift certificate V = e^{|x|} for the independence sampler with f = pi
# gives the lower bound F_{log V} >= -log(lambda + b).
k = MhKernel(TargetSpec(0.5, 2.0, 1), IndependentProposal(2.0, 0.5, 1))
cert = DriftCertificate.exponential(1.0, 0.5, 2.8, 2.0)
res = drift_implies_property_a(cert, k, [[x] for x in (0.0, 1.0, 2.0, 4.0, 8.0)])
print(f"bound {res.bound:.4f}, smallest F {res.min_value:.4f}: {res.status}")
