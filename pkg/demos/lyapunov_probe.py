"""
Probing Lyapunov candidates
===========================

A candidate U works when F_U(x) = -log(∫ e^{U(y)-U(x)} a(x, y) dy + r(x))
grows without bound.  We evaluate it on a few rays and read the verdicts.
"""

import numpy as np

from mhldp import (
    GaussianIncrement,
    IndependentProposal,
    LyapunovCandidate,
    MalaProposal,
    MhKernel,
    RandomWalkProposal,
    TargetSpec,
    evaluate_F_U,
    probe_limits,
)
from mhldp.lyapunov import paper_candidate

radii = [2.0, 5.0, 10.0, 20.0]


def show(label, k, U):
    F = [evaluate_F_U(k, U, [x]) for x in radii]
    rep = probe_limits(k, U, radii=radii)
    print(f"{label:<34} F_U = {np.array2string(np.array(F), precision=3)}  "
          f"acceptance -> 1: {rep.verdict_intAto1}, exp-integral -> 0: {rep.verdict_intexpUato0}")


# IMH with a lighter-tailed target than proposal: U = gamma/2 |x|^beta.
k = MhKernel(TargetSpec(2.0, 2.0, 1), IndependentProposal(2.0, 1.0, 1))
show("IMH, U = |x|^2 / 2", k, paper_candidate(k))

# MALA with a Gaussian target and eps * gamma < 2: U = |x|^2 / (4 eps).
k = MhKernel(TargetSpec(1.0, 2.0, 1), MalaProposal(0.5, 1))
show("MALA beta=2, U = |x|^2 / 2", k, paper_candidate(k))

# For 1 < beta < 2 the quadratic candidate outgrows the target and the
# exponential integral explodes; the target exponent itself does better.
k = MhKernel(TargetSpec(1.0, 1.5, 1), MalaProposal(0.5, 1))
show("MALA beta=1.5, U = |x|^2 / 2", k, paper_candidate(k))
show("MALA beta=1.5, U = |x|^1.5 / 2", k, LyapunovCandidate.radial_power(0.5, 1.5))

# Random-walk Metropolis: the acceptance mass never tends to one, whatever U.
k = MhKernel(TargetSpec(0.5, 2.0, 1), RandomWalkProposal(GaussianIncrement(1.0), 1))
show("RWM, U = |x|", k, LyapunovCandidate.radial_power(1.0, 1.0))
