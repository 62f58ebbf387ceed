import numpy as np
import pytest

from mhldp import (
    GaussianIncrement,
    IndependentProposal,
    MalaProposal,
    MhKernel,
    RandomWalkProposal,
    TargetSpec,
    UniformBallIncrement,
)


def imh(eta=2.0, alpha=2.0, gamma=1.0, beta=2.0, dim=1):
    return MhKernel(TargetSpec(eta, alpha, dim), IndependentProposal(beta, gamma, dim))


def mala(gamma=1.0, beta=1.5, epsilon=0.5, dim=1):
    return MhKernel(TargetSpec(gamma, beta, dim), MalaProposal(epsilon, dim))


def rwm(eta=0.5, alpha=2.0, scale=1.0, dim=1, ball=None):
    inc = UniformBallIncrement(ball) if ball else GaussianIncrement(scale)
    return MhKernel(TargetSpec(eta, alpha, dim), RandomWalkProposal(inc, dim))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


FAMILIES = {
    "IMH": lambda: imh(),
    "MALA": lambda: mala(),
    "RWM": lambda: rwm(),
    "RWM-ball": lambda: rwm(ball=1.5),
}


def random_chain(m, rng, sparsity=0.0):
    """Row-stochastic matrix with positive diagonal and optional zeros elsewhere."""
    P = rng.uniform(0.05, 1.0, size=(m, m))
    if sparsity:
        P[rng.uniform(size=(m, m)) < sparsity] = 0.0
        np.fill_diagonal(P, rng.uniform(0.05, 1.0, size=m))
    return P / P.sum(axis=1, keepdims=True)


def random_reversible_chain(m, rng):
    """Metropolis chain for a random pi with a random symmetric proposal."""
    pi = rng.dirichlet(np.ones(m))
    Q = rng.uniform(size=(m, m))
    Q = (Q + Q.T) / (2 * m)
    P = Q * np.minimum(1.0, pi[None, :] / pi[:, None])
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P, pi
