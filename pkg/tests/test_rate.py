import math

import numpy as np
import pytest
from scipy import optimize, special, stats

from mhldp import (
    CoverageError,
    GridChain,
    GridSpec,
    HalfSpaceEvent,
    SizeError,
    discretize,
    exact_ln_probability,
    ldp_slope_experiment,
    rate_function,
    relative_entropy,
    stationary_distribution,
)
from mhldp.ergodicity import tv_distance
from mhldp.rate import simplex_mesh, write_rate_csv

from conftest import imh, random_chain, rwm


def rate_two_state_oracle(K, mu):
    """Couplings with marginals mu are [[mu0 - t, t], [t, mu1 - t]]; scan t."""
    ref = mu[:, None] * K

    def kl(t):
        g = np.array([[mu[0] - t, t], [t, mu[1] - t]])
        return float(np.sum(special.rel_entr(g, ref)))

    hi = min(mu)
    res = optimize.minimize_scalar(kl, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-12})
    return min(res.fun, kl(0.0), kl(hi))


def rate_slsqp_oracle(K, mu):
    """Direct constrained minimisation of R(gamma || mu ⊗ K) over all couplings."""
    m = len(mu)
    ref = (mu[:, None] * K).ravel()
    cons = [
        {"type": "eq", "fun": lambda g: g.reshape(m, m).sum(axis=1) - mu},
        {"type": "eq", "fun": lambda g: g.reshape(m, m).sum(axis=0)[:-1] - mu[:-1]},
    ]
    f = lambda g: float(np.sum(special.rel_entr(np.maximum(g, 0.0), ref)))
    res = optimize.minimize(f, ref.copy(), method="SLSQP", bounds=[(0, 1)] * (m * m), constraints=cons, options={"ftol": 1e-14, "maxiter": 1000})
    return res.fun


def monte_carlo_probability(K, x0, n, event, n_paths, rng):
    """Fraction of simulated paths whose occupation measure lies in the event."""
    m = len(K)
    cdf = np.cumsum(K, axis=1)
    cdf[:, -1] = 1.0
    state = np.full(n_paths, x0)
    counts = np.zeros((n_paths, m))
    counts[np.arange(n_paths), state] += 1
    for _ in range(n - 1):
        u = rng.uniform(size=n_paths)
        state = (u[:, None] > cdf[state]).sum(axis=1)
        counts[np.arange(n_paths), state] += 1
    return float(np.mean(event.contains_counts(counts, n)))


# --------------------------------------------------------------------------
# chains and discretisation


def test_relative_entropy_examples():
    assert relative_entropy([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.14384, abs=1e-5)
    assert relative_entropy([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert relative_entropy([0.0, 1.0], [0.5, 0.5]) == pytest.approx(math.log(2))
    assert relative_entropy([0.5, 0.5], [1.0, 0.0]) == math.inf


def test_chain_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        GridChain(np.array([[0.5, 0.4], [0.5, 0.5]]))
    with pytest.raises(ValueError):
        GridChain(np.array([[1.1, -0.1], [0.5, 0.5]]))
    c = GridChain.explicit([[0.3, 0.7], [0.9, 0.1]])
    c.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "state,to_0,to_1"
    np.testing.assert_array_equal(GridChain.from_csv(tmp_path / "c.csv").trans, c.trans)


def test_stationary_two_state():
    pi = stationary_distribution([[0.7, 0.3], [0.4, 0.6]])
    np.testing.assert_allclose(pi, [4 / 7, 3 / 7], rtol=1e-12)


def test_imh_exact_proposal_rows_are_binned_target():
    # f = pi accepts every move, so each row is the cell mass of N(0, 1/2);
    # mass beyond the box is folded into the boundary cells
    k = imh(eta=1.0, gamma=1.0)
    grid = GridSpec.uniform(-4.0, 4.0, 16)
    chain = discretize(k, grid)
    edges = np.linspace(-4, 4, 17)
    cell = np.diff(stats.norm.cdf(edges, scale=math.sqrt(0.5)))
    cell[0] += stats.norm.cdf(-4, scale=math.sqrt(0.5))
    cell[-1] += stats.norm.sf(4, scale=math.sqrt(0.5))
    for row in chain.trans:
        np.testing.assert_allclose(row, cell / cell.sum(), atol=1e-9)
    np.testing.assert_allclose(chain.row_factors, 1.0, atol=1e-9)


def test_rwm_discretisation_stationary_close_to_target():
    k = rwm()
    grid = GridSpec.uniform(-5.0, 5.0, 50)
    chain = discretize(k, grid)
    assert np.max(np.abs(chain.row_factors - 1.0)) < 1e-6
    edges = np.linspace(-5, 5, 51)
    binned = np.diff(stats.norm.cdf(edges))
    assert tv_distance(stationary_distribution(chain), binned / binned.sum()) < 0.02


def test_discretise_reversible():
    # pi_i K_ij = pi_j K_ji holds approximately for the cell-centre chain
    chain = discretize(rwm(), GridSpec.uniform(-5.0, 5.0, 30))
    pi = stationary_distribution(chain)
    flow = pi[:, None] * chain.trans
    assert np.max(np.abs(flow - flow.T)) < 5e-3


def test_discretise_coverage_error():
    with pytest.raises(CoverageError):
        discretize(rwm(), GridSpec.uniform(-2.0, 2.0, 10))
    with pytest.raises(CoverageError):
        discretize(rwm(), GridSpec.uniform(0.5, 8.0, 10))


# --------------------------------------------------------------------------
# rate function


def test_rate_at_stationary_is_zero():
    chain = GridChain.explicit([[0.7, 0.2, 0.1], [0.3, 0.3, 0.4], [0.25, 0.25, 0.5]])
    res = rate_function(chain, stationary_distribution(chain))
    assert abs(res.value) <= 1e-6
    assert res.converged


@pytest.mark.parametrize("i", [0, 1, 2])
def test_rate_at_point_mass(i):
    K = np.array([[0.7, 0.2, 0.1], [0.3, 0.3, 0.4], [0.25, 0.25, 0.5]])
    mu = np.eye(3)[i]
    assert rate_function(GridChain(K), mu).value == pytest.approx(-math.log(K[i, i]), abs=1e-9)


def test_rate_two_state_brute_force():
    vals = np.round(np.arange(0.1, 0.91, 0.1), 10)
    mus = np.round(np.arange(0.05, 0.951, 0.05), 10)
    worst = 0.0
    for a in vals:
        for b in vals:
            K = np.array([[1 - a, a], [b, 1 - b]])
            chain = GridChain(K)
            for m0 in mus:
                mu = np.array([m0, 1 - m0])
                worst = max(worst, abs(rate_function(chain, mu).value - rate_two_state_oracle(K, mu)))
    assert worst < 1e-4


def test_rate_three_state_against_slsqp(rng):
    for _ in range(6):
        K = random_chain(3, rng)
        chain = GridChain(K)
        for mu in simplex_mesh(3, 5):
            if np.any(mu == 0):
                continue
            assert rate_function(chain, mu).value == pytest.approx(rate_slsqp_oracle(K, mu), abs=1e-3)


@pytest.mark.invariant
def test_weak_duality_and_marginals(rng):
    worst_gap = 0.0
    for i in range(50):
        m = (2, 3, 5, 10)[i % 4]
        chain = GridChain(random_chain(m, rng, sparsity=0.3 if i % 2 else 0.0))
        mu = rng.dirichlet(np.ones(m))
        res = rate_function(chain, mu)
        if not np.isfinite(res.value):
            continue
        assert res.dual_value <= res.value + 1e-6
        worst_gap = max(worst_gap, abs(res.gap))
        g = res.primal_gamma
        assert tv_distance(g.first_marginal, mu) < 1e-8
        assert tv_distance(g.second_marginal, mu) < 1e-8
    assert worst_gap < 1e-6


@pytest.mark.invariant
def test_rate_convex_along_segments(rng):
    chain = GridChain(random_chain(3, rng))
    a, b = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    ts = np.linspace(0, 1, 7)
    v = np.array([rate_function(chain, (1 - t) * a + t * b).value for t in ts])
    assert np.all(np.diff(v, 2) >= -1e-7)


def test_rate_unreachable_certificate():
    chain = GridChain(np.array([[0.0, 1.0], [0.5, 0.5]]))
    res = rate_function(chain, [1.0, 0.0])
    assert res.value == math.inf
    assert res.certificate["kind"] == "unreachable"


def test_rate_marginal_certificate():
    # a deterministic 3-cycle only carries the uniform occupation measure
    chain = GridChain(np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]))
    assert rate_function(chain, [1 / 3, 1 / 3, 1 / 3]).value == pytest.approx(0.0, abs=1e-9)
    res = rate_function(chain, [0.5, 0.3, 0.2])
    assert res.value == math.inf
    assert res.certificate["kind"] == "marginal"
    assert res.certificate["max_flow"] < 1.0


def test_rate_invalid_mu():
    chain = GridChain.explicit([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ValueError):
        rate_function(chain, [0.5, 0.6])
    with pytest.raises(ValueError):
        rate_function(chain, [1.0])


def test_rate_on_discretised_kernel():
    chain = discretize(rwm(), GridSpec.uniform(-5.0, 5.0, 20))
    pi = stationary_distribution(chain)
    assert abs(rate_function(chain, pi).value) < 1e-6
    res = rate_function(chain, np.eye(20)[10])
    assert res.value == pytest.approx(-math.log(chain.trans[10, 10]), abs=1e-9)


def test_rate_csv(tmp_path):
    chain = GridChain.explicit([[0.5, 0.5], [0.2, 0.8]])
    mus = [np.array([0.5, 0.5]), np.array([1.0, 0.0])]
    write_rate_csv(tmp_path / "r.csv", mus, [rate_function(chain, mu) for mu in mus])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "index,value,dual_value,gap,iterations,converged,mu_0,mu_1"
    assert len(lines) == 3


# --------------------------------------------------------------------------
# exact occupancy probabilities


def test_dp_whole_simplex_is_certain():
    chain = GridChain(random_chain(3, np.random.default_rng(1)))
    assert exact_ln_probability(chain, 0, 20, HalfSpaceEvent.whole()) == pytest.approx(0.0, abs=1e-12)


def test_dp_deterministic_flip():
    chain = GridChain(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert exact_ln_probability(chain, 0, 10, HalfSpaceEvent.at_least(0, 0.5, 2)) == pytest.approx(0.0, abs=1e-12)
    assert exact_ln_probability(chain, 0, 10, HalfSpaceEvent.at_least(0, 0.6, 2)) == -math.inf


@pytest.mark.parametrize("n,level", [(10, 0.5), (25, 0.7), (40, 0.9)])
def test_dp_iid_chain_is_binomial(n, level):
    # identical rows: after X_0 = 0 the visits to state 0 are Binomial(n - 1, p)
    p = 0.35
    chain = GridChain(np.array([[p, 1 - p], [p, 1 - p]]))
    need = math.ceil(level * n - 1e-9) - 1
    expected = stats.binom.logsf(need - 1, n - 1, p)
    assert exact_ln_probability(chain, 0, n, HalfSpaceEvent.at_least(0, level, 2)) == pytest.approx(expected, rel=1e-10)


def test_dp_matches_monte_carlo(rng):
    for trial in range(10):
        m = 2 + trial % 3
        K = random_chain(m, rng)
        n = 12 + trial
        event = HalfSpaceEvent.at_least(trial % m, 0.45, m)
        p = math.exp(exact_ln_probability(GridChain(K), 0, n, event))
        q = monte_carlo_probability(K, 0, n, event, 1_000_000, rng)
        se = math.sqrt(max(p * (1 - p), 1e-12) / 1_000_000)
        assert abs(p - q) <= 3 * se


def test_dp_size_limits():
    chain = GridChain(random_chain(5, np.random.default_rng(2)))
    with pytest.raises(SizeError):
        exact_ln_probability(chain, 0, 10, HalfSpaceEvent.whole())
    chain = GridChain(random_chain(2, np.random.default_rng(2)))
    with pytest.raises(SizeError):
        exact_ln_probability(chain, 0, 61, HalfSpaceEvent.whole())


def test_half_space_event():
    ev = HalfSpaceEvent(((1.0, -1.0),), (0.0,))
    assert ev.contains(np.array([0.6, 0.4]))
    assert not ev.contains(np.array([0.4, 0.6]))
    with pytest.raises(ValueError):
        HalfSpaceEvent(((1.0, 0.0),), (0.1, 0.2))
    assert len(simplex_mesh(3, 4)) == 15


def test_slope_experiment(tmp_path):
    chain = GridChain(np.array([[0.6, 0.4], [0.3, 0.7]]))
    rep = ldp_slope_experiment(chain, HalfSpaceEvent.at_least(0, 0.7, 2), [10, 20, 40, 60], mesh_steps=100)
    assert np.all(np.diff(rep.s_n) < 0)
    assert rep.s_n[-1] > rep.inf_rate
    assert rep.final_gap < 0.05
    assert rep.argmin_mu[0] == pytest.approx(0.7)
    rep.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "n,ln_probability,s_n,inf_rate"


def test_slope_threads_match():
    chain = GridChain(np.array([[0.6, 0.4], [0.3, 0.7]]))
    ev = HalfSpaceEvent.at_least(0, 0.7, 2)
    a = ldp_slope_experiment(chain, ev, [10, 20], mesh_steps=40)
    b = ldp_slope_experiment(chain, ev, [10, 20], mesh_steps=40, threads=2)
    assert a.inf_rate == b.inf_rate


def test_rate_without_total_support():
    # K_10 = 0 forces gamma_01 = 0 in every coupling; plain alternating
    # scaling only approaches that at rate 1/k
    K = np.array([[0.472, 0.528], [0.0, 1.0]])
    mu = np.array([0.586, 0.414])
    res = rate_function(GridChain(K), mu)
    assert res.converged
    assert res.value == pytest.approx(-0.586 * math.log(0.472), abs=1e-9)
    assert abs(res.gap) < 1e-6
