"""Rate function of the empirical-measure LDP on finite chains.

``I(mu) = inf { R(gamma || mu ⊗ K) : both marginals of gamma equal mu }``.

The primal is solved by alternating I-projections onto the two marginal
constraints; the dual is the Donsker-Varadhan form
``sup_v sum_i mu_i (v_i - log (K e^v)_i)``.  :func:`exact_ln_probability`
gives exact occupancy probabilities for small chains by dynamic programming.
"""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, optimize, special

from .exceptions import CoverageError, QuadratureError, SizeError
from .grid import GridSpec
from .kernel import (
    FLOAT_FMT,
    _check_current,
    _kinks_1d,
    _log_a,
    _mc_log_varpi,
    _proposal_domain_1d,
    _quad_log,
    rejection_direct,
)
from .model import exp_power_radial_sf

__all__ = [
    "GridChain",
    "Coupling",
    "RateResult",
    "HalfSpaceEvent",
    "SlopeReport",
    "discretize",
    "stationary_distribution",
    "relative_entropy",
    "rate_function",
    "exact_ln_probability",
    "ldp_slope_experiment",
    "simplex_mesh",
    "write_rate_csv",
]

ROW_FACTOR_TOL = 1e-3
COVERAGE_MASS = 1e-6
SINKHORN_PROBE = 1000


@dataclass
class GridChain:
    """Finite Markov chain with row-stochastic ``trans``.

    ``states`` holds cell centres (``(m, d)`` array) for discretised kernels
    and plain labels otherwise.  ``row_factors`` are the row sums before
    normalisation and ``escaped`` the accepted mass that left the grid and
    was assigned to the nearest boundary cell.
    """

    trans: np.ndarray
    states: Optional[np.ndarray] = None
    source: str = "explicit"
    grid: Optional[GridSpec] = None
    row_factors: Optional[np.ndarray] = None
    escaped: Optional[np.ndarray] = None

    def __post_init__(self):
        P = np.array(self.trans, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise ValueError("transition matrix must be square")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise ValueError("transition entries must be finite and nonnegative")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("rows must sum to 1 within 1e-12")
        self.trans = P
        if self.states is None:
            self.states = np.arange(len(P))

    @classmethod
    def explicit(cls, trans, labels=None):
        P = np.array(trans, dtype=float)
        # tolerate rows typed with a few digits
        P = P / P.sum(axis=1, keepdims=True)
        return cls(P, None if labels is None else np.asarray(labels))

    @property
    def size(self):
        return self.trans.shape[0]

    def to_csv(self, path):
        """Dense matrix; header ``state, to_0, ..., to_{m-1}``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["state"] + [f"to_{j}" for j in range(self.size)])
            for i, row in enumerate(self.trans):
                w.writerow([i] + [format(v, FLOAT_FMT) for v in row])

    @classmethod
    def from_csv(cls, path):
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(rows[:, 1:])


def stationary_distribution(chain_or_matrix):
    """Left Perron vector of the transition matrix, normalised to sum 1."""
    P = chain_or_matrix.trans if isinstance(chain_or_matrix, GridChain) else np.asarray(chain_or_matrix, float)
    w, vl = linalg.eig(P, left=True, right=False)
    i = int(np.argmin(np.abs(w - 1.0)))
    v = np.real(vl[:, i])
    v = v / v.sum()
    return np.clip(v, 0.0, None) / np.clip(v, 0.0, None).sum()


# --------------------------------------------------------------------------
# discretisation


def _covered_mass_gap(target, grid):
    """Upper bound on the target mass outside the grid box."""
    lo, hi = np.array(grid.lower), np.array(grid.upper)
    if np.any(lo >= 0) or np.any(hi <= 0):
        return 1.0
    if grid.dim == 1:
        sf = lambda r: float(exp_power_radial_sf(r, target.eta, target.alpha, 1))
        return 0.5 * (sf(-lo[0]) + sf(hi[0]))
    return target.mass_outside(float(min(-lo.min(), hi.min())))


def _row_1d(k, grid, x0, order):
    edges = grid.edges(0)
    lo_d, hi_d, _ = _proposal_domain_1d(k, x0)
    kinks = _kinks_1d(k, x0, min(lo_d, edges[0]), max(hi_d, edges[-1]))
    brk = np.unique(np.concatenate([edges, [p for p in kinks if edges[0] < p < edges[-1]]]))
    a, b = brk[:-1], brk[1:]
    nodes, weights = np.polynomial.legendre.leggauss(order)
    ys = (0.5 * (b - a))[:, None] * nodes[None, :] + (0.5 * (a + b))[:, None]
    la = _log_a(k, x0, ys.reshape(-1, 1)).reshape(ys.shape)
    piece = np.exp(la) @ weights * 0.5 * (b - a)
    cell = np.clip(np.searchsorted(edges, 0.5 * (a + b), side="right") - 1, 0, grid.cells[0] - 1)
    row = np.bincount(cell, weights=piece, minlength=grid.cells[0])
    escaped = 0.0
    for lo, hi, j in ((lo_d, edges[0], 0), (edges[-1], hi_d, grid.cells[0] - 1)):
        if hi > lo:
            val, err = _quad_log(lambda yy: _log_a(k, x0, yy), lo, hi, kinks, k.quad, 0.0)
            if not err <= k.quad.abs_tol:
                raise QuadratureError(f"tail mass did not converge at x={x0}", err)
            row[j] += val
            escaped += val
    return row, escaped


def _row_nd(k, grid, x0, order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    w = grid.widths
    mesh = np.stack(np.meshgrid(*([nodes] * grid.dim), indexing="ij"), -1).reshape(-1, grid.dim)
    wt = np.prod(np.stack(np.meshgrid(*([weights] * grid.dim), indexing="ij"), -1).reshape(-1, grid.dim), axis=1)
    centres = grid.centers()
    ys = (centres[:, None, :] + 0.5 * w[None, None, :] * mesh[None, :, :]).reshape(-1, grid.dim)
    la = _log_a(k, x0, ys).reshape(len(centres), len(wt))
    row = np.exp(la) @ wt * grid.cell_volume / 2**grid.dim
    # accepted proposals that land outside the box go to the clipped cell
    props, lv = _mc_log_varpi(k, x0)
    outside = grid.cell_index(props) < 0
    escaped = 0.0
    if np.any(outside):
        rel = (props[outside] - np.array(grid.lower)) / w
        idx = np.clip(np.floor(rel).astype(int), 0, np.array(grid.cells) - 1)
        flat = np.ravel_multi_index(tuple(idx.T), grid.cells)
        mass = np.exp(lv[outside]) / len(props)
        row += np.bincount(flat, weights=mass, minlength=grid.size)
        escaped = float(mass.sum())
    return row, escaped


def discretize(k, grid, order=10, coverage_mass=COVERAGE_MASS, row_tol=ROW_FACTOR_TOL):
    """Cell-centre discretisation of an MH kernel.

    ``trans[i, j]`` is the accepted mass from centre ``x_i`` into cell ``j``
    (composite Gauss-Legendre of ``order`` nodes per piece, split at the
    kinks of the acceptance density in one dimension); ``r(x_i)`` is added to
    the diagonal.  Accepted mass leaving the box is assigned to the nearest
    boundary cell.  Rows are normalised and each normalisation factor must
    lie within ``1 ± row_tol``.

    Raises
    ------
    CoverageError
        If the box may leave more than ``coverage_mass`` of the target
        outside (exact in one dimension, inscribed ball otherwise).
    QuadratureError
        If a row factor is out of tolerance.
    """
    if grid.dim != k.dim:
        raise ValueError("grid and kernel dimensions differ")
    gap = _covered_mass_gap(k.target, grid)
    if gap > coverage_mass:
        raise CoverageError(f"grid leaves up to {gap:.3g} of the target mass outside")
    centres = grid.centers()
    m = len(centres)
    P = np.empty((m, m))
    factors = np.empty(m)
    escaped = np.empty(m)
    for i, x in enumerate(centres):
        x0 = _check_current(k, x)
        row, escaped[i] = (_row_1d if k.dim == 1 else _row_nd)(k, grid, x0, order)
        row[i] += rejection_direct(k, x0)
        factors[i] = row.sum()
        if abs(factors[i] - 1.0) > row_tol:
            raise QuadratureError(f"row {i} sums to {factors[i]:.6g} before normalisation", abs(factors[i] - 1.0))
        P[i] = row / factors[i]
    return GridChain(P, centres, "discretized", grid, factors, escaped)


# --------------------------------------------------------------------------
# relative entropy and couplings


def relative_entropy(p, q):
    """``sum p log(p / q)`` with ``0 log 0 = 0``; ``inf`` when ``p`` charges a ``q``-null cell.

    Nonnegative when both arguments are probability vectors; ``q`` may be
    a sub-probability reference, in which case the value can exceed the
    divergence of the renormalised ``q`` by ``-log sum(q)``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("shapes differ")
    return float(np.sum(special.rel_entr(p, q)))


@dataclass
class Coupling:
    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 2 or np.any(g < 0) or abs(g.sum() - 1.0) > 1e-9:
            raise ValueError("coupling must be a nonnegative matrix with total mass 1")
        self.gamma = g

    @property
    def first_marginal(self):
        return self.gamma.sum(axis=1)

    @property
    def second_marginal(self):
        return self.gamma.sum(axis=0)


@dataclass
class RateResult:
    """Primal value, optimal coupling, dual value and duality gap.

    ``value`` is ``inf`` for infeasible ``mu``; ``certificate`` then names
    the obstruction.
    """

    value: float
    primal_gamma: Optional[Coupling]
    dual_value: float
    gap: float
    iterations: int = 0
    converged: bool = True
    marginal_violation: float = 0.0
    certificate: dict = field(default_factory=dict)


def _check_mu(mu, m):
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (m,):
        raise ValueError(f"mu must have length {m}")
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-9:
        raise ValueError("mu must be a probability vector")
    return mu / mu.sum()


def _feasibility(ref, mu_s):
    """Largest mass of a sub-coupling of the support of ``ref`` with marginals ``<= mu``."""
    s = len(mu_s)
    nz = np.argwhere(ref > 0)
    n = len(nz)
    A = np.zeros((2 * s, n))
    A[nz[:, 0], np.arange(n)] = 1.0
    A[s + nz[:, 1], np.arange(n)] = 1.0
    res = optimize.linprog(-np.ones(n), A_ub=A, b_ub=np.concatenate([mu_s, mu_s]), bounds=(0, None), method="highs")
    flow = -res.fun
    duals = -res.ineqlin.marginals
    return flow, duals[:s], duals[s:]


def _prune_unsupported(ref, mu_s):
    """Zero the entries of ``ref`` that no coupling with marginals ``mu`` can charge.

    Sinkhorn only converges sublinearly when such entries exist.  One LP on
    the cone of scaled couplings (row and column sums ``lam * mu``) with
    ``t_e <= gamma_e``, ``t_e <= 1`` and objective ``max sum t`` puts
    ``t_e = 1`` on exactly the chargeable entries.
    """
    s = len(mu_s)
    nz = np.argwhere(ref > 0)
    n = len(nz)
    # variables: gamma (n), t (n), lam (1)
    A_eq = np.zeros((2 * s, 2 * n + 1))
    A_eq[nz[:, 0], np.arange(n)] = 1.0
    A_eq[s + nz[:, 1], np.arange(n)] = 1.0
    A_eq[:, -1] = -np.concatenate([mu_s, mu_s])
    A_ub = np.hstack([-np.eye(n), np.eye(n), np.zeros((n, 1))])
    c = np.concatenate([np.zeros(n), -np.ones(n), [0.0]])
    bounds = [(0, None)] * n + [(0, 1)] * n + [(0, None)]
    res = optimize.linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=np.zeros(2 * s), bounds=bounds, method="highs")
    out = ref.copy()
    if res.status == 0:
        dead = nz[res.x[n : 2 * n] < 0.5]
        out[dead[:, 0], dead[:, 1]] = 0.0
    return out


def _sinkhorn(ref, mu, tol, max_iter):
    g = ref.copy()
    viol = np.inf
    for it in range(1, max_iter + 1):
        rs = g.sum(axis=1)
        g *= (mu / rs)[:, None]
        cs = g.sum(axis=0)
        g *= (mu / cs)[None, :]
        viol = float(np.abs(g.sum(axis=1) - mu).sum())
        if viol < tol:
            return g, it, viol, True
    return g, max_iter, viol, False


def _dual(K, mu, gtol=1e-12):
    """``sup_v sum_i mu_i (v_i - log sum_j K_ij e^{v_j})`` with ``v_0 = 0``."""
    s = len(mu)
    if s == 1:
        return float(-math.log(K[0, 0]))
    with np.errstate(divide="ignore"):
        logK = np.log(K)

    def parts(w):
        v = np.concatenate([[0.0], w])
        z = logK + v[None, :]
        lse = special.logsumexp(z, axis=1)
        P = np.exp(z - lse[:, None])
        return v, lse, P

    def f(w):
        v, lse, _ = parts(w)
        return -(mu @ v - mu @ lse)

    def grad(w):
        _, _, P = parts(w)
        return (-mu + mu @ P)[1:]

    def hess(w):
        _, _, P = parts(w)
        H = np.diag(mu @ P) - (P * mu[:, None]).T @ P
        return H[1:, 1:]

    res = optimize.minimize(f, np.zeros(s - 1), jac=grad, hess=hess, method="trust-exact", options={"gtol": gtol, "maxiter": 2000})
    return float(-res.fun)


def rate_function(chain, mu, tol=1e-9, max_iter=100_000):
    """``I(mu)`` by alternating KL projections, with its Donsker-Varadhan dual.

    Only states charged by ``mu`` carry mass.  When no coupling supported by
    ``mu ⊗ K`` has both marginals ``mu`` the value is ``inf`` and
    ``certificate`` lists the offending states (``unreachable``: states in
    the support that no supported state reaches in one step; otherwise the
    row/column sets of the LP bottleneck).
    """
    K = chain.trans
    m = K.shape[0]
    mu = _check_mu(mu, m)
    S = np.nonzero(mu > 0)[0]
    mu_s = mu[S]
    K_s = K[np.ix_(S, S)]
    ref = mu_s[:, None] * K_s
    dead_cols = S[ref.sum(axis=0) == 0]
    dead_rows = S[ref.sum(axis=1) == 0]
    if len(dead_cols) or len(dead_rows):
        cert = {"kind": "unreachable", "states": dead_cols.tolist(), "stuck": dead_rows.tolist()}
        return RateResult(math.inf, None, math.inf, math.nan, converged=False, certificate=cert)
    flow, row_d, col_d = _feasibility(ref, mu_s)
    if flow < 1.0 - 1e-10:
        cert = {
            "kind": "marginal",
            "max_flow": flow,
            "rows": S[row_d > 1e-9].tolist(),
            "columns": S[col_d > 1e-9].tolist(),
        }
        return RateResult(math.inf, None, math.inf, math.nan, converged=False, certificate=cert)
    first = min(max_iter, SINKHORN_PROBE)
    g_s, it, viol, ok = _sinkhorn(ref, mu_s, tol, first)
    if not ok and max_iter > first:
        # a stalled first pass usually means entries that no feasible
        # coupling charges; drop them and restart
        start = _prune_unsupported(ref, mu_s)
        g_s, it2, viol, ok = _sinkhorn(start, mu_s, tol, max_iter - first)
        it += it2
    gamma = np.zeros((m, m))
    gamma[np.ix_(S, S)] = g_s
    gamma /= gamma.sum()
    value = relative_entropy(g_s / g_s.sum(), ref)
    dual = _dual(K_s, mu_s)
    return RateResult(value, Coupling(gamma), dual, value - dual, it, ok, viol)


def write_rate_csv(path, mus, results):
    """Header ``index, value, dual_value, gap, iterations, converged, mu_0..``."""
    m = len(mus[0]) if len(mus) else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "value", "dual_value", "gap", "iterations", "converged"] + [f"mu_{j}" for j in range(m)])
        for i, (mu, r) in enumerate(zip(mus, results)):
            w.writerow(
                [i]
                + [format(float(v), FLOAT_FMT) for v in (r.value, r.dual_value, r.gap)]
                + [r.iterations, int(r.converged)]
                + [format(float(v), FLOAT_FMT) for v in mu]
            )


# --------------------------------------------------------------------------
# exact occupancy probabilities


@dataclass(frozen=True)
class HalfSpaceEvent:
    """``{mu : weights @ mu >= thresholds}`` on the simplex.

    No constraints means the whole simplex.  Counts ``c`` after ``n`` steps
    belong to the event when ``weights @ c >= n * thresholds`` (up to 1e-9
    rounding slack).
    """

    weights: tuple = ()
    thresholds: tuple = ()

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weights, dtype=float)) if len(self.weights) else np.zeros((0, 0))
        t = np.atleast_1d(np.asarray(self.thresholds, dtype=float)) if len(self.thresholds) else np.zeros(0)
        if len(W) != len(t):
            raise ValueError("one threshold per constraint")
        object.__setattr__(self, "weights", tuple(map(tuple, W)))
        object.__setattr__(self, "thresholds", tuple(t))

    @classmethod
    def whole(cls):
        return cls()

    @classmethod
    def at_least(cls, state, level, m):
        """``{mu_state >= level}``."""
        w = np.zeros(m)
        w[state] = 1.0
        return cls((tuple(w),), (float(level),))

    def contains_counts(self, counts, n):
        c = np.asarray(counts, dtype=float)
        if not self.weights:
            return np.ones(c.shape[:-1], dtype=bool)
        W = np.array(self.weights)
        t = np.array(self.thresholds)
        lhs = c @ W.T
        return np.all(lhs >= n * t - 1e-9 * max(n, 1), axis=-1)

    def contains(self, mu):
        return self.contains_counts(mu, 1.0)


def exact_ln_probability(chain, x0, n, event, max_states=4, max_n=60, budget=20_000_000):
    """``log P(L^n in A)`` for ``L^n = (1/n) sum_{k<n} delta_{X_k}``, ``X_0 = x0``.

    Dynamic programming over (current state, visit counts of all but the
    last state); the last count is implied by the step number.

    Raises
    ------
    SizeError
        If ``m > max_states``, ``n > max_n`` or the table exceeds ``budget``.
    """
    K = chain.trans
    m = K.shape[0]
    if n < 1:
        raise ValueError("n must be at least 1")
    cells = m * (n + 1) ** (m - 1)
    if m > max_states or n > max_n or cells > budget:
        raise SizeError(f"DP with m={m}, n={n} needs {cells} cells (limits: m<={max_states}, n<={max_n}, {budget})")
    if not 0 <= x0 < m:
        raise ValueError("x0 is not a state")
    shape = (m,) + (n + 1,) * (m - 1)
    P = np.zeros(shape)
    start = [x0] + [0] * (m - 1)
    if x0 < m - 1:
        start[1 + x0] = 1
    P[tuple(start)] = 1.0
    for _ in range(n - 1):
        Q = np.zeros(shape)
        for s in range(m):
            moved = np.tensordot(K[:, s], P, axes=(0, 0))
            if s < m - 1:
                sl = [slice(None)] * (m - 1)
                src = list(sl)
                src[s] = slice(0, n)
                sl[s] = slice(1, n + 1)
                Q[s][tuple(sl)] += moved[tuple(src)]
            else:
                Q[s] += moved
        P = Q
    total = P.sum(axis=0)
    grids = list(np.meshgrid(*([np.arange(n + 1)] * (m - 1)), indexing="ij"))
    counts = np.stack(grids + [n - sum(grids)], axis=-1) if m > 1 else np.full((1,), n)[None]
    valid = counts[..., -1] >= 0
    mask = valid & event.contains_counts(counts, n)
    p = float(np.sum(total[mask])) if m > 1 else (1.0 if event.contains_counts(np.array([n]), n) else 0.0)
    return math.log(p) if p > 0 else -math.inf


def simplex_mesh(m, steps):
    """All probability vectors with coordinates in ``{0, 1/steps, ..., 1}``."""
    out = [np.array(c + (steps - sum(c),)) / steps for c in itertools.product(range(steps + 1), repeat=m - 1) if sum(c) <= steps]
    return np.array(out)


@dataclass
class SlopeReport:
    """``s_n = -(1/n) log P(L^n in A)`` beside the mesh minimum of ``I`` over ``A``."""

    n_values: np.ndarray
    ln_probability: np.ndarray
    s_n: np.ndarray
    inf_rate: float
    argmin_mu: np.ndarray
    mesh_steps: int

    @property
    def final_gap(self):
        return abs(float(self.s_n[-1]) - self.inf_rate)

    def to_csv(self, path):
        """Header ``n, ln_probability, s_n, inf_rate``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "ln_probability", "s_n", "inf_rate"])
            for n, lp, s in zip(self.n_values, self.ln_probability, self.s_n):
                w.writerow([int(n), format(float(lp), FLOAT_FMT), format(float(s), FLOAT_FMT), format(self.inf_rate, FLOAT_FMT)])


def ldp_slope_experiment(chain, event, n_values, x0=0, mesh_steps=200, threads=1):
    """Exact ``s_n`` for each ``n`` and ``min_{mu in A ∩ mesh} I(mu)``.

    No convergence claim is made; the report only places the two side by
    side.
    """
    n_values = np.asarray(sorted(n_values), dtype=int)
    lp = np.array([exact_ln_probability(chain, x0, int(n), event) for n in n_values])
    s = -lp / n_values
    mesh = simplex_mesh(chain.size, mesh_steps)
    mesh = mesh[event.contains(mesh)]
    if len(mesh) == 0:
        return SlopeReport(n_values, lp, s, math.inf, np.full(chain.size, np.nan), mesh_steps)

    def value(mu):
        return rate_function(chain, mu).value

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            vals = np.array(list(ex.map(value, mesh)))
    else:
        vals = np.array([value(mu) for mu in mesh])
    i = int(np.argmin(vals))
    return SlopeReport(n_values, lp, s, float(vals[i]), mesh[i], mesh_steps)
