"""Metropolis-Hastings kernels ``K(x, dy) = a(x, y) dy + r(x) delta_x(dy)``.

Everything is evaluated in log space.  Integrals over ``y`` use adaptive
Gauss-Kronrod quadrature (:func:`scipy.integrate.quad`) in one dimension and
Monte Carlo over proposal draws in higher dimensions, where the bounded
Hastings ratio keeps the integrand variance below 1/4.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .exceptions import DivergentIntegralError, DomainError, QuadratureError
from .model import (
    IndependentProposal,
    MalaProposal,
    RandomWalkProposal,
    UniformBallIncrement,
    apply_noise,
    as_points,
    log_target_unnorm,
    proposal_logpdf,
    proposal_mean,
    proposal_truncation_radius,
    standard_noise,
)

__all__ = [
    "QuadratureConfig",
    "MhKernel",
    "ChainTrace",
    "EmpiricalMeasure",
    "hastings_ratio",
    "acceptance_density",
    "acceptance_mass",
    "rejection_prob",
    "mala_y",
    "mala_g",
    "acceptance_density_via_g",
    "acceptance_mass_via_g",
    "simulate",
    "empirical_measure",
    "kernel_from_config",
]

FLOAT_FMT = ".17g"
# Integrands below exp(-DECAY_LOG) times their peak are treated as zero.
DECAY_LOG = 40.0


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances for integrals against the proposal.

    ``truncation_mass`` is the proposal mass allowed outside the integration
    domain; since ``a <= J`` it also bounds the discarded acceptance mass.
    ``mc_samples`` and ``mc_seed`` only matter for ``dim > 1``.
    """

    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    truncation_mass: float = 1e-12
    max_subdivisions: int = 500
    mc_samples: int = 200_000
    mc_seed: int = 12345

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.truncation_mass > 0):
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1 or self.mc_samples < 1:
            raise ValueError("max_subdivisions and mc_samples must be positive")


@dataclass(frozen=True)
class MhKernel:
    """Target plus proposal; immutable and safe to share between threads."""

    target: object
    proposal: object
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)

    def __post_init__(self):
        if self.target.dim != self.proposal.dim:
            raise ValueError("target and proposal dimensions differ")

    @property
    def dim(self):
        return self.target.dim

    @property
    def family(self):
        return {IndependentProposal: "IMH", RandomWalkProposal: "RWM", MalaProposal: "MALA"}[
            type(self.proposal)
        ]


# --------------------------------------------------------------------------
# pointwise quantities


def _log_ratio(k, x, ys):
    """log of pi(y)J(x|y) / (pi(x)J(y|x)) for one x against a batch of y.

    Returns ``(delta, log_j_forward)``; entries are NaN where the ratio is
    undefined (J(y|x) = 0 or a singular MALA drift at y).
    """
    t, p = k.target, k.proposal
    lpx = log_target_unnorm(t, x[None, :])[0]
    lpy = log_target_unnorm(t, ys)
    ljf = proposal_logpdf(p, t, x[None, :], ys, strict=False)
    ljb = proposal_logpdf(p, t, ys, x[None, :], strict=False)
    with np.errstate(invalid="ignore"):
        delta = (lpy - lpx) + (ljb - ljf)
    delta = np.where(np.isneginf(ljf), np.nan, delta)
    return delta, ljf


def _log_varpi(delta):
    with np.errstate(invalid="ignore"):
        out = np.minimum(0.0, delta)
    return np.where(np.isnan(out), -np.inf, out)


def _log_one_minus_varpi(log_varpi):
    with np.errstate(divide="ignore"):
        return np.log(-np.expm1(log_varpi))


def _check_current(k, x):
    pts, _ = as_points(x, k.dim)
    x0 = pts[0]
    if not np.all(np.isfinite(x0)):
        raise DomainError("current state must be finite")
    if not np.isfinite(log_target_unnorm(k.target, x0[None, :])[0]):
        raise DomainError("target density vanishes at the current state")
    # raises DomainError when the MALA drift is undefined at x
    proposal_mean(k.proposal, k.target, x0)
    return x0


def hastings_ratio(k, x, y):
    """``min{1, pi(y)J(x|y) / (pi(x)J(y|x))}``.

    Raises :class:`DomainError` where ``J(y|x) = 0``.
    """
    x0 = _check_current(k, x)
    ys, single = as_points(y, k.dim)
    delta, ljf = _log_ratio(k, x0, ys)
    if np.any(np.isneginf(ljf)):
        raise DomainError("proposal density J(y|x) is zero")
    if np.any(np.isnan(delta)):
        raise DomainError("Hastings ratio undefined (singular drift at y)")
    out = np.exp(_log_varpi(delta))
    return float(out[0]) if single else out


def acceptance_density(k, x, y):
    """``a(x, y) = varpi(x, y) J(y|x)``."""
    x0 = _check_current(k, x)
    ys, single = as_points(y, k.dim)
    delta, ljf = _log_ratio(k, x0, ys)
    if np.any(np.isneginf(ljf)):
        raise DomainError("proposal density J(y|x) is zero")
    out = np.exp(_log_varpi(delta) + ljf)
    return float(out[0]) if single else out


def _log_a(k, x0, ys):
    delta, ljf = _log_ratio(k, x0, ys)
    return _log_varpi(delta) + ljf


# --------------------------------------------------------------------------
# one-dimensional quadrature machinery


def _proposal_domain_1d(k, x0):
    cfg = k.quad
    centre = float(proposal_mean(k.proposal, k.target, x0[None, :])[0, 0])
    rad = proposal_truncation_radius(k.proposal, 1, cfg.truncation_mass)
    return centre - rad, centre + rad, centre


def _kinks_1d(k, x0, lo, hi, n_grid=4001):
    """Breakpoints: roots of the log ratio plus structural points in (lo, hi)."""
    pts = [float(x0[0]), 0.0, -float(x0[0])]
    grid = np.linspace(lo, hi, n_grid)
    delta, _ = _log_ratio(k, x0, grid[:, None])

    def f(s):
        return _log_ratio(k, x0, np.array([[s]]))[0][0]

    ok = np.isfinite(delta)
    sign = np.sign(delta)
    for i in np.nonzero(ok[:-1] & ok[1:] & (sign[:-1] * sign[1:] < 0))[0]:
        try:
            pts.append(optimize.brentq(f, grid[i], grid[i + 1], xtol=1e-14, rtol=4e-16))
        except (ValueError, RuntimeError):
            pts.append(0.5 * (grid[i] + grid[i + 1]))
    if isinstance(k.proposal, RandomWalkProposal) and isinstance(k.proposal.increment, UniformBallIncrement):
        pts += [x0[0] - k.proposal.increment.radius, x0[0] + k.proposal.increment.radius]
    return sorted({p for p in pts if lo < p < hi})


def _quad_log(logf, lo, hi, points, cfg, shift):
    """Integrate exp(logf - shift) on [lo, hi]; returns (value, error estimate).

    Tolerances apply to the shifted integrand.
    """

    def f(s):
        v = logf(np.array([[s]]))[0] - shift
        return math.exp(v) if v > -745.0 else 0.0

    pts = [p for p in points if lo < p < hi]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(
            f,
            lo,
            hi,
            points=pts or None,
            epsabs=cfg.abs_tol,
            epsrel=cfg.rel_tol,
            limit=max(cfg.max_subdivisions, 2 * len(pts) + 10),
        )
    return val, err


def _integrate_proposal_1d(k, x0, log_weight):
    """∫ exp(log_weight(y)) J-supported, over the proposal's truncation domain."""
    lo, hi, centre = _proposal_domain_1d(k, x0)
    pts = _kinks_1d(k, x0, lo, hi) + [centre]
    return _quad_log(log_weight, lo, hi, pts, k.quad, 0.0)


def _integrate_wide_1d(k, x0, log_f, max_expansions=12):
    """∫ exp(log_f) where the integrand may extend past the proposal domain.

    The domain grows until the integrand at both ends is below
    ``exp(-DECAY_LOG)`` times its peak; an integrand still rising at the edge
    after ``max_expansions`` doublings is reported as divergent.

    Returns ``(log_value, relative_error)``.
    """
    lo0, hi0, centre = _proposal_domain_1d(k, x0)
    inner = np.linspace(lo0, hi0, 2001)
    v_in = log_f(inner[:, None])
    lo, hi = lo0, hi0
    for _ in range(max_expansions + 1):
        grid = np.concatenate([np.linspace(lo, hi, 4001), inner])
        grid.sort()
        v = log_f(grid[:, None])
        peak = max(np.max(v), np.max(v_in))
        if not np.isfinite(peak):
            if peak == -np.inf:
                return -np.inf, 0.0
            raise DivergentIntegralError("integrand is infinite")
        left_bad = v[0] >= peak - DECAY_LOG
        right_bad = v[-1] >= peak - DECAY_LOG
        if not (left_bad or right_bad):
            break
        width = hi - lo
        if left_bad:
            lo -= width
        if right_bad:
            hi += width
    else:
        raise DivergentIntegralError(
            f"integrand does not decay at the truncation boundary [{lo:.3g}, {hi:.3g}]"
        )
    i_peak = int(np.argmax(v))
    pts = _kinks_1d(k, x0, lo, hi) + [centre, float(grid[i_peak]), lo0, hi0]
    val, err = _quad_log(log_f, lo, hi, pts, k.quad, float(peak))
    if val <= 0:
        return -np.inf, 0.0
    return math.log(val) + float(peak), err / val


# --------------------------------------------------------------------------
# Monte Carlo machinery (dim > 1)


def _householder_to(v):
    """Orthogonal matrix mapping e_1 to the unit vector v."""
    d = len(v)
    e1 = np.zeros(d)
    e1[0] = 1.0
    u = e1 - v
    nu = np.dot(u, u)
    if nu < 1e-30:
        return np.eye(d)
    return np.eye(d) - 2.0 * np.outer(u, u) / nu


def _mc_proposals(k, x0):
    """Proposal draws from x0 built from a fixed innovation set rotated toward x0.

    Sharing the innovations across x keeps radial problems exactly invariant
    under rotations of x.
    """
    cfg = k.quad
    rng = np.random.default_rng(cfg.mc_seed)
    noise = standard_noise(k.proposal, k.dim, cfg.mc_samples, rng)
    r = np.linalg.norm(x0)
    if r > 0:
        noise = noise @ _householder_to(x0 / r).T
    return apply_noise(k.proposal, k.target, x0, noise)


def _mc_log_varpi(k, x0):
    ys = _mc_proposals(k, x0)
    delta, _ = _log_ratio(k, x0, ys)
    return ys, _log_varpi(delta)


# --------------------------------------------------------------------------
# acceptance / rejection mass


def acceptance_mass(k, x, full_output=False):
    """``∫ a(x, y) dy``, the probability that a proposal from ``x`` is accepted.

    Raises :class:`QuadratureError` if the error estimate exceeds
    ``k.quad.abs_tol`` (quadrature only; Monte Carlo reports its standard error).
    With ``full_output`` also returns a dict with ``error``, ``raw`` (value
    before clamping to [0, 1]) and ``method``.
    """
    x0 = _check_current(k, x)
    if k.dim == 1:
        val, err = _integrate_proposal_1d(k, x0, lambda ys: _log_a(k, x0, ys))
        if not err <= k.quad.abs_tol:
            raise QuadratureError(f"acceptance mass did not converge at x={x0}", err)
        method = "quad"
    else:
        _, lv = _mc_log_varpi(k, x0)
        w = np.exp(lv)
        val = float(np.mean(w))
        err = float(np.std(w) / math.sqrt(len(w)))
        method = "monte_carlo"
    clamped = min(1.0, max(0.0, val))
    if full_output:
        return clamped, {"error": err, "raw": val, "method": method}
    return clamped


def rejection_prob(k, x):
    """``r(x) = 1 - ∫ a(x, y) dy``."""
    return 1.0 - acceptance_mass(k, x)


def rejection_direct(k, x, full_output=False):
    """``r(x)`` integrated directly as ``∫ (1 - varpi) J dy``.

    Accurate in relative terms when ``r(x)`` is tiny, where ``1 - acceptance``
    would be pure rounding error.
    """
    x0 = _check_current(k, x)
    if k.dim == 1:

        def logw(ys):
            delta, ljf = _log_ratio(k, x0, ys)
            return _log_one_minus_varpi(_log_varpi(delta)) + ljf

        val, err = _integrate_proposal_1d(k, x0, logw)
        method = "quad"
    else:
        _, lv = _mc_log_varpi(k, x0)
        w = -np.expm1(lv)
        val = float(np.mean(w))
        err = float(np.std(w) / math.sqrt(len(w)))
        method = "monte_carlo"
    val = min(1.0, max(0.0, val))
    if full_output:
        return val, {"error": err, "method": method}
    return val


# --------------------------------------------------------------------------
# MALA change of variables


def _mala_params(k):
    if not isinstance(k.proposal, MalaProposal):
        raise DomainError("this operation needs a MALA proposal")
    return k.target.eta, k.target.alpha, k.proposal.epsilon


def _pow_inner(r, p, inner):
    """r**p * inner with the convention 0 when inner == 0 (covers r == 0, p < 0)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.power(r, p) * inner
    return np.where(inner == 0.0, 0.0, out)


def mala_y(k, x, t):
    """``y(x, t) = t + x - (eps gamma beta / 2) |x|**(beta-2) x``."""
    gamma, beta, eps = _mala_params(k)
    xs, _ = as_points(x, k.dim)
    ts, single = as_points(t, k.dim)
    r = np.linalg.norm(xs, axis=1, keepdims=True)
    if beta <= 1 and np.any(r == 0):
        raise DomainError("MALA drift undefined at the origin for beta <= 1")
    drift = 0.5 * eps * gamma * beta * _pow_inner(r, beta - 2, xs)
    y = ts + xs - drift
    return y[0] if single else y


def mala_g(k, x, t):
    """Log acceptance ratio of MALA written in the shifted variable ``t``.

    ``g = -gamma(1 - beta/2)(|y|^beta - |x|^beta)
          - (eps/8)(gamma beta)^2 (|y|^(2beta-2) - |x|^(2beta-2))
          - (gamma beta/2)(|y|^(beta-2) - |x|^(beta-2)) <x, y>``
    with ``<x, y> = |x|^2 - (eps gamma beta/2)|x|^beta + <t, x>``.
    """
    gamma, beta, eps = _mala_params(k)
    xs, _ = as_points(x, k.dim)
    ts, single = as_points(t, k.dim)
    y = mala_y(k, xs, ts) if len(xs) == len(ts) else mala_y(k, xs[0], ts)
    if y.ndim == 1:
        y = y[None, :]
    rx = np.linalg.norm(xs, axis=1)
    ry = np.linalg.norm(y, axis=1)
    inner = rx**2 - 0.5 * eps * gamma * beta * rx**beta + np.einsum("ij,ij->i", ts, np.broadcast_to(xs, ts.shape))
    g = (
        -gamma * (1 - 0.5 * beta) * (ry**beta - rx**beta)
        - eps / 8.0 * (gamma * beta) ** 2 * (ry ** (2 * beta - 2) - rx ** (2 * beta - 2))
        - 0.5 * gamma * beta * (_pow_inner(ry, beta - 2, inner) - _pow_inner(rx, beta - 2, inner))
    )
    return float(g[0]) if single else g


def _log_jhat(eps, dim, ts):
    sq = np.einsum("ij,ij->i", ts, ts)
    return -0.5 * dim * math.log(2 * math.pi * eps) - 0.5 * sq / eps


def acceptance_density_via_g(k, x, t):
    """``min{1, exp(g(x, t))} Jhat(t)`` with ``Jhat`` the N(0, eps I) density."""
    _, _, eps = _mala_params(k)
    ts, single = as_points(t, k.dim)
    g = np.atleast_1d(mala_g(k, x, ts))
    with np.errstate(invalid="ignore"):
        lv = np.where(np.isnan(g), -np.inf, np.minimum(0.0, g))
    out = np.exp(lv + _log_jhat(eps, k.dim, ts))
    return float(out[0]) if single else out


def acceptance_mass_via_g(k, x):
    """``∫ min{1, exp(g(x, t))} Jhat(t) dt`` by quadrature in ``t`` (``dim == 1``)."""
    _, _, eps = _mala_params(k)
    if k.dim != 1:
        raise ValueError("acceptance_mass_via_g is implemented for dim == 1")
    x0 = _check_current(k, x)
    half = math.sqrt(eps) * math.sqrt(2.0) * 7.5

    def logf(ts):
        g = mala_g(k, x0, ts)
        with np.errstate(invalid="ignore"):
            lv = np.where(np.isnan(g), -np.inf, np.minimum(0.0, g))
        return lv + _log_jhat(eps, 1, ts)

    grid = np.linspace(-half, half, 4001)
    g = mala_g(k, x0, grid[:, None])
    sign = np.sign(g)
    pts = [0.0]
    for i in np.nonzero(np.isfinite(g[:-1]) & np.isfinite(g[1:]) & (sign[:-1] * sign[1:] < 0))[0]:
        pts.append(
            optimize.brentq(lambda s: mala_g(k, x0, np.array([[s]]))[0], grid[i], grid[i + 1], xtol=1e-14)
        )
    val, _ = _quad_log(logf, -half, half, pts, k.quad, 0.0)
    return val


# --------------------------------------------------------------------------
# simulation and empirical measures


@dataclass
class ChainTrace:
    """States ``X_0..X_n`` and the accept flag of each of the ``n`` proposals."""

    states: np.ndarray
    accept_flags: np.ndarray
    seed: object = None

    def __post_init__(self):
        if len(self.states) != len(self.accept_flags) + 1:
            raise ValueError("need exactly one more state than accept flags")

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accept_flags))

    def to_csv(self, path):
        """Columns ``step, accepted, x0..x{d-1}``; ``accepted`` is blank at step 0."""
        d = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "accepted"] + [f"x{i}" for i in range(d)])
            for i, s in enumerate(self.states):
                acc = "" if i == 0 else int(self.accept_flags[i - 1])
                w.writerow([i, acc] + [format(v, FLOAT_FMT) for v in s])


@dataclass
class EmpiricalMeasure:
    """Atoms with weights; ``support`` holds points or, when binned, cell indices."""

    support: np.ndarray
    weights: np.ndarray
    binned: bool = False

    def __post_init__(self):
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")

    def to_csv(self, path):
        """Columns ``atom, weight`` then ``cell`` (binned) or ``x0..x{d-1}``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if self.binned:
                w.writerow(["atom", "weight", "cell"])
                for i, (c, p) in enumerate(zip(self.support, self.weights)):
                    w.writerow([i, format(p, FLOAT_FMT), int(c)])
            else:
                d = self.support.shape[1]
                w.writerow(["atom", "weight"] + [f"x{i}" for i in range(d)])
                for i, (s, p) in enumerate(zip(self.support, self.weights)):
                    w.writerow([i, format(p, FLOAT_FMT)] + [format(v, FLOAT_FMT) for v in s])


def simulate(k, x0, n, rng):
    """Run ``n`` Metropolis-Hastings steps from ``x0``.

    ``rng`` is a seed or a :class:`numpy.random.Generator`; equal seeds give
    identical traces.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    x = _check_current(k, x0).copy()
    t, p = k.target, k.proposal
    noise = standard_noise(p, k.dim, n, rng)
    log_u = np.log(rng.random(n))
    states = np.empty((n + 1, k.dim))
    flags = np.zeros(n, dtype=bool)
    states[0] = x
    for i in range(n):
        y = apply_noise(p, t, x, noise[i][None, :])[0]
        delta, ljf = _log_ratio(k, x, y[None, :])
        if np.isnan(delta[0]) and not np.isneginf(ljf[0]):
            # singular drift at a measure-zero proposal: reject
            delta = np.array([-np.inf])
        if log_u[i] < min(0.0, delta[0]):
            x = y
            flags[i] = True
        states[i + 1] = x
    return ChainTrace(states=states, accept_flags=flags, seed=seed)


def empirical_measure(trace, grid=None):
    """``L^n = (1/n) sum_{i<n} delta_{X_i}`` over ``states[0..n-1]``.

    With a :class:`~mhldp.grid.GridSpec` the mass is binned by cell; states
    outside the grid are dropped and the remaining weights renormalised.
    """
    states = np.asarray(trace.states)[:-1]
    n = len(states)
    if grid is None:
        support, counts = np.unique(states, axis=0, return_counts=True)
        return EmpiricalMeasure(support=support, weights=counts / n)
    idx = grid.cell_index(states)
    idx = idx[idx >= 0]
    counts = np.bincount(idx, minlength=grid.size).astype(float)
    total = counts.sum()
    if total == 0:
        raise ValueError("no state falls inside the grid")
    return EmpiricalMeasure(support=np.arange(grid.size), weights=counts / total, binned=True)


def kernel_from_config(cfg):
    """Build an :class:`MhKernel` from ``{"target": .., "proposal": .., "dim": .., "quadrature": ..}``."""
    from .model import proposal_from_config, target_from_config

    dim = int(cfg.get("dim", 1))
    target = target_from_config(cfg["target"], dim)
    proposal = proposal_from_config(cfg["proposal"], dim)
    quad = QuadratureConfig(**cfg.get("quadrature", {}))
    return MhKernel(target=target, proposal=proposal, quad=quad)
