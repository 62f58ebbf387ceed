"""Exponential-power targets and the three proposal families.

Targets have unnormalised density ``pi(x) = exp(-eta |x|**alpha)`` on R^d.
Proposals are one of

* :class:`IndependentProposal` -- ``f(y) ∝ exp(-gamma |y|**beta)``, ignores x,
* :class:`RandomWalkProposal` -- ``J(y|x) = Jhat(y - x)`` with a symmetric
  increment density (Gaussian or uniform on a ball),
* :class:`MalaProposal` -- Gaussian centred at ``x + (eps/2) grad log pi(x)``
  with covariance ``eps * I``; the drift is taken from the target passed in.

For MALA the literature writes the target as ``exp(-gamma |x|**beta)``; here
that target is a ``TargetSpec(eta=gamma, alpha=beta)``.

All density functions accept a single point (shape ``(d,)`` or a scalar when
``d == 1``) or a batch of shape ``(n, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
from scipy import special, stats

from .exceptions import DomainError

__all__ = [
    "TargetSpec",
    "GaussianIncrement",
    "UniformBallIncrement",
    "IndependentProposal",
    "RandomWalkProposal",
    "MalaProposal",
    "ProposalSpec",
    "as_points",
    "log_target_unnorm",
    "grad_log_target",
    "proposal_logpdf",
    "proposal_sample",
    "proposal_mean",
    "log_exp_power_normalizer",
    "exp_power_radial_sf",
    "target_from_config",
    "proposal_from_config",
]


def as_points(x, dim):
    """Return ``x`` as an ``(n, dim)`` float array and whether it was a single point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if dim != 1:
            raise ValueError(f"scalar point given for dim={dim}")
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if dim == 1 and arr.shape[0] != 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != dim:
            raise ValueError(f"point has length {arr.shape[0]}, expected {dim}")
        return arr.reshape(1, dim), True
    if arr.ndim == 2 and arr.shape[1] == dim:
        return arr, False
    raise ValueError(f"cannot interpret array of shape {arr.shape} as points in R^{dim}")


def _unwrap(values, single):
    return float(values[0]) if single else values


def log_exp_power_normalizer(gamma, beta, dim):
    """Return ``log ∫ exp(-gamma |y|**beta) dy`` over R^dim.

    Uses the radial form ``(2 pi^{d/2} / Gamma(d/2)) * Gamma(d/beta) / (beta gamma^{d/beta})``.
    """
    d = dim
    return (
        math.log(2.0)
        + 0.5 * d * math.log(math.pi)
        - special.gammaln(0.5 * d)
        + special.gammaln(d / beta)
        - math.log(beta)
        - (d / beta) * math.log(gamma)
    )


def exp_power_radial_sf(radius, gamma, beta, dim):
    """P(|Y| > radius) for Y with density ∝ exp(-gamma |y|**beta) on R^dim."""
    return special.gammaincc(dim / beta, gamma * np.power(radius, beta))


def _exp_power_radial_isf(tail, gamma, beta, dim):
    return (special.gammainccinv(dim / beta, tail) / gamma) ** (1.0 / beta)


def _random_directions(rng, n, dim):
    z = rng.standard_normal((n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


@dataclass(frozen=True)
class TargetSpec:
    """Exponential-power target ``pi(x) ∝ exp(-eta |x|**alpha)`` on R^dim."""

    eta: float
    alpha: float
    dim: int = 1

    def __post_init__(self):
        if not (self.eta > 0 and self.alpha > 0):
            raise ValueError("eta and alpha must be positive")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")

    @cached_property
    def log_normalizer(self):
        return log_exp_power_normalizer(self.eta, self.alpha, self.dim)

    def mass_outside(self, radius):
        """Target probability of ``{|x| > radius}``."""
        return float(exp_power_radial_sf(radius, self.eta, self.alpha, self.dim))


@dataclass(frozen=True)
class GaussianIncrement:
    """Mean-zero Gaussian increment with covariance ``scale**2 * I``."""

    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")


@dataclass(frozen=True)
class UniformBallIncrement:
    """Increment uniform on the closed ball of the given radius."""

    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class IndependentProposal:
    """Independence proposal ``f(y) ∝ exp(-gamma |y|**beta)``."""

    beta: float
    gamma: float
    dim: int = 1

    def __post_init__(self):
        if not (self.beta > 0 and self.gamma > 0):
            raise ValueError("beta and gamma must be positive")

    @cached_property
    def log_normalizer(self):
        return log_exp_power_normalizer(self.gamma, self.beta, self.dim)


@dataclass(frozen=True)
class RandomWalkProposal:
    """Random-walk proposal ``J(y|x) = Jhat(y - x)``."""

    increment: Union[GaussianIncrement, UniformBallIncrement] = field(
        default_factory=GaussianIncrement
    )
    dim: int = 1


@dataclass(frozen=True)
class MalaProposal:
    """Langevin proposal with step size ``epsilon``; drift comes from the target."""

    epsilon: float
    dim: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


ProposalSpec = Union[IndependentProposal, RandomWalkProposal, MalaProposal]


def log_target_unnorm(target, x):
    """Return ``-eta |x|**alpha`` (a float for one point, an array for a batch)."""
    pts, single = as_points(x, target.dim)
    if not np.all(np.isfinite(pts)):
        raise DomainError("target density needs finite points")
    r = np.linalg.norm(pts, axis=1)
    return _unwrap(-target.eta * r**target.alpha, single)


def _grad(target, pts, strict):
    r = np.linalg.norm(pts, axis=1)
    at_origin = r == 0.0
    singular = at_origin & (target.alpha <= 1)
    if strict and np.any(singular):
        raise DomainError(f"gradient undefined at the origin for alpha={target.alpha}")
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(at_origin, 0.0, -target.eta * target.alpha * r ** (target.alpha - 2))
    coef = np.where(singular, np.nan, coef)
    return coef[:, None] * pts


def grad_log_target(target, x):
    """Gradient ``-eta alpha |x|**(alpha-2) x`` of the log target.

    At the origin the gradient is the zero vector when ``alpha > 1``; for
    ``alpha <= 1`` it does not exist and :class:`DomainError` is raised.
    """
    pts, single = as_points(x, target.dim)
    g = _grad(target, pts, strict=True)
    return g[0] if single else g


def proposal_mean(prop, target, x, strict=True):
    """Centre of the proposal from ``x`` (``x`` itself for random walks).

    With ``strict=False`` an undefined MALA drift gives NaN instead of raising.
    """
    pts, single = as_points(x, target.dim)
    if isinstance(prop, MalaProposal):
        m = pts + 0.5 * prop.epsilon * _grad(target, pts, strict)
    elif isinstance(prop, IndependentProposal):
        m = np.zeros_like(pts)
    else:
        m = pts
    return m[0] if single else m


def _log_increment(inc, dim, diff):
    sq = np.einsum("ij,ij->i", diff, diff)
    if isinstance(inc, GaussianIncrement):
        s2 = inc.scale**2
        return -0.5 * dim * math.log(2 * math.pi * s2) - 0.5 * sq / s2
    log_vol = 0.5 * dim * math.log(math.pi) - special.gammaln(0.5 * dim + 1) + dim * math.log(inc.radius)
    return np.where(sq <= inc.radius**2, -log_vol, -np.inf)


def proposal_logpdf(prop, target, x, y, strict=True):
    """Normalised log proposal density ``log J(y|x)``.

    ``x`` and ``y`` broadcast: a single ``x`` against a batch of ``y`` is the
    common case inside quadrature.  ``strict`` is passed to :func:`proposal_mean`.
    """
    dim = target.dim
    ys, single_y = as_points(y, dim)
    xs, single_x = as_points(x, dim)
    single = single_x and single_y
    if isinstance(prop, IndependentProposal):
        r = np.linalg.norm(ys, axis=1)
        out = -prop.log_normalizer - prop.gamma * r**prop.beta
        if len(ys) == 1 and len(xs) > 1:
            out = np.repeat(out, len(xs))
        elif len(xs) not in (1, len(ys)):
            raise ValueError("x and y batches differ in length")
    elif isinstance(prop, RandomWalkProposal):
        out = _log_increment(prop.increment, dim, ys - xs)
    elif isinstance(prop, MalaProposal):
        diff = ys - proposal_mean(prop, target, xs, strict)
        sq = np.einsum("ij,ij->i", diff, diff)
        out = -0.5 * dim * math.log(2 * math.pi * prop.epsilon) - 0.5 * sq / prop.epsilon
    else:
        raise TypeError(f"unknown proposal {prop!r}")
    return _unwrap(np.asarray(out, dtype=float), single)


def standard_noise(prop, dim, n, rng):
    """Draw ``n`` proposal innovations that :func:`apply_noise` maps to proposals.

    Gaussian families use standard normals, the uniform ball uses points in
    the unit ball, the independence proposal uses exact draws from ``f``.
    """
    if isinstance(prop, IndependentProposal):
        g = rng.gamma(dim / prop.beta, 1.0, size=n)
        radius = (g / prop.gamma) ** (1.0 / prop.beta)
        return radius[:, None] * _random_directions(rng, n, dim)
    if isinstance(prop, RandomWalkProposal) and isinstance(prop.increment, UniformBallIncrement):
        radius = rng.random(n) ** (1.0 / dim)
        return radius[:, None] * _random_directions(rng, n, dim)
    return rng.standard_normal((n, dim))


def apply_noise(prop, target, x, noise):
    """Turn innovations from :func:`standard_noise` into proposals from ``x``."""
    if isinstance(prop, IndependentProposal):
        return noise.copy()
    if isinstance(prop, RandomWalkProposal):
        inc = prop.increment
        scale = inc.scale if isinstance(inc, GaussianIncrement) else inc.radius
        return x + scale * noise
    return proposal_mean(prop, target, x) + math.sqrt(prop.epsilon) * noise


def proposal_sample(prop, target, x, rng, size=None):
    """Draw from ``J(.|x)``; returns one point, or ``size`` points as ``(size, d)``."""
    rng = np.random.default_rng(rng)
    pts, _ = as_points(x, target.dim)
    n = 1 if size is None else int(size)
    y = apply_noise(prop, target, pts[0], standard_noise(prop, target.dim, n, rng))
    return y[0] if size is None else y


def proposal_truncation_radius(prop, dim, tail_mass):
    """Radius around the proposal centre holding all but ``tail_mass`` of J."""
    if isinstance(prop, IndependentProposal):
        return float(_exp_power_radial_isf(tail_mass, prop.gamma, prop.beta, dim))
    if isinstance(prop, RandomWalkProposal) and isinstance(prop.increment, UniformBallIncrement):
        return prop.increment.radius
    sigma = prop.increment.scale if isinstance(prop, RandomWalkProposal) else math.sqrt(prop.epsilon)
    # |Z|^2 ~ chi2(d)
    return sigma * math.sqrt(stats.chi2.isf(tail_mass, dim))


def target_from_config(cfg, dim=None):
    """Build a :class:`TargetSpec` from ``{"eta": .., "alpha": .., "dim": ..}``."""
    return TargetSpec(eta=float(cfg["eta"]), alpha=float(cfg["alpha"]), dim=int(cfg.get("dim", dim or 1)))


def proposal_from_config(cfg, dim=1):
    """Build a proposal from a configuration mapping.

    Recognised ``family`` values: ``independent`` (``beta``, ``gamma``),
    ``random_walk`` (``increment``: ``gaussian`` with ``scale`` or ``ball``
    with ``radius``), ``mala`` (``epsilon``).
    """
    family = cfg["family"]
    if family == "independent":
        return IndependentProposal(beta=float(cfg["beta"]), gamma=float(cfg["gamma"]), dim=dim)
    if family == "random_walk":
        kind = cfg.get("increment", "gaussian")
        if kind == "gaussian":
            inc = GaussianIncrement(scale=float(cfg.get("scale", 1.0)))
        elif kind == "ball":
            inc = UniformBallIncrement(radius=float(cfg.get("radius", 1.0)))
        else:
            raise ValueError(f"unknown increment {kind!r}")
        return RandomWalkProposal(increment=inc, dim=dim)
    if family == "mala":
        return MalaProposal(epsilon=float(cfg["epsilon"]), dim=dim)
    raise ValueError(f"unknown proposal family {family!r}")
