"""Ergodicity diagnostics: total-variation decay on finite chains, drift and
minorization checks, and the drift-to-lower-bound implication for ``F_U``.

If ``∫ V dK(x, ·) <= lam V(x) + b 1_C(x)`` with ``V >= 1``, then
``U = log V`` gives ``F_U(x) >= -log(lam + b)`` for every ``x``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .exceptions import PreconditionError
from .kernel import FLOAT_FMT, MhKernel, _check_current, rejection_direct
from .lyapunov import LyapunovCandidate, _log_exp_integral, evaluate_F_U
from .rate import GridChain, stationary_distribution

__all__ = [
    "tv_distance",
    "TvDecayReport",
    "tv_decay",
    "DriftCertificate",
    "DriftResult",
    "check_drift",
    "MinorizationResult",
    "check_minorization",
    "PropertyAResult",
    "drift_implies_property_a",
    "second_eigenvalue_modulus",
]

TV_FLOOR = 1e-12
EIGEN_GAP = 1e-10


def tv_distance(p, q):
    """``(1/2) sum |p_i - q_i|``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("probability vectors differ in length")
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def second_eigenvalue_modulus(P):
    mods = np.sort(np.abs(linalg.eigvals(np.asarray(P, dtype=float))))[::-1]
    return float(mods[1]) if len(mods) > 1 else 0.0


@dataclass
class TvDecayReport:
    """``tv[i] = TV(delta_{x0} P^i, pi)`` and the fit ``tv ≈ R r^{-i}`` over the tail half."""

    iterates: np.ndarray
    tv: np.ndarray
    fitted_r: float
    fitted_R: float
    residuals: np.ndarray

    def to_csv(self, path):
        """Header ``i, tv, residual`` (residual of ``log tv`` in the fit window, else empty)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "tv", "residual"])
            for i, t, res in zip(self.iterates, self.tv, self.residuals):
                w.writerow([int(i), format(float(t), FLOAT_FMT), "" if np.isnan(res) else format(float(res), FLOAT_FMT)])


def tv_decay(chain, x0, i_max):
    """Total-variation distance to stationarity along ``i = 0..i_max``.

    The fit uses iterates from ``i_max // 2`` on with ``tv > 1e-12``; when
    fewer than two remain it falls back to the later half of all iterates
    above that floor.  ``fitted_r`` is ``inf`` if even that is too short.

    Raises
    ------
    PreconditionError
        If the eigenvalue 1 is not separated from the rest of the spectrum
        by more than 1e-10 (stationary vector not unique).
    """
    P = chain.trans if isinstance(chain, GridChain) else np.asarray(chain, dtype=float)
    w = linalg.eigvals(P)
    dist = np.sort(np.abs(w - 1.0))
    if len(dist) > 1 and dist[1] <= EIGEN_GAP:
        raise PreconditionError("stationary vector is not unique (eigen-gap below 1e-10)")
    pi = stationary_distribution(P)
    v = np.zeros(len(P))
    v[x0] = 1.0
    tv = np.empty(i_max + 1)
    for i in range(i_max + 1):
        tv[i] = tv_distance(v, pi)
        v = v @ P
    its = np.arange(i_max + 1)
    ok = tv > TV_FLOOR
    win = ok & (its >= i_max // 2)
    if win.sum() < 2:
        idx = its[ok]
        win = np.zeros_like(ok)
        win[idx[len(idx) // 2 :]] = True
    residuals = np.full(i_max + 1, np.nan)
    if win.sum() < 2:
        return TvDecayReport(its, tv, math.inf, float(tv[0]), residuals)
    A = np.stack([np.ones(win.sum()), its[win]], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(tv[win]), rcond=None)
    residuals[win] = np.log(tv[win]) - A @ coef
    return TvDecayReport(its, tv, float(math.exp(-coef[1])), float(math.exp(coef[0])), residuals)


@dataclass
class DriftCertificate:
    """Candidate ``(V, lam, b, C)`` for ``PV <= lam V + b 1_C``.

    ``V`` is a vector on a finite chain or a vectorised map ``(n, d) -> (n,)``
    with values ``>= 1``; ``log_V`` may be given to avoid overflow.  ``C``
    is a set of state indices or, for kernels on R^d, a ball radius.
    """

    V: object
    lam: float
    b: float
    C: object
    log_V: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise ValueError("lambda must lie in (0, 1)")
        if not self.b >= 0:
            raise ValueError("b must be nonnegative")
        if not callable(self.V):
            V = np.asarray(self.V, dtype=float)
            if np.any(V < 1):
                raise ValueError("V must be at least 1")
            self.V = V

    @classmethod
    def exponential(cls, s, lam, b, radius):
        """``V(x) = exp(s |x|)`` with ``C`` the ball of the given radius."""
        return cls(
            V=lambda p: np.exp(s * np.linalg.norm(np.atleast_2d(p), axis=1)),
            lam=lam,
            b=b,
            C=float(radius),
            log_V=lambda p: s * np.linalg.norm(np.atleast_2d(p), axis=1),
        )

    def logV(self, pts):
        if self.log_V is not None:
            return np.asarray(self.log_V(pts), dtype=float)
        v = np.asarray(self.V(pts), dtype=float)
        if np.any(v < 1):
            raise ValueError("V must be at least 1")
        return np.log(v)

    def in_C(self, x):
        if isinstance(self.C, (int, float)) and not isinstance(self.C, bool):
            return bool(np.linalg.norm(np.atleast_1d(x)) <= self.C)
        return int(x) in set(self.C)


@dataclass
class DriftResult:
    """``verified`` or ``violated``; ``at`` is the first violating probe point."""

    status: str
    at: object = None
    ratios: list = field(default_factory=list)
    bounds: list = field(default_factory=list)

    @property
    def verified(self):
        return self.status == "verified"


def check_drift(chain, cert, probe_points=None, tol=1e-9):
    """Check ``∫ V dK(x, ·) <= lam V(x) + b 1_C(x)`` at each probe point.

    Works with ``V(x)``-normalised quantities: the left side is
    ``∫ V(y)/V(x) K(x, dy)`` and the right ``lam + b 1_C(x) / V(x)``.
    For a :class:`GridChain` the probe points are state indices (default all).
    For an :class:`MhKernel` the integral is evaluated by quadrature and its
    error estimate widens ``tol``; divergence raises
    :class:`~mhldp.exceptions.DivergentIntegralError`.
    """
    ratios, bounds = [], []
    if isinstance(chain, GridChain):
        if callable(cert.V):
            raise ValueError("finite chains need V as a vector")
        P, V = chain.trans, cert.V
        points = range(chain.size) if probe_points is None else probe_points
        for x in points:
            ratio = float(P[x] @ V) / V[x]
            bound = cert.lam + (cert.b / V[x] if cert.in_C(x) else 0.0)
            ratios.append(ratio)
            bounds.append(bound)
            if ratio > bound + tol:
                return DriftResult("violated", x, ratios, bounds)
        return DriftResult("verified", None, ratios, bounds)
    if not isinstance(chain, MhKernel):
        raise TypeError("expected a GridChain or an MhKernel")
    k = chain
    U = LyapunovCandidate.custom(cert.logV, "log V")
    for x in probe_points:
        x0 = _check_current(k, x)
        log_e, rel = _log_exp_integral(k, U, x0)
        r, info = rejection_direct(k, x0, full_output=True)
        e = math.exp(log_e)
        ratio = e + r
        err = e * rel + info["error"]
        log_vx = float(cert.logV(x0[None, :])[0])
        bound = cert.lam + (cert.b * math.exp(-log_vx) if cert.in_C(x0) else 0.0)
        ratios.append(ratio)
        bounds.append(bound)
        if ratio > bound + tol + err:
            return DriftResult("violated", x0, ratios, bounds)
    return DriftResult("verified", None, ratios, bounds)


@dataclass
class MinorizationResult:
    """``found`` with ``epsilon`` and ``nu`` (``K^j(x, ·) >= epsilon nu`` on ``C``), or ``none``."""

    status: str
    epsilon: float = 0.0
    nu: Optional[np.ndarray] = None

    @property
    def found(self):
        return self.status == "found"


def check_minorization(chain, C, j):
    """``epsilon = sum_y min_{x in C} K^j(x, y)``."""
    if j < 1:
        raise ValueError("j must be at least 1")
    C = sorted(set(int(c) for c in C))
    if not C:
        raise ValueError("C must be nonempty")
    Pj = np.linalg.matrix_power(chain.trans, j)
    floor = Pj[C].min(axis=0)
    eps = float(floor.sum())
    if eps <= 0:
        return MinorizationResult("none")
    return MinorizationResult("found", min(eps, 1.0), floor / eps)


@dataclass
class PropertyAResult:
    status: str
    bound: float
    values: list
    min_value: float

    @property
    def holds(self):
        return self.status == "bound_holds"


def drift_implies_property_a(cert, k, probe_points, tol=1e-9):
    """Check ``F_{log V}(x) >= -log(lam + b)`` at the probe points.

    Raises
    ------
    PreconditionError
        If :func:`check_drift` does not verify ``cert`` on the same points.
    """
    probe_points = list(probe_points)
    drift = check_drift(k, cert, probe_points)
    if not drift.verified:
        raise PreconditionError(f"drift condition violated at {drift.at}")
    bound = -math.log(cert.lam + cert.b)
    U = LyapunovCandidate.custom(cert.logV, "log V")
    values = [evaluate_F_U(k, U, x) for x in probe_points]
    status = "bound_holds" if min(values) >= bound - tol else "violated"
    return PropertyAResult(status, bound, values, float(min(values)))
