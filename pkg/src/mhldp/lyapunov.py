"""Lyapunov functional ``F_U``, finite-radius probes of its limit conditions,
and the analytic regime classification for IMH, MALA and RWM.

``F_U(x) = -log( ∫ exp(U(y) - U(x)) a(x, y) dy + r(x) )``.  Its sub-level
sets are relatively compact exactly when, as ``|x| -> ∞``,

* the acceptance mass ``∫ a(x, y) dy`` tends to 1, and
* the exponential integral ``∫ exp(U(y) - U(x)) a(x, y) dy`` tends to 0.

:func:`probe_limits` evaluates both along rays and turns the finite-radius
sequences into ``holds`` / ``fails`` / ``inconclusive`` verdicts.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import DivergentIntegralError, DomainError, QuadratureError
from .kernel import (
    FLOAT_FMT,
    _check_current,
    _integrate_wide_1d,
    _log_a,
    _log_ratio,
    _mc_log_varpi,
    _quad_log,
    acceptance_mass,
    rejection_direct,
)
from .model import (
    GaussianIncrement,
    IndependentProposal,
    MalaProposal,
    RandomWalkProposal,
    UniformBallIncrement,
    proposal_truncation_radius,
)

__all__ = [
    "LyapunovCandidate",
    "ProbeThresholds",
    "LimitProbeReport",
    "RegimeVerdict",
    "CrossCheck",
    "exp_integral",
    "evaluate_F_U",
    "probe_limits",
    "half_space_acceptance",
    "classify_regime",
    "cross_validate",
    "kernel_params",
    "paper_candidate",
    "imh_property_a_bound",
    "default_radii",
]


@dataclass(frozen=True)
class LyapunovCandidate:
    """A nonnegative function ``U`` on R^d.

    Build with :meth:`zero`, :meth:`radial_power` (``c |x|**p``) or
    :meth:`custom` (any vectorised ``(n, d) -> (n,)`` map).
    """

    kind: str = "zero"
    c: float = 0.0
    p: float = 1.0
    fn: Optional[Callable] = field(default=None, compare=False)
    name: str = "0"

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def radial_power(cls, c, p):
        if not (c > 0 and p > 0):
            raise ValueError("radial power needs c > 0 and p > 0")
        return cls(kind="radial_power", c=float(c), p=float(p), name=f"{c:g}|x|^{p:g}")

    @classmethod
    def custom(cls, fn, name="custom"):
        return cls(kind="custom", fn=fn, name=name)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "zero":
            return np.zeros(len(pts))
        if self.kind == "radial_power":
            return self.c * np.linalg.norm(pts, axis=1) ** self.p
        out = np.asarray(self.fn(pts), dtype=float)
        if np.any(out < 0):
            raise ValueError(f"candidate {self.name} takes negative values")
        return out


def paper_candidate(k):
    """The candidate used in the existence proofs: ``gamma/2 |x|^beta`` for
    IMH, ``|x|^2 / (4 eps)`` for MALA.  Random walks have none."""
    p = k.proposal
    if isinstance(p, IndependentProposal):
        return LyapunovCandidate.radial_power(p.gamma / 2.0, p.beta)
    if isinstance(p, MalaProposal):
        return LyapunovCandidate.radial_power(1.0 / (4.0 * p.epsilon), 2.0)
    return None


def imh_property_a_bound(k):
    """Lower bound ``-log(1 + C ∫ exp(-gamma/2 |y|^beta) dy)`` on ``inf F_U``
    for the IMH candidate; the constant equals ``2**(d/beta)``."""
    p = k.proposal
    if not isinstance(p, IndependentProposal):
        raise DomainError("bound is specific to independence proposals")
    return -math.log1p(2.0 ** (k.dim / p.beta))


# --------------------------------------------------------------------------
# F_U


def _log_exp_integral(k, U, x0):
    """log ∫ exp(U(y) - U(x)) a(x, y) dy and its relative error."""
    u_x = float(U(x0[None, :])[0])
    if k.dim == 1:

        def logf(ys):
            return U(ys) - u_x + _log_a(k, x0, ys)

        return _integrate_wide_1d(k, x0, logf)
    ys, lv = _mc_log_varpi(k, x0)
    logw = U(ys) - u_x + lv
    m = np.max(logw)
    if not np.isfinite(m):
        return -np.inf, 0.0
    w = np.exp(logw - m)
    mean = float(np.mean(w))
    return math.log(mean) + m, float(np.std(w) / math.sqrt(len(w))) / mean


def exp_integral(k, U, x, full_output=False):
    """``∫ exp(U(y) - U(x)) a(x, y) dy``.

    Raises :class:`DivergentIntegralError` when the integrand is still
    growing at the edge of every domain tried.
    """
    x0 = _check_current(k, x)
    log_v, rel = _log_exp_integral(k, U, x0)
    v = math.exp(log_v) if log_v < 709 else math.inf
    if full_output:
        return v, {"log_value": log_v, "error": v * rel, "rel_error": rel}
    return v


def evaluate_F_U(k, U, x, full_output=False):
    """``F_U(x) = -log( ∫ exp(U(y) - U(x)) a(x, y) dy + r(x) )``.

    The rejection term is integrated directly (not as ``1 - acceptance``) so
    that ``F_U`` stays accurate when both terms are tiny.  With
    ``full_output`` a dict with ``lower``/``upper`` (quadrature error band),
    ``log_exp_integral`` and ``rejection`` is returned as well.
    """
    x0 = _check_current(k, x)
    log_e, rel = _log_exp_integral(k, U, x0)
    r, r_info = rejection_direct(k, x0, full_output=True)
    log_r = math.log(r) if r > 0 else -math.inf
    value = -float(np.logaddexp(log_e, log_r))
    if not full_output:
        return value
    e = math.exp(log_e) if log_e < 709 else math.inf
    total = e + r
    spread = e * rel + r_info["error"]
    lower = -math.log(total + spread) if np.isfinite(total + spread) else -math.inf
    upper = -math.log(total - spread) if total > spread else math.inf
    return value, {
        "lower": lower,
        "upper": upper,
        "log_exp_integral": log_e,
        "rejection": r,
    }


# --------------------------------------------------------------------------
# limit probes


def default_radii(dim):
    return [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0] if dim == 1 else [1.0, 2.0, 5.0, 10.0]


def default_directions(dim, n_random=8, seed=0):
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_random, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


@dataclass(frozen=True)
class ProbeThresholds:
    """Finite-radius stand-ins for the limits.

    ``holds``: last value within ``proximity`` of the limit and the tail
    (radii from the median on) moving monotonically toward it, up to
    ``monotone_slack``.  ``fails``: last value more than ``separation`` away
    and flat (the last radius step moves it toward the limit by at most
    ``proximity``) or moving away.  Anything else is ``inconclusive``.
    """

    proximity: float = 0.02
    separation: float = 0.05
    monotone_slack: float = 1e-6


def _row_verdict(row, limit, thr):
    row = np.asarray(row, dtype=float)
    if np.any(np.isnan(row)):
        return "inconclusive"
    toward = 1.0 if limit == 1.0 else -1.0
    tail = row[len(row) // 2 :]
    last = row[-1]
    if np.isinf(last):
        return "fails"
    gap = abs(last - limit)
    if gap <= thr.proximity and np.all(toward * np.diff(tail) >= -thr.monotone_slack):
        return "holds"
    if gap > thr.separation and toward * (last - row[-2]) <= thr.proximity:
        return "fails"
    return "inconclusive"


def limit_verdict(values, limit, thr=ProbeThresholds()):
    """Combine per-direction verdicts: holds only if every ray holds, fails if any ray fails."""
    rows = [_row_verdict(r, limit, thr) for r in np.atleast_2d(values)]
    if any(v == "fails" for v in rows):
        return "fails"
    if all(v == "holds" for v in rows):
        return "holds"
    return "inconclusive"


@dataclass
class LimitProbeReport:
    """Values on the grid (direction × radius) plus the two verdicts.

    Matrices have shape ``(len(directions), len(radii))``.  Divergent
    exponential integrals are stored as ``inf``; failed quadratures as NaN
    with the message in ``failures``.
    """

    radii: np.ndarray
    directions: np.ndarray
    acceptance_mass_values: np.ndarray
    acceptance_errors: np.ndarray
    exp_integral_values: np.ndarray
    exp_integral_errors: np.ndarray
    F_U_values: np.ndarray
    verdict_intAto1: str
    verdict_intexpUato0: str
    family: str = ""
    params: dict = field(default_factory=dict)
    candidate: str = ""
    failures: list = field(default_factory=list)

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if len(r) > 1 and not np.all(np.diff(r) > 0):
            raise ValueError("radii must be strictly increasing")
        norms = np.linalg.norm(np.atleast_2d(self.directions), axis=1)
        if not np.allclose(norms, 1.0, atol=1e-12, rtol=0):
            raise ValueError("directions must be unit vectors")

    def to_csv(self, path):
        """Columns: radius, direction, acceptance_mass, acceptance_error,
        exp_integral, exp_integral_error, F_U."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(
                ["radius", "direction", "acceptance_mass", "acceptance_error", "exp_integral", "exp_integral_error", "F_U"]
            )
            for j in range(len(self.directions)):
                for i, rho in enumerate(self.radii):
                    w.writerow(
                        [format(rho, FLOAT_FMT), j]
                        + [
                            format(float(m[j, i]), FLOAT_FMT)
                            for m in (
                                self.acceptance_mass_values,
                                self.acceptance_errors,
                                self.exp_integral_values,
                                self.exp_integral_errors,
                                self.F_U_values,
                            )
                        ]
                    )


def _probe_point(k, U, x):
    out = {"A": np.nan, "A_err": np.nan, "E": np.nan, "E_err": np.nan, "F": np.nan, "fail": None}
    try:
        out["A"], info = acceptance_mass(k, x, full_output=True)
        out["A_err"] = info["error"]
    except QuadratureError as exc:
        out["fail"] = f"acceptance at {x.tolist()}: {exc}"
        return out
    try:
        x0 = _check_current(k, x)
        log_e, rel = _log_exp_integral(k, U, x0)
        e = math.exp(log_e) if log_e < 709 else math.inf
        out["E"], out["E_err"] = e, e * rel
        r = rejection_direct(k, x0)
        out["F"] = -float(np.logaddexp(log_e, math.log(r) if r > 0 else -math.inf))
    except DivergentIntegralError as exc:
        out["E"], out["E_err"], out["F"] = math.inf, math.inf, -math.inf
        out["fail"] = f"divergent exp-integral at {x.tolist()}: {exc}"
    except QuadratureError as exc:
        out["fail"] = f"exp-integral at {x.tolist()}: {exc}"
    return out


def probe_limits(k, U, radii=None, directions=None, thresholds=ProbeThresholds(), threads=1):
    """Evaluate acceptance mass, exp-integral and ``F_U`` at ``x = rho v``.

    ``radii`` must be strictly increasing with at least three entries.  The
    default directions are ``±1`` in one dimension and eight seeded random
    unit vectors otherwise.
    """
    radii = np.asarray(default_radii(k.dim) if radii is None else radii, dtype=float)
    if len(radii) < 3 or not np.all(np.diff(radii) > 0) or radii[0] <= 0:
        raise ValueError("need at least three strictly increasing positive radii")
    dirs = default_directions(k.dim) if directions is None else np.atleast_2d(np.asarray(directions, dtype=float))
    if k.dim == 1:
        dirs = dirs.reshape(-1, 1)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    jobs = [(j, i, rho * dirs[j]) for j in range(len(dirs)) for i, rho in enumerate(radii)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda job: _probe_point(k, U, job[2]), jobs))
    else:
        results = [_probe_point(k, U, job[2]) for job in jobs]
    shape = (len(dirs), len(radii))
    mats = {key: np.full(shape, np.nan) for key in ("A", "A_err", "E", "E_err", "F")}
    failures = []
    for (j, i, _), res in zip(jobs, results):
        for key in mats:
            mats[key][j, i] = res[key]
        if res["fail"]:
            failures.append(res["fail"])
    verdict_e = limit_verdict(mats["E"], 0.0, thresholds)
    if np.any(np.isinf(mats["E"])):
        verdict_e = "fails"
    return LimitProbeReport(
        radii=radii,
        directions=dirs,
        acceptance_mass_values=mats["A"],
        acceptance_errors=mats["A_err"],
        exp_integral_values=mats["E"],
        exp_integral_errors=mats["E_err"],
        F_U_values=mats["F"],
        verdict_intAto1=limit_verdict(mats["A"], 1.0, thresholds),
        verdict_intexpUato0=verdict_e,
        family=k.family,
        params=kernel_params(k),
        candidate=U.name,
        failures=failures,
    )


def half_space_acceptance(k, x):
    """``∫_{<t, x> >= 0} varpi(x, x + t) Jhat(t) dt`` for a random-walk kernel.

    Always at most 1/2 for symmetric increments.  At ``x = 0`` the half-space
    is all of R^d and the full acceptance mass is returned.
    """
    if not isinstance(k.proposal, RandomWalkProposal):
        raise DomainError("half-space acceptance is defined for random-walk proposals")
    x0 = _check_current(k, x)
    if not np.any(x0):
        return acceptance_mass(k, x0)
    if k.dim == 1:
        rad = proposal_truncation_radius(k.proposal, 1, k.quad.truncation_mass)
        lo, hi = (x0[0], x0[0] + rad) if x0[0] > 0 else (x0[0] - rad, x0[0])
        grid = np.linspace(lo, hi, 4001)
        delta, _ = _log_ratio(k, x0, grid[:, None])
        sign = np.sign(delta)
        pts = [0.5 * (grid[i] + grid[i + 1]) for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]]
        val, err = _quad_log(lambda ys: _log_a(k, x0, ys), lo, hi, pts, k.quad, 0.0)
        if not err <= k.quad.abs_tol:
            raise QuadratureError(f"half-space integral did not converge at x={x0}", err)
        return val
    ys, lv = _mc_log_varpi(k, x0)
    mask = (ys - x0) @ x0 >= 0
    return float(np.mean(np.where(mask, np.exp(lv), 0.0)))


# --------------------------------------------------------------------------
# analytic classification


@dataclass(frozen=True)
class RegimeVerdict:
    """Outcome of the analytic classification.

    ``exists_lyapunov`` is ``yes``, ``no`` or ``boundary``; ``on_boundary``
    marks cells on the edge of a regime even when the answer is settled.
    """

    family: str
    params: dict
    exists_lyapunov: str
    clause: str
    ldp_conclusion: str
    on_boundary: bool = False
    note: str = ""

    def __post_init__(self):
        if self.ldp_conclusion == "LDP_holds" and self.exists_lyapunov != "yes":
            raise ValueError("LDP conclusion requires an existing Lyapunov function")

    def to_record(self):
        """One-line JSON record."""
        return json.dumps(asdict(self), sort_keys=True)


def _close(a, b):
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-14)


def _require_positive(params, names):
    for n in names:
        if n not in params:
            raise ValueError(f"missing parameter {n!r}")
        if not float(params[n]) > 0:
            raise ValueError(f"parameter {n!r} must be positive, got {params[n]!r}")
    return [float(params[n]) for n in names]


def classify_regime(family, params):
    """Classify whether a Lyapunov function exists for the given sampler.

    ``family`` is ``IMH`` (params ``eta, alpha, gamma, beta``), ``MALA``
    (``gamma, beta, epsilon``; target ``exp(-gamma |x|^beta)``) or ``RWM``.
    """
    fam = family.upper()
    params = dict(params)
    if fam == "IMH":
        eta, alpha, gamma, beta = _require_positive(params, ["eta", "alpha", "gamma", "beta"])
        if alpha > beta and not _close(alpha, beta):
            return RegimeVerdict(fam, params, "yes", "IMH existence criterion: alpha > beta", "LDP_holds")
        if _close(alpha, beta):
            if _close(eta, gamma):
                return RegimeVerdict(
                    fam,
                    params,
                    "boundary",
                    "IMH existence criterion: alpha = beta and eta = gamma, edge between the strict and non-strict forms of the criterion",
                    "unknown",
                    on_boundary=True,
                    note="proposal equals target; acceptance mass is identically 1",
                )
            if eta > gamma:
                return RegimeVerdict(fam, params, "yes", "IMH existence criterion: alpha = beta and eta > gamma", "LDP_holds")
            return RegimeVerdict(fam, params, "no", "IMH existence criterion fails: alpha = beta and eta < gamma", "unknown")
        return RegimeVerdict(fam, params, "no", "IMH existence criterion fails: alpha < beta", "unknown")
    if fam == "MALA":
        gamma, beta, eps = _require_positive(params, ["gamma", "beta", "epsilon"])
        eg = eps * gamma
        if _close(beta, 2.0):
            if _close(eg, 2.0):
                return RegimeVerdict(
                    fam,
                    params,
                    "no",
                    "MALA quadratic-tail lemma: beta = 2 and eps*gamma = 2, acceptance mass tends to 1/2",
                    "unknown",
                    on_boundary=True,
                )
            if eg < 2.0:
                return RegimeVerdict(fam, params, "yes", "MALA existence criterion: beta = 2 and eps*gamma < 2", "LDP_holds")
            return RegimeVerdict(fam, params, "no", "MALA quadratic-tail lemma: beta = 2 and eps*gamma > 2, acceptance mass tends to 0", "unknown")
        if 1.0 < beta < 2.0 and not _close(beta, 1.0):
            return RegimeVerdict(fam, params, "yes", "MALA existence criterion: 1 < beta < 2", "LDP_holds")
        if _close(beta, 1.0):
            return RegimeVerdict(
                fam,
                params,
                "no",
                "MALA linear-tail lemma: beta = 1, no U makes the exp-integral vanish",
                "unknown",
                on_boundary=True,
                note="the chain can still be geometrically ergodic",
            )
        if beta < 1.0:
            return RegimeVerdict(
                fam, params, "no", "MALA light-drift lemma: 0 < beta < 1, no U makes the exp-integral vanish", "unknown"
            )
        return RegimeVerdict(fam, params, "no", "MALA heavy-drift lemma: beta > 2, acceptance mass tends to 0", "unknown")
    if fam == "RWM":
        for n, v in params.items():
            if isinstance(v, (int, float)) and not v > 0:
                raise ValueError(f"parameter {n!r} must be positive, got {v!r}")
        return RegimeVerdict(fam, params, "no", "RWM impossibility: the two limits cannot hold together for symmetric increments", "unknown")
    raise ValueError(f"unknown family {family!r}")


def kernel_params(k):
    """Parameters of ``k`` in the naming used by :func:`classify_regime`."""
    t, p = k.target, k.proposal
    if isinstance(p, IndependentProposal):
        return {"eta": t.eta, "alpha": t.alpha, "gamma": p.gamma, "beta": p.beta}
    if isinstance(p, MalaProposal):
        return {"gamma": t.eta, "beta": t.alpha, "epsilon": p.epsilon}
    inc = p.increment
    out = {"eta": t.eta, "alpha": t.alpha}
    if isinstance(inc, GaussianIncrement):
        out["scale"] = inc.scale
    elif isinstance(inc, UniformBallIncrement):
        out["radius"] = inc.radius
    return out


@dataclass(frozen=True)
class CrossCheck:
    status: str
    diagnostic: str = ""


def cross_validate(verdict, report):
    """Compare an analytic verdict with a numeric probe of the same kernel.

    ``consistent`` when ``yes`` meets two ``holds``, or ``no`` meets at least
    one ``fails``; ``inconclusive`` on a mismatch of kernels, an analytic
    boundary cell, or any inconclusive probe verdict.
    """
    if verdict.family != report.family:
        return CrossCheck("inconclusive", f"family mismatch: {verdict.family} vs {report.family}")
    for key, val in verdict.params.items():
        if key in report.params and isinstance(val, (int, float)) and not _close(float(val), float(report.params[key])):
            return CrossCheck("inconclusive", f"parameter {key} differs: {val} vs {report.params[key]}")
    missing = [key for key in report.params if key not in verdict.params and verdict.family != "RWM"]
    if missing:
        return CrossCheck("inconclusive", f"verdict lacks parameters {missing}")
    numeric = (report.verdict_intAto1, report.verdict_intexpUato0)
    if verdict.exists_lyapunov == "boundary":
        return CrossCheck("inconclusive", f"analytic boundary cell; numeric verdicts {numeric}")
    if verdict.exists_lyapunov == "yes":
        if numeric == ("holds", "holds"):
            return CrossCheck("consistent")
        if "inconclusive" in numeric:
            return CrossCheck("inconclusive", f"numeric verdicts {numeric}")
        return CrossCheck("inconsistent", f"analytic yes but numeric verdicts {numeric}")
    if "fails" in numeric:
        return CrossCheck("consistent")
    if "inconclusive" in numeric:
        return CrossCheck("inconclusive", f"numeric verdicts {numeric}")
    return CrossCheck("inconsistent", f"analytic no but numeric verdicts {numeric}")
