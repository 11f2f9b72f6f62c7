"""Onsager-Machlup functionals and mode classification.

An Onsager-Machlup functional assigns to each point of a measure's
effective domain a value whose differences are the negative logs of
small-ball mass-ratio limits; off the domain it is extended by +inf.
This module builds these functionals for Gaussian, Besov-1, and generic
1-d measures, and provides the empirical probes that tie them back to
ball masses: difference checks, vanishing-ratio (domain) checks, and
strong/weak mode classification.

All functional values are only meaningful up to an additive constant;
every check here compares differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import InputError
from .measures import (BallRatioEstimate, BesovMeasure, Density1D, GaussianMeasure,
                       RatioOpts, BallOpts, ball_mass, ball_ratio_curve, default_space)
from .spaces import RANK_TOL, WeightedSeqSpace, _as_vector, in_range_sqrt, \
    sqrt_pinv_apply, weighted_norm


@dataclass
class OmFunctional:
    """Extended-real functional with an explicit effective domain.

    ``eval`` returns +inf exactly where ``domain_test`` fails.  The
    anchor is a reference point with finite value (the minimiser for the
    measures constructed here).  ``smooth_part``/``nonsmooth_part``, when
    set, split ``eval`` for composite optimisation.
    """

    eval: Callable[[np.ndarray], float]
    domain_test: Callable[[np.ndarray], bool]
    anchor: np.ndarray
    smooth_part: Optional[Callable] = None
    nonsmooth_part: Optional[Callable] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.anchor = np.atleast_1d(np.asarray(self.anchor, dtype=float))
        if not math.isfinite(self.eval(self.anchor)):
            raise InputError("anchor must have a finite functional value")

    def __call__(self, u) -> float:
        return self.eval(u)


def gaussian_om(mu: GaussianMeasure, rank_tol: float = RANK_TOL) -> OmFunctional:
    """Half the squared Cameron-Martin norm of u - mean.

    Finite exactly on mean + range(cov^(1/2)); the mean is the anchor
    and unique minimiser.
    """
    cov, mean = mu.cov, mu.mean

    def inside(u) -> bool:
        return in_range_sqrt(cov, _as_vector(u, mu.dim) - mean, rank_tol)

    def value(u) -> float:
        v = _as_vector(u, mu.dim) - mean
        if not in_range_sqrt(cov, v, rank_tol):
            return math.inf
        w = sqrt_pinv_apply(cov, v, rank_tol)
        return 0.5 * float(w @ w)

    return OmFunctional(eval=value, domain_test=inside, anchor=mean,
                        smooth_part=value,
                        meta={"kind": "gaussian", "norm": "ambient-l2"})


def besov_tail_bound(mu: BesovMeasure, coef_bound: float, decay: float) -> float:
    """Upper bound for the functional mass beyond the truncation.

    For coefficients dominated by coef_bound * k^(-decay), the tail
    sum_{k>K} |u_k|/gamma_k is at most coef_bound * integral_K^inf
    x^(s/d - 1/2 - decay) dx, finite iff the exponent is < -1.
    """
    a = mu.s / mu.d - 0.5 - decay
    if a >= -1:
        return math.inf
    return coef_bound * mu.dim ** (a + 1) / (-a - 1)


def besov_om(mu: BesovMeasure) -> OmFunctional:
    """Weighted l^1 norm sum_k |u_k| / gamma_k on the truncation.

    Every truncated vector is summable, so the domain test always
    passes at finite dimension; the +inf branch of the untruncated
    functional is represented by the analytic tail bound in ``meta``.
    """
    space = mu.coefficient_space()

    def value(u) -> float:
        return weighted_norm(u, space)

    return OmFunctional(
        eval=value, domain_test=lambda u: True, anchor=np.zeros(mu.dim),
        nonsmooth_part=value,
        meta={"kind": "besov1", "norm": "l1-gamma",
              "tail_bound": lambda coef_bound, decay: besov_tail_bound(mu, coef_bound, decay)},
    )


def density_om(measure: Density1D, anchor: float) -> OmFunctional:
    """Negative log density of a 1-d measure, up to an additive constant."""

    def inside(u) -> bool:
        x = float(np.asarray(u).reshape(()))
        return measure.pdf(x) > 0

    def value(u) -> float:
        x = float(np.asarray(u).reshape(()))
        p = measure.pdf(x)
        return -math.log(p) if p > 0 else math.inf

    return OmFunctional(eval=value, domain_test=inside,
                        anchor=np.atleast_1d(float(anchor)),
                        meta={"kind": "density1d", "norm": "abs"})


def posterior_om(prior_om: OmFunctional, phi) -> OmFunctional:
    """Add a real-valued potential to a prior functional.

    The domain is unchanged; the potential joins the smooth part.
    ``phi`` may be a bare callable or carry an ``eval`` attribute.
    """
    phi_eval = getattr(phi, "eval", phi)
    prior_smooth = prior_om.smooth_part

    def value(u) -> float:
        base = prior_om.eval(u)
        return base if math.isinf(base) else base + float(phi_eval(u))

    def smooth(u) -> float:
        s = prior_smooth(u) if prior_smooth is not None else 0.0
        return s + float(phi_eval(u))

    return OmFunctional(eval=value, domain_test=prior_om.domain_test,
                        anchor=prior_om.anchor, smooth_part=smooth,
                        nonsmooth_part=prior_om.nonsmooth_part,
                        meta={**prior_om.meta, "reweighted": True})


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeOpts:
    abs_tol: float = 1e-2
    wide_ci_factor: float = 0.5    # CI halfwidth above this fraction of the target -> inconclusive
    ratio: RatioOpts = field(default_factory=RatioOpts)


@dataclass(frozen=True)
class OmDifferenceReport:
    x1: np.ndarray
    x2: np.ndarray
    expected: float                # exp(I(x2) - I(x1))
    curve: BallRatioEstimate
    tolerance: float
    verdict: str                   # pass | fail | inconclusive

    def to_dict(self) -> dict:
        return {"expected": float(self.expected), "limit": float(self.curve.extrapolated_limit),
                "ci": [float(c) for c in self.curve.ci], "tolerance": float(self.tolerance),
                "verdict": self.verdict, "norm_p": self.curve.norm_p}


def om_difference_check(measure, om: OmFunctional, x1, x2, radii,
                        space: Optional[WeightedSeqSpace] = None,
                        opts: Optional[ProbeOpts] = None) -> OmDifferenceReport:
    """Check that the ball-ratio limit equals exp(I(x2) - I(x1))."""
    opts = opts or ProbeOpts()
    i1, i2 = om.eval(x1), om.eval(x2)
    if not (math.isfinite(i1) and math.isfinite(i2)):
        raise InputError("both points must lie in the functional's effective domain")
    expected = math.exp(i2 - i1)
    curve = ball_ratio_curve(measure, x1, x2, radii, space, opts.ratio)
    half = 0.5 * (curve.ci[1] - curve.ci[0])
    tol = half + opts.abs_tol
    diff = abs(curve.extrapolated_limit - expected)
    if not math.isfinite(curve.extrapolated_limit):
        verdict = "inconclusive"
    elif diff <= tol:
        verdict = "pass"
    elif half > opts.wide_ci_factor * max(expected, 1e-12):
        verdict = "inconclusive"
    else:
        verdict = "fail"
    return OmDifferenceReport(np.atleast_1d(x1), np.atleast_1d(x2), expected, curve, tol, verdict)


@dataclass(frozen=True)
class MPropertyEntry:
    point: np.ndarray
    ratios: np.ndarray
    min_ratio: float
    decreasing_fraction: float
    verdict: str

    def to_dict(self) -> dict:
        return {"point": list(map(float, np.atleast_1d(self.point))),
                "ratios": list(map(float, self.ratios)),
                "min_ratio": float(self.min_ratio),
                "decreasing_fraction": float(self.decreasing_fraction),
                "verdict": self.verdict}


@dataclass(frozen=True)
class MPropertyReport:
    anchor: np.ndarray
    entries: list

    @property
    def all_pass(self) -> bool:
        return all(e.verdict == "pass" for e in self.entries)

    def to_dict(self) -> dict:
        return {"anchor": list(map(float, np.atleast_1d(self.anchor))),
                "entries": [e.to_dict() for e in self.entries],
                "all_pass": self.all_pass}


def m_property_probe(measure, om: OmFunctional, outside_points: Sequence, radii,
                     space: Optional[WeightedSeqSpace] = None,
                     opts: Optional[ProbeOpts] = None) -> MPropertyReport:
    """Check that ratio curves against the anchor vanish off the domain.

    For each point that fails the domain test, the curve
    mu(B_r(x)) / mu(B_r(anchor)) should trend down toward 0 over the
    radius schedule; the report records the smallest achieved ratio and
    the fraction of decreasing steps.
    """
    opts = opts or ProbeOpts()
    entries = []
    for x in outside_points:
        if om.domain_test(x):
            raise InputError(f"point {x!r} passes the domain test; probe expects outside points")
        curve = ball_ratio_curve(measure, x, om.anchor, radii, space, opts.ratio)
        ratios = np.nan_to_num(curve.ratios, nan=0.0)
        steps = np.diff(ratios)
        slack = 5.0 * np.maximum(curve.stderr[1:], curve.stderr[:-1])
        dec = float(np.mean(steps <= slack)) if len(steps) else 1.0
        min_ratio = float(np.min(ratios))
        start = max(ratios[0], 1e-300)
        ok = dec >= 0.8 and min_ratio <= 0.2 * start
        entries.append(MPropertyEntry(np.atleast_1d(x), ratios, min_ratio, dec,
                                      "pass" if ok else "fail"))
    return MPropertyReport(om.anchor, entries)


@dataclass(frozen=True)
class ModeClassification:
    """Three-valued strong/weak mode verdicts for one candidate point.

    The supremum mass M_r is approximated over a finite competitor set
    plus local refinement, so a "yes" is always relative to that
    approximation; the caveat field records this.
    """

    candidate: np.ndarray
    radii: np.ndarray
    strong_ratio_curve: np.ndarray
    strong_ratio_stderr: np.ndarray
    weak_worst_ratio: float
    strong: str
    global_weak: str
    norm_p: float
    caveat: str = "sup over competitor set + local refinement, not over all of X"

    def to_dict(self) -> dict:
        return {"candidate": list(map(float, np.atleast_1d(self.candidate))),
                "radii": list(map(float, self.radii)),
                "strong_ratio_curve": list(map(float, self.strong_ratio_curve)),
                "strong_ratio_stderr": list(map(float, self.strong_ratio_stderr)),
                "weak_worst_ratio": float(self.weak_worst_ratio),
                "strong": self.strong, "global_weak": self.global_weak,
                "norm_p": float(self.norm_p), "caveat": self.caveat}


@dataclass(frozen=True)
class ClassifyOpts:
    strong_tol: float = 0.05       # extrapolated limit >= 1 - tol -> strong yes
    dip_tol: float = 0.05          # curve below 1 - max(5 se, dip_tol) -> strong no
    weak_tol: float = 0.05
    refine: bool = True
    nm_iters: int = 50
    ratio: RatioOpts = field(default_factory=RatioOpts)
    ball: BallOpts = field(default_factory=BallOpts)


def _refined_sup_mass(measure, best, r, space, opts: ClassifyOpts) -> float:
    """Nelder-Mead refinement of the ball mass around the best competitor."""
    best = np.atleast_1d(np.asarray(best, dtype=float))

    def neg_mass(w):
        return -ball_mass(measure, w, r, space, opts.ball).estimate

    res = minimize(neg_mass, best, method="Nelder-Mead",
                   options={"maxiter": opts.nm_iters, "xatol": 1e-8, "fatol": 1e-12})
    return max(-float(res.fun), -neg_mass(best))


def classify_mode(measure, candidate, competitor_set: Sequence, radii,
                  space: Optional[WeightedSeqSpace] = None,
                  opts: Optional[ClassifyOpts] = None) -> ModeClassification:
    """Strong and global-weak mode verdicts for a candidate point.

    Strong: the candidate's ball mass over the approximate supremum mass
    must tend to 1.  Weak: no competitor's extrapolated mass-ratio limit
    against the candidate may exceed 1.  Verdicts are three-valued with
    noise-aware thresholds; a dip of the strong curve below
    1 - max(5 stderr, dip_tol) at any radius is a "no" witness.
    """
    opts = opts or ClassifyOpts()
    space = space or default_space(measure)
    radii = np.asarray(radii, dtype=float)
    cand = _as_vector(candidate, space.dim)

    cand_mass = np.empty(len(radii))
    cand_se = np.empty(len(radii))
    sup_mass = np.empty(len(radii))
    sup_se = np.empty(len(radii))
    for i, r in enumerate(radii):
        bm = ball_mass(measure, cand, float(r), space, opts.ball)
        cand_mass[i], cand_se[i] = bm.estimate, bm.stderr
        if cand_mass[i] <= 0:
            raise InputError("candidate has zero ball mass; it must lie in the support")
        best_est, best_se, best_w = bm.estimate, bm.stderr, cand
        for w in competitor_set:
            bw = ball_mass(measure, w, float(r), space, opts.ball)
            if bw.estimate > best_est:
                best_est, best_se, best_w = bw.estimate, bw.stderr, w
        if opts.refine:
            best_est = max(best_est, _refined_sup_mass(measure, best_w, float(r), space, opts))
        sup_mass[i], sup_se[i] = best_est, best_se

    strong_curve = cand_mass / sup_mass
    strong_se = strong_curve * np.sqrt((cand_se / cand_mass) ** 2 + (sup_se / sup_mass) ** 2)

    # strong verdict: a dip below the noise-aware threshold at any radius
    # is a witness against the limit being 1
    dip_thresh = 1.0 - np.maximum(5.0 * strong_se, opts.dip_tol)
    dipped = bool(np.any(strong_curve < dip_thresh))
    n_tail = min(3, len(radii))
    tail_limit = float(np.mean(strong_curve[-n_tail:]))  # radii are decreasing
    if dipped:
        strong = "no"
    elif tail_limit >= 1.0 - opts.strong_tol:
        strong = "yes"
    else:
        strong = "inconclusive"

    # weak verdict: worst extrapolated limsup over competitors; only the
    # fit window of smallest radii enters, so bumps pinned at a fixed
    # competitor-dependent radius do not masquerade as limsup mass
    window = slice(len(radii) - min(opts.ratio.fit_points, len(radii)), len(radii))
    worst = 0.0
    for w in competitor_set:
        if np.allclose(_as_vector(w, space.dim), cand):
            continue
        curve = ball_ratio_curve(measure, w, cand, radii, space, opts.ratio)
        vals = curve.ratios[window]
        vals = vals[np.isfinite(vals)]
        limsup_est = max(float(np.max(vals, initial=0.0)),
                         curve.extrapolated_limit if math.isfinite(curve.extrapolated_limit) else 0.0)
        worst = max(worst, limsup_est)
    if worst <= 1.0 + opts.weak_tol:
        weak = "yes"
    elif worst > 1.0 + max(opts.weak_tol, 5.0 * float(np.max(strong_se))):
        weak = "no"
    else:
        weak = "inconclusive"

    # a strong mode is always a global weak mode; reconcile contradictions
    if strong == "yes" and weak == "no":
        strong = "inconclusive"

    return ModeClassification(cand, radii, strong_curve, strong_se, worst,
                              strong, weak, space.p)
