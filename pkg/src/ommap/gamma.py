"""Variational-convergence probes for sequences of functionals.

Nothing here proves convergence: the probes are falsification tools.
The lower-bound probe searches for witness sequences that break the
liminf inequality; recovery sequences are built from the explicit
constructions available for Gaussian and Besov-1 families; the
equicoercivity probe samples sublevel sets and checks the analytic
compact bound; the mode-convergence check clusters minimiser sequences
and compares cluster points against minimisers of the limit.

Every "pass" verdict records how many paths or samples were tried, and
every "fail" carries a concrete witness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._seeds import child_rng
from .errors import InputError
from .measures import BesovMeasure, GaussianMeasure, _uniform_pball
from .om import OmFunctional, besov_om, gaussian_om
from .spaces import _as_vector, sqrt_pinv_apply, in_range_sqrt


@dataclass
class FunctionalSequence:
    """Indexed family of functionals with a designated limit.

    ``kind`` and ``measures`` retain the construction when the family
    comes from Gaussian or Besov-1 measures, enabling
    construction-aware probes (sublevel sampling, recovery sequences).
    """

    indices: list
    members: list
    limit: OmFunctional
    kind: str = "generic"
    measures: Optional[list] = None
    limit_measure: Optional[object] = None

    def __post_init__(self):
        if len(self.indices) != len(self.members):
            raise InputError("indices and members must have equal length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise InputError("indices must be strictly increasing")


def gaussian_om_family(measures: Sequence[GaussianMeasure], limit_measure: GaussianMeasure,
                       indices: Optional[Sequence[int]] = None) -> FunctionalSequence:
    idx = list(indices) if indices is not None else list(range(1, len(measures) + 1))
    return FunctionalSequence(idx, [gaussian_om(m) for m in measures],
                              gaussian_om(limit_measure), kind="gaussian",
                              measures=list(measures), limit_measure=limit_measure)


def besov_om_family(measures: Sequence[BesovMeasure], limit_measure: BesovMeasure,
                    indices: Optional[Sequence[int]] = None) -> FunctionalSequence:
    idx = list(indices) if indices is not None else list(range(1, len(measures) + 1))
    return FunctionalSequence(idx, [besov_om(m) for m in measures],
                              besov_om(limit_measure), kind="besov1",
                              measures=list(measures), limit_measure=limit_measure)


# ---------------------------------------------------------------------------
# liminf probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LiminfOpts:
    n_random: int = 64
    alphas: tuple = (0.5, 1.0, 2.0)
    magnitude_range: tuple = (0.5, 2.0)
    window_distance: float = 0.03  # random paths reach this distance at the last index
    tol: float = 1e-3
    window_frac: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class LiminfViolation:
    path_name: str
    margin: float
    at_index: int
    witness_point: np.ndarray

    def to_dict(self) -> dict:
        return {"path": self.path_name, "margin": float(self.margin),
                "at_index": int(self.at_index),
                "witness_point": list(map(float, np.atleast_1d(self.witness_point)))}


@dataclass(frozen=True)
class LiminfReport:
    x: np.ndarray
    n_paths: int
    violations: list
    verdict: str
    note: str = ""

    def to_dict(self) -> dict:
        return {"x": list(map(float, np.atleast_1d(self.x))), "n_paths": self.n_paths,
                "violations": [v.to_dict() for v in self.violations],
                "verdict": self.verdict, "note": self.note}


def default_paths(seq: FunctionalSequence, x: np.ndarray, opts: LiminfOpts):
    """Random decaying-direction paths plus construction-aware ones.

    Random paths move along fixed unit directions with magnitudes
    c * n^(-alpha); c is scaled so the trailing window actually sits
    near x, otherwise slow decay rates never inform the limit.
    Adversarial paths head along coordinate axes and toward the limit
    anchor (the low-value direction) at the unscaled 1/n rate, which is
    the schedule that exposes moving-bump constructions.
    """
    rng = child_rng(opts.seed, "liminf-paths")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dim = x.size
    n_arr = np.asarray(seq.indices, dtype=float)
    n_last = float(seq.indices[-1])
    paths = []

    def make(name, direction, c, alpha):
        d = np.asarray(direction, dtype=float)
        nrm = np.linalg.norm(d)
        if nrm == 0:
            return
        d = d / nrm
        pts = x[None, :] + (c * n_arr ** (-alpha))[:, None] * d[None, :]
        paths.append((name, pts))

    for j in range(opts.n_random):
        alpha = opts.alphas[j % len(opts.alphas)]
        c = float(rng.uniform(*opts.magnitude_range)) * opts.window_distance * n_last ** alpha
        make(f"random-{j}", rng.standard_normal(dim), c, alpha)
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = 1.0
        make(f"axis+{k}", e, 1.0, 1.0)
        make(f"axis-{k}", -e, 1.0, 1.0)
    anchor = np.atleast_1d(seq.limit.anchor)
    if anchor.size == dim:
        make("toward-anchor", anchor - x, 1.0, 1.0)
    paths.append(("constant", np.tile(x, (len(n_arr), 1))))
    return paths


def gamma_liminf_probe(seq: FunctionalSequence, x, paths=None,
                       opts: Optional[LiminfOpts] = None) -> LiminfReport:
    """Search for sequences x_n -> x with liminf F_n(x_n) < F(x).

    Raw finite-index values undershoot F(x) along any slowly decaying
    path whenever the functionals are merely smooth, so the probe
    estimates the liminf along each path instead: the deficit
    F(x) - F_n(x_n) over the trailing index window is extrapolated
    linearly to zero path distance, and a positive intercept beyond the
    tolerance is a violation, recorded with its witness point.
    """
    opts = opts or LiminfOpts()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    target = seq.limit.eval(x)
    if math.isinf(target):
        return LiminfReport(x, 0, [], "skipped",
                            note="limit value is +inf; a finite probe cannot certify it")
    if paths is None:
        paths = default_paths(seq, x, opts)
    start = int(len(seq.indices) * (1.0 - opts.window_frac))
    inv_n = 1.0 / np.asarray(seq.indices, dtype=float)[start:]
    at_x = np.array([seq.members[i].eval(x) for i in range(start, len(seq.members))])
    pointwise_ok = bool(np.all(np.isfinite(at_x)))
    if pointwise_ok:
        # persistent part of the pointwise gap F(x) - F_n(x), shared by all paths
        m_pointwise = _extrapolated_intercept(inv_n, target - at_x)
    violations = []
    for name, pts in paths:
        vals = np.array([seq.members[i].eval(pts[i]) for i in range(start, len(seq.members))])
        finite = np.isfinite(vals)
        if not np.any(finite):
            continue  # path escapes every domain: liminf is +inf
        dists = np.linalg.norm(pts[start:] - x, axis=1)[finite]
        if pointwise_ok:
            # same-member deficits isolate the moving-path effect from
            # the family's own (1/n) convergence drift
            margin = m_pointwise + _extrapolated_intercept(dists, (at_x - vals)[finite])
            deficits = at_x[finite] - vals[finite]
        else:
            deficits = target - vals[finite]
            margin = _extrapolated_intercept(dists, deficits)
        if margin > opts.tol:
            at_rel = int(np.argmax(deficits))
            at = start + np.flatnonzero(finite)[at_rel]
            violations.append(LiminfViolation(name, margin, seq.indices[at], pts[at]))
    verdict = "fail" if violations else "pass"
    return LiminfReport(x, len(paths), violations, verdict)


def _extrapolated_intercept(dists: np.ndarray, deficits: np.ndarray) -> float:
    """Persistent part of a deficit as the abscissa vanishes.

    Extrapolates with polynomial models of degree 1..3 and takes the
    smallest intercept: smooth functionals produce transient humps that
    a single linear fit would misread as persistent, while genuinely
    persistent (near-constant) deficits survive every fit.  With too
    few points the raw maximum deficit is returned.
    """
    order = np.argsort(dists)
    take = min(8, len(order))
    d, de = dists[order][:take], deficits[order][:take]
    if d[-1] < 1e-14:
        return float(np.max(de))
    scale = d[-1]
    powers = {1: [1], 2: [1, 2], 3: [1, 2, 3]}
    intercepts = []
    for degree in (1, 2, 3):
        if len(d) >= degree + 1:
            cols = [np.ones_like(d)] + [(d / scale) ** q for q in powers[degree]]
            coef, *_ = np.linalg.lstsq(np.column_stack(cols), de, rcond=None)
            intercepts.append(float(coef[0]))
    return min(intercepts) if intercepts else float(np.max(de))


# ---------------------------------------------------------------------------
# recovery sequences
# ---------------------------------------------------------------------------

def gaussian_recovery_sequence(mu_seq: Sequence[GaussianMeasure],
                               mu_limit: GaussianMeasure, u) -> list:
    """Explicit recovery sequence for a Gaussian family.

    With v the minimum-norm preimage of u - m under the limit root
    covariance, the n-th point is m_n + C_n^(1/2) v; its functional
    value never exceeds the limit value, by the minimum-norm property
    of the pseudoinverse.  Off the limit domain the constant sequence
    is returned (nothing to prove there).
    """
    u = _as_vector(u, mu_limit.dim)
    diff = u - mu_limit.mean
    if not in_range_sqrt(mu_limit.cov, diff):
        return [u.copy() for _ in mu_seq]
    v = sqrt_pinv_apply(mu_limit.cov, diff)
    return [m.mean + m.cov.sqrt_apply(v) for m in mu_seq]


def besov_recovery_sequence(mu_seq: Sequence[BesovMeasure],
                            mu_limit: BesovMeasure, u) -> list:
    """Explicit recovery sequence for a Besov-1 family.

    Coordinates are rescaled by gamma_n / gamma_limit, which keeps the
    weighted l^1 value exactly equal to the limit value.
    """
    u = _as_vector(u, mu_limit.dim)
    base = u / mu_limit.gamma
    return [m.gamma * base for m in mu_seq]


# ---------------------------------------------------------------------------
# equicoercivity probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquicoercivityEntry:
    t: float
    n_members: int
    samples_per_member: int
    violations: int
    bound: str
    verdict: str
    first_index_checked: Optional[int] = None
    note: str = ""

    def to_dict(self) -> dict:
        return {"t": float(self.t), "n_members": self.n_members,
                "samples_per_member": self.samples_per_member,
                "violations": self.violations, "bound": self.bound,
                "verdict": self.verdict,
                "first_index_checked": self.first_index_checked, "note": self.note}


def equicoercivity_probe(seq: FunctionalSequence, t: float, samples: int,
                         seed: int = 0) -> EquicoercivityEntry:
    """Sample sublevel sets {F_n <= t} and verify the compact bound.

    Gaussian family: points are m_n + C_n^(1/2) v with |v| <= sqrt(2t),
    and the bound checked is |C_n^(+1/2)(u - m_n)| <= sqrt(2t).
    Besov family: points are gamma_n-scaled l^1-ball samples, and the
    bound is the coordinate box |u_k| <= gammabar_k * t built from the
    limit smoothness minus half the tail exponent; members whose
    smoothness falls below that envelope are dropped, mirroring the
    finitely-many-dropped-members proviso of the limit theorem.
    """
    if t < 0:
        return EquicoercivityEntry(t, 0, 0, 0, "empty sublevel", "vacuous-pass")
    rng = child_rng(seed, "equicoercivity")
    shrink = 1.0 - 1e-9  # sample strictly inside the sublevel set
    if seq.kind == "gaussian":
        bound = math.sqrt(2.0 * t)
        viol = 0
        for mu in seq.measures:
            z = _uniform_pball(rng, samples, mu.dim, 2.0) * bound * shrink
            lam = mu.cov.eigenvalues
            basis = mu.cov.basis
            z_e = z if basis is None else z @ basis
            u_minus_m_e = z_e * np.sqrt(lam)
            free = ~mu.cov.zero_mask()
            w = np.zeros_like(u_minus_m_e)
            w[:, free] = u_minus_m_e[:, free] / np.sqrt(lam[free])
            viol += int(np.sum(np.linalg.norm(w, axis=1) > bound))
        return EquicoercivityEntry(t, len(seq.measures), samples, viol,
                                   f"|C_n^(+1/2)(u-m_n)| <= sqrt(2t) = {bound:.6g}",
                                   "pass" if viol == 0 else "fail",
                                   first_index_checked=seq.indices[0])
    if seq.kind == "besov1":
        lim = seq.limit_measure
        s_bar = lim.s - lim.d * lim.eta / 2.0
        k = np.arange(1, lim.dim + 1, dtype=float)
        gamma_bar = k ** (-s_bar / lim.d + 0.5)
        usable = [(i, mu) for i, mu in zip(seq.indices, seq.measures) if mu.s >= s_bar]
        if not usable:
            raise InputError("no family member satisfies the smoothness envelope")
        viol = 0
        for _, mu in usable:
            y = _uniform_pball(rng, samples, mu.dim, 1.0) * t * shrink
            pts = mu.gamma * y
            viol += int(np.sum(np.any(np.abs(pts) > gamma_bar * t, axis=1)))
        return EquicoercivityEntry(t, len(usable), samples, viol,
                                   "|u_k| <= gammabar_k * t", "pass" if viol == 0 else "fail",
                                   first_index_checked=usable[0][0],
                                   note=f"members with smoothness below {s_bar:.6g} dropped")
    raise InputError("equicoercivity probe needs a gaussian or besov1 family")


# ---------------------------------------------------------------------------
# mode convergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeConvOpts:
    cluster_tol: float = 1e-3
    window_frac: float = 0.25
    value_tol: float = 1e-6
    min_tol: float = 1e-6
    limit_min: Optional[float] = None
    max_cluster_points: int = 4000
    max_clusters: int = 8


@dataclass(frozen=True)
class ModeConvReport:
    cluster_points: list            # representative (largest-index) member per cluster
    cluster_sizes: list
    limit_min: float
    value_errors: list              # F_limit(rep) - limit_min per cluster
    min_gap: float                  # worst |F_n(x_n) - limit_min| over the window tail
    verdict: str
    note: str = ""

    def to_dict(self) -> dict:
        return {"cluster_points": [list(map(float, c)) for c in self.cluster_points],
                "cluster_sizes": list(self.cluster_sizes),
                "limit_min": float(self.limit_min),
                "value_errors": list(map(float, self.value_errors)),
                "min_gap": float(self.min_gap), "verdict": self.verdict, "note": self.note}


def _single_linkage(points: np.ndarray, tol: float) -> np.ndarray:
    n = len(points)
    labels = np.full(n, -1, dtype=int)
    cid = 0
    for i in range(n):
        if labels[i] >= 0:
            continue
        stack = [i]
        labels[i] = cid
        while stack:
            j = stack.pop()
            d = np.linalg.norm(points - points[j], axis=1)
            nbrs = np.where((d <= tol) & (labels < 0))[0]
            labels[nbrs] = cid
            stack.extend(nbrs.tolist())
        cid += 1
    return labels


def mode_convergence_check(seq: FunctionalSequence, minimizers: Sequence,
                           opts: Optional[ModeConvOpts] = None) -> ModeConvReport:
    """Cluster the tail of a minimiser sequence and compare to the limit.

    The trailing window (last quarter of indices by default) is
    clustered by single linkage; each cluster is represented by its
    largest-index member, the best available estimate of a
    subsequential limit.  Each representative must minimise the limit
    functional within tolerance, and the minimal values along the
    sequence must approach the limit minimum.
    """
    opts = opts or ModeConvOpts()
    if len(minimizers) != len(seq.indices):
        raise InputError("need one minimiser per family member")
    pts = np.stack([np.atleast_1d(np.asarray(m, dtype=float)) for m in minimizers])
    start = int(math.floor(len(pts) * (1.0 - opts.window_frac)))
    window = pts[start:]
    if len(window) > opts.max_cluster_points:
        stride = int(math.ceil(len(window) / opts.max_cluster_points))
        keep = np.unique(np.concatenate([np.arange(0, len(window), stride),
                                         [len(window) - 1]]))
        window = window[keep]
    labels = _single_linkage(window, opts.cluster_tol)
    reps, sizes = [], []
    for c in range(labels.max() + 1):
        members = np.where(labels == c)[0]
        reps.append(window[members[-1]])
        sizes.append(int(members.size))

    if opts.limit_min is not None:
        limit_min = float(opts.limit_min)
    else:
        cands = [seq.limit.eval(r) for r in reps] + [seq.limit.eval(seq.limit.anchor)]
        limit_min = float(min(cands))

    value_errors = [float(seq.limit.eval(r) - limit_min) for r in reps]
    tail = range(max(start, len(pts) - max(3, len(pts) // 20)), len(pts))
    min_gap = max(abs(seq.members[i].eval(pts[i]) - limit_min) for i in tail)

    note = ""
    if len(reps) > opts.max_clusters:
        verdict = "diagnostic"
        note = f"no convergent subsequence found at this N ({len(reps)} clusters)"
    elif all(e <= opts.value_tol for e in value_errors) and min_gap <= opts.min_tol:
        verdict = "pass"
    else:
        verdict = "fail"
    return ModeConvReport(reps, sizes, limit_min, value_errors, float(min_gap),
                          verdict, note)


# ---------------------------------------------------------------------------
# continuous convergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuousConvOpts:
    rho0: float = 1.0
    n_samples: int = 200
    abs_tol: float = 1e-9
    decay_factor: float = 0.5    # final block mean must drop below this times the first
    seed: int = 0


@dataclass(frozen=True)
class ContinuousConvEntry:
    point: np.ndarray
    suprema: np.ndarray
    trend_decreasing: bool
    final_sup: float
    verdict: str

    def to_dict(self) -> dict:
        return {"point": list(map(float, np.atleast_1d(self.point))),
                "suprema": list(map(float, self.suprema)),
                "trend_decreasing": bool(self.trend_decreasing),
                "final_sup": float(self.final_sup), "verdict": self.verdict}


def continuous_convergence_probe(phi_seq: Sequence, phi_limit, points: Sequence,
                                 indices: Optional[Sequence[int]] = None,
                                 opts: Optional[ContinuousConvOpts] = None) -> list:
    """Sampled check of locally-uniform convergence of potentials.

    For each test point x the probe records
    sup_{x' in U_n} |phi_n(x') - phi_limit(x)| over shrinking sampled
    neighbourhoods U_n of radius rho0 * n^(-1/2), and requires the
    recorded suprema to trend down to zero.
    """
    opts = opts or ContinuousConvOpts()
    idx = list(indices) if indices is not None else list(range(1, len(phi_seq) + 1))
    if len(idx) != len(phi_seq):
        raise InputError("indices and phi_seq must have equal length")
    lim_eval = getattr(phi_limit, "eval", phi_limit)
    entries = []
    for pi, x in enumerate(points):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        dim = x.size
        target = float(lim_eval(x if dim > 1 else x))
        sups = np.empty(len(idx))
        for j, (n, phi) in enumerate(zip(idx, phi_seq)):
            f = getattr(phi, "eval", phi)
            rho = opts.rho0 * n ** -0.5
            rng = child_rng(opts.seed, "cont-conv", pi, j)
            pts = x[None, :] + rho * _uniform_pball(rng, opts.n_samples, dim, 2.0)
            pts = np.vstack([pts, x[None, :]])
            if dim == 1:
                grid = np.linspace(x[0] - rho, x[0] + rho, 51)[:, None]
                pts = np.vstack([pts, grid])
            sups[j] = max(abs(float(f(p)) - target) for p in pts)
        blocks = np.array_split(sups, min(4, len(sups)))
        means = np.array([b.mean() for b in blocks])
        trend = bool(np.all(np.diff(means) <= 0.05 * means[0] + opts.abs_tol))
        final = float(sups[-1])
        ok = final <= opts.abs_tol or (trend and means[-1] <= opts.decay_factor * means[0])
        entries.append(ContinuousConvEntry(x, sups, trend, final, "pass" if ok else "fail"))
    return entries


# ---------------------------------------------------------------------------
# sum rule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SumRuleReport:
    liminf: list
    recovery_gaps: list
    verdict: str

    def to_dict(self) -> dict:
        return {"liminf": [r.to_dict() for r in self.liminf],
                "recovery_gaps": [{"x": list(map(float, np.atleast_1d(x))), "gap": float(g)}
                                  for x, g in self.recovery_gaps],
                "verdict": self.verdict}


def sum_rule_check(f_seq: FunctionalSequence, g_seq: Sequence, g_limit,
                   points: Sequence, recovery_fn: Callable,
                   opts: Optional[LiminfOpts] = None,
                   recovery_tol: float = 1e-8) -> SumRuleReport:
    """Probe the summed family F_n + G_n against F + G.

    G_n is assumed continuously convergent (verify separately with
    ``continuous_convergence_probe``); the recovery sequence for F is
    reused for the sum, and its trailing values must not exceed
    F(x) + G(x) beyond the tolerance.
    """
    opts = opts or LiminfOpts()
    g_evals = [getattr(g, "eval", g) for g in g_seq]
    g_lim_eval = getattr(g_limit, "eval", g_limit)

    def summed_member(i):
        fe = f_seq.members[i].eval
        ge = g_evals[i]
        return OmFunctional(eval=lambda u, fe=fe, ge=ge: fe(u) + float(ge(u)),
                            domain_test=f_seq.members[i].domain_test,
                            anchor=f_seq.members[i].anchor)

    limit = OmFunctional(eval=lambda u: f_seq.limit.eval(u) + float(g_lim_eval(u)),
                         domain_test=f_seq.limit.domain_test, anchor=f_seq.limit.anchor)
    summed = FunctionalSequence(f_seq.indices, [summed_member(i) for i in range(len(g_seq))],
                                limit, kind="generic")
    liminf_reports = [gamma_liminf_probe(summed, x, opts=opts) for x in points]

    gaps = []
    start = len(summed.indices) // 2
    for x in points:
        target = limit.eval(np.atleast_1d(np.asarray(x, dtype=float)))
        if math.isinf(target):
            continue
        rec = recovery_fn(x)
        vals = [summed.members[i].eval(rec[i]) for i in range(start, len(rec))]
        gaps.append((np.atleast_1d(x), max(0.0, max(vals) - target)))
    ok = all(r.verdict == "pass" for r in liminf_reports) and \
        all(g <= recovery_tol for _, g in gaps)
    return SumRuleReport(liminf_reports, gaps, "pass" if ok else "fail")


@dataclass(frozen=True)
class GammaReport:
    """Bundle of probe outcomes for one functional family."""

    liminf: list = field(default_factory=list)
    recovery_gaps: list = field(default_factory=list)
    equicoercivity: list = field(default_factory=list)
    mode_convergence: Optional[ModeConvReport] = None

    @property
    def verdict(self) -> str:
        parts = [r.verdict for r in self.liminf] + [e.verdict for e in self.equicoercivity]
        if self.mode_convergence is not None:
            parts.append(self.mode_convergence.verdict)
        if any(p == "fail" for p in parts):
            return "fail"
        if all(p in ("pass", "vacuous-pass", "skipped") for p in parts):
            return "pass"
        return "mixed"

    def to_dict(self) -> dict:
        return {"liminf": [r.to_dict() for r in self.liminf],
                "recovery_gaps": [{"x": list(map(float, np.atleast_1d(x))), "gap": float(g)}
                                  for x, g in self.recovery_gaps],
                "equicoercivity": [e.to_dict() for e in self.equicoercivity],
                "mode_convergence": None if self.mode_convergence is None
                else self.mode_convergence.to_dict(),
                "verdict": self.verdict}
