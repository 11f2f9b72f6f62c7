"""Config-driven experiment runner.

Subcommands: ``run <config.json>`` executes an experiment described by
a schema-validated JSON file, ``validate <config.json>`` only checks
the schema, and ``reproduce <figure_id>`` emits plot-ready density
grids for the standard example figures.

Results are written as results.json plus one CSV per table.  Identical
config and seed give byte-identical results.json; the thread count
changes wall time only.  Exit codes: 0 for a completed run (verdicts
live in the report), 2 for a configuration/schema violation, 3 for
numerical blow-up.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import counterexamples as cx
from .bip import (LinearObservation, ProxOpts, map_solve_besov_linear,
                  map_solve_gaussian_linear, perturbation_experiment,
                  small_noise_experiment)
from .errors import ConfigError, NumericsError, OmmapError
from .gamma import (GammaReport, besov_om_family, besov_recovery_sequence,
                    equicoercivity_probe, gamma_liminf_probe, gaussian_om_family,
                    gaussian_recovery_sequence, mode_convergence_check)
from .measures import (BesovMeasure, GaussianMeasure, RatioOpts, WeightedSeqSpace,
                       ball_ratio_curve, measure_from_json, radius_schedule)
from .om import ClassifyOpts, ProbeOpts, classify_mode, m_property_probe
from .spaces import SpectralOperator


def _schema() -> dict:
    here = Path(__file__).resolve()
    for cand in [here.parent / "schema.json",
                 here.parents[2] / "docs" / "schema.json",
                 here.parents[3] / "docs" / "schema.json"]:
        if cand.exists():
            return json.loads(cand.read_text())
    raise ConfigError("schema.json not found next to the package or in docs/")


def validate_config(cfg: dict) -> None:
    import jsonschema

    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        loc = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config field {loc}: {err.message}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def map_indexed(fn, items, threads: int):
    """Apply fn over items on a bounded pool; merge by index."""
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _radii_from(cfg: dict) -> np.ndarray:
    if "radii" in cfg:
        return np.asarray(cfg["radii"], dtype=float)
    sched = cfg.get("schedule", {})
    return radius_schedule(sched.get("r0", 0.5), sched.get("levels", 10),
                           sched.get("factor", 2.0))


def _norm_from(cfg: dict, dim: int):
    if "norm" not in cfg:
        return None
    spec = cfg["norm"]
    p = math.inf if spec["p"] in ("inf", "Infinity") else float(spec["p"])
    w = np.asarray(spec.get("weights", np.ones(dim)), dtype=float)
    return WeightedSeqSpace(p, w)


def _ratio_opts(cfg: dict, seed: int, **extra) -> RatioOpts:
    mc = cfg.get("mc", {})
    return RatioOpts(n_samples=mc.get("n_samples", 10 ** 6),
                     n_batches=mc.get("n_batches", 20),
                     fit_points=mc.get("fit_points", 5),
                     fit_in=mc.get("fit_in", "r"),
                     n_boot=mc.get("n_boot", 400), seed=seed, **extra)


def _observation_from(cfg: dict) -> LinearObservation:
    return LinearObservation(np.asarray(cfg["matrix"], dtype=float),
                             SpectralOperator(np.asarray(cfg["noise_cov"], dtype=float)),
                             np.asarray(cfg["data"], dtype=float))


# ---------------------------------------------------------------------------
# kind runners: each returns (results dict, {csv name: (header, rows)})
# ---------------------------------------------------------------------------

def _run_ball_ratio(cfg, seed, threads):
    measure = measure_from_json(cfg["measure"])
    radii = _radii_from(cfg)
    space = _norm_from(cfg, len(cfg["x1"]))
    curve = ball_ratio_curve(measure, np.asarray(cfg["x1"], dtype=float),
                             np.asarray(cfg["x2"], dtype=float), radii, space,
                             _ratio_opts(cfg, seed))
    rows = [(float(r), float(q), float(s))
            for r, q, s in zip(curve.radii, curve.ratios, curve.stderr)]
    return curve.to_dict(), {"ratio_curve": (["radius", "ratio", "stderr"], rows)}


def _run_classify_mode(cfg, seed, threads):
    measure = measure_from_json(cfg["measure"])
    radii = _radii_from(cfg)
    space = _norm_from(cfg, len(cfg["candidate"]))
    tol = cfg.get("tolerances", {})
    opts = ClassifyOpts(strong_tol=tol.get("strong_tol", 0.05),
                        dip_tol=tol.get("dip_tol", 0.05),
                        weak_tol=tol.get("weak_tol", 0.05),
                        refine=tol.get("refine", True),
                        nm_iters=tol.get("nm_iters", 50),
                        ratio=_ratio_opts(cfg, seed))
    result = classify_mode(measure, np.asarray(cfg["candidate"], dtype=float),
                           [np.asarray(wp, dtype=float) for wp in cfg["competitors"]],
                           radii, space, opts)
    rows = [(float(r), float(q), float(s)) for r, q, s in
            zip(result.radii, result.strong_ratio_curve, result.strong_ratio_stderr)]
    return result.to_dict(), {
        "strong_ratio_curve": (["radius", "candidate_mass_over_sup_mass", "stderr"], rows)}


def _run_m_property(cfg, seed, threads):
    measure = measure_from_json(cfg["measure"])
    radii = _radii_from(cfg)
    pts = [np.asarray(x, dtype=float) for x in cfg["outside_points"]]
    space = _norm_from(cfg, pts[0].size)
    if isinstance(measure, GaussianMeasure):
        from .om import gaussian_om
        fn = gaussian_om(measure)
    elif isinstance(measure, cx.OmNotStrongMeasure):
        fn = measure.om_functional()
    elif isinstance(measure, cx.LiminfOnlyMeasure):
        from .om import OmFunctional

        def near_one(u):
            return abs(float(np.asarray(u).reshape(())) - 1.0) < 1e-12

        fn = OmFunctional(eval=lambda u: 0.0 if near_one(u) else math.inf,
                          domain_test=near_one, anchor=np.array([1.0]))
    else:
        raise ConfigError(
            "m_property runs need a gaussian, om_not_strong, or liminf_only measure")
    report = m_property_probe(measure, fn, pts, radii, space,
                              ProbeOpts(ratio=_ratio_opts(cfg, seed)))
    rows = []
    for i, entry in enumerate(report.entries):
        for r, q in zip(radii, entry.ratios):
            rows.append((i, float(r), float(q)))
    return report.to_dict(), {
        "m_property_ratios": (["point_index", "radius", "ratio_vs_anchor"], rows)}


def _build_family(cfg, indices):
    fam = cfg["family"]
    if fam["type"] == "gaussian":
        mean = np.asarray(fam["mean"], dtype=float)
        eig = np.asarray(fam["eigenvalues"], dtype=float)
        mshift = np.asarray(fam.get("mean_shift", np.zeros_like(mean)), dtype=float)
        eshift = np.asarray(fam.get("eigenvalue_shift", np.zeros_like(eig)), dtype=float)
        limit = GaussianMeasure(mean, SpectralOperator(eig))
        members = [GaussianMeasure(mean + mshift / n, SpectralOperator(eig + eshift / n))
                   for n in indices]
        return gaussian_om_family(members, limit, indices), members, limit
    amp = fam.get("s_amplitude", 1.0)
    alt = fam.get("alternating", True)
    limit = BesovMeasure(fam["s"], fam["d"], fam["eta"], fam["dim"])
    members = [BesovMeasure(fam["s"] + ((-1) ** n if alt else 1.0) * amp / n,
                            fam["d"], fam["eta"], fam["dim"]) for n in indices]
    return besov_om_family(members, limit, indices), members, limit


def _run_gamma_check(cfg, seed, threads):
    indices = cfg.get("indices", list(range(1, 33)))
    seq, members, limit = _build_family(cfg, indices)
    liminf_points = [np.asarray(x, dtype=float) for x in cfg.get("liminf_points", [])]
    liminf = map_indexed(lambda x: gamma_liminf_probe(seq, x), liminf_points, threads)

    gaps = []
    for x in (np.asarray(v, dtype=float) for v in cfg.get("recovery_points", [])):
        target = seq.limit.eval(x)
        if math.isinf(target):
            continue
        if seq.kind == "gaussian":
            rec = gaussian_recovery_sequence(members, limit, x)
        else:
            rec = besov_recovery_sequence(members, limit, x)
        worst = max(seq.members[i].eval(rec[i]) - target for i in range(len(rec)))
        gaps.append((x, max(0.0, float(worst))))

    samples = cfg.get("sublevel_samples", 2000)
    equi = [equicoercivity_probe(seq, float(t), samples, seed)
            for t in cfg.get("t_values", [0.5, 2.0])]

    mode_rep = None
    if cfg.get("check_modes", True):
        from .gamma import ModeConvOpts

        tol = cfg.get("tolerances", {})
        minimizers = [m.anchor for m in seq.members]
        mode_rep = mode_convergence_check(seq, minimizers, ModeConvOpts(
            cluster_tol=tol.get("cluster_tol", 1e-3),
            value_tol=tol.get("value_tol", 1e-6),
            min_tol=tol.get("min_tol", 1e-6)))

    report = GammaReport(liminf=liminf, recovery_gaps=gaps, equicoercivity=equi,
                         mode_convergence=mode_rep)
    rows = [("liminf", r.verdict, len(r.violations)) for r in liminf]
    rows += [("recovery", "pass" if g <= 1e-10 else "fail", float(g)) for _, g in gaps]
    rows += [("equicoercivity", e.verdict, e.violations) for e in equi]
    if mode_rep is not None:
        rows.append(("mode_convergence", mode_rep.verdict, mode_rep.min_gap))
    return report.to_dict(), {"gamma_summary": (["probe", "verdict", "detail"], rows)}


def _run_map_solve(cfg, seed, threads):
    prior = measure_from_json(cfg["prior"])
    obs = _observation_from(cfg["observation"])
    solver = cfg.get("solver", {})
    if isinstance(prior, GaussianMeasure):
        sol = map_solve_gaussian_linear(prior, obs)
    else:
        sol = map_solve_besov_linear(prior, obs, ProxOpts(
            tol=solver.get("tol", 1e-8), max_iter=solver.get("max_iter", 10 ** 5),
            check_uniqueness=solver.get("check_uniqueness", False)))
    header = [f"u{k}" for k in range(len(sol.point))] + ["objective", "residual"]
    row = [float(v) for v in sol.point] + [sol.objective, sol.optimality_residual]
    return {"map": sol.to_dict()}, {"map_solution": (header, [row])}


def _run_perturbation(cfg, seed, threads):
    prior = measure_from_json(cfg["prior"])
    obs = _observation_from(cfg["observation"])
    kind = cfg["perturb"]
    indices = cfg["indices"]
    if kind == "data":
        direction = np.asarray(cfg.get("data_direction",
                                       np.eye(1, obs.n_obs, 0).ravel()), dtype=float)
        schedule = lambda n: obs.data + direction / n
    elif kind == "potential_projection":
        schedule = lambda n: min(n, obs.n_unknown)
    else:
        if not isinstance(prior, BesovMeasure):
            raise ConfigError("prior perturbation runs expect a besov1 prior")
        amp = cfg.get("prior_s_amplitude", 1.0)
        alt = cfg.get("prior_alternating", True)
        schedule = lambda n: BesovMeasure(
            prior.s + ((-1) ** n if alt else 1.0) * amp / n, prior.d, prior.eta, prior.dim)
    report = perturbation_experiment(kind, prior, obs, schedule, indices)
    header = ["n"] + [f"u{k}" for k in range(obs.n_unknown)] + \
        ["objective", "residual", "distance_to_limit"]
    rows = [[e.index] + [float(v) for v in e.point] +
            [e.objective, e.residual, e.distance_to_limit] for e in report.entries]
    return report.to_dict(), {"perturbation_trajectory": (header, rows)}


def _run_small_noise(cfg, seed, threads):
    prior = measure_from_json(cfg["prior"])
    obs = _observation_from(cfg["observation"])
    report = small_noise_experiment(prior, obs, cfg["n_list"])
    header = ["n"] + [f"u{k}" for k in range(obs.n_unknown)] + ["distance_to_constrained"]
    rows = [[n] + [float(v) for v in p] + [d]
            for n, p, d in zip(report.n_values, report.points, report.distances)]
    return report.to_dict(), {"small_noise_trajectory": (header, rows)}


def _run_counterexample(cfg, seed, threads):
    name = cfg["name"]
    params = cfg.get("params", {})
    if name == "kl_gaussians":
        sigmas = params.get("sigmas", [0.1, 0.5, 2.0, 10.0])
        rows = [(float(s), cx.kl_gaussians(s), cx.kl_gaussians_quadrature(s))
                for s in sigmas]
        return ({"kl": [{"sigma": r[0], "closed_form": r[1], "quadrature": r[2]}
                        for r in rows]},
                {"kl_gaussians": (["sigma_variance", "closed_form", "quadrature"], rows)})
    if name == "mixture":
        r = params.get("r", 5.0)
        ts = params.get("t_values", [-0.05, 0.05])
        rows = []
        for t in ts:
            found = cx.mixture_modes(t, r)
            rows.append((float(t), found.mode) + found.local_maxima)
        kl_ts = params.get("kl_t_values", [1e-3, 3e-3, 1e-2, 3e-2, 1e-1])
        slope, kls = cx.mixture_kl_exponent(kl_ts, r)
        kl_rows = list(zip(map(float, kl_ts), map(float, kls)))
        return ({"modes": [{"t": rw[0], "mode": rw[1]} for rw in rows],
                 "kl_exponent": slope},
                {"mixture_modes": (["t", "mode", "local_max_1", "local_max_2"], rows),
                 "mixture_kl": (["t", "kl"], kl_rows)})
    if name == "spike":
        ns = params.get("n_values", [10, 50, 100])
        rows = [(int(n), cx.spike_mode(int(n)), cx.spike_kl(int(n))) for n in ns]
        rows.append(("inf", cx.spike_mode(math.inf), 0.0))
        return ({"modes": [{"n": str(r[0]), "mode": float(r[1])} for r in rows]},
                {"spike_modes": (["n", "mode", "kl_limit_vs_member"], rows)})
    if name == "liminf_only":
        depth = params.get("depth", 40)
        n_max = params.get("n_max", 10)
        m = cx.LiminfOnlyMeasure(depth=depth)
        eps, delta = cx.liminf_only_ratios(m, n_max)
        rows = [(n + 1, float(eps[n]), float(delta[n])) for n in range(n_max)]
        return ({"eps_ratios": list(map(float, eps)),
                 "delta_ratios": list(map(float, delta))},
                {"liminf_only_ratios": (["n", "ratio_at_2alpha_n", "ratio_at_alpha_n"], rows)})
    if name == "om_not_strong":
        m = cx.OmNotStrongMeasure(levels=params.get("levels", 30))
        rep = cx.om_not_strong_suite(m, ks=tuple(params.get("ks", (2, 3, 5))),
                                     n_dip=params.get("n_dip", 10))
        rows = [(k, float(v), float(rep.ratio_rel_errors[k]))
                for k, v in rep.ratio_limits.items()]
        return rep.to_dict(), {
            "om_not_strong_ratios": (["k", "extrapolated_ratio", "rel_error_vs_k_squared"],
                                     rows)}
    if name == "crosses":
        r = params.get("r", 0.1)
        rows = []
        for norm in ("1", "inf"):
            m = cx.CrossesMeasure(norm)
            rows.append((norm, "e1", float(cx.crosses_ball_masses(m, cx.E1, r))))
            rows.append((norm, "-e1", float(cx.crosses_ball_masses(m, -cx.E1, r))))
        return ({"masses": [{"norm": a, "center": b, "mass": c} for a, b, c in rows],
                 "om_difference_1": cx.crosses_om_difference("1"),
                 "om_difference_inf": cx.crosses_om_difference("inf")},
                {"crosses_masses": (["norm", "center", "unnormalised_mass"], rows)})
    raise ConfigError(f"unknown counterexample name {name!r}")


_RUNNERS = {
    "ball_ratio": _run_ball_ratio,
    "classify_mode": _run_classify_mode,
    "m_property": _run_m_property,
    "gamma_check": _run_gamma_check,
    "map_solve": _run_map_solve,
    "perturbation": _run_perturbation,
    "small_noise": _run_small_noise,
    "counterexample": _run_counterexample,
}


# ---------------------------------------------------------------------------
# figure grids
# ---------------------------------------------------------------------------

def _reproduce(figure_id: str, out: Path) -> dict:
    if figure_id == "fig1a":
        r = 2.0
        ts = [-0.2, -0.05, 0.0, 0.05, 0.2]
        xs = np.linspace(-6.0, 6.0, 1201)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # r = 2 is the figure's own geometry
            cols = {f"t={t}": cx.MixtureFamily(t, r).density(xs) for t in ts}
        rows = [[float(x)] + [float(cols[c][i]) for c in cols] for i, x in enumerate(xs)]
        _write_csv(out / "fig1a_density_grid.csv", ["x"] + list(cols), rows)
        return {"figure": figure_id, "r": r, "t_values": ts,
                "files": ["fig1a_density_grid.csv"]}
    if figure_id == "fig1b":
        ns = [1, 2, 10, 100, math.inf]
        xs = np.linspace(-1.0, 4.0, 2001)
        cols = {f"n={'inf' if n == math.inf else int(n)}": cx.SpikeFamily(n).density(xs)
                for n in ns}
        rows = [[float(x)] + [float(cols[c][i]) for c in cols] for i, x in enumerate(xs)]
        _write_csv(out / "fig1b_density_grid.csv", ["x"] + list(cols), rows)
        return {"figure": figure_id, "n_values": ["1", "2", "10", "100", "inf"],
                "files": ["fig1b_density_grid.csv"]}
    if figure_id == "figB1":
        m = cx.LiminfOnlyMeasure(depth=20)
        rows = [(lvl, side, float(lo), float(hi), float(h))
                for lvl, side, lo, hi, h in m.intervals()]
        _write_csv(out / "figB1_intervals.csv",
                   ["level", "anchor_sign", "offset_lo", "offset_hi", "height"], rows)
        marks = [(n, float(m.alphas[n - 1])) for n in range(1, 11)]
        _write_csv(out / "figB1_markers.csv", ["n", "alpha_n"], marks)
        return {"figure": figure_id,
                "files": ["figB1_intervals.csv", "figB1_markers.csv"],
                "note": "offsets measured rightward from -1 / leftward from +1"}
    if figure_id == "figB3":
        m = cx.OmNotStrongMeasure(levels=6)
        xs = np.linspace(0.5, 5.5, 4001)
        xs = xs[np.abs(xs - np.round(xs)) > 1e-6]  # avoid the singular points
        rows = [(float(x), float(m.density(x))) for x in xs]
        _write_csv(out / "figB3_density_grid.csv", ["x", "density"], rows)
        marks = [(k, float(k), float(k - 0.5 / k ** 4), float(k + 0.5 / k ** 4))
                 for k in range(1, 6)]
        _write_csv(out / "figB3_markers.csv",
                   ["k", "spike_location", "plateau_lo", "plateau_hi"], marks)
        return {"figure": figure_id,
                "files": ["figB3_density_grid.csv", "figB3_markers.csv"]}
    raise ConfigError(f"unknown figure id {figure_id!r}")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ommap",
                                 description="small-ball mode analysis experiment runner")
    ap.add_argument("--seed", type=int, default=None,
                    help="root seed; overrides the config seed")
    ap.add_argument("--out", type=str, default="ommap-out", help="output directory")
    ap.add_argument("--threads", type=int,
                    default=int(os.environ.get("OMMAP_THREADS", "1")),
                    help="worker threads (results are thread-count independent)")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("config", type=str)
    val = sub.add_parser("validate", help="schema-check an experiment config")
    val.add_argument("config", type=str)
    rep = sub.add_parser("reproduce", help="emit plot-ready grids for a figure")
    rep.add_argument("figure_id", type=str,
                     choices=["fig1a", "fig1b", "figB1", "figB3"])
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = json.loads(Path(args.config).read_text())
            validate_config(cfg)
            print("config ok")
            return 0
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "reproduce":
            meta = _reproduce(args.figure_id, out)
            _write_json(out / "results.json", meta)
            print(f"wrote {out / 'results.json'}")
            return 0
        cfg = json.loads(Path(args.config).read_text())
        validate_config(cfg)
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        if cfg.get("output"):
            out = out / cfg["output"]
            out.mkdir(parents=True, exist_ok=True)
        results, tables = _RUNNERS[cfg["kind"]](cfg, seed, max(1, args.threads))
        payload = {"kind": cfg["kind"], "seed": seed, "results": results}
        _write_json(out / "results.json", payload)
        for name, (header, rows) in tables.items():
            _write_csv(out / f"{name}.csv", header, rows)
        print(f"wrote {out / 'results.json'}")
        return 0
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"error: numerical blow-up: {exc}", file=sys.stderr)
        return 3
    except OmmapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
