"""CLI runner: schema validation, outputs, determinism, exit codes."""

import csv
import json
from pathlib import Path

import pytest

from ommap.cli import main, validate_config
from ommap.errors import ConfigError


def run_cli(tmp_path, cfg, name="cfg.json", extra=()):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    return main([*extra, "--out", str(out), "run", str(path)]), out


class TestValidation:
    def test_missing_kind_rejected(self):
        with pytest.raises(ConfigError, match="kind"):
            validate_config({"name": "liminf_only"})

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError):
            validate_config({"kind": "counterexample", "name": "crosses",
                             "bogus_field": 1})

    def test_valid_config_passes(self):
        validate_config({"kind": "counterexample", "name": "crosses", "seed": 1})

    def test_validate_subcommand_exit_codes(self, tmp_path):
        good = tmp_path / "good.json"
        good.write_text(json.dumps({"kind": "counterexample", "name": "spike"}))
        assert main(["validate", str(good)]) == 0
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"kind": "nope"}))
        assert main(["validate", str(bad)]) == 2
        notjson = tmp_path / "broken.json"
        notjson.write_text("{")
        assert main(["validate", str(notjson)]) == 2

    def test_schema_copies_in_sync(self):
        pkg = Path(__file__).resolve().parents[1] / "src" / "ommap" / "schema.json"
        docs = Path(__file__).resolve().parents[1] / "docs" / "schema.json"
        assert json.loads(pkg.read_text()) == json.loads(docs.read_text())


class TestRun:
    def test_liminf_only_csv(self, tmp_path):
        code, out = run_cli(tmp_path, {"kind": "counterexample", "name": "liminf_only",
                                       "params": {"n_max": 10}})
        assert code == 0
        with (out / "liminf_only_ratios.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10
        assert all(float(r["ratio_at_2alpha_n"]) == 2.0 for r in rows)
        assert float(rows[2]["ratio_at_alpha_n"]) == 0.03125

    def test_map_solve_scalar(self, tmp_path):
        cfg = {"kind": "map_solve",
               "prior": {"type": "gaussian", "mean": [0.0], "eigenvalues": [1.0]},
               "observation": {"matrix": [[1.0]], "noise_cov": [1.0], "data": [2.0]}}
        code, out = run_cli(tmp_path, cfg)
        assert code == 0
        results = json.loads((out / "results.json").read_text())
        assert results["results"]["map"]["point"] == [1.0]

    def test_invalid_config_exit_2(self, tmp_path):
        code, _ = run_cli(tmp_path, {"kind": "map_solve"})
        assert code == 2

    def test_every_csv_has_header(self, tmp_path):
        cfg = {"kind": "counterexample", "name": "crosses"}
        code, out = run_cli(tmp_path, cfg)
        assert code == 0
        for f in out.glob("*.csv"):
            header = f.read_text().splitlines()[0]
            assert header and not header[0].isdigit()

    def test_determinism_byte_identical(self, tmp_path):
        cfg = {"kind": "ball_ratio", "seed": 5,
               "measure": {"type": "gaussian", "mean": [0.0, 0.0],
                           "eigenvalues": [1.0, 2.0]},
               "x1": [0.5, 0.0], "x2": [0.0, 0.0],
               "schedule": {"r0": 0.2, "levels": 6},
               "norm": {"p": 2, "weights": [1.0, 1.0]},
               "mc": {"n_samples": 20000}}
        _, out1 = run_cli(tmp_path, cfg, name="a.json")
        first = (out1 / "results.json").read_bytes()
        (out1 / "results.json").unlink()
        code, out2 = run_cli(tmp_path, cfg, name="b.json")
        assert code == 0
        assert (out2 / "results.json").read_bytes() == first

    def test_threads_do_not_change_results(self, tmp_path):
        cfg = {"kind": "gamma_check", "seed": 3,
               "family": {"type": "besov1", "s": 1.0, "d": 1, "eta": 1.0, "dim": 10,
                          "s_amplitude": 1.0, "alternating": True},
               "indices": list(range(2, 12)),
               "liminf_points": [[0.0] * 10],
               "recovery_points": [[1.0] + [0.0] * 9],
               "t_values": [1.0], "sublevel_samples": 200}
        _, out1 = run_cli(tmp_path, cfg, name="t1.json")
        one = (out1 / "results.json").read_bytes()
        (out1 / "results.json").unlink()
        code, out2 = run_cli(tmp_path, cfg, name="t4.json", extra=["--threads", "4"])
        assert code == 0
        assert (out2 / "results.json").read_bytes() == one

    def test_gamma_check_summary(self, tmp_path):
        cfg = {"kind": "gamma_check", "seed": 0,
               "family": {"type": "gaussian", "mean": [0.0, 0.0],
                          "eigenvalues": [2.0, 1.0], "mean_shift": [1.0, 0.0],
                          "eigenvalue_shift": [0.5, 0.5]},
               "indices": list(range(1, 25)),
               "liminf_points": [[0.0, 0.0], [0.5, -0.5]],
               "recovery_points": [[0.3, 0.3]],
               "t_values": [0.5, 2.0], "sublevel_samples": 500,
               "tolerances": {"value_tol": 0.01, "min_tol": 0.01,
                              "cluster_tol": 0.01}}
        code, out = run_cli(tmp_path, cfg)
        assert code == 0
        results = json.loads((out / "results.json").read_text())
        assert results["results"]["verdict"] == "pass"

    def test_small_noise_run(self, tmp_path):
        cfg = {"kind": "small_noise",
               "prior": {"type": "gaussian", "mean": [0.0, 0.0],
                         "eigenvalues": [1.0, 1.0]},
               "observation": {"matrix": [[1.0, 1.0]], "noise_cov": [1.0],
                               "data": [1.0]},
               "n_list": [1, 10, 100, 1000]}
        code, out = run_cli(tmp_path, cfg)
        assert code == 0
        results = json.loads((out / "results.json").read_text())
        assert results["results"]["constrained_point"] == pytest.approx([0.5, 0.5],
                                                                        abs=1e-10)

    def test_m_property_run(self, tmp_path):
        cfg = {"kind": "m_property",
               "measure": {"type": "gaussian", "mean": [0.0, 0.0],
                           "eigenvalues": [1.0, 0.0]},
               "outside_points": [[0.0, 1.0]],
               "schedule": {"r0": 0.4, "levels": 6},
               "norm": {"p": 2, "weights": [1.0, 1.0]},
               "mc": {"n_samples": 2000}}
        code, out = run_cli(tmp_path, cfg)
        assert code == 0
        results = json.loads((out / "results.json").read_text())
        assert results["results"]["all_pass"] is True


class TestMoreKinds:
    def test_classify_mode_crosses(self, tmp_path):
        cfg = {"kind": "classify_mode",
               "measure": {"type": "density1d", "name": "crosses",
                           "params": {"norm_choice": "1"}},
               "candidate": [1.0, 0.0],
               "competitors": [[-1.0, 0.0], [1.5, 0.0]],
               "schedule": {"r0": 0.2, "levels": 4},
               "norm": {"p": 1, "weights": [1.0, 1.0]},
               "tolerances": {"refine": False}}
        code, out = run_cli(tmp_path, cfg)
        assert code == 0
        results = json.loads((out / "results.json").read_text())
        assert results["results"]["strong"] == "yes"
        assert results["results"]["global_weak"] == "yes"

    def test_perturbation_data_kind(self, tmp_path):
        cfg = {"kind": "perturbation", "perturb": "data",
               "prior": {"type": "gaussian", "mean": [0.0, 0.0],
                         "eigenvalues": [1.0, 1.0]},
               "observation": {"matrix": [[1.0, 0.0], [0.0, 1.0]],
                               "noise_cov": [1.0, 1.0], "data": [1.0, -1.0]},
               "indices": [1, 2, 4, 8, 16, 32],
               "data_direction": [1.0, 0.0]}
        code, out = run_cli(tmp_path, cfg)
        assert code == 0
        results = json.loads((out / "results.json").read_text())
        d = [e["distance_to_limit"] for e in results["results"]["entries"]]
        assert d == sorted(d, reverse=True)

    def test_m_property_liminf_only(self, tmp_path):
        m_probe = __import__("ommap").LiminfOnlyMeasure(depth=40)
        radii = [m_probe.delta_radius(n) for n in range(1, 9)]
        cfg = {"kind": "m_property",
               "measure": {"type": "density1d", "name": "liminf_only",
                           "params": {"depth": 40}},
               "outside_points": [[-1.0]],
               "radii": radii}
        code, out = run_cli(tmp_path, cfg)
        assert code == 0
        results = json.loads((out / "results.json").read_text())
        assert results["results"]["all_pass"] is True


class TestReproduce:
    @pytest.mark.parametrize("fig,files", [
        ("fig1a", ["fig1a_density_grid.csv"]),
        ("fig1b", ["fig1b_density_grid.csv"]),
        ("figB1", ["figB1_intervals.csv", "figB1_markers.csv"]),
        ("figB3", ["figB3_density_grid.csv", "figB3_markers.csv"]),
    ])
    def test_figures(self, tmp_path, fig, files):
        out = tmp_path / "figs"
        assert main(["--out", str(out), "reproduce", fig]) == 0
        for f in files:
            assert (out / f).exists()
        meta = json.loads((out / "results.json").read_text())
        assert meta["figure"] == fig

    def test_fig1b_columns(self, tmp_path):
        out = tmp_path / "f"
        main(["--out", str(out), "reproduce", "fig1b"])
        header = (out / "fig1b_density_grid.csv").read_text().splitlines()[0]
        assert header.split(",") == ["x", "n=1", "n=2", "n=10", "n=100", "n=inf"]
