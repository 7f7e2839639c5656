import json

import numpy as np
import pytest

from nlhjb.cli import main, run
from nlhjb.config import ConfigError, parse_config


def constant_ergodic_config(kappa=1.0, outdir="out"):
    return {
        "mode": "ergodic",
        "problem": {"family": "constant_cost", "kappa": kappa, "s": 0.75},
        "grid": {"d": 1, "hx": 0.25, "radii": [4.0, 8.0]},
        "solver": {"tol": 1e-10},
        "alpha": {"start": 0.5, "factor": 0.5, "max_levels": 12, "tol": 1e-10},
        "output_dir": outdir,
    }


def certify_config(drift_sign=-1.0, outdir="out"):
    return {
        "mode": "certify",
        "problem": {"family": "power_drift", "gamma": 1.6, "theta": 0.1,
                    "s": 0.9, "drift_sign": drift_sign},
        "grid": {"d": 1, "hx": 0.25, "radii": [32.0], "r_far_margin": 32.0},
        "output_dir": outdir,
    }


class TestParsing:
    def test_unknown_root_key(self):
        cfg = constant_ergodic_config()
        cfg["surprise"] = 1
        with pytest.raises(ConfigError, match="surprise"):
            parse_config(cfg)

    def test_unknown_section_key(self):
        cfg = constant_ergodic_config()
        cfg["grid"]["meshiness"] = 3
        with pytest.raises(ConfigError, match="meshiness"):
            parse_config(cfg)

    def test_bad_mode(self):
        cfg = constant_ergodic_config()
        cfg["mode"] = "solve-everything"
        with pytest.raises(ConfigError, match="mode"):
            parse_config(cfg)

    def test_missing_required_section(self):
        cfg = constant_ergodic_config()
        del cfg["problem"]
        with pytest.raises(ConfigError, match="problem"):
            parse_config(cfg)

    def test_radii_must_increase(self):
        cfg = constant_ergodic_config()
        cfg["grid"]["radii"] = [8.0, 4.0]
        with pytest.raises(ConfigError, match="radii"):
            parse_config(cfg)

    def test_family_parameter_requirements(self):
        cfg = constant_ergodic_config()
        cfg["problem"] = {"family": "power_drift", "s": 0.9}
        with pytest.raises(ConfigError, match="power_drift"):
            parse_config(cfg)


class TestRuns:
    def test_constant_cost_ergodic_artifacts(self, tmp_path):
        cfg = parse_config(constant_ergodic_config(kappa=1.0))
        code = run(cfg, output_dir=str(tmp_path))
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["lambda_star"] == pytest.approx(1.0, abs=1e-9)
        assert report["converged"] is True
        rows = (tmp_path / "solution.csv").read_text().strip().splitlines()
        assert rows[0] == "x1,u"
        u = np.array([float(r.split(",")[1]) for r in rows[1:]])
        assert np.max(np.abs(u)) <= 1e-9

    def test_report_is_byte_identical_across_runs(self, tmp_path):
        cfg = parse_config(constant_ergodic_config())
        run(cfg, output_dir=str(tmp_path / "a"))
        run(cfg, output_dir=str(tmp_path / "b"))
        ra = (tmp_path / "a" / "report.json").read_bytes()
        rb = (tmp_path / "b" / "report.json").read_bytes()
        assert ra == rb
        sa = (tmp_path / "a" / "solution.csv").read_bytes()
        sb = (tmp_path / "b" / "solution.csv").read_bytes()
        assert sa == sb

    def test_certify_power_drift(self, tmp_path):
        cfg = parse_config(certify_config())
        code = run(cfg, output_dir=str(tmp_path))
        assert code == 0
        cert = json.loads((tmp_path / "certificate.json").read_text())
        assert cert["violations"] == []
        assert cert["k0"] > 0 and cert["k1"] > 0

    def test_certify_flipped_drift_fails_with_violations(self, tmp_path):
        cfg = parse_config(certify_config(drift_sign=+1.0))
        code = run(cfg, output_dir=str(tmp_path))
        assert code == 2
        cert = json.loads((tmp_path / "certificate.json").read_text())
        assert len(cert["violations"]) > 0

    def test_discounted_mode(self, tmp_path):
        cfg = parse_config({
            "mode": "discounted",
            "problem": {"family": "power_drift", "gamma": 1.6, "theta": 0.1,
                        "s": 0.9},
            "grid": {"d": 1, "hx": 0.5, "radii": [8.0, 16.0]},
            "solver": {"tol": 1e-9},
            "alpha": {"start": 0.25},
        })
        code = run(cfg, output_dir=str(tmp_path))
        assert code in (0, 2)
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["mode"] == "discounted"
        assert report["residual_inf_norm"] <= 1e-9

    def test_convergence_study_constant_cost_all_zero(self, tmp_path):
        cfg = parse_config({
            "mode": "convergence-study",
            "problem": {"family": "constant_cost", "kappa": 2.0, "s": 0.75},
            "grid": {"d": 1, "hx": 0.5, "radii": [4.0]},
            "solver": {"tol": 1e-10},
            "alpha": {"max_levels": 8, "tol": 1e-10},
        })
        code = run(cfg, output_dir=str(tmp_path))
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["lambda_deltas"] == pytest.approx([0.0, 0.0], abs=1e-9)
        assert report["window_sup_diffs"] == pytest.approx([0.0, 0.0], abs=1e-9)

    def test_custom_family_with_expressions(self, tmp_path):
        cfg = parse_config({
            "mode": "discounted",
            "problem": {
                "family": "custom", "s": 0.75,
                "lambda_ell": 0.9, "Lambda_ell": 1.1,
                "controls": [
                    {"drift": ["-x1"], "cost": "exp(-x1*x1)",
                     "zeroth": "-0.5 - 0.1*cos(x1)"},
                    {"drift": ["-2*x1"], "cost": "0.5*exp(-x1*x1)",
                     "zeroth": "-0.5"},
                ],
            },
            "grid": {"d": 1, "hx": 0.25, "radii": [4.0]},
            "solver": {"tol": 1e-9},
        })
        code = run(cfg, output_dir=str(tmp_path))
        assert code == 0

    def test_run_meta_is_separate(self, tmp_path):
        cfg = parse_config(constant_ergodic_config())
        run(cfg, output_dir=str(tmp_path))
        meta = json.loads((tmp_path / "run_meta.json").read_text())
        assert "wall_seconds" in meta
        report = json.loads((tmp_path / "report.json").read_text())
        assert "wall_seconds" not in report


class TestMainEntry:
    def test_exit_one_names_unknown_key(self, tmp_path, capsys):
        cfg = constant_ergodic_config()
        cfg["solver"]["turbo"] = True
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        code = main([str(path), "--output-dir", str(tmp_path / "out")])
        assert code == 1
        out = capsys.readouterr().out
        block = json.loads(out)
        assert "turbo" in block["error"]["message"]

    def test_exit_one_on_family_constraint_violation(self, tmp_path, capsys):
        cfg = certify_config()
        cfg["problem"]["theta"] = 0.2  # above (2s-gamma)(2s-1) = 0.16
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        code = main([str(path), "--output-dir", str(tmp_path / "out")])
        assert code == 1
        block = json.loads(capsys.readouterr().out)
        assert "theta" in block["error"]["message"]

    def test_happy_path_verbose(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(constant_ergodic_config()))
        code = main([str(path), "--output-dir", str(tmp_path / "out"), "-v"])
        assert code == 0
        assert "lambda_star" in capsys.readouterr().out


class TestExpressions:
    def test_rejects_dunder_and_calls(self):
        from nlhjb.expressions import compile_scalar_field
        with pytest.raises(ValueError):
            compile_scalar_field("__import__('os')", 1)
        with pytest.raises(ValueError):
            compile_scalar_field("x1.real", 1)
        with pytest.raises(ValueError):
            compile_scalar_field("unknown_fn(x1)", 1)

    def test_vectorised_evaluation(self):
        from nlhjb.expressions import compile_scalar_field
        f = compile_scalar_field("sin(x1) + 2*r**2", 2)
        x = np.array([[1.0, 2.0], [0.0, 0.0]])
        want = np.sin(x[:, 0]) + 2 * np.sum(x**2, axis=1)
        np.testing.assert_allclose(f(x), want)


class TestMoreRuns:
    def test_explicit_alpha_values(self, tmp_path):
        cfg = constant_ergodic_config()
        cfg["alpha"] = {"values": [0.5, 0.25, 0.125], "tol": 1e-10}
        code = run(parse_config(cfg), output_dir=str(tmp_path))
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert [lv["alpha"] for lv in report["alpha_trace"]] == [0.5, 0.25]

    def test_ergodic_exit_two_when_schedule_exhausted(self, tmp_path):
        cfg = {
            "mode": "ergodic",
            "problem": {"family": "power_drift", "gamma": 1.6, "theta": 0.1,
                        "s": 0.9},
            "grid": {"d": 1, "hx": 0.5, "radii": [4.0, 8.0]},
            "solver": {"tol": 1e-9},
            "alpha": {"max_levels": 2, "tol": 1e-12},
        }
        code = run(parse_config(cfg), output_dir=str(tmp_path))
        assert code == 2
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["converged"] is False

    def test_workers_recorded_in_meta(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(constant_ergodic_config()))
        code = main([str(path), "--output-dir", str(tmp_path / "o"),
                     "--workers", "4"])
        assert code == 0
        meta = json.loads((tmp_path / "o" / "run_meta.json").read_text())
        assert meta["workers"] == 4

    def test_custom_kernel_expression(self, tmp_path):
        cfg = parse_config({
            "mode": "discounted",
            "problem": {
                "family": "custom", "s": 0.75,
                "lambda_ell": 0.7, "Lambda_ell": 1.3,
                "controls": [
                    {"drift": ["-x1"], "cost": "1.0", "zeroth": "-0.4",
                     "kernel": "0.5*(1.0 + 0.2*cos(ry))"},
                ],
            },
            "grid": {"d": 1, "hx": 0.25, "radii": [4.0]},
            "solver": {"tol": 1e-9},
        })
        assert run(cfg, output_dir=str(tmp_path)) == 0

    def test_convergence_study_power_drift_records_deltas(self, tmp_path):
        # deltas are recorded, not asserted to decrease (no rate claims)
        cfg = parse_config({
            "mode": "convergence-study",
            "problem": {"family": "power_drift", "gamma": 1.6, "theta": 0.1,
                        "s": 0.9},
            "grid": {"d": 1, "hx": 0.5, "radii": [4.0, 8.0]},
            "solver": {"tol": 1e-7},
            "alpha": {"max_levels": 18, "tol": 1e-4},
        })
        code = run(cfg, output_dir=str(tmp_path))
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert len(report["lambda_star"]) == 3
        assert len(report["lambda_deltas"]) == 2
        assert len(report["window_sup_diffs"]) == 2
        assert all(d >= 0 for d in report["lambda_deltas"])
