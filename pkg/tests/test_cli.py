"""Experiment runner: config validation, output files, reproducibility."""

import csv
import json
import math
import os

import numpy as np
import pytest

from kodsim import cli, fock
from kodsim.exceptions import ConfigError


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def hash_dir(path):
    import hashlib

    digest = hashlib.sha256()
    for name in sorted(os.listdir(path)):
        digest.update(name.encode())
        with open(os.path.join(path, name), "rb") as fh:
            digest.update(fh.read())
    return digest.hexdigest()


SMALL_PHOTO = {
    "trajectories": 400,
    "params": {"dim": 12},
    "initial_state": {"kind": "fock", "n": 3},
    "n_max": 8,
}


class TestConfig:
    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError):
            cli.resolve_config("photodetect-ensemble", {"trajectorees": 10})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError):
            cli.resolve_config(
                "photodetect-ensemble", {"params": {"kappa": 1.0}}
            )
        with pytest.raises(ConfigError):
            cli.resolve_config(
                "photodetect-ensemble",
                {"initial_state": {"kind": "fock", "n": 1, "phase": 0.3}},
            )

    def test_kind_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            cli.resolve_config("evolve-kod", {"kind": "photodetect-ensemble"})

    def test_negative_trajectories_rejected(self):
        with pytest.raises(ConfigError):
            cli.resolve_config("photodetect-ensemble", {"trajectories": -1})

    def test_bad_state_kind_rejected(self):
        with pytest.raises(ConfigError):
            cli.resolve_config(
                "heterodyne-ensemble", {"initial_state": {"kind": "squeezed"}}
            )

    def test_seed_override_changes_hash(self):
        a = cli.resolve_config("verify-identities", {}, seed_override=1)
        b = cli.resolve_config("verify-identities", {}, seed_override=2)
        assert a.config_hash() != b.config_hash()

    def test_distinct_configs_distinct_hashes(self):
        a = cli.resolve_config("photodetect-ensemble", dict(SMALL_PHOTO))
        changed = dict(SMALL_PHOTO)
        changed["trajectories"] = 401
        b = cli.resolve_config("photodetect-ensemble", changed)
        assert a.config_hash() != b.config_hash()

    def test_coherent_alpha_forms(self):
        pair = cli.resolve_config(
            "heterodyne-ensemble", {"initial_state": {"kind": "coherent", "alpha": [0.5, 0.5]}}
        )
        assert pair.resolved["initial_state"]["alpha"] == [0.5, 0.5]
        with pytest.raises(ConfigError):
            cli.resolve_config(
                "heterodyne-ensemble", {"initial_state": {"kind": "coherent", "alpha": "big"}}
            )


class TestInitialState:
    def test_density_file_round_trip(self, tmp_path):
        rho = 0.5 * fock.projector(10, 0) + 0.5 * fock.projector(10, 1)
        path = tmp_path / "rho.npy"
        np.save(path, rho)
        loaded = cli.build_initial_state({"kind": "file", "path": str(path)}, 10)
        assert np.array_equal(loaded, rho)

    def test_coherent_amplitude_guard(self):
        with pytest.raises(ConfigError):
            cli.build_initial_state({"kind": "coherent", "alpha": [4.0, 0.0]}, 12)


class TestRuns:
    def test_photodetect_outputs(self, tmp_path):
        cfg = cli.resolve_config("photodetect-ensemble", dict(SMALL_PHOTO), seed_override=5)
        report = cli.run(cfg, str(tmp_path))
        header, rows = read_csv(tmp_path / "pmf.csv")
        assert header == ["n", "kod_pmf", "born_pmf", "empirical_pmf", "ostensible_pmf"]
        assert len(rows) == 9
        emp = sum(float(r[3]) for r in rows)
        assert abs(emp - 1.0) < 1e-9
        assert (tmp_path / "counts.csv").exists()
        assert (tmp_path / "report.json").exists()
        data = json.loads((tmp_path / "report.json").read_text())
        assert data["overall_pass"] == report.overall_pass
        assert data["provenance"]["seed"] == 5

    def test_zero_trajectories_emits_analytic_columns(self, tmp_path):
        cfg_dict = dict(SMALL_PHOTO)
        cfg_dict["trajectories"] = 0
        cfg = cli.resolve_config("photodetect-ensemble", cfg_dict)
        report = cli.run(cfg, str(tmp_path))
        assert report.overall_pass
        header, rows = read_csv(tmp_path / "pmf.csv")
        assert all(r[3] == "" and r[4] == "" for r in rows)
        born = np.array([float(r[2]) for r in rows])
        assert abs(born.sum() - 1.0) < 1e-9

    def test_idempotent_reruns_byte_identical(self, tmp_path):
        cfg = cli.resolve_config("photodetect-ensemble", dict(SMALL_PHOTO), seed_override=7)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cli.run(cfg, str(out1), n_threads=1)
        cli.run(cfg, str(out2), n_threads=3)
        assert hash_dir(out1) == hash_dir(out2)

    def test_heterodyne_run(self, tmp_path):
        cfg = cli.resolve_config(
            "heterodyne-ensemble",
            {"trajectories": 500, "params": {"dim": 12}, "quad_order": 24,
             "initial_state": {"kind": "coherent", "alpha": 1.0}},
            seed_override=3,
        )
        report = cli.run(cfg, str(tmp_path))
        assert report.overall_pass
        header, rows = read_csv(tmp_path / "zetas.csv")
        assert header == ["trajectory", "re", "im"]
        assert len(rows) == 500
        header, rows = read_csv(tmp_path / "density.csv")
        assert header == ["re", "im", "empirical_density", "born_density"]
        assert len(rows) == 64
        # binned empirical density tracks the analytic one at this scale
        gaps = [abs(float(r[2]) - float(r[3])) for r in rows]
        assert max(gaps) < 1.0

    def test_heterodyne_zero_trajectories(self, tmp_path):
        cfg = cli.resolve_config(
            "heterodyne-ensemble",
            {"trajectories": 0, "params": {"dim": 12}, "quad_order": 24},
        )
        report = cli.run(cfg, str(tmp_path))
        assert report.overall_pass
        _, rows = read_csv(tmp_path / "density.csv")
        assert all(r[2] == "" for r in rows)
        assert all(float(r[3]) >= 0.0 for r in rows)

    def test_evolve_kod_poisson_run(self, tmp_path):
        cfg = cli.resolve_config(
            "evolve-kod", {"kod": "poisson", "steps": 200, "convergence": False}
        )
        report = cli.run(cfg, str(tmp_path))
        assert report.overall_pass
        header, rows = read_csv(tmp_path / "kod.csv")
        assert header == ["n", "evolved", "analytic", "abs_err"]
        assert max(float(r[3]) for r in rows) < 1e-8

    def test_verify_identities_subset(self, tmp_path):
        cfg = cli.resolve_config(
            "verify-identities", {"checks": ["renormalization", "trace"]}, seed_override=11
        )
        report = cli.run(cfg, str(tmp_path))
        assert report.overall_pass
        assert len(report.checks) == 4
        header, rows = read_csv(tmp_path / "checks.csv")
        assert header == ["name", "measured", "threshold", "comparison", "passed"]
        assert all(r[4] == "true" for r in rows)

    def test_unknown_check_group_rejected(self):
        with pytest.raises(ConfigError):
            cli.resolve_config("verify-identities", {"checks": ["everything"]})

    def test_verify_identities_defaults_all_green(self, tmp_path):
        # the full default suite: every identity defect below its gate
        report = cli.run(
            cli.resolve_config("verify-identities", {}), str(tmp_path)
        )
        assert report.overall_pass
        assert len(report.checks) == 20


class TestPlotSeries:
    def test_effective_mean_series(self, tmp_path):
        cfg = cli.resolve_config(
            "verify-identities",
            {"checks": ["trace"], "series": [
                {"name": "effective-mean", "points": 51},
                {"name": "effective-covariance", "points": 51},
            ]},
        )
        cli.run(cfg, str(tmp_path))
        _, rows_mean = read_csv(tmp_path / "effective_mean.csv")
        vals = [float(r[1]) for r in rows_mean]
        assert all(b >= a for a, b in zip(vals[:-1], vals[1:]))
        assert vals[-1] > 0.99
        _, rows_cov = read_csv(tmp_path / "effective_covariance.csv")
        assert rows_mean == rows_cov  # same screening law, pointwise

    def test_beta_cooling_series(self, tmp_path):
        cfg = cli.resolve_config(
            "verify-identities",
            {"checks": ["trace"],
             "series": [{"name": "beta-cooling", "samples": 100000}]},
            seed_override=9,
        )
        cli.run(cfg, str(tmp_path))
        _, rows = read_csv(tmp_path / "beta_cooling.csv")
        for kappa_T, value in ((float(r[0]), float(r[1])) for r in rows):
            expected = 1.0 / (math.exp(kappa_T) - 1.0)
            assert abs(value / expected - 1.0) < 0.03

    def test_unknown_series_rejected(self, tmp_path):
        cfg = cli.resolve_config(
            "verify-identities",
            {"checks": ["trace"], "series": [{"name": "mystery"}]},
        )
        with pytest.raises(ConfigError):
            cli.run(cfg, str(tmp_path))


class TestMain:
    def test_exit_zero_on_pass(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"checks": ["renormalization"]}))
        code = cli.main(
            ["verify-identities", "--config", str(cfg_path), "--out", str(tmp_path / "out")]
        )
        assert code == 0
        assert "overall: PASS" in capsys.readouterr().out

    def test_exit_two_on_bad_config(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"bogus": 1}))
        code = cli.main(
            ["verify-identities", "--config", str(cfg_path), "--out", str(tmp_path / "out")]
        )
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_threads_env_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("INSTRUMENT_AUTONOMY_THREADS", "3")
        assert cli._default_threads() == 3
        monkeypatch.setenv("INSTRUMENT_AUTONOMY_THREADS", "bogus")
        assert cli._default_threads() == 1
