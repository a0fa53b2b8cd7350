import json
import math
from pathlib import Path

import numpy as np
import pytest

import riskdp.cli as cli
from riskdp.cli import (EXIT_BAD_CONFIG, EXIT_INCLUSION_VIOLATION, EXIT_OK,
                        load_config, main, normal_samples, read_value_csv, run)

TINY = {
    "model": {
        "a": 1.0, "b": 1.0, "u_lo": 0.0, "u_hi": 20.0,
        "disturbance": {"samples": [5.0, 10.0, 15.0]},
    },
    "cost": {"kind": "inventory", "c_o": 1.0, "c_u": 1.0},
    "safe_set": {"lo": 0.0, "hi": 40.0},
    "risk": {"alpha": 0.8, "delta": 5.0},
    "horizon": 3,
    "grid": {"lo": -20.0, "hi": 70.0, "step": 2.0},
    "x0": 10.0,
    "sweep": [5.0],
    "seed": 11,
    "n_traj": 40,
    "envelope": True,
}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


class TestNormalSamples:
    def test_deterministic(self):
        a = normal_samples(20.0, 6.0, 40, 2)
        b = normal_samples(20.0, 6.0, 40, 2)
        np.testing.assert_array_equal(a, b)

    def test_moments_roughly_match(self):
        w = normal_samples(0.0, 1.0, 20000, 123)
        assert abs(w.mean()) < 0.05 and abs(w.std() - 1.0) < 0.05

    def test_seed_changes_draw(self):
        assert not np.array_equal(normal_samples(0, 1, 10, 1), normal_samples(0, 1, 10, 2))

    def test_validation(self):
        with pytest.raises(ValueError):
            normal_samples(0, -1.0, 5, 0)
        with pytest.raises(ValueError):
            normal_samples(0, 1.0, 0, 0)


class TestLoadConfig:
    def test_bundled_config_parses(self):
        rc = load_config(cli.bundled_config_path())
        assert rc.horizon == 7 and rc.model.n_samples == 40
        assert rc.grid.n == 181 and rc.sweep[0] == 1.0

    def test_missing_key_raises(self, tmp_path):
        doc = dict(TINY)
        del doc["risk"]
        with pytest.raises(cli.ConfigError):
            load_config(write_config(tmp_path, doc))

    def test_bad_sweep_raises(self, tmp_path):
        for sweep in ([3.0, 2.0], [-1.0, 2.0], []):
            doc = dict(TINY, sweep=sweep)
            with pytest.raises(cli.ConfigError):
                load_config(write_config(tmp_path, doc))

    def test_unknown_cost_kind(self, tmp_path):
        doc = dict(TINY, cost={"kind": "mystery"})
        with pytest.raises(cli.ConfigError):
            load_config(write_config(tmp_path, doc))

    def test_default_grid_applies(self, tmp_path):
        doc = dict(TINY)
        del doc["grid"]
        rc = load_config(write_config(tmp_path, doc))
        assert rc.grid.points[0] == -40.0 and rc.grid.points[-1] == 140.0

    def test_generated_disturbance(self, tmp_path):
        doc = dict(TINY)
        doc["model"] = dict(doc["model"],
                            disturbance={"mean": 10.0, "std": 2.0, "n": 8, "seed": 5})
        rc = load_config(write_config(tmp_path, doc))
        np.testing.assert_array_equal(rc.model.samples, normal_samples(10.0, 2.0, 8, 5))


class TestRun:
    def test_dry_run_prints_and_writes_nothing(self, tmp_path, capsys):
        cfg = write_config(tmp_path, dict(TINY, outputs=str(tmp_path / "out")))
        assert run(cfg, dry_run=True) == EXIT_OK
        resolved = json.loads(capsys.readouterr().out)
        assert resolved["x0"] == 10.0 and len(resolved["model"]["samples"]) == 3
        assert not (tmp_path / "out").exists()

    def test_missing_file_is_bad_config(self, tmp_path):
        assert run(tmp_path / "nope.json") == EXIT_BAD_CONFIG

    def test_single_delta_outputs(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, TINY)
        assert run(cfg, out_dir=out) == EXIT_OK
        ddir = out / "delta_5"
        for t in range(TINY["horizon"] + 1):
            assert (ddir / f"value_t{t}.csv").exists()
        assert (ddir / "safe_sets.csv").exists()
        assert json.loads((ddir / "inclusions.json").read_text())["all_hold"] is True
        sim_lines = (out / "sim.csv").read_text().strip().splitlines()
        assert len(sim_lines) == 2  # header + exactly one sweep row

    def test_value_csv_round_trip(self, tmp_path):
        from riskdp import backward_solve
        out = tmp_path / "out"
        cfg_path = write_config(tmp_path, TINY)
        assert run(cfg_path, out_dir=out) == EXIT_OK
        rc = load_config(cfg_path)
        res = backward_solve(rc.problem(5.0), envelope=True)
        for t in range(rc.horizon + 1):
            cols = read_value_csv(out / "delta_5" / f"value_t{t}.csv")
            np.testing.assert_array_equal(cols["x"], rc.grid.points)
            np.testing.assert_array_equal(cols["value"], res.values[t].values)
            if t < rc.horizon:
                np.testing.assert_array_equal(cols["u_star"], res.policy.u[t])
                np.testing.assert_array_equal(cols["z_star"], res.policy.z[t])
            else:
                assert np.isnan(cols["u_star"]).all()

    def test_safe_sets_csv_shape(self, tmp_path):
        out = tmp_path / "out"
        assert run(write_config(tmp_path, TINY), out_dir=out) == EXIT_OK
        lines = (out / "delta_5" / "safe_sets.csv").read_text().strip().splitlines()
        assert lines[0] == "stage,lo,hi"
        assert len(lines) == 1 + TINY["horizon"]

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path, TINY)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert run(cfg, out_dir=out1) == EXIT_OK
        assert run(cfg, out_dir=out2) == EXIT_OK
        t1, t2 = tree_bytes(out1), tree_bytes(out2)
        assert t1.keys() == t2.keys()
        assert all(t1[k] == t2[k] for k in t1)

    def test_sweep_override_and_sim_rows(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, TINY)
        assert run(cfg, out_dir=out, delta_sweep=[2.0, 6.0], n_traj=20) == EXIT_OK
        rows = (out / "sim.csv").read_text().strip().splitlines()
        assert len(rows) == 3
        assert (out / "delta_2").exists() and (out / "delta_6").exists()

    def test_strict_flags_violations(self, tmp_path, monkeypatch):
        from riskdp.probsafe import InclusionCheck, InclusionReport

        def fake_check(result, config):
            bad = InclusionCheck("forced failure", True, False, None, None, (1.0,))
            return InclusionReport(config.risk.alpha, config.risk.delta,
                                   config.grid.cell_width, (bad,))

        monkeypatch.setattr(cli, "check_inclusions", fake_check)
        cfg = write_config(tmp_path, TINY)
        assert run(cfg, out_dir=tmp_path / "a", strict=True) == EXIT_INCLUSION_VIOLATION
        assert run(cfg, out_dir=tmp_path / "b", strict=False) == EXIT_OK

    def test_infeasible_x0_is_solver_failure(self, tmp_path):
        doc = dict(TINY, x0=-19.0)  # far below any feasible start
        assert run(write_config(tmp_path, doc), out_dir=tmp_path / "out") \
            == cli.EXIT_SOLVER_FAILURE


class TestMain:
    def test_cli_solve_round(self, tmp_path, capsys):
        cfg = write_config(tmp_path, TINY)
        code = main(["solve", "--config", str(cfg), "--out", str(tmp_path / "out"),
                     "--delta-sweep", "4,8", "--n-traj", "15", "--seed", "5"])
        assert code == EXIT_OK
        rows = (tmp_path / "out" / "sim.csv").read_text().strip().splitlines()
        assert len(rows) == 3

    def test_cli_dry_run(self, tmp_path, capsys):
        cfg = write_config(tmp_path, TINY)
        assert main(["solve", "--config", str(cfg), "--dry-run"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["horizon"] == 3

    def test_cli_rejects_bad_config(self, tmp_path, capsys):
        doc = dict(TINY)
        del doc["x0"]
        cfg = write_config(tmp_path, doc)
        assert main(["solve", "--config", str(cfg)]) == EXIT_BAD_CONFIG
