import json

import numpy as np
import pytest

from flowprox.cli import main


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


LINE_FIELD_CFG = {
    "kind": "exact",
    "potential": {"variant": "line_manifold", "c": 0.0},
    "schedule": {"family": "affine"},
}


class TestTrain:
    def tiny_config(self, tmp_path, seed=3):
        return write_config(tmp_path, {
            "dataset": {"kind": "gaussian", "mean": [1.0, 0.0],
                        "cov_sqrt": [[0.0, 0.0], [0.0, 0.0]]},
            "schedule": {"family": "affine"},
            "train": {"batch_size": 16, "steps": 30, "lr": 1e-3, "seed": seed,
                      "hidden_dims": [16]},
        })

    def test_artifacts_and_determinism(self, tmp_path):
        cfg = self.tiny_config(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["train", "--config", cfg, "--out", str(out1)]) == 0
        assert main(["train", "--config", cfg, "--out", str(out2)]) == 0
        assert (out1 / "model.ckpt").exists()
        assert (out1 / "summary.json").exists()
        assert (out1 / "loss.csv").read_bytes() == (out2 / "loss.csv").read_bytes()
        assert (out1 / "model.ckpt").read_bytes() == (out2 / "model.ckpt").read_bytes()

    def test_invalid_schedule_family(self, tmp_path):
        cfg = write_config(tmp_path, {
            "dataset": {"kind": "circle"},
            "schedule": {"family": "cosine"},
            "train": {"batch_size": 16, "steps": 5, "lr": 1e-3, "seed": 0},
        })
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path, {
            "dataset": {"kind": "circle"},
            "schedule": {"family": "affine"},
            "train": {"batch_size": 16, "steps": 5, "lr": 1e-3, "seed": 0},
            "bogus": 1,
        })
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


class TestSpectrum:
    def test_exact_line_manifold_csv(self, tmp_path):
        cfg = write_config(tmp_path, {
            "field": LINE_FIELD_CFG, "starts": 4,
            "t_grid": [0.5, 0.9], "seed": 1,
        })
        out = tmp_path / "out"
        assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
        rows = (out / "spectrum.csv").read_text().strip().split("\n")
        assert rows[0] == "t,eig1_mean,eig1_std,eig2_mean,eig2_std"
        last = [float(v) for v in rows[-1].split(",")]
        assert abs(last[1] - 0.0) <= 1e-6 and abs(last[3] + 1.0) <= 1e-6

    def test_grid_through_one_rejected(self, tmp_path):
        cfg = write_config(tmp_path, {
            "field": LINE_FIELD_CFG, "starts": 2, "t_grid": [0.5, 1.0], "seed": 1,
        })
        assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


class TestLyapunov:
    def test_exponents_match_gamma(self, tmp_path):
        cfg = write_config(tmp_path, {
            "field": LINE_FIELD_CFG,
            "x_start": [0.3, -0.2],
            "directions": [[0.0, 1.0], [1.0, 0.0]],
            "tau_max": 6.0,
        })
        out = tmp_path / "out"
        assert main(["lyapunov", "--config", cfg, "--out", str(out)]) == 0
        payload = json.loads((out / "exponents.json").read_text())
        assert payload["exponents"][0] == pytest.approx(-1.0, abs=0.05)
        assert payload["exponents"][1] == pytest.approx(0.0, abs=0.05)

    def test_short_tau_warns_but_runs(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {
            "field": LINE_FIELD_CFG, "x_start": [0.1, 0.0],
            "directions": [[0.0, 1.0]], "tau_max": 3.0,
        })
        code = main(["lyapunov", "--config", cfg, "--out", str(tmp_path / "o")])
        captured = capsys.readouterr()
        assert code == 0
        assert "tau_max" in captured.err


class TestProxCheck:
    def test_default_suite_passes(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"seed": 0})
        out = tmp_path / "out"
        assert main(["prox_check", "--config", cfg, "--out", str(out)]) == 0
        checks = json.loads((out / "prox_check.json").read_text())
        assert all(c["ok"] for c in checks)
        assert "PASS" in capsys.readouterr().out

    def test_empty_config_usage_error(self, tmp_path):
        cfg = write_config(tmp_path, {})
        assert main(["prox_check", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


class TestConverge:
    def base_config(self, n_list, c=0.8):
        return {
            "population": {
                "potential": {"variant": "quadratic", "B": [[1.0]]},
                "schedule": {"family": "affine"},
            },
            "dataset": {"kind": "gaussian", "mean": [0.0], "cov_sqrt": [[1.0]]},
            "n_list": n_list, "lambda": 0.5,
            "grid": {"lo": -2.0, "hi": 2.0, "points": 21},
            "c": c, "seed": 11,
        }

    def test_single_row(self, tmp_path):
        cfg = write_config(tmp_path, self.base_config([16]))
        out = tmp_path / "out"
        assert main(["converge", "--config", cfg, "--out", str(out)]) == 0
        rows = (out / "convergence.csv").read_text().strip().split("\n")
        assert rows[0] == "n,prox_sup_error,traj_error_at_c,w2_at_c"
        assert len(rows) == 2

    def test_c_out_of_range_rejected(self, tmp_path):
        cfg = write_config(tmp_path, self.base_config([16], c=1.0))
        assert main(["converge", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


class TestSample:
    def test_line_manifold_samples(self, tmp_path):
        cfg = write_config(tmp_path, {
            "field": {"kind": "exact",
                      "potential": {"variant": "line_manifold", "c": 1.0},
                      "schedule": {"family": "affine"}},
            "n": 8, "t1": 0.999, "seed": 2, "steps": 4000,
            "heldout": {"dataset": {"kind": "line_manifold", "c": 1.0}},
        })
        out = tmp_path / "out"
        assert main(["sample", "--config", cfg, "--out", str(out)]) == 0
        pts = np.loadtxt(out / "samples.csv", delimiter=",")
        assert np.abs(pts[:, 1] - 1.0).max() <= 1e-2
        summary = json.loads((out / "summary.json").read_text())
        assert "w2_to_heldout" in summary

    def test_zero_samples_rejected(self, tmp_path):
        cfg = write_config(tmp_path, {
            "field": LINE_FIELD_CFG, "n": 0, "t1": 0.9, "seed": 2,
        })
        assert main(["sample", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_seeded_repeat_identical(self, tmp_path):
        cfg = write_config(tmp_path, {
            "field": LINE_FIELD_CFG, "n": 4, "t1": 0.8, "seed": 5, "steps": 100,
        })
        o1, o2 = tmp_path / "a", tmp_path / "b"
        assert main(["sample", "--config", cfg, "--out", str(o1)]) == 0
        assert main(["sample", "--config", cfg, "--out", str(o2)]) == 0
        assert (o1 / "samples.csv").read_bytes() == (o2 / "samples.csv").read_bytes()


def test_learned_field_roundtrip_through_cli(tmp_path):
    train_cfg = write_config(tmp_path, {
        "dataset": {"kind": "gaussian", "mean": [0.0, 0.0],
                    "cov_sqrt": [[0.0, 0.0], [0.0, 0.0]]},
        "schedule": {"family": "affine"},
        "train": {"batch_size": 16, "steps": 20, "lr": 1e-3, "seed": 0,
                  "hidden_dims": [8]},
    }, name="train.json")
    out = tmp_path / "train_out"
    assert main(["train", "--config", train_cfg, "--out", str(out)]) == 0
    spec_cfg = write_config(tmp_path, {
        "field": {"kind": "learned", "checkpoint": str(out / "model.ckpt"),
                  "schedule": {"family": "affine"}},
        "starts": 2, "t_grid": [0.5], "seed": 0, "steps": 60,
    }, name="spec.json")
    assert main(["spectrum", "--config", spec_cfg,
                 "--out", str(tmp_path / "spec_out")]) == 0


def test_missing_config_file(tmp_path):
    assert main(["train", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")]) == 2
