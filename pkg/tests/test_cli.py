"""Config parsing, experiment runner, artifacts, exit codes."""

import csv
import json

import pytest

from sphere_equilibria._rng import derive_seed
from sphere_equilibria.cli import ExperimentConfig, main, parse_config, run
from sphere_equilibria.errors import ParameterError


def write_config(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


MINIMAL_SWEEP = {
    "kind": "predict-sweep",
    "model": {"j1": 1.0, "j2": 1.0, "alpha1": 0.3, "alpha2": 0.2},
    "sigma_grid": [0.0, 1.0],
    "n_list": [4],
}


class TestParseConfig:
    def test_minimal_with_defaults(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, MINIMAL_SWEEP))
        assert cfg.kind == "predict-sweep"
        assert cfg.seed == 0  # default recorded explicitly
        assert cfg.payload["n_list"] == [4]
        # model normalized to the covariance scalars
        assert set(cfg.payload["model"]) == {"phi1_1", "dphi1_1", "phi2_1"}

    def test_round_trip(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, MINIMAL_SWEEP))
        again = parse_config(write_config(tmp_path, cfg.canonical(), "r.json"))
        assert again.canonical() == cfg.canonical()
        assert again.config_hash() == cfg.config_hash()

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(ParameterError, match="kind"):
            parse_config(write_config(tmp_path, {"kind": "nope"}))

    def test_unknown_keys_strict_vs_lenient(self, tmp_path):
        path = write_config(tmp_path, {**MINIMAL_SWEEP, "extra_knob": 1})
        cfg = parse_config(path)
        assert cfg.unknown_keys == ["extra_knob"]
        with pytest.raises(ParameterError, match="extra_knob"):
            parse_config(path, strict=True)

    def test_exceptional_model_rejected(self, tmp_path):
        # b^2 + tau = 0 at sigma = 0: the derived-parameter gate propagates
        payload = {"kind": "predict-sweep",
                   "model": {"phi1_1": 1.0, "dphi1_1": 2.0, "phi2_1": -1.0},
                   "sigma_grid": [0.0], "n_list": [4]}
        with pytest.raises(Exception, match="exceptional"):
            parse_config(write_config(tmp_path, payload))

    def test_unknown_nested_model_key_rejected(self, tmp_path):
        payload = {"kind": "mc-count", "instances": 1,
                   "model": {"n": 4, "j1": 1.0, "alphaX": 2.0}}
        with pytest.raises(ParameterError, match="alphaX"):
            parse_config(write_config(tmp_path, payload))

    def test_out_of_range_names_field(self, tmp_path):
        payload = {**MINIMAL_SWEEP, "sigma_grid": [-1.0]}
        with pytest.raises(ParameterError, match="sigma_grid"):
            parse_config(write_config(tmp_path, payload))
        payload = {**MINIMAL_SWEEP, "n_list": [5]}
        with pytest.raises(ParameterError, match="n_list"):
            parse_config(write_config(tmp_path, payload))

    def test_missing_file_and_bad_json(self, tmp_path):
        with pytest.raises(ParameterError, match="not found"):
            parse_config(tmp_path / "absent.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        with pytest.raises(ParameterError, match="JSON"):
            parse_config(bad)


class TestSeedFanout:
    def test_stable_and_distinct(self):
        assert derive_seed(7, "a") == derive_seed(7, "a")
        assert derive_seed(7, "a") != derive_seed(7, "b")
        assert derive_seed(7, "a") != derive_seed(8, "a")


class TestRunner:
    def test_predict_sweep_artifacts(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, MINIMAL_SWEEP))
        code, manifest = run(cfg, out_dir=str(tmp_path / "out"))
        assert code == 0
        with open(tmp_path / "out" / "predictions.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["N", "tau", "b2", "sigma", "regime", "value",
                           "log_value"]
        assert len(rows) > 1
        assert manifest["config_hash"] == cfg.config_hash()
        assert manifest["outputs"] == ["predictions.csv", "summary.json"]
        with open(tmp_path / "out" / "summary.json") as fh:
            assert "tolerances" in json.load(fh)
        with open(tmp_path / "out" / "manifest.json") as fh:
            stored = json.load(fh)
        assert stored["config"]["seed"] == 0

    def test_empty_grid_gives_header_only_csv(self, tmp_path):
        payload = {**MINIMAL_SWEEP, "n_list": []}
        cfg = parse_config(write_config(tmp_path, payload))
        code, _ = run(cfg, out_dir=str(tmp_path / "out"))
        assert code == 0
        text = (tmp_path / "out" / "predictions.csv").read_text()
        assert text == "N,tau,b2,sigma,regime,value,log_value\n"

    def test_byte_reproducibility(self, tmp_path):
        payload = {"kind": "det-identity", "n": 4, "tau": 0.5,
                   "lambdas": [0.0], "trials": 2000, "seed": 3}
        cfg = parse_config(write_config(tmp_path, payload))
        run(cfg, out_dir=str(tmp_path / "a"))
        run(cfg, out_dir=str(tmp_path / "b"))
        for name in ("det_identity.csv", "summary.json"):
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes())

    def test_master_seed_changes_results(self, tmp_path):
        payload = {"kind": "det-identity", "n": 4, "tau": 0.5,
                   "lambdas": [0.0], "trials": 2000}
        cfg = parse_config(write_config(tmp_path, payload))
        run(cfg, out_dir=str(tmp_path / "a"))
        cfg2 = ExperimentConfig(kind=cfg.kind, payload=cfg.payload, seed=1)
        run(cfg2, out_dir=str(tmp_path / "b"))
        assert ((tmp_path / "a" / "det_identity.csv").read_bytes()
                != (tmp_path / "b" / "det_identity.csv").read_bytes())

    def test_mc_count_run(self, tmp_path):
        payload = {"kind": "mc-count",
                   "model": {"n": 4, "j1": 1.0, "j2": 1.0, "alpha1": 0.3,
                             "alpha2": 0.2, "sigma": 1.8},
                   "instances": 8, "lambda_bins": 4, "seed": 2}
        cfg = parse_config(write_config(tmp_path, payload))
        code, _ = run(cfg, out_dir=str(tmp_path / "out"))
        assert code == 0
        with open(tmp_path / "out" / "summary.json") as fh:
            summary = json.load(fh)
        assert summary["predicted"] is not None
        assert summary["n_instances"] == 8
        lines = (tmp_path / "out" / "mc_counts.csv").read_text().splitlines()
        assert lines[0] == "instance,n_found,saturated,seed"
        assert len(lines) == 9


class TestMainExitCodes:
    def test_success(self, tmp_path, capsys):
        path = write_config(tmp_path, MINIMAL_SWEEP)
        assert main(["run", path, "--out-dir", str(tmp_path / "o")]) == 0

    def test_config_error_is_machine_readable(self, tmp_path, capsys):
        path = write_config(tmp_path, {"kind": "predict-sweep"})
        assert main(["run", path]) == 2
        err = json.loads(capsys.readouterr().out)
        assert err["error"]["type"] == "config"

    def test_strict_unsaturated_exit_code(self, tmp_path):
        payload = {"kind": "mc-count",
                   "model": {"n": 4, "j1": 1.0, "j2": 1.0, "alpha1": 0.3,
                             "alpha2": 0.2, "sigma": 0.0},
                   "instances": 6, "solver": {"n_starts": 6}, "seed": 1,
                   "compare_exact": False}
        path = write_config(tmp_path, payload)
        code = main(["run", path, "--out-dir", str(tmp_path / "o"),
                     "--strict"])
        assert code == 4

    def test_seed_override(self, tmp_path):
        payload = {"kind": "det-identity", "n": 4, "tau": 0.0,
                   "lambdas": [0.0], "trials": 1000, "seed": 3}
        path = write_config(tmp_path, payload)
        assert main(["run", path, "--out-dir", str(tmp_path / "a")]) == 0
        assert main(["run", path, "--out-dir", str(tmp_path / "b"),
                     "--seed", "4"]) == 0
        assert ((tmp_path / "a" / "det_identity.csv").read_bytes()
                != (tmp_path / "b" / "det_identity.csv").read_bytes())

    def test_transition_curve_smoke(self, tmp_path):
        payload = {"kind": "transition-curve",
                   "model": {"j1": 1.0, "j2": 1.0, "alpha1": 0.3,
                             "alpha2": 0.2},
                   "n": 4, "grid_points": 3, "mc_instances": 0, "seed": 5}
        path = write_config(tmp_path, payload)
        assert main(["run", path, "--out-dir", str(tmp_path / "o")]) == 0
        with open(tmp_path / "o" / "transition_curve.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:4] == ["sigma", "b2", "exact_value", "exact_log_value"]
        assert len(rows) == 4
