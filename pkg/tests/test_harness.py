import csv
import io
import os

import numpy as np
import pytest
from dataclasses import replace

from otfsra.access_pipeline import ScenarioConfig
from otfsra.harness.cli import main as cli_main
from otfsra.harness.complexity import (measure_complexity, predict_complexity,
                                       scaling_ratios)
from otfsra.harness.config import (ConfigError, ExperimentConfig,
                                   parse_config_text, read_config,
                                   serialize_config)
from otfsra.harness.csvio import CSV_COLUMNS, rows_to_csv, write_csv
from otfsra.harness.runner import run_preset, run_trial


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig(
            preset="power-sweep", trials=4, seed=9, sweep=(0.2, 0.3),
            scenario={"n_ue": 40, "n_ap": 1}, solver={"max_iter": 30})
        path = tmp_path / "exp.cfg"
        path.write_text(serialize_config(cfg))
        loaded = read_config(path)
        assert loaded.preset == "power-sweep"
        assert loaded.trials == 4 and loaded.seed == 9
        assert loaded.sweep == (0.2, 0.3)
        assert loaded.scenario == {"n_ue": 40, "n_ap": 1}
        assert loaded.solver == {"max_iter": 30}
        assert serialize_config(loaded) == serialize_config(cfg)

    def test_unknown_key_is_line_numbered(self):
        text = "[run]\npreset = power-sweep\n[scenario]\nbogus = 3\n"
        with pytest.raises(ConfigError, match=":4"):
            parse_config_text(text, source="<t>")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config_text("[nope]\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="expected key = value"):
            parse_config_text("[run]\npreset power-sweep\n")

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            ExperimentConfig(preset="bogus")

    def test_key_outside_section(self):
        with pytest.raises(ConfigError, match="outside"):
            parse_config_text("preset = x\n")


class TestCsv:
    def test_empty_run_is_header_only(self):
        text = rows_to_csv([])
        assert text == ",".join(CSV_COLUMNS) + "\n"

    def test_nan_and_none_render_empty(self):
        rows = [dict(run_id="r", preset="p", seed=0, trial=0,
                     sweep_name="s", sweep_value=1, algorithm="a",
                     der=float("nan"), den=None, nmse_db=-12.5,
                     sinr_db=None, iterations=3, wall_ms=1.0, macs=10)]
        body = rows_to_csv(rows).splitlines()[1]
        assert body.split(",")[7] == "" and body.split(",")[8] == ""

    def test_sorted_independent_of_order(self):
        rows = [dict(trial=t, sweep_name="x", sweep_value=v, algorithm=a,
                     run_id="r", preset="p", seed=0)
                for t in (1, 0) for v in (2.0, 1.0) for a in ("b", "a")]
        assert rows_to_csv(rows) == rows_to_csv(rows[::-1])


class TestRunnerDeterminism:
    def test_benchmark_rows_bit_identical(self):
        cfg = ExperimentConfig(preset="recover-blocks", trials=1, seed=3,
                               sweep=(1,),
                               benchmark={"i_dim": 64, "l_dim": 32,
                                          "j_dim": 16})
        a = [dict(r, wall_ms=None) for r in run_trial(cfg, 0)]
        b = [dict(r, wall_ms=None) for r in run_trial(cfg, 0)]
        assert rows_to_csv(a) == rows_to_csv(b)

    def test_access_rows_bit_identical(self):
        cfg = ExperimentConfig(
            preset="access-vs-active", trials=1, seed=3, sweep=(2,),
            scenario={"n_ue": 16, "n_active": 2, "n_ap": 1, "upa_y": 2,
                      "upa_z": 2, "n_paths": 2},
            solver={"max_iter": 10, "rough_max_iter": 8})
        a = [dict(r, wall_ms=None) for r in run_trial(cfg, 0)]
        b = [dict(r, wall_ms=None) for r in run_trial(cfg, 0)]
        assert rows_to_csv(a) == rows_to_csv(b)
        assert {r["algorithm"] for r in a} == \
            {"hybrid", "superimposed", "embedded"}

    def test_schema_complete(self):
        cfg = ExperimentConfig(preset="recover-snr", trials=1, seed=1,
                               sweep=(12.5,),
                               benchmark={"i_dim": 64, "l_dim": 32,
                                          "j_dim": 8})
        rows, frac = run_preset(cfg)
        assert frac <= 1.0
        for row in rows:
            assert set(CSV_COLUMNS) <= set(row) | {"der", "den", "sinr_db"}
            assert row["preset"] == "recover-snr"


class TestComplexity:
    def test_chi_e_linear_in_actives(self):
        cfg = ScenarioConfig()
        a = predict_complexity(cfg, n_candidates=5)
        b = predict_complexity(cfg, n_candidates=10)
        assert b.chi_e == pytest.approx(2 * a.chi_e)

    def test_chi_s_formula(self):
        cfg = ScenarioConfig()
        layout = cfg.layout()
        pred = predict_complexity(cfg)
        p_r1 = layout.kp_max + 2 * layout.halo_rough + 1
        gamp_term = 16 * 16 * 4 * cfg.n_ue * p_r1
        assert pred.chi_s == pytest.approx(
            16 * np.log2(16) + 4 * np.log2(4) + gamp_term)

    def test_measured_tracks_predicted_across_sizes(self):
        small = ScenarioConfig(n_ue=24, n_active=3, n_ap=1, upa_y=2,
                               upa_z=2, n_paths=2)
        large = replace(small, n_doppler=64, m_delay=128, n_rough=32,
                        n_ue=48, l_p=8, k_p=16)
        rep_s = measure_complexity(small, seed=2, fixed_iterations=8)
        rep_l = measure_complexity(large, seed=2, fixed_iterations=8)
        rough_ratio, acc_ratio = scaling_ratios(rep_s, rep_l)
        assert abs(rough_ratio - 1.0) <= 0.2
        assert abs(acc_ratio - 1.0) <= 0.2


class TestCli:
    def test_run_exit_codes(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[run]\npreset = nope\n")
        assert cli_main(["run", "--config", str(bad)]) == 2
        assert cli_main(["run"]) == 2

    def test_run_writes_csv(self, tmp_path):
        out = tmp_path / "r.csv"
        code = cli_main([
            "run", "--config", "/dev/null", "--preset", "recover-blocks",
            "--seed", "4", "--trials", "1", "--out", str(out)])
        # /dev/null lacks [run]; preset comes from the flag
        assert code in (0, 2)
        if code == 2:
            cfg = tmp_path / "ok.cfg"
            cfg.write_text("[run]\npreset = recover-blocks\ntrials = 1\n"
                           "[benchmark]\ni_dim = 64\nl_dim = 32\nj_dim = 8\n")
            code = cli_main(["run", "--config", str(cfg), "--out", str(out)])
            assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert rows and rows[0]["preset"] == "recover-blocks"


class TestWorkerInvariance:
    def test_worker_pool_does_not_change_rows(self):
        cfg = ExperimentConfig(preset="recover-blocks", trials=2, seed=6,
                               sweep=(2,),
                               benchmark={"i_dim": 64, "l_dim": 32,
                                          "j_dim": 8})
        seq, _ = run_preset(cfg)
        par, _ = run_preset(replace(cfg, workers=2))
        strip = lambda rows: rows_to_csv([dict(r, wall_ms=None) for r in rows])
        assert strip(seq) == strip(par)
