import json
from pathlib import Path

import numpy as np
import pytest

from ffmimo.codebook import CodebookConfig, build_codebook
from ffmimo.harness.cli import main as cli_main
from ffmimo.harness.config import (
    ConfigError,
    ExperimentConfig,
    experiment_config_from_json,
)
from ffmimo.harness.experiments import (
    generate_dataset,
    realized_throughput,
    run_mobility_experiment,
    run_static_experiment,
    write_static_aggregates,
    write_static_report,
)
from ffmimo.link import compute_csi_reports_all_rbs, default_esm_config
from ffmimo.rate_model import load_mcs_table, max_phy_rate
from ffmimo.scenario import Geolocation, ScenarioConfig, channel_grid, generate_scenario


SMALL_SCENARIO = dict(
    num_bs=2,
    rb_count=4,
    num_buildings=4,
    num_scatterers=12,
    subcarriers_per_rb=2,
    symbols_per_slot=1,
)


def small_config(**kw) -> ExperimentConfig:
    base = dict(
        scenario=ScenarioConfig(**SMALL_SCENARIO),
        codebook=CodebookConfig(4, 1, 2, 1, 2),
        ue_counts=[3],
        q_levels=[1],
        num_seeds=2,
        speed_kmh=[0.0, 60.0],
        mobility_ue_count=4,
        output_dir="out",
    )
    base.update(kw)
    return ExperimentConfig(**base)


def small_config_json() -> str:
    return json.dumps(
        {
            "scenario": SMALL_SCENARIO,
            "codebook": {"n1": 4, "n2": 1, "o1": 2, "o2": 1, "max_rank": 2},
            "ue_counts": [3],
            "q_levels": [1],
            "num_seeds": 2,
            "speed_kmh": [0.0, 60.0],
            "mobility_ue_count": 4,
            "dataset": {"n_train": 12, "n_test": 4, "seed": 3},
            "output_dir": "out",
        }
    )


@pytest.fixture(scope="module")
def world():
    cfg = small_config()
    s = generate_scenario(cfg.scenario, cfg.scenario_seed)
    cb = build_codebook(cfg.codebook)
    esm = default_esm_config(load_mcs_table().as_tuples())
    return cfg, s, cb, esm


class TestConfig:
    def test_round_trip_from_json(self):
        cfg = experiment_config_from_json(small_config_json())
        assert cfg.ue_counts == [3]
        assert cfg.scenario.rb_count == 4

    def test_infeasible_cell_rejected(self):
        doc = json.loads(small_config_json())
        doc["ue_counts"] = [50]  # W = 8 < 50
        with pytest.raises(ConfigError):
            experiment_config_from_json(json.dumps(doc))

    def test_negative_delay_rejected(self):
        doc = json.loads(small_config_json())
        doc["feedback_delay_s"] = -1.0
        with pytest.raises(ConfigError):
            experiment_config_from_json(json.dumps(doc))

    def test_unknown_predictor_rejected(self):
        doc = json.loads(small_config_json())
        doc["predictor"] = {"kind": "psychic"}
        with pytest.raises(ConfigError):
            experiment_config_from_json(json.dumps(doc))

    def test_invalid_json_rejected(self):
        with pytest.raises(ConfigError):
            experiment_config_from_json("{nope")


class TestGenerateDataset:
    def test_counts_and_disjoint_splits(self, world):
        _, s, cb, esm = world
        ds = generate_dataset(s, 10, 5, seed=2, cb=cb, esm=esm, bs_ids=[0])
        assert len(ds.records) == 15
        train_pts = {(r.ue_loc.x, r.ue_loc.y) for r in ds.split_records("train")}
        test_pts = {(r.ue_loc.x, r.ue_loc.y) for r in ds.split_records("test")}
        assert len(train_pts) == 10 and len(test_pts) == 5
        assert not train_pts & test_pts

    def test_spot_recompute_matches(self, world):
        _, s, cb, esm = world
        ds = generate_dataset(s, 3, 1, seed=4, cb=cb, esm=esm)
        rec = ds.records[3]
        want = compute_csi_reports_all_rbs(s, rec.bs_id, rec.ue_loc, cb, esm)
        assert list(rec.labels) == want

    def test_all_bs_labeled(self, world):
        _, s, cb, esm = world
        ds = generate_dataset(s, 4, 0, seed=5, cb=cb, esm=esm)
        assert ds.bs_ids == [0, 1]
        assert len(ds.records) == 4 * 2


class TestRealizedThroughput:
    def test_genie_report_gets_full_rate(self, world):
        _, s, cb, esm = world
        mcs = load_mcs_table()
        ue = Geolocation(120.0, 90.0)
        reports = compute_csi_reports_all_rbs(s, 0, ue, cb, esm)
        kk, tt = s.subcarriers_per_rb, s.symbols_per_slot
        h = channel_grid(s, 0, ue, range(kk * 4), range(tt)).reshape(4, kk, tt, 4, 4)
        for rb, rep in enumerate(reports):
            credited = realized_throughput(h[rb], rep, cb, esm, mcs, s.noise_power)
            assert credited == pytest.approx(max_phy_rate(rep, mcs))

    def test_cqi_overshoot_zeroes_codeword(self, world):
        from dataclasses import replace

        _, s, cb, esm = world
        mcs = load_mcs_table()
        ue = Geolocation(120.0, 90.0)
        reports = compute_csi_reports_all_rbs(s, 0, ue, cb, esm)
        rb = next((i for i, r in enumerate(reports) if 0 < r.cqi1 < 15), None)
        assert rb is not None
        kk, tt = s.subcarriers_per_rb, s.symbols_per_slot
        h = channel_grid(s, 0, ue, range(kk * 4), range(tt)).reshape(4, kk, tt, 4, 4)
        boosted = replace(reports[rb], cqi1=15, cqi2=15)
        credited = realized_throughput(h[rb], boosted, cb, esm, mcs, s.noise_power)
        assert credited == 0.0

    def test_monotone_in_channel_gain(self, world):
        _, s, cb, esm = world
        mcs = load_mcs_table()
        ue = Geolocation(60.0, 140.0)
        reports = compute_csi_reports_all_rbs(s, 0, ue, cb, esm)
        kk, tt = s.subcarriers_per_rb, s.symbols_per_slot
        h = channel_grid(s, 0, ue, range(kk * 4), range(tt)).reshape(4, kk, tt, 4, 4)
        for rb in range(4):
            lo = realized_throughput(0.5 * h[rb], reports[rb], cb, esm, mcs, s.noise_power)
            hi = realized_throughput(2.0 * h[rb], reports[rb], cb, esm, mcs, s.noise_power)
            assert hi >= lo


@pytest.fixture(scope="module")
def report():
    return run_static_experiment(small_config())


class TestStaticExperiment:
    def test_all_algorithms_present(self, report):
        algos = {r["algorithm"] for r in report["records"]}
        assert algos == {"m3_mama", "round_robin", "best_cqi"}

    def test_record_count(self, report):
        # 1 ue_count x 1 q x 2 seeds x 3 algorithms
        assert len(report["records"]) == 6

    def test_m3_mama_dominates_round_robin_in_mean(self, report):
        by_algo = {}
        for r in report["records"]:
            by_algo.setdefault(r["algorithm"], []).append(r["sum_rate"])
        assert np.mean(by_algo["m3_mama"]) >= np.mean(by_algo["round_robin"])

    def test_aggregates_recomputable(self, report, tmp_path):
        write_static_report(report, tmp_path)
        agg1 = (tmp_path / "aggregates.csv").read_text()
        # wipe and regenerate from records alone
        (tmp_path / "aggregates.csv").unlink()
        write_static_aggregates(report, tmp_path)
        assert (tmp_path / "aggregates.csv").read_text() == agg1

    def test_reproducible(self, report):
        again = run_static_experiment(small_config())
        assert again["records"] == report["records"]


class TestMobilityExperiment:
    def test_zero_speed_clsm_at_least_ff(self):
        cfg = small_config(num_seeds=1, speed_kmh=[0.0])
        report = run_mobility_experiment(cfg)
        for r in report["records"]:
            assert r["clsm_mean_throughput"] >= r["ff_mean_throughput"] - 1e-12

    def test_speed_recorded_per_record(self):
        cfg = small_config(num_seeds=1, speed_kmh=[0.0, 60.0])
        report = run_mobility_experiment(cfg)
        assert {r["speed_kmh"] for r in report["records"]} == {0.0, 60.0}


class TestCli:
    def write_config(self, tmp_path: Path) -> Path:
        doc = json.loads(small_config_json())
        doc["output_dir"] = str(tmp_path / "out")
        p = tmp_path / "config.json"
        p.write_text(json.dumps(doc))
        return p

    def test_scenario_gen(self, tmp_path):
        cfg = self.write_config(tmp_path)
        assert cli_main(["scenario", "gen", "--config", str(cfg)]) == 0
        assert (tmp_path / "out" / "scenario.json").exists()

    def test_dataset_gen_and_eval(self, tmp_path):
        cfg = self.write_config(tmp_path)
        assert cli_main(["dataset", "gen", "--config", str(cfg)]) == 0
        ds_path = tmp_path / "out" / "dataset.jsonl"
        assert ds_path.exists()
        assert cli_main(["eval-csi", "--config", str(cfg)]) == 0
        assert (tmp_path / "out" / "csi_eval.csv").exists()

    def test_alloc_run_standalone(self, tmp_path):
        cfg = self.write_config(tmp_path)
        rates = tmp_path / "rates.csv"
        np.savetxt(rates, np.random.default_rng(0).uniform(1, 5, (6, 2)), delimiter=",")
        assert cli_main(
            ["alloc", "run", "--config", str(cfg), "--rates", str(rates), "--quota", "1"]
        ) == 0
        summary = json.loads((tmp_path / "out" / "alloc_summary.json").read_text())
        assert summary["pairwise_stable"] is True

    def test_static_experiment_files_and_determinism(self, tmp_path):
        cfg = self.write_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert cli_main(
            ["experiment", "static", "--config", str(cfg), "--out", str(out_a)]
        ) == 0
        assert cli_main(
            ["experiment", "static", "--config", str(cfg), "--out", str(out_b)]
        ) == 0
        for name in ("runs.csv", "aggregates.csv", "fig_rb_cdf.csv", "fig_convergence.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        manifest = json.loads((out_a / "manifest.json").read_text())
        assert manifest["kind"] == "static"
        assert "runs.csv" in manifest["csv_columns"]

    def test_report_regenerates(self, tmp_path):
        cfg = self.write_config(tmp_path)
        out = tmp_path / "rep"
        cli_main(["experiment", "static", "--config", str(cfg), "--out", str(out)])
        agg = (out / "aggregates.csv").read_bytes()
        (out / "aggregates.csv").unlink()
        assert cli_main(["report", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "aggregates.csv").read_bytes() == agg

    def test_missing_config_exits_2(self, tmp_path):
        assert cli_main(["scenario", "gen", "--config", str(tmp_path / "nope.json")]) == 2

    def test_invalid_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"ue_counts": [999]}))
        assert cli_main(["experiment", "static", "--config", str(bad)]) == 2

    def test_unknown_flag_exits_2(self, tmp_path):
        cfg = self.write_config(tmp_path)
        with pytest.raises(SystemExit) as exc:
            cli_main(["scenario", "gen", "--config", str(cfg), "--bogus"])
        assert exc.value.code == 2

    def test_runtime_failure_exits_1(self, tmp_path):
        cfg = self.write_config(tmp_path)
        # alloc run without --rates is usage (2); with a missing file it is 1
        assert cli_main(
            ["alloc", "run", "--config", str(cfg), "--rates", str(tmp_path / "nope.csv")]
        ) == 1
