"""Tests for config parsing, report writing, and the command line harness."""

import json

import numpy as np
import pytest

from forewatch.cli import (
    _split,
    cmd_evaluate,
    cmd_rank,
    cmd_sentinel,
    cmd_simulate,
    main,
)
from forewatch.config import DEFAULT_POOL, load_config, parse_config
from forewatch.dataio import load_csv
from forewatch.errors import NumericError, UsageError
from forewatch.monitoring import OracleMonitor
from forewatch.reports import Report, curve_report, read_report_json
from forewatch.series import TimeSeries


def base_document(**overrides):
    document = {
        "data": {
            "synthetic": {
                "n_series": 16,
                "length_range": [60, 80],
                "noise_std": 0.05,
                "drift_probability": 0.5,
                "drift_onset_range": [0.75, 0.9],
                "drift_level_range": [1.3, 1.8],
                "seed": 11,
            }
        },
        "horizon": 10,
        "feature_len": 32,
        "period": 5,
        "pool": ["ses", "rw"],
        "monitor": {"kind": "gp", "max_iters": 40, "learning_rate": 0.05},
        "seed": 3,
    }
    document.update(overrides)
    return document


def write_config(tmp_path, name="cfg.json", **overrides):
    document = base_document(**overrides)
    document.setdefault("out_dir", str(tmp_path / "out"))
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return path


class TestParseConfig:
    def test_defaults(self):
        cfg = parse_config({"data": {"synthetic": {"n_series": 4}}})
        assert cfg.horizon_h == 30
        assert cfg.feature_len == 128
        assert cfg.train_fraction == 0.75
        assert cfg.period == 10
        assert cfg.figures is True
        assert tuple(s.model_id for s in cfg.pool) == tuple(sorted(DEFAULT_POOL))

    def test_pool_accepts_names_and_objects(self):
        cfg = parse_config(
            base_document(
                pool=[
                    "rw",
                    {"kind": "theta", "model_id": "theta7",
                     "hyperparameters": {"m": 7}},
                ]
            )
        )
        ids = [s.model_id for s in cfg.pool]
        assert ids == ["rw", "theta7"]
        assert cfg.pool[1].period_m == 7

    @pytest.mark.parametrize(
        "overrides",
        [
            {"data": {}},
            {"data": {"csv": "a.csv", "synthetic": {"n_series": 2}}},
            {"feature_len": 17},
            {"train_fraction": 1.0},
            {"period": 11},
            {"pool": ["ses", "ses"]},
            {"pool": []},
            {"monitor": {"kind": "svm"}},
            {"monitor": {"kind": "gp", "warp_speed": 9}},
            {"unknown_key": 1},
            {"seed": -4},
        ],
    )
    def test_invalid_documents(self, overrides):
        with pytest.raises(UsageError):
            parse_config(base_document(**overrides))

    def test_config_file_with_bad_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{nope")
        with pytest.raises(UsageError, match="JSON"):
            load_config(path)


class TestFingerprint:
    def test_stable_and_seed_sensitive(self):
        a = parse_config(base_document())
        b = parse_config(base_document())
        c = parse_config(base_document(seed=4))
        assert a.fingerprint() == b.fingerprint()
        assert a.fingerprint() != c.fingerprint()

    def test_ignores_out_dir_and_figures(self):
        a = parse_config(base_document(out_dir="x", figures=True))
        b = parse_config(base_document(out_dir="y", figures=False))
        assert a.fingerprint() == b.fingerprint()

    def test_pool_order_irrelevant(self):
        a = parse_config(base_document(pool=["ses", "rw", "holt"]))
        b = parse_config(base_document(pool=["holt", "ses", "rw"]))
        assert a.fingerprint() == b.fingerprint()

    def test_semantic_fields_move_it(self):
        base = parse_config(base_document())
        for overrides in (
            {"horizon": 9},
            {"feature_len": 34},
            {"pool": ["ses"]},
            {"policy": {"smape_threshold": 0.4}},
            {"monitor": {"kind": "gp", "max_iters": 41}},
        ):
            assert (
                parse_config(base_document(**overrides)).fingerprint()
                != base.fingerprint()
            )


class TestSplit:
    def test_deterministic_partition(self):
        series = [
            TimeSeries(id=f"s{i:02d}", values=(1.0, 2.0)) for i in range(20)
        ]
        train_a, test_a = _split(series, 0.75, seed=5)
        train_b, test_b = _split(list(reversed(series)), 0.75, seed=5)
        assert [s.id for s in train_a] == [s.id for s in train_b]
        assert len(train_a) == 15 and len(test_a) == 5
        assert {s.id for s in train_a}.isdisjoint({s.id for s in test_a})
        assert _split(series, 0.75, seed=6)[0] != train_a


class TestReportObjects:
    def test_row_width_checked(self):
        with pytest.raises(UsageError):
            Report(
                kind="rmse_table", columns=("a", "b"), rows=((1,),),
                fingerprint="f", seed=0,
            )

    def test_unknown_kind(self):
        with pytest.raises(UsageError):
            Report(kind="scatter", columns=(), rows=(), fingerprint="f", seed=0)

    def test_curve_report_aggregates(self):
        samples = {"dyn": [[0.1, 0.3], [0.2, 0.4]]}
        report = curve_report("selection_curve", samples, "f", 0)
        rows = report.row_dicts()
        assert rows[0]["mean"] == pytest.approx(0.2)
        assert rows[0]["std"] == pytest.approx(np.std([0.1, 0.3]))
        assert rows[1]["period"] == 1 and rows[1]["n"] == 2


def oracle_factory(series_set, chunk=None):
    actuals = {s.id: s.values for s in series_set}

    def factory(model_id, dataset):
        return OracleMonitor(actuals, chunk=chunk)

    return factory


class TestCommands:
    def test_generate_writes_loadable_csv(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main(["generate", "--config", str(cfg_path)]) == 0
        series = load_csv(tmp_path / "out" / "dataset.csv")
        assert len(series) == 16

    def test_evaluate_outputs_and_fingerprint(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main(["evaluate", "--config", str(cfg_path)]) == 0
        out = tmp_path / "out"
        for name in ("rmse_table.csv", "rmse_table.json", "rmse_table.png"):
            assert (out / name).exists()
        cfg = load_config(cfg_path)
        document = read_report_json(out / "rmse_table.json")
        assert document["fingerprint"] == cfg.fingerprint()
        assert document["seed"] == 3
        first_line = (out / "rmse_table.csv").read_text().splitlines()[0]
        assert cfg.fingerprint() in first_line

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main(["evaluate", "--config", str(cfg_path),
                     "--out", str(tmp_path / "a")]) == 0
        assert main(["evaluate", "--config", str(cfg_path),
                     "--out", str(tmp_path / "b")]) == 0
        for name in ("rmse_table.csv", "rmse_table.json", "rmse_table.png"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_seed_override_changes_fingerprint(self, tmp_path):
        cfg_path = write_config(tmp_path)
        main(["evaluate", "--config", str(cfg_path),
              "--out", str(tmp_path / "a")])
        main(["evaluate", "--config", str(cfg_path), "--seed", "9",
              "--out", str(tmp_path / "b")])
        a = read_report_json(tmp_path / "a" / "rmse_table.json")
        b = read_report_json(tmp_path / "b" / "rmse_table.json")
        assert a["fingerprint"] != b["fingerprint"]
        assert b["seed"] == 9

    def test_data_override_uses_csv(self, tmp_path):
        cfg_path = write_config(tmp_path)
        main(["generate", "--config", str(cfg_path)])
        dataset = tmp_path / "out" / "dataset.csv"
        code = main(["evaluate", "--config", str(cfg_path),
                     "--data", str(dataset), "--out", str(tmp_path / "c")])
        assert code == 0
        document = read_report_json(tmp_path / "c" / "rmse_table.json")
        assert document["series_used"] == 16

    def test_oracle_monitor_gives_zero_rmse(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        from forewatch.dataio import generate_synthetic

        series = generate_synthetic(cfg.synthetic)
        report = cmd_evaluate(cfg, monitor_factory=oracle_factory(series))
        for value in report.column("monitor_rmse"):
            assert value == pytest.approx(0.0, abs=1e-12)
        for value in report.column("baseline_rmse"):
            assert value > 0.0

    def test_rank_oracle_matches_truth(self, tmp_path):
        cfg = load_config(write_config(tmp_path, pool=["ses", "rw", "holt"]))
        from forewatch.dataio import generate_synthetic

        series = generate_synthetic(cfg.synthetic)
        cmd_rank(cfg, monitor_factory=oracle_factory(series))
        document = read_report_json(cfg.out_dir + "/ranking_table.json")
        assert document["predicted_order"] == document["true_order"]
        assert document["selected"] == document["true_order"][0]

    def test_rank_pool_permutation_invariant(self, tmp_path):
        out_a = cmd_rank(load_config(write_config(
            tmp_path, name="a.json", pool=["ses", "rw", "holt"],
            out_dir=str(tmp_path / "pa"))))
        out_b = cmd_rank(load_config(write_config(
            tmp_path, name="b.json", pool=["holt", "ses", "rw"],
            out_dir=str(tmp_path / "pb"))))
        assert out_a.rows == out_b.rows
        assert out_a.fingerprint == out_b.fingerprint

    def test_simulate_single_model_pool_collapses(self, tmp_path):
        cfg = load_config(write_config(tmp_path, pool=["ses"]))
        report = cmd_simulate(cfg)
        rows = report.row_dicts()
        dyn = sorted(
            (r["period"], r["mean"], r["std"])
            for r in rows if r["strategy"] == "dynamic"
        )
        fixed = sorted(
            (r["period"], r["mean"], r["std"])
            for r in rows if r["strategy"] == "ses"
        )
        assert dyn == fixed

    def test_sentinel_always_alert_matches_simulate(self, tmp_path):
        cfg_sim = load_config(write_config(
            tmp_path, name="sim.json", out_dir=str(tmp_path / "sim")))
        cfg_sen = load_config(write_config(
            tmp_path, name="sen.json", out_dir=str(tmp_path / "sen"),
            policy={"smape_threshold": -1.0}))
        sim_rows = {
            (r["period"], r["mean"], r["std"])
            for r in cmd_simulate(cfg_sim).row_dicts()
            if r["strategy"] == "dynamic"
        }
        sen_rows = {
            (r["period"], r["mean"], r["std"])
            for r in cmd_sentinel(cfg_sen).row_dicts()
            if r["strategy"] == "sentinel"
        }
        assert sim_rows == sen_rows

    def test_sentinel_writes_alert_log(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        cmd_sentinel(cfg)
        from forewatch.dataio import load_alert_log

        alerts = load_alert_log(tmp_path / "out" / "sentinel_log.ndjson")
        n_test = 4
        assert len(alerts) == n_test * 2
        document = read_report_json(tmp_path / "out" / "sentinel_log.json")
        assert document["n_decisions"] == len(alerts)

    def test_mcdropout_monitor_path(self, tmp_path):
        cfg_path = write_config(
            tmp_path,
            monitor={"kind": "mcdropout", "epochs": 10, "mc_samples": 20},
        )
        assert main(["evaluate", "--config", str(cfg_path)]) == 0


class TestExitCodes:
    def test_missing_config_is_usage(self, tmp_path, capsys):
        assert main(["evaluate", "--config", str(tmp_path / "no.json")]) == 1
        assert "error" in capsys.readouterr().err

    def test_bad_flag_is_usage(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main(["evaluate", "--config", str(cfg_path), "--bogus"]) == 1

    def test_unknown_command_is_usage(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main(["explode", "--config", str(cfg_path)]) == 1

    def test_bad_data_file(self, tmp_path):
        cfg_path = write_config(tmp_path)
        bad = tmp_path / "bad.csv"
        bad.write_text("series_id,v1,v2\nx,1,abc\n")
        assert main(["evaluate", "--config", str(cfg_path),
                     "--data", str(bad)]) == 2

    def test_all_series_too_short(self, tmp_path):
        cfg_path = write_config(
            tmp_path,
            data={"synthetic": {"n_series": 4, "length_range": [20, 25]}},
        )
        assert main(["evaluate", "--config", str(cfg_path)]) == 2

    def test_numeric_failure(self, tmp_path, monkeypatch):
        def blow_up(data, config):
            raise NumericError("factorization failed")

        monkeypatch.setattr("forewatch.cli.train_gp", blow_up)
        cfg_path = write_config(tmp_path)
        assert main(["evaluate", "--config", str(cfg_path)]) == 3

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "generate" in capsys.readouterr().out
