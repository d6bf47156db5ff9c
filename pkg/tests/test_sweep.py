import json
import random

import numpy as np
import pytest

from relgat.errors import ConfigError
from relgat.model import RelationKind
from relgat.sweep import (
    CURVE_HEADER,
    SweepSpec,
    config_hash,
    curves_csv,
    enumerate_configs,
    read_records,
    run_config_dict,
    run_sweep,
    summarize,
    summary_csv,
    summary_md,
)


def small_spec(toy24_dir, out_dir, **overrides):
    defaults = dict(
        data_dir=str(toy24_dir),
        out_dir=str(out_dir),
        layers=[1, 2],
        relations=[RelationKind.NONE],
        normalizations=["none"],
        missing_rates=[0],
        seeds=[0, 1],
        epochs=4,
        hidden_dim=6,
        metrics_cap=30,
    )
    defaults.update(overrides)
    return SweepSpec(**defaults)


def strip_runtime(record):
    return {k: v for k, v in record.items() if k != "runtime_s"}


class TestSpec:
    def test_defaults_match_protocol(self, toy24_dir, tmp_path):
        spec = SweepSpec(data_dir=str(toy24_dir), out_dir=str(tmp_path))
        assert spec.layers == [1, 2, 3, 4, 5, 6, 7, 8, 10, 12, 16]
        assert spec.missing_rates == [0, 20, 40, 60, 80, 100]
        assert spec.seeds == [0, 1, 2, 3]
        assert spec.epochs == 1000

    def test_empty_lists_rejected(self, toy24_dir, tmp_path):
        with pytest.raises(ConfigError):
            SweepSpec(data_dir=str(toy24_dir), out_dir=str(tmp_path), layers=[])

    def test_from_json(self, toy24_dir, tmp_path):
        cfg = tmp_path / "sweep.json"
        cfg.write_text(json.dumps({"layers": [2], "relations": ["absdiff"], "epochs": 3}))
        spec = SweepSpec.from_json(cfg, data_dir=str(toy24_dir), out_dir=str(tmp_path))
        assert spec.layers == [2]
        assert spec.relations == [RelationKind.ABSDIFF]
        assert spec.epochs == 3

    def test_from_json_unknown_key(self, toy24_dir, tmp_path):
        cfg = tmp_path / "sweep.json"
        cfg.write_text(json.dumps({"layerz": [2]}))
        with pytest.raises(ConfigError, match="layerz"):
            SweepSpec.from_json(cfg, data_dir=str(toy24_dir), out_dir=str(tmp_path))

    def test_config_hash_covers_seed(self, toy24_dir, tmp_path):
        spec = small_spec(toy24_dir, tmp_path)
        a = run_config_dict("toy24", spec, 2, RelationKind.NONE, "none", 0, 0)
        b = run_config_dict("toy24", spec, 2, RelationKind.NONE, "none", 0, 1)
        assert config_hash(a) != config_hash(b)
        assert config_hash(a) == config_hash(dict(reversed(list(a.items()))))


class TestRunSweep:
    def test_cardinality(self, toy24_dir, tmp_path):
        spec = small_spec(toy24_dir, tmp_path / "out", layers=[1], seeds=[0, 1, 2, 3])
        path = run_sweep(spec, workers=2)
        records = read_records(path)
        assert len(records) == 4
        assert {r["seed"] for r in records} == {0, 1, 2, 3}

    def test_record_fields(self, toy24_dir, tmp_path):
        spec = small_spec(toy24_dir, tmp_path / "out", layers=[2], seeds=[0])
        records = read_records(run_sweep(spec, workers=1))
        (record,) = records
        expected = [
            "config_hash", "dataset", "relation", "norm", "missing", "layers",
            "hidden", "dropout", "leaky_slope", "pairnorm_scale", "row_normalize",
            "epochs", "lr", "weight_decay", "metrics_cap", "seed", "best_epoch",
            "val_acc", "test_acc", "row_diff", "col_diff", "r_group", "g_ins",
            "runtime_s",
        ]
        assert list(record.keys()) == expected
        assert record["dataset"] == "toy24"
        assert 0.0 <= record["test_acc"] <= 1.0

    def test_resume_completes_only_missing(self, toy24_dir, tmp_path):
        out = tmp_path / "out"
        spec = small_spec(toy24_dir, out)
        full = read_records(run_sweep(spec, workers=1))
        assert len(full) == 4

        # drop the last two records and resume
        records_path = out / "records.jsonl"
        lines = records_path.read_text().splitlines()
        records_path.write_text("\n".join(lines[:2]) + "\n")
        resumed = read_records(run_sweep(spec, workers=1))
        assert len(resumed) == 4
        assert {r["config_hash"] for r in resumed} == {r["config_hash"] for r in full}
        for a, b in zip(
            sorted(full, key=lambda r: r["config_hash"]),
            sorted(resumed, key=lambda r: r["config_hash"]),
        ):
            assert strip_runtime(a) == strip_runtime(b)

    def test_manifest_written_and_guarded(self, toy24_dir, tmp_path):
        out = tmp_path / "out"
        spec = small_spec(toy24_dir, out, layers=[1], seeds=[0])
        run_sweep(spec, workers=1)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["spec"]["layers"] == [1]
        assert manifest["dataset"]["num_nodes"] == 24
        # a different spec must not silently reuse the directory
        other = small_spec(toy24_dir, out, layers=[2], seeds=[0])
        with pytest.raises(ConfigError, match="different sweep config"):
            run_sweep(other, workers=1)

    def test_identical_records_across_pool_sizes(self, toy24_dir, tmp_path):
        spec_a = small_spec(toy24_dir, tmp_path / "a", seeds=[0, 1, 2])
        spec_b = small_spec(toy24_dir, tmp_path / "b", seeds=[0, 1, 2])
        a = [strip_runtime(r) for r in read_records(run_sweep(spec_a, workers=1))]
        b = [strip_runtime(r) for r in read_records(run_sweep(spec_b, workers=2))]
        assert a == b  # imap preserves task order, so files align line-for-line


class TestSummarize:
    def make_records(self):
        rows = []
        for layers, accs in [(1, [0.80, 0.82]), (2, [0.85, 0.85]), (3, [0.85, 0.85])]:
            for seed, acc in enumerate(accs):
                rows.append(
                    {
                        "dataset": "toy",
                        "relation": "none",
                        "norm": "none",
                        "missing": 0,
                        "layers": layers,
                        "seed": seed,
                        "test_acc": acc,
                        "row_diff": 1.0 + layers,
                        "col_diff": 0.5,
                        "r_group": 2.0,
                        "g_ins": None,
                    }
                )
        return rows

    def test_mean_and_sample_sd(self):
        _, curves = summarize(self.make_records())
        row = next(r for r in curves if r["layers"] == 1)
        assert row["mean_test_acc"] == pytest.approx(0.81)
        assert row["sd_test_acc"] == pytest.approx(0.014142135623730963, abs=1e-12)

    def test_best_over_layers_tie_takes_smallest(self):
        summary, _ = summarize(self.make_records())
        (row,) = summary
        assert row.optimal_layers == 2
        assert row.best_mean_test_acc == pytest.approx(0.85)

    def test_order_independence(self):
        records = self.make_records()
        shuffled = records[:]
        random.Random(3).shuffle(shuffled)
        assert summarize(records) == summarize(shuffled)

    def test_known_max_fixture(self):
        records = self.make_records()
        records.append(
            {
                "dataset": "toy", "relation": "absdiff", "norm": "none",
                "missing": 0, "layers": 5, "seed": 0, "test_acc": 0.99,
                "row_diff": 1.0, "col_diff": 1.0, "r_group": 1.0, "g_ins": 0.1,
            }
        )
        summary, _ = summarize(records)
        by_rel = {r.relation: r for r in summary}
        assert by_rel["absdiff"].best_mean_test_acc == pytest.approx(0.99)
        assert by_rel["absdiff"].optimal_layers == 5

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            summarize([])

    def test_curve_csv_header_and_nulls(self):
        _, curves = summarize(self.make_records())
        text = curves_csv(curves)
        lines = text.splitlines()
        assert lines[0] == CURVE_HEADER
        assert lines[1].endswith(",")  # g_ins None -> empty cell

    def test_summary_renderers(self):
        summary, _ = summarize(self.make_records())
        assert summary_csv(summary).startswith("dataset,relation,norm,missing")
        md = summary_md(summary)
        assert md.splitlines()[0].startswith("| dataset")
        assert "| toy |" in md


class TestEnumerate:
    def test_deterministic_order(self, toy24_dir, tmp_path):
        spec = small_spec(
            toy24_dir, tmp_path,
            layers=[1, 2], seeds=[0, 1], missing_rates=[0, 20],
        )
        configs = list(enumerate_configs(spec, "toy24"))
        assert len(configs) == 8
        assert [c["layers"] for c in configs] == [1, 1, 1, 1, 2, 2, 2, 2]
        assert [c["missing"] for c in configs[:4]] == [0, 0, 20, 20]
        assert [c["seed"] for c in configs[:2]] == [0, 1]
