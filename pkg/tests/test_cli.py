import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from cubecrawl import load_cellset
from cubecrawl.cli import RunConfig, load_config, main

from conftest import T1_ROWS

T1_SCHEMA_DICT = {
    "dimensions": [{"name": "Device"}, {"name": "Browser"},
                   {"name": "is_test", "domain": "boolean"}],
    "measures": [{"name": "Revenue", "agg": "sum", "sources": ["Revenue"]},
                 {"name": "Clicks", "agg": "sum", "sources": ["Clicks"]}],
}


def write_t1_csv(path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Device", "Browser", "is_test", "Revenue", "Clicks"])
        for device, browser, is_test, revenue, clicks in T1_ROWS:
            writer.writerow([device, browser, "T" if is_test else "F", revenue, clicks])


def write_config(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=1))
    return path


def t1_crawl_config(tmp_path: Path, **crawl_overrides) -> Path:
    write_t1_csv(tmp_path / "t1.csv")
    crawl = {
        "models": [{"model": "entity_weight", "params": {"metric": "Revenue"}}],
        "dimensions": ["Device", "Browser"],
        "thresholds": {"total_weight": 40},
    }
    crawl.update(crawl_overrides)
    return write_config(tmp_path / "run.json", {
        "spec_version": 1,
        "input": {"csv": str(tmp_path / "t1.csv"), "schema": T1_SCHEMA_DICT},
        "crawl": crawl,
    })


def fim_config(tmp_path: Path) -> Path:
    rows = [("t1", "A"), ("t1", "B"), ("t1", "C"), ("t2", "A"), ("t2", "B"),
            ("t3", "A"), ("t3", "C"), ("t4", "B")]
    txns = {}
    for tid, item in rows:
        txns.setdefault(tid, set()).add(item)
    with open(tmp_path / "t2.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tid", "A", "B", "C"])
        for tid, item in rows:
            writer.writerow([tid] + [1 if x in txns[tid] else 0 for x in "ABC"])
    schema = {
        "dimensions": [{"name": "A", "domain": "integer"},
                       {"name": "B", "domain": "integer"},
                       {"name": "C", "domain": "integer"}],
        "measures": [{"name": "support", "agg": "count_distinct", "sources": ["tid"]}],
    }
    grouping_sets = [["A"], ["B"], ["C"], ["A", "B"], ["A", "C"], ["B", "C"], ["A", "B", "C"]]
    return write_config(tmp_path / "fim.json", {
        "spec_version": 1,
        "input": {"csv": str(tmp_path / "t2.csv"), "schema": schema},
        "crawl": {
            "models": [{"model": "frequent_itemset"}],
            "dimensions": ["A", "B", "C"],
            "grouping_sets": grouping_sets,
            "thresholds": {"support": 2},
            "dimension_values": {"A": [1], "B": [1], "C": [1]},
        },
    })


class TestConfigHandling:
    def test_round_trip_fixpoint(self, tmp_path):
        config_path = t1_crawl_config(tmp_path, top_n={"signal": "total_weight", "n": 3})
        first = load_config(config_path)
        serialized = tmp_path / "round.json"
        serialized.write_text(json.dumps(first.to_dict()))
        second = load_config(serialized)
        assert first == second
        assert first.to_dict() == second.to_dict()

    def test_unknown_keys_rejected(self, tmp_path):
        config_path = t1_crawl_config(tmp_path)
        payload = json.loads(config_path.read_text())
        payload["crawl"]["typo_key"] = 1
        bad = write_config(tmp_path / "bad.json", payload)
        rc = main(["crawl", "--config", str(bad), "--output", str(tmp_path / "out.jsonl")])
        assert rc == 2
        assert not (tmp_path / "out.jsonl").exists()

    def test_threshold_on_undeclared_signal_is_spec_error(self, tmp_path):
        config_path = t1_crawl_config(tmp_path, thresholds={"nope": 1})
        rc = main(["crawl", "--config", str(config_path),
                   "--output", str(tmp_path / "out.jsonl")])
        assert rc == 2
        assert not (tmp_path / "out.jsonl").exists()

    def test_missing_config_file(self, tmp_path):
        rc = main(["crawl", "--config", str(tmp_path / "absent.json"),
                   "--output", str(tmp_path / "out.jsonl")])
        assert rc == 2


class TestCrawlCommand:
    def test_fim_fixture_emits_five_records(self, tmp_path):
        config_path = fim_config(tmp_path)
        out = tmp_path / "fim.jsonl"
        assert main(["crawl", "--config", str(config_path), "--output", str(out)]) == 0
        records = [json.loads(line) for line in out.read_text().splitlines()]
        supports = {tuple(sorted(r["region"])): r["signals"]["support"] for r in records}
        assert supports == {("A",): 3.0, ("B",): 3.0, ("C",): 2.0,
                            ("A", "B"): 2.0, ("A", "C"): 2.0}

    def test_oracle_flag_is_byte_identical(self, tmp_path):
        config_path = t1_crawl_config(tmp_path)
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert main(["crawl", "--config", str(config_path), "--output", str(out1)]) == 0
        assert main(["crawl", "--config", str(config_path), "--output", str(out2),
                     "--oracle", "naive"]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_csv_format_flattens_regions(self, tmp_path):
        config_path = t1_crawl_config(tmp_path)
        out = tmp_path / "out.csv"
        assert main(["crawl", "--config", str(config_path), "--output", str(out),
                     "--format", "csv"]) == 0
        rows = list(csv.DictReader(out.open()))
        assert rows[0]["region"] == ""
        assert {"Device=Pixel;Browser=Safari", "Device=iPhone;Browser=Safari"} <= \
            {r["region"] for r in rows}

    def test_topn_config(self, tmp_path):
        config_path = t1_crawl_config(tmp_path, thresholds={},
                                      top_n={"signal": "total_weight", "n": 3})
        out = tmp_path / "top.jsonl"
        assert main(["crawl", "--config", str(config_path), "--output", str(out)]) == 0
        records = [json.loads(line) for line in out.read_text().splitlines()]
        assert [r["signals"]["total_weight"] for r in records] == [125.0, 100.0, 70.0]
        naive_out = tmp_path / "top_naive.jsonl"
        assert main(["crawl", "--config", str(config_path), "--output", str(naive_out),
                     "--oracle", "naive"]) == 0
        assert out.read_bytes() == naive_out.read_bytes()

    def test_instrument_report(self, tmp_path):
        config_path = t1_crawl_config(tmp_path)
        report = tmp_path / "instr.json"
        assert main(["crawl", "--config", str(config_path),
                     "--output", str(tmp_path / "o.jsonl"),
                     "--instrument", str(report)]) == 0
        payload = json.loads(report.read_text())
        assert payload["counters"]["regions_evaluated"] > 0
        assert "entity_weight" in payload["model_invocations"]

    def test_records_validate_against_schema(self, tmp_path):
        config_path = t1_crawl_config(tmp_path)
        out = tmp_path / "out.jsonl"
        main(["crawl", "--config", str(config_path), "--output", str(out)])
        for line in out.read_text().splitlines():
            record = json.loads(line)
            assert set(record) == {"region", "signals"}
            assert isinstance(record["region"], dict)
            assert all(isinstance(v, float) for v in record["signals"].values())


class TestAttributeCommand:
    def write_metrics(self, path, rows, header=("region", "w_control", "w_test",
                                                "s_control", "s_test")):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)

    def test_degenerate_fixture(self, tmp_path):
        metrics = tmp_path / "m.csv"
        self.write_metrics(metrics, [
            ("", 60, 65, 30, 30),
            ("Device=Pixel;Browser=Chrome", 10, 15, 5, 5),
            ("Device=Pixel;Browser=Safari", 20, 25, 10, 10),
            ("Device=iPhone;Browser=Safari", 30, 25, 15, 15),
        ])
        config = write_config(tmp_path / "attr.json", {
            "spec_version": 1,
            "attribute": {"metrics_csv": str(metrics), "kind": "density"},
        })
        out = tmp_path / "attr.jsonl"
        assert main(["attribute", "--config", str(config), "--output", str(out)]) == 0
        records = [json.loads(line) for line in out.read_text().splitlines()]
        scores = [r["signals"]["ras"] for r in records[:-1]]
        assert scores == pytest.approx([5 / 30, 5 / 30, -5 / 30])
        completeness = records[-1]["signals"]
        assert completeness["sum_ras"] == pytest.approx(5 / 30)
        assert completeness["population_change"] == pytest.approx(5 / 30)
        assert completeness["abs_error"] < 1e-12

    def test_summable_case(self, tmp_path):
        metrics = tmp_path / "m.csv"
        self.write_metrics(metrics, [
            ("", 60, 65),
            ("Device=Pixel;Browser=Chrome", 10, 15),
            ("Device=Pixel;Browser=Safari", 20, 25),
            ("Device=iPhone;Browser=Safari", 30, 25),
        ], header=("region", "w_control", "w_test"))
        config = write_config(tmp_path / "attr.json", {
            "spec_version": 1,
            "attribute": {"metrics_csv": str(metrics), "kind": "summable"},
        })
        out = tmp_path / "attr.jsonl"
        assert main(["attribute", "--config", str(config), "--output", str(out)]) == 0
        records = [json.loads(line) for line in out.read_text().splitlines()]
        assert [r["signals"]["ras"] for r in records[:-1]] == [5.0, 5.0, -5.0]
        assert records[-1]["signals"]["population_change"] == 5.0
        assert records[-1]["signals"]["abs_error"] == 0.0

    def test_bad_population_rows_get_error_markers(self, tmp_path):
        metrics = tmp_path / "m.csv"
        self.write_metrics(metrics, [
            ("r1", 10, 15, 5, 5),
        ])
        config = write_config(tmp_path / "attr.json", {
            "spec_version": 1,
            "attribute": {
                "metrics_csv": str(metrics), "kind": "density",
                "population": {"w_control": 60, "w_test": 65, "s_control": 0, "s_test": 30},
            },
        })
        out = tmp_path / "attr.jsonl"
        assert main(["attribute", "--config", str(config), "--output", str(out)]) == 0
        records = [json.loads(line) for line in out.read_text().splitlines()]
        assert "error" in records[0]
        assert records[-1]["signals"]["warnings"] == 1.0


class TestJoinCommand:
    def test_local_and_global_outputs_identical(self, tmp_path):
        write_t1_csv(tmp_path / "t1.csv")
        source = {"kind": "base_table", "csv": str(tmp_path / "t1.csv"),
                  "schema": T1_SCHEMA_DICT}
        outputs = {}
        for strategy in ("local", "global"):
            config = write_config(tmp_path / f"join_{strategy}.json", {
                "spec_version": 1,
                "join": {"left": source, "right": source,
                         "on": ["Device", "Browser", "is_test"],
                         "left_prefix": "cur", "right_prefix": "hist",
                         "strategy": strategy},
            })
            out_dir = tmp_path / f"joined_{strategy}"
            assert main(["join", "--config", str(config), "--output", str(out_dir)]) == 0
            outputs[strategy] = out_dir
        a = (outputs["local"] / "cells.bin").read_bytes()
        b = (outputs["global"] / "cells.bin").read_bytes()
        assert a == b
        loaded = load_cellset(outputs["global"])
        assert "cur.Revenue" in loaded.schema.measure_names

    def test_join_result_csvs_on_region_dims(self, tmp_path):
        config_path = t1_crawl_config(tmp_path, thresholds={"total_weight": 0})
        crawl_out = tmp_path / "crawl.csv"
        assert main(["crawl", "--config", str(config_path), "--output", str(crawl_out),
                     "--format", "csv"]) == 0
        source = {"kind": "result_csv", "path": str(crawl_out),
                  "dimensions": [{"name": "Device"}, {"name": "Browser"}],
                  "signals": ["total_weight"]}
        out_dirs = {}
        for strategy in ("local", "global"):
            config = write_config(tmp_path / f"join_{strategy}.json", {
                "spec_version": 1,
                "join": {"left": source, "right": source, "on": ["Device", "Browser"],
                         "left_prefix": "now", "right_prefix": "before",
                         "strategy": strategy},
            })
            out_dir = tmp_path / f"joined_{strategy}"
            assert main(["join", "--config", str(config), "--output", str(out_dir)]) == 0
            out_dirs[strategy] = out_dir
        assert (out_dirs["local"] / "cells.bin").read_bytes() == \
            (out_dirs["global"] / "cells.bin").read_bytes()
        loaded = load_cellset(out_dirs["global"])
        from cubecrawl import EMPTY_REGION, FeatureRequest, Region

        frame = loaded.view(Region({"Device": "Pixel"}),
                            FeatureRequest((), ("now.total_weight", "before.total_weight")))
        assert list(frame.iter_rows()) == [((), (70.0, 70.0))]


class TestMaterializeCommand:
    def test_materialize_load_crawl_equals_live(self, tmp_path):
        config_path = t1_crawl_config(tmp_path)
        run = load_config(config_path)
        mat_config = write_config(tmp_path / "mat.json", {
            "spec_version": 1,
            "materialize": {
                "action": "materialize",
                "source": {"kind": "base_table", "csv": str(tmp_path / "t1.csv"),
                           "schema": T1_SCHEMA_DICT},
                "dims": ["Device", "Browser"],
            },
        })
        store_dir = tmp_path / "store"
        assert main(["materialize", "--config", str(mat_config),
                     "--output", str(store_dir)]) == 0
        crawl_from_store = write_config(tmp_path / "crawl_store.json", {
            "spec_version": 1,
            "input": {"csv": str(tmp_path / "t1.csv"), "schema": T1_SCHEMA_DICT},
            "crawl": json.loads(config_path.read_text())["crawl"],
        })
        live_out = tmp_path / "live.jsonl"
        assert main(["crawl", "--config", str(crawl_from_store),
                     "--output", str(live_out)]) == 0
        from cubecrawl import CrawlSpec, EntityWeightModel, load_store, top_down_crawl

        loaded = load_store(store_dir)
        spec = CrawlSpec(models=[EntityWeightModel("Revenue")],
                         dimensions=["Device", "Browser"],
                         thresholds={"total_weight": 40.0})
        stored_result = top_down_crawl(loaded, spec)
        live_records = [json.loads(line) for line in live_out.read_text().splitlines()]
        assert len(stored_result.entries) == len(live_records)

    def test_chunk_then_rechunk(self, tmp_path):
        with open(tmp_path / "daily.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["Device", "date", "Revenue"])
            for device in ("A", "B"):
                for i in range(8):
                    writer.writerow([device, f"d{i}", 10 + i])
        schema = {"dimensions": [{"name": "Device"}, {"name": "date"}],
                  "measures": [{"name": "Revenue", "agg": "sum", "sources": ["Revenue"]}]}
        source = {"kind": "base_table", "csv": str(tmp_path / "daily.csv"), "schema": schema}
        chunk_config = write_config(tmp_path / "chunk.json", {
            "spec_version": 1,
            "materialize": {"action": "chunk", "source": source, "dims": ["Device"],
                            "partition_dim": "date"},
        })
        chunks_dir = tmp_path / "chunks"
        assert main(["materialize", "--config", str(chunk_config),
                     "--output", str(chunks_dir)]) == 0
        rechunk_config = write_config(tmp_path / "rechunk.json", {
            "spec_version": 1,
            "materialize": {"action": "rechunk",
                            "source": {"kind": "store", "path": str(chunks_dir)}},
        })
        slices_dir = tmp_path / "slices"
        report = tmp_path / "reads.json"
        assert main(["materialize", "--config", str(rechunk_config),
                     "--output", str(slices_dir), "--instrument", str(report)]) == 0
        payload = json.loads(report.read_text())
        assert payload["counters"]["chunk_reads"] == 8
        from cubecrawl import FeatureRequest, Region, load_store

        sliced = load_store(slices_dir)
        before = sliced.counters["slice_reads"]
        sliced.view(Region({"Device": "A"}), FeatureRequest(("date",), ("Revenue",)))
        assert sliced.counters["slice_reads"] - before == 1


class TestWorkerDeterminism:
    def test_byte_identical_across_worker_counts(self, tmp_path):
        config_path = t1_crawl_config(tmp_path)
        outputs = []
        for workers in (1, 2, 8):
            out = tmp_path / f"w{workers}.jsonl"
            proc = subprocess.run(
                [sys.executable, "-m", "cubecrawl", "crawl",
                 "--config", str(config_path), "--output", str(out),
                 "--workers", str(workers)],
                capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]
