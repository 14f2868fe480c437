import csv
import json
from pathlib import Path

import pytest

import scalelink as sl
from scalelink.cli import main
from scalelink.io import (
    LawDocument,
    LinkDocument,
    load_law_document,
    load_link_document,
    read_runs,
    save_law_document,
    save_link_document,
    write_runs,
)
from scalelink.synthetic import make_twin_world

FIXTURES = Path(__file__).parent / "fixtures" / "twin_world"
SOURCE = str(FIXTURES / "source.csv")
TARGET_SMALL = str(FIXTURES / "target_small.csv")
TARGET_EVAL = str(FIXTURES / "target_eval.csv")
LARGE = str(FIXTURES / "large.csv")

# the documented default grid is 4704 starts; tests shrink it to keep each
# CLI fit well under a second
GRID_FLAGS = [
    "--grid-e", "0.25,1.0,2.0",
    "--grid-log10-a", "5,8",
    "--grid-log10-b", "7,10",
    "--grid-alpha", "0.2,0.35,0.5,0.65",
    "--grid-beta", "0.2,0.35,0.5,0.65",
]

PUBLISHED_LAW = sl.ScalingLaw(form="nested", E=1.97, A=6.68e7, B=8.90e8, alpha=0.41, beta=0.46)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def combined_csv(workdir):
    path = workdir / "combined.csv"
    write_runs(path, read_runs(SOURCE) + read_runs(TARGET_SMALL))
    return str(path)


@pytest.fixture(scope="module")
def law_json(workdir):
    path = workdir / "law.json"
    rc = main(
        ["fit-law", "--runs", SOURCE, "--dataset", "webtext-a", "--metric", "ce"]
        + GRID_FLAGS
        + ["--out", str(path)]
    )
    assert rc == 0
    return str(path)


@pytest.fixture(scope="module")
def link_json(workdir, combined_csv, law_json):
    path = workdir / "link.json"
    rc = main(
        [
            "fit-link", "--runs", combined_csv,
            "--source-dataset", "webtext-a", "--source-metric", "ce",
            "--target-dataset", "webtext-b", "--target-metric", "ce",
            "--shift-x-law", law_json, "--shift-y", "free",
            "--kind", "train_to_train",
            "--out", str(path),
        ]
    )
    assert rc == 0
    return str(path)


class TestIngest:
    def test_summarizes_a_run_table(self, capsys):
        assert main(["ingest", "--runs", SOURCE]) == 0
        out = capsys.readouterr().out
        assert "ok: 176 records" in out
        assert "datasets: webtext-a" in out
        assert "metrics: ce/train, heldout-ce/test" in out

    def test_bad_table_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("dataset,loss\nwebtext-a,3.0\n")
        assert main(["ingest", "--runs", str(bad)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_out_writes_a_normalized_copy(self, tmp_path):
        out = tmp_path / "copy.csv"
        assert main(["ingest", "--runs", TARGET_EVAL, "--out", str(out)]) == 0
        assert read_runs(out) == read_runs(TARGET_EVAL)


class TestFitLaw:
    def test_recovers_the_generating_law_roughly(self, law_json):
        law = load_law_document(law_json).law
        assert law.form == "nested"
        assert 1.8 < law.E < 2.15
        assert 0.3 < law.alpha < 0.5
        assert 0.35 < law.beta < 0.55

    def test_prints_the_parameter_table(self, capsys):
        rc = main(
            ["fit-law", "--runs", SOURCE, "--dataset", "webtext-a", "--metric", "ce"]
            + GRID_FLAGS
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].split() == ["form", "A", "B", "E", "alpha", "beta", "a"]
        assert "nested" in out

    def test_document_carries_provenance(self, law_json):
        doc = load_law_document(law_json)
        assert doc.dataset == "webtext-a"
        assert doc.metric == sl.MetricId("ce", "train")
        assert set(doc.provenance) == {"input_digest", "config", "tool_version"}
        assert len(doc.provenance["input_digest"]) == 64

    def test_rerun_is_byte_identical(self, workdir, law_json):
        again = workdir / "law_again.json"
        rc = main(
            ["fit-law", "--runs", SOURCE, "--dataset", "webtext-a", "--metric", "ce"]
            + GRID_FLAGS
            + ["--out", str(again)]
        )
        assert rc == 0
        assert again.read_bytes() == Path(law_json).read_bytes()

    def test_unknown_dataset_exits_one(self, capsys):
        rc = main(["fit-law", "--runs", SOURCE, "--dataset", "nope", "--metric", "ce"])
        assert rc == 1
        assert "available: webtext-a" in capsys.readouterr().err


class TestFitLink:
    def test_reports_pair_count_and_link(self, link_json, capsys):
        rc = main(
            [
                "fit-link", "--runs", str(Path(link_json).parent / "combined.csv"),
                "--source-dataset", "webtext-a", "--source-metric", "ce",
                "--target-dataset", "webtext-b", "--target-metric", "ce",
                "--shift-x", "1.97", "--shift-y", "free",
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "pairs: 8" in out

    def test_saved_link_is_plausible(self, link_json):
        link = load_link_document(link_json).link
        assert link.kind == "train_to_train"
        assert link.shift_y_fitted_free
        assert 0.3 < link.K < 1.0
        assert 0.8 < link.kappa < 1.4
        assert link.source == (sl.DatasetId("webtext-a"), sl.MetricId("ce", "train"))
        assert link.target == (sl.DatasetId("webtext-b"), sl.MetricId("ce", "train"))


class TestTranslateAndCompose:
    def make_docs(self, tmp_path):
        law_path = tmp_path / "published_law.json"
        save_law_document(law_path, LawDocument(law=PUBLISHED_LAW, dataset="webtext-a"))
        first = sl.LossLink(
            kind="train_to_train", K=0.60, kappa=1.07, shift_x=1.97, shift_y=1.32,
            source=(sl.DatasetId("webtext-a"), sl.MetricId("ce", "train")),
            target=(sl.DatasetId("webtext-b"), sl.MetricId("ce", "train")),
        )
        second = sl.LossLink(
            kind="train_to_test", K=0.85, kappa=1.04, shift_x=1.32, shift_y=2.05,
            source=(sl.DatasetId("webtext-b"), sl.MetricId("ce", "train")),
            target=(sl.DatasetId("webtext-b"), sl.MetricId("heldout-ce", "test")),
        )
        first_path = tmp_path / "first.json"
        second_path = tmp_path / "second.json"
        save_link_document(first_path, LinkDocument(link=first))
        save_link_document(second_path, LinkDocument(link=second))
        return law_path, first_path, second_path

    def test_translate_prints_the_pushed_law(self, tmp_path, capsys):
        law_path, first_path, _ = self.make_docs(tmp_path)
        out_path = tmp_path / "translated.json"
        rc = main(
            ["translate", "--law", str(law_path), "--link", str(first_path), "--out", str(out_path)]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "1.32000" in out
        assert "2.08488e+07" in out
        translated = load_law_document(out_path)
        assert translated.law.E == 1.32
        assert translated.law.alpha == pytest.approx(0.41 * 1.07, rel=1e-12)
        assert translated.dataset == "webtext-b"

    def test_compose_chains_the_links(self, tmp_path, capsys):
        _, first_path, second_path = self.make_docs(tmp_path)
        out_path = tmp_path / "composed.json"
        rc = main(
            ["compose", "--first", str(first_path), "--second", str(second_path), "--out", str(out_path)]
        )
        assert rc == 0
        assert "1.11280" in capsys.readouterr().out
        composed = load_link_document(out_path).link
        assert composed.kappa == pytest.approx(1.07 * 1.04, rel=1e-12)
        assert composed.shift_x == 1.97
        assert composed.shift_y == 2.05

    def test_compose_rejects_mismatched_endpoints(self, tmp_path, capsys):
        _, first_path, _ = self.make_docs(tmp_path)
        rc = main(["compose", "--first", str(first_path), "--second", str(first_path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestScenario:
    def test_translate_task_table_and_outputs(self, tmp_path, capsys):
        out_csv = tmp_path / "scores.csv"
        out_law = tmp_path / "translated.json"
        rc = main(
            [
                "scenario", "--task", "translate",
                "--source", SOURCE, "--target-small", TARGET_SMALL, "--target-eval", TARGET_EVAL,
                "--out", str(out_csv), "--out-law", str(out_law),
            ]
            + GRID_FLAGS
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].split() == ["model", "r_squared"]
        with open(out_csv, newline="") as fh:
            rows = {row["model"]: row["r_squared"] for row in csv.DictReader(fh)}
        assert set(rows) == {"translated", "baseline", "skyline"}
        assert float(rows["translated"]) > float(rows["baseline"])
        assert float(rows["skyline"]) > 0.99
        assert load_law_document(out_law).dataset == "webtext-b"

    def test_predict_task_ranks_link_methods_first(self, tmp_path, capsys):
        world = make_twin_world(seed=0, noise_sigma=0.01)
        out_csv = tmp_path / "preds.csv"
        rc = main(
            [
                "scenario", "--task", "predict",
                "--source", SOURCE, "--target-small", TARGET_SMALL,
                "--large", LARGE, "--test-metric", "heldout-ce",
                "--actual", repr(world.actual_large_test),
                "--out", str(out_csv),
            ]
            + GRID_FLAGS
        )
        assert rc == 0
        assert "method" in capsys.readouterr().out
        with open(out_csv, newline="") as fh:
            rows = {row["method"]: row for row in csv.DictReader(fh)}
        assert len(rows) == 5
        rel = {m: float(r["rel_error"]) for m, r in rows.items()}
        assert rel["test_to_test"] < rel["identity"]
        assert rel["general_train_to_test"] < rel["identity"]
        assert float(rows["identity"]["prediction"]) == world.large_test.loss

    def test_single_method_predict(self, capsys):
        rc = main(
            [
                "scenario", "--task", "predict",
                "--source", SOURCE, "--target-small", TARGET_SMALL,
                "--large", LARGE, "--test-metric", "heldout-ce",
                "--method", "identity",
            ]
            + GRID_FLAGS
        )
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2
        assert lines[1].split()[0] == "identity"

    def test_translate_task_requires_eval_table(self, capsys):
        rc = main(
            ["scenario", "--task", "translate", "--source", SOURCE, "--target-small", TARGET_SMALL]
            + GRID_FLAGS
        )
        assert rc == 1
        assert "--target-eval" in capsys.readouterr().err

    def test_predict_task_requires_test_metric(self, capsys):
        rc = main(
            [
                "scenario", "--task", "predict",
                "--source", SOURCE, "--target-small", TARGET_SMALL, "--large", LARGE,
            ]
            + GRID_FLAGS
        )
        assert rc == 1
        assert "--test-metric" in capsys.readouterr().err


class TestSimulate:
    def test_prints_theory_at_the_reference_point(self, capsys):
        rc = main(["simulate", "--m", "50000", "--n", "100", "--d", "1000", "--beta", "1", "--seeds", "1"])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].split() == ["M", "N", "D", "beta", "mc_mean", "mc_stderr", "theory", "theory_finite_m"]
        assert "0.013438" in lines[1]

    def test_sweep_writes_one_row_per_config(self, tmp_path):
        out = tmp_path / "sim.csv"
        rc = main(
            [
                "simulate", "--m", "2000", "--n", "10,20", "--d", "100,200", "--beta", "1",
                "--seeds", "5", "--out", str(out),
            ]
        )
        assert rc == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert {(r["N"], r["D"]) for r in rows} == {("10", "100"), ("10", "200"), ("20", "100"), ("20", "200")}

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["simulate", "--m", "2000", "--n", "10", "--d", "100", "--beta", "1.5", "--seeds", "5"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_singular_config_exits_two(self, capsys):
        rc = main(["simulate", "--m", "2", "--n", "3", "--d", "5", "--beta", "1", "--seeds", "1"])
        assert rc == 2
        assert "numerical error:" in capsys.readouterr().err

    def test_bad_numeric_list_exits_one(self, capsys):
        rc = main(["simulate", "--m", "abc", "--n", "10", "--d", "100", "--beta", "1"])
        assert rc == 1
        assert "bad numeric list" in capsys.readouterr().err


class TestPlotSeries:
    def test_law_series_has_data_and_fit_rows(self, tmp_path, law_json, capsys):
        out = tmp_path / "series.csv"
        rc = main(["plot-series", "--law", law_json, "--runs", SOURCE, "--out", str(out)])
        assert rc == 0
        assert "wrote 288 rows" in capsys.readouterr().out
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        kinds = {r["series"] for r in rows}
        assert kinds == {"data", "fit"}
        assert sum(r["series"] == "data" for r in rows) == 88

    def test_link_series_uses_the_paired_runs(self, tmp_path, link_json, combined_csv, capsys):
        out = tmp_path / "series.csv"
        rc = main(["plot-series", "--link", link_json, "--runs", combined_csv, "--out", str(out)])
        assert rc == 0
        assert "wrote 208 rows" in capsys.readouterr().out

    def test_sim_series_splits_mc_and_theory(self, tmp_path):
        sim = tmp_path / "sim.csv"
        main(["simulate", "--m", "2000", "--n", "10", "--d", "100,200,400", "--beta", "1", "--seeds", "5", "--out", str(sim)])
        out = tmp_path / "series.csv"
        assert main(["plot-series", "--sim", str(sim), "--out", str(out)]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6
        assert {r["series"] for r in rows} == {"mc", "theory"}
        assert {r["x"] for r in rows} == {"100", "200", "400"}

    def test_multi_sweep_sim_table_rejected(self, tmp_path, capsys):
        sim = tmp_path / "sim.csv"
        main(["simulate", "--m", "2000", "--n", "10,20", "--d", "100,200", "--beta", "1", "--seeds", "5", "--out", str(sim)])
        rc = main(["plot-series", "--sim", str(sim), "--out", str(tmp_path / "series.csv")])
        assert rc == 1
        assert "one sweep at a time" in capsys.readouterr().err

    def test_requires_exactly_one_source(self, tmp_path, law_json, link_json, capsys):
        rc = main(["plot-series", "--law", law_json, "--link", link_json, "--out", str(tmp_path / "s.csv")])
        assert rc == 1
        assert "exactly one" in capsys.readouterr().err

    def test_requires_out(self, law_json, capsys):
        rc = main(["plot-series", "--law", law_json, "--runs", SOURCE])
        assert rc == 1
        assert "--out" in capsys.readouterr().err


class TestShow:
    def test_law_document_echoes_the_frontier_exponent(self, tmp_path, capsys):
        path = tmp_path / "law.json"
        save_law_document(path, LawDocument(law=PUBLISHED_LAW, dataset="webtext-a"))
        assert main(["show", "--doc", str(path)]) == 0
        out = capsys.readouterr().out
        assert "dataset: webtext-a" in out
        assert "0.52874" in out

    def test_link_document(self, tmp_path, capsys):
        path = tmp_path / "link.json"
        link = sl.LossLink(kind="general", K=0.6, kappa=1.07, shift_x=1.97, shift_y=1.32)
        save_link_document(path, LinkDocument(link=link))
        assert main(["show", "--doc", str(path)]) == 0
        assert "1.07000" in capsys.readouterr().out

    def test_unknown_kind_exits_one(self, tmp_path, capsys):
        path = tmp_path / "doc.json"
        path.write_text(json.dumps({"kind": "mystery"}))
        assert main(["show", "--doc", str(path)]) == 1
        assert "unknown document kind" in capsys.readouterr().err


class TestUsageErrors:
    def test_no_subcommand_exits_one(self, capsys):
        assert main([]) == 1
        assert "subcommand" in capsys.readouterr().err

    def test_unknown_flag_exits_one(self, capsys):
        assert main(["ingest", "--runs", SOURCE, "--bogus"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_required_flag_exits_one(self, capsys):
        assert main(["fit-law", "--runs", SOURCE, "--metric", "ce"]) == 1
        assert "--dataset" in capsys.readouterr().err
