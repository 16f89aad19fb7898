"""Harness behavior: tuning, leakage aborts, schema checks, determinism."""

import pytest

from toydata import write_toy_dataset, write_csv, toy_rows, HEADER
from mlharness.data import LeakageDetected, UnknownColumns, load_dataset, load_split
from mlharness.harness import evaluate, train_and_tune, train_families


@pytest.fixture()
def toy(tmp_path):
    write_toy_dataset(tmp_path)
    return tmp_path


class TestTraining:
    def test_logreg_separates_toy_data(self, toy):
        splits = load_dataset(toy)
        result = train_and_tune(splits["train"], splits["val"], "LogReg", seed=0)
        report = evaluate({"LogReg": result}, splits["test"])
        assert report.f1["BENIGN"]["LogReg"] == 1.0
        assert report.f1["HEL-F"]["LogReg"] == 1.0

    def test_fixed_seed_reproduces_choice(self, toy):
        splits = load_dataset(toy)
        a = train_and_tune(splits["train"], splits["val"], "RF", seed=9)
        b = train_and_tune(splits["train"], splits["val"], "RF", seed=9)
        assert a.params == b.params
        assert a.val_macro_f1 == b.val_macro_f1

    def test_all_families_run_and_report_renders(self, toy):
        splits = load_dataset(toy)
        results = train_families(splits["train"], splits["val"], seed=0, jobs=2)
        report = evaluate(results, splits["test"])
        table = report.table()
        for family in ("LogReg", "SVM", "RF", "GB", "XGBoost", "Voting"):
            assert family in table
        assert len(report.confusion) == 6
        # classes missing from the toy test split are reported
        assert "OMSC" in report.missing_classes

    def test_xgboost_slot_records_backing(self, toy):
        splits = load_dataset(toy)
        result = train_and_tune(splits["train"], splits["val"], "XGBoost", seed=0)
        assert result.backing in (
            "xgboost.XGBClassifier",
            "sklearn.HistGradientBoostingClassifier",
        )


class TestLeakageGuards:
    def test_capture_in_two_split_files(self, tmp_path):
        write_toy_dataset(tmp_path)
        # duplicate a training capture's rows into val.csv
        train_lines = (tmp_path / "train.csv").read_text().splitlines()
        with open(tmp_path / "val.csv", "a", encoding="utf-8") as fh:
            fh.write(train_lines[1] + "\n")
        with pytest.raises(LeakageDetected):
            load_dataset(tmp_path)

    def test_manifest_conflicting_assignment(self, tmp_path):
        write_toy_dataset(tmp_path)
        with open(tmp_path / "split_manifest.txt", "a", encoding="utf-8") as fh:
            fh.write("cap-b0,val\n")  # cap-b0 is already train
        with pytest.raises(LeakageDetected):
            load_dataset(tmp_path)

    def test_row_not_covered_by_manifest(self, tmp_path):
        write_toy_dataset(tmp_path)
        manifest = (tmp_path / "split_manifest.txt").read_text().splitlines()
        kept = [line for line in manifest if not line.startswith("cap-b2")]
        (tmp_path / "split_manifest.txt").write_text("\n".join(kept) + "\n")
        with pytest.raises(LeakageDetected):
            load_dataset(tmp_path)


class TestSchema:
    def test_unknown_column_rejected(self, tmp_path):
        rows = toy_rows([("c0", "BENIGN")])
        path = tmp_path / "train.csv"
        write_csv(path, rows)
        text = path.read_text().splitlines()
        text[0] = text[0].replace("gl_service_entropy", "surprise_column")
        path.write_text("\n".join(text) + "\n")
        with pytest.raises(UnknownColumns):
            load_split(path)

    def test_feature_set_mismatch_rejected(self, tmp_path):
        rows = toy_rows([("c0", "BENIGN")])
        path = tmp_path / "x.csv"
        write_csv(path, rows)
        with pytest.raises(Exception) as exc:
            load_split(path, feature_order=["t_pkt_count"])
        assert "feature set differs" in str(exc.value)

    def test_unknown_label_rejected(self, tmp_path):
        path = tmp_path / "x.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(HEADER) + "\n")
            fh.write("c0,0,0.0,1,1,1,1,MYSTERY\n")
        with pytest.raises(Exception) as exc:
            load_split(path)
        assert "vocabulary" in str(exc.value)


class TestCli:
    def test_cli_end_to_end_and_leakage_exit(self, tmp_path, capsys):
        from mlharness.cli import main

        write_toy_dataset(tmp_path)
        assert main(["--data", str(tmp_path), "--families", "LogReg,RF", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "Class-wise F1" in out
        assert (tmp_path / "report.txt").exists()
        assert (tmp_path / "report.json").exists()
        with open(tmp_path / "split_manifest.txt", "a", encoding="utf-8") as fh:
            fh.write("cap-b0,test\n")
        assert main(["--data", str(tmp_path), "--families", "LogReg"]) == 5
