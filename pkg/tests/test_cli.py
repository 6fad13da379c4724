import csv
import json

import pytest

from groupdir.cli import ABSDIFF_COLUMNS, COMPARE_COLUMNS, SWEEP_COLUMNS, main
from groupdir.evaluation import REPORT_FIELDS, MetricsReport
from groupdir.model import load_checkpoint
from groupdir.training import HISTORY_COLUMNS, TrainHistory

FAST = ["--epochs", "2", "--hidden", "8", "--embed-dim", "4", "--groups", "5"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["generate", "--out", str(d), "--seed", "1", "--n-train", "150", "--n-val", "40",
                 "--n-test", "40", "--feature-dim", "6", "--num-fourier", "6"]) == 0
    return d


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_generate_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["generate", "--seed", "1", "--out", str(tmp_path / name), "--n-train", "50",
                     "--n-val", "10", "--n-test", "10"]) == 0
    for f in ("train.csv", "val.csv", "test.csv", "config.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_generate_missing_out():
    with pytest.raises(SystemExit) as info:
        main(["generate"])
    assert info.value.code == 2


def test_generate_invalid_config(tmp_path):
    assert main(["generate", "--out", str(tmp_path), "--skew-rate", "-1"]) == 2


def test_train_outputs(data, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--data", str(data), "--out", str(out), *FAST]) == 0
    assert "MAE" in capsys.readouterr().out
    report = json.loads((out / "report.json").read_text())
    assert list(report) == list(REPORT_FIELDS)
    hist = TrainHistory.from_csv(out / "history.csv")
    assert len(hist) == 2
    params, cfg = load_checkpoint(out / "checkpoint.json")
    assert params.num_groups == 5 and cfg["num_groups"] == 5
    manifest = json.loads((out / "manifest.json").read_text())
    assert sorted(manifest["files"]) == sorted(p.name for p in out.iterdir())


def test_train_zero_epochs(data, tmp_path):
    out = tmp_path / "zero"
    assert main(["train", "--data", str(data), "--out", str(out), *FAST, "--epochs", "0"]) == 0
    assert (out / "history.csv").read_text().strip() == ",".join(HISTORY_COLUMNS)
    MetricsReport.from_dict(json.loads((out / "report.json").read_text()))


def test_train_bit_reproducible(data, tmp_path):
    for name in ("a", "b"):
        assert main(["train", "--data", str(data), "--out", str(tmp_path / name), *FAST, "--seed", "3"]) == 0
    for f in ("checkpoint.json", "history.csv", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_train_criterion_changes_loss_column(data, tmp_path):
    runs = {}
    for crit in ("soft", "ce"):
        out = tmp_path / crit
        assert main(["train", "--data", str(data), "--out", str(out), *FAST, "--criterion", crit]) == 0
        runs[crit] = TrainHistory.from_csv(out / "history.csv")
    assert runs["soft"].records[0].l_soft != runs["ce"].records[0].l_soft


def test_train_single_group_rejected(data, tmp_path):
    assert main(["train", "--data", str(data), "--out", str(tmp_path), "--groups", "1"]) == 2


def test_train_missing_data(tmp_path):
    assert main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o"), *FAST]) == 1


def test_train_vanilla(data, tmp_path):
    out = tmp_path / "van"
    assert main(["train", "--data", str(data), "--out", str(out), *FAST, "--vanilla"]) == 0
    params, cfg = load_checkpoint(out / "checkpoint.json")
    assert params.num_groups == 1 and cfg["vanilla"] and cfg["lambda2"] == 0.0


def test_eval_matches_train(data, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--data", str(data), "--out", str(out), *FAST]) == 0
    rep = tmp_path / "eval.json"
    assert main(["eval", "--data", str(data), "--checkpoint", str(out / "checkpoint.json"),
                 "--out", str(rep), "--groups", "5"]) == 0
    assert rep.read_bytes() == (out / "report.json").read_bytes()


def test_eval_group_mismatch(data, tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--data", str(data), "--out", str(out), *FAST]) == 0
    assert main(["eval", "--data", str(data), "--checkpoint", str(out / "checkpoint.json"),
                 "--groups", "20"]) == 2


def test_eval_missing_checkpoint(data, tmp_path):
    assert main(["eval", "--data", str(data), "--checkpoint", str(tmp_path / "none.json")]) == 1


def test_compare_single_seed(data, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--data", str(data), "--out", str(out), *FAST, "--seeds", "1",
                 "--criteria", "soft"]) == 0
    with open(out / "compare.csv", newline="") as fh:
        assert tuple(next(csv.reader(fh))) == COMPARE_COLUMNS
    rows = read_rows(out / "compare.csv")
    assert len(rows) == 2
    run, med = rows
    assert med["seed"] == "median"
    assert all(run[c] == med[c] for c in COMPARE_COLUMNS if c != "seed")
    hist = read_rows(out / "absdiff.csv")
    assert tuple(hist[0]) == ABSDIFF_COLUMNS
    assert sum(int(r["count"]) for r in hist) == 40


def test_compare_all_criteria_parallel(data, tmp_path, monkeypatch):
    serial, parallel = tmp_path / "s", tmp_path / "p"
    args = ["--data", str(data), *FAST, "--seeds", "1,2"]
    assert main(["compare", "--out", str(serial), *args]) == 0
    monkeypatch.setenv("GROUPDIR_THREADS", "2")
    assert main(["compare", "--out", str(parallel), *args]) == 0
    rows = read_rows(serial / "compare.csv")
    assert [r["criterion"] for r in rows] == ["soft"] * 3 + ["ce"] * 3 + ["la"] * 3
    assert (serial / "compare.csv").read_bytes() == (parallel / "compare.csv").read_bytes()


def test_compare_bad_criteria(data, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["compare", "--data", str(data), "--out", str(tmp_path), "--criteria", "mse"])
    assert info.value.code == 2


def test_sweep_groups(data, tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep-groups", "--data", str(data), "--out", str(out), "--epochs", "1", "--hidden", "8",
                 "--embed-dim", "4", "--seeds", "1", "--group-list", "2,5,10,20"]) == 0
    rows = read_rows(out / "sweep.csv")
    assert tuple(rows[0]) == SWEEP_COLUMNS
    summary = [r for r in rows if r["seed"] == "median"]
    assert [int(r["groups"]) for r in summary] == [2, 5, 10, 20]


def test_sweep_groups_empty_list(data, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["sweep-groups", "--data", str(data), "--out", str(tmp_path), "--group-list", ""])
    assert info.value.code == 2


def test_sweep_groups_rejects_one_group(data, tmp_path):
    assert main(["sweep-groups", "--data", str(data), "--out", str(tmp_path), "--group-list", "1,2",
                 "--seeds", "1"]) == 2


def test_bad_thread_env(data, tmp_path, monkeypatch):
    monkeypatch.setenv("GROUPDIR_THREADS", "many")
    assert main(["compare", "--data", str(data), "--out", str(tmp_path), *FAST, "--seeds", "1,2",
                 "--criteria", "ce"]) == 2
