import subprocess
import sys

import pytest

from sharpsearch.cli import main
from sharpsearch.optimizer import RunLog
from sharpsearch.reports import count_marks


@pytest.fixture
def spaces(data_dir):
    return str(data_dir / "table1.space"), str(data_dir / "table3.space")


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_space_info(spaces, capsys):
    code, out, _ = run(["space", "info", "--space", spaces[1]], capsys)
    assert code == 0
    assert "cardinality: 398131200" in out
    assert "optimizer" in out and "adadelta, rmsprop" in out


def test_space_missing_file(tmp_path, capsys):
    code, _, err = run(["space", "info", "--space", str(tmp_path / "none.space")], capsys)
    assert code == 2 and "not found" in err


def test_malformed_space(tmp_path, capsys):
    p = tmp_path / "bad.space"
    p.write_text("lr numeric 0.1, 1\nfoo weird a, b\n")
    code, _, err = run(["space", "info", "--space", str(p)], capsys)
    assert code == 2 and "bad.space:2" in err


def test_bo_writes_log(spaces, tmp_path, capsys):
    code, out, _ = run(["bo", "--space", spaces[0], "--n-iter", "15", "--out", str(tmp_path)], capsys)
    assert code == 0
    log = RunLog.read(tmp_path / "runlog.tsv")
    assert len(log) == 15
    assert [r.phase for r in log] == ["init", "init"] + ["bayes"] * 13
    assert "evaluations: 15" in out


@pytest.mark.parametrize("acq", ["ucb", "poi"])
def test_bo_acquisitions(spaces, tmp_path, capsys, acq):
    code, _, _ = run(["bo", "--space", spaces[0], "--n-iter", "6", "--acq", acq, "--out", str(tmp_path)], capsys)
    assert code == 0


def test_bo_large_space(spaces, tmp_path, capsys):
    code, _, _ = run(["bo", "--space", spaces[1], "--n-iter", "5", "--candidate-limit", "128",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    assert len(RunLog.read(tmp_path / "runlog.tsv")) == 5


def test_bo_budget_too_large(tmp_path, capsys):
    p = tmp_path / "s.space"
    p.write_text("a numeric 1, 2\n")
    code, _, _ = run(["bo", "--space", str(p), "--n-iter", "3", "--n-init", "1", "--out", str(tmp_path)], capsys)
    assert code == 3


def test_bo_bad_loop(spaces, tmp_path, capsys):
    code, _, _ = run(["bo", "--space", spaces[0], "--n-iter", "1", "--out", str(tmp_path)], capsys)
    assert code == 2


def test_grid_tabular_matches_table(spaces, tmp_path, capsys):
    table = tmp_path / "table.tsv"
    code, out, _ = run(["bench", "make-tabular", "--space", spaces[0], "--landscape-seed", "3",
                        "--out", str(table)], capsys)
    assert code == 0 and "wrote 256 rows" in out
    best = float(out.split("max value: ")[1].split()[0])
    code, _, _ = run(["grid", "--space", spaces[0], "--objective", "tabular", "--table", str(table),
                      "--out", str(tmp_path / "g")], capsys)
    assert code == 0
    log = RunLog.read(tmp_path / "g" / "runlog.tsv")
    assert len(log) == 256 and {r.phase for r in log} == {"grid"}
    assert log.best().value == best


def test_grid_refuses_large_space(spaces, tmp_path, capsys):
    code, _, err = run(["grid", "--space", spaces[1], "--out", str(tmp_path)], capsys)
    assert code == 3 and "398131200" in err


def test_tabular_needs_table(spaces, tmp_path, capsys):
    code, _, _ = run(["grid", "--space", spaces[0], "--objective", "tabular", "--out", str(tmp_path)], capsys)
    assert code == 2


def test_all_failed_exit_4(spaces, tmp_path, capsys, monkeypatch):
    import sharpsearch.cli as cli

    def broken(cfg):
        raise RuntimeError("diverged")

    monkeypatch.setattr(cli, "_objective", lambda args, space: broken)
    code, out, _ = run(["bo", "--space", spaces[0], "--n-iter", "3", "--out", str(tmp_path)], capsys)
    assert code == 4 and "failed: 3" in out
    assert {r.status for r in RunLog.read(tmp_path / "runlog.tsv")} == {"failed"}


ITER12 = ["--set", "lr=1", "--set", "decay=1e-6", "--config",
          "sh_st=25 sh_du=7 sh_int=2 filter1=3 feat1=128 dense=1024"]


def test_train_one_schedule_warning(spaces, tmp_path, capsys):
    code, out, err = run(["train-one", "--space", spaces[0], *ITER12, "--epochs", "1",
                          "--width-divisor", "32", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "schedule incomplete: group 0" in err
    assert (tmp_path / "history.csv").read_text().startswith("epoch,loss,val_accuracy,sharpness")
    assert (tmp_path / "checkpoint.npz").exists()
    assert "test accuracy" in (tmp_path / "summary.txt").read_text()


def test_train_one_unknown_value(spaces, tmp_path, capsys):
    code, _, err = run(["train-one", "--space", spaces[0], *ITER12, "--set", "lr=0.5",
                        "--out", str(tmp_path)], capsys)
    assert code == 2


def test_report_trace_and_hist(data_dir, spaces, tmp_path, capsys):
    log = str(data_dir / "table2_runlog.tsv")
    code, out, _ = run(["report", "trace", "--log", log], capsys)
    assert code == 0
    rows = out.strip().splitlines()[1:]
    assert len(rows) == 15 and rows[-1].endswith("0.5313")
    code, out, _ = run(["report", "hist", "--log", log, "--space", spaces[0], "--out", str(tmp_path / "h.csv")],
                       capsys)
    assert code == 0
    assert (tmp_path / "h.csv").read_text() == out
    counts = {}
    for line in out.strip().splitlines()[1:]:
        name, _, count, _ = line.split(",")
        counts[name] = counts.get(name, 0) + int(count)
    assert set(counts.values()) == {15}
    assert "lr,1,10,1" in out


def test_report_sensitivity(data_dir, spaces, capsys):
    code, out, _ = run(["report", "sensitivity", "--log", str(data_dir / "table6_runlog.tsv"),
                        "--space", spaces[1], "--experiments", "4,5"], capsys)
    assert code == 0
    rows = [line.split(",") for line in out.strip().splitlines()[1:]]
    assert count_marks(rows) == 2
    marked = sorted(r[0] for r in rows if r[-1].endswith("*"))
    assert marked == ["bn_momentum_dense", "bn_scale"]


def test_report_errors(data_dir, tmp_path, capsys):
    log = str(data_dir / "table6_runlog.tsv")
    assert run(["report", "sensitivity", "--log", log, "--experiments", "4,99"], capsys)[0] == 2
    assert run(["report", "sensitivity", "--log", log, "--experiments", "a"], capsys)[0] == 2
    assert run(["report", "trace", "--log", str(tmp_path / "none.tsv")], capsys)[0] == 2
    bad = tmp_path / "bad.tsv"
    bad.write_text("1\tinit\ta=1\t0.5\n")
    assert run(["report", "trace", "--log", str(bad)], capsys)[0] == 2


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "sharpsearch.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "train-one" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "sharpsearch.cli", "bo"], capture_output=True, text=True)
    assert proc.returncode == 2


def test_train_one_iter12_fifty_epochs(spaces, data_dir, tmp_path, capsys):
    small = tmp_path / "small.csv"
    small.write_text("\n".join((data_dir / "digits8x8.csv").read_text().splitlines()[:40]) + "\n")
    code, out, err = run(["train-one", "--space", spaces[0], *ITER12, "--epochs", "50", "--dataset", str(small),
                          "--width-divisor", "64", "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    assert "warning: schedule incomplete: group 3" in err
    history = (tmp_path / "o" / "history.csv").read_text().splitlines()
    assert len(history) == 51
    # at the last epoch (49) groups 0 and 1 are sharp, group 2 is 6/7 of the way, group 3 has not started
    last = [float(v) for v in history[-1].split(",")[3].split(";")]
    assert last[:2] == [1.0, 1.0] and last[2] == pytest.approx(6 / 7) and last[3] == 0.0


def test_train_one_zero_epochs_and_repeat(spaces, tmp_path, capsys):
    outs = []
    for run_dir in ("a", "b"):
        code, out, _ = run(["train-one", "--space", spaces[0], *ITER12, "--epochs", "0", "--width-divisor", "32",
                            "--out", str(tmp_path / run_dir)], capsys)
        assert code == 0 and "epochs: 0" in out
        outs.append(out)
    assert (tmp_path / "a" / "history.csv").read_text() == "epoch,loss,val_accuracy,sharpness\n"
    assert outs[0] == outs[1]
    assert (tmp_path / "a" / "checkpoint.npz").read_bytes() == (tmp_path / "b" / "checkpoint.npz").read_bytes()
