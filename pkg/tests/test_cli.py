import json

import pytest

from devdecouple import cli
from devdecouple import verify as V
from devdecouple.exceptions import ConfigError
from devdecouple.norms import exponent_fit


def write_cfg(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


SMALL_SWEEP = 'deltas = [0.0625, 0.03125, 0.015625]\np = [2.0, 6.0]\ncrosscheck_samples = 4096\n'


def test_config_p7_exit_2(tmp_path, capsys):
    path = write_cfg(tmp_path, "p = [7.0]\n")
    assert cli.main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text",
    [
        "bogus = 1\n",
        "deltas = [0.3]\n",
        "deltas = [0.125, 0.25]\n",
        "seed = -1\n",
        'family = "gaussian"\n',
        'method = "quad"\n',
        "p = [1.5]\n",
        "deltas = [\n",
        'kind = "verify"\n',
    ],
)
def test_config_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        cli.load_config(write_cfg(tmp_path, text), "sweep")


def test_bad_threads_exit_2(tmp_path):
    assert cli.main(["partition", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_seed_override(tmp_path):
    path = write_cfg(tmp_path, "seed = 5\n")
    assert cli.load_config(path, "sweep")["seed"] == 5
    assert cli.load_config(path, "sweep", {"seed": 9})["seed"] == 9
    assert cli.load_config(None, "partition")["deltas"] == [2.0**-12]


def test_partition_run(tmp_path):
    out = tmp_path / "p"
    assert cli.main(["partition", "--out", str(out)]) == 0
    rows = cli.read_csv(out / "results.csv")
    total = [r for r in rows if r["kind"] == "partition-total"]
    assert total[0]["n_caps"] == "197"
    lines = [ln for ln in (out / "partition.txt").read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 197
    kind, k, *nums = lines[0].split()
    assert kind == "moment" and len(nums) == 5
    assert all(len(n.replace("-", "").replace(".", "").lstrip("0").split("e")[0]) <= 17 for n in nums)


def test_verify_run_exit_0(tmp_path, capsys):
    path = write_cfg(tmp_path, "samples = 20000\nflatness_samples = 500\n")
    assert cli.main(["verify", "--config", str(path), "--out", str(tmp_path / "v")]) == 0
    assert "0 failed" in capsys.readouterr().out


def test_failed_check_exit_1(tmp_path, monkeypatch, capsys):
    bad = V.make_report("forced", 1.0, 0.0, (0.0,), 1)
    monkeypatch.setitem(cli.RUNNERS, "partition", lambda cfg, out, threads: ([cli.Row("x", value=1.0)], [bad], None))
    assert cli.main(["partition", "--out", str(tmp_path)]) == 1
    assert "FAIL forced" in capsys.readouterr().out


def test_sharpness_rows_and_plot(tmp_path):
    path = write_cfg(tmp_path, "p = [6.0]\n")
    out = tmp_path / "s"
    assert cli.main(["sharpness", "--config", str(path), "--out", str(out)]) == 0
    rows = cli.read_csv(out / "results.csv")
    assert [r["kind"] for r in rows] == ["sharpness"] * 4 + ["fit"]
    assert [r["k"] for r in rows[:4]] == ["8", "16", "32", "64"]
    slope = float(rows[-1]["value"])
    assert abs(slope - 1 / 3) <= 0.1
    svg = (out / "fit.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and f"slope = {slope:.4f}" in svg


def test_sweep_deterministic_across_threads_and_reruns(tmp_path):
    path = write_cfg(tmp_path, SMALL_SWEEP)
    blobs = []
    for i, threads in enumerate(["1", "3", "1"]):
        out = tmp_path / f"r{i}"
        assert cli.main(["sweep", "--config", str(path), "--out", str(out), "--threads", threads]) == 0
        blobs.append(((out / "results.csv").read_bytes(), (out / "fit.svg").read_bytes()))
    assert blobs[0] == blobs[1] == blobs[2]


def test_sweep_seed_changes_output(tmp_path):
    path = write_cfg(tmp_path, SMALL_SWEEP)
    cli.main(["sweep", "--config", str(path), "--out", str(tmp_path / "a"), "--seed", "1"])
    cli.main(["sweep", "--config", str(path), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "results.csv").read_bytes() != (tmp_path / "b" / "results.csv").read_bytes()


def test_records_jsonl_append_and_hash(tmp_path):
    out = tmp_path / "p"
    for _ in range(2):
        cli.main(["partition", "--out", str(out)])
    lines = (out / "records.jsonl").read_text().splitlines()
    assert len(lines) == 2 * len(cli.read_csv(out / "results.csv"))
    assert all(cli.validate_record(ln) for ln in lines)
    rec = json.loads(lines[0])
    rec["config"]["seed"] = 123
    assert not cli.validate_record(json.dumps(rec))


def test_csv_round_trip_and_empty(tmp_path):
    rows = [cli.Row("a", 0.1, 2, 4.0, 7, 1 / 3, None, 0), cli.Row("b")]
    path = tmp_path / "x.csv"
    cli.emit_csv(rows, path)
    back = cli.read_csv(path)
    assert float(back[0]["value"]) == 1 / 3 and back[0]["stderr"] == "" and back[1]["kind"] == "b"
    cli.emit_csv([], path)
    assert path.read_text() == "kind,delta,k,p,n_caps,value,stderr,seed\n"


def test_emit_plot_empty(tmp_path):
    with pytest.raises(ValueError):
        cli.emit_plot(None, tmp_path / "x.svg")
    fit = exponent_fit([(1, 1), (2, 2), (4, 4)])
    cli.emit_plot(fit, tmp_path / "y.svg")
    assert "slope = 1.0000" in (tmp_path / "y.svg").read_text()


def test_config_hash_canonical():
    a = cli.load_config(None, "sweep")
    b = dict(reversed(list(a.items())))
    assert cli.config_hash(a) == cli.config_hash(b)
    assert cli.config_hash(a) != cli.config_hash(a | {"seed": 1})
