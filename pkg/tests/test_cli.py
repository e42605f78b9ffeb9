import csv
import io
import json
import os
import subprocess
import sys

import pytest
from hypothesis import given, strategies as st

from ainrelay import cli, dof
from ainrelay.cli import ExperimentConfig, main, parse_config_text


def run(argv):
    out = io.StringIO()
    code = main(argv, stdout=out)
    return code, out.getvalue()


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# -- verify --------------------------------------------------------------------

def test_verify_passes():
    code, out = run(["verify", "--m", "4", "--n-channels", "100"])
    assert code == 0
    assert "max residual" in out and out.rstrip().endswith("pass")


def test_verify_m8_diversity():
    code, _ = run(["verify", "--m", "8", "--n-channels", "20", "--diversity"])
    assert code == 0


def test_verify_rejects_m5(capsys):
    code, _ = run(["verify", "--m", "5"])
    assert code == 2
    assert "M must be a multiple of 4" in capsys.readouterr().err


def test_verify_injected_singular_channel():
    code, out = run(["verify", "--n-channels", "3", "--inject-singular"])
    assert code == 1
    assert "FAIL" in out and "singular" in out


# -- sweep ---------------------------------------------------------------------

def test_sweep_ain_relay(tmp_path):
    path = tmp_path / "s.csv"
    code, _ = run(["sweep", "--scenario", "ain_relay", "--m", "4", "--snr", "60:100:10",
                   "--n-channels", "40", "--n-noise", "10", "--out", str(path)])
    assert code == 0
    rows = read_csv(path)
    assert list(rows[0].keys()) == list(cli.SWEEP_COLUMNS)
    data = [r for r in rows if r["row_type"] == "data"]
    summary = [r for r in rows if r["row_type"] == "summary"]
    assert len(data) == 5 and len(summary) == 1
    assert [float(r["snr_db"]) for r in data] == [60, 70, 80, 90, 100]
    assert 5.7 <= float(summary[0]["slope"]) <= 6.3
    assert float(summary[0]["r_squared"]) >= 0.999
    for r in data:
        assert float(r["sum_rate_bits"]) == pytest.approx(
            float(r["user1_rate"]) + float(r["user2_rate"]), rel=1e-9)
    raw = path.read_bytes()
    assert b"\r" not in raw


def test_sweep_two_scenarios_grouped(tmp_path):
    path = tmp_path / "s.csv"
    code, _ = run(["sweep", "--scenario", "ain_relay,tdma", "--n-channels", "5",
                   "--n-noise", "0", "--out", str(path)])
    assert code == 0
    rows = read_csv(path)
    assert [r["scenario"] for r in rows] == ["ain_relay"] * 6 + ["tdma"] * 6
    assert [r["row_type"] for r in rows].count("summary") == 2
    assert rows[5]["row_type"] == "summary" and rows[11]["row_type"] == "summary"


def test_sweep_rerun_byte_identical(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("scenario = ain_relay, two_antenna_relay\nn_channels = 4\nn_noise = 20\n"
                   "mode = zf_forward\nseed = 17\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["sweep", "--config", str(cfg), "--out", str(a)])[0] == 0
    assert run(["sweep", "--config", str(cfg), "--out", str(b)])[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_sweep_json_parity(tmp_path):
    c, j = tmp_path / "a.csv", tmp_path / "a.json"
    base = ["sweep", "--n-channels", "3", "--n-noise", "10", "--scenario", "tdma,no_relay_zf"]
    assert run(base + ["--out", str(c)])[0] == 0
    assert run(base + ["--out", str(j), "--format", "json"])[0] == 0
    doc = json.loads(j.read_text())
    assert doc["schema"] == "ainrelay-sweep/1"
    assert doc["columns"] == list(cli.SWEEP_COLUMNS)
    assert_parity(read_csv(c), doc["rows"])


def assert_parity(csv_rows, json_rows):
    assert len(csv_rows) == len(json_rows)
    for cr, jr in zip(csv_rows, json_rows):
        assert list(cr) == list(jr)
        for key, text in cr.items():
            value = jr[key]
            if text in ("", "nan"):
                assert value is None
            elif isinstance(value, str):
                assert value == text
            else:
                assert value == float(text)


def test_sweep_unwritable_path_before_compute(monkeypatch, capsys):
    def boom(*a, **k):
        raise AssertionError("computation started")
    monkeypatch.setattr(dof, "sweep", boom)
    code, _ = run(["sweep", "--out", "/nonexistent-dir/x.csv"])
    assert code == 3
    assert "cannot write" in capsys.readouterr().err


def test_no_partial_file_on_failure(tmp_path, monkeypatch):
    path = tmp_path / "keep.csv"
    path.write_text("old\n")

    def boom(*a, **k):
        raise OSError("disk vanished")
    monkeypatch.setattr(dof, "sweep", boom)
    code, _ = run(["sweep", "--out", str(path)])
    assert code == 3
    assert path.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["keep.csv"]


def test_sweep_stdout_when_no_out():
    code, out = run(["sweep", "--scenario", "tdma", "--n-channels", "2", "--n-noise", "0"])
    assert code == 0
    assert out.splitlines()[0] == ",".join(cli.SWEEP_COLUMNS)


def test_sweep_bad_grid(capsys):
    code, _ = run(["sweep", "--snr", "10:20:10"])
    assert code == 2


# -- scalar --------------------------------------------------------------------

def test_scalar_csv(tmp_path):
    path = tmp_path / "s.csv"
    code, _ = run(["scalar", "--snr", "60:120:10", "--n-symbols", "1000", "--out", str(path)])
    assert code == 0
    rows = read_csv(path)
    assert list(rows[0].keys()) == list(cli.SCALAR_COLUMNS)
    assert len(rows) == 7
    pts = dof.scalar_sweep([60, 70, 80, 90, 100, 110, 120], n_symbols=1000)
    for row, pt in zip(rows, pts):
        assert float(row["d_min"]) == pytest.approx(pt.d_min, rel=1e-11)
        assert int(row["q"]) == pt.q
    # within a fixed Q the minimum distance grows with power
    for a, b in zip(rows, rows[1:]):
        if a["q"] == b["q"]:
            assert float(b["d_min"]) > float(a["d_min"])


def test_scalar_q1_rates_zero(tmp_path):
    path = tmp_path / "s.csv"
    code, _ = run(["scalar", "--snr", "0:20:10", "--n-symbols", "200", "--out", str(path)])
    assert code == 0
    for row in read_csv(path):
        assert row["q"] == "1"
        assert all(float(row[f"rate{i}_{j}"]) == 0 for i in (1, 2) for j in (1, 2, 3))


def test_scalar_json_parity(tmp_path):
    c, j = tmp_path / "a.csv", tmp_path / "a.json"
    base = ["scalar", "--snr", "0:80:20", "--n-symbols", "300"]
    assert run(base + ["--out", str(c)])[0] == 0
    assert run(base + ["--out", str(j), "--format", "json"])[0] == 0
    doc = json.loads(j.read_text())
    assert doc["schema"] == "ainrelay-scalar/1"
    assert_parity(read_csv(c), doc["rows"])


def test_scalar_budget_message(capsys):
    code, _ = run(["scalar", "--snr", "60:120:10", "--budget", "1000"])
    assert code == 2
    err = capsys.readouterr().err
    assert "Q=" in err and "budget of 1000" in err


def test_scalar_rejects_zf_forward(capsys):
    code, _ = run(["scalar", "--mode", "zf_forward"])
    assert code == 2


# -- config --------------------------------------------------------------------

configs = st.builds(
    ExperimentConfig,
    scenario=st.lists(st.sampled_from([s.value for s in dof.Scenario]), min_size=1,
                      max_size=3).map(tuple),
    m=st.sampled_from([4, 8, 12]),
    snr_start=st.integers(0, 60).map(float),
    snr_stop=st.integers(60, 140).map(float),
    snr_step=st.sampled_from([1.0, 2.5, 10.0]),
    n_channels=st.integers(1, 10**4),
    n_noise=st.integers(0, 10**4),
    seed=st.integers(0, 2**64 - 1),
    mode=st.sampled_from(["default", "genie", "zf_forward", "hard_decision"]),
    diversity=st.booleans(),
    gamma=st.floats(0.01, 100),
    epsilon=st.floats(0.01, 0.99),
    n_symbols=st.integers(1, 10**6),
    budget=st.integers(1, 10**9),
    out=st.sampled_from(["", "out.csv", "results/run 1.json"]),
    format=st.sampled_from(["csv", "json"]),
)


@given(cfg=configs)
def test_config_round_trip(cfg):
    cfg.validate()
    again = parse_config_text(cfg.to_text())
    assert again == cfg
    assert again.snr_grid == cfg.snr_grid


def test_flags_override_file(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nseed = 5\nm = 8\nsnr = 60:120:20\nepsilon = 0.3\n")
    args = cli.build_parser().parse_args(["sweep", "--config", str(path), "--seed", "9"])
    cfg = cli.load_config(args)
    assert cfg.seed == 9 and cfg.m == 8 and cfg.epsilon == 0.3
    assert cfg.snr_grid == [60.0, 80.0, 100.0, 120.0]


@pytest.mark.parametrize("text,field", [
    ("epsilon = 2\n", "epsilon"),
    ("colour = blue\n", "colour"),
    ("m = four\n", "m"),
    ("snr = 60:100\n", "snr"),
    ("scenario = warp\n", "scenario"),
    ("just words\n", "line 1"),
])
def test_invalid_config_field_message(tmp_path, capsys, text, field):
    path = tmp_path / "c.cfg"
    path.write_text(text)
    code, _ = run(["sweep", "--config", str(path)])
    assert code == 2
    assert f"{field}:" in capsys.readouterr().err


def test_missing_config_is_io_error():
    code, _ = run(["sweep", "--config", "/nonexistent/c.cfg"])
    assert code == 3


def test_argparse_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--m", "many"])
    assert exc.value.code == 2


# -- report --------------------------------------------------------------------

def test_report_sweep_and_scalar(tmp_path):
    s, j = tmp_path / "s.csv", tmp_path / "q.json"
    run(["sweep", "--scenario", "tdma", "--n-channels", "3", "--n-noise", "0", "--out", str(s)])
    run(["scalar", "--snr", "40:80:20", "--n-symbols", "200", "--format", "json", "--out", str(j)])
    code, out = run(["report", str(s)])
    assert code == 0 and "tdma" in out and "slope" in out
    code, out = run(["report", str(j)])
    assert code == 0 and len(out.splitlines()) == 4


def test_report_missing_file():
    assert run(["report", "/nonexistent.csv"])[0] == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ainrelay", "verify", "--n-channels", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "pass" in proc.stdout
