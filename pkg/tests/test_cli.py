import io
import re

import pytest

from rsteg.cli import CONFIG_KEYS, main, parse_args, parse_config_text
from rsteg.netsim import ConfigError, TopologyConfig
from rsteg.tcp_engine import Mechanism

QUICK = ["--warmup", "2", "--measure", "8"]
ERROR_LINE = re.compile(r'^rsteg: error code=(\d) type=\w+ message="[^"\n]*"$')


def run_cli(args):
    out = io.StringIO()
    code = main(args, out=out)
    return code, out.getvalue()


def test_run_twice_is_byte_identical():
    a = run_cli(["run", "--seed", "42", *QUICK])
    b = run_cli(["run", "--seed", "42", *QUICK])
    assert a == b
    assert a[0] == 0
    assert "seed = 42" in a[1] and "S_B_Bps" in a[1]


def test_run_rejects_percent_ir_p(capsys):
    code, _ = run_cli(["run", "--ir-p", "1.5"])
    err = capsys.readouterr().err.strip()
    assert code == 2
    assert ERROR_LINE.match(err)
    assert "fraction in [0, 1]" in err


def test_unknown_config_key_is_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("queue_capacity = 50\nfoo = 3\n")
    code, _ = run_cli(["run", "--config", str(cfg)])
    assert code == 2
    assert "unknown key 'foo'" in capsys.readouterr().err


def test_bad_flag_is_single_line_error(capsys):
    code, _ = run_cli(["run", "--scenario", "9"])
    assert code == 2
    assert ERROR_LINE.match(capsys.readouterr().err.strip())


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("# comment line\nmechanism = sack  # trailing\nir_p = 0.02\nseed = 9\nqueue_capacity = 30\naccess_delay = 0.005\n")
    parsed = parse_args(["run", "--config", str(cfg), "--ir-p", "0.04", "--seed", "3"])
    run = parsed.run_config()
    topo = parsed.topology()
    assert run.mechanism is Mechanism.SACK
    assert run.ir_p == 0.04
    assert topo.seed == 3
    assert topo.queue_capacity == 30
    assert topo.access_delay == 5000


def test_config_keys_cover_topology_fields():
    assert set(TopologyConfig.__dataclass_fields__) <= set(CONFIG_KEYS)


def test_parse_config_rejects_malformed_line():
    with pytest.raises(ConfigError):
        parse_config_text("just words\n")


def test_missing_seed_is_drawn_and_printed(capsys):
    code, out = run_cli(["run", *QUICK])
    assert code == 0
    seed = int(re.search(r"^seed = (\d+)$", out, re.M).group(1))
    assert f"seed chosen at random: {seed}" in capsys.readouterr().err
    assert run_cli(["run", "--seed", str(seed), *QUICK])[1] == out


def test_run_writes_trace_and_steganogram(tmp_path):
    trace, steg = tmp_path / "t.txt", tmp_path / "s.bin"
    code, out = run_cli(["run", "--seed", "4", "--ir-p", "0.05", *QUICK, "--trace", str(trace), "--steg-out", str(steg)])
    assert code == 0
    assert "steg_prefix_ok = 1" in out
    assert trace.read_text().count("\n") > 100
    assert steg.stat().st_size > 0


def test_steg_in_round_trip(tmp_path):
    secret = tmp_path / "secret.bin"
    secret.write_bytes(b"attack at dawn " * 40)
    steg = tmp_path / "s.bin"
    code, _ = run_cli(["run", "--seed", "4", "--ir-p", "0.1", "--warmup", "0", "--measure", "20",
                       "--steg-in", str(secret), "--steg-out", str(steg)])
    assert code == 0
    got = steg.read_bytes()
    assert got[: len(secret.read_bytes())] == secret.read_bytes()


def test_warden_analyze_on_emitted_trace(tmp_path):
    trace = tmp_path / "t.txt"
    run_cli(["run", "--seed", "4", "--ir-p", "0.05", *QUICK, "--trace", str(trace)])
    code, out = run_cli(["warden-analyze", str(trace)])
    assert code == 0
    assert out.startswith("[warden]")
    det = int(re.search(r"^detections = (\d+)$", out, re.M).group(1))
    tp = int(re.search(r"^true_positives = (\d+)$", out, re.M).group(1))
    assert det == tp > 0


def test_warden_analyze_missing_file(tmp_path, capsys):
    code, _ = run_cli(["warden-analyze", str(tmp_path / "nope.txt")])
    assert code == 2


def test_sweep_csv_deterministic(tmp_path):
    args = ["sweep", "--seed", "1", "--mechanism", "FRR,SACK", "--ir-p", "0.01,0.03", "--warmup", "2", "--measure", "8",
            "--set", "n_seeds=2", "--set", "bandwidths=FRR@0.03:2100000,SACK@0.03:2170000"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_cli([*args, "--out", str(a)])[0] == 0
    assert run_cli([*args, "--out", str(b)])[0] == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "nr_p_target,mechanism,ir_p,sb_mean_bps,sb_std_bps,rd_mean_pct,rd_std_pct,n_seeds"
    assert len(lines) == 1 + 4


def test_runtime_failure_exit_1(capsys):
    code, out = run_cli(["calibrate", "--seed", "1", "--mechanism", "FRR", "--nr-p", "0.5", "--warmup", "0",
                         "--measure", "3", "--set", "calib_seeds=1", "--set", "calib_max_iter=2"])
    err = capsys.readouterr().err.strip()
    assert code == 1
    assert ERROR_LINE.match(err)
    assert "type=CalibrationError" in err


def test_calibrate_prints_one_line_per_target():
    code, out = run_cli(["calibrate", "--seed", "1", "--mechanism", "FRR", "--nr-p", "0.03", "--warmup", "5",
                         "--measure", "30", "--set", "calib_seeds=1,2,3"])
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "seed = 1"
    assert re.match(r"mechanism=FRR target_nr_p=3\.00% X_bps=\d+ achieved_nr_p=[\d.]+% converged=1", lines[1])
