"""CLI tests: exit-code contract, output shapes, config precedence.

Commands run in-process through the console entry point so the exit-code
mapping in main() is what gets exercised, with stdout/stderr captured.
"""

from __future__ import annotations

import contextlib
import io
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from evmlift.cli import cli, main

from .conftest import BUNDLES, COUNTER, SINK, load_runtime_hex


@pytest.fixture(scope="module")
def counter_hex_path() -> str:
    return str(BUNDLES / COUNTER / "runtime.hex")


def run_cli(*args: str, cwd=None, env=None, monkeypatch=None):
    """Invoke main() capturing output; returns (exit_code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(args))
    return code, out.getvalue(), err.getvalue()


def test_help_exits_zero_everywhere():
    code, out, _ = run_cli("--help")
    assert code == 0 and "Commands:" in out
    for name in ("disasm", "cfg", "lift", "decompile", "eval", "entropy"):
        code, out, _ = run_cli(name, "--help")
        assert code == 0, name
        assert "Usage" in out
    for name in ("build", "stats"):
        code, out, _ = run_cli("dataset", name, "--help")
        assert code == 0, name


def test_disasm_prints_listing(counter_hex_path):
    code, out, _ = run_cli("disasm", counter_hex_path)
    assert code == 0
    assert out.startswith("0000: PUSH1 0x80")


def test_disasm_writes_file(counter_hex_path, tmp_path):
    target = tmp_path / "listing.txt"
    code, _, _ = run_cli("disasm", counter_hex_path, "-o", str(target))
    assert code == 0
    assert target.read_text().startswith("0000: PUSH1 0x80")


def test_odd_length_hex_exits_one_naming_the_error(tmp_path):
    bad = tmp_path / "odd.hex"
    bad.write_text("6080604")
    code, _, err = run_cli("disasm", str(bad))
    assert code == 1
    assert "OddLengthHex" in err


def test_missing_file_exits_one(tmp_path):
    code, _, err = run_cli("disasm", str(tmp_path / "absent.hex"))
    assert code == 1
    assert "FileNotFoundError" in err


def test_cfg_json_summary(counter_hex_path):
    code, out, _ = run_cli("cfg", counter_hex_path, "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert len(data["blocks"]) == 32
    selectors = {s["selector"] for s in data["selectors"]}
    assert {"60fe47b1", "6d4ce63c"} <= selectors


def test_cfg_dot_output(counter_hex_path):
    code, out, _ = run_cli("cfg", counter_hex_path)
    assert code == 0
    assert out.startswith("digraph")


def test_lift_single_selector_is_parseable(counter_hex_path):
    from evmlift.tac import parse

    code, out, _ = run_cli("lift", counter_hex_path, "--selector", "60fe47b1")
    assert code == 0
    fn = parse(out)
    assert fn.entry_label == "L0"


def test_lift_unknown_selector_exits_one(counter_hex_path):
    code, _, err = run_cli("lift", counter_hex_path, "--selector", "deadbeef")
    assert code == 1
    assert "deadbeef" in err


def test_lift_whole_program_fallback():
    sink_path = str(BUNDLES / SINK / "runtime.hex")
    code, out, _ = run_cli("lift", sink_path)
    assert code == 0
    assert out.startswith("L0:")


def test_decompile_mock_writes_sources_and_summary(counter_hex_path, tmp_path):
    out_dir = tmp_path / "dec"
    code, out, _ = run_cli(
        "decompile", counter_hex_path, "--backend", "mock", "-o", str(out_dir)
    )
    assert code == 0
    assert (out_dir / "60fe47b1.sol").exists()
    assert (out_dir / "6d4ce63c.sol").exists()
    assert (out_dir / "summary.json").exists()
    summary = json.loads((out_dir / "summary.json").read_text())
    assert "60fe47b1" in summary["functions"]
    assert summary["functions"]["60fe47b1"]["syntax_ok"] is True


def test_decompile_unreachable_backend_exits_two(counter_hex_path, tmp_path):
    code, _, err = run_cli(
        "decompile",
        counter_hex_path,
        "--backend",
        "http://127.0.0.1:9",
        "--retries",
        "0",
        "--timeout",
        "1",
        "-o",
        str(tmp_path / "x"),
    )
    assert code == 2
    assert "BackendUnreachable" in err


def test_dataset_build_and_stats(tmp_path):
    out_file = tmp_path / "pairs.jsonl"
    code, out, _ = run_cli("dataset", "build", str(BUNDLES), "-o", str(out_file))
    assert code == 0
    assert "kept 31/31" in out
    assert len(out_file.read_text().splitlines()) == 31

    code, out, _ = run_cli("dataset", "stats", str(out_file))
    assert code == 0
    assert "records: 31" in out
    assert "contracts: 5" in out


def test_dataset_build_holdout_writes_two_files(tmp_path):
    out_file = tmp_path / "split.jsonl"
    code, out, _ = run_cli(
        "dataset", "build", str(BUNDLES), "-o", str(out_file),
        "--holdout", "0.2", "--seed", "7",
    )
    assert code == 0
    train = (tmp_path / "split.train.jsonl").read_text().splitlines()
    hold = (tmp_path / "split.holdout.jsonl").read_text().splitlines()
    assert len(train) + len(hold) == 31
    assert len(hold) == round(31 * 0.2)


def test_dataset_build_jobs_output_is_identical(tmp_path):
    one = tmp_path / "one.jsonl"
    four = tmp_path / "four.jsonl"
    assert run_cli("dataset", "build", str(BUNDLES), "-o", str(one))[0] == 0
    assert run_cli("--jobs", "4", "dataset", "build", str(BUNDLES), "-o", str(four))[0] == 0
    assert one.read_bytes() == four.read_bytes()


def test_eval_writes_report(tmp_path):
    pairs = tmp_path / "pairs.jsonl"
    rows = [
        {"id": "a", "reference": "function f() public {}", "candidate": "function f() public {}"},
        {"id": "b", "reference": "function g() public { return 1; }", "candidate": "function h() external {}"},
    ]
    pairs.write_text("".join(json.dumps(r) + "\n" for r in rows))
    out_dir = tmp_path / "report"
    code, out, _ = run_cli("eval", str(pairs), "-o", str(out_dir))
    assert code == 0
    assert "pairs: 2" in out
    assert (out_dir / "report.json").exists()


def test_entropy_output_format(counter_hex_path):
    code, out, _ = run_cli("entropy", counter_hex_path, "--unit", "evm_opcode")
    assert code == 0
    assert out.strip().endswith("bits per evm_opcode")
    value = float(out.split()[0])
    assert 0.0 < value < 8.0


def test_entropy_single_opcode_is_zero(tmp_path):
    one = tmp_path / "stop.hex"
    one.write_text("00")
    code, out, _ = run_cli("entropy", str(one), "--unit", "evm_opcode")
    assert code == 0
    assert out.startswith("0.000000 bits per evm_opcode")


def test_config_file_and_env_precedence(counter_hex_path, tmp_path, monkeypatch):
    """Flag beats environment variable beats config file."""
    seen = []

    class Recorder(BaseHTTPRequestHandler):
        def do_POST(self):
            n = int(self.headers.get("Content-Length", 0))
            seen.append(json.loads(self.rfile.read(n))["max_new_tokens"])
            data = json.dumps({
                "solidity": "function f() public {}",
                "model_id": "probe",
                "prompt_tokens": 1,
                "completion_tokens": 1,
            }).encode()
            self.send_response(200)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Recorder)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    endpoint = f"http://127.0.0.1:{server.server_address[1]}"
    config_file = tmp_path / "evmlift.toml"
    config_file.write_text("[decompile]\nmax_new_tokens = 99\n")

    base = [
        "--config", str(config_file), "decompile", counter_hex_path,
        "--backend", endpoint, "-o", str(tmp_path / "out"),
    ]
    try:
        monkeypatch.delenv("EVMLIFT_DECOMPILE_MAX_NEW_TOKENS", raising=False)
        assert run_cli(*base)[0] == 0
        monkeypatch.setenv("EVMLIFT_DECOMPILE_MAX_NEW_TOKENS", "77")
        assert run_cli(*base)[0] == 0
        assert run_cli(*base, "--max-new-tokens", "55")[0] == 0
    finally:
        server.shutdown()
    # one request per function per run; each run uses one effective value
    runs = [seen[0], seen[len(seen) // 3], seen[2 * len(seen) // 3]]
    assert runs == [99, 77, 55]


def test_bad_config_file_exits_one(counter_hex_path, tmp_path):
    bad = tmp_path / "broken.toml"
    bad.write_text("this is not valid\n")
    code, _, err = run_cli("--config", str(bad), "disasm", counter_hex_path)
    assert code == 1
    assert "config" in err.lower()


def test_unknown_command_exits_one():
    code, _, err = run_cli("frobnicate")
    assert code == 1


def test_command_group_registry():
    assert set(cli.commands) == {
        "disasm", "cfg", "lift", "decompile", "dataset", "eval", "entropy",
    }
