import json
import subprocess
import sys

import pytest

from abacbandit.cli import main
from abacbandit.data import load_log


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr().out.strip().splitlines()
    payload = json.loads(out[-1]) if out else {}
    return code, payload


class TestGenPolicy:
    def test_manual(self, tmp_path, capsys):
        out = tmp_path / "m1.json"
        code, payload = run_cli(["gen-policy", "--manual", "m1", "--out", str(out)], capsys)
        assert code == 0
        assert payload["rules"] == 11 and payload["enumeration"] == 5600
        assert out.exists()

    def test_random(self, tmp_path, capsys):
        out = tmp_path / "rand.json"
        code, payload = run_cli(
            ["gen-policy", "--random", "--rules", "5", "--attrs", "6", "--values", "20",
             "--target-log", "600", "--seed", "3", "--out", str(out)], capsys)
        assert code == 0
        assert 510 <= payload["enumeration"] <= 690

    def test_missing_mode_fails_with_error_json(self, tmp_path, capsys):
        code, payload = run_cli(["gen-policy", "--out", str(tmp_path / "x.json")], capsys)
        assert code == 1
        assert payload["error"] == "ValueError"

    def test_usage_error_is_json(self, capsys):
        code, payload = run_cli(["gen-policy"], capsys)
        assert code == 2
        assert payload["error"] == "usage"


class TestGenLogAndRun:
    @pytest.fixture()
    def m1_log(self, tmp_path, capsys):
        policy = tmp_path / "m1.json"
        log = tmp_path / "m1.csv"
        assert main(["gen-policy", "--manual", "m1", "--out", str(policy)]) == 0
        assert main(["gen-log", "--policy", str(policy), "--seed", "5",
                     "--out", str(log)]) == 0
        capsys.readouterr()
        return log

    def test_gen_log_full_and_fraction(self, tmp_path, m1_log, capsys):
        entries, schema = load_log(m1_log)
        assert len(entries) == 5600
        partial = tmp_path / "partial.csv"
        code, payload = run_cli(
            ["gen-log", "--policy", str(tmp_path / "m1.json"), "--fraction", "0.1",
             "--seed", "5", "--out", str(partial)], capsys)
        assert code == 0 and payload["rounds"] == 560

    def test_no_shuffle_is_lexicographic(self, tmp_path, capsys):
        ordered = tmp_path / "ordered.csv"
        assert main(["gen-policy", "--manual", "m1", "--out", str(tmp_path / "p.json")]) == 0
        assert main(["gen-log", "--policy", str(tmp_path / "p.json"), "--no-shuffle",
                     "--seed", "1", "--out", str(ordered)]) == 0
        capsys.readouterr()
        from abacbandit.data import gen_complete_log, manual_policy
        entries, _ = load_log(ordered)
        assert entries == gen_complete_log(manual_policy("m1"))

    def test_run_emits_outputs(self, tmp_path, m1_log, capsys):
        out = tmp_path / "run"
        code, payload = run_cli(
            ["run", "--log", str(m1_log), "--algo", "cover", "--cover", "2",
             "--seed", "7", "--out", str(out)], capsys)
        assert code == 0
        assert (out / "trajectory.csv").exists()
        assert (out / "summary.json").exists()
        assert (out / "feedback.csv").exists()
        assert 0.0 < payload["final_pvl"] < 0.5

    def test_run_with_warmstart_and_plan_flags(self, tmp_path, capsys):
        policy_path = tmp_path / "m3.json"
        log_path = tmp_path / "m3.csv"
        assert main(["gen-policy", "--manual", "m3", "--out", str(policy_path)]) == 0
        assert main(["gen-log", "--policy", str(policy_path), "--fraction", "0.05",
                     "--seed", "2", "--out", str(log_path)]) == 0
        from abacbandit.data import manual_hierarchy
        from abacbandit.planning import save_hierarchy
        hier_path = tmp_path / "h.json"
        save_hierarchy(manual_hierarchy("m3"), hier_path)
        ws_path = tmp_path / "ws.json"
        ws_path.write_text(json.dumps(
            {"capability_defaults": {"order_online": "deny", "play_music": "permit"}}))
        out = tmp_path / "out"
        code, payload = run_cli(
            ["run", "--log", str(log_path), "--algo", "cover",
             "--warmstart", str(ws_path), "--hierarchy", str(hier_path), "--plan",
             "--seed", "3", "--out", str(out)], capsys)
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["plan"] is True
        assert summary["config"]["warmstart_examples"] > 0

    def test_plan_without_hierarchy_fails(self, tmp_path, m1_log, capsys):
        code, payload = run_cli(
            ["run", "--log", str(m1_log), "--algo", "cover", "--plan",
             "--seed", "3", "--out", str(tmp_path / "x")], capsys)
        assert code == 1
        assert "hierarchy" in payload["message"]

    def test_run_without_sidecar_infers_schema(self, tmp_path, m1_log, capsys):
        (tmp_path / "m1.schema.json").unlink()
        out = tmp_path / "inferred"
        code, payload = run_cli(
            ["run", "--log", str(m1_log), "--algo", "epsilon", "--epsilon", "0.02",
             "--seed", "7", "--out", str(out)], capsys)
        assert code == 0
        assert 0.0 < payload["final_pvl"] < 0.5

    def test_missing_log_fails_with_error_json(self, tmp_path, capsys):
        code, payload = run_cli(
            ["run", "--log", str(tmp_path / "nope.csv"), "--algo", "epsilon",
             "--seed", "1", "--out", str(tmp_path / "x")], capsys)
        assert code == 1
        assert payload["error"] == "FileNotFoundError"


class TestShift:
    def test_m1_to_m2(self, tmp_path, capsys):
        for pid in ("m1", "m2"):
            assert main(["gen-policy", "--manual", pid,
                         "--out", str(tmp_path / f"{pid}.json")]) == 0
            assert main(["gen-log", "--policy", str(tmp_path / f"{pid}.json"),
                         "--seed", "4", "--out", str(tmp_path / f"{pid}.csv")]) == 0
        capsys.readouterr()
        out = tmp_path / "shift"
        code, payload = run_cli(
            ["shift", "--log-a", str(tmp_path / "m1.csv"), "--log-b", str(tmp_path / "m2.csv"),
             "--algo", "bag", "--bags", "4", "--seed", "4", "--out", str(out)], capsys)
        assert code == 0
        assert payload["shift_round"] == 5600
        assert payload["rounds"] == 5600 + 5040


class TestCompare:
    def test_matrix_runs(self, tmp_path, capsys):
        assert main(["gen-policy", "--manual", "m2", "--out", str(tmp_path / "p.json")]) == 0
        assert main(["gen-log", "--policy", str(tmp_path / "p.json"), "--seed", "1",
                     "--out", str(tmp_path / "m2.csv")]) == 0
        matrix = {
            "seed": 1,
            "datasets": [{"name": "m2", "log": "m2.csv"}],
            "algorithms": [{"algo": "epsilon", "epsilon": 0.02},
                           {"algo": "supervised"}],
        }
        (tmp_path / "matrix.json").write_text(json.dumps(matrix))
        capsys.readouterr()
        out = tmp_path / "cmp"
        code, payload = run_cli(
            ["compare", "--matrix", str(tmp_path / "matrix.json"), "--out", str(out)], capsys)
        assert code == 0
        assert payload["cells"] == 2 and payload["failed"] == 0
        lines = (out / "comparison.csv").read_text().splitlines()
        assert lines[0].startswith("dataset,algorithm,pvl")
        assert len(lines) == 3


@pytest.mark.slow
def test_console_entry_point_works():
    proc = subprocess.run([sys.executable, "-m", "abacbandit.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("gen-policy", "gen-log", "run", "shift", "compare"):
        assert sub in proc.stdout
