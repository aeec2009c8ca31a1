"""
Tests for designlab/cli.py — subcommands and the exit-code contract.
"""

import json
import math

import pytest

from designlab.cli import EXIT_BUDGET, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main


def _run(capsys, command: str):
    code = main(command.split())
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _write_config(path, **fields):
    path.write_text(json.dumps(fields))
    return str(path)


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------


class TestCertify:
    def test_clifford_two_design_passes(self, capsys, patched_config):
        code, out, err = _run(
            capsys, "certify --ensemble clifford1 --k 2 --eps 1e-9 --seed 4"
        )
        assert code == EXIT_OK
        assert json.loads(out)["pass"] is True
        assert "seed: 4" in err
        reports = list(patched_config["output_dir"].glob("certify-seed4-*.json"))
        assert len(reports) == 1

    def test_pauli_two_design_fails(self, capsys, patched_config):
        code, out, _ = _run(capsys, "certify --ensemble pauli1 --k 2 --eps 0.1")
        assert code == EXIT_FAIL
        report = json.loads(out)
        assert report["pass"] is False
        assert report["max_deviation"] > 0.1

    def test_missing_k_is_usage_error(self, capsys, patched_config):
        with pytest.raises(SystemExit) as exc:
            main(["certify", "--ensemble", "pauli1", "--eps", "0.1"])
        assert exc.value.code == EXIT_USAGE
        assert "usage" in capsys.readouterr().err

    def test_unknown_ensemble(self, capsys, patched_config):
        code, _, _ = _run(capsys, "certify --ensemble nope --k 1 --eps 1")
        assert code == EXIT_USAGE

    def test_seed_above_signed_range(self, capsys, patched_config):
        seed = 2**63
        code, out, err = _run(
            capsys, f"certify --ensemble pauli1 --k 1 --eps 0.1 --seed {seed}"
        )
        assert code == EXIT_OK
        assert json.loads(out)["seed"] == seed
        assert f"seed: {seed}" in err
        _, out, _ = _run(capsys, "runs --command certify")
        assert json.loads(out)[0]["seed"] == seed

    def test_seed_beyond_64_bits(self, capsys, patched_config):
        code, _, _ = _run(
            capsys, f"certify --ensemble pauli1 --k 1 --eps 0.1 --seed {2**64}"
        )
        assert code == EXIT_USAGE
        assert not list(patched_config["output_dir"].glob("certify-*.json"))

    def test_budget(self, capsys, patched_config):
        code, _, _ = _run(
            capsys,
            "certify --ensemble haar --d 8 --k 3 --eps 0.1 --strategy exhaustive",
        )
        assert code == EXIT_BUDGET


# ---------------------------------------------------------------------------
# bound
# ---------------------------------------------------------------------------


class TestBound:
    def test_levy(self, capsys, patched_config):
        code, out, _ = _run(capsys, "bound levy --eta 2 --d 1000000 --delta 0.1")
        assert code == EXIT_OK
        assert json.loads(out)["bound"] == pytest.approx(6.6e-8, rel=0.01)

    def test_geoment_corollary(self, capsys, patched_config):
        delta = 3 * math.log2(10) + 5
        code, out, _ = _run(
            capsys, f"bound geoment --n 10 --k 100 --delta {delta!r} --eps 1"
        )
        assert code == EXIT_OK
        result = json.loads(out)
        corollary = result["extras"]["log2_corollary"]
        assert corollary == pytest.approx(1 - 100 * math.log2(10))
        assert corollary == pytest.approx(-331.19, abs=0.01)
        assert result["log2_bound"] <= corollary

    def test_statmech_simplified_warns(self, capsys, patched_config):
        code, out, _ = _run(
            capsys,
            "bound statmech-design --ds 2 --dr 1048576 --delta 0.1 --k 8"
            " --mode simplified",
        )
        result = json.loads(out)
        assert result["bound"] == pytest.approx(6 * 32 / (2**20 * 0.01))
        assert result["bound"] == pytest.approx(1.83e-2, rel=0.01)
        # k = 8 is outside the proven range k ≤ 8C₂d_S² at d_S = 2
        assert result["warnings"]
        assert code == EXIT_FAIL

    def test_precondition_reports_json(self, capsys, patched_config):
        code, out, _ = _run(
            capsys, "bound poly --C 4 --a 1 --K 2 --alpha 1 --d 4 --k 2 --delta 0.1"
        )
        assert code == EXIT_FAIL
        assert json.loads(out)["warnings"]

    def test_help_names_corollary_key(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["bound", "--help"])
        assert exc.value.code == 0
        assert "extras.log2_corollary" in capsys.readouterr().out

    def test_unknown_bound(self, capsys, patched_config):
        code, _, _ = _run(capsys, "bound nope")
        assert code == EXIT_USAGE

    def test_missing_flag(self, capsys, patched_config):
        code, _, _ = _run(capsys, "bound levy --eta 2")
        assert code == EXIT_USAGE


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


class TestExperiment:
    def test_statmech_passes(self, capsys, patched_config, tmp_path):
        path = _write_config(
            tmp_path / "statmech.json",
            kind="statmech",
            constraint={
                "d_S": 2,
                "d_E": 8,
                "d_R": 16,
                "embedding": "random-subspace",
                "seed": 1,
            },
            samples=1000,
            batch_size=500,
            grid=[0.25, 0.5, 1.0],
        )
        code, out, err = _run(capsys, f"experiment {path} --seed 7 --workers 1 -q")
        assert code == EXIT_OK
        summary = json.loads(out)
        assert summary["pass"] is True
        assert "seed: 7" in err
        assert summary["csv"].endswith(".csv")

    def test_false_design_claim_fails(self, capsys, patched_config, tmp_path):
        path = _write_config(
            tmp_path / "overlap.json",
            kind="overlap",
            ensemble={"name": "identity"},
            dims={"d_S": 2, "d_E": 4},
            samples=200,
            grid=[0.5],
            design_k=2,
            seed=3,
        )
        code, out, _ = _run(capsys, f"experiment {path} --workers 1 -q")
        assert code == EXIT_FAIL
        assert json.loads(out)["pass"] is False

    def test_rerun_reuses_hash(self, capsys, patched_config, tmp_path):
        path = _write_config(
            tmp_path / "entropy.json",
            kind="entropy",
            dims={"d_S": 2, "d_E": 2},
            samples=300,
            grid=[0.5],
        )
        command = f"experiment {path} --seed 5 --workers 1 -q"
        _, first, _ = _run(capsys, command)
        _, second, _ = _run(capsys, command)
        assert json.loads(first)["config_hash"] == json.loads(second)["config_hash"]

    def test_schema_violation(self, capsys, patched_config, tmp_path):
        path = _write_config(tmp_path / "bad.json", kind="entropy", grid=[0.5])
        code, _, _ = _run(capsys, f"experiment {path} --seed 1")
        assert code == EXIT_USAGE

    def test_missing_file(self, capsys, patched_config, tmp_path):
        code, _, _ = _run(capsys, f"experiment {tmp_path / 'none.json'}")
        assert code == EXIT_USAGE


# ---------------------------------------------------------------------------
# ensemble, sample, runs
# ---------------------------------------------------------------------------


class TestEnsemble:
    def test_save_then_load(self, capsys, patched_config, tmp_path):
        target = str(tmp_path / "c1.json")
        code, _, _ = _run(capsys, f"ensemble save clifford1 {target} --seed 0")
        assert code == EXIT_OK
        code, out, _ = _run(capsys, f"ensemble load {target}")
        assert code == EXIT_OK
        assert json.loads(out)["size"] == 24

    def test_save_needs_path(self, capsys, patched_config):
        code, _, _ = _run(capsys, "ensemble save clifford1")
        assert code == EXIT_FAIL

    def test_describe(self, capsys, patched_config):
        code, out, _ = _run(capsys, "ensemble describe pauli1 --seed 0")
        assert code == EXIT_OK
        assert json.loads(out)["d"] == 2


class TestSample:
    def test_states_to_stdout(self, capsys, patched_config):
        code, out, err = _run(
            capsys, "sample --ensemble haar --d 4 -n 3 --states --seed 8"
        )
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["kind"] == "states"
        assert len(payload["items"]) == 3
        assert "seed: 8" in err

    def test_to_file(self, capsys, patched_config, tmp_path):
        target = tmp_path / "draws.json"
        code, _, _ = _run(capsys, f"sample --ensemble pauli1 -n 2 --out {target}")
        assert code == EXIT_OK
        assert json.loads(target.read_text())["d"] == 2


class TestRuns:
    def test_lists_certify_runs(self, capsys, patched_config):
        _run(capsys, "certify --ensemble pauli1 --k 1 --eps 0.1")
        code, out, _ = _run(capsys, "runs --command certify")
        assert code == EXIT_OK
        rows = json.loads(out)
        assert len(rows) == 1
        assert rows[0]["passed"] is True

    def test_empty_ledger(self, capsys, patched_config):
        code, out, _ = _run(capsys, "runs")
        assert code == EXIT_OK
        assert json.loads(out) == []
