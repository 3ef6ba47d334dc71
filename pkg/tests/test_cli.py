#!/usr/bin/env python3
"""
CLI tests: exit codes and printed output of every command.
"""

import json
from pathlib import Path

import pytest

import trustledger
from trustledger.cli import main

SCENARIO_DIR = Path(trustledger.__file__).parent / "scenarios"


def _run(argv):
    with pytest.raises(SystemExit) as exc_info:
        main(argv)
    return exc_info.value.code


@pytest.fixture
def built_chain(genesis_file, schedule_file, tmp_workspace):
    out = tmp_workspace / "chain.bin"
    argv = ["chain-build", "--genesis", str(genesis_file), "--schedule", str(schedule_file)]
    assert _run(argv + ["--out", str(out)]) == 0
    return out


class TestChainCommands:
    def test_build_without_schedule(self, genesis_file, tmp_workspace, capsys):
        out = tmp_workspace / "chain.bin"
        assert _run(["chain-build", "--genesis", str(genesis_file), "--out", str(out)]) == 0
        assert "Height: 0" in capsys.readouterr().out
        assert out.exists()

    def test_build_and_verify(self, built_chain, capsys):
        capsys.readouterr()
        assert _run(["chain-verify", "--chain", str(built_chain)]) == 0
        out = capsys.readouterr().out
        assert "Outcome: PASS" in out
        assert "height: 2" in out

    def test_verify_with_pinned_genesis(self, built_chain, capsys):
        from trustledger.ledger import load_chain

        genesis = load_chain(str(built_chain)).header_at(0).header_hash.hex()
        assert _run(["chain-verify", "--chain", str(built_chain), "--genesis-hash", genesis]) == 0
        wrong = "00" * 32
        assert _run(["chain-verify", "--chain", str(built_chain), "--genesis-hash", wrong]) == 1

    def test_malformed_genesis_hash(self, built_chain, capsys):
        assert _run(["chain-verify", "--chain", str(built_chain), "--genesis-hash", "xyz"]) == 2
        assert "ConfigError" in capsys.readouterr().err

    def test_rejected_schedule(self, genesis_file, tmp_workspace, capsys):
        schedule = tmp_workspace / "bad.json"
        schedule.write_text(
            json.dumps(
                {
                    "entities": [{"name": "A"}],
                    "blocks": [
                        [{"op": "register", "entity": "A"}],
                        [{"op": "confirm", "issuer": "A", "subject": "A", "scope": 1}],
                    ],
                }
            )
        )
        out = tmp_workspace / "chain.bin"
        argv = ["chain-build", "--genesis", str(genesis_file), "--schedule", str(schedule)]
        assert _run(argv + ["--out", str(out)]) == 2
        assert "SelfConfirmation" in capsys.readouterr().err

    def test_missing_chain_file(self, tmp_workspace, capsys):
        code = _run(["chain-verify", "--chain", str(tmp_workspace / "absent.bin")])
        assert code == 1
        assert "INCONCLUSIVE" in capsys.readouterr().out


class TestProvisionCommands:
    def test_provision_then_verify(self, built_chain, tmp_workspace, capsys):
        bundle = tmp_workspace / "a.bundle"
        argv = ["provision", "--chain", str(built_chain), "--owner", "A", "--k-out", "2"]
        assert _run(argv + ["--out", str(bundle)]) == 0
        out = capsys.readouterr().out
        assert "Nodes: 4" in out
        assert "Edges: 3" in out
        assert _run(["bundle-verify", str(bundle)]) == 0
        assert "Outcome: PASS" in capsys.readouterr().out

    def test_owner_by_account_id(self, built_chain, tmp_workspace):
        from trustledger.crypto import KeyPair

        owner = KeyPair.from_seed("B").account_id.hex()
        bundle = tmp_workspace / "b.bundle"
        assert _run(
            ["provision", "--chain", str(built_chain), "--owner", owner, "--out", str(bundle)]
        ) == 0

    def test_unknown_owner(self, built_chain, tmp_workspace, capsys):
        argv = ["provision", "--chain", str(built_chain), "--owner", "Z"]
        assert _run(argv + ["--out", str(tmp_workspace / "z.bundle")]) == 2
        assert "UnknownNode" in capsys.readouterr().err

    def test_corrupted_bundle(self, built_chain, tmp_workspace, capsys):
        bundle = tmp_workspace / "a.bundle"
        _run(["provision", "--chain", str(built_chain), "--owner", "A", "--out", str(bundle)])
        data = bytearray(bundle.read_bytes())
        data[-1] ^= 0xFF
        bundle.write_bytes(bytes(data))
        assert _run(["bundle-verify", str(bundle)]) == 1
        assert "Outcome: FAIL" in capsys.readouterr().out


class TestPathCommand:
    def test_scope_blocks_path(self, built_chain, capsys):
        """A -3-> B -1-> C -2-> D: no valid path from A to D."""
        capsys.readouterr()
        assert _run(["path", "--chain", str(built_chain), "--from", "A", "--to", "D"]) == 1
        assert capsys.readouterr().out.strip() == "none"

    def test_direct_path(self, built_chain, capsys):
        capsys.readouterr()
        assert _run(["path", "--chain", str(built_chain), "--from", "A", "--to", "E"]) == 0
        assert capsys.readouterr().out.strip() == "A -(1)-> E"

    def test_two_hop_path(self, built_chain, capsys):
        capsys.readouterr()
        assert _run(["path", "--chain", str(built_chain), "--from", "A", "--to", "C"]) == 0
        assert capsys.readouterr().out.strip() == "A -(3)-> B -(1)-> C"

    def test_unknown_entity(self, built_chain, capsys):
        assert _run(["path", "--chain", str(built_chain), "--from", "A", "--to", "Q"]) == 2
        assert "UnknownNode" in capsys.readouterr().err


class TestSimCommand:
    def test_fixture_passes(self, capsys):
        scenario = str(SCENARIO_DIR / "honest_2k.json")
        assert _run(["sim", "--scenario", scenario]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["all_matched"] is True
        assert report["outcomes"][0]["outcome"] == "Authenticated"

    def test_digest_stable(self, capsys):
        scenario = str(SCENARIO_DIR / "revocation.json")
        _run(["sim", "--scenario", scenario, "--digest-only"])
        first = capsys.readouterr().out.strip()
        _run(["sim", "--scenario", scenario, "--digest-only"])
        assert capsys.readouterr().out.strip() == first
        assert len(first) == 64

    def test_seed_override_changes_digest(self, capsys):
        scenario = str(SCENARIO_DIR / "honest_2k.json")
        _run(["sim", "--scenario", scenario, "--digest-only", "--seed", "1"])
        first = capsys.readouterr().out.strip()
        _run(["sim", "--scenario", scenario, "--digest-only", "--seed", "2"])
        assert capsys.readouterr().out.strip() != first

    def test_report_file(self, tmp_workspace, capsys):
        out = tmp_workspace / "report.json"
        scenario = str(SCENARIO_DIR / "no_common.json")
        assert _run(["sim", "--scenario", scenario, "--digest-only", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["digest"] == capsys.readouterr().out.strip()

    def test_unmet_expectation(self, tmp_workspace):
        data = json.loads((SCENARIO_DIR / "honest_2k.json").read_text())
        data["attempts"][0]["expect"] = "Aborted(NoValidPath)"
        scenario = tmp_workspace / "wrong.json"
        scenario.write_text(json.dumps(data))
        assert _run(["sim", "--scenario", str(scenario), "--digest-only"]) == 1

    def test_invalid_scenario(self, tmp_workspace, capsys):
        scenario = tmp_workspace / "broken.json"
        scenario.write_text("{}")
        assert _run(["sim", "--scenario", str(scenario)]) == 2
        assert "InvalidScenario" in capsys.readouterr().err


def test_no_command(capsys):
    assert _run([]) == 2
    assert "usage" in capsys.readouterr().out.lower()
