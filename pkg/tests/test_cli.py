import json

import pytest

from driftbound.cli import main


def write_doc(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def failing_walk_doc():
    # alpha = 0.2 pushes the one-step factor above 1: exact check must fail
    return {
        "schema_version": 1,
        "name": "failing-walk",
        "kind": "certificate-verify",
        "seed": 3,
        "params": {
            "kernel_ref": "walk", "certificate_ref": "cert",
            "x0": 6, "horizon": 20, "paths": 200, "verify_horizon": 5,
        },
        "components": {
            "walk": {"type": "walk_matrix", "p_up": 0.25, "size": 21},
            "cert": {
                "type": "exponential_certificate",
                "alpha": 0.2,
                "V": {"form": "geometric", "base": 3, "root": 2},
                "region": {"type": "finite_set", "members": [0, 1, 2, 3]},
            },
        },
    }


def test_list_exits_zero(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "biased-walk" in out and "besq-desk" in out


def test_validate_shipped(capsys):
    assert main(["validate", "two-state-stopping"]) == 0
    assert "valid" in capsys.readouterr().out


def test_validate_rejects_bad_config(tmp_path, capsys):
    doc = failing_walk_doc()
    doc["params"]["kernel_ref"] = "nope"
    assert main(["validate", write_doc(tmp_path, doc)]) == 2
    assert "unknown component" in capsys.readouterr().err


def test_run_minimal_scenario(tmp_path, capsys):
    assert main(["run", "absorbing-minimal", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "ALL CHECKS PASS" in out
    assert (tmp_path / "report.txt").exists()
    assert (tmp_path / "checks.csv").exists()


def test_failing_check_gives_exit_one(tmp_path, capsys):
    assert main(["run", write_doc(tmp_path, failing_walk_doc())]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out


def test_unknown_scenario_gives_exit_two(capsys):
    assert main(["run", "does-not-exist"]) == 2
    assert "error" in capsys.readouterr().err


def test_kind_mismatch_rejected(capsys):
    assert main(["iss-check", "biased-walk"]) == 2
    assert "needs a scenario of kind" in capsys.readouterr().err


def test_bound_subcommand_on_verify_config(tmp_path, capsys):
    doc = failing_walk_doc()  # bound alone has no failing check
    assert main(["bound", write_doc(tmp_path, doc)]) == 0
    out = capsys.readouterr().out
    assert "bound-computed" in out


def test_check_s1_subset(capsys):
    assert main(["check-s1", "gas-2mode"]) == 0
    out = capsys.readouterr().out
    assert "condition-S1" in out and "gas-discounted-decay" not in out


def test_value_iterate_subcommand(capsys):
    assert main(["value-iterate", "two-state-stopping"]) == 0
    assert "tree-oracle-match" in capsys.readouterr().out


def test_simulate_writes_trajectories(tmp_path, capsys):
    rc = main([
        "simulate", "pathwise-2mode", "--out", str(tmp_path),
        "--paths", "5", "--horizon", "7",
    ])
    assert rc == 0
    lines = (tmp_path / "trajectories.csv").read_text().splitlines()
    assert lines[0].startswith("path_id,t,state_0,state_1,mode")
    assert len(lines) == 1 + 5 * 8


def test_seed_override_changes_artifacts(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    main(["simulate", "pathwise-2mode", "--out", str(a), "--paths", "3"])
    main(["simulate", "pathwise-2mode", "--out", str(b), "--paths", "3"])
    main(["simulate", "pathwise-2mode", "--out", str(c), "--paths", "3",
          "--seed", "99"])
    ta, tb, tc = [(p / "trajectories.csv").read_text() for p in (a, b, c)]
    assert ta == tb
    assert ta != tc


def test_workers_flag_accepted(capsys):
    assert main(["run", "absorbing-minimal", "--workers", "1"]) == 0


def test_simulate_switched_alias(tmp_path):
    rc = main(["simulate-switched", "pathwise-2mode", "--out", str(tmp_path),
               "--paths", "3", "--horizon", "5"])
    assert rc == 0
    assert (tmp_path / "trajectories.csv").exists()


def test_iss_trajectories_carry_disturbance_column(tmp_path):
    rc = main(["simulate", "iss-scalar", "--out", str(tmp_path),
               "--paths", "4", "--horizon", "6"])
    assert rc == 0
    header = (tmp_path / "trajectories.csv").read_text().splitlines()[0]
    assert header == "path_id,t,state_0,mode,disturbance"
