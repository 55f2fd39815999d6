import json

import pytest

from threatfix.cli import main

from conftest import DATA

SMARTHOME = str(DATA / "smarthome.json")
IOT = str(DATA / "iot.tl")
MOTIVATING = str(DATA / "motivating.json")
TWO = str(DATA / "two.tl")
ENC = str(DATA / "enc.csv")


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_check_text(capsys):
    code, out, err = run(capsys, "check", "--model", SMARTHOME, "--rules", IOT)
    assert code == 1
    assert "rule firewall_activity_logging: threat found" in out
    assert "  witness: e = 46" in out
    assert "rule ip_spoofing: threat found" in out
    assert "  witness: c = 1, e1 = 2, e2 = 6" in out
    assert err == ""


def test_check_json(capsys):
    code, out, _ = run(capsys, "check", "--model", SMARTHOME, "--rules", IOT,
                       "--format", "json")
    assert code == 1
    doc = json.loads(out)
    assert doc["status"] == "sat"
    assert doc["rules"][0]["name"] == "firewall_activity_logging"
    assert doc["rules"][0]["witnesses"] == [{"e": "46"}]
    assert doc["rules"][1]["witnesses"] == [{"c": "1", "e1": "2", "e2": "6"}]


def test_check_clean_model_exits_zero(capsys, tmp_path):
    rules = tmp_path / "none.tl"
    rules.write_text('rule none : exists element e . type(e) = "Ghost"\n')
    code, out, _ = run(capsys, "check", "--model", SMARTHOME,
                       "--rules", str(rules))
    assert code == 0
    assert out == "rule none: no threat\n"


def test_explain_lists_witnesses(capsys):
    code, out, _ = run(capsys, "explain", "--model", SMARTHOME, "--rules", IOT)
    assert code == 1
    assert "witness: e = 46" in out


def test_check_jobs_flag(capsys):
    code, out, _ = run(capsys, "check", "--model", SMARTHOME, "--rules", IOT,
                       "--jobs", "2", "--seed", "5")
    assert code == 1
    assert "threat found" in out


def test_repair_default_partial(capsys):
    code, out, _ = run(capsys, "repair", "--model", SMARTHOME, "--rules", IOT,
                       "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["status"] == "sat"
    assert doc["totalCost"] == 1
    assert doc["changes"] == [{"item": "46", "attribute": "Activity Logging",
                               "from": "undefined", "to": "Yes", "cost": 1}]
    assert doc["rules"]["repaired"] == ["firewall_activity_logging"]
    unrep = doc["rules"]["unrepairable"]
    assert [u["name"] for u in unrep] == ["ip_spoofing"]
    assert unrep[0]["witnesses"] == [{"c": "1", "e1": "2", "e2": "6"}]


def test_repair_exact_unsat_exits_one(capsys):
    code, out, _ = run(capsys, "repair", "--model", SMARTHOME, "--rules", IOT,
                       "--mode", "exact")
    assert code == 1
    assert "status: unsat" in out
    assert "unrepairable: ip_spoofing" in out
    assert "witness: c = 1, e1 = 2, e2 = 6" in out


def test_repair_exact_with_costs(capsys):
    code, out, _ = run(capsys, "repair", "--model", MOTIVATING, "--rules", TWO,
                       "--costs", ENC, "--mode", "exact", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["totalCost"] == 20
    assert doc["changes"] == [{"item": "webserver", "attribute": "Data Encryption",
                               "from": "None", "to": "Weak", "cost": 20}]
    assert doc["rules"]["noThreat"] == ["phone_reaches_unlogged_server"]


def test_repair_without_costs_uses_unit_defaults(capsys):
    code, out, _ = run(capsys, "repair", "--model", MOTIVATING, "--rules", TWO,
                       "--mode", "exact", "--format", "json")
    assert code == 0
    assert json.loads(out)["totalCost"] == 1


def test_repair_heuristic(capsys):
    code, out, _ = run(capsys, "repair", "--model", MOTIVATING, "--rules", TWO,
                       "--costs", ENC, "--mode", "heuristic", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["totalCost"] == 1
    assert doc["changes"][0]["attribute"] == "Data Logging"
    assert [u["name"] for u in doc["rules"]["unrepairable"]] == \
        ["phone_reaches_unlogged_server"]
    witness = doc["rules"]["unrepairable"][0]["witnesses"][0]
    assert witness["e1"] == "phone" and isinstance(witness["p"], list)


def test_repair_text_format(capsys):
    code, out, _ = run(capsys, "repair", "--model", SMARTHOME, "--rules", IOT)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "status: sat"
    assert lines[1] == "total cost: 1"
    assert "change: 46 'Activity Logging': undefined -> Yes (cost 1)" in lines
    assert "repaired: firewall_activity_logging" in lines
    assert "unrepairable: ip_spoofing" in lines


def test_out_flag_writes_file(capsys, tmp_path):
    target = tmp_path / "report.json"
    code, out, _ = run(capsys, "check", "--model", SMARTHOME, "--rules", IOT,
                       "--format", "json", "--out", str(target))
    assert code == 1
    assert out == ""
    doc = json.loads(target.read_text())
    assert doc["status"] == "sat"


def test_export_files_are_stable(capsys, tmp_path):
    smt1, smt2 = tmp_path / "a.smt2", tmp_path / "b.smt2"
    wcnf1, wcnf2 = tmp_path / "a.wcnf", tmp_path / "b.wcnf"
    for smt, wcnf in ((smt1, wcnf1), (smt2, wcnf2)):
        code, out, err = run(capsys, "export", "--model", SMARTHOME,
                             "--rules", IOT, "--smtlib", str(smt),
                             "--wcnf", str(wcnf))
        assert code == 0 and out == "" and err == ""
    assert smt1.read_bytes() == smt2.read_bytes()
    assert wcnf1.read_bytes() == wcnf2.read_bytes()
    header = wcnf1.read_text().splitlines()[0].split()
    assert header[:2] == ["p", "wcnf"]


def test_export_smtlib_only(capsys, tmp_path):
    smt = tmp_path / "m.smt2"
    code, _, _ = run(capsys, "export", "--model", MOTIVATING, "--rules", TWO,
                     "--smtlib", str(smt))
    assert code == 0
    assert smt.read_text().startswith("; system model encoding\n")


def test_export_requires_a_target(capsys):
    code, _, err = run(capsys, "export", "--model", SMARTHOME, "--rules", IOT)
    assert code == 2
    assert "error:" in err


def test_usage_errors_exit_two(capsys):
    assert run(capsys, "check", "--rules", IOT)[0] == 2       # missing --model
    assert run(capsys, "frobnicate")[0] == 2                  # unknown command
    assert run(capsys, "check", "--model", SMARTHOME, "--rules", IOT,
               "--mode", "exact")[0] == 2                     # mode is repair-only
    assert run(capsys)[0] == 2                                # no command


def test_missing_file_exits_two(capsys):
    code, _, err = run(capsys, "check", "--model", "/no/such/file.json",
                       "--rules", IOT)
    assert code == 2
    assert err.startswith("error:")


def test_bad_rule_file_exits_two(capsys, tmp_path):
    rules = tmp_path / "bad.tl"
    rules.write_text("rule broken : exists element e . type(x) = \"A\"\n")
    code, _, err = run(capsys, "check", "--model", SMARTHOME,
                       "--rules", str(rules))
    assert code == 2
    assert "unbound variable" in err


def test_bad_model_file_exits_two(capsys, tmp_path):
    model = tmp_path / "bad.json"
    model.write_text("{}")
    code, _, err = run(capsys, "check", "--model", str(model), "--rules", IOT)
    assert code == 2
    assert "missing required key" in err


LOOP_RULE = ('rule loop : exists path p . exists element e . '
             'src(p) = e and tgt(p) = e\n')


def test_budget_flag_reports_unknown(capsys, tmp_path):
    rules = tmp_path / "loop.tl"
    rules.write_text(LOOP_RULE)
    code, out, _ = run(capsys, "check", "--model", SMARTHOME,
                       "--rules", str(rules), "--budget", "0")
    assert code == 3
    assert "unknown (budget exhausted)" in out
    code, out, _ = run(capsys, "repair", "--model", SMARTHOME,
                       "--rules", str(rules), "--budget", "0")
    assert code == 3
    assert "status: unknown" in out
    # and without the budget the same instance settles
    code, _, _ = run(capsys, "check", "--model", SMARTHOME, "--rules", str(rules))
    assert code == 0


def test_budget_env_variable(capsys, tmp_path, monkeypatch):
    rules = tmp_path / "loop.tl"
    rules.write_text(LOOP_RULE)
    monkeypatch.setenv("THREATFIX_BUDGET", "0")
    code, _, _ = run(capsys, "check", "--model", SMARTHOME, "--rules", str(rules))
    assert code == 3
    # an explicit flag wins over the environment
    code, _, _ = run(capsys, "check", "--model", SMARTHOME,
                     "--rules", str(rules), "--budget", "100000")
    assert code == 0


def test_budget_env_invalid(capsys, monkeypatch):
    monkeypatch.setenv("THREATFIX_BUDGET", "soon")
    code, _, err = run(capsys, "check", "--model", SMARTHOME, "--rules", IOT)
    assert code == 2
    assert "THREATFIX_BUDGET" in err
