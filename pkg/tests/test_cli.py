import csv
import json

import pytest

from cramer_rl.cli import ConfigError, OUT_ENV, main, parse_config

ONE_STATE = {"n": 1, "gamma": 0.9, "p": [[1.0]], "rewards": [[[1.0, 1.0]]]}


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def output_files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "metadata.json"}


# -- configuration -------------------------------------------------------------------------------

def test_defaults_parse(tmp_path):
    cfg = parse_config({"output_dir": str(tmp_path)})
    assert cfg.command == "verify"
    assert cfg.seed == 0


def test_lambda_key_maps(tmp_path):
    cfg = parse_config({"output_dir": str(tmp_path), "geometry": {"k": 5, "lambda": 0.5}})
    assert cfg.geometry.lam == 0.5


@pytest.mark.parametrize("doc", [
    {"geometry": {"k": 4}},
    {"geometry": {"k": 5, "lambda": -1}},
    {"geometry": {"v_min": 0}},
    {"geometry": {"v_min": 1, "v_max": 0}},
    {"features": {"kind": "wavelet"}},
    {"schedule": {"alpha0": 0}},
    {"verify": {"claims": ["nope"]}},
    {"verify": {"grid": {"size": 3}}},
    {"seed": -1},
    {"colour": "blue"},
    {"geometry": {"kk": 3}},
])
def test_invalid_configs(tmp_path, doc):
    with pytest.raises(ConfigError):
        parse_config({"output_dir": str(tmp_path), **doc})


@pytest.mark.parametrize("doc", [
    {"geometry": {"k": 4}},
    {"mdp": {"n": 2}},
    {"features": {"kind": "random", "m": 9}},
])
def test_invalid_config_exit_code(tmp_path, doc, capsys):
    cfg = write_config(tmp_path, {**doc, "schedule": {"steps": 0}})
    assert main(["evaluate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_claim_and_unreadable_config(tmp_path):
    assert main(["verify", "--claim", "nope", "--out", str(tmp_path)]) == 2
    assert main(["verify", "--config", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert main(["verify", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_command_mismatch(tmp_path):
    cfg = write_config(tmp_path, {"command": "control"})
    assert main(["verify", "--config", cfg, "--out", str(tmp_path)]) == 2


# -- verify -----------------------------------------------------------------------------------

def test_verify_single_claim(tmp_path):
    out = tmp_path / "v"
    cfg = write_config(tmp_path, {"verify": {"counts": {"lemma_condition_number": 2}}})
    assert main(["verify", "--config", cfg, "--claim", "lemma_condition_number",
                 "--out", str(out)]) == 0
    assert (out / "lemma_condition_number.json").exists()
    rows = read_csv(out / "summary.csv")
    assert [r[0] for r in rows[1:]] == ["lemma_condition_number"]
    assert rows[1][-1] == "1"
    meta = json.loads((out / "metadata.json").read_text())
    assert "timestamp" in meta and meta["config"]["command"] == "verify"


def test_verify_failure_exits_one(tmp_path):
    # the centered contraction is violated by some improper pairs
    out = tmp_path / "v"
    assert main(["verify", "--claim", "lemma_contraction", "--out", str(out)]) == 1
    assert read_csv(out / "summary.csv")[1][-1] == "0"


def test_verify_seed_shift(tmp_path):
    cfg = write_config(tmp_path, {"verify": {"counts": {"lemma_expectation": 5}}})
    main(["verify", "--config", cfg, "--claim", "lemma_expectation", "--seed", "7",
          "--out", str(tmp_path / "a")])
    doc = json.loads((tmp_path / "a" / "lemma_expectation.json").read_text())
    seeds = {d["label"].split("seed=")[1] for d in doc["details"] if "seed=" in d["label"]}
    assert seeds == {"7", "8", "9", "10", "11"}


# -- evaluate ---------------------------------------------------------------------------------------

def test_evaluate_one_state(tmp_path):
    out = tmp_path / "e"
    cfg = write_config(tmp_path, {"mdp": ONE_STATE, "geometry": {"k": 21, "lambda": 1.0},
                                  "schedule": {"steps": 2000}})
    assert main(["evaluate", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "values.csv")
    assert rows[0] == ["state", "V", "reference", "fixed_point", "sgd"]
    assert float(rows[1][1]) == pytest.approx(10.0)
    assert float(rows[1][2]) == pytest.approx(10.0, abs=1e-6)
    assert float(rows[1][3]) == pytest.approx(10.0, abs=1e-6)
    header = read_csv(out / "p_pi.csv")[0]
    assert len(header) == 21
    assert float(header[0]) == pytest.approx(-10) and float(header[-1]) == pytest.approx(10)
    fp = json.loads((out / "fixed_point.json").read_text())
    assert fp["lambda"] == 1.0 and fp["n"] == 1
    assert {"distance_to_fixed_point", "steps", "seed"} == set(
        json.loads((out / "sgd.json").read_text()))


def test_evaluate_mdp_from_path(tmp_path):
    mdp = write_config(tmp_path, ONE_STATE, "mdp.json")
    cfg = write_config(tmp_path, {"mdp": mdp, "schedule": {"steps": 0}})
    assert main(["evaluate", "--config", cfg, "--out", str(tmp_path / "e")]) == 0
    assert not (tmp_path / "e" / "sgd.csv").exists()


def test_evaluate_narrow_support_exits_one(tmp_path):
    cfg = write_config(tmp_path, {"mdp": ONE_STATE,
                                  "geometry": {"k": 11, "v_min": -2, "v_max": 2}})
    assert main(["evaluate", "--config", cfg, "--out", str(tmp_path / "e")]) == 1


def test_evaluate_deterministic(tmp_path):
    doc = {"mdp": {"random": {"n": 4, "gamma": 0.8}}, "features": {"kind": "random", "m": 2},
           "schedule": {"steps": 3000}, "seed": 5}
    cfg = write_config(tmp_path, doc)
    main(["evaluate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["evaluate", "--config", cfg, "--out", str(tmp_path / "b")])
    a, b = output_files(tmp_path / "a"), output_files(tmp_path / "b")
    assert a == b and "sgd.csv" in a


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    cfg = write_config(tmp_path, {"mdp": ONE_STATE, "schedule": {"steps": 0},
                                  "output_dir": str(tmp_path / "cfg")})
    assert main(["evaluate", "--config", cfg]) == 0
    assert (tmp_path / "env" / "values.csv").exists()
    assert not (tmp_path / "cfg").exists()
    assert main(["evaluate", "--config", cfg, "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "values.csv").exists()


# -- control -----------------------------------------------------------------------------------------

def test_control_short_run(tmp_path):
    out = tmp_path / "c"
    cfg = write_config(tmp_path, {"control": {"steps": 3000, "snapshot_every": 1000}})
    status = main(["control", "--config", cfg, "--out", str(out)])
    assert status in (0, 1)
    for name in ("policy.csv", "oracle_policy.csv", "returns.csv", "snapshots.csv",
                 "control.json", "metadata.json"):
        assert (out / name).exists()
    assert read_csv(out / "returns.csv")[0] == ["step", "return"]
    snaps = read_csv(out / "snapshots.csv")
    assert len(snaps[0]) == 3 + 51
    assert len(snaps) == 1 + 3 * 15 * 4
    ctl = json.loads((out / "control.json").read_text())
    assert status == (0 if ctl["policy_matches_oracle"] and ctl["mass_in_range"] else 1)


@pytest.mark.slow
def test_control_matches_oracle(tmp_path):
    out = tmp_path / "c"
    assert main(["control", "--out", str(out)]) == 0
    policy = {r[0]: r for r in read_csv(out / "policy.csv")[1:]}
    oracle = {r[0]: r[3].split("|") for r in read_csv(out / "oracle_policy.csv")[1:]}
    for x, row in policy.items():
        if row[4] == "1":
            assert row[3] in oracle[x]
