import json

import pytest

from roomev import cli

TRUE_ALPHA = (-0.01, 0.05, -0.02)
FIXED = "battery.coefficients=[-0.01, 0.05, -0.02]"

# a deliberately small configuration so the whole pipeline runs in seconds
SMALL = ["--set", "data.days=14",
         "--set", "surrogate.room={lookback: 5, n_layers: 1, n_hidden: 8, cell: lstm, sigma_i: 0.0}",
         "--set", "surrogate.weather={lookback: 5, n_layers: 1, n_hidden: 8, cell: gru, sigma_i: 0.0}",
         "--set", "surrogate.room_train.n_ep=2", "--set", "surrogate.weather_train.n_ep=2",
         "--set", "surrogate.horizon=12",
         "--set", "agent={hidden: [16, 16], batch_size: 16, warmup: 50, total_steps: 150}",
         "--set", "eval.n_episodes=3", "--set", "eval.hdd_days=7"]


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_battery_recovers_noiseless_coefficients(tmp_path, capsys):
    d = str(tmp_path / "r")
    base = ["--run-dir", d, "--set", "plant.battery.noise_sigma=0"]
    assert run_cli(capsys, "gen-data", "--days", "7", *base)[0] == 0
    code, out, _ = run_cli(capsys, "fit-battery", *base)
    assert code == 0
    printed = dict(tok.split("=") for tok in out.split() if tok.startswith("alpha"))
    got = [float(printed[f"alpha{k}"]) for k in range(3)]
    assert got == pytest.approx(TRUE_ALPHA, abs=1e-10)
    rec = json.loads((tmp_path / "r" / "battery" / "coefficients.json").read_text())
    assert [rec[f"alpha{k}"] for k in range(3)] == got


def test_battery_evaluation_is_byte_identical(tmp_path, capsys):
    texts = []
    for name in ("a", "b"):
        d = str(tmp_path / name)
        code, out, _ = run_cli(capsys, "evaluate", "--env", "battery", "--agents", "RuleBasedCharge,RuleBased",
                               "--n-episodes", "4", "--run-dir", d, "--set", FIXED)
        assert code == 0 and "RuleBasedCharge" in out
        texts.append([(tmp_path / name / "eval" / "battery" / f).read_bytes()
                      for f in ("report.json", "report.csv", "episodes.csv", "traces.csv")])
    assert texts[0] == texts[1]


def test_unknown_agent_lists_valid_names(tmp_path, capsys):
    code, _, err = run_cli(capsys, "evaluate", "--env", "battery", "--agents", "Oracle",
                           "--run-dir", str(tmp_path), "--set", FIXED)
    assert code == cli.EXIT_CONFIG
    assert "valid agents: ValvesOpen" in err and "DDPG" in err


def test_unknown_config_key_is_a_config_error(tmp_path, capsys):
    code, _, err = run_cli(capsys, "gen-data", "--run-dir", str(tmp_path), "--set", "plant.nonsense=1")
    assert code == cli.EXIT_CONFIG and "unknown config key plant.nonsense" in err


def test_missing_inputs_exit_three(tmp_path, capsys):
    code, _, err = run_cli(capsys, "fit-battery", "--run-dir", str(tmp_path))
    assert code == cli.EXIT_MISSING and "gen-data" in err
    code, _, _ = run_cli(capsys, "train-agent", "battery", "--run-dir", str(tmp_path))
    assert code == cli.EXIT_MISSING
    code, _, _ = run_cli(capsys, "evaluate", "--env", "battery", "--agents", "DDPG", "--run-dir", str(tmp_path),
                         "--set", FIXED)
    assert code == cli.EXIT_MISSING


def test_run_directory_named_by_hash_and_flags_outside_hash(tmp_path, capsys):
    assert run_cli(capsys, "gen-data", "--days", "7", "--output-dir", str(tmp_path))[0] == 0
    runs = list(tmp_path.iterdir())
    assert len(runs) == 1 and runs[0].name.startswith("run-")
    manifest = json.loads((runs[0] / cli.MANIFEST).read_text())
    assert runs[0].name == f"run-{manifest['config_hash']}"
    assert manifest["commands"]["gen-data"]["flags"] == {"data.days": 7}
    assert "data/history.csv" in manifest["artifacts"]


def test_manifest_mismatch_is_reported(tmp_path, capsys):
    d = str(tmp_path)
    run_cli(capsys, "gen-data", "--days", "7", "--run-dir", d)
    # pretend an earlier run recorded different bytes
    manifest = json.loads((tmp_path / cli.MANIFEST).read_text())
    manifest["artifacts"]["data/history.csv"] = "0" * 64
    (tmp_path / cli.MANIFEST).write_text(json.dumps(manifest))
    code, _, err = run_cli(capsys, "gen-data", "--days", "7", "--run-dir", d)
    assert code == 0 and "determinism-manifest mismatch" in err
    code, _, err = run_cli(capsys, "gen-data", "--days", "7", "--run-dir", d)
    assert "mismatch" not in err


def test_preprocess_writes_clean_data(tmp_path, capsys):
    d = str(tmp_path)
    run_cli(capsys, "gen-data", "--days", "7", "--run-dir", d)
    assert run_cli(capsys, "preprocess", "--run-dir", d)[0] == 0
    clean = (tmp_path / "data" / "clean.csv").read_text().splitlines()
    raw = (tmp_path / "data" / "history.csv").read_text().splitlines()
    assert clean[0].startswith("# config_hash=") and len(clean) == len(raw)


# full pipeline -------------------------------------------------------------------------------------


PIPELINE = [["gen-data"], ["preprocess"], ["fit-battery"], ["train-surrogate", "weather"],
            ["train-surrogate", "room"], ["tune", "room", "--budget", "1"], ["train-agent", "battery"],
            ["evaluate", "--env", "room", "--agents", "RuleBased,ValvesClosed"], ["report"]]


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    dirs = []
    for name in ("first", "second"):
        d = tmp_path_factory.mktemp(name)
        for cmd in PIPELINE:
            code = cli.main(cmd + ["--run-dir", str(d)] + SMALL)
            assert code == 0, cmd
        dirs.append(d)
    return dirs


def test_pipeline_produces_artifacts(pipeline_runs):
    d = pipeline_runs[0]
    for rel in ("surrogate/room/model/manifest.json", "surrogate/room/horizon_errors.csv",
                "agents/battery/policy/weights.bin", "eval/room/report.json", "eval/room/hdd.json",
                "report/summary.json", "tune/room/trials.csv"):
        assert (d / rel).is_file(), rel


def test_pipeline_artifacts_byte_identical(pipeline_runs):
    a, b = pipeline_runs
    ma = json.loads((a / cli.MANIFEST).read_text())["artifacts"]
    mb = json.loads((b / cli.MANIFEST).read_text())["artifacts"]
    assert len(ma) > 15
    assert ma == mb
