import math

import pytest

from jointdp.cli import load_config, main
from jointdp.data import load_federation
from jointdp.params import ConfigurationError

CONFIG = """
[task]
kind = "shared_mean"
noise_scale = 0.1
heterogeneity = 0.5
seed = 3

[problem]
n = 2
m = 8

[domain]
k = 1
ell = 4
d_x = 1.0
d_u = 2.0

[loss]
kind = "shared_mean_norm"

[optimizer]
paradigm = "joint_dp"
epsilon = 1.0
delta = 1e-5
T = 128

[output]
repetitions = 1
eval_samples = 300
seed = 7
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(CONFIG)
    return str(path)


def test_load_config_round(config_path):
    cfg, out_dir = load_config(config_path)
    assert cfg.domain.n == 2 and cfg.m == 8 and cfg.opt.T == 128
    assert cfg.resolved_r == 8
    assert out_dir is None


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text(CONFIG + "\n[task2]\nx = 1\n")
    with pytest.raises(ConfigurationError):
        load_config(str(path))
    path.write_text(CONFIG.replace("noise_scale", "noise_scalee"))
    with pytest.raises(ConfigurationError):
        load_config(str(path))


def test_calibrate_prints_sigma_one(capsys):
    rc = main([
        "calibrate", "--L", "1", "--T", "4", "--epsilon", "1",
        "--delta", repr(math.exp(-1)), "--m", "1", "--n", "2",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    sigma_line = [l for l in out.splitlines() if l.startswith("sigma=")][0]
    assert float(sigma_line.split("=")[1]) == pytest.approx(1.0, rel=1e-12)


def test_calibrate_missing_args_fails(capsys):
    rc = main(["calibrate", "--L", "1"])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_compare_repetitions_1_yields_4_rows(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["compare", "--config", config_path, "--out", str(out)])
    assert rc == 0
    rows = (out / "results.csv").read_text().splitlines()
    assert len(rows) == 5  # header + 4 paradigms
    assert rows[0].startswith("config_hash,")
    jsonl = (out / "runs.jsonl").read_text().splitlines()
    assert len(jsonl) == 4


def test_compare_rerun_byte_identical_csv(config_path, tmp_path):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["compare", "--config", config_path, "--out", str(out1)]) == 0
    assert main(["compare", "--config", config_path, "--out", str(out2)]) == 0
    assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()


def test_seed_override_changes_rows(config_path, tmp_path):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    main(["compare", "--config", config_path, "--out", str(out1)])
    main(["compare", "--config", config_path, "--out", str(out2), "--seed", "123"])
    assert (out1 / "results.csv").read_bytes() != (out2 / "results.csv").read_bytes()


def test_gen_writes_loadable_federation(config_path, tmp_path):
    out = tmp_path / "fedout"
    rc = main(["gen", "--config", config_path, "--out", str(out), "--name", "f.txt"])
    assert rc == 0
    fed = load_federation(str(out / "f.txt"))
    assert fed.n == 2 and fed.m == 8


def test_stability_subcommand(config_path, tmp_path, capsys):
    out = tmp_path / "stab"
    rc = main([
        "stability", "--config", config_path, "--out", str(out), "--pairs", "3",
    ])
    assert rc == 0
    text = (out / "stability.txt").read_text()
    assert "mean_output_distance=" in text
    assert "bound=" in text


def test_user_sweep_requires_grid(config_path, tmp_path, capsys):
    rc = main(["user-sweep", "--config", config_path, "--out", str(tmp_path / "u")])
    assert rc == 2
    rc = main([
        "user-sweep", "--config", config_path, "--out", str(tmp_path / "u"),
        "--r-grid", "2,8",
    ])
    assert rc == 0
    rows = (tmp_path / "u" / "results.csv").read_text().splitlines()
    assert len(rows) == 3  # header + r=2 + r=8 at one repetition each


def test_sweep_subcommand_with_config(tmp_path, capsys):
    path = tmp_path / "sweep.toml"
    path.write_text(
        CONFIG
        + """
[sweep]
mode = "product"
[sweep.axes]
ell = [4, 8]
"""
    )
    out = tmp_path / "sw"
    rc = main(["sweep", "--config", str(path), "--out", str(out)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "slope of log(excess) vs log(ell)" in stdout
    rows = (out / "results.csv").read_text().splitlines()
    assert len(rows) == 3


def test_env_var_output_dir(config_path, tmp_path, monkeypatch):
    monkeypatch.setenv("JOINTDP_OUT", str(tmp_path / "envout"))
    monkeypatch.chdir(tmp_path)
    assert main(["compare", "--config", config_path]) == 0
    assert (tmp_path / "envout" / "results.csv").exists()


def test_unknown_subcommand_and_flag_exit_nonzero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0
    with pytest.raises(SystemExit) as exc:
        main(["compare", "--bogus-flag", "1"])
    assert exc.value.code != 0


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for sub in ("compare", "sweep", "user-sweep", "stability", "calibrate", "gen"):
        assert sub in out
