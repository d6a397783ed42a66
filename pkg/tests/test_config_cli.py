import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fraclp.cli import main
from fraclp.config import (ConfigError, ExperimentConfig, config_help, dumps, expand_sweep, loads,
                           parse_config, shipped_config_path, shipped_configs)
from fraclp.experiment import blocks_function, emit_plotdata, read_records, run_experiment
from fraclp.grid import make_interval_grid, make_rect_grid, write_function_csv

SMALL = """
[grid]
n = 32
[objective]
truth_blocks = 0.2:0.5:1.0; 0.7:0.8:-0.5
[data]
noise_std = 0.02
seed = 11
[solver]
alpha = 1e-2
beta_reg = 0.05
eps_min = 1e-10
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def test_minimal_file_uses_defaults():
    cfg = loads("[objective]\ntruth_blocks = 0.1:0.2:1\n")
    assert cfg.replace(truth_blocks="") == ExperimentConfig()
    cfg.solver_config()


def test_p_out_of_range_is_named():
    with pytest.raises(ConfigError, match=r"p must lie in \(0,1\)"):
        loads(SMALL + "p = 1.5\n")


def test_every_problem_is_listed():
    text = (SMALL.replace("n = 32", "n = 1\nbogus = 3").replace("alpha = 1e-2", "alpha = -1")
            + "tol_cg = x\n[extra]\n")
    with pytest.raises(ConfigError) as info:
        loads(text)
    problems = info.value.problems
    joined = "\n".join(problems)
    for needle in ("grid.bogus: unknown key", "[extra]: unknown section", "grid.n",
                   "solver.alpha", "solver.tol_cg: cannot parse"):
        assert needle in joined
    with pytest.raises(ConfigError, match="not one of"):
        loads(SMALL.replace("[grid]", "[operator]\nkind = wavelet\n[grid]"))
    with pytest.raises(ConfigError, match="duplicate|malformed"):
        loads("[grid]\nn = 3\nn = 4\n")


def test_missing_file():
    with pytest.raises(ConfigError, match="no such file"):
        parse_config("/nonexistent/cfg.ini")


def test_sweep_expansion():
    cfg = loads(SMALL + "[sweep]\nparameter = beta_reg\nvalues = [0.01, 0.1, 1]\n")
    members = expand_sweep(cfg)
    assert [m.beta_reg for _, m in members] == [0.01, 0.1, 1.0]
    assert [label for label, _ in members] == ["beta_reg=0.01", "beta_reg=0.1", "beta_reg=1.0"]
    assert all(not m.sweep_parameter for _, m in members)
    with pytest.raises(ConfigError, match="sweep.values"):
        loads(SMALL + "[sweep]\nparameter = p\nvalues = 0.5, 2\n")
    with pytest.raises(ConfigError, match="not a numeric"):
        loads(SMALL + "[sweep]\nparameter = reaction\nvalues = 1\n")
    n_sweep = expand_sweep(loads(SMALL + "[sweep]\nparameter = n\nvalues = 16, 24\n"))
    assert [m.n for _, m in n_sweep] == [16, 24]


@pytest.mark.parametrize("name", ["denoise_1d", "heat_source_1d"])
def test_round_trip(name):
    cfg = parse_config(shipped_config_path(name))
    assert loads(dumps(cfg)) == cfg
    assert dumps(loads(dumps(cfg))) == dumps(cfg)


def test_shipped_configs_are_listed_and_resolvable():
    assert shipped_configs() == ["denoise_1d", "heat_source_1d"]
    assert parse_config("denoise_1d") == parse_config(shipped_config_path("denoise_1d.ini"))


def test_help_documents_every_key():
    text = config_help()
    for key in ("n", "kind", "s", "truth_blocks", "alpha", "beta_reg", "eps_min", "L_tilde",
                "bt_growth", "parameter", "values", "directory", "u0"):
        assert f"    {key} = " in text


def test_blocks_function_1d_and_2d():
    g = make_interval_grid(9)
    u = blocks_function(g, "0.15:0.45:2; 0.35:0.55:1")
    np.testing.assert_array_equal(u, [0, 2, 2, 3, 1, 0, 0, 0, 0])
    g2 = make_rect_grid(3, 1.0, 3, 1.0)
    v = blocks_function(g2, "0.3:0.8:0.6:0.9:1.5")
    assert v.reshape(3, 3)[1:, 2].tolist() == [1.5, 1.5] and v.sum() == 3.0
    with pytest.raises(ValueError):
        blocks_function(g, "0.1:0.2")


def test_run_writes_four_files_and_is_deterministic(small_cfg, tmp_path):
    assert main(["run", "--config", str(small_cfg), "--output", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(small_cfg), "--output", str(tmp_path / "b")]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == ["iterations.csv", "manifest.json", "report.txt", "solution.csv"]
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 11 and len(manifest["config_sha256"]) == 64
    assert {"numpy", "scipy", "python", "fraclp"} <= set(manifest)
    assert loads(manifest["config"]) == parse_config(small_cfg)


def test_seed_changes_output(small_cfg, tmp_path):
    other = tmp_path / "other.ini"
    other.write_text(SMALL.replace("seed = 11", "seed = 12"))
    main(["run", "--config", str(small_cfg), "--output", str(tmp_path / "a")])
    main(["run", "--config", str(other), "--output", str(tmp_path / "b")])
    a = (tmp_path / "a" / "solution.csv").read_bytes()
    assert a != (tmp_path / "b" / "solution.csv").read_bytes()


def test_plotdata(small_cfg, tmp_path):
    out = tmp_path / "run"
    main(["run", "--config", str(small_cfg), "--output", str(out)])
    written = emit_plotdata(out)
    assert [p.name for p in written] == ["phi_history.csv", "step_norm.csv", "u_profile.csv",
                                         "support_mask.csv"]
    with open(out / "plotdata" / "phi_history.csv") as fh:
        phis = [float(r["phi"]) for r in csv.DictReader(fh)]
    assert len(phis) == len(read_records(out)) + 1
    assert all(b <= a for a, b in zip(phis, phis[1:]))
    with open(out / "plotdata" / "u_profile.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 32 and list(rows[0]) == ["x", "u"]
    with open(out / "plotdata" / "support_mask.csv") as fh:
        mask = [int(r["support"]) for r in csv.DictReader(fh)]
    assert set(mask) <= {0, 1}


def test_plotdata_on_empty_directory_fails(tmp_path, capsys):
    with pytest.raises(FileNotFoundError):
        emit_plotdata(tmp_path)
    assert main(["plotdata", str(tmp_path)]) == 2
    assert "missing run artifacts" in capsys.readouterr().err


def test_sweep_writes_subdirectories_and_summary(small_cfg, tmp_path, monkeypatch):
    sweep = tmp_path / "sweep.ini"
    sweep.write_text(SMALL + "[sweep]\nparameter = beta_reg\nvalues = 0.01, 0.1, 1\n")
    assert main(["sweep", "--config", str(sweep), "--output", str(tmp_path / "s1")]) == 0
    monkeypatch.setenv("FRACLP_THREADS", "2")
    assert main(["sweep", "--config", str(sweep), "--output", str(tmp_path / "s2")]) == 0
    dirs = sorted(p.name for p in (tmp_path / "s1").iterdir() if p.is_dir())
    assert dirs == ["beta_reg=0.01", "beta_reg=0.1", "beta_reg=1.0"]
    with open(tmp_path / "s1" / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["beta_reg"]) for r in rows] == [0.01, 0.1, 1.0]
    assert {"phi_final", "support_fraction", "pairing_gap"} <= set(rows[0])
    fractions = [float(r["support_fraction"]) for r in rows]
    assert fractions == sorted(fractions, reverse=True)
    # parallel members produce the same bytes as serial ones
    for d in dirs:
        for name in ("solution.csv", "iterations.csv"):
            assert (tmp_path / "s1" / d / name).read_bytes() == \
                (tmp_path / "s2" / d / name).read_bytes()
    assert (tmp_path / "s1" / "summary.csv").read_bytes() == \
        (tmp_path / "s2" / "summary.csv").read_bytes()


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(SMALL + "p = 1.5\n")
    assert main(["run", "--config", str(bad)]) == 1
    assert "p must lie in (0,1)" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 1
    broken = tmp_path / "broken.ini"
    broken.write_text(SMALL.replace("truth_blocks = 0.2:0.5:1.0; 0.7:0.8:-0.5",
                                    "z_path = nowhere.csv"))
    assert main(["run", "--config", str(broken), "--output", str(tmp_path / "o")]) == 2
    assert "data stage failed" in capsys.readouterr().err


def test_measurement_from_csv(tmp_path):
    g = make_interval_grid(32)
    write_function_csv(tmp_path / "z.csv", g, np.sin(3 * g.x))
    cfg_path = tmp_path / "z.ini"
    cfg_path.write_text(SMALL.replace("truth_blocks = 0.2:0.5:1.0; 0.7:0.8:-0.5",
                                      "z_path = z.csv").replace("noise_std = 0.02",
                                                                "noise_std = 0.0"))
    out = run_experiment(parse_config(cfg_path), tmp_path / "out", base_dir=tmp_path)
    assert (out / "solution.csv").is_file()


def test_matrix_dump_option(tmp_path):
    cfg = loads(SMALL.replace("n = 32", "n = 16") + "[output]\ndump_matrix = true\n")
    run_experiment(cfg, tmp_path / "m")
    A = np.loadtxt(tmp_path / "m" / "matrix.csv", delimiter=",")
    assert A.shape == (16, 16)


def test_module_entry_point(small_cfg, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fraclp", "run", "--config", str(small_cfg),
                           "--output", str(tmp_path / "o")], capture_output=True, text=True,
                          env={**os.environ, "PYTHONHASHSEED": "0"})
    assert proc.returncode == 0, proc.stderr
    assert Path(proc.stdout.strip()) == tmp_path / "o"
    help_text = subprocess.run([sys.executable, "-m", "fraclp", "run", "--help"],
                               capture_output=True, text=True).stdout
    assert "beta_reg" in help_text and "--output" in help_text
