import subprocess
import sys

import pytest

from posetmc import cli, validation
from posetmc.diagnostics import read_csv
from posetmc.experiments import ConfigError, default_threads, parse_config, parse_config_text

SMALL_ISING = """
[ising-sweep-eta]
samplers = mh, lifted1, lifted2[optimal]
proposals = uniform, barker
eta = 4, 6
iters = 3000
replicates = 3
seed = 7
"""


def test_minimal_config_fills_defaults():
    cfg = parse_config_text("[ising-sweep-eta]\niters = 5000\n")
    assert cfg.burnin == 500 and cfg.replicates == 20 and cfg.eta == [50, 100, 160]


def test_default_ising_block():
    cfg = parse_config_text("[ising-sweep-mu]\n")
    assert cfg.eta == [50] and cfg.lam == 0.5 and cfg.mu[0] == 1.0 and cfg.ell is None
    # the split column defaults to floor(eta / 2) = 25 when the target is built
    assert cfg.eta[0] // 2 == 25


def test_negative_coupling_names_key_and_line():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("[ising-sweep-eta]\niters = 100\nlam = -0.5\n", "cfg.ini")
    assert "cfg.ini:3: lam" in str(exc.value)


def test_config_errors():
    with pytest.raises(ConfigError, match="unknown key 'colour'"):
        parse_config_text("[crime-vs]\ncolour = red\n")
    with pytest.raises(ConfigError, match=":2: iters: cannot parse"):
        parse_config_text("[crime-vs]\niters = lots\n")
    with pytest.raises(ConfigError, match="unknown experiment"):
        parse_config_text("[fancy]\n")
    with pytest.raises(ConfigError, match="section"):
        parse_config_text("iters = 3\n")
    with pytest.raises(ConfigError, match="burnin"):
        parse_config_text("[crime-vs]\niters = 100\nburnin = 100\n")
    with pytest.raises(ConfigError, match="samplers"):
        parse_config_text("[crime-vs]\nsamplers = gibbs\n")
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config("/nonexistent/config.ini")


def test_thread_env_var(monkeypatch):
    monkeypatch.setenv("POSETMC_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("POSETMC_THREADS", "zero")
    with pytest.raises(ConfigError):
        default_threads()


def _run(tmp_path, text, name, *extra):
    cfg = tmp_path / f"{name}.ini"
    cfg.write_text(text)
    out = tmp_path / name
    code = cli.main(["run", str(cfg), "--out", str(out), "--quiet", *extra])
    return code, out


def _strip_seconds(path):
    rows = read_csv(path)
    for r in rows:
        r.pop("seconds")
    return rows


def test_run_is_deterministic_and_thread_independent(tmp_path, monkeypatch):
    code1, out1 = _run(tmp_path, SMALL_ISING, "a")
    code2, out2 = _run(tmp_path, SMALL_ISING, "b", "--threads", "2")
    assert code1 == code2 == 0
    f1, f2 = out1 / "ising-sweep-eta.csv", out2 / "ising-sweep-eta.csv"
    assert _strip_seconds(f1) == _strip_seconds(f2)
    rows = read_csv(f1)
    # 2 etas x 6 kinds x (3 replicates + aggregate)
    assert len(rows) == 2 * 6 * 4
    assert list(rows[0])[:7] == ["replicate_id", "sampler", "proposal", "eta", "lam", "mu", "ell"]
    assert {r["replicate_id"] for r in rows} == {0.0, 1.0, 2.0, "aggregate"}


def test_transdim_and_crime_runs(tmp_path):
    code, out = _run(tmp_path, "[transdim-demo]\niters = 3000\nreplicates = 2\nnoise_sd = 0, 2\n", "td")
    assert code == 0
    rows = read_csv(out / "transdim-demo.csv")
    assert len(rows) == 2 * 2 * 3 and "tv" in rows[0]
    code, out = _run(tmp_path, "[crime-vs]\niters = 500\nreplicates = 2\n", "cr")
    assert code == 0 and len(read_csv(out / "crime-vs.csv")) == 3 * 3


def test_missing_dataset_exits_nonzero(tmp_path, capsys):
    code, _ = _run(tmp_path, "[crime-vs]\ndataset = /no/such/file.csv\niters = 100\n", "m")
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    code, _ = _run(tmp_path, "[ising-sweep-eta]\nlam = -1\n", "bad")
    assert code == 2
    assert "lam" in capsys.readouterr().err


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2
    assert cli.main(["validate", "--seed", "-1"]) == 2


def test_validate_exit_codes(tmp_path, monkeypatch):
    real = validation.run_all
    monkeypatch.setattr(validation, "run_all", lambda seed: real(seed, count=3))
    assert cli.main(["validate", "--seed", "1", "--out", str(tmp_path), "--quiet"]) == 0
    rows = read_csv(tmp_path / "validate.csv")
    assert all(r["passed"] == "True" for r in rows)
    failing = validation.SuiteResult("broken", False, "forced failure", 0.0)
    monkeypatch.setattr(validation, "run_all", lambda seed: [failing])
    assert cli.main(["validate", "--out", str(tmp_path), "--quiet"]) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "posetmc", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "validate" in res.stdout
