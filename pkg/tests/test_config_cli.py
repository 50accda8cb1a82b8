import csv
import math
from pathlib import Path

import numpy as np
import pytest

from gbdsde.cli import run
from gbdsde.config import config_digest, load_config, parse_config
from gbdsde.errors import ConfigurationError
from gbdsde.expressions import Expression, expression_coefficients
from gbdsde.coefficients import ModulusSpec

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = [line for line in lines if line.startswith("#")]
    rows = list(csv.reader(line for line in lines if not line.startswith("#")))
    return header, rows[0], rows[1:]


# Expressions


def test_expression_evaluates_whitelisted_calls():
    e = Expression("0.5 + sin(y) * where(y > 0, 1, 2) + pi", lambda n: n == "y")
    y = np.array([-1.0, 0.5])
    assert np.allclose(e(2, y=y), 0.5 + np.sin(y) * np.where(y > 0, 1, 2) + np.pi)


@pytest.mark.parametrize("text", [
    "__import__('os')", "y.real", "[y]", "lambda: 1", "open('x')", "y if y else 1", "'a'", "q + 1",
])
def test_expression_rejects_unsafe_or_unknown(text):
    with pytest.raises(ConfigurationError):
        Expression(text, lambda n: n == "y", "coefficients.f")


def test_expression_coefficients_need_constants():
    with pytest.raises(ConfigurationError, match="K"):
        expression_coefficients({"f": "y", "C": 1, "alpha": 0.5, "beta": -1}, ModulusSpec())
    with pytest.raises(ConfigurationError, match="g_bound"):
        expression_coefficients({"C": 1, "alpha": 0.5, "beta": -1, "K": 1, "g_bound": 0.5}, ModulusSpec())


# Config parsing


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.toml")):
        cfg = load_config(path)
        assert cfg.coefficient_set() is not None
        assert len(cfg.digest) == 64


@pytest.mark.parametrize("raw,key", [
    ({"modell": {}}, "modell"),
    ({"grid": {"n_step": 3}}, "n_step"),
    ({"grid": {"n_steps": 0}}, "n_steps"),
    ({"paths": {"n_paths": 1.5}}, "n_paths"),
    ({"model": {"preset": "nope"}}, "nope"),
    ({"coefficients": {"preset": "linear-h", "params": {"beta": 1.0}}}, "coefficients"),
    ({"coefficients": {"preset": "trivial", "C": 2}}, "params"),
    ({"solver": {"picard_tol": -1.0}}, "picard_tol"),
    ({"coefficients": {"f": "y +", "C": 1, "alpha": 0.5, "beta": -1, "K": 1}}, "coefficients.f"),
    ({"coefficients": {"C": 1, "alpha": 0.5, "beta": -1, "K": 1, "modulus": {"kind": "cubic"}}}, "cubic"),
])
def test_config_errors_name_the_key(raw, key):
    with pytest.raises(ConfigurationError, match=key):
        parse_config(raw)


def test_digest_is_order_independent():
    a = {"grid": {"n_steps": 3}, "paths": {"seed": 1, "n_paths": 4}}
    b = {"paths": {"n_paths": 4, "seed": 1}, "grid": {"n_steps": 3}}
    assert config_digest(a) == config_digest(b)
    assert config_digest(a) != config_digest({"grid": {"n_steps": 4}})


def test_overrides():
    cfg = load_config(CONFIGS / "trivial.toml").with_overrides(seed=9, n_paths=7, out_dir="x")
    assert (cfg.seed, cfg.n_paths, cfg.out_dir) == (9, 7, "x")
    with pytest.raises(ConfigurationError):
        cfg.with_overrides(n_paths=0)


# CLI


def test_basis_on_poisson(tmp_path):
    assert run(["basis", "--config", str(CONFIGS / "poisson.toml"), "--out", str(tmp_path)]) == 0
    header, columns, rows = read_csv(tmp_path / "basis.csv")
    assert columns == ["i", "c_1"] and len(rows) == 1
    assert float(rows[0][1]) == pytest.approx(1 / math.sqrt(4.0), rel=1e-14)
    assert any(line.startswith("# config_sha256=") for line in header)
    assert any("seed=1" in line for line in header)


def test_solve_trivial(tmp_path):
    assert run(["solve", "--config", str(CONFIGS / "trivial.toml"), "--out", str(tmp_path)]) == 0
    _, _, rows = read_csv(tmp_path / "y0_summary.csv")
    stats = {name: float(value) for name, value in rows}
    assert stats["min"] == stats["max"] == stats["mean"] == 1.5
    _, _, profile = read_csv(tmp_path / "profile.csv")
    assert all(float(r[1]) == 1.5 for r in profile)


def test_reruns_are_byte_identical(tmp_path):
    for out in ("a", "b"):
        for cmd in ("simulate", "solve"):
            args = [cmd, "--config", str(CONFIGS / "expression.toml"), "--out", str(tmp_path / out), "--paths", "300"]
            assert run(args) == 0
    for name in ("paths.csv", "brackets.csv", "y0_summary.csv", "residuals.csv", "profile.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_output(tmp_path):
    base = ["simulate", "--config", str(CONFIGS / "two-atom.toml"), "--paths", "50"]
    run(base + ["--out", str(tmp_path / "a"), "--seed", "1"])
    run(base + ["--out", str(tmp_path / "b"), "--seed", "2"])
    header, _, rows_a = read_csv(tmp_path / "a" / "paths.csv")
    _, _, rows_b = read_csv(tmp_path / "b" / "paths.csv")
    assert rows_a != rows_b
    assert any("seed=1 n_paths=50" in line for line in header)


def test_check_schedule_phi_outputs(tmp_path):
    cfg = str(CONFIGS / "non-lipschitz.toml")
    for cmd in ("check", "schedule", "phi"):
        assert run([cmd, "--config", cfg, "--out", str(tmp_path), "--paths", "500"]) == 0
    header, columns, rows = read_csv(tmp_path / "schedule.csv")
    assert columns == ["p", "T_prev", "T_p", "mu0", "M_p"] and float(rows[-1][2]) == 0.0
    assert any("provider=bound" in line for line in header)
    _, columns, rows = read_csv(tmp_path / "phi_summary.csv")
    assert columns == ["n", "sup", "quad_error"]
    _, columns, _ = read_csv(tmp_path / "checks.csv")
    assert columns == ["check", "key", "value", "passed"]


def test_errors_exit_nonzero(tmp_path, capsys):
    assert run(["solve", "--config", str(tmp_path / "missing.toml")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid]\nn_step = 4\n")
    assert run(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "n_step" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        run(["solve"])
