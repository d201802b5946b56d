import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdelab.config import (
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    load_config,
    parse_config,
    serialize_config,
)
from spdelab.expr import ExprError, compile_expr

MINIMAL = """
problem = "heat"

[grid]
T = 1.0
N = 16

[heat]
size = 8
u0 = "sin(pi*x)"
g = "x*(1-x)"
"""


def test_expression_evaluation_and_broadcasting():
    e = compile_expr("sin(pi*x) * exp(-t) + 2**2", ("t", "x"))
    x = np.linspace(0, 1, 5)
    assert np.allclose(e(t=0.5, x=x), np.sin(np.pi * x) * np.exp(-0.5) + 4.0)
    assert compile_expr("1", ("x",))(x=x).shape == (5,)
    assert compile_expr("maximum(x, 0.5)", ("x",))(x=0.2) == 0.5
    assert compile_expr("0", ("x",)).is_zero and not compile_expr("x", ("x",)).is_zero


@pytest.mark.parametrize(
    "text",
    ["__import__('os')", "x.real", "x[0]", "x < 1", "foo(x)", "sin(x, x)", "'a'", "True", "lambda: 1", "sin(x=1)"],
)
def test_expression_whitelist_rejects(text):
    with pytest.raises(ExprError):
        compile_expr(text, ("x",))


def test_expression_errors_carry_columns():
    with pytest.raises(ExprError) as exc:
        compile_expr("x + zz", ("x",))
    assert exc.value.column == 4 and "column 5" in str(exc.value)
    with pytest.raises(ExprError, match="syntax error"):
        compile_expr("x +", ("x",))
    with pytest.raises(TypeError):
        compile_expr("x", ("x",))()
    with pytest.raises(ValueError):
        compile_expr("x", ("q",))


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.problem == "heat" and cfg.grid.N == 16
    assert cfg.heat.size == 8 and cfg.heat.space == "sine"
    assert cfg.ensemble.paths == 32 and cfg.noise.kind == "gaussian"
    assert cfg.problem_config is cfg.heat
    assert cfg.qlap is None


def test_problem_section_is_filled_with_defaults():
    cfg = parse_config('problem = "ns2d"\n')
    assert cfg.ns2d.mu == 0.05 and cfg.ns2d.stepping == "semi"


@pytest.mark.parametrize("problem", ["heat", "qlap", "harmonic", "ns2d"])
def test_round_trip_serialization(problem, tmp_path):
    cfg = parse_config(f'problem = "{problem}"\n[ensemble]\nladder = [[4, 4], [8, 4]]\n')
    text = serialize_config(cfg)
    again = parse_config(text)
    assert again.to_dict() == cfg.to_dict()
    path = tmp_path / "c.toml"
    path.write_text(text)
    assert load_config(path).to_dict() == cfg.to_dict()


@pytest.mark.parametrize(
    "text,key",
    [
        ('problem = "ns2d"\n[ns2d]\nmu = -1.0\n', "ns2d.mu"),
        ('problem = "heat"\n[grid]\nN = 0\n', "grid.N"),
        ('problem = "heat"\n[heat]\nspace = "p2"\n', "heat.space"),
        ('problem = "heat"\n[heat]\nu0 = "sin(q)"\n', "heat.u0"),
        ('problem = "heat"\n[ensemble]\nfunctionals = ["nope"]\n', "ensemble.functionals[0]"),
        ('problem = "heat"\n[ensemble]\nladder = [[8, 4], [4, 4]]\n', "ensemble.ladder"),
        ('problem = "heat"\n[noise]\nkind = "cauchy"\n', "noise.kind"),
        ('problem = "heat"\n[grid]\nN = "ten"\n', "grid.N"),
        ('problem = "heat"\n[grid]\nextra = 1\n', "grid.extra"),
        ('problem = "harmonic"\n[harmonic]\ngamma = [1, 2]\n', "harmonic.gamma"),
        ('problem = "qlap"\n[qlap]\nq = 1.0\n', "qlap.q"),
        ('problem = "heat"\n[bogus]\n', "bogus"),
        ('problem = "wave"\n', "problem"),
        ("[grid]\nN = 4\n", "problem"),
    ],
)
def test_semantic_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.key == key
    assert repr(key) in str(exc.value)


def test_syntax_errors_report_line_and_column():
    with pytest.raises(ConfigError) as exc:
        parse_config('problem = "heat"\nN = = 3\n')
    assert exc.value.line == 2 and exc.value.column is not None
    assert str(exc.value).startswith("line 2, column")


def test_non_utf8_file_rejected(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_bytes(b"problem = \"\xff\"\n")
    with pytest.raises(ConfigError, match="UTF-8"):
        load_config(path)


def test_config_from_dict_builds_dataclasses():
    cfg = config_from_dict({"problem": "harmonic", "harmonic": {"epsilon": 0.05}})
    assert isinstance(cfg, ExperimentConfig)
    assert cfg.harmonic.epsilon == 0.05 and cfg.harmonic.gamma == [0.0, 0.0, 1.0]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 500), st.integers(2, 10_000), st.integers(0, 2**31), st.floats(0.01, 10.0))
def test_round_trip_property(N, paths, seed, T):
    cfg = config_from_dict({"problem": "heat", "grid": {"N": N, "T": T},
                            "ensemble": {"paths": paths, "seed": seed}})
    assert parse_config(serialize_config(cfg)).to_dict() == cfg.to_dict()
