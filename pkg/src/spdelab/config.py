"""Experiment configuration: a TOML document validated into dataclasses.

Example::

    problem = "heat"

    [grid]
    T = 1.0
    N = 16

    [ensemble]
    paths = 32
    seed = 0

    [heat]
    size = 8
    u0 = "sin(pi*x)"
    g = "x*(1-x)"

Syntax errors carry a line and column; semantic errors name the key path
(for example ``ns2d.mu``).
"""

from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .expr import ExprError, compile_expr
from .noise import IncrementKind

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "GridConfig",
    "NoiseConfig",
    "EnsembleSettings",
    "OutputConfig",
    "VerifyConfig",
    "HeatConfig",
    "QlapConfig",
    "HarmonicConfig",
    "NSConfig",
    "PROBLEMS",
    "FUNCTIONALS",
    "parse_config",
    "load_config",
    "serialize_config",
]

PROBLEMS = ("heat", "qlap", "harmonic", "ns2d")
FUNCTIONALS = ("energy_T", "coef0_T", "max_energy", "dirichlet_T", "sphere_T")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None, column: int | None = None):
        self.key, self.line, self.column = key, line, column
        parts = []
        if line is not None:
            parts.append(f"line {line}, column {column}")
        if key is not None:
            parts.append(f"key {key!r}")
        prefix = f"{'; '.join(parts)}: " if parts else ""
        super().__init__(prefix + message)


def _err(path: str, msg: str):
    raise ConfigError(msg, key=path)


def _expr(path: str, text, variables):
    if not isinstance(text, str):
        _err(path, "expected an expression string")
    try:
        compile_expr(text, variables)
    except ExprError as exc:
        _err(path, str(exc))


def _positive(path, value):
    if not value > 0:
        _err(path, f"must be positive, got {value}")


@dataclass
class GridConfig:
    T: float = 1.0
    N: int = 16

    def validate(self, p):
        _positive(f"{p}.T", self.T)
        if self.N < 1:
            _err(f"{p}.N", f"must be at least 1, got {self.N}")


@dataclass
class NoiseConfig:
    kind: str = "gaussian"

    def validate(self, p):
        try:
            IncrementKind.parse(self.kind)
        except ValueError:
            _err(f"{p}.kind", f"unknown increment kind {self.kind!r}")


@dataclass
class EnsembleSettings:
    paths: int = 32
    seed: int = 0
    threads: int = 1
    max_trajectories: int = 8
    functionals: list = field(default_factory=lambda: ["energy_T", "coef0_T"])
    ladder: list = field(default_factory=list)
    holder_p: float = 4.0

    def validate(self, p):
        if self.paths < 2:
            _err(f"{p}.paths", f"need at least 2 paths, got {self.paths}")
        if self.seed < 0:
            _err(f"{p}.seed", "must be nonnegative")
        if self.threads < 1:
            _err(f"{p}.threads", "must be at least 1")
        if self.max_trajectories < 0:
            _err(f"{p}.max_trajectories", "must be nonnegative")
        if not self.functionals:
            _err(f"{p}.functionals", "at least one functional is required")
        for i, name in enumerate(self.functionals):
            if name not in FUNCTIONALS:
                _err(f"{p}.functionals[{i}]", f"unknown functional {name!r}; choose from {FUNCTIONALS}")
        for i, entry in enumerate(self.ladder):
            if not (isinstance(entry, list) and len(entry) == 2 and all(isinstance(v, int) and v > 0 for v in entry)):
                _err(f"{p}.ladder[{i}]", "entries must be [N, size] pairs of positive integers")
        Ns = [e[0] for e in self.ladder]
        if any(b <= a for a, b in zip(Ns, Ns[1:])):
            _err(f"{p}.ladder", "entries must be strictly increasing in N")
        if self.holder_p < 1:
            _err(f"{p}.holder_p", "must be at least 1")


@dataclass
class OutputConfig:
    dir: str = "out"
    figures: bool = True


@dataclass
class VerifyConfig:
    energy: bool = True
    martingale: bool = True
    structure: bool = True
    tolerance: float = 1e-10

    def validate(self, p):
        _positive(f"{p}.tolerance", self.tolerance)


@dataclass
class HeatConfig:
    space: str = "sine"
    size: int = 8
    u0: str = "sin(pi*x)"
    f: str = "0"
    g: str = "x*(1-x)"

    def validate(self, p):
        if self.space not in ("sine", "p1"):
            _err(f"{p}.space", f"must be 'sine' or 'p1', got {self.space!r}")
        if self.size < (1 if self.space == "sine" else 2):
            _err(f"{p}.size", f"too small: {self.size}")
        _expr(f"{p}.u0", self.u0, ("x",))
        _expr(f"{p}.f", self.f, ("t", "x"))
        _expr(f"{p}.g", self.g, ("t", "x"))


@dataclass
class QlapConfig:
    size: int = 16
    q: float = 3.0
    u0: str = "sin(pi*x)"
    f: str = "0"
    g: str = "x*(1-x)"

    def validate(self, p):
        if self.size < 2:
            _err(f"{p}.size", f"need at least 2 cells, got {self.size}")
        if not self.q > 1:
            _err(f"{p}.q", f"must exceed 1, got {self.q}")
        _expr(f"{p}.u0", self.u0, ("x",))
        _expr(f"{p}.f", self.f, ("t", "x"))
        _expr(f"{p}.g", self.g, ("t", "x"))


def _expr_list(path, values, n, variables):
    if not (isinstance(values, list) and len(values) == n):
        _err(path, f"expected a list of {n} expressions")
    for i, v in enumerate(values):
        _expr(f"{path}[{i}]", v, variables)


@dataclass
class HarmonicConfig:
    size: int = 16
    epsilon: float = 0.1
    gamma: list = field(default_factory=lambda: [0.0, 0.0, 1.0])
    u0: list = field(default_factory=lambda: ["cos(pi*x)", "sin(pi*x)", "0"])
    f: list = field(default_factory=lambda: ["0", "0", "0"])

    def validate(self, p):
        if self.size < 1:
            _err(f"{p}.size", "need at least 1 cell")
        _positive(f"{p}.epsilon", self.epsilon)
        if not (isinstance(self.gamma, list) and len(self.gamma) == 3
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in self.gamma)):
            _err(f"{p}.gamma", "expected 3 numbers")
        self.gamma = [float(v) for v in self.gamma]
        _expr_list(f"{p}.u0", self.u0, 3, ("x",))
        _expr_list(f"{p}.f", self.f, 3, ("t", "x"))


@dataclass
class NSConfig:
    size: int = 4
    mu: float = 0.05
    stepping: str = "semi"
    u0: list = field(default_factory=lambda: ["sin(y)", "sin(x)"])
    f: list = field(default_factory=lambda: ["0", "0"])
    gamma: list = field(default_factory=lambda: ["0.2*u1", "0.2*u2"])
    C_growth: float = 0.2
    k: str = "0"

    def validate(self, p):
        if self.size < 1:
            _err(f"{p}.size", "mode cutoff must be at least 1")
        _positive(f"{p}.mu", self.mu)
        if self.stepping not in ("semi", "implicit"):
            _err(f"{p}.stepping", f"must be 'semi' or 'implicit', got {self.stepping!r}")
        _expr_list(f"{p}.u0", self.u0, 2, ("x", "y"))
        _expr_list(f"{p}.f", self.f, 2, ("t", "x", "y"))
        _expr_list(f"{p}.gamma", self.gamma, 2, ("t", "x", "y", "u1", "u2"))
        if self.C_growth < 0:
            _err(f"{p}.C_growth", "must be nonnegative")
        _expr(f"{p}.k", self.k, ("t", "x", "y"))


_SECTIONS = {
    "grid": GridConfig,
    "noise": NoiseConfig,
    "ensemble": EnsembleSettings,
    "output": OutputConfig,
    "verify": VerifyConfig,
    "heat": HeatConfig,
    "qlap": QlapConfig,
    "harmonic": HarmonicConfig,
    "ns2d": NSConfig,
}


@dataclass
class ExperimentConfig:
    problem: str
    grid: GridConfig = field(default_factory=GridConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    ensemble: EnsembleSettings = field(default_factory=EnsembleSettings)
    output: OutputConfig = field(default_factory=OutputConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    heat: HeatConfig | None = None
    qlap: QlapConfig | None = None
    harmonic: HarmonicConfig | None = None
    ns2d: NSConfig | None = None

    @property
    def problem_config(self):
        return getattr(self, self.problem)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"problem": self.problem}
        for name in _SECTIONS:
            section = getattr(self, name)
            if section is not None:
                out[name] = dataclasses.asdict(section)
        return out


def _coerce(path: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            _err(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            _err(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _err(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            _err(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            _err(path, f"expected an array, got {value!r}")
        return value
    return value


def _build_section(cls, data, name: str):
    if not isinstance(data, dict):
        _err(name, "expected a table")
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            _err(f"{name}.{key}", "unknown key")
    kwargs = {key: _coerce(f"{name}.{key}", value, getattr(defaults, key)) for key, value in data.items()}
    section = cls(**kwargs)
    if hasattr(section, "validate"):
        section.validate(name)
    return section


def config_from_dict(data: dict) -> ExperimentConfig:
    if "problem" not in data:
        _err("problem", f"missing; choose one of {PROBLEMS}")
    problem = data["problem"]
    if problem not in PROBLEMS:
        _err("problem", f"unknown problem {problem!r}; choose one of {PROBLEMS}")
    for key in data:
        if key != "problem" and key not in _SECTIONS:
            _err(key, "unknown section")
    sections = {name: _build_section(cls, data[name], name) for name, cls in _SECTIONS.items() if name in data}
    if problem not in sections:
        sections[problem] = _build_section(_SECTIONS[problem], {}, problem)
    return ExperimentConfig(problem=problem, **sections)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML experiment description."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        if line is None:
            # older tomli releases only embed the position in the message
            m = re.search(r"line (\d+), column (\d+)", str(exc))
            if m:
                line, col = int(m.group(1)), int(m.group(2))
        raise ConfigError(f"syntax error: {getattr(exc, 'msg', exc)}", line=line, column=col) from None
    return config_from_dict(data)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not valid UTF-8: {exc}") from None
    return parse_config(text)


def serialize_config(config: ExperimentConfig) -> str:
    return tomli_w.dumps(config.to_dict())
