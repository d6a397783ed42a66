"""Experiment configuration files.

Configs are INI-style documents with the sections ``grid``, ``operator``,
``objective``, ``data``, ``solver``, ``sweep`` and ``output``; every key is
``key = value``.  Unknown sections or keys are errors, and validation
reports every violated rule at once.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .solver import SolverConfig

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "loads", "dumps",
           "expand_sweep", "config_help", "shipped_configs", "shipped_config_path",
           "SECTIONS"]

SECTIONS = ("grid", "operator", "objective", "data", "solver", "sweep", "output")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists one message per violation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


def _opt(section, default, help, choices=None):
    return field(default=default, metadata={"section": section, "help": help,
                                            "choices": choices})


@dataclass(frozen=True)
class ExperimentConfig:
    # grid
    n: int = _opt("grid", 128, "interior nodes per axis")
    length: float = _opt("grid", 1.0, "domain length L of (0, L)")
    dim: int = _opt("grid", 1, "spatial dimension (2 requires operator.kind = spectral)",
                    (1, 2))
    ny: int = _opt("grid", 0, "interior nodes along y in 2-D (0: same as n)")
    length_y: float = _opt("grid", 0.0, "domain length along y in 2-D (0: same as length)")
    # operator
    operator: str = _opt("operator", "spectral", "V-inner product realization",
                         ("spectral", "integral"))
    s: float = _opt("operator", 0.25, "fractional order in (0,1)")
    max_n: int = _opt("operator", 512, "size cap for the dense integral assembly")
    # objective
    objective: str = _opt("objective", "tracking", "smooth term F",
                          ("tracking", "heat_source"))
    z_path: str = _opt("objective", "", "CSV with the measurement z (empty: synthesize)")
    truth_blocks: str = _opt("objective", "",
                             "piecewise-constant truth 'a:b:value; ...' "
                             "(2-D: 'x0:x1:y0:y1:value; ...')")
    truth_path: str = _opt("objective", "", "CSV with the truth used to synthesize z")
    y0_path: str = _opt("objective", "", "heat_source: CSV with the base initial state")
    y0_amplitude: float = _opt("objective", 0.0,
                               "heat_source: base initial state amp * sin(pi x / L)")
    diffusivity: float = _opt("objective", 1.0, "heat_source: constant diffusivity a > 0")
    diffusivity_path: str = _opt("objective", "", "heat_source: CSV with nodal diffusivity")
    reaction: str = _opt("objective", "zero", "heat_source: reaction term f",
                         ("zero", "cubic"))
    T: float = _opt("objective", 0.005, "heat_source: final time")
    nt: int = _opt("objective", 50, "heat_source: time steps")
    # data
    noise_std: float = _opt("data", 0.0, "std of Gaussian noise added to z")
    seed: int = _opt("data", 0, "seed of the noise generator")
    # solver
    alpha: float = _opt("solver", 1e-3, "weight of alpha/2 ||u||_V^2")
    beta_reg: float = _opt("solver", 1e-2, "weight of the L^p term")
    p: float = _opt("solver", 0.5, "exponent p in (0,1)")
    eps0: float = _opt("solver", 1e-1, "initial smoothing parameter")
    eps_decay: float = _opt("solver", 0.7, "eps_{k+1} = max(eps_min, eps_decay * eps_k)")
    eps_min: float = _opt("solver", 1e-12, "smoothing floor")
    L_tilde: float = _opt("solver", 1e-2, "first nonzero rung of the backtracking ladder")
    bt_growth: float = _opt("solver", 2.0, "ladder growth factor (> 1)")
    bt_max_trials: int = _opt("solver", 60, "backtracking trial cap")
    max_outer: int = _opt("solver", 2000, "outer iteration cap")
    tol_step: float = _opt("solver", 1e-8, "stop when ||u_{k+1} - u_k||_V <= tol_step")
    tol_cg: float = _opt("solver", 1e-10, "relative CG tolerance")
    u0: str = _opt("solver", "tikhonov", "starting point", ("tikhonov", "zero"))
    # sweep
    sweep_parameter: str = _opt("sweep", "", "config key to sweep (empty: no sweep)")
    sweep_values: tuple = _opt("sweep", (), "comma-separated values for the sweep")
    # output
    directory: str = _opt("output", "fraclp_out", "output directory")
    dump_matrix: bool = _opt("output", False, "write the dense V-matrix (n <= 64)")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            alpha=self.alpha, beta_reg=self.beta_reg, p=self.p, eps0=self.eps0,
            eps_decay=self.eps_decay, eps_min=self.eps_min, L_tilde=self.L_tilde,
            bt_growth=self.bt_growth, max_outer=self.max_outer, tol_step=self.tol_step,
            tol_cg=self.tol_cg, bt_max_trials=self.bt_max_trials)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
# keys as written in the file; the operator/objective kinds are spelled 'kind'
_KEY_ALIASES = {("operator", "kind"): "operator", ("objective", "kind"): "objective"}
_FILE_KEYS = {v: k[1] for k, v in _KEY_ALIASES.items()}
_SWEEP_KEYS = {"parameter": "sweep_parameter", "values": "sweep_values"}
_FILE_KEYS.update({v: k for k, v in _SWEEP_KEYS.items()})


def _file_key(name):
    return _FILE_KEYS.get(name, name)


def _field_name(section, key):
    if (section, key) in _KEY_ALIASES:
        return _KEY_ALIASES[(section, key)]
    if section == "sweep":
        return _SWEEP_KEYS.get(key)
    f = _FIELDS.get(key)
    if f is not None and f.metadata["section"] == section:
        return key
    return None


def _convert(f, raw: str):
    kind = f.type
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "tuple":
        return tuple(float(v) for v in raw.replace("[", "").replace("]", "").split(",")
                     if v.strip())
    return raw


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _validate(cfg: ExperimentConfig) -> list[str]:
    out = []
    if cfg.n < 2:
        out.append("grid.n: n must be an integer >= 2")
    if not cfg.length > 0:
        out.append("grid.length: length must be positive")
    if cfg.ny < 0 or cfg.length_y < 0:
        out.append("grid.ny/length_y: must be non-negative")
    if not 0 < cfg.s < 1:
        out.append("operator.s: s must lie in (0,1)")
    if cfg.operator == "integral":
        if cfg.dim != 1:
            out.append("operator.kind: integral operator requires grid.dim = 1")
        if cfg.n > cfg.max_n:
            out.append(f"grid.n: integral operator is capped at n <= {cfg.max_n}")
    if cfg.objective == "heat_source":
        if cfg.dim != 1:
            out.append("objective.kind: heat_source requires grid.dim = 1")
        if not cfg.T > 0:
            out.append("objective.T: T must be positive")
        if cfg.nt < 1:
            out.append("objective.nt: nt must be an integer >= 1")
        if not cfg.diffusivity > 0:
            out.append("objective.diffusivity: diffusivity must be positive")
    if not cfg.z_path and not cfg.truth_blocks and not cfg.truth_path:
        out.append("objective: one of z_path, truth_path, truth_blocks is required")
    if cfg.noise_std < 0:
        out.append("data.noise_std: noise_std must be non-negative")
    if cfg.seed < 0:
        out.append("data.seed: seed must be non-negative")
    probe = SolverConfig.__new__(SolverConfig)
    for name in ("alpha", "beta_reg", "p", "eps0", "eps_decay", "eps_min", "L_tilde",
                 "bt_growth", "max_outer", "tol_step", "tol_cg", "bt_max_trials"):
        object.__setattr__(probe, name, getattr(cfg, name))
    object.__setattr__(probe, "bt_rtol", SolverConfig.bt_rtol)
    out.extend(f"solver.{msg.split()[0]}: {msg}" for msg in probe.violations())
    if cfg.sweep_parameter:
        f = _FIELDS.get(cfg.sweep_parameter)
        if f is None or f.type not in ("int", "float") or f.metadata["section"] == "sweep":
            out.append(f"sweep.parameter: {cfg.sweep_parameter!r} is not a numeric config key")
        if not cfg.sweep_values:
            out.append("sweep.values: at least one value is required")
        else:
            for v in cfg.sweep_values:
                try:
                    _validate_member(cfg, cfg.sweep_parameter, v)
                except ConfigError as exc:
                    out.extend(f"sweep.values ({v!r}): {m}" for m in exc.problems)
    elif cfg.sweep_values:
        out.append("sweep.values: given without sweep.parameter")
    return out


def _validate_member(cfg, name, value):
    f = _FIELDS.get(name)
    if f is not None and f.type == "int":
        if value != int(value):
            raise ConfigError([f"{name} must be an integer"])
        value = int(value)
    member = cfg.replace(**{name: value, "sweep_parameter": "", "sweep_values": ()})
    problems = _validate(member)
    if problems:
        raise ConfigError(problems)
    return member


def loads(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"{source}: malformed file: {exc}"]) from exc
    values, problems = {}, []
    for section in parser.sections():
        if section not in SECTIONS:
            problems.append(f"[{section}]: unknown section")
            continue
        for key, raw in parser.items(section):
            name = _field_name(section, key)
            if name is None:
                problems.append(f"{section}.{key}: unknown key")
                continue
            try:
                values[name] = _convert(_FIELDS[name], raw)
            except ValueError:
                problems.append(f"{section}.{key}: cannot parse {raw!r} as {_FIELDS[name].type}")
    for name, value in list(values.items()):
        choices = _FIELDS[name].metadata["choices"]
        if choices and value not in choices:
            sec = _FIELDS[name].metadata["section"]
            problems.append(f"{sec}.{_file_key(name)}: {value!r} is not one of {list(choices)}")
            del values[name]
    # validate whatever did parse so the diagnostic lists every problem at once
    cfg = ExperimentConfig(**values)
    problems.extend(_validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def shipped_configs() -> list[str]:
    """Names of the example configs installed with the package."""
    root = resources.files("fraclp") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def shipped_config_path(name: str) -> Path:
    name = name[:-4] if name.endswith(".ini") else name
    if name not in shipped_configs():
        raise ConfigError([f"{name}: no shipped config of that name"])
    return Path(str(resources.files("fraclp") / "configs" / f"{name}.ini"))


def parse_config(path) -> ExperimentConfig:
    """Read and validate a config file.  A bare name such as ``denoise_1d``
    that is not an existing file refers to a shipped example."""
    path = Path(path)
    if not path.is_file() and path.parent == Path(".") and path.stem in shipped_configs():
        path = shipped_config_path(path.stem)
    if not path.is_file():
        raise ConfigError([f"{path}: no such file"])
    return loads(path.read_text(), source=str(path))


def dumps(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    for section in SECTIONS:
        parser.add_section(section)
    for f in fields(ExperimentConfig):
        parser.set(f.metadata["section"], _file_key(f.name), _format(getattr(cfg, f.name)))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def expand_sweep(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """One ``(label, config)`` per sweep value; a single run without a sweep."""
    if not cfg.sweep_parameter:
        return [("run", cfg)]
    name = cfg.sweep_parameter
    return [(f"{name}={_format(float(v))}", _validate_member(cfg, name, v))
            for v in cfg.sweep_values]


def config_help() -> str:
    """Documentation of every key with its default, grouped by section."""
    lines = ["configuration keys (section.key = default  # meaning):"]
    for section in SECTIONS:
        lines.append(f"  [{section}]")
        for f in fields(ExperimentConfig):
            if f.metadata["section"] != section:
                continue
            extra = ""
            if f.metadata["choices"]:
                extra = f" one of {', '.join(map(str, f.metadata['choices']))};"
            lines.append(f"    {_file_key(f.name)} = {_format(f.default)}  #{extra} "
                         f"{f.metadata['help']}")
    return "\n".join(lines)
