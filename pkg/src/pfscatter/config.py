"""Run configuration: INI-style sections parsed into typed dataclasses.

The on-disk format is plain ``configparser`` text::

    [model]
    dimension = 1
    potential = harmonic
    potential_params = strength=0.25
    charge = 0.1

    [discretization]
    shells = 0.7, 1.3
    n_max = 2

Every key has a default (see :func:`reference`), so an empty file is a valid
configuration. ``dumps(loads(text))`` is a fixed point after one round.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Malformed or out-of-range configuration value."""

    def __init__(self, message, section=None, key=None, line=None):
        self.section, self.key, self.line = section, key, line
        where = ""
        if section:
            where = f"[{section}]" + (f" {key}" if key else "")
            if line is not None:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _complexes(text: str) -> tuple[complex, ...]:
    return tuple(complex(t.strip().replace(" ", "")) for t in text.split(",") if t.strip())


def _params(text: str) -> dict[str, float]:
    out = {}
    for item in text.split(","):
        if not item.strip():
            continue
        k, _, v = item.partition("=")
        if not _:
            raise ValueError(f"expected name=value, got {item.strip()!r}")
        out[k.strip()] = float(v)
    return out


def _pairs(text: str) -> tuple[tuple[int, int], ...] | str:
    text = text.strip()
    if text in ("all", "diagonal", "shell"):
        return text
    out = []
    for item in text.split(","):
        if item.strip():
            a, _, b = item.partition("-")
            out.append((int(a), int(b)))
    return tuple(out)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, complex):
        return repr(value).strip("()")
    if isinstance(value, dict):
        return ", ".join(f"{k}={v!r}" for k, v in value.items())
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{a}-{b}" for a, b in value)
        return ", ".join(_fmt(v) for v in value)
    return str(value)


@dataclass
class ModelConfig:
    dimension: int = 1
    particles: int = 1
    spin: float = 0.0
    potential: str = "harmonic"
    potential_params: dict = field(default_factory=lambda: {"strength": 0.25})
    potential_file: str = ""
    mu: float = 2.0
    charge: float = 0.1
    cutoff: float = 2.0
    cutoff_shape: str = "sharp"
    momentum_floor: float = 1e-3


@dataclass
class DiscretizationConfig:
    matter_points: int = 32
    matter_extent: float = 8.0
    shells: tuple = (0.7, 1.3)
    directions: int = 2
    shell_widths: tuple = ()
    n_max: int = 2


@dataclass
class SolverConfig:
    eig_tol: float = 1e-12
    solve_tol: float = 1e-12
    dense_threshold: int = 3000
    gap_floor: float = 1e-8
    eta_schedule: tuple = (0.4, 0.2, 0.1, 0.05)
    epsilon_schedule: tuple = (0.4, 0.2, 0.1)
    tail_tol: float = 1e-13
    stability_tol: float = 1e-2
    memory_budget_mb: float = 2000.0


@dataclass
class ExperimentConfig:
    mode_pairs: object = "all"
    f: tuple = ()
    h: tuple = ()
    ray_scan: bool = False
    ray_mode: int = 0
    ray_radii: tuple = ()
    intertwine_times: tuple = (0.0, 0.5, 1.0, 2.0)
    cross_check: bool = False


@dataclass
class VerifyConfig:
    random_states: int = 10
    random_pairs: int = 20
    ccr_tol: float = 1e-12
    comm_tol: float = 1e-10
    halfline_tol: float = 1e-8
    abelian_factor: float = 5.0
    pull_factor: float = 10.0
    quadrature_tol: float = 1e-6
    creation_draws: int = 50
    form_epsilons: tuple = (0.5, 0.25)
    min_eig_tol: float = 1e-10


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    seed: int = 0

    def replace(self, **sections) -> "RunConfig":
        """Copy with per-section overrides, e.g. ``replace(model={"charge": 0})``."""
        kwargs = {}
        for f in dataclasses.fields(self):
            cur = getattr(self, f.name)
            upd = sections.get(f.name)
            if upd is None:
                kwargs[f.name] = dataclasses.replace(cur) if dataclasses.is_dataclass(cur) else cur
            elif dataclasses.is_dataclass(cur):
                kwargs[f.name] = dataclasses.replace(cur, **upd)
            else:
                kwargs[f.name] = upd
        cfg = RunConfig(**kwargs)
        validate(cfg)
        return cfg


_SECTIONS = {
    "model": ModelConfig,
    "discretization": DiscretizationConfig,
    "solver": SolverConfig,
    "experiment": ExperimentConfig,
    "verify": VerifyConfig,
}

_PARSERS = {
    "potential_params": _params,
    "shells": _floats,
    "shell_widths": _floats,
    "eta_schedule": _floats,
    "epsilon_schedule": _floats,
    "ray_radii": _floats,
    "intertwine_times": _floats,
    "form_epsilons": _floats,
    "f": _complexes,
    "h": _complexes,
    "mode_pairs": _pairs,
}


def _convert(key, default, raw):
    if key in _PARSERS:
        return _PARSERS[key](raw)
    if isinstance(default, bool):
        return _bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
            continue
        if current == section and key and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return n
    return None


def loads(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparsable config: {exc}", line=getattr(exc, "lineno", None)) from exc

    sections = {}
    for name in parser.sections():
        if name not in _SECTIONS and name != "run":
            raise ConfigError("unknown section", name, line=_line_of(text, name, None))
    for name, cls in _SECTIONS.items():
        obj = cls()
        if parser.has_section(name):
            known = {f.name for f in dataclasses.fields(cls)}
            for key, raw in parser.items(name):
                if key not in known:
                    raise ConfigError("unknown key", name, key, _line_of(text, name, key))
                try:
                    setattr(obj, key, _convert(key, getattr(obj, key), raw))
                except (ValueError, TypeError) as exc:
                    raise ConfigError(str(exc), name, key, _line_of(text, name, key)) from exc
        sections[name] = obj
    seed = 0
    if parser.has_section("run"):
        for key, raw in parser.items("run"):
            if key != "seed":
                raise ConfigError("unknown key", "run", key, _line_of(text, "run", key))
            try:
                seed = int(raw)
            except ValueError as exc:
                raise ConfigError(str(exc), "run", "seed", _line_of(text, "run", "seed")) from exc
    cfg = RunConfig(seed=seed, **sections)
    try:
        validate(cfg)
    except ConfigError as exc:
        if exc.line is None and exc.section:
            exc.line = _line_of(text, exc.section, exc.key)
            raise ConfigError(str(exc).split(": ", 1)[-1], exc.section, exc.key, exc.line) from None
        raise
    return cfg


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def dumps(cfg: RunConfig) -> str:
    lines = ["[run]", f"seed = {cfg.seed}", ""]
    for name in _SECTIONS:
        lines.append(f"[{name}]")
        for f in dataclasses.fields(getattr(cfg, name)):
            lines.append(f"{f.name} = {_fmt(getattr(getattr(cfg, name), f.name))}")
        lines.append("")
    return "\n".join(lines)


def reference() -> str:
    """Generated key reference with defaults, one line per key."""
    out = []
    for name, cls in _SECTIONS.items():
        out.append(f"[{name}]")
        for f in dataclasses.fields(cls):
            out.append(f"  {f.name} = {_fmt(getattr(cls(), f.name))}")
    out.append("[run]\n  seed = 0")
    return "\n".join(out)


def _require(cond, message, section, key):
    if not cond:
        raise ConfigError(message, section, key)


def validate(cfg: RunConfig) -> None:
    m, d, s, v = cfg.model, cfg.discretization, cfg.solver, cfg.verify
    _require(m.dimension in (1, 2, 3), "dimension must be 1, 2 or 3", "model", "dimension")
    _require(m.particles in (1, 2), "only 1 or 2 particles are supported", "model", "particles")
    _require(m.spin in (0.0, 0.5), "spin must be 0 or 0.5", "model", "spin")
    _require(not (m.spin and m.dimension != 3), "spin coupling needs dimension 3", "model", "spin")
    _require(m.cutoff_shape in ("sharp", "gaussian"), "cutoff_shape: sharp|gaussian", "model", "cutoff_shape")
    for key in ("mu", "charge", "cutoff", "momentum_floor"):
        _require(math.isfinite(getattr(m, key)), "must be finite", "model", key)
    _require(m.cutoff > 0, "cutoff must be positive", "model", "cutoff")
    _require(m.momentum_floor > 0, "momentum_floor must be positive", "model", "momentum_floor")
    _require(d.matter_points >= 3, "need at least 3 points per axis", "discretization", "matter_points")
    _require(d.matter_extent > 0, "must be positive", "discretization", "matter_extent")
    _require(len(d.shells) > 0, "at least one shell radius", "discretization", "shells")
    _require(all(math.isfinite(r) for r in d.shells), "must be finite", "discretization", "shells")
    _require(d.directions >= 1, "must be >= 1", "discretization", "directions")
    _require(not (m.dimension == 1 and d.directions > 2), "d=1 allows 1 or 2 directions", "discretization", "directions")
    _require(not d.shell_widths or len(d.shell_widths) == len(d.shells),
             "one width per shell", "discretization", "shell_widths")
    _require(d.n_max >= 1, "n_max must be >= 1", "discretization", "n_max")
    _require(all(e > 0 for e in s.eta_schedule), "eta values must be positive", "solver", "eta_schedule")
    _require(all(e > 0 for e in s.epsilon_schedule), "epsilon values must be positive", "solver", "epsilon_schedule")
    _require(0 < s.tail_tol < 1, "tail_tol in (0,1)", "solver", "tail_tol")
    for key in ("ccr_tol", "comm_tol", "halfline_tol", "quadrature_tol"):
        _require(getattr(v, key) >= 0, "tolerances must be non-negative", "verify", key)
