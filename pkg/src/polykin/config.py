"""TOML run configuration: schema, defaults and validation with line numbers."""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

MODES = ("simulate", "verify-weakform", "povzner", "constants", "full-suite")


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and, when known, its line."""


@dataclass
class RunSection:
    mode: str = "full-suite"
    seed: int = 20240917
    threads: int = 1
    out: str = "polykin-out"


@dataclass
class KernelSection:
    omega: float = 0.5
    zeta: float = 1.0
    zeta_f: float = 1.0
    c_zeta: float = 1.0
    C_zeta: float = 1.0
    norm_b: float = 1.0
    alpha: float = 0.0
    mass: float = 1.0
    lb_factor: float = 0.1
    angular: str = "isotropic"
    angular_mu: list = field(default_factory=list)
    angular_values: list = field(default_factory=list)


@dataclass
class InitialSection:
    kind: str = "bimodal"
    rho: float = 1.0
    drift: float = 1.5
    T: list = field(default_factory=lambda: [0.5])
    theta: float = 1.0
    alpha_I: float = 0.0


@dataclass
class SimulationSection:
    n_particles: int = 50_000
    t_final: float = 20.0
    n_steps: int = 0
    record_every: int = 20
    dt: float = 0.0
    dt_factor: float = 0.1
    moments: list = field(default_factory=list)


@dataclass
class PovznerSection:
    k_start: float = 2.5
    k_stop: float = 20.0
    k_step: float = 0.5
    n_pairs_frozen: int = 10_000
    n_pairs_poly: int = 4_000
    frozen_C_k: dict = field(default_factory=dict)
    poly_C_k: dict = field(default_factory=dict)


@dataclass
class ExternalsSection:
    source: str = "fit"
    A_bar: float = 0.0
    B_bar: float = 0.0
    D_bar: dict = field(default_factory=dict)
    fit_samples: int = 100_000
    fit_fractions: list = field(default_factory=lambda: [0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85])


@dataclass
class VerificationSection:
    n_samples: int = 1_000_000
    n_sigma: float = 3.0
    ks: list = field(default_factory=lambda: [3.0, 4.0, 6.0])
    zetas: list = field(default_factory=lambda: [1.0, 2.0])
    omegas: list = field(default_factory=lambda: [0.25, 0.5, 0.75])


@dataclass
class ChecksSection:
    slack: float = 0.05
    k_prop_frozen: float = 4.0
    k_gen_frozen: float = 6.0
    k_small: float = 4.0
    k_large: float = 0.0
    t_burn: float = 0.0


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    initial: InitialSection = field(default_factory=InitialSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    povzner: PovznerSection = field(default_factory=PovznerSection)
    externals: ExternalsSection = field(default_factory=ExternalsSection)
    verification: VerificationSection = field(default_factory=VerificationSection)
    checks: ChecksSection = field(default_factory=ChecksSection)

    @property
    def mode(self) -> str:
        return self.run.mode

    def to_dict(self) -> dict:
        return {f.name: {g.name: getattr(getattr(self, f.name), g.name) for g in fields(getattr(self, f.name))}
                for f in fields(self)}


# (section, key) -> (lower, upper, lower_open, upper_open)
RANGES = {
    ("run", "threads"): (1, 1024, False, False),
    ("run", "seed"): (0, 2**63 - 1, False, False),
    ("kernel", "omega"): (0.0, 1.0, False, False),
    ("kernel", "zeta"): (0.0, 2.0, True, False),
    ("kernel", "zeta_f"): (0.0, 2.0, False, False),
    ("kernel", "c_zeta"): (0.0, math.inf, True, True),
    ("kernel", "C_zeta"): (0.0, math.inf, True, True),
    ("kernel", "norm_b"): (0.0, math.inf, True, True),
    ("kernel", "alpha"): (-1.0, math.inf, True, True),
    ("kernel", "mass"): (0.0, math.inf, True, True),
    ("kernel", "lb_factor"): (0.0, 1.0, True, False),
    ("initial", "rho"): (0.0, math.inf, True, True),
    ("initial", "drift"): (0.0, math.inf, False, True),
    ("initial", "theta"): (0.0, math.inf, True, True),
    ("initial", "alpha_I"): (-1.0, math.inf, True, True),
    ("simulation", "n_particles"): (2, 10**8, False, False),
    ("simulation", "t_final"): (0.0, math.inf, False, True),
    ("simulation", "n_steps"): (0, 10**9, False, False),
    ("simulation", "record_every"): (1, 10**9, False, False),
    ("simulation", "dt"): (0.0, math.inf, False, True),
    ("simulation", "dt_factor"): (0.0, 1.0, True, False),
    ("povzner", "k_start"): (2.0, math.inf, True, True),
    ("povzner", "k_stop"): (2.0, math.inf, True, True),
    ("povzner", "k_step"): (0.0, math.inf, True, True),
    ("povzner", "n_pairs_frozen"): (1, 10**8, False, False),
    ("povzner", "n_pairs_poly"): (1, 10**8, False, False),
    ("externals", "A_bar"): (0.0, math.inf, False, True),
    ("externals", "B_bar"): (0.0, math.inf, False, True),
    ("externals", "fit_samples"): (32, 10**9, False, False),
    ("verification", "n_samples"): (32, 10**9, False, False),
    ("verification", "n_sigma"): (0.0, math.inf, True, True),
    ("checks", "slack"): (0.0, math.inf, False, True),
    ("checks", "k_prop_frozen"): (2.0, math.inf, True, True),
    ("checks", "k_gen_frozen"): (2.0, math.inf, True, True),
    ("checks", "k_small"): (2.0, math.inf, True, True),
    ("checks", "k_large"): (0.0, math.inf, False, True),
    ("checks", "t_burn"): (0.0, math.inf, False, True),
}

CHOICES = {
    ("run", "mode"): MODES,
    ("kernel", "angular"): ("isotropic", "tabulated"),
    ("initial", "kind"): ("gaussian", "bimodal"),
    ("externals", "source"): ("fit", "given"),
}


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    """1-based line of ``key`` inside ``[section]`` (or of the section header)."""
    current = None
    head = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-]+)\s*\]")
    for no, line in enumerate(text.splitlines(), 1):
        m = head.match(line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section and re.match(rf"^\s*{re.escape(key)}\s*=", line):
            return no
    return None


def _where(text, section, key=None) -> str:
    line = _line_of(text, section, key) if text is not None else None
    name = f"{section}.{key}" if key else f"[{section}]"
    return f"{name} (line {line})" if line else name


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            value = [value]
        return list(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a table")
        return dict(value)
    raise ConfigError(f"{where}: unsupported value")  # pragma: no cover


def _check_range(v, rng, where):
    lo, hi, lo_open, hi_open = rng
    bad = v < lo or v > hi or (lo_open and v == lo) or (hi_open and v == hi)
    if bad or (isinstance(v, float) and math.isnan(v)):
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        raise ConfigError(f"{where}: value {v!r} outside the allowed range {lb}{lo}, {hi}{rb}")


def _numbers(seq, where, positive=False):
    out = []
    for x in seq:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{where}: expected numbers, got {x!r}")
        if positive and not x > 0:
            raise ConfigError(f"{where}: entries must be positive, got {x!r}")
        out.append(float(x))
    return out


def _float_table(table, where):
    out = {}
    for key, val in table.items():
        try:
            k = float(key)
        except ValueError:
            raise ConfigError(f"{where}: keys must be moment orders, got {key!r}") from None
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not val >= 0:
            raise ConfigError(f"{where}: value for order {key} must be a non-negative number")
        out[k] = float(val)
    return out


def from_mapping(data: dict, text: str | None = None) -> RunConfig:
    """Validate a parsed TOML mapping; ``text`` (the source) is used for line numbers."""
    cfg = RunConfig()
    known = {f.name for f in fields(cfg)}
    for section, body in data.items():
        if section not in known:
            raise ConfigError(f"unknown section {_where(text, section)}")
        if not isinstance(body, dict):
            raise ConfigError(f"{section}: expected a table")
        sec = getattr(cfg, section)
        keys = {f.name: f for f in fields(sec)}
        for key, value in body.items():
            where = _where(text, section, key)
            if key not in keys:
                raise ConfigError(f"unknown key {where}; allowed: {', '.join(sorted(keys))}")
            default = getattr(sec, key)
            value = _coerce(value, default, where)
            if (section, key) in RANGES:
                _check_range(value, RANGES[(section, key)], where)
            if (section, key) in CHOICES and value not in CHOICES[(section, key)]:
                raise ConfigError(f"{where}: {value!r} is not one of {', '.join(CHOICES[(section, key)])}")
            setattr(sec, key, value)
    _cross_checks(cfg, text)
    return cfg


def _cross_checks(cfg: RunConfig, text):
    k = cfg.kernel
    if k.c_zeta > k.C_zeta:
        raise ConfigError(f"{_where(text, 'kernel', 'c_zeta')}: c_zeta must not exceed C_zeta")
    if k.angular == "tabulated":
        mu = _numbers(k.angular_mu, _where(text, "kernel", "angular_mu"))
        vals = _numbers(k.angular_values, _where(text, "kernel", "angular_values"))
        if len(mu) != len(vals) or len(mu) < 2:
            raise ConfigError(f"{_where(text, 'kernel', 'angular_values')}: needs as many entries as angular_mu (>= 2)")
    T = _numbers(cfg.initial.T, _where(text, "initial", "T"), positive=True)
    if len(T) not in (1, 3):
        raise ConfigError(f"{_where(text, 'initial', 'T')}: give one temperature or three")
    cfg.initial.T = T
    p = cfg.povzner
    if p.k_stop < p.k_start:
        raise ConfigError(f"{_where(text, 'povzner', 'k_stop')}: must not be below k_start")
    p.frozen_C_k = _float_table(p.frozen_C_k, _where(text, "povzner", "frozen_C_k"))
    p.poly_C_k = _float_table(p.poly_C_k, _where(text, "povzner", "poly_C_k"))
    e = cfg.externals
    e.D_bar = _float_table(e.D_bar, _where(text, "externals", "D_bar"))
    e.fit_fractions = _numbers(e.fit_fractions, _where(text, "externals", "fit_fractions"))
    if len(e.fit_fractions) < 2 or any(not 0 < s < 1 for s in e.fit_fractions):
        raise ConfigError(f"{_where(text, 'externals', 'fit_fractions')}: need at least two fractions in (0, 1)")
    if e.source == "given" and not e.A_bar > 0:
        raise ConfigError(f"{_where(text, 'externals', 'A_bar')}: must be positive when source = \"given\"")
    v = cfg.verification
    v.ks = _numbers(v.ks, _where(text, "verification", "ks"))
    if any(x <= 2 for x in v.ks):
        raise ConfigError(f"{_where(text, 'verification', 'ks')}: orders must exceed 2")
    v.zetas = _numbers(v.zetas, _where(text, "verification", "zetas"))
    if any(not 0 < z <= 2 for z in v.zetas):
        raise ConfigError(f"{_where(text, 'verification', 'zetas')}: entries must lie in (0, 2]")
    v.omegas = _numbers(v.omegas, _where(text, "verification", "omegas"))
    if any(not 0 < w <= 1 for w in v.omegas):
        raise ConfigError(f"{_where(text, 'verification', 'omegas')}: entries must lie in (0, 1]")
    moments = []
    for item in cfg.simulation.moments:
        where = _where(text, "simulation", "moments")
        if not (isinstance(item, list) and len(item) == 2 and item[0] in ("v", "I", "total")):
            raise ConfigError(f"{where}: entries must look like [\"v\", 4]")
        moments.append([item[0], _numbers([item[1]], where)[0]])
    cfg.simulation.moments = moments
    if cfg.checks.k_large and cfg.checks.k_large <= 2:
        raise ConfigError(f"{_where(text, 'checks', 'k_large')}: must exceed 2 (or 0 for k* + 1)")


def loads(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from None
    return from_mapping(data, text)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text())


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f'"{k:g}" = {_toml_value(x)}' if isinstance(k, float) else f"{k} = {_toml_value(x)}"
                               for k, x in v.items()) + "}"
    raise TypeError(type(v))


DOCS = {
    "run": "mode, master seed, worker threads and output directory",
    "kernel": "mixture weight omega, hard-potential rates, sandwich constants, angular model",
    "initial": "initial density: one Gaussian x Gamma or two counter-drifting ones",
    "simulation": "particles, horizon in mean collision times (or a fixed step count), recording stride",
    "povzner": "k grid for the averaging constants; *_C_k tables override estimated values",
    "externals": "polyatomic drift constants: fitted from Monte Carlo or given",
    "verification": "Monte Carlo sample size and catalog for the weak-form inequalities",
    "checks": "envelope slack and moment orders; k_large = 0 means k* + 1",
}


def dumps(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        sec = getattr(cfg, f.name)
        lines.append(f"# {DOCS[f.name]}")
        lines.append(f"[{f.name}]")
        for g in fields(sec):
            lines.append(f"{g.name} = {_toml_value(getattr(sec, g.name))}")
        lines.append("")
    return "\n".join(lines)


def defaults_text() -> str:
    return dumps(RunConfig())

