"""Job configuration files (INI-style ``key = value`` with ``[section]`` headers).

Example::

    [system]
    F = y - x^3/3 + x
    G = eps*(z - x)

    [constants]
    eps = 0.05

    [domain]
    x = 0.5, 1.5          ; or: auto
    y_seed = -0.6

    [guesses]
    x_guess = 0.9
    z_guess = 0.9

    [algorithm]
    max_iter = 8
    tol = 1e-12

    [oracle]
    z_lo = 0.98
    z_hi = 1.0
    start = 0.0, 0.0

    [output]
    directory = out
    csv = true

Unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .expr import ExprError, SystemDef

__all__ = ["ConfigError", "JobConfig", "OracleBlock", "load_config", "parse_config"]


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class OracleBlock:
    z_lo: float
    z_hi: float
    rtol: float = 1e-9
    n_bisect: int = 30
    start: tuple[float, float] = (0.0, 0.0)
    settle_time: Optional[float] = None


@dataclass(frozen=True)
class JobConfig:
    F: str
    G: str
    constants: dict = field(default_factory=dict)
    domain: Optional[tuple[float, float]] = None  # None = auto
    y_seed: float = 0.0
    scan_radius: float = 1.0
    x_guess: float = 0.0
    z_guess: float = 0.0
    max_iter: int = 8
    tol: float = 1e-12
    oracle: Optional[OracleBlock] = None
    out_dir: str = "."
    csv: bool = False

    def system(self) -> SystemDef:
        try:
            return SystemDef.from_strings(self.F, self.G, self.constants)
        except ExprError as exc:
            raise ConfigError(f"bad expression: {exc}") from None

    def with_overrides(self, **kw) -> "JobConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_SCHEMA = {
    "system": {"F": True, "G": True},
    "constants": None,  # free-form names
    "domain": {"x": False, "y_seed": True, "scan_radius": False},
    "guesses": {"x_guess": True, "z_guess": True},
    "algorithm": {"max_iter": False, "tol": False},
    "oracle": {"z_lo": True, "z_hi": True, "rtol": False, "n_bisect": False, "start": False, "settle_time": False},
    "output": {"directory": False, "csv": False},
}
_REQUIRED_SECTIONS = ("system", "domain", "guesses")


def _float(section: str, key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{section}.{key}: not a number: {text!r}") from None


def _pair(section: str, key: str, text: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{section}.{key}: expected two comma-separated numbers")
    return _float(section, key, parts[0]), _float(section, key, parts[1])


def parse_config(text: str) -> JobConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"), strict=True)
    cp.optionxform = str  # keep case: F, G and constant names are case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if cp.defaults():
        raise ConfigError("keys outside any section are not allowed")

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section: [{section}]")
        allowed = _SCHEMA[section]
        if allowed is None:
            continue
        for key in cp[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key: {section}.{key}")
    for section in _REQUIRED_SECTIONS:
        if not cp.has_section(section):
            first = next(k for k, req in _SCHEMA[section].items() if req)
            raise ConfigError(f"missing key: {section}.{first}")
    for section, keys in _SCHEMA.items():
        if keys is None or not cp.has_section(section):
            continue
        for key, required in keys.items():
            if required and key not in cp[section]:
                raise ConfigError(f"missing key: {section}.{key}")

    kw: dict = {}
    kw["F"] = cp["system"]["F"]
    kw["G"] = cp["system"]["G"]
    if cp.has_section("constants"):
        kw["constants"] = {k: _float("constants", k, v) for k, v in cp["constants"].items()}

    dom = cp["domain"]
    x_text = dom.get("x", "auto").strip()
    if x_text.lower() != "auto":
        a, b = _pair("domain", "x", x_text)
        if not a < b:
            raise ConfigError("domain.x: interval must satisfy a < b")
        kw["domain"] = (a, b)
    kw["y_seed"] = _float("domain", "y_seed", dom["y_seed"])
    if "scan_radius" in dom:
        kw["scan_radius"] = _float("domain", "scan_radius", dom["scan_radius"])

    kw["x_guess"] = _float("guesses", "x_guess", cp["guesses"]["x_guess"])
    kw["z_guess"] = _float("guesses", "z_guess", cp["guesses"]["z_guess"])

    if cp.has_section("algorithm"):
        alg = cp["algorithm"]
        if "max_iter" in alg:
            try:
                kw["max_iter"] = int(alg["max_iter"])
            except ValueError:
                raise ConfigError("algorithm.max_iter: not an integer") from None
        if "tol" in alg:
            kw["tol"] = _float("algorithm", "tol", alg["tol"])

    if cp.has_section("oracle"):
        o = cp["oracle"]
        z_lo = _float("oracle", "z_lo", o["z_lo"])
        z_hi = _float("oracle", "z_hi", o["z_hi"])
        if not z_lo < z_hi:
            raise ConfigError("oracle: bracket must satisfy z_lo < z_hi")
        ob = dict(z_lo=z_lo, z_hi=z_hi)
        if "rtol" in o:
            ob["rtol"] = _float("oracle", "rtol", o["rtol"])
        if "n_bisect" in o:
            try:
                ob["n_bisect"] = int(o["n_bisect"])
            except ValueError:
                raise ConfigError("oracle.n_bisect: not an integer") from None
        if "start" in o:
            ob["start"] = _pair("oracle", "start", o["start"])
        if "settle_time" in o:
            ob["settle_time"] = _float("oracle", "settle_time", o["settle_time"])
        kw["oracle"] = OracleBlock(**ob)

    if cp.has_section("output"):
        out = cp["output"]
        if "directory" in out:
            kw["out_dir"] = out["directory"]
        if "csv" in out:
            try:
                kw["csv"] = out.getboolean("csv")
            except ValueError:
                raise ConfigError("output.csv: expected true/false") from None

    cfg = JobConfig(**kw)
    cfg.system()  # surface expression errors as config errors
    return cfg


def load_config(path) -> JobConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)
