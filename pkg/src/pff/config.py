"""Run configuration: INI-style sections, unit-aware values and presets.

Every value may carry a unit suffix (``"121.154 GPa"``, ``"2700 N/m"``);
values are converted to mm, N and MPa.  Bare numbers are taken to be in the
internal units already.
"""

from __future__ import annotations

import configparser
import copy
import math
import re
from dataclasses import dataclass, field, fields

from .errors import ConfigurationError

# unit -> (dimension, factor to internal units)
UNITS = {
    "mm": ("length", 1.0),
    "m": ("length", 1e3),
    "um": ("length", 1e-3),
    "MPa": ("stress", 1.0),
    "GPa": ("stress", 1e3),
    "kPa": ("stress", 1e-3),
    "Pa": ("stress", 1e-6),
    "N/mm^2": ("stress", 1.0),
    "N/mm": ("toughness", 1.0),
    "N/m": ("toughness", 1e-3),
    "kN/m": ("toughness", 1.0),
    "J/m^2": ("toughness", 1e-3),
    "N": ("energy", 1.0),
    "N*mm": ("energy", 1.0),
    "mJ": ("energy", 1.0),
    "J": ("energy", 1e3),
}

_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")


@dataclass
class GeometryConfig:
    preset: str = "sent"
    nx: int = 32
    ny: int = 32
    length: float = 1.0
    height: float = 1.0
    width_fixed: float = 0.75
    width_loaded: float = 2.0
    notch_length: float = 0.5
    hole_radius: float = 0.2
    hole_x: float = 0.6
    hole_y: float = 0.0
    seed_radius: float = 0.0
    seed_levels: int = 0
    clamp_loaded_edge: bool = True


@dataclass
class MaterialConfig:
    lame_lambda: float = 121154.0
    shear_mu: float = 80769.0
    Gc: float = 2.7
    length_l: float = 0.02
    degradation: str = "quadratic"
    cubic_s: float = 1.0
    rational_a1: float = 1.0
    rational_a2: float = -0.5
    rational_a3: float = 0.0
    rational_p: float = 2.0
    split: str = "nosplit"
    c_w: float = 2.0
    residual_stiffness: float = 0.0


@dataclass
class SolverConfig:
    type: str = "monolithic"
    stepsize: float = 1e-4
    dtau_max: float = 0.025
    switch_energy: float = 0.0
    optiter: int = 5
    tol: float = 1e-3
    max_iter: int = 30
    max_steps: int = 600
    max_lambda: float = math.inf
    final_dissipation: float = math.inf
    stop_load_ratio: float = 0.01
    stagger_tol: float = 1e-4
    stagger_max: int = 500


@dataclass
class AmrConfig:
    enabled: bool = True
    phi_threshold: float = 0.2
    max_depth: int = 2
    resolve_after_refine: bool = True


@dataclass
class OutputConfig:
    vtk_every: int = 10
    write_vtk: bool = True
    history: str = "history.csv"


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    amr: AmrConfig = field(default_factory=AmrConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def set(self, dotted: str, value: str) -> None:
        """Apply a ``section.key=value`` override."""
        if "." not in dotted:
            raise ConfigurationError(f"override {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        _assign(self, section.strip(), key.strip(), value, where=f"--set {dotted}")
        self.validate()

    def validate(self) -> None:
        g, m, s, a, o = self.geometry, self.material, self.solver, self.amr, self.output
        checks = [
            ("geometry.preset", g.preset in PRESETS, f"one of {sorted(PRESETS)}"),
            ("geometry.nx", g.nx >= 1, ">= 1"),
            ("geometry.ny", g.ny >= 1, ">= 1"),
            ("material.shear_mu", m.shear_mu > 0, "> 0"),
            ("material.lame_lambda", m.lame_lambda >= 0, ">= 0"),
            ("material.Gc", m.Gc > 0, "> 0"),
            ("material.length_l", m.length_l > 0, "> 0"),
            ("material.degradation", m.degradation in ("quadratic", "cubic", "rational"), "quadratic|cubic|rational"),
            ("material.cubic_s", 0 < m.cubic_s <= 1, "in (0, 1]"),
            ("material.split", m.split in ("nosplit", "spectral", "rankine"), "nosplit|spectral|rankine"),
            ("material.c_w", m.c_w > 0, "> 0"),
            ("solver.type", s.type in SOLVER_TYPES, "|".join(SOLVER_TYPES)),
            ("solver.stepsize", s.stepsize > 0, "> 0"),
            ("solver.dtau_max", s.dtau_max > 0, "> 0"),
            ("solver.switch_energy", s.switch_energy >= 0, ">= 0 (0 selects dtau_max/10)"),
            ("solver.optiter", s.optiter >= 1, ">= 1"),
            ("solver.tol", s.tol > 0, "> 0"),
            ("solver.max_iter", s.max_iter >= 1, ">= 1"),
            ("solver.max_steps", s.max_steps >= 1, ">= 1"),
            ("solver.stop_load_ratio", 0 <= s.stop_load_ratio < 1, "in [0, 1)"),
            ("amr.phi_threshold", 0 < a.phi_threshold < 1, "in (0, 1)"),
            ("amr.max_depth", a.max_depth >= 0, ">= 0"),
            ("output.vtk_every", o.vtk_every >= 1, ">= 1"),
        ]
        for key, ok, rule in checks:
            if not ok:
                raise ConfigurationError(f"{key}: must be {rule}")


SOLVER_TYPES = ("monolithic", "monolithic-no-relax", "staggered")

# section -> key -> dimension for unit-bearing keys
DIMENSIONS = {
    "geometry": dict.fromkeys(
        ["length", "height", "width_fixed", "width_loaded", "notch_length", "hole_radius", "hole_x", "hole_y", "seed_radius"],
        "length",
    ),
    "material": {"lame_lambda": "stress", "shear_mu": "stress", "Gc": "toughness", "length_l": "length"},
    "solver": {"stepsize": "length", "max_lambda": "length", "dtau_max": "energy", "switch_energy": "energy",
               "final_dissipation": "energy"},
}

PRESETS: dict[str, dict[str, dict[str, object]]] = {
    "tbt": {
        "geometry": {"nx": 40, "ny": 8, "length": 5.0, "width_fixed": 0.75, "width_loaded": 2.0,
                     "clamp_loaded_edge": False},
        "material": {"lame_lambda": 0.0, "shear_mu": 50.0, "Gc": 1.0, "length_l": 0.25, "split": "nosplit"},
        "solver": {"stepsize": 1e-2, "dtau_max": 0.0125},
        "amr": {"phi_threshold": 0.2, "max_depth": 1},
    },
    "eh": {
        "geometry": {"nx": 8, "ny": 8, "hole_radius": 0.2, "hole_x": 0.6, "hole_y": 0.0},
        "material": {"lame_lambda": 121154.0, "shear_mu": 80769.0, "Gc": 2.7, "length_l": 0.02, "split": "rankine"},
        "solver": {"stepsize": 1e-4, "dtau_max": 0.05},
        "amr": {"phi_threshold": 0.2, "max_depth": 2},
    },
    "sent": {
        "geometry": {"nx": 32, "ny": 32, "notch_length": 0.5, "seed_radius": 0.05, "seed_levels": 1},
        "material": {"lame_lambda": 121154.0, "shear_mu": 80769.0, "Gc": 2.7, "length_l": 0.02, "split": "nosplit"},
        "solver": {"stepsize": 1e-4, "dtau_max": 0.025},
        "amr": {"phi_threshold": 0.2, "max_depth": 2},
    },
    "sens": {
        "geometry": {"nx": 32, "ny": 32, "notch_length": 0.5, "seed_radius": 0.05, "seed_levels": 1},
        "material": {"lame_lambda": 121154.0, "shear_mu": 80769.0, "Gc": 2.7, "length_l": 0.02, "split": "rankine"},
        "solver": {"stepsize": 5e-4, "dtau_max": 0.025},
        "amr": {"phi_threshold": 0.1, "max_depth": 2},
    },
    # custom uniaxial-tension rectangle, no paper counterpart
    "rectangle": {
        "geometry": {"nx": 16, "ny": 16, "length": 1.0, "height": 1.0, "clamp_loaded_edge": False},
        "material": {"lame_lambda": 121154.0, "shear_mu": 80769.0, "Gc": 2.7, "length_l": 0.02, "split": "nosplit"},
        "solver": {"stepsize": 1e-4, "dtau_max": 0.025},
        "amr": {"enabled": False},
    },
}


def _unquote(text: str) -> str:
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1].strip()
    return text


def _convert(section: str, key: str, raw, target_type, where: str):
    if not isinstance(raw, str):
        return target_type(raw)
    text = _unquote(raw.strip())
    if target_type is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"{where}: {section}.{key} expects a boolean, got {raw!r}")
    if target_type is str:
        return text.lower() if key in ("preset", "type", "degradation", "split") else text
    if target_type is int:
        try:
            return int(text)
        except ValueError:
            raise ConfigurationError(f"{where}: {section}.{key} expects an integer, got {raw!r}") from None
    if text.lower() in ("inf", "infinity"):
        return math.inf
    match = _NUMBER.match(text)
    if not match:
        raise ConfigurationError(f"{where}: {section}.{key} expects a number, got {raw!r}")
    value, unit = float(match.group(1)), match.group(2)
    if unit:
        dim = DIMENSIONS.get(section, {}).get(key)
        if unit not in UNITS:
            raise ConfigurationError(f"{where}: unknown unit {unit!r} for {section}.{key}")
        udim, factor = UNITS[unit]
        if dim != udim:
            raise ConfigurationError(f"{where}: {section}.{key} expects a {dim or 'plain'} value, got {unit!r}")
        value *= factor
    return value


def _assign(cfg: RunConfig, section: str, key: str, raw, where: str) -> None:
    sub = getattr(cfg, section, None)
    if sub is None or section not in ("geometry", "material", "solver", "amr", "output"):
        raise ConfigurationError(f"{where}: unknown section [{section}]")
    types = {f.name: f.type for f in fields(sub)}
    if key not in types:
        raise ConfigurationError(f"{where}: unknown key {section}.{key}")
    default = getattr(type(sub)(), key)
    setattr(sub, key, _convert(section, key, raw, type(default), where))


def preset_config(name: str) -> RunConfig:
    name = name.lower()
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = RunConfig()
    cfg.geometry.preset = name
    for section, values in copy.deepcopy(PRESETS[name]).items():
        for key, value in values.items():
            setattr(getattr(cfg, section), key, value)
    return cfg


def load_config(text: str, preset: str | None = None) -> RunConfig:
    """Parse INI text into a validated :class:`RunConfig`.

    ``[geometry] preset`` (or the ``preset`` argument) selects the defaults;
    every other key overrides them.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        where = f"line {line}" if line else "config"
        raise ConfigurationError(f"parse error at {where}: {exc.message if hasattr(exc, 'message') else exc}") from exc
    name = preset
    if parser.has_option("geometry", "preset"):
        name = _unquote(parser.get("geometry", "preset").strip())
    cfg = preset_config(name) if name else RunConfig()
    for section in parser.sections():
        for key, raw in parser.items(section):
            if section == "geometry" and key == "preset":
                continue
            _assign(cfg, section, key, raw, where=f"[{section}]")
    cfg.validate()
    return cfg
