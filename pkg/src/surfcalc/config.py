"""Scenario files: a flat ``key = value`` format with dotted sections.

A scenario names a surface, a motion, analytic fields, closure laws, grid
and quadrature resolutions, the time window, and per-check tolerance
overrides.  Field values are expressions over ``x1, x2, x3, t`` parsed by the
built-in expression interpreter, so every derivative downstream is exact.

Example::

    name = dilating_sphere_mass
    suite = transport
    surface.kind = sphere
    surface.R = 1.0
    motion.kind = dilation
    fields.rho0 = 1.0
    resolution = 48, 96
    dt = 0.02
    T = 1.0
    seed = 0
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .chart_geometry import builtin_surface
from .evolving_surface import motion_builtin
from .expressions import ParseError, parse_expr
from .fields import ScalarField, VectorField
from .fluid_models import pressure_law_builtin
from .pde_solvers import flux_law_builtin

__all__ = ["ConfigError", "Scenario", "parse_config", "load_scenario"]

_SUITES = (
    "verify-geometry",
    "verify-identities",
    "transport",
    "residuals",
    "simulate-heat",
    "simulate-diffusion",
    "simulate-barotropic",
    "check-variations",
    "check-representations",
    "conservation-report",
)

_AMB_T = ("x1", "x2", "x3", "t")


class ConfigError(ValueError):
    """A malformed or inconsistent scenario file (message carries the line)."""


def parse_config(text, source="<config>"):
    """Parse ``key = value`` lines into {key: (value, line_number)}."""
    entries = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', "
                              f"got {rawline.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} "
                              f"(first set on line {entries[key][1]})")
        entries[key] = (value, lineno)
    return entries


@dataclass
class Scenario:
    """A parsed scenario: raw entries plus typed accessors and builders."""

    name: str
    entries: dict
    source: str = "<config>"
    consumed: set = field(default_factory=set)

    # -- raw access ------------------------------------------------------------

    def has(self, key):
        return key in self.entries

    def get(self, key, default=None, required=False):
        if key in self.entries:
            self.consumed.add(key)
            return self.entries[key][0]
        if required:
            raise ConfigError(f"{self.source}: missing required key {key!r}")
        return default

    def _line(self, key):
        return self.entries[key][1] if key in self.entries else "?"

    def get_float(self, key, default=None, required=False):
        raw = self.get(key, None, required)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{self.source}:{self._line(key)}: "
                              f"{key} must be a number, got {raw!r}") from None

    def get_int(self, key, default=None, required=False):
        raw = self.get(key, None, required)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{self.source}:{self._line(key)}: "
                              f"{key} must be an integer, got {raw!r}") from None

    def get_floats(self, key, default=None):
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return tuple(float(p) for p in raw.split(","))
        except ValueError:
            raise ConfigError(f"{self.source}:{self._line(key)}: "
                              f"{key} must be comma-separated numbers") from None

    def get_ints(self, key, default=None):
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return tuple(int(p) for p in raw.split(","))
        except ValueError:
            raise ConfigError(f"{self.source}:{self._line(key)}: "
                              f"{key} must be comma-separated integers") from None

    def get_scalar_field(self, key, default=None):
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return ScalarField(parse_expr(raw, _AMB_T))
        except ParseError as exc:
            raise ConfigError(f"{self.source}:{self._line(key)}: "
                              f"bad expression for {key}: {exc}") from None

    def get_vector_field(self, key, default=None):
        raw = self.get(key)
        if raw is None:
            return default
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) != 3:
            raise ConfigError(f"{self.source}:{self._line(key)}: "
                              f"{key} needs 3 comma-separated components")
        try:
            return VectorField([parse_expr(p, _AMB_T) for p in parts])
        except ParseError as exc:
            raise ConfigError(f"{self.source}:{self._line(key)}: "
                              f"bad expression for {key}: {exc}") from None

    # -- validated builders ------------------------------------------------------

    def suites(self):
        raw = self.get("suite", required=True)
        suites = [s.strip() for s in raw.split(",") if s.strip()]
        for s in suites:
            if s not in _SUITES:
                raise ConfigError(f"{self.source}:{self._line('suite')}: "
                                  f"unknown suite {s!r}; known: {list(_SUITES)}")
        return suites

    def build_surface(self):
        kind = self.get("surface.kind", required=True)
        params = {}
        for pname in ("R", "r", "extent"):
            val = self.get_float(f"surface.{pname}")
            if val is not None:
                params[pname] = val
        try:
            return builtin_surface(kind, **params)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{self.source}:{self._line('surface.kind')}: "
                              f"{exc}") from None

    def build_motion(self):
        kind = self.get("motion.kind", default="static")
        params = {}
        c = self.get_floats("motion.c")
        if c is not None:
            params["c"] = c
        rate = self.get_float("motion.rate")
        if rate is not None:
            params["rate"] = rate
        try:
            motion = motion_builtin(kind, **params)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{self.source}:{self._line('motion.kind')}: "
                              f"{exc}") from None
        u = self.get_vector_field("motion.u")
        if u is not None:
            motion.tangential_part = u
        return motion

    def build_pressure_law(self):
        kind = self.get("pressure.kind")
        if kind is None:
            return None
        params = {}
        for pname in ("a", "gamma"):
            val = self.get_float(f"pressure.{pname}")
            if val is not None:
                params[pname] = val
        try:
            return pressure_law_builtin(kind, **params)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{self.source}:{self._line('pressure.kind')}: "
                              f"{exc}") from None

    def build_flux_law(self):
        kind = self.get("flux.kind")
        if kind is None:
            return None
        params = {}
        kappa = self.get_float("flux.kappa")
        if kappa is not None:
            params["kappa"] = kappa
        try:
            return flux_law_builtin(kind, **params)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{self.source}:{self._line('flux.kind')}: "
                              f"{exc}") from None

    def resolution(self, key="resolution", default=(48, 96)):
        res = self.get_ints(key, default)
        if len(res) != 2 or min(res) < 16:
            raise ConfigError(f"{self.source}:{self._line(key)}: "
                              f"{key} needs two integers >= 16")
        return res

    def quadrature(self):
        order = self.get_int("quadrature.order")
        periodic = self.get_int("quadrature.periodic_order")
        if order is None and periodic is None:
            return None
        return (order or 32, periodic or 2 * (order or 32))

    def time_window(self):
        dt = self.get_float("dt", 1e-3)
        T = self.get_float("T", 0.5)
        if dt <= 0:
            raise ConfigError(f"{self.source}:{self._line('dt')}: dt must be > 0")
        if T <= 0:
            raise ConfigError(f"{self.source}:{self._line('T')}: T must be > 0")
        return dt, T

    def eps_ladder(self):
        return self.get_floats("eps", (1e-2, 3e-3, 1e-3, 3e-4))

    def seed(self):
        return self.get_int("seed", 0)

    def tolerance(self, check, default):
        return self.get_float(f"tol.{check}", default)


def load_scenario(path):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    entries = parse_config(text, source=str(path))
    name = entries.get("name", (None, 0))[0]
    if not name:
        raise ConfigError(f"{path}: missing required key 'name'")
    scenario = Scenario(name=name, entries=entries, source=str(path))
    scenario.consumed.add("name")
    return scenario
