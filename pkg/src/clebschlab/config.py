"""Run configuration: TOML files with [scenario], [resolution] and [run] tables.

A scenario is either a built-in name (with optional keyword parameters) or an
inline definition whose fields are expression strings::

    [scenario]
    name = "shear"
    beta = 0.5

    [scenario.inline]            # alternative to ``name``
    rho = "1 + 0.1*cos(x1)"
    lam1 = "exp(-x2^2)"
    sig1 = "x1"
    sig2 = "x3"
    velocity = ["0.3*tanh(x2)", "0", "0"]
    lo = [-1, -1, -1]
    hi = [1, 1, 1]
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .diagnostics import EnstrophyFunctional
from .errors import ConfigError
from .evolution import InitialData, PrescribedFlow
from .expr import ExpressionError, compile_field
from .flow import QuadratureDomain
from .state import EquationOfState, FluidConstants

DIAGNOSTICS = ("enstrophy", "helicity", "residuals")
INLINE_FIELDS = ("rho", "phi", "lam1", "sig1", "lam2", "sig2")


@dataclass(frozen=True)
class Resolution:
    panels: int = 4
    gauss_order: int = 4
    steps_per_unit: int = 64
    fd_step: float = 1e-4


@dataclass(frozen=True)
class RunSettings:
    param_max: float = 1.0
    every: float = 0.25
    f: str = "x^2"
    output: str = "out"
    seed: int = 0
    threads: int | None = None
    diagnostics: tuple = DIAGNOSTICS
    delta: float = 0.02
    residual_stride: int = 16


@dataclass(frozen=True)
class RunConfig:
    scenario: dict
    resolution: Resolution = field(default_factory=Resolution)
    run: RunSettings = field(default_factory=RunSettings)
    source: str | None = None

    def echo(self):
        out = {"scenario": self.scenario, "resolution": asdict(self.resolution), "run": asdict(self.run)}
        out["run"]["diagnostics"] = list(self.run.diagnostics)
        return out

    @property
    def functional(self):
        return EnstrophyFunctional.parse(self.run.f)


def _table(doc, key):
    val = doc.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(f"{key}: expected a table")
    return val


def _coerce(path, value, kind, positive=False):
    if kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ConfigError(f"{path}: expected {kind.__name__}, got {value!r}")
    value = kind(value)
    if positive and not value > 0:
        raise ConfigError(f"{path}: must be positive, got {value!r}")
    return value


def _fill(cls, table, section, spec):
    unknown = set(table) - set(spec)
    if unknown:
        raise ConfigError(f"{section}.{sorted(unknown)[0]}: unknown key")
    kw = {}
    for key, (kind, positive) in spec.items():
        if key in table:
            kw[key] = _coerce(f"{section}.{key}", table[key], kind, positive)
    return cls(**kw)


def parse_config(text, source=None) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source or '<config>'}: {exc}") from None

    unknown = set(doc) - {"scenario", "resolution", "run"}
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")

    scen = dict(_table(doc, "scenario"))
    if ("name" in scen) == ("inline" in scen):
        raise ConfigError("scenario: give exactly one of 'name' or an [scenario.inline] table")
    if "name" in scen:
        from .scenarios import names

        if scen["name"] not in names():
            raise ConfigError(f"scenario.name: unknown scenario {scen['name']!r}; choose from {names()}")
    else:
        _check_inline(scen["inline"])

    res = _fill(Resolution, _table(doc, "resolution"), "resolution",
                {"panels": (int, True), "gauss_order": (int, True), "steps_per_unit": (int, True),
                 "fd_step": (float, True)})

    run_tab = dict(_table(doc, "run"))
    diags = run_tab.pop("diagnostics", list(DIAGNOSTICS))
    if not isinstance(diags, list) or any(d not in DIAGNOSTICS for d in diags):
        raise ConfigError(f"run.diagnostics: expected a list drawn from {list(DIAGNOSTICS)}, got {diags!r}")
    run = _fill(RunSettings, run_tab, "run",
                {"param_max": (float, True), "every": (float, True), "f": (str, False), "output": (str, False),
                 "seed": (int, False), "threads": (int, True), "delta": (float, True),
                 "residual_stride": (int, True)})
    run = RunSettings(**{**asdict(run), "diagnostics": tuple(diags)})

    ratio = run.param_max / run.every
    if abs(ratio - round(ratio)) > 1e-9:
        raise ConfigError(f"run.every: cadence {run.every} does not divide param_max {run.param_max}")
    try:
        EnstrophyFunctional.parse(run.f)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"run.f: {exc}") from None
    return RunConfig(scen, res, run, source)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


# --------------------------------------------------------------------------
# inline scenarios


def _check_inline(tab):
    if not isinstance(tab, dict):
        raise ConfigError("scenario.inline: expected a table")
    allowed = set(INLINE_FIELDS) | {"velocity", "lo", "hi", "c", "e", "m", "K", "Gamma", "params"}
    unknown = set(tab) - allowed
    if unknown:
        raise ConfigError(f"scenario.inline.{sorted(unknown)[0]}: unknown key")
    for key in ("lo", "hi"):
        if key not in tab:
            raise ConfigError(f"scenario.inline.{key}: required")
        v = tab[key]
        if not (isinstance(v, list) and len(v) == 3 and all(isinstance(a, (int, float)) for a in v)):
            raise ConfigError(f"scenario.inline.{key}: expected three numbers")
    if any(h <= l for l, h in zip(tab["lo"], tab["hi"])):
        raise ConfigError("scenario.inline.hi: box must have positive extent")
    vel = tab.get("velocity", ["0", "0", "0"])
    if not (isinstance(vel, list) and len(vel) == 3):
        raise ConfigError("scenario.inline.velocity: expected three expressions")
    params = tab.get("params", {})
    for key in INLINE_FIELDS:
        _compile(tab.get(key, "1" if key == "rho" else "0"), f"scenario.inline.{key}", params, 3)
    for i, text in enumerate(vel):
        _compile(text, f"scenario.inline.velocity[{i}]", params, 4)


def _compile(text, path, params, dim):
    if isinstance(text, (int, float)):
        text = repr(float(text))
    if not isinstance(text, str):
        raise ConfigError(f"{path}: expected an expression string")
    try:
        return compile_field(text, params, dim=dim)
    except ExpressionError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def inline_scenario(tab, name="inline"):
    from .scenarios import Scenario

    params = tab.get("params", {})
    fields = {k: _compile(tab.get(k, "1" if k == "rho" else "0"), f"scenario.inline.{k}", params, 3)
              for k in INLINE_FIELDS}
    comps = [_compile(t, f"scenario.inline.velocity[{i}]", params, 4) for i, t in enumerate(tab.get("velocity", ["0"] * 3))]
    c = float(tab.get("c", 1.0))

    def V(p):
        return np.stack([f._fn(p) for f in comps], axis=-1)

    def dV(p):
        return np.stack([f.gradient(p) for f in comps], axis=-2)

    consts = FluidConstants(c=c, e=float(tab.get("e", 0.0)), m=float(tab.get("m", 1.0)))
    eos = EquationOfState(rest_energy=consts.m * c * c, K=float(tab.get("K", 0.1)), Gamma=float(tab.get("Gamma", 5 / 3)))
    init = InitialData(**fields, constants=consts, eos=eos)
    return Scenario(name, init, PrescribedFlow(V, dV, c), QuadratureDomain(tuple(tab["lo"]), tuple(tab["hi"])),
                    1.0, 0.0)


def build_scenario(cfg: RunConfig):
    """Scenario object with the configured quadrature resolution."""
    from .scenarios import build

    scen = dict(cfg.scenario)
    if "inline" in scen:
        sc = inline_scenario(scen["inline"])
    else:
        name = scen.pop("name")
        try:
            sc = build(name, param_max=cfg.run.param_max, **scen)
        except TypeError as exc:
            raise ConfigError(f"scenario: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"scenario.beta: {exc}") from None
    dom = sc.domain
    panels = _scale_panels(dom.panels, cfg.resolution.panels)
    return sc, QuadratureDomain(dom.lo, dom.hi, cfg.resolution.gauss_order, panels)


def _scale_panels(base, panels):
    # anisotropic defaults (dynamic line domains) keep their shape
    if np.isscalar(base):
        return panels
    return tuple(panels if b > 1 else 1 for b in base)
