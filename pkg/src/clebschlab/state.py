"""Physical state in Clebsch variables and the fields derived from it."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import expr
from .errors import CausalityError, ConfigError, DomainError, SingularStateError, UnphysicalEnthalpyError
from .forms import (
    MINKOWSKI,
    KForm,
    ScalarField,
    VectorField,
    as_points,
    ext_deriv,
    sharp,
    wedge,
    zero_field,
)

SNAPSHOT_FORMAT = "clebschlab-state/1"


@dataclass(frozen=True)
class FluidConstants:
    c: float = 1.0
    e: float = 0.0
    m: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("speed of light must be positive")
        if not self.m > 0:
            raise ValueError("rest mass must be positive")


@dataclass(frozen=True)
class EquationOfState:
    """Polytrope p = K rho^Gamma on top of the rest energy m c^2."""

    rest_energy: float = 1.0
    K: float = 0.0
    Gamma: float = 2.0
    reference_density: float = 1.0

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("polytropic constant K must be non-negative")
        if not self.Gamma > 1:
            raise ValueError("adiabatic index must exceed 1")
        if not self.rest_energy > 0:
            raise ValueError("rest energy must be positive")


def eos_eval(eos: EquationOfState, rho):
    """Return (energy per particle, enthalpy per particle, pressure)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)):
        raise DomainError("density must be positive for the equation of state")
    g1 = eos.Gamma - 1.0
    thermal = eos.K / g1 * rho**g1
    energy = eos.rest_energy + thermal
    enthalpy = eos.rest_energy + eos.Gamma * thermal
    pressure = eos.K * rho**eos.Gamma
    return energy, enthalpy, pressure


def eos_enthalpy_derivative(eos, rho):
    """dh/drho."""
    rho = np.asarray(rho, dtype=float)
    return eos.K * eos.Gamma * rho ** (eos.Gamma - 2.0)


def eos_invert(eos: EquationOfState, h):
    h = np.asarray(h, dtype=float)
    excess = h - eos.rest_energy
    tol = 1e-12 * eos.rest_energy
    if np.any(excess < -tol):
        raise UnphysicalEnthalpyError(f"enthalpy below the rest energy {eos.rest_energy}")
    if eos.K == 0:
        warnings.warn("pressureless equation of state: density is not determined by enthalpy; "
                      "returning the reference density", RuntimeWarning, stacklevel=2)
        return np.full(h.shape, eos.reference_density) if h.shape else float(eos.reference_density)
    g1 = eos.Gamma - 1.0
    base = np.maximum(excess, 0.0) * g1 / (eos.K * eos.Gamma)
    return base ** (1.0 / g1)


def lorentz_factor(V, c=1.0):
    """gamma for 3-velocities ``V`` with shape (..., 3)."""
    V = np.asarray(V, dtype=float)
    b2 = np.sum(V * V, axis=-1) / (c * c)
    if np.any(~(b2 < 1.0)):
        raise CausalityError(f"speed reached c (max |V|/c = {np.sqrt(np.max(b2)):.6g})")
    return 1.0 / np.sqrt(1.0 - b2)


def four_velocity(V, c=1.0):
    """Proper velocity components gamma (c, V)."""
    V = np.asarray(V, dtype=float)
    g = lorentz_factor(V, c)
    return np.concatenate([(g * c)[..., None], g[..., None] * V], axis=-1)


@dataclass(frozen=True)
class ClebschState:
    """Phase-space point (n, phi, lambda^k, sigma_k, A) and thermodynamics.

    ``velocity`` holds a prescribed proper velocity (kinematic mode); when it
    is ``None`` the velocity follows from the momentum norm.
    """

    rho: ScalarField
    phi: ScalarField
    lam1: ScalarField
    sig1: ScalarField
    lam2: ScalarField
    sig2: ScalarField
    A: KForm | None = None
    theta: ScalarField | None = None
    constants: FluidConstants = field(default_factory=FluidConstants)
    eos: EquationOfState = field(default_factory=EquationOfState)
    velocity: VectorField | None = None
    gamma: ScalarField | None = None

    @property
    def potential(self) -> KForm:
        return self.A if self.A is not None else KForm.zero(1)

    @property
    def thermal(self) -> ScalarField:
        return self.theta if self.theta is not None else zero_field()

    @property
    def is_kinematic(self):
        return self.velocity is not None


def canonical_momentum(state: ClebschState) -> KForm:
    """-d phi - lambda^1 d sigma_1 - lambda^2 d sigma_2."""
    P = ext_deriv(state.phi)
    P = P + wedge(state.lam1, ext_deriv(state.sig1))
    P = P + wedge(state.lam2, ext_deriv(state.sig2))
    return -P


def kinetic_momentum(state: ClebschState) -> KForm:
    """pi = P - (e/c) A."""
    P = canonical_momentum(state)
    c, e = state.constants.c, state.constants.e
    if e == 0 or state.A is None:
        return P
    return P - state.A.scale(e / c)


def enthalpy_from_norm(state: ClebschState, x):
    """h = c |P - (e/c)A|_eta at the points ``x``."""
    p, lead = as_points(x, 4)
    pi = kinetic_momentum(state).values(p)
    return _norm_enthalpy(pi, state.constants.c, p).reshape(lead)


def _norm_enthalpy(pi, c, points=None):
    n2 = MINKOWSKI.inner(pi, pi)
    bad = ~(n2 > 0) | ~(pi[:, 0] > 0)
    if np.any(bad):
        j = int(np.argmax(bad))
        where = None if points is None else points[j]
        raise SingularStateError("momentum 1-form is not future timelike", where)
    return c * np.sqrt(n2)


def proper_velocity(state: ClebschState) -> VectorField:
    if state.velocity is not None:
        return state.velocity
    pi_form = kinetic_momentum(state)
    c = state.constants.c

    def fn(p):
        pi = pi_form.values(p)
        h = _norm_enthalpy(pi, c, p)
        return (c * c / h)[:, None] * MINKOWSKI.raise_(pi)

    return VectorField(fn, dim=4, cache=True)


def lorentz_scalar(state: ClebschState) -> ScalarField:
    """gamma = U^0 / c as a scalar field."""
    if state.gamma is not None:
        return state.gamma
    U = proper_velocity(state)
    return U.component(0).scale(1.0 / state.constants.c)


def coordinate_velocity(state: ClebschState) -> VectorField:
    """u = (c / U^0) U, whose time component is exactly c."""
    U = proper_velocity(state)
    c = state.constants.c

    def fn(p):
        Uv = U._fn(p)
        out = (c / Uv[:, 0])[:, None] * Uv
        out[:, 0] = c
        return out

    jac = None
    if U.has_exact_jacobian:
        def jac(p):
            Uv, J = U._fn(p), U._jac(p)
            inv = 1.0 / Uv[:, 0]
            out = c * (J * inv[:, None, None] - Uv[:, :, None] * J[:, None, 0, :] * (inv**2)[:, None, None])
            out[:, 0, :] = 0.0
            return out

    return VectorField(fn, jac, dim=4)


def vorticity_two_forms(state: ClebschState):
    """(omega_1, omega_2, dP)."""
    w1 = wedge(ext_deriv(state.lam1), ext_deriv(state.sig1))
    w2 = wedge(ext_deriv(state.lam2), ext_deriv(state.sig2))
    return w1, w2, ext_deriv(canonical_momentum(state))


def enthalpy_field(state: ClebschState) -> ScalarField:
    """h(rho) as a scalar field with an exact chain-rule gradient when rho has one."""
    eos = state.eos
    return state.rho.apply(lambda r: eos_eval(eos, r)[1], lambda r: eos_enthalpy_derivative(eos, r))


@dataclass(frozen=True)
class DerivedFields:
    P: KForm
    U_form: KForm
    U: VectorField
    u: VectorField
    gamma: ScalarField
    h: ScalarField
    omega1: KForm
    omega2: KForm
    dP: KForm


def derived_fields(state: ClebschState) -> DerivedFields:
    P = canonical_momentum(state)
    U = proper_velocity(state)
    c = state.constants.c
    if state.is_kinematic:
        h = enthalpy_field(state)
    else:
        pi_form = kinetic_momentum(state)
        h = ScalarField(lambda p: _norm_enthalpy(pi_form.values(p), c, p), dim=4)
    U_form = KForm(1, {(mu,): U.component(mu).scale(MINKOWSKI.diagonal[mu]) for mu in range(4)})
    w1, w2, dP = vorticity_two_forms(state)
    return DerivedFields(P, U_form, U, coordinate_velocity(state), lorentz_scalar(state), h, w1, w2, dP)


def swap_pairs(state: ClebschState) -> ClebschState:
    """Exchange the two Clebsch pairs, so omega_2 diagnostics reuse omega_1 code."""
    return replace(state, lam1=state.lam2, sig1=state.sig2, lam2=state.lam1, sig2=state.sig1)


# --------------------------------------------------------------------------
# snapshots

_FIELDS = ("rho", "phi", "lam1", "sig1", "lam2", "sig2", "theta")


def _field_payload(f):
    if f is None:
        return None
    ref = getattr(f, "payload_ref", None)
    if ref is not None:
        return {"grid": ref}
    if f.const is not None:
        return {"expr": repr(f.const)}
    if f.name:
        return {"expr": f.name}
    raise ValueError("field has neither an expression nor a grid reference and cannot be serialized")


def state_to_dict(state: ClebschState, params=None):
    if state.velocity is not None and not hasattr(state.velocity, "expressions"):
        raise ValueError("prescribed velocity without expressions cannot be serialized")
    out = {
        "format": SNAPSHOT_FORMAT,
        "constants": {"c": state.constants.c, "e": state.constants.e, "m": state.constants.m},
        "eos": {
            "kind": "polytropic",
            "rest_energy": state.eos.rest_energy,
            "K": state.eos.K,
            "Gamma": state.eos.Gamma,
            "reference_density": state.eos.reference_density,
        },
        "params": dict(params or {}),
        "fields": {name: _field_payload(getattr(state, name)) for name in _FIELDS},
    }
    if state.A is not None:
        out["A"] = [_field_payload(state.A.component((mu,))) for mu in range(4)]
    if state.velocity is not None:
        out["velocity"] = list(state.velocity.expressions)
    return out


def state_from_dict(data, grids=None):
    if data.get("format") != SNAPSHOT_FORMAT:
        raise ConfigError(f"unsupported snapshot format {data.get('format')!r}")
    params = data.get("params", {})

    def build(payload):
        if payload is None:
            return None
        if "expr" in payload:
            return expr.compile_field(payload["expr"], params)
        ref = payload["grid"]
        if grids is None or ref not in grids:
            raise ConfigError(f"missing grid payload {ref!r}")
        return grids[ref]

    fields = {name: build(data["fields"].get(name)) for name in _FIELDS}
    A = None
    if "A" in data:
        A = KForm(1, {(mu,): build(p) for mu, p in enumerate(data["A"])})
    velocity = None
    if "velocity" in data:
        comps = [expr.compile_field(t, params) for t in data["velocity"]]
        velocity = VectorField.from_components(comps)
        velocity.expressions = tuple(data["velocity"])
    return ClebschState(
        A=A,
        constants=FluidConstants(**data["constants"]),
        eos=EquationOfState(**{k: v for k, v in data["eos"].items() if k != "kind"}),
        velocity=velocity,
        **fields,
    )


def dump_state(state, path, params=None):
    with open(path, "w") as fh:
        json.dump(state_to_dict(state, params), fh, indent=2, sort_keys=True)


def load_state(path, grids=None):
    with open(path) as fh:
        return state_from_dict(json.load(fh), grids)
