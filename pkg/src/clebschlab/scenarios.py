"""Built-in test problems.

Kinematic scenarios prescribe the 3-velocity analytically (with exact
Jacobians) and supply initial Clebsch data on the t = 0 slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evolution import InitialData, PrescribedFlow, kinematic_state
from .flow import DEFAULT_STEPS_PER_UNIT, QuadratureDomain
from .forms import ScalarField
from .state import EquationOfState, FluidConstants


def slice_field(fn, grad, name=None):
    return ScalarField(fn, grad, dim=3, name=name)


def const3(v):
    return ScalarField.constant(v, dim=3)


def coord3(i):
    """Slice coordinate x^i (i = 1, 2, 3)."""
    return ScalarField.coordinate(i - 1, dim=3)


def bump(center, radius):
    """C-infinity compactly supported bump exp(1 - 1/(1 - r^2/R^2)) on the slice."""
    center = np.asarray(center, dtype=float)

    def fn(p):
        s = np.sum((p - center) ** 2, axis=1) / radius**2
        out = np.zeros(p.shape[0])
        m = s < 1
        out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m]))
        return out

    def grad(p):
        d = p - center
        s = np.sum(d**2, axis=1) / radius**2
        out = np.zeros_like(p)
        m = s < 1
        val = np.exp(1.0 - 1.0 / (1.0 - s[m]))
        ds = 2.0 * d[m] / radius**2
        out[m] = (-val / (1.0 - s[m]) ** 2)[:, None] * ds
        return out

    return slice_field(fn, grad)


@dataclass
class Scenario:
    name: str
    initial: InitialData
    flow: PrescribedFlow
    domain: QuadratureDomain
    param_max: float = 1.0
    beta: float = 0.0
    mode: str = "kinematic"
    params: dict = field(default_factory=dict)
    planar: bool = False

    @property
    def c(self):
        return self.initial.constants.c

    def state(self, steps_per_unit=DEFAULT_STEPS_PER_UNIT, t_ref=None):
        """Spacetime state; characteristics are traced with ``steps_per_unit``."""
        t_ref = self.horizon() if t_ref is None else t_ref
        return kinematic_state(self.initial, self.flow, t_ref, steps_per_unit)

    def horizon(self):
        """Largest coordinate time reached by the proper-time flow (with margin)."""
        gmax = 1.0 / np.sqrt(1.0 - min(self.beta, 0.999) ** 2)
        return 1.05 * gmax * self.param_max

    def with_domain(self, domain):
        return Scenario(self.name, self.initial, self.flow, domain, self.param_max, self.beta, self.mode,
                        dict(self.params), self.planar)


def _check_beta(beta):
    if not 0 <= beta < 1:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")


# --------------------------------------------------------------------------
# flows


def zero_flow(c=1.0):
    return PrescribedFlow(lambda p: np.zeros((p.shape[0], 3)), lambda p: np.zeros((p.shape[0], 3, 4)), c)


def uniform_flow(V, c=1.0):
    V = np.asarray(V, dtype=float)
    return PrescribedFlow(lambda p: np.broadcast_to(V, (p.shape[0], 3)).copy(),
                          lambda p: np.zeros((p.shape[0], 3, 4)), c)


def shear_flow(beta, c=1.0, width=0.5, spinup=0.5, tau=0.5):
    """V^1 = beta c a(t) tanh(x^2 / L) with a(t) = 1 - spinup exp(-t / tau)."""
    def amp(t):
        return 1.0 - spinup * np.exp(-t / tau), spinup * np.exp(-t / tau) / tau

    def V(p):
        a, _ = amp(p[:, 0] / c)
        out = np.zeros((p.shape[0], 3))
        out[:, 0] = beta * c * a * np.tanh(p[:, 2] / width)
        return out

    def dV(p):
        a, da = amp(p[:, 0] / c)
        th = np.tanh(p[:, 2] / width)
        out = np.zeros((p.shape[0], 3, 4))
        out[:, 0, 0] = beta * da * th
        out[:, 0, 2] = beta * c * a * (1 - th**2) / width
        return out

    return PrescribedFlow(V, dV, c)


def vortex_flow(beta, c=1.0, r0=0.5):
    """Steady swirl about the x^3 axis, V_phi(r) = beta c (r/r0) exp((1 - r^2/r0^2)/2)."""
    k = beta * c / r0

    def V(p):
        x, y = p[:, 1], p[:, 2]
        g = k * np.exp(0.5 * (1.0 - (x * x + y * y) / r0**2))
        return np.stack([-g * y, g * x, np.zeros_like(x)], axis=1)

    def dV(p):
        x, y = p[:, 1], p[:, 2]
        g = k * np.exp(0.5 * (1.0 - (x * x + y * y) / r0**2))
        gx, gy = -g * x / r0**2, -g * y / r0**2
        out = np.zeros((p.shape[0], 3, 4))
        out[:, 0, 1] = -gx * y
        out[:, 0, 2] = -gy * y - g
        out[:, 1, 1] = gx * x + g
        out[:, 1, 2] = gy * x
        return out

    return PrescribedFlow(V, dV, c)


def abc_flow(beta, c=1.0):
    """Steady 3D flow (sin z + cos y, sin x + cos z, sin y + cos x) scaled to max speed beta c."""
    k = beta * c / (2.0 * np.sqrt(3.0))

    def V(p):
        x, y, z = p[:, 1], p[:, 2], p[:, 3]
        return k * np.stack([np.sin(z) + np.cos(y), np.sin(x) + np.cos(z), np.sin(y) + np.cos(x)], axis=1)

    def dV(p):
        x, y, z = p[:, 1], p[:, 2], p[:, 3]
        out = np.zeros((p.shape[0], 3, 4))
        out[:, 0, 2] = -k * np.sin(y)
        out[:, 0, 3] = k * np.cos(z)
        out[:, 1, 1] = k * np.cos(x)
        out[:, 1, 3] = -k * np.sin(z)
        out[:, 2, 1] = -k * np.sin(x)
        out[:, 2, 2] = k * np.cos(y)
        return out

    return PrescribedFlow(V, dV, c)


def compressive_flow(beta, c=1.0):
    """Steady V^1 = beta c sin(x^1): converges onto x^1 = pi."""
    def V(p):
        out = np.zeros((p.shape[0], 3))
        out[:, 0] = beta * c * np.sin(p[:, 1])
        return out

    def dV(p):
        out = np.zeros((p.shape[0], 3, 4))
        out[:, 0, 1] = beta * c * np.cos(p[:, 1])
        return out

    return PrescribedFlow(V, dV, c)


# --------------------------------------------------------------------------
# initial data pieces


def _wavy_density():
    def fn(p):
        return 1.0 + 0.2 * np.cos(p[:, 0]) * np.cos(p[:, 2])

    def grad(p):
        return np.stack([-0.2 * np.sin(p[:, 0]) * np.cos(p[:, 2]), np.zeros(p.shape[0]),
                         -0.2 * np.cos(p[:, 0]) * np.sin(p[:, 2])], axis=1)

    return slice_field(fn, grad, "1 + 0.2*cos(x1)*cos(x3)")


def _shear_lambda(offset=0.2):
    # (1 + 0.3 sin x1) exp(-(x2 - offset)^2); the offset keeps odd functionals away from zero
    def fn(p):
        return (1 + 0.3 * np.sin(p[:, 0])) * np.exp(-(p[:, 1] - offset) ** 2)

    def grad(p):
        y = p[:, 1] - offset
        e = np.exp(-y**2)
        a = 1 + 0.3 * np.sin(p[:, 0])
        return np.stack([0.3 * np.cos(p[:, 0]) * e, -2 * y * a * e, np.zeros(p.shape[0])], axis=1)

    return slice_field(fn, grad, f"(1 + 0.3*sin(x1))*exp(-(x2 - {offset:g})^2)")


def _gauss_lambda(center, width=0.6, amp=1.0):
    center = np.asarray(center, dtype=float)

    def fn(p):
        return amp * np.exp(-np.sum((p - center) ** 2, axis=1) / width**2)

    def grad(p):
        return (-2.0 / width**2) * (p - center) * fn(p)[:, None]

    return slice_field(fn, grad)


def _planar_lambda():
    # exp(-((x1 - 0.2)^2 + (x2 - 0.25)^2)/0.5) (1 + 0.2 cos x1), independent of x3
    def fn(p):
        return np.exp(-((p[:, 0] - 0.2) ** 2 + (p[:, 1] - 0.25) ** 2) / 0.5) * (1 + 0.2 * np.cos(p[:, 0]))

    def grad(p):
        e = np.exp(-((p[:, 0] - 0.2) ** 2 + (p[:, 1] - 0.25) ** 2) / 0.5)
        a = 1 + 0.2 * np.cos(p[:, 0])
        return np.stack([e * (-4 * (p[:, 0] - 0.2) * a - 0.2 * np.sin(p[:, 0])),
                         -4 * (p[:, 1] - 0.25) * e * a, np.zeros(p.shape[0])], axis=1)

    return slice_field(fn, grad)


def _planar_density():
    def fn(p):
        return 1.0 + 0.3 * np.exp(-(p[:, 0] ** 2 + p[:, 1] ** 2))

    def grad(p):
        e = 0.3 * np.exp(-(p[:, 0] ** 2 + p[:, 1] ** 2))
        return np.stack([-2 * p[:, 0] * e, -2 * p[:, 1] * e, np.zeros(p.shape[0])], axis=1)

    return slice_field(fn, grad)


def _sin_field(axis, amp, offset_axis=None):
    """x^offset_axis + amp sin(x^axis) (or amp sin(x^axis) alone)."""
    i = axis - 1

    def fn(p):
        base = p[:, offset_axis - 1] if offset_axis else 0.0
        return base + amp * np.sin(p[:, i])

    def grad(p):
        g = np.zeros_like(p)
        if offset_axis:
            g[:, offset_axis - 1] = 1.0
        g[:, i] += amp * np.cos(p[:, i])
        return g

    return slice_field(fn, grad)


# --------------------------------------------------------------------------
# builders

DEFAULT_EOS = EquationOfState(rest_energy=1.0, K=0.1, Gamma=5.0 / 3.0)


def rest(beta=0.0, param_max=1.0, **_):
    init = InitialData(rho=_wavy_density(), phi=const3(0.0), lam1=_shear_lambda(), sig1=coord3(1),
                       lam2=const3(0.0), sig2=coord3(3), eos=DEFAULT_EOS)
    return Scenario("rest", init, zero_flow(), QuadratureDomain((-1, -1, -1), (1, 1, 1)), param_max, 0.0)


def boost(beta=0.6, param_max=1.0, **_):
    _check_beta(beta)
    init = InitialData(rho=const3(1.0), phi=const3(0.0), lam1=_shear_lambda(), sig1=coord3(1),
                       lam2=const3(0.0), sig2=coord3(3), eos=DEFAULT_EOS)
    return Scenario("boost", init, uniform_flow([beta, 0, 0]), QuadratureDomain((-1, -1, -1), (1, 1, 1)),
                    param_max, beta)


def shear(beta=0.5, param_max=1.0, spinup=0.5, width=0.5, tau=0.5, **_):
    _check_beta(beta)
    init = InitialData(rho=_wavy_density(), phi=const3(0.0), lam1=_shear_lambda(), sig1=coord3(1),
                       lam2=const3(0.0), sig2=coord3(3), eos=DEFAULT_EOS)
    return Scenario("shear", init, shear_flow(beta, width=width, spinup=spinup, tau=tau),
                    QuadratureDomain((-1, -1, -1), (1, 1, 1)), param_max, beta,
                    params={"spinup": spinup, "width": width, "tau": tau})


def vortex(beta=0.5, param_max=1.0, **_):
    _check_beta(beta)
    init = InitialData(rho=_wavy_density(), phi=const3(0.0), lam1=_gauss_lambda((0.3, 0.1, 0.0)),
                       sig1=_sin_field(2, 0.3, offset_axis=1), lam2=const3(0.0), sig2=coord3(3), eos=DEFAULT_EOS)
    return Scenario("vortex", init, vortex_flow(beta), QuadratureDomain((-1, -1, -1), (1, 1, 1)), param_max, beta)


def abc3d(beta=0.5, param_max=1.0, **_):
    _check_beta(beta)
    init = InitialData(rho=_wavy_density(), phi=const3(0.0), lam1=_gauss_lambda((0.2, -0.1, 0.1)),
                       sig1=coord3(1), lam2=_gauss_lambda((-0.2, 0.2, 0.0), 0.8, 0.5),
                       sig2=_sin_field(2, 0.3, offset_axis=3), eos=DEFAULT_EOS)
    return Scenario("abc3d", init, abc_flow(beta), QuadratureDomain((-1, -1, -1), (1, 1, 1)), param_max, beta)


def planar(beta=1e-3, param_max=1.0, **_):
    _check_beta(beta)
    init = InitialData(rho=_planar_density(), phi=const3(0.0), lam1=_planar_lambda(), sig1=coord3(1),
                       lam2=const3(0.0), sig2=coord3(3), eos=DEFAULT_EOS)
    return Scenario("planar", init, vortex_flow(beta), QuadratureDomain((-1, -1, 0), (1, 1, 0.5)), param_max,
                    beta, planar=True)


def helicity(beta=0.4, param_max=1.0, **_):
    """Linked Clebsch bumps with compact support inside V0; pressureless, so dP is Lie-dragged."""
    _check_beta(beta)
    init = InitialData(rho=const3(1.0), phi=const3(0.0), lam1=bump((0.0, 0.0, 0.15), 0.7), sig1=coord3(1),
                       lam2=bump((0.05, 0.0, -0.15), 0.7), sig2=coord3(2),
                       eos=EquationOfState(rest_energy=1.0, K=0.0))
    return Scenario("helicity", init, vortex_flow(beta, r0=0.6), QuadratureDomain((-1, -1, -1), (1, 1, 1)),
                    param_max, beta, params={"compact_support": True})


def compressive(beta=0.3, param_max=1.0, **_):
    _check_beta(beta)
    init = InitialData(rho=_wavy_density(), phi=const3(0.0), lam1=_shear_lambda(), sig1=coord3(1),
                       lam2=const3(0.0), sig2=coord3(3), eos=DEFAULT_EOS)
    return Scenario("compressive", init, compressive_flow(beta), QuadratureDomain((1, -1, -1), (2.5, 1, 1)),
                    param_max, beta)


KINEMATIC = {
    "rest": rest,
    "boost": boost,
    "shear": shear,
    "vortex": vortex,
    "abc3d": abc3d,
    "planar": planar,
    "helicity": helicity,
    "compressive": compressive,
}


def build(name, **kwargs):
    if name in KINEMATIC:
        return KINEMATIC[name](**kwargs)
    from . import dynamic

    if name in dynamic.DYNAMIC:
        return dynamic.DYNAMIC[name](**kwargs)
    raise KeyError(f"unknown scenario {name!r}; choose from {sorted(KINEMATIC) + sorted(dynamic.DYNAMIC)}")


def names():
    from . import dynamic

    return sorted(KINEMATIC) + sorted(dynamic.DYNAMIC)
