"""Kinematic evolution by characteristics, and residuals of the governing equations.

In kinematic mode the proper velocity is prescribed.  Clebsch potentials are
Lie-dragged (value at a spacetime point is the initial value at the foot of the
backward characteristic), density follows from number conservation, and phi
accumulates its source along the characteristic.  Every evolved quantity is a
spacetime field: the time level is the first coordinate of the evaluation point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDensityError
from .flow import DEFAULT_STEPS_PER_UNIT, rk4, step_count
from .forms import (
    MINKOWSKI,
    KForm,
    PointCache,
    ScalarField,
    VectorField,
    as_points,
    embed_slice,
    ext_deriv,
    interior,
    lift_from_slice,
    zero_field,
)
from .state import (
    ClebschState,
    EquationOfState,
    FluidConstants,
    canonical_momentum,
    eos_eval,
    kinetic_momentum,
    lorentz_factor,
    proper_velocity,
)


# --------------------------------------------------------------------------
# prescribed flows


class PrescribedFlow:
    """Coordinate 3-velocity V(x) with its spacetime Jacobian.

    ``V(points (N,4)) -> (N,3)`` and ``dV(points) -> (N,3,4)`` with
    ``[..., i, mu] = d_mu V^i``.
    """

    def __init__(self, V, dV, c=1.0):
        self._V = V
        self._dV = dV
        self.c = float(c)

    def velocity3(self, p):
        return self._V(p)

    def gamma_values(self, p):
        return lorentz_factor(self._V(p), self.c)

    def _dgamma(self, p, V=None, g=None):
        V = self._V(p) if V is None else V
        g = lorentz_factor(V, self.c) if g is None else g
        return (g**3 / self.c**2)[:, None] * np.einsum("ni,nim->nm", V, self._dV(p))

    @property
    def gamma(self) -> ScalarField:
        return ScalarField(self.gamma_values, self._dgamma, dim=4)

    @property
    def U(self) -> VectorField:
        c = self.c

        def fn(p):
            V = self._V(p)
            g = lorentz_factor(V, c)
            return np.concatenate([(g * c)[:, None], g[:, None] * V], axis=1)

        def jac(p):
            V = self._V(p)
            g = lorentz_factor(V, c)
            dg = self._dgamma(p, V, g)
            J = np.empty((p.shape[0], 4, 4))
            J[:, 0, :] = c * dg
            J[:, 1:, :] = V[:, :, None] * dg[:, None, :] + g[:, None, None] * self._dV(p)
            return J

        return VectorField(fn, jac, dim=4, cache=True)

    @property
    def u(self) -> VectorField:
        c = self.c

        def fn(p):
            return np.concatenate([np.full((p.shape[0], 1), c), self._V(p)], axis=1)

        def jac(p):
            J = np.zeros((p.shape[0], 4, 4))
            J[:, 1:, :] = self._dV(p)
            return J

        return VectorField(fn, jac, dim=4)

    def divergence3(self, p):
        dV = self._dV(p)
        return dV[:, 0, 1] + dV[:, 1, 2] + dV[:, 2, 3]

    def log_gamma_rate(self, p):
        """u(log gamma) = u^mu d_mu log gamma."""
        V = self._V(p)
        g = lorentz_factor(V, self.c)
        dlg = self._dgamma(p, V, g) / g[:, None]
        return self.c * dlg[:, 0] + np.einsum("ni,ni->n", V, dlg[:, 1:])


# --------------------------------------------------------------------------
# characteristics


class Characteristics:
    """Backward characteristics of ``u`` down to the initial slice.

    Every point is traced with the same number of RK4 steps (set from the
    horizon ``t_ref``), so results are pure functions of the point and smooth
    in its time coordinate.
    """

    def __init__(self, flow: PrescribedFlow, t_ref=1.0, steps_per_unit=DEFAULT_STEPS_PER_UNIT):
        self.flow = flow
        self.n_steps = step_count(t_ref, steps_per_unit)
        self._cache = PointCache(size=32)
        u = flow.u
        self._back = VectorField(lambda p: -u._fn(p), lambda p: -u.jacobian(p), dim=4)

    def feet(self, points):
        """Foot points (N,3) and Jacobian d foot / d y (N,3,4)."""
        p, _ = as_points(points, 4)
        return self._cache.get(p, self._trace)

    def _trace(self, p):
        c = self.flow.c
        n = p.shape[0]
        lam = p[:, 0] / c
        J0 = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
        back = self._back

        def rhs(tau, s):
            return back._fn(s[0]), back.jacobian(s[0]) @ s[1]

        z, J = rk4(rhs, (p.copy(), J0), lam, self.n_steps)
        B = J[:, 1:, :].copy()
        B[:, :, 0] -= self.flow.velocity3(z) / c
        return z[:, 1:].copy(), B


def advected_field(a0: ScalarField, chars: Characteristics) -> ScalarField:
    """Lie-dragged scalar with initial slice values ``a0`` (a 3D field)."""
    if a0.const is not None:
        return ScalarField.constant(a0.const)

    def fn(p):
        foot, _ = chars.feet(p)
        return a0._fn(foot)

    def grad(p):
        foot, B = chars.feet(p)
        return np.einsum("nia,ni->na", B, a0._g(foot))

    return ScalarField(fn, grad, dim=4, step=a0.step)


def transported_density(rho0: ScalarField, chars: Characteristics) -> ScalarField:
    """rho at y from N = rho gamma conserved along u: N(y) det(d foot/d y) = N0(foot)."""
    flow = chars.flow

    def fn(p):
        foot, B = chars.feet(p)
        N0 = rho0._fn(foot) * flow.gamma_values(embed_slice(foot))
        return N0 * np.linalg.det(B[:, :, 1:]) / flow.gamma_values(p)

    return ScalarField(fn, dim=4, step=rho0.step)


class EvolvedPhi:
    """phi(y) = phi0(foot) + integral of the coordinate-time source along the characteristic."""

    def __init__(self, phi0, rho0, chars: Characteristics, eos, constants, A=None, theta=None):
        self.phi0 = phi0
        self.rho0 = rho0
        self.chars = chars
        self.eos = eos
        self.constants = constants
        self.A = A
        self.theta = theta
        self._cache = PointCache(size=8)

    def source(self, z, N):
        """Coordinate-time source (-h - (e/c) U.A + theta/c) / gamma at density N = rho gamma."""
        flow, c, e = self.chars.flow, self.constants.c, self.constants.e
        g = flow.gamma_values(z)
        h = eos_eval(self.eos, N / g)[1]
        s = -h
        if e != 0 and self.A is not None:
            Uv = flow.U._fn(z)
            s = s - (e / c) * np.einsum("nm,nm->n", Uv, self.A.values(z))
        if self.theta is not None:
            s = s + self.theta._fn(z) / c
        return s / g

    def _compute(self, p):
        flow, c = self.chars.flow, self.constants.c
        foot, _ = self.chars.feet(p)
        z0 = embed_slice(foot)
        N0 = self.rho0._fn(foot) * flow.gamma_values(z0)
        u = flow.u

        def rhs(tau, s):
            z, q, _ = s
            return u._fn(z), flow.divergence3(z), self.source(z, N0 * np.exp(-q))

        n = p.shape[0]
        _, _, acc = rk4(rhs, (z0, np.zeros(n), np.zeros(n)), p[:, 0] / c, self.chars.n_steps)
        return self.phi0._fn(foot) + acc

    def field(self) -> ScalarField:
        return ScalarField(lambda p: self._cache.get(p, self._compute), dim=4, step=self.phi0.step)


# --------------------------------------------------------------------------
# initial data and kinematic states


@dataclass(frozen=True)
class InitialData:
    """Slice fields at x0 = 0 (3D ScalarFields) plus spacetime data A, theta."""

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


def advect_clebsch(initial: InitialData, chars: Characteristics):
    """Lie-dragged (lambda^1, sigma_1, lambda^2, sigma_2) as spacetime fields."""
    return tuple(advected_field(getattr(initial, k), chars) for k in ("lam1", "sig1", "lam2", "sig2"))


def transport_density(initial: InitialData, chars: Characteristics) -> ScalarField:
    return transported_density(initial.rho, chars)


def evolve_phi(initial: InitialData, chars: Characteristics) -> ScalarField:
    return EvolvedPhi(initial.phi, initial.rho, chars, initial.eos, initial.constants,
                      initial.A, initial.theta).field()


def kinematic_state(initial: InitialData, flow: PrescribedFlow, t_ref=1.0,
                    steps_per_unit=DEFAULT_STEPS_PER_UNIT) -> ClebschState:
    """Spacetime ClebschState carried by the prescribed flow."""
    chars = Characteristics(flow, t_ref, steps_per_unit)
    lam1, sig1, lam2, sig2 = advect_clebsch(initial, chars)
    return ClebschState(
        rho=transport_density(initial, chars),
        phi=evolve_phi(initial, chars),
        lam1=lam1, sig1=sig1, lam2=lam2, sig2=sig2,
        A=initial.A, theta=initial.theta,
        constants=initial.constants, eos=initial.eos,
        velocity=flow.U, gamma=flow.gamma,
    )


def static_state(initial: InitialData, flow: PrescribedFlow | None = None) -> ClebschState:
    """Initial data extended as x0-independent fields (not dragged; for residual checks)."""
    lift = {k: lift_from_slice(getattr(initial, k)) for k in ("rho", "phi", "lam1", "sig1", "lam2", "sig2")}
    return ClebschState(A=initial.A, theta=initial.theta, constants=initial.constants, eos=initial.eos,
                        velocity=None if flow is None else flow.U,
                        gamma=None if flow is None else flow.gamma, **lift)


# --------------------------------------------------------------------------
# residuals


@dataclass(frozen=True)
class ResidualNorm:
    sup: float
    l2: float

    @classmethod
    def of(cls, r, weights=None):
        r = np.asarray(r, dtype=float)
        mag = np.sqrt(np.sum(r * r, axis=-1)) if r.ndim > 1 else np.abs(r)
        if weights is None:
            l2 = float(np.sqrt(np.mean(mag**2)))
        else:
            w = np.asarray(weights, dtype=float)
            l2 = float(np.sqrt(np.sum(w * mag**2) / np.sum(w)))
        return cls(float(np.max(mag)), l2)


def number_flux_form(rho: ScalarField, U: VectorField) -> KForm:
    """i_U n for n = rho vol^4."""
    comps = {}
    for mu in range(4):
        idx = tuple(i for i in range(4) if i != mu)
        f = rho * U.component(mu)
        comps[idx] = f if mu % 2 == 0 else -f
    return KForm(3, comps)


def motion_residual_values(state: ClebschState, points):
    """Components of i_U dP at ``points``."""
    U = proper_velocity(state)
    dP = ext_deriv(canonical_momentum(state))
    return interior(U, dP).values(points)


def residual_motion(state: ClebschState, points, weights=None) -> ResidualNorm:
    return ResidualNorm.of(motion_residual_values(state, points), weights)


def _enthalpy_and_pressure(state, rho):
    _, h, p = eos_eval(state.eos, rho)
    return h, p


def _fd_axis(fn, p, mu, step):
    e = np.zeros(4)
    e[mu] = step
    n = p.shape[0]
    v = fn(np.concatenate([p + e, p - e]))
    return (v[:n] - v[n:]) / (2 * step)


def ohm_residual_values(state: ClebschState, points, step=1e-4, euler_form=False):
    """Energy-momentum balance residual (upper index mu) at ``points``.

    Default: d_nu[(1/c^2) rho h U^mu U^nu] - (e/c) rho U_nu F^{mu nu} - d^mu p.
    With ``euler_form``: rho U^nu d_nu P^mu - (e/c) rho U_nu d^mu A^nu - d^mu p.
    """
    p, lead = as_points(points, 4)
    c, e = state.constants.c, state.constants.e
    U = proper_velocity(state)
    eta = MINKOWSKI.diagonal
    rho_f = state.rho

    def pressure(q):
        return _enthalpy_and_pressure(state, rho_f._fn(q))[1]

    grad_p = np.stack([_fd_axis(pressure, p, mu, step) for mu in range(4)], axis=-1)
    rho = rho_f._fn(p)
    Uv = U._fn(p)
    res = -grad_p * eta

    A = state.A
    dA = None
    if e != 0 and A is not None:
        dA = np.stack([_fd_axis(lambda q, m=m: A.values(q)[:, m], p, mu, step) for mu in range(4)
                       for m in range(4)], axis=-1).reshape(p.shape[0], 4, 4)  # [n, mu, nu] = d_mu A_nu

    if euler_form:
        P = canonical_momentum(state)
        dPup = np.stack([_fd_axis(lambda q, m=m: P.values(q)[:, m], p, nu, step) for m in range(4)
                         for nu in range(4)], axis=-1).reshape(p.shape[0], 4, 4)  # [n, m, nu] = d_nu P_m
        res = res + rho[:, None] * np.einsum("nv,nmv->nm", Uv, dPup) * eta
        if dA is not None:
            # (e/c) rho U_nu d^mu A^nu = (e/c) rho U^nu eta^{mu mu} d_mu A_nu
            res = res - (e / c) * rho[:, None] * eta * np.einsum("nv,nmv->nm", Uv, dA)
        return res.reshape(lead + (4,))

    def T(q, mu, nu):
        r = rho_f._fn(q)
        h = _enthalpy_and_pressure(state, r)[0]
        W = U._fn(q)
        return r * h * W[:, mu] * W[:, nu] / c**2

    for mu in range(4):
        res[:, mu] += sum(_fd_axis(lambda q, m=mu, v=nu: T(q, m, v), p, nu, step) for nu in range(4))
    if dA is not None:
        F = dA - np.transpose(dA, (0, 2, 1))  # F_{mu nu}
        Fup = F * eta[None, :, None] * eta[None, None, :]
        Ulow = Uv * eta
        res = res - (e / c) * rho[:, None] * np.einsum("nv,nmv->nm", Ulow, Fup)
    return res.reshape(lead + (4,))


def residual_ohm(state: ClebschState, points, weights=None, step=1e-4, euler_form=False) -> ResidualNorm:
    return ResidualNorm.of(ohm_residual_values(state, points, step, euler_form), weights)


def phi_source_enthalpy(state: ClebschState, points):
    """-h - (e/c) U^mu A_mu with h from the state's density."""
    p, _ = as_points(points, 4)
    h = eos_eval(state.eos, state.rho._fn(p))[1]
    if state.constants.e == 0 or state.A is None:
        return -h
    Uv = proper_velocity(state)._fn(p)
    return -h - state.constants.e / state.constants.c * np.einsum("nm,nm->n", Uv, state.A.values(p))


def phi_source_momentum(state: ClebschState, points):
    """-i_U P + theta / c."""
    p, _ = as_points(points, 4)
    Uv = proper_velocity(state)._fn(p)
    out = -np.einsum("nm,nm->n", Uv, canonical_momentum(state).values(p))
    return out + state.thermal._fn(p) / state.constants.c


def phi_equation_residual_values(state: ClebschState, points):
    """U^mu d_mu phi + h + (e/c) U^mu A_mu - theta/c."""
    p, _ = as_points(points, 4)
    Uv = proper_velocity(state)._fn(p)
    dphi = state.phi.gradient(p)
    return np.einsum("nm,nm->n", Uv, dphi) - phi_source_enthalpy(state, p) - state.thermal._fn(p) / state.constants.c


def residual_phi(state: ClebschState, points, weights=None) -> ResidualNorm:
    return ResidualNorm.of(phi_equation_residual_values(state, points), weights)


def continuity_residual_values(state: ClebschState, points, step=1e-4):
    """d_mu (rho U^mu)."""
    p, _ = as_points(points, 4)
    U = proper_velocity(state)
    return sum(_fd_axis(lambda q, m=mu: state.rho._fn(q) * U._fn(q)[:, m], p, mu, step) for mu in range(4))


def residual_continuity(state: ClebschState, points, weights=None, step=1e-4) -> ResidualNorm:
    return ResidualNorm.of(continuity_residual_values(state, points, step), weights)


def norm_identity_values(state: ClebschState, points):
    """eta(U, U) / c^2 - 1."""
    p, _ = as_points(points, 4)
    Uv = proper_velocity(state)._fn(p)
    return MINKOWSKI.inner(Uv, Uv) / state.constants.c**2 - 1.0


def density_guard(rho_values, scale):
    """Raise when a density falls under 1e-12 times the reference scale."""
    rho_values = np.asarray(rho_values)
    bad = rho_values <= 1e-12 * scale
    if np.any(bad):
        raise DegenerateDensityError("density below the division guard")
    return rho_values
