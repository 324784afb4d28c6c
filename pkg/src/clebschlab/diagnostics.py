"""Enstrophy, helicity and residual diagnostics over co-moving regions."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDensityError
from .evolution import (
    number_flux_form,
    residual_continuity,
    residual_ohm,
    norm_identity_values,
)
from .flow import (
    DEFAULT_STEPS_PER_UNIT,
    QuadratureDomain,
    gauss_box,
    integrate_flow,
    pairwise_sum,
    pullback_threeform,
    step_count,
)
from .forms import KForm, ScalarField, as_points, dx, embed_slice, ext_deriv, interior, top_component, wedge
from .state import canonical_momentum, lorentz_scalar, proper_velocity, coordinate_velocity

SERIES_COLUMNS = ("param", "Q", "dQdt_meas", "dQdt_pred", "frakQ", "helicity_t", "helicity_rel",
                  "norm_resid_max", "continuity_resid_l2", "ohm_resid_l2")
SERIES_SCHEMA = "series/1"


# --------------------------------------------------------------------------
# enstrophy functionals


@dataclass(frozen=True)
class EnstrophyFunctional:
    kind: str
    f: object
    fprime: object
    alpha: float | None = None

    @classmethod
    def identity(cls):
        return cls("identity", lambda x: np.asarray(x, dtype=float), lambda x: np.ones_like(np.asarray(x, float)))

    @classmethod
    def power(cls, alpha):
        alpha = float(alpha)
        return cls("power", lambda x: np.asarray(x, float) ** alpha,
                   lambda x: alpha * np.asarray(x, float) ** (alpha - 1.0), alpha)

    @classmethod
    def custom(cls, f, fprime, sample=None, tol=1e-6):
        """User functional; ``fprime`` is checked against central differences of ``f``."""
        xs = np.linspace(-1.5, 1.5, 13) if sample is None else np.asarray(sample, dtype=float)
        h = 1e-5
        fd = (f(xs + h) - f(xs - h)) / (2 * h)
        err = np.max(np.abs(fd - fprime(xs)) / np.maximum(1.0, np.abs(fd)))
        if not err <= tol:
            raise ValueError(f"derivative of the enstrophy functional is inconsistent (error {err:.2e})")
        return cls("custom", f, fprime)

    @classmethod
    def parse(cls, spec):
        """'id', 'x^2' / 'square', 'power:<alpha>'."""
        s = str(spec).strip().lower()
        if s in ("id", "identity"):
            return cls.identity()
        if s in ("x^2", "x**2", "square"):
            return cls.power(2)
        if s.startswith("power:"):
            return cls.power(float(s.split(":", 1)[1]))
        raise ValueError(f"unknown enstrophy functional {spec!r}")

    @property
    def label(self):
        if self.kind == "power":
            return f"x^{self.alpha:g}"
        return "id" if self.kind == "identity" else "custom"


# --------------------------------------------------------------------------
# field bundle


class FormBundle:
    """Forms shared by the diagnostics, built once per state."""

    def __init__(self, state):
        self.state = state
        self.c = state.constants.c
        self.U = proper_velocity(state)
        self.u = coordinate_velocity(state)
        self.gamma = lorentz_scalar(state)
        self.log_gamma = self.gamma.log()
        self.omega1 = wedge(ext_deriv(state.lam1), ext_deriv(state.sig1))
        self.vort3 = wedge(self.omega1, ext_deriv(state.sig2))  # omega_1 ^ d sigma_2
        self.vort4 = wedge(dx(0), self.vort3)
        self.flux = number_flux_form(state.rho, self.U)  # i_U n
        self.slice_density = KForm(3, {(1, 2, 3): state.rho})  # i_{d0} n
        self.dlog_vort = wedge(ext_deriv(self.log_gamma), self.vort3)
        P = canonical_momentum(state)
        self.helicity_form = wedge(P, ext_deriv(P))

    def u_log_gamma(self, p):
        return np.einsum("nm,nm->n", self.u._fn(p), self.log_gamma.gradient(p))


def _bundle(state_or_bundle):
    return state_or_bundle if isinstance(state_or_bundle, FormBundle) else FormBundle(state_or_bundle)


def density_scale(state, domain: QuadratureDomain):
    """Domain mass over domain volume on the initial slice."""
    rho0 = state.rho._fn(embed_slice(domain.nodes))
    return domain.integrate(rho0) / domain.volume


def vartheta_semirel(state, x, floor=0.0):
    """(dx^0 ^ omega_1 ^ d sigma_2)* / rho at spacetime points ``x``."""
    b = _bundle(state)
    p, lead = as_points(x, 4)
    rho = b.state.rho._fn(p)
    bad = ~(np.abs(rho) > floor)
    if np.any(bad):
        raise DegenerateDensityError("density below the division guard", p[int(np.argmax(bad))])
    return (top_component(b.vort4)._fn(p) / rho).reshape(lead)


# --------------------------------------------------------------------------
# semi-relativistic enstrophy on t-planes


def t_flow(b: FormBundle, domain, t, steps_per_unit=DEFAULT_STEPS_PER_UNIT, n_steps=None):
    """Coordinate-time flow map: u moves x^0 at rate c, so t is its flow parameter."""
    return integrate_flow(b.u, domain.nodes, t, parameter="t", steps_per_unit=steps_per_unit, n_steps=n_steps)


def enstrophy_semirel(state, f: EnstrophyFunctional, domain: QuadratureDomain, t,
                      steps_per_unit=DEFAULT_STEPS_PER_UNIT, n_steps=None, fmap=None):
    """Q(t): integral over Omega(t) of f(vartheta) i_{d0} n, computed on Omega_0."""
    b = _bundle(state)
    fmap = fmap or t_flow(b, domain, t, steps_per_unit, n_steps)
    theta = vartheta_semirel(b, fmap.y, 1e-12 * density_scale(b.state, domain))
    dens = pullback_threeform(fmap, b.slice_density)
    return domain.integrate(f.f(theta) * dens)


def dQdt_predicted(state, f: EnstrophyFunctional, domain, t, steps_per_unit=DEFAULT_STEPS_PER_UNIT,
                   n_steps=None, fmap=None):
    """Integral over Omega(t) of f'(vartheta) c (d log gamma ^ omega_1 ^ d sigma_2)* - f(vartheta) n* u(log gamma)."""
    b = _bundle(state)
    fmap = fmap or t_flow(b, domain, t, steps_per_unit, n_steps)
    y = fmap.y
    theta = vartheta_semirel(b, y, 1e-12 * density_scale(b.state, domain))
    first = f.fprime(theta) * b.c * top_component(b.dlog_vort)._fn(y)
    second = f.f(theta) * b.state.rho._fn(y) * b.u_log_gamma(y)
    jac = np.linalg.det(fmap.jac[:, 1:, :])
    return domain.integrate((first - second) * jac)


def dQdt_measured(state, f, domain, t, delta=0.02, steps_per_unit=DEFAULT_STEPS_PER_UNIT):
    """Fourth-order centred difference of Q over five samples (shared RK4 step count)."""
    b = _bundle(state)
    n = step_count(abs(t) + 2 * delta, steps_per_unit)
    q = {k: enstrophy_semirel(b, f, domain, t + k * delta, n_steps=n) for k in (-2, -1, 1, 2)}
    return (q[-2] - 8 * q[-1] + 8 * q[1] - q[2]) / (12 * delta)


# --------------------------------------------------------------------------
# relativistic enstrophy on s-planes


def s_flow(b: FormBundle, domain, s, steps_per_unit=DEFAULT_STEPS_PER_UNIT, n_steps=None):
    return integrate_flow(b.U, domain.nodes, s, parameter="s", steps_per_unit=steps_per_unit, n_steps=n_steps)


def vartheta_rel(state, fmap, floor=0.0):
    """Per-node c (F* (omega_1 ^ d sigma_2))* / (F* (i_U n))*."""
    b = _bundle(state)
    num = pullback_threeform(fmap, b.vort3)
    den = pullback_threeform(fmap, b.flux)
    bad = ~(np.abs(den) > floor)
    if np.any(bad):
        raise DegenerateDensityError("pulled-back density below the division guard", fmap.nodes[int(np.argmax(bad))])
    return b.c * num / den, den


def enstrophy_rel(state, f: EnstrophyFunctional, domain: QuadratureDomain, s,
                  steps_per_unit=DEFAULT_STEPS_PER_UNIT, n_steps=None, fmap=None):
    """c^-1 times the integral over V0 of f(vartheta) F*(i_U n)."""
    b = _bundle(state)
    fmap = fmap or s_flow(b, domain, s, steps_per_unit, n_steps)
    scale = density_scale(b.state, domain) * b.c
    theta, den = vartheta_rel(b, fmap, 1e-12 * scale)
    return domain.integrate(f.f(theta) * den) / b.c


# --------------------------------------------------------------------------
# helicity


def helicity_t(state, domain, t, steps_per_unit=DEFAULT_STEPS_PER_UNIT, fmap=None):
    """Integral of P ^ dP over the co-moving region on the t-plane."""
    b = _bundle(state)
    fmap = fmap or t_flow(b, domain, t, steps_per_unit)
    return domain.integrate(pullback_threeform(fmap, b.helicity_form))


def helicity_rel(state, domain, s, steps_per_unit=DEFAULT_STEPS_PER_UNIT, fmap=None):
    """Integral over V0 of the pulled-back P ^ dP along the proper-time flow."""
    b = _bundle(state)
    fmap = fmap or s_flow(b, domain, s, steps_per_unit)
    return domain.integrate(pullback_threeform(fmap, b.helicity_form))


# --------------------------------------------------------------------------
# planar oracle


def _rk4_planar(vel, xy, t, n_steps):
    """Positions and Jacobians of the planar flow, integrated independently of the 4D kernel."""
    n = xy.shape[0]
    h = t / n_steps
    J = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    z = xy.copy()
    tau = 0.0

    def rhs(tt, z, J):
        v, dv = vel(tt, z)
        return v, dv @ J

    for _ in range(n_steps):
        k1 = rhs(tau, z, J)
        k2 = rhs(tau + h / 2, z + h / 2 * k1[0], J + h / 2 * k1[1])
        k3 = rhs(tau + h / 2, z + h / 2 * k2[0], J + h / 2 * k2[1])
        k4 = rhs(tau + h, z + h * k3[0], J + h * k3[1])
        z = z + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        J = J + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        tau += h
    return z, J


def enstrophy_2d(scenario, f: EnstrophyFunctional, t, order=4, panels=4, steps_per_unit=DEFAULT_STEPS_PER_UNIT,
                 z=None):
    """Integral over Sigma(t) of f(omega_z / rho) rho d^2x, times the slab height.

    Non-relativistic planar transport: omega_z det = omega_z0 and rho det = rho0
    along the planar flow.
    """
    dom = scenario.domain
    lo, hi = np.asarray(dom.lo, float), np.asarray(dom.hi, float)
    height = hi[2] - lo[2]
    z = 0.5 * (lo[2] + hi[2]) if z is None else z
    xy, w = gauss_box(lo[:2], hi[:2], order, panels)
    init = scenario.initial
    c = scenario.c
    p3 = np.column_stack([xy, np.full(len(xy), z)])
    gl, gs = init.lam1._g(p3), init.sig1._g(p3)
    omega0 = gl[:, 0] * gs[:, 1] - gl[:, 1] * gs[:, 0]
    rho0 = init.rho._fn(p3)

    def vel(tt, q):
        pts = np.column_stack([np.full(len(q), c * tt), q, np.full(len(q), z)])
        V = scenario.flow.velocity3(pts)[:, :2]
        dV = scenario.flow._dV(pts)[:, :2, 1:3]
        return V, dV

    if t == 0:
        det = np.ones(len(xy))
    else:
        _, J = _rk4_planar(vel, xy, t, step_count(t, steps_per_unit))
        det = np.linalg.det(J)
    omega, rho = omega0 / det, rho0 / det
    return height * pairwise_sum(w * f.f(omega / rho) * rho * det)


def boundary_circulation(state, domain, t, order=8, panels=4, steps_per_unit=DEFAULT_STEPS_PER_UNIT, z=None):
    """Slab height times the loop integral of lambda^1 d sigma_1 around the mapped boundary of Sigma."""
    b = _bundle(state)
    lo, hi = np.asarray(domain.lo, float), np.asarray(domain.hi, float)
    height = hi[2] - lo[2]
    z = 0.5 * (lo[2] + hi[2]) if z is None else z
    corners = [(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])]
    total = 0.0
    dsig = ext_deriv(b.state.sig1)
    for k in range(4):
        a, e = np.array(corners[k]), np.array(corners[(k + 1) % 4])
        s, w = gauss_box([0.0], [1.0], order, panels)
        pts2 = a + s * (e - a)
        nodes = np.column_stack([pts2, np.full(len(pts2), z)])
        fmap = integrate_flow(b.u, nodes, t, parameter="t", steps_per_unit=steps_per_unit) if t else None
        y = embed_slice(nodes) if fmap is None else fmap.y
        jac = np.broadcast_to(np.eye(4)[:, 1:], (len(nodes), 4, 3)) if fmap is None else fmap.jac
        tangent = jac @ np.append(e - a, 0.0)
        val = b.state.lam1._fn(y) * np.einsum("nm,nm->n", dsig.values(y), tangent)
        total += pairwise_sum(w * val)
    return height * total


# --------------------------------------------------------------------------
# series


@dataclass
class DiagnosticsSeries:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, **values):
        row = {k: float(values.get(k, math.nan)) for k in SERIES_COLUMNS}
        if self.rows and not row["param"] > self.rows[-1]["param"]:
            raise ValueError("series parameter must increase monotonically")
        self.rows.append(row)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[k]) for k in SERIES_COLUMNS])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @staticmethod
    def read_csv(path):
        with open(path) as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if tuple(header) != SERIES_COLUMNS:
                raise ValueError(f"unexpected series header {header}")
            out = DiagnosticsSeries()
            for row in rd:
                out.rows.append({k: float(v) for k, v in zip(header, row)})
            return out

    def all_finite(self):
        selected = [r[k] for r in self.rows for k in SERIES_COLUMNS]
        return all(math.isfinite(v) or math.isnan(v) for v in selected)


def _fmt(v):
    return "nan" if math.isnan(v) else repr(float(v))


def differencing_noise_floor(q_values, delta, nodes):
    """Round-off level of the five-point derivative of Q (coefficient mass 1.5 / delta)."""
    q = np.nanmax(np.abs(np.asarray(q_values, dtype=float)))
    return 1.5 * math.sqrt(nodes) * np.finfo(float).eps * q / delta


def relative_drift(values, floor=1e-300):
    values = np.asarray(values, dtype=float)
    return float(np.max(np.abs(values - values[0])) / max(abs(values[0]), floor))


@dataclass(frozen=True)
class SeriesOptions:
    f: EnstrophyFunctional
    every: float = 0.25
    param_max: float = 1.0
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT
    delta: float = 0.02
    residual_stride: int = 16
    fd_step: float = 1e-4
    enstrophy: bool = True
    helicity: bool = True
    residuals: bool = True


def kinematic_series(scenario, opts: SeriesOptions) -> DiagnosticsSeries:
    """Sample every diagnostic at params 0, every, 2 every, ... up to param_max."""
    state = scenario.state(opts.steps_per_unit)
    b = FormBundle(state)
    dom = scenario.domain
    n_samples = int(round(opts.param_max / opts.every))
    series = DiagnosticsSeries(metadata={"schema": SERIES_SCHEMA, "quadrature": dom.metadata(),
                                         "steps_per_unit": opts.steps_per_unit, "f": opts.f.label})
    wsub = dom.weights[:: opts.residual_stride]
    for k in range(n_samples + 1):
        lam = k * opts.every
        row = {"param": lam}
        tmap = t_flow(b, dom, lam, opts.steps_per_unit)
        if opts.enstrophy:
            row["Q"] = enstrophy_semirel(b, opts.f, dom, lam, fmap=tmap)
            row["dQdt_meas"] = dQdt_measured(b, opts.f, dom, lam, opts.delta, opts.steps_per_unit)
            row["dQdt_pred"] = dQdt_predicted(b, opts.f, dom, lam, fmap=tmap)
        smap = s_flow(b, dom, lam, opts.steps_per_unit) if (opts.enstrophy or opts.helicity) else None
        if opts.enstrophy:
            row["frakQ"] = enstrophy_rel(b, opts.f, dom, lam, fmap=smap)
        if opts.helicity:
            row["helicity_t"] = helicity_t(b, dom, lam, fmap=tmap)
            row["helicity_rel"] = helicity_rel(b, dom, lam, fmap=smap)
        if opts.residuals:
            pts = tmap.y[:: opts.residual_stride]
            row["norm_resid_max"] = float(np.max(np.abs(norm_identity_values(state, pts))))
            row["continuity_resid_l2"] = residual_continuity(state, pts, wsub, opts.fd_step).l2
            row["ohm_resid_l2"] = residual_ohm(state, pts, wsub, opts.fd_step).l2
        series.append(**row)
    return series
