"""Self-consistent (dynamic) evolution on a periodic box.

Fields live on a uniform periodic grid and are interpolated with their
trigonometric series, optionally on top of a linear background (for sigma and
phi).  A step advances the Clebsch potentials by second-order semi-Lagrangian
transport along the velocity obtained from the momentum norm, carrying the lab
density N = rho gamma by the continuity equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FixedPointError
from .evolution import (
    ResidualNorm,
    continuity_residual_values,
    motion_residual_values,
    ohm_residual_values,
    phi_equation_residual_values,
)
from .flow import QuadratureDomain
from .forms import KForm, ScalarField, VectorField, as_points
from .state import ClebschState, EquationOfState, FluidConstants, eos_eval

FIELD_NAMES = ("phi", "lam1", "sig1", "lam2", "sig2")


# --------------------------------------------------------------------------
# periodic spectral fields


@dataclass(frozen=True)
class PeriodicGrid:
    shape: tuple
    lengths: tuple

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def cell_volume(self):
        return float(np.prod(np.asarray(self.lengths) / np.asarray(self.shape)))

    @property
    def points(self):
        axes = [np.arange(n) * (L / n) for n, L in zip(self.shape, self.lengths)]
        g = np.meshgrid(*axes, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=-1)

    def wavenumbers(self):
        ks = []
        for n, L in zip(self.shape, self.lengths):
            k = 2 * np.pi / L * np.fft.fftfreq(n, 1.0 / n)
            if n % 2 == 0:
                k[n // 2] = 0.0
            ks.append(k)
        return ks

    def nyquist_mask(self):
        mask = np.ones(self.shape, dtype=bool)
        for ax, n in enumerate(self.shape):
            if n % 2 == 0 and n > 1:
                idx = [slice(None)] * 3
                idx[ax] = n // 2
                mask[tuple(idx)] = False
        return mask


class PeriodicField:
    """Trigonometric interpolant of grid values plus a linear background slope . x."""

    def __init__(self, grid: PeriodicGrid, values, slope=(0.0, 0.0, 0.0)):
        self.grid = grid
        self.values = np.asarray(values, dtype=float).reshape(grid.shape)
        self.slope = np.asarray(slope, dtype=float)
        coeff = np.fft.fftn(self.values) / grid.size
        self.coeff = np.where(grid.nyquist_mask(), coeff, 0.0)
        self.k = grid.wavenumbers()
        self.payload_ref = None

    def _phases(self, p):
        return [np.exp(1j * p[:, a, None] * self.k[a][None, :]) for a in range(3)]

    def evaluate(self, points, gradient=False):
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        E = self._phases(p)
        C = self.coeff
        T = np.einsum("abc,nc->nab", C, E[2])
        S = np.einsum("nab,nb->na", T, E[1])
        val = np.real(np.einsum("na,na->n", S, E[0])) + p @ self.slope
        if not gradient:
            return val
        ik = [1j * k for k in self.k]
        g0 = np.real(np.einsum("na,na->n", S, E[0] * ik[0]))
        g1 = np.real(np.einsum("na,nb,nab->n", E[0], E[1] * ik[1], T))
        T3 = np.einsum("abc,nc->nab", C, E[2] * ik[2])
        g2 = np.real(np.einsum("na,nb,nab->n", E[0], E[1], T3))
        return val, np.stack([g0, g1, g2], axis=-1) + self.slope

    def grid_values(self):
        """Full field (with background) at the grid points."""
        return self.values.ravel() + self.grid.points @ self.slope

    def grid_gradient(self):
        out = []
        for a in range(3):
            shape = [1, 1, 1]
            shape[a] = -1
            ik = (1j * self.k[a]).reshape(shape)
            out.append(np.real(np.fft.ifftn(ik * self.coeff * self.grid.size)).ravel() + self.slope[a])
        return np.stack(out, axis=-1)

    def slice_field(self) -> ScalarField:
        return ScalarField(lambda p: self.evaluate(p), lambda p: self.evaluate(p, True)[1], dim=3)

    @classmethod
    def from_function(cls, grid, fn, slope=(0.0, 0.0, 0.0)):
        """Sample the periodic part ``fn`` (of grid points (N,3)) on the grid."""
        return cls(grid, fn(grid.points), slope)


def spectral_divergence(grid, vectors):
    """Divergence of a periodic 3-vector given by grid values (N, 3)."""
    total = np.zeros(grid.size)
    for a in range(3):
        total += PeriodicField(grid, vectors[:, a]).grid_gradient()[:, a]
    return total


# --------------------------------------------------------------------------
# levels and closure


@dataclass
class DynamicLevel:
    t: float
    fields: dict
    lnN: PeriodicField
    U: np.ndarray  # (N, 4) proper velocity at grid points

    def rho(self, c):
        return np.exp(self.lnN.grid_values()) * c / self.U[:, 0]


@dataclass(frozen=True)
class StepReport:
    param: float
    iterations: int
    norm_residual_max: float
    continuity_residual: float


def _potential_values(A, points4):
    return None if A is None else A.values(points4)


def closure_velocity(grid, fields, rho, t, constants, eos, A=None):
    """U from U_mu = (c^2 / h) pi_mu with pi_0 fixed by |pi|_eta = h / c."""
    c, e = constants.c, constants.e
    pi = -fields["phi"].grid_gradient()
    pi -= fields["lam1"].grid_values()[:, None] * fields["sig1"].grid_gradient()
    pi -= fields["lam2"].grid_values()[:, None] * fields["sig2"].grid_gradient()
    if e != 0 and A is not None:
        pts4 = np.column_stack([np.full(grid.size, c * t), grid.points])
        pi -= (e / c) * A.values(pts4)[:, 1:]
    h = eos_eval(eos, rho)[1]
    pi0 = np.sqrt((h / c) ** 2 + np.sum(pi * pi, axis=1))
    U = np.empty((grid.size, 4))
    U[:, 0] = c * c / h * pi0
    U[:, 1:] = -(c * c / h)[:, None] * pi
    return U


def _source_u(level_U, rho, t, grid, constants, eos, A, theta):
    """Coordinate-time phi source (-h - (e/c) U.A + theta/c) / gamma at grid points."""
    c, e = constants.c, constants.e
    h = eos_eval(eos, rho)[1]
    s = -h
    if (e != 0 and A is not None) or theta is not None:
        pts4 = np.column_stack([np.full(grid.size, c * t), grid.points])
        if e != 0 and A is not None:
            s = s - (e / c) * np.einsum("nm,nm->n", level_U, A.values(pts4))
        if theta is not None:
            s = s + theta._fn(pts4) / c
    return s * c / level_U[:, 0]


class DynamicRun:
    """Sequence of time levels produced by ``dynamic_step``."""

    def __init__(self, grid, initial_fields, rho0, constants=FluidConstants(), eos=EquationOfState(),
                 A=None, theta=None, tol=1e-8, max_iter=25, departure_iter=3):
        self.grid = grid
        self.constants = constants
        self.eos = eos
        self.A = A
        self.theta = theta
        self.tol = tol
        self.max_iter = max_iter
        self.departure_iter = departure_iter
        rho0 = np.asarray(rho0, dtype=float).ravel()
        U0 = closure_velocity(grid, initial_fields, rho0, 0.0, constants, eos, A)
        lnN = PeriodicField(grid, np.log(rho0 * U0[:, 0] / constants.c))
        self.levels = [DynamicLevel(0.0, dict(initial_fields), lnN, U0)]
        self.reports = []
        self.dt = None

    @property
    def c(self):
        return self.constants.c

    def step(self, dt):
        if self.dt is None:
            self.dt = dt
        elif not math.isclose(dt, self.dt, rel_tol=1e-12):
            raise ValueError("time levels must be uniformly spaced")
        new, report = dynamic_step(self, self.levels[-1], dt)
        self.levels.append(new)
        self.reports.append(report)
        return report

    def run(self, n_steps, dt):
        for _ in range(n_steps):
            self.step(dt)
        return self

    # spacetime views -------------------------------------------------------

    def _field_series(self, getter):
        return TimeSeriesField(self, getter)

    def state(self, window=None, prescribed_velocity=True) -> ClebschState:
        """Spacetime state interpolated in time (quadratic over three levels).

        ``window`` pins the interpolation to levels (n-1, n, n+1); otherwise the
        nearest three levels are used.  With ``prescribed_velocity`` the grid
        velocity is interpolated; otherwise it follows from the momentum norm.
        """
        series = {name: TimeSeriesField(self, lambda lv, k=name: lv.fields[k], window) for name in FIELD_NAMES}
        rho = TimeSeriesField(self, lambda lv: PeriodicField(self.grid, lv.rho(self.c)), window)
        U = gamma = None
        if prescribed_velocity:
            comps = [TimeSeriesField(self, lambda lv, m=m: PeriodicField(self.grid, lv.U[:, m]), window)
                     for m in range(4)]
            U = VectorField.from_components(comps)
            gamma = comps[0].scale(1.0 / self.c)
        return ClebschState(rho=rho, A=self.A, theta=self.theta, constants=self.constants, eos=self.eos,
                            velocity=U, gamma=gamma, **series)


def dynamic_step(run: DynamicRun, level: DynamicLevel, dt):
    """One second-order semi-Lagrangian step with Picard iteration on the velocity."""
    grid, const, eos = run.grid, run.constants, run.eos
    c = const.c
    x = grid.points
    t1 = level.t + dt
    Vn = c * level.U[:, 1:] / level.U[:, :1]
    divVn = PeriodicField(grid, spectral_divergence(grid, Vn))
    rho_n = level.rho(c)
    Sn = PeriodicField(grid, _source_u(level.U, rho_n, level.t, grid, const, eos, run.A, run.theta))
    U_next = level.U.copy()
    for it in range(1, run.max_iter + 1):
        V_next = c * U_next[:, 1:] / U_next[:, :1]
        Vmid = [PeriodicField(grid, 0.5 * (Vn[:, a] + V_next[:, a])) for a in range(3)]
        alpha = dt * 0.5 * (Vn + V_next)
        for _ in range(run.departure_iter):
            q = x - 0.5 * alpha
            alpha = dt * np.stack([f.evaluate(q) for f in Vmid], axis=-1)
        foot = x - alpha
        fields = {}
        for name in FIELD_NAMES:
            old = level.fields[name]
            vals = old.evaluate(foot) - x @ old.slope
            fields[name] = PeriodicField(grid, vals, old.slope) if name != "phi" else None
        divV1 = spectral_divergence(grid, V_next)
        lnN = level.lnN.evaluate(foot) - 0.5 * dt * (divVn.evaluate(foot) + divV1)
        rho1 = np.exp(lnN) * c / U_next[:, 0]
        S1 = _source_u(U_next, rho1, t1, grid, const, eos, run.A, run.theta)
        old = level.fields["phi"]
        phi_vals = old.evaluate(foot) - x @ old.slope + 0.5 * dt * (Sn.evaluate(foot) + S1)
        fields["phi"] = PeriodicField(grid, phi_vals, old.slope)
        U_new = closure_velocity(grid, fields, rho1, t1, const, eos, run.A)
        change = float(np.max(np.abs(U_new - U_next)))
        U_next = U_new
        if change < run.tol:
            break
    else:
        raise FixedPointError(f"velocity fixed point did not converge in {run.max_iter} iterations "
                              f"(last change {change:.3e})")
    new = DynamicLevel(t1, fields, PeriodicField(grid, lnN), U_next)
    norm = float(np.max(np.abs((U_next[:, 0] ** 2 - np.sum(U_next[:, 1:] ** 2, axis=1)) / c**2 - 1.0)))
    report = StepReport(t1, it, norm, _continuity_two_level(grid, level, new, dt, c))
    return new, report


def _continuity_two_level(grid, a: DynamicLevel, b: DynamicLevel, dt, c):
    """RMS of d_mu(rho U^mu) centred at the half step."""
    ra, rb = a.rho(c), b.rho(c)
    dt_term = (rb * b.U[:, 0] - ra * a.U[:, 0]) / (c * dt)
    div = 0.5 * (spectral_divergence(grid, ra[:, None] * a.U[:, 1:])
                 + spectral_divergence(grid, rb[:, None] * b.U[:, 1:]))
    return float(np.sqrt(np.mean((dt_term + div) ** 2)))


# --------------------------------------------------------------------------
# time interpolation


def _lagrange(ts, t):
    """Weights and derivative weights of the Lagrange basis on nodes ``ts`` at times ``t`` (M,)."""
    m = len(ts)
    w = np.ones((m, t.size))
    dw = np.zeros((m, t.size))
    for j in range(m):
        others = [ts[k] for k in range(m) if k != j]
        denom = np.prod([ts[j] - o for o in others]) if others else 1.0
        w[j] = np.prod([t - o for o in others], axis=0) / denom if others else 1.0
        d = np.zeros(t.size)
        for i, oi in enumerate(others):
            rest = [o for k, o in enumerate(others) if k != i]
            d += np.prod([t - o for o in rest], axis=0) if rest else 1.0
        dw[j] = d / denom
    return w, dw


class TimeSeriesField(ScalarField):
    """Spacetime field: spectral in space, Lagrange over (up to) three levels in time."""

    def __init__(self, run: DynamicRun, getter, window=None):
        self.run = run
        self.getter = getter
        self.window = window
        self._cache = {}
        super().__init__(self._value, self._gradient, dim=4)

    def _level_field(self, j):
        if j not in self._cache:
            self._cache[j] = self.getter(self.run.levels[j])
        return self._cache[j]

    def _starts(self, t):
        L = len(self.run.levels)
        width = min(3, L)
        if self.window is not None:
            return np.full(t.size, max(0, min(self.window - 1, L - width)), dtype=int), width
        if L == 1:
            return np.zeros(t.size, dtype=int), 1
        dt = self.run.dt
        j = np.rint(t / dt).astype(int) - 1
        return np.clip(j, 0, L - width), width

    def _eval(self, p, gradient):
        c = self.run.c
        t = p[:, 0] / c
        starts, width = self._starts(t)
        val = np.zeros(p.shape[0])
        grad = np.zeros((p.shape[0], 4)) if gradient else None
        for j0 in np.unique(starts):
            m = starts == j0
            ts = [self.run.levels[j].t for j in range(j0, j0 + width)]
            w, dw = _lagrange(ts, t[m])
            for k in range(width):
                f = self._level_field(j0 + k)
                if gradient:
                    v, g = f.evaluate(p[m, 1:], True)
                    grad[m, 1:] += w[k][:, None] * g
                    grad[m, 0] += dw[k] * v / c
                else:
                    v = f.evaluate(p[m, 1:])
                val[m] += w[k] * v
        return val, grad

    def _value(self, p):
        return self._eval(p, False)[0]

    def _gradient(self, p):
        return self._eval(p, True)[1]


# --------------------------------------------------------------------------
# scenarios and residual studies


@dataclass
class DynamicScenario:
    name: str
    grid: PeriodicGrid
    fields: dict
    rho0: np.ndarray
    dt: float
    n_steps: int
    constants: FluidConstants = field(default_factory=FluidConstants)
    eos: EquationOfState = field(default_factory=EquationOfState)
    A: KForm | None = None
    theta: ScalarField | None = None
    beta: float = 0.0
    domain: QuadratureDomain | None = None
    mode: str = "dynamic"
    exact: object = None

    @property
    def param_max(self):
        return self.dt * self.n_steps

    @property
    def c(self):
        return self.constants.c

    def start(self, **kw):
        return DynamicRun(self.grid, self.fields, self.rho0, self.constants, self.eos, self.A, self.theta, **kw)

    def run(self, n_steps=None, dt=None, **kw):
        n_steps = self.n_steps if n_steps is None else n_steps
        dt = self.dt if dt is None else dt
        return self.start(**kw).run(n_steps, dt)


def _line_domain(order=4, panels=4):
    # fields vary along x1 only (plus linear backgrounds), one panel suffices across
    return QuadratureDomain((1.0, 0.0, 0.0), (4.0, 1.0, 1.0), order, (panels, 1, 1))


def dyn_rest(n=8, dt=0.05, n_steps=10, **_):
    grid = PeriodicGrid((n, 1, 1), (2 * np.pi, 1.0, 1.0))
    eos = EquationOfState(1.0, K=0.0)
    z = np.zeros(grid.size)
    fields = {"phi": PeriodicField(grid, z), "lam1": PeriodicField(grid, z), "sig1": PeriodicField(grid, z),
              "lam2": PeriodicField(grid, z), "sig2": PeriodicField(grid, z)}
    return DynamicScenario("dyn_rest", grid, fields, np.ones(grid.size), dt, n_steps, eos=eos,
                           domain=_line_domain())


def dyn_boost(beta=0.6, n=16, dt=0.05, n_steps=10, eps=0.2, **_):
    """Uniform boost carrying a sigma profile; exact solution is a rigid translation."""
    grid = PeriodicGrid((n, 1, 1), (2 * np.pi, 1.0, 1.0))
    c = 1.0
    eos = EquationOfState(1.0, K=0.3, Gamma=5.0 / 3.0)
    rho = 1.0
    h = float(eos_eval(eos, rho)[1])
    V = beta * c
    g = 1.0 / math.sqrt(1 - beta**2)

    def prof(x1):
        return 0.4 * np.sin(x1) + 0.1 * np.cos(2 * x1)

    x1 = grid.points[:, 0]
    fields = {
        "phi": PeriodicField(grid, -eps * prof(x1), (h * g * V / c**2, 0.0, 0.0)),
        "lam1": PeriodicField(grid, np.full(grid.size, eps)),
        "sig1": PeriodicField(grid, prof(x1)),
        "lam2": PeriodicField(grid, np.zeros(grid.size)),
        "sig2": PeriodicField(grid, np.zeros(grid.size), (0.0, 0.0, 1.0)),
    }

    def exact(t, pts):
        xs = pts[:, 0] - V * t
        return {"sig1": prof(xs), "phi": -h * g * t + h * g * V / c**2 * pts[:, 0] - eps * prof(xs),
                "U": np.tile([g * c, g * V, 0.0, 0.0], (len(pts), 1))}

    return DynamicScenario("dyn_boost", grid, fields, np.full(grid.size, rho), dt, n_steps, eos=eos, beta=beta,
                           domain=_line_domain(), exact=exact)


def dyn_wave(n=32, dt=0.05, n_steps=10, amp=0.05, **_):
    """Weak compressive and shearing perturbation of a uniform state."""
    grid = PeriodicGrid((n, 1, 1), (2 * np.pi, 1.0, 1.0))
    eos = EquationOfState(1.0, K=0.5, Gamma=5.0 / 3.0)
    x1 = grid.points[:, 0]
    fields = {
        "phi": PeriodicField(grid, amp * np.sin(x1)),
        "lam1": PeriodicField(grid, amp * (1 + np.cos(x1))),
        "sig1": PeriodicField(grid, np.zeros(grid.size), (0.0, 1.0, 0.0)),
        "lam2": PeriodicField(grid, np.zeros(grid.size)),
        "sig2": PeriodicField(grid, np.zeros(grid.size), (0.0, 0.0, 1.0)),
    }
    rho0 = 1.0 + 2 * amp * np.cos(x1)
    return DynamicScenario("dyn_wave", grid, fields, rho0, dt, n_steps, eos=eos, beta=2 * amp,
                           domain=_line_domain())


DYNAMIC = {"dyn_rest": dyn_rest, "dyn_boost": dyn_boost, "dyn_wave": dyn_wave}


def level_residuals(run: DynamicRun, n, fd_step=1e-4):
    """Residual norms at level ``n`` (interior) on the grid points."""
    state = run.state(window=n, prescribed_velocity=False)
    pts = np.column_stack([np.full(run.grid.size, run.c * run.levels[n].t), run.grid.points])
    return {
        "phi": ResidualNorm.of(phi_equation_residual_values(state, pts)),
        "motion": ResidualNorm.of(motion_residual_values(state, pts)),
        "ohm": ResidualNorm.of(ohm_residual_values(state, pts, fd_step)),
        "continuity": ResidualNorm.of(continuity_residual_values(state, pts, fd_step)),
    }


def dynamic_series(scenario: DynamicScenario, opts, run: DynamicRun | None = None):
    """DiagnosticsSeries for a dynamic scenario.

    The enstrophy and helicity columns use the time-interpolated spacetime state;
    residual columns come from the solver's step reports and from
    ``level_residuals`` at the nearest interior level.
    """
    from .diagnostics import (DiagnosticsSeries, FormBundle, SERIES_SCHEMA, dQdt_measured, dQdt_predicted,
                              enstrophy_rel, enstrophy_semirel, helicity_rel, helicity_t, s_flow, t_flow)

    run = run or scenario.run()
    dom = scenario.domain
    ratio = opts.every / run.dt
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ValueError(f"cadence {opts.every} is not a multiple of the time step {run.dt}")
    stride = int(round(ratio))
    b = FormBundle(run.state())
    series = DiagnosticsSeries(metadata={"schema": SERIES_SCHEMA, "quadrature": dom.metadata(), "mode": "dynamic",
                                         "steps_per_unit": opts.steps_per_unit, "f": opts.f.label,
                                         "dt": run.dt, "grid": list(run.grid.shape)})
    last = len(run.levels) - 1
    for n in range(0, last + 1, stride):
        t = run.levels[n].t
        row = {"param": t}
        tmap = t_flow(b, dom, t, opts.steps_per_unit)
        smap = s_flow(b, dom, t, opts.steps_per_unit)
        if opts.enstrophy:
            row["Q"] = enstrophy_semirel(b, opts.f, dom, t, fmap=tmap)
            row["dQdt_meas"] = dQdt_measured(b, opts.f, dom, t, opts.delta, opts.steps_per_unit)
            row["dQdt_pred"] = dQdt_predicted(b, opts.f, dom, t, fmap=tmap)
            row["frakQ"] = enstrophy_rel(b, opts.f, dom, t, fmap=smap)
        if opts.helicity:
            row["helicity_t"] = helicity_t(b, dom, t, fmap=tmap)
            row["helicity_rel"] = helicity_rel(b, dom, t, fmap=smap)
        if opts.residuals:
            reps = run.reports[:n]
            row["norm_resid_max"] = max((r.norm_residual_max for r in reps), default=0.0)
            row["continuity_resid_l2"] = reps[-1].continuity_residual if reps else 0.0
            if last >= 2:
                row["ohm_resid_l2"] = level_residuals(run, min(max(n, 1), last - 1), opts.fd_step)["ohm"].l2
        series.append(**row)
    return series
