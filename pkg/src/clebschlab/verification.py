"""Randomized property suites behind ``clebschlab verify``.

Each property draws its inputs from a seeded generator and returns the worst
residual it saw together with the tolerance and a description of the inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forms import (KForm, ScalarField, VectorField, basis, divergence, ext_deriv, interior, lie_derivative,
                    pullback_values, top_component, wedge)
from .flow import gauss_box, trace

SUITES = ("forms", "flow", "evolution", "diagnostics")


@dataclass
class PropertyResult:
    suite: str
    name: str
    worst: float
    tol: float
    inputs: dict = field(default_factory=dict)
    kind: str = "max"  # "max": worst <= tol, "min": worst >= tol (convergence orders)

    @property
    def passed(self):
        if not math.isfinite(self.worst):
            return False
        return self.worst <= self.tol if self.kind == "max" else self.worst >= self.tol

    def line(self):
        rel = "<=" if self.kind == "max" else ">="
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.suite}.{self.name}: worst={self.worst:.3e} (need {rel} {self.tol:.1e})"


# --------------------------------------------------------------------------
# random smooth inputs


def random_field(rng, dim=4, terms=3, scale=1.0):
    """Random trigonometric polynomial with its exact gradient."""
    k = rng.uniform(-1.5, 1.5, size=(terms, dim))
    b = rng.uniform(0, 2 * np.pi, size=terms)
    a = rng.normal(0, 0.5, size=terms) * scale
    c0 = rng.normal()

    def fn(p):
        return c0 + np.sin(p @ k.T + b) @ a

    def grad(p):
        return (np.cos(p @ k.T + b) * a) @ k

    return ScalarField(fn, grad, dim=dim)


def random_vector(rng, dim=4):
    return VectorField.from_components([random_field(rng, dim) for _ in range(dim)])


def random_form(rng, degree, dim=4):
    return KForm(degree, {I: random_field(rng, dim) for I in basis(dim, degree)}, dim=dim)


def random_points(rng, n=32, dim=4, spread=1.0):
    return rng.uniform(-spread, spread, size=(n, dim))


def _fd_form(omega: KForm, step):
    """Copy of ``omega`` whose components use central-difference gradients."""
    return KForm(omega.degree, {I: f.without_gradient().with_step(step) for I, f in omega.components.items()},
                 dim=omega.dim)


def _fd_field(f: ScalarField, step):
    return f.without_gradient().with_step(step)


def _fd_vector(X: VectorField, step):
    return VectorField.from_components([_fd_field(X.component(i), step) for i in range(X.dim)])


def _scaled_vector(f: ScalarField, X: VectorField):
    return VectorField.from_components([f * X.component(i) for i in range(X.dim)])


def observed_orders(errors, ratio=2.0):
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / math.log(ratio)


def _max_abs(form_or_vals, pts=None):
    v = form_or_vals.values(pts) if isinstance(form_or_vals, KForm) else np.asarray(form_or_vals)
    return float(np.max(np.abs(v))) if v.size else 0.0


# --------------------------------------------------------------------------
# forms


def check_dd_zero(rng, trials=3):
    worst = 0.0
    for _ in range(trials):
        pts = random_points(rng)
        for k in range(3):
            w = random_form(rng, k)
            worst = max(worst, _max_abs(ext_deriv(ext_deriv(w)), pts))
    return worst


def check_dd_zero_fd(rng, trials=3):
    """d(d w) through component-wise finite differences: zero up to cancellation error."""
    worst = 0.0
    for _ in range(trials):
        pts = random_points(rng)
        for k in range(3):
            w = random_form(rng, k)
            worst = max(worst, _max_abs(ext_deriv(ext_deriv(w, structural=False), structural=False), pts))
    return worst


def check_leibniz(rng, trials=3):
    worst = 0.0
    for _ in range(trials):
        pts = random_points(rng)
        for k, l in ((0, 1), (1, 1), (1, 2), (2, 1)):
            a, b = random_form(rng, k), random_form(rng, l)
            lhs = ext_deriv(wedge(a, b), structural=False)
            rhs = wedge(ext_deriv(a), b) + wedge(a, ext_deriv(b)).scale((-1) ** k)
            worst = max(worst, _max_abs(lhs - rhs, pts))
    return worst


def check_interior_antiderivation(rng, trials=3):
    worst = 0.0
    for _ in range(trials):
        pts = random_points(rng)
        X = random_vector(rng)
        for k, l in ((1, 1), (1, 2), (2, 1)):
            a, b = random_form(rng, k), random_form(rng, l)
            lhs = interior(X, wedge(a, b))
            rhs = wedge(interior(X, a), b) + wedge(a, interior(X, b)).scale((-1) ** k)
            worst = max(worst, _max_abs(lhs - rhs, pts))
            worst = max(worst, _max_abs(interior(X, interior(X, b)) if l >= 2 else KForm.zero(0), pts))
    return worst


def rescaling_residual(f, X, omega, pts):
    """L_{fX} w - (df ^ i_X w + f L_X w)."""
    lhs = lie_derivative(_scaled_vector(f, X), omega)
    rhs = wedge(ext_deriv(f), interior(X, omega)) + wedge(KForm.scalar(f), lie_derivative(X, omega))
    return _max_abs(lhs - rhs, pts)


def check_rescaling(rng, trials=2):
    worst = 0.0
    for _ in range(trials):
        pts = random_points(rng)
        f, X = random_field(rng), random_vector(rng)
        for k in (1, 2, 3):
            worst = max(worst, rescaling_residual(f, X, random_form(rng, k), pts))
    return worst


def divergence_residual(X, a, pts):
    """(L_X alpha)* - [X(alpha*) + alpha* div X] for the top form alpha = a vol."""
    alpha = KForm(X.dim, {tuple(range(X.dim)): a}, dim=X.dim)
    lhs = top_component(lie_derivative(X, alpha))(pts)
    rhs = np.einsum("nm,nm->n", X(pts), a.gradient(pts)) + a(pts) * divergence(X)(pts)
    return float(np.max(np.abs(lhs - rhs)))


def check_divergence_identity(rng, trials=3):
    worst = 0.0
    for _ in range(trials):
        for dim in (3, 4):
            pts = random_points(rng, dim=dim)
            worst = max(worst, divergence_residual(random_vector(rng, dim), random_field(rng, dim), pts))
    return worst


def fd_identity_orders(rng, steps=(2e-2, 1e-2, 5e-3)):
    """Observed orders of the rescaling and divergence identities built from FD fields."""
    pts = random_points(rng, 16)
    f, X, w = random_field(rng), random_vector(rng), random_form(rng, 2)
    a = random_field(rng)
    resc, div = [], []
    for h in steps:
        resc.append(rescaling_residual(_fd_field(f, h), _fd_vector(X, h), _fd_form(w, h), pts))
        div.append(divergence_residual(_fd_vector(X, h), _fd_field(a, h), pts))
    return {"rescaling": (resc, observed_orders(resc)), "divergence": (div, observed_orders(div))}


# --------------------------------------------------------------------------
# flow


def flow_lie_residual(X, omega, pts, eps, stencil=5, n_steps=4):
    """Lie derivative vs the epsilon-derivative of the flow pullback at eps = 0."""
    n, dim = pts.shape
    J0 = np.broadcast_to(np.eye(dim), (n, dim, dim)).copy()

    def pulled(e):
        y, J = trace(X, pts, e, n_steps, J0)
        return pullback_values(omega, y, J)

    if stencil == 5:
        d = (pulled(-2 * eps) - 8 * pulled(-eps) + 8 * pulled(eps) - pulled(2 * eps)) / (12 * eps)
    else:
        d = (pulled(eps) - pulled(-eps)) / (2 * eps)
    return float(np.max(np.abs(d - lie_derivative(X, omega).values(pts))))


def check_cartan_flow(rng, trials=2):
    worst = 0.0
    for _ in range(trials):
        pts = random_points(rng, 16)
        X = random_vector(rng)
        for k in (0, 1, 2, 3):
            worst = max(worst, flow_lie_residual(X, random_form(rng, k), pts, 2e-3, n_steps=8))
    return worst


def cartan_flow_orders(rng, eps=(4e-2, 2e-2, 1e-2)):
    pts = random_points(rng, 16)
    X, w = random_vector(rng), random_form(rng, 2)
    errs = [flow_lie_residual(X, w, pts, e, stencil=3) for e in eps]
    return errs, observed_orders(errs)


def check_rk4_reversibility(rng):
    pts = random_points(rng, 32)
    X = random_vector(rng)
    neg = VectorField(lambda p: -X._fn(p), lambda p: -X._jac(p), dim=4)
    y = trace(X, pts, 0.5, 32)
    back = trace(neg, y, 0.5, 32)
    return float(np.max(np.abs(back - pts)))


def check_variational_jacobian(rng, h=1e-5):
    pts = random_points(rng, 8)
    X = random_vector(rng)
    J0 = np.broadcast_to(np.eye(4), (8, 4, 4)).copy()
    _, J = trace(X, pts, 0.4, 16, J0)
    fd = np.stack([(trace(X, pts + h * e, 0.4, 16) - trace(X, pts - h * e, 0.4, 16)) / (2 * h)
                   for e in np.eye(4)], axis=-1)
    return float(np.max(np.abs(J - fd)))


def check_quadrature_exactness(rng, order=4):
    lo = rng.uniform(-1, 0, 3)
    hi = lo + rng.uniform(0.5, 2, 3)
    nodes, w = gauss_box(lo, hi, order, panels=2)
    deg = 2 * order - 1
    pw = rng.integers(0, deg + 1, size=3)
    exact = np.prod([(b ** (q + 1) - a ** (q + 1)) / (q + 1) for a, b, q in zip(lo, hi, pw)])
    approx = float(np.sum(w * np.prod(nodes ** pw, axis=1)))
    return abs(approx - exact) / max(1.0, abs(exact))


def rk4_orders(rng, steps=(4, 8, 16)):
    pts = random_points(rng, 8)
    X = random_vector(rng)
    ref = trace(X, pts, 1.0, 256)
    errs = [float(np.max(np.abs(trace(X, pts, 1.0, n) - ref))) for n in steps]
    return errs, observed_orders(errs)


# --------------------------------------------------------------------------
# evolution and diagnostics (scenario battery)


def _scenario_points(rng, sc, n=24, tmax=0.8):
    lo, hi = np.array(sc.domain.lo), np.array(sc.domain.hi)
    return np.column_stack([rng.uniform(0, tmax, n), lo + (hi - lo) * rng.uniform(size=(n, 3))])


def evolution_residuals(rng, names=("shear", "vortex", "compressive"), steps_per_unit=64):
    from .evolution import continuity_residual_values, motion_residual_values, norm_identity_values, \
        phi_equation_residual_values
    from .scenarios import build

    out = {"norm": 0.0, "motion": 0.0, "phi": 0.0, "continuity": 0.0}
    for name in names:
        sc = build(name)
        st = sc.state(steps_per_unit)
        pts = _scenario_points(rng, sc)
        out["norm"] = max(out["norm"], float(np.max(np.abs(norm_identity_values(st, pts)))))
        out["motion"] = max(out["motion"], float(np.max(np.abs(motion_residual_values(st, pts)))))
        out["phi"] = max(out["phi"], float(np.max(np.abs(phi_equation_residual_values(st, pts)))))
        out["continuity"] = max(out["continuity"], float(np.max(np.abs(continuity_residual_values(st, pts, 1e-3)))))
    return out


def conservation_battery(rng, names=("shear", "vortex"), panels=2, steps_per_unit=64, s_max=1.0):
    from .diagnostics import EnstrophyFunctional, FormBundle, enstrophy_rel, relative_drift
    from .flow import QuadratureDomain
    from .scenarios import build

    worst = 0.0
    fs = (EnstrophyFunctional.identity(), EnstrophyFunctional.power(2),
          EnstrophyFunctional.custom(np.tanh, lambda x: 1 / np.cosh(x) ** 2))
    for name in names:
        sc = build(name, beta=float(rng.uniform(0.3, 0.5)))
        dom = QuadratureDomain(sc.domain.lo, sc.domain.hi, 4, panels)
        b = FormBundle(sc.state(steps_per_unit))
        for f in fs:
            vals = [enstrophy_rel(b, f, dom, s, steps_per_unit) for s in (0.0, 0.5 * s_max, s_max)]
            worst = max(worst, relative_drift(vals))
    return worst


def planar_reduction(rng):
    from .diagnostics import EnstrophyFunctional, enstrophy_2d, enstrophy_semirel, helicity_t
    from .flow import QuadratureDomain
    from .scenarios import build

    sc = build("planar")
    dom = QuadratureDomain(sc.domain.lo, sc.domain.hi, 4, (4, 4, 1))
    st = sc.state()
    t = float(rng.uniform(0.1, 0.5))
    f = EnstrophyFunctional.power(2)
    q3 = enstrophy_semirel(st, f, dom, t)
    q2 = enstrophy_2d(sc, f, t, order=4, panels=4)
    hel = abs(helicity_t(st, dom, t))
    return abs(q3 - q2) / abs(q2), hel


# --------------------------------------------------------------------------
# suites


def run_suite(suite, seed=0, inject_failure=False):
    """Run one suite (or "all"); returns the list of PropertyResult."""
    names = SUITES if suite == "all" else (suite,)
    if any(n not in SUITES for n in names):
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES + ('all',)}")
    results = []
    for n in names:
        rng = np.random.default_rng([seed, SUITES.index(n)])
        results.extend(_SUITE_FUNCS[n](rng, seed))
    if inject_failure:
        results.append(PropertyResult(names[0], "injected_failure", 1.0, 0.0, {"seed": seed}))
    return results


def _forms_suite(rng, seed):
    res = [
        PropertyResult("forms", "dd_zero", check_dd_zero(rng), 1e-12, {"seed": seed}),
        PropertyResult("forms", "dd_zero_fd", check_dd_zero_fd(rng), 1e-6, {"seed": seed}),
        PropertyResult("forms", "leibniz", check_leibniz(rng), 1e-10, {"seed": seed}),
        PropertyResult("forms", "interior_antiderivation", check_interior_antiderivation(rng), 1e-10, {"seed": seed}),
        PropertyResult("forms", "rescaling_identity", check_rescaling(rng), 1e-9, {"seed": seed}),
        PropertyResult("forms", "divergence_identity", check_divergence_identity(rng), 1e-9, {"seed": seed}),
    ]
    fd = fd_identity_orders(rng)
    for key, (errs, orders) in fd.items():
        res.append(PropertyResult("forms", f"fd_{key}_order", float(np.min(orders)), 1.9,
                                  {"seed": seed, "errors": errs}, kind="min"))
    return res


def _flow_suite(rng, seed):
    errs, orders = cartan_flow_orders(rng)
    rk_errs, rk_ord = rk4_orders(rng)
    return [
        PropertyResult("flow", "cartan_vs_flow", check_cartan_flow(rng), 1e-6, {"seed": seed}),
        PropertyResult("flow", "cartan_vs_flow_order", float(np.min(orders)), 1.9, {"seed": seed, "errors": errs},
                       kind="min"),
        PropertyResult("flow", "rk4_reversibility", check_rk4_reversibility(rng), 1e-8, {"seed": seed}),
        PropertyResult("flow", "rk4_order", float(np.min(rk_ord)), 3.8, {"seed": seed, "errors": rk_errs}, kind="min"),
        PropertyResult("flow", "variational_jacobian", check_variational_jacobian(rng), 1e-7, {"seed": seed}),
        PropertyResult("flow", "quadrature_exactness", check_quadrature_exactness(rng), 1e-12, {"seed": seed}),
    ]


def _evolution_suite(rng, seed):
    r = evolution_residuals(rng)
    return [
        PropertyResult("evolution", "norm_identity", r["norm"], 1e-10, {"seed": seed}),
        PropertyResult("evolution", "motion_residual", r["motion"], 1e-7, {"seed": seed}),
        PropertyResult("evolution", "phi_residual", r["phi"], 1e-6, {"seed": seed}),
        PropertyResult("evolution", "continuity_residual", r["continuity"], 1e-5, {"seed": seed}),
    ]


def _diagnostics_suite(rng, seed):
    rel, hel = planar_reduction(rng)
    return [
        PropertyResult("diagnostics", "frakQ_conservation", conservation_battery(rng), 1e-4, {"seed": seed}),
        PropertyResult("diagnostics", "planar_reduction", rel, 1e-6, {"seed": seed}),
        PropertyResult("diagnostics", "planar_helicity", hel, 1e-12, {"seed": seed}),
    ]


_SUITE_FUNCS = {"forms": _forms_suite, "flow": _flow_suite, "evolution": _evolution_suite,
                "diagnostics": _diagnostics_suite}
