"""Quadrature on the initial slice, RK4 flow maps with variational Jacobians, pullbacks."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ClebschLabError, PullbackDegeneracyError, TrajectoryEscapeError
from .forms import KForm, VectorField, embed_slice, lie_derivative, pullback_values, slice_embedding_jacobian

DEFAULT_STEPS_PER_UNIT = 64
CHUNK = 1024

_threads = None


def get_threads():
    if _threads is not None:
        return _threads
    try:
        return max(1, int(os.environ.get("CLEBSCHLAB_THREADS", "1")))
    except ValueError:
        return 1


def set_threads(n):
    """Worker count for node-parallel kernels (``None`` restores the env default)."""
    global _threads
    _threads = None if n is None else max(1, int(n))


def map_chunks(fn, n, *arrays):
    """Apply ``fn`` to fixed-size slices of ``arrays`` and concatenate in order.

    Chunk boundaries do not depend on the worker count, so the output is
    identical for any thread setting.
    """
    bounds = [(i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)] or [(0, 0)]
    jobs = [tuple(a[i:j] if isinstance(a, np.ndarray) and a.ndim and a.shape[0] == n else a for a in arrays)
            for i, j in bounds]
    threads = get_threads()
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda args: fn(*args), jobs))
    else:
        parts = [fn(*args) for args in jobs]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(len(parts[0])))
    return np.concatenate(parts)


# --------------------------------------------------------------------------
# quadrature


def pairwise_sum(values):
    """Pairwise (cascade) summation with a fixed reduction tree."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        return 0.0
    while x.size > 1:
        if x.size % 2:
            x = np.append(x, 0.0)
        x = x[0::2] + x[1::2]
    return float(x[0])


def gauss_box(lo, hi, order=4, panels=4):
    """Composite Gauss-Legendre nodes and weights on an axis-aligned box."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    panels = np.broadcast_to(np.asarray(panels, dtype=int), lo.shape)
    if np.any(hi <= lo):
        raise ValueError("box must have positive extent along every axis")
    if order < 1 or np.any(panels < 1):
        raise ValueError("quadrature order and panel counts must be positive")
    xi, wi = np.polynomial.legendre.leggauss(order)
    axes_x, axes_w = [], []
    for a, b, m in zip(lo, hi, panels):
        edges = np.linspace(a, b, m + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        axes_x.append((mid[:, None] + half[:, None] * xi[None, :]).ravel())
        axes_w.append((half[:, None] * wi[None, :]).ravel())
    grids = np.meshgrid(*axes_x, indexing="ij")
    wgrids = np.meshgrid(*axes_w, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
    return nodes, weights


@dataclass(frozen=True)
class QuadratureDomain:
    """Co-moving region V0 on the t = 0 slice."""

    lo: tuple
    hi: tuple
    order: int = 4
    panels: int | tuple = 4

    @cached_property
    def _rule(self):
        return gauss_box(self.lo, self.hi, self.order, self.panels)

    @property
    def nodes(self):
        return self._rule[0]

    @property
    def weights(self):
        return self._rule[1]

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def size(self):
        return self.nodes.shape[0]

    def integrate(self, values):
        return pairwise_sum(np.asarray(values) * self.weights)

    def refined(self, factor=2):
        p = np.asarray(self.panels) * factor
        return QuadratureDomain(self.lo, self.hi, self.order, tuple(int(v) for v in np.broadcast_to(p, (len(self.lo),))))

    def metadata(self):
        return {"lo": list(self.lo), "hi": list(self.hi), "order": self.order,
                "panels": self.panels if np.isscalar(self.panels) else list(self.panels), "nodes": self.size}


# --------------------------------------------------------------------------
# integration


def step_count(lam, steps_per_unit=DEFAULT_STEPS_PER_UNIT):
    lam = float(np.max(np.abs(lam))) if np.size(lam) else 0.0
    return max(1, math.ceil(lam * steps_per_unit - 1e-9))


def _check_finite(y, what):
    bad = ~np.all(np.isfinite(y.reshape(y.shape[0], -1)), axis=1)
    if np.any(bad):
        j = int(np.argmax(bad))
        raise TrajectoryEscapeError(f"{what} became non-finite", y[j] if y.ndim == 2 else None)


def rk4(rhs, state, lam, n_steps):
    """Fixed-step classical RK4 over ``n_steps`` equal steps of size lam/n.

    ``state`` is a tuple of arrays with leading node axis; ``lam`` is a
    scalar or a per-node array, so each node follows its own uniform grid.
    ``rhs(tau, state)`` returns a tuple of the same shapes.
    """
    lam = np.asarray(lam, dtype=float)
    n0 = state[0].shape[0]
    h = np.broadcast_to(lam / n_steps, (n0,)).astype(float)

    def bc(hv, a):
        return hv.reshape((-1,) + (1,) * (a.ndim - 1))

    def axpy(k, a):
        return tuple(s + bc(a, s) * d for s, d in zip(state_, k))

    tau = np.zeros(n0)
    for _ in range(n_steps):
        state_ = state
        k1 = rhs(tau, state_)
        k2 = rhs(tau + 0.5 * h, axpy(k1, 0.5 * h))
        k3 = rhs(tau + 0.5 * h, axpy(k2, 0.5 * h))
        k4 = rhs(tau + h, axpy(k3, h))
        state = tuple(
            s + bc(h / 6.0, s) * (a + 2.0 * b + 2.0 * c + d) for s, a, b, c, d in zip(state_, k1, k2, k3, k4)
        )
        tau = tau + h
        _check_finite(state[0], "trajectory")
    return state


def _guarded(X, y):
    try:
        return X._fn(y)
    except (ValueError, FloatingPointError, ZeroDivisionError) as exc:
        if isinstance(exc, TrajectoryEscapeError):
            raise
        pt = getattr(exc, "point", None)
        raise TrajectoryEscapeError(f"vector field evaluation failed ({exc})", pt) from exc


def trace(X: VectorField, y0, lam, n_steps, J0=None):
    """Integrate dy/dlam = X(y) (and dJ/dlam = DX(y) J when ``J0`` is given)."""
    y0 = np.asarray(y0, dtype=float)
    n = y0.shape[0]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))

    if J0 is None:
        def kernel(y, lam_c):
            return rk4(lambda tau, s: (_guarded(X, s[0]),), (y,), lam_c, n_steps)[0]

        return map_chunks(kernel, n, y0, np.ascontiguousarray(lam))

    def kernel(y, J, lam_c):
        def rhs(tau, s):
            yv, Jv = s
            return _guarded(X, yv), X.jacobian(yv) @ Jv

        return rk4(rhs, (y, J), lam_c, n_steps)

    return map_chunks(kernel, n, y0, np.asarray(J0, dtype=float), np.ascontiguousarray(lam))


@dataclass
class FlowMap:
    """Image points and Jacobians of the slice nodes under a flow."""

    parameter: str
    lam: float
    nodes: np.ndarray
    y: np.ndarray
    jac: np.ndarray
    stats: dict = field(default_factory=dict)

    def gram_determinant(self):
        return np.linalg.det(np.einsum("nia,nib->nab", self.jac, self.jac))

    def check_regular(self, tol=1e-12):
        g = self.gram_determinant()
        bad = ~(g > tol)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise PullbackDegeneracyError(f"flow-map Jacobian is degenerate (Gram det {g[j]:.3e})", self.nodes[j])
        return g


def integrate_flow(X: VectorField, nodes, lam, *, parameter="s", steps_per_unit=DEFAULT_STEPS_PER_UNIT,
                   n_steps=None, x0_time=0.0):
    """Flow the slice ``nodes`` (N, 3) for parameter ``lam`` along ``X``."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    n = nodes.shape[0]
    if n_steps is None:
        n_steps = step_count(lam, steps_per_unit)
    y0 = embed_slice(nodes, x0_time)
    J0 = slice_embedding_jacobian(n)
    if lam == 0:
        y, J = y0, J0
    else:
        y, J = trace(X, y0, lam, n_steps, J0)
    return FlowMap(parameter, float(lam), nodes, y, J, {"steps": int(n_steps), "rejected": 0, "nodes": n})


def integrate_trajectory(x0, lam_end, X, steps_per_unit=DEFAULT_STEPS_PER_UNIT, n_steps=None):
    """End point in spacetime of the integral curve starting at the slice point ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    pts = np.atleast_2d(x0)
    y0 = embed_slice(pts) if pts.shape[1] == 3 else pts
    n_steps = n_steps or step_count(lam_end, steps_per_unit)
    y = trace(X, y0, lam_end, n_steps)
    return y[0] if single else y


def integrate_jacobian(x0, lam_end, X, steps_per_unit=DEFAULT_STEPS_PER_UNIT, n_steps=None):
    """4x3 Jacobian of the flow restricted to the slice directions."""
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    fm = integrate_flow(X, np.atleast_2d(x0), lam_end, steps_per_unit=steps_per_unit, n_steps=n_steps)
    return fm.jac[0] if single else fm.jac


def fd_jacobian(x0, lam_end, X, step=1e-5, steps_per_unit=DEFAULT_STEPS_PER_UNIT):
    """Cross-check: central differences of re-integrated perturbed trajectories."""
    pts = np.atleast_2d(np.asarray(x0, dtype=float))
    n_steps = step_count(lam_end, steps_per_unit)
    cols = []
    for a in range(3):
        e = np.zeros(3)
        e[a] = step
        yp = trace(X, embed_slice(pts + e), lam_end, n_steps)
        ym = trace(X, embed_slice(pts - e), lam_end, n_steps)
        cols.append((yp - ym) / (2 * step))
    J = np.stack(cols, axis=-1)
    return J[0] if np.asarray(x0).ndim == 1 else J


def pullback_threeform(fmap: FlowMap, omega: KForm):
    """Single component of the pulled-back 3-form at every node."""
    if omega.degree != 3 or omega.dim != 4:
        raise ValueError("pullback_threeform expects a spacetime 3-form")
    fmap.check_regular()
    return pullback_values(omega, fmap.y, fmap.jac)[:, 0]


def pullback_parameter_derivative(X: VectorField, nodes, lam, omega: KForm, dlam=1e-3,
                                  steps_per_unit=DEFAULT_STEPS_PER_UNIT):
    """Both sides of d/dlam F* omega = F*(L_X omega): (finite difference, Lie route)."""
    n_steps = step_count(lam + dlam, steps_per_unit)
    fp = integrate_flow(X, nodes, lam + dlam, n_steps=n_steps)
    fm = integrate_flow(X, nodes, lam - dlam, n_steps=n_steps)
    lhs = (pullback_threeform(fp, omega) - pullback_threeform(fm, omega)) / (2 * dlam)
    f0 = integrate_flow(X, nodes, lam, n_steps=n_steps)
    rhs = pullback_threeform(f0, lie_derivative(X, omega))
    return lhs, rhs


def write_worldlines(path, X: VectorField, nodes, lam_end, samples=16, steps_per_unit=DEFAULT_STEPS_PER_UNIT):
    """Dump per-node worldlines as CSV rows (node, param, x0, x1, x2, x3)."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    lams = np.linspace(0.0, lam_end, samples + 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "param", "x0", "x1", "x2", "x3"])
        for lam in lams:
            y = integrate_trajectory(nodes, lam, X, steps_per_unit) if lam else embed_slice(nodes)
            for i, row in enumerate(np.atleast_2d(y)):
                w.writerow([i, repr(float(lam))] + [repr(float(v)) for v in row])
