"""Pointwise exterior calculus on flat R^4 (Minkowski) and on 3D Euclidean slices.

Fields are closures over numpy arrays of points with shape ``(..., dim)``.
Forms keep only strictly increasing multi-indices; the full antisymmetric
tensor is recovered through permutation signs.
"""

from __future__ import annotations

import itertools
import threading
from collections import OrderedDict
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegreeError, DimensionError

DEFAULT_STEP = 1e-4


def as_points(points, dim):
    """Flatten ``(..., dim)`` to ``(N, dim)``; also return the leading shape."""
    p = np.asarray(points, dtype=float)
    if p.shape[-1] != dim:
        raise DimensionError(f"expected points with last axis {dim}, got shape {p.shape}")
    lead = p.shape[:-1]
    return p.reshape(-1, dim), lead


def perm_sign(seq):
    """Sign of the permutation sorting ``seq``; 0 when an entry repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def basis(dim, k):
    return list(itertools.combinations(range(dim), k))


class PointCache:
    """Small thread-safe LRU keyed on the raw bytes of a point array."""

    def __init__(self, size=16):
        self.size = size
        self._data = OrderedDict()
        self._lock = threading.Lock()

    def get(self, points, compute):
        key = (points.shape, points.tobytes())
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        value = compute(points)
        with self._lock:
            self._data[key] = value
            while len(self._data) > self.size:
                self._data.popitem(last=False)
        return value


# --------------------------------------------------------------------------
# scalar fields


class ScalarField:
    """Smooth function on R^dim, optionally with an exact gradient.

    ``fn`` maps ``(N, dim)`` points to ``(N,)`` values; ``grad`` (if given)
    maps to ``(N, dim)``.  Without ``grad`` derivatives use second-order
    central differences of width ``step``.
    """

    def __init__(self, fn, grad=None, *, dim=4, step=DEFAULT_STEP, name=None, const=None):
        if step <= 0:
            raise ValueError("derivative step must be positive")
        self._fn = fn
        self._grad = grad
        self.dim = dim
        self.step = float(step)
        self.name = name
        self.const = const

    # construction helpers
    @classmethod
    def constant(cls, value, dim=4):
        value = float(value)
        return cls(
            lambda p: np.full(p.shape[0], value),
            lambda p: np.zeros_like(p),
            dim=dim,
            name=repr(value),
            const=value,
        )

    @classmethod
    def coordinate(cls, i, dim=4):
        e = np.zeros(dim)
        e[i] = 1.0
        return cls(lambda p: p[:, i].copy(), lambda p: np.broadcast_to(e, p.shape).copy(), dim=dim, name=f"x{i}")

    @property
    def has_exact_gradient(self):
        return self._grad is not None

    def __call__(self, points):
        p, lead = as_points(points, self.dim)
        return np.asarray(self._fn(p), dtype=float).reshape(lead)

    def fd_gradient(self, points, step=None):
        p, lead = as_points(points, self.dim)
        h = self.step if step is None else float(step)
        n = p.shape[0]
        eye = np.eye(self.dim) * h
        shifted = np.concatenate([p + e for e in eye] + [p - e for e in eye])
        v = np.asarray(self._fn(shifted), dtype=float).reshape(2, self.dim, n)
        g = (v[0] - v[1]).T / (2.0 * h)
        return g.reshape(lead + (self.dim,))

    def gradient(self, points):
        if self._grad is None:
            return self.fd_gradient(points)
        p, lead = as_points(points, self.dim)
        return np.asarray(self._grad(p), dtype=float).reshape(lead + (self.dim,))

    def _g(self, p):
        # flat-array gradient used by combinators
        if self._grad is not None:
            return self._grad(p)
        return self.fd_gradient(p)

    # arithmetic with gradient propagation
    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if other.dim != self.dim:
                raise DimensionError("scalar fields live on different manifolds")
            return other
        return ScalarField.constant(other, self.dim)

    def __add__(self, other):
        other = self._coerce(other)
        if other.const == 0.0:
            return self
        if self.const == 0.0:
            return other
        a, b = self, other
        grad = (lambda p: a._grad(p) + b._grad(p)) if a._grad and b._grad else None
        return ScalarField(lambda p: a._fn(p) + b._fn(p), grad, dim=a.dim, step=min(a.step, b.step))

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def scale(self, k):
        k = float(k)
        if k == 1.0:
            return self
        if self.const is not None:
            return ScalarField.constant(k * self.const, self.dim)
        a = self
        grad = (lambda p: k * a._grad(p)) if a._grad else None
        return ScalarField(lambda p: k * a._fn(p), grad, dim=a.dim, step=a.step)

    def __mul__(self, other):
        if not isinstance(other, ScalarField):
            return self.scale(other)
        other = self._coerce(other)
        if self.const is not None:
            return other.scale(self.const)
        if other.const is not None:
            return self.scale(other.const)
        a, b = self, other
        grad = None
        if a._grad and b._grad:
            def grad(p):
                return a._fn(p)[:, None] * b._grad(p) + b._fn(p)[:, None] * a._grad(p)
        return ScalarField(lambda p: a._fn(p) * b._fn(p), grad, dim=a.dim, step=min(a.step, b.step))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, ScalarField):
            return self.scale(1.0 / float(other))
        a, b = self, other
        grad = None
        if a._grad and b._grad:
            def grad(p):
                bv = b._fn(p)
                return (a._grad(p) * bv[:, None] - a._fn(p)[:, None] * b._grad(p)) / (bv**2)[:, None]
        return ScalarField(lambda p: a._fn(p) / b._fn(p), grad, dim=a.dim, step=min(a.step, b.step))

    def apply(self, f, fprime=None):
        """Composition ``f(self)``; the gradient is propagated when ``fprime`` is known."""
        a = self
        grad = None
        if fprime is not None and a._grad is not None:
            def grad(p):
                return fprime(a._fn(p))[:, None] * a._grad(p)
        return ScalarField(lambda p: f(a._fn(p)), grad, dim=a.dim, step=a.step)

    def log(self):
        return self.apply(np.log, lambda v: 1.0 / v)

    def with_step(self, step):
        return ScalarField(self._fn, self._grad, dim=self.dim, step=step, name=self.name, const=self.const)

    def without_gradient(self):
        return ScalarField(self._fn, None, dim=self.dim, step=self.step, name=self.name)

    def __repr__(self):
        return f"ScalarField({self.name or '<closure>'}, dim={self.dim})"


def zero_field(dim=4):
    return ScalarField.constant(0.0, dim)


# --------------------------------------------------------------------------
# vector fields


class VectorField:
    """Contravariant vector field; batch evaluator ``fn(points) -> (N, dim)``.

    ``jac(points)`` returns ``(N, dim, dim)`` with ``[..., i, mu] = d_mu X^i``.
    """

    def __init__(self, fn, jac=None, *, dim=4, step=DEFAULT_STEP, cache=False):
        self.dim = dim
        self.step = float(step)
        self._cache = PointCache() if cache else None
        self._raw_fn = fn
        self._jac = jac

    @classmethod
    def from_components(cls, components: Sequence[ScalarField]):
        comps = list(components)
        dim = comps[0].dim
        if len(comps) != dim or any(c.dim != dim for c in comps):
            raise DimensionError("vector field needs one component per coordinate")

        def fn(p):
            return np.stack([c._fn(p) for c in comps], axis=-1)

        jac = None
        if all(c.has_exact_gradient for c in comps):
            def jac(p):
                return np.stack([c._grad(p) for c in comps], axis=-2)

        vf = cls(fn, jac, dim=dim, step=min(c.step for c in comps))
        vf._components = comps
        return vf

    @classmethod
    def coordinate_basis(cls, mu, dim=4):
        return cls.constant(np.eye(dim)[mu])

    @classmethod
    def constant(cls, vec):
        vec = np.asarray(vec, dtype=float)
        return cls.from_components([ScalarField.constant(v, len(vec)) for v in vec])

    def _fn(self, p):
        if self._cache is None:
            return self._raw_fn(p)
        return self._cache.get(p, self._raw_fn)

    @property
    def has_exact_jacobian(self):
        return self._jac is not None

    def __call__(self, points):
        p, lead = as_points(points, self.dim)
        return np.asarray(self._fn(p), dtype=float).reshape(lead + (self.dim,))

    def fd_jacobian(self, points, step=None):
        p, lead = as_points(points, self.dim)
        h = self.step if step is None else float(step)
        n, d = p.shape[0], self.dim
        eye = np.eye(d) * h
        shifted = np.concatenate([p + e for e in eye] + [p - e for e in eye])
        v = np.asarray(self._fn(shifted), dtype=float).reshape(2, d, n, d)
        jac = np.transpose(v[0] - v[1], (1, 2, 0)) / (2.0 * h)
        return jac.reshape(lead + (d, d))

    def jacobian(self, points):
        if self._jac is None:
            return self.fd_jacobian(points)
        p, lead = as_points(points, self.dim)
        return np.asarray(self._jac(p), dtype=float).reshape(lead + (self.dim, self.dim))

    def component(self, i):
        comps = getattr(self, "_components", None)
        if comps is not None:
            return comps[i]
        vf = self
        grad = (lambda p: vf._jac(p)[:, i, :]) if vf._jac is not None else None
        return ScalarField(lambda p: vf._fn(p)[:, i], grad, dim=self.dim, step=self.step)

    def scale(self, f):
        """Pointwise rescaling ``f X`` by a scalar field (or number)."""
        if not isinstance(f, ScalarField):
            f = ScalarField.constant(f, self.dim)
        return VectorField.from_components([f * self.component(i) for i in range(self.dim)])

    def __repr__(self):
        return f"VectorField(dim={self.dim})"


# --------------------------------------------------------------------------
# metric


class Metric:
    """Constant diagonal metric; index raising and lowering."""

    def __init__(self, diagonal):
        self.diagonal = np.asarray(diagonal, dtype=float)
        self.dim = len(self.diagonal)
        if np.any(self.diagonal == 0):
            raise ValueError("metric must be non-degenerate")

    @classmethod
    def minkowski(cls):
        return cls([1.0, -1.0, -1.0, -1.0])

    @classmethod
    def euclidean(cls, dim=3):
        return cls(np.ones(dim))

    def inner(self, a, b):
        return np.sum(self.diagonal * np.asarray(a) * np.asarray(b), axis=-1)

    def lower(self, v):
        return self.diagonal * np.asarray(v)

    def raise_(self, w):
        return np.asarray(w) / self.diagonal


MINKOWSKI = Metric.minkowski()


def default_metric(dim):
    return MINKOWSKI if dim == 4 else Metric.euclidean(dim)


# --------------------------------------------------------------------------
# differential forms


class KForm:
    """Degree-k differential form with components on increasing multi-indices.

    ``exterior`` optionally supplies dω without differencing (a zero-argument
    callable).  It is attached structurally by ``ext_deriv`` (d∘d = 0), by the
    Leibniz rule in ``wedge`` and by linear combinations.
    """

    def __init__(self, degree, components=None, *, dim=4, exterior=None):
        if not 0 <= degree:
            raise DegreeError(f"negative degree {degree}")
        if degree > dim:
            raise DegreeError(f"degree {degree} exceeds manifold dimension {dim}")
        self.degree = degree
        self.dim = dim
        comps = {}
        for idx, field in (components or {}).items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != degree or any(b <= a for a, b in zip(idx, idx[1:])):
                raise ValueError(f"multi-index {idx} is not strictly increasing of length {degree}")
            if idx and (idx[0] < 0 or idx[-1] >= dim):
                raise ValueError(f"multi-index {idx} out of range for dim {dim}")
            if not isinstance(field, ScalarField):
                field = ScalarField.constant(field, dim)
            if field.dim != dim:
                raise DimensionError("component lives on a different manifold")
            if field.const == 0.0:
                continue
            comps[idx] = field
        self.components = comps
        self._exterior = exterior
        self._exterior_value = None

    # constructors
    @classmethod
    def scalar(cls, f: ScalarField):
        return cls(0, {(): f}, dim=f.dim)

    @classmethod
    def zero(cls, degree, dim=4):
        return cls(degree, {}, dim=dim, exterior=(lambda: KForm.zero(degree + 1, dim)) if degree < dim else None)

    @property
    def multi_indices(self):
        return basis(self.dim, self.degree)

    def component(self, idx) -> ScalarField:
        idx = tuple(idx)
        if len(set(idx)) != len(idx):
            return zero_field(self.dim)
        s = perm_sign(idx)
        f = self.components.get(tuple(sorted(idx)))
        if f is None:
            return zero_field(self.dim)
        return f if s > 0 else -f

    def values(self, points):
        """Components at ``points`` as ``(..., C(dim, k))`` in ``multi_indices`` order."""
        p, lead = as_points(points, self.dim)
        out = np.zeros((p.shape[0], len(self.multi_indices)))
        for j, idx in enumerate(self.multi_indices):
            f = self.components.get(idx)
            if f is not None:
                out[:, j] = f._fn(p)
        return out.reshape(lead + (out.shape[-1],))

    def __call__(self, points, *vectors):
        """Evaluate the alternating multilinear map on vectors (arrays ``(..., dim)``)."""
        if len(vectors) != self.degree:
            raise DegreeError(f"{self.degree}-form needs {self.degree} vectors, got {len(vectors)}")
        p, lead = as_points(points, self.dim)
        vals = self.values(p)
        if self.degree == 0:
            return vals[:, 0].reshape(lead)
        vs = [np.broadcast_to(np.asarray(v, dtype=float), p.shape) for v in vectors]
        M = np.stack(vs, axis=-1)  # (N, dim, k)
        total = np.zeros(p.shape[0])
        for j, idx in enumerate(self.multi_indices):
            total += vals[:, j] * np.linalg.det(M[:, list(idx), :])
        return total.reshape(lead)

    def is_zero(self):
        return not self.components

    # linear structure
    def _check(self, other):
        if not isinstance(other, KForm):
            raise TypeError("expected a KForm")
        if other.dim != self.dim:
            raise DimensionError("forms live on different manifolds")
        if other.degree != self.degree:
            raise DegreeError(f"cannot add a {self.degree}-form and a {other.degree}-form")

    def __add__(self, other):
        self._check(other)
        comps = dict(self.components)
        for idx, f in other.components.items():
            comps[idx] = comps[idx] + f if idx in comps else f
        ext = None
        if self._exterior is not None and other._exterior is not None:
            a, b = self, other
            ext = lambda: ext_deriv(a) + ext_deriv(b)  # noqa: E731
        return KForm(self.degree, comps, dim=self.dim, exterior=ext)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, k):
        k = float(k)
        ext = None
        if self._exterior is not None:
            a = self
            ext = lambda: ext_deriv(a).scale(k)  # noqa: E731
        return KForm(self.degree, {i: f.scale(k) for i, f in self.components.items()}, dim=self.dim, exterior=ext)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            return wedge(KForm.scalar(other), self)
        if isinstance(other, KForm):
            return wedge(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def __repr__(self):
        return f"KForm(degree={self.degree}, dim={self.dim}, components={sorted(self.components)})"


def dx(mu, dim=4):
    """Coordinate 1-form dx^mu."""
    return KForm(1, {(mu,): ScalarField.constant(1.0, dim)}, dim=dim, exterior=lambda: KForm.zero(2, dim))


def volume_form(dim=4):
    """dx^0 ∧ ... (spacetime) or dx^1 ∧ dx^2 ∧ dx^3 (slice)."""
    return KForm(dim, {tuple(range(dim)): ScalarField.constant(1.0, dim)}, dim=dim)


def scalar_form(f):
    return KForm.scalar(f)


def _as_form(x, dim):
    if isinstance(x, KForm):
        return x
    if isinstance(x, ScalarField):
        return KForm.scalar(x)
    return KForm.scalar(ScalarField.constant(x, dim))


def wedge(omega, tau, *more):
    """Exterior product; extra arguments are folded left to right."""
    if more:
        return wedge(wedge(omega, tau), *more)
    dim = omega.dim if isinstance(omega, (KForm, ScalarField)) else tau.dim
    omega, tau = _as_form(omega, dim), _as_form(tau, dim)
    if omega.dim != tau.dim:
        raise DimensionError("forms live on different manifolds")
    k, l = omega.degree, tau.degree
    if k + l > dim:
        raise DegreeError(f"wedge of degrees {k} and {l} overflows dimension {dim}")
    comps: dict = {}
    for I, f in omega.components.items():
        for J, g in tau.components.items():
            if set(I) & set(J):
                continue
            K = tuple(sorted(I + J))
            term = f * g
            if perm_sign(I + J) < 0:
                term = -term
            comps[K] = comps[K] + term if K in comps else term
    ext = None
    if omega._has_exterior() and tau._has_exterior():
        sign = -1.0 if k % 2 else 1.0

        def ext():
            left = wedge(ext_deriv(omega), tau) if k + 1 + l <= dim else KForm.zero(k + l + 1, dim)
            right = wedge(omega, ext_deriv(tau)).scale(sign)
            return left + right

        if k + l == dim:
            ext = None
    return KForm(k + l, comps, dim=dim, exterior=ext)


def _has_exterior(self):
    return self.degree == 0 or self._exterior is not None or self.is_zero()


KForm._has_exterior = _has_exterior


def ext_deriv(omega: KForm, structural=True) -> KForm:
    """Exterior derivative.

    With ``structural=True`` known derivatives (d∘d = 0, Leibniz, linearity)
    are used; otherwise every component is differentiated, exactly when a
    component carries an analytic gradient and by central differences if not.
    """
    if isinstance(omega, ScalarField):
        omega = KForm.scalar(omega)
    k, dim = omega.degree, omega.dim
    if k >= dim:
        raise DegreeError(f"exterior derivative of a top-degree ({k}) form on a {dim}-manifold")
    if structural and k > 0:
        if omega.is_zero():
            return KForm.zero(k + 1, dim)
        if omega._exterior is not None:
            if omega._exterior_value is None:
                omega._exterior_value = omega._exterior()
            return omega._exterior_value
    comps: dict = {}
    for I, f in omega.components.items():
        for mu in range(dim):
            if mu in I:
                continue
            K = tuple(sorted((mu,) + I))
            sign = perm_sign((mu,) + I)
            dcomp = _partial(f, mu)
            if sign < 0:
                dcomp = -dcomp
            comps[K] = comps[K] + dcomp if K in comps else dcomp
    closed = (lambda: KForm.zero(k + 2, dim)) if k + 2 <= dim else None
    return KForm(k + 1, comps, dim=dim, exterior=closed)


def _partial(f: ScalarField, mu):
    if f.const is not None:
        return zero_field(f.dim)
    if f._grad is not None:
        return ScalarField(lambda p: f._grad(p)[:, mu], dim=f.dim, step=f.step)
    h = f.step
    e = np.zeros(f.dim)
    e[mu] = h

    def fn(p):
        n = p.shape[0]
        v = f._fn(np.concatenate([p + e, p - e]))
        return (v[:n] - v[n:]) / (2.0 * h)

    return ScalarField(fn, dim=f.dim, step=h)


def interior(X: VectorField, omega: KForm) -> KForm:
    """Contraction i_X ω (zero for 0-forms)."""
    if X.dim != omega.dim:
        raise DimensionError("vector field and form live on different manifolds")
    k, dim = omega.degree, omega.dim
    if k == 0:
        return KForm.zero(0, dim)
    comps: dict = {}
    for I, f in omega.components.items():
        for pos, nu in enumerate(I):
            J = I[:pos] + I[pos + 1:]
            term = X.component(nu) * f
            if pos % 2:
                term = -term
            comps[J] = comps[J] + term if J in comps else term
    return KForm(k - 1, comps, dim=dim)


def lie_derivative(X: VectorField, omega: KForm) -> KForm:
    """Cartan formula L_X = d i_X + i_X d."""
    if isinstance(omega, ScalarField):
        omega = KForm.scalar(omega)
    k, dim = omega.degree, omega.dim
    if k == 0:
        return interior(X, ext_deriv(omega))
    inner = ext_deriv(interior(X, omega), structural=False)
    if k == dim:
        return inner
    return inner + interior(X, ext_deriv(omega))


def top_component(alpha: KForm) -> ScalarField:
    if alpha.degree != alpha.dim:
        raise DegreeError(f"top component needs a {alpha.dim}-form, got degree {alpha.degree}")
    return alpha.component(tuple(range(alpha.dim)))


def sharp(alpha: KForm, metric: Metric | None = None) -> VectorField:
    if alpha.degree != 1:
        raise DegreeError("sharp acts on 1-forms")
    metric = metric or default_metric(alpha.dim)
    comps = [alpha.component((mu,)).scale(1.0 / metric.diagonal[mu]) for mu in range(alpha.dim)]
    return VectorField.from_components(comps)


def flat(X: VectorField, metric: Metric | None = None) -> KForm:
    metric = metric or default_metric(X.dim)
    return KForm(1, {(mu,): X.component(mu).scale(metric.diagonal[mu]) for mu in range(X.dim)}, dim=X.dim)


def divergence(X: VectorField) -> ScalarField:
    """div X with L_X vol = (div X) vol; on the flat chart the trace of the Jacobian."""
    def fn(p):
        return np.trace(X.jacobian(p), axis1=-2, axis2=-1)

    return ScalarField(fn, dim=X.dim, step=X.step)


def pullback_values(omega: KForm, points, jac):
    """Components of F*ω at the preimages, given F's image points and Jacobians.

    ``points`` are the images F(x) with shape ``(N, dim)``; ``jac`` is
    ``(N, dim, m)``.  Returns ``(N, C(m, k))`` for the target chart of
    dimension ``m``.
    """
    p, lead = as_points(points, omega.dim)
    J = np.asarray(jac, dtype=float).reshape(p.shape[0], omega.dim, -1)
    m = J.shape[-1]
    k = omega.degree
    vals = omega.values(p)
    out_basis = basis(m, k)
    out = np.zeros((p.shape[0], len(out_basis)))
    if k == 0:
        out[:, 0] = vals[:, 0]
        return out.reshape(lead + (1,))
    for j_in, I in enumerate(omega.multi_indices):
        if I not in omega.components:
            continue
        rows = J[:, list(I), :]
        for j_out, K in enumerate(out_basis):
            out[:, j_out] += vals[:, j_in] * np.linalg.det(rows[:, :, list(K)])
    return out.reshape(lead + (len(out_basis),))


def embed_slice(points3, x0=0.0):
    """Inclusion of slice points x -> (x0, x)."""
    p = np.asarray(points3, dtype=float)
    t = np.full(p.shape[:-1] + (1,), float(x0))
    return np.concatenate([t, p], axis=-1)


def slice_embedding_jacobian(n):
    """Jacobian of the slice inclusion: (n, 4, 3) with zero time row."""
    J = np.zeros((n, 4, 3))
    J[:, 1:, :] = np.eye(3)
    return J


def restrict_to_slice(f: ScalarField, x0=0.0) -> ScalarField:
    """Restrict a spacetime scalar to the slice x^0 = x0 (3D field)."""
    def fn(p):
        return f._fn(embed_slice(p, x0))

    grad = None
    if f._grad is not None:
        def grad(p):
            return f._grad(embed_slice(p, x0))[:, 1:]

    return ScalarField(fn, grad, dim=3, step=f.step)


def lift_from_slice(f: ScalarField) -> ScalarField:
    """Extend a slice field to spacetime, constant in x^0."""
    def fn(p):
        return f._fn(p[:, 1:])

    grad = None
    if f._grad is not None:
        def grad(p):
            g = f._grad(p[:, 1:])
            return np.concatenate([np.zeros((p.shape[0], 1)), g], axis=1)

    return ScalarField(fn, grad, dim=4, step=f.step)


def linear_combination(forms: Iterable[KForm]) -> KForm:
    forms = list(forms)
    out = forms[0]
    for f in forms[1:]:
        out = out + f
    return out
