"""Time-dependent Riemannian metrics on a chart.

Every function here is vectorised: positions have shape ``(..., d)``, times
are scalars or arrays broadcastable against the leading axes, and matrices
come back with shape ``(..., d, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .expressions import Expression, coordinate_names
from .manifolds import ChartManifold

PD_RTOL = 1e-12
FD_REL_STEP = 1e-5


class MetricError(ValueError):
    """The metric is singular or not positive definite at a queried point."""


@dataclass(frozen=True)
class TangentState:
    """A point ``(t, q, v)`` of R x TQ."""

    t: float
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))
        if self.q.shape != self.v.shape:
            raise ValueError("q and v must have the same shape")
        if not (np.isfinite(self.t) and np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.v))):
            raise ValueError("tangent state has non-finite entries")

    def to_dict(self) -> dict:
        return {"t": self.t, "q": self.q.tolist(), "v": self.v.tolist()}


def batch_shape(t, q) -> tuple:
    return np.broadcast_shapes(np.shape(t), np.shape(q)[:-1])


def fd_step(x) -> np.ndarray:
    return FD_REL_STEP * np.maximum(1.0, np.abs(x))


@dataclass(frozen=True, eq=False)
class MetricField:
    """A time-dependent metric ``a_t(q)`` on ``manifold``.

    ``matrix(t, q)`` returns the metric matrices.  ``dt_matrix`` (time
    derivative) and ``dq_matrix`` (spatial derivatives, indexed
    ``[..., l, i, j] = d_l a_ij``) are optional; when missing they are
    produced by central differences.  ``static`` and ``spatially_constant``
    let the derivative routines skip work that is known to vanish.
    ``closed_form_distance(t, p, q)``, when present, is the exact Riemannian
    distance used to cross-check the shooting solver and as a fast path.
    ``christoffel_symbols(t, q)`` optionally returns ``Gamma[..., k, i, j]``
    directly, skipping the assembly from metric derivatives.
    """

    manifold: ChartManifold
    matrix: Callable
    dt_matrix: Optional[Callable] = None
    dq_matrix: Optional[Callable] = None
    static: bool = False
    spatially_constant: bool = False
    closed_form_distance: Optional[Callable] = None
    christoffel_symbols: Optional[Callable] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.manifold.dimension

    @property
    def mode(self) -> str:
        has_dt = self.static or self.dt_matrix is not None
        has_dq = self.spatially_constant or self.dq_matrix is not None
        return "analytic" if (has_dt and has_dq) else "finite-difference"

    def __call__(self, t, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        a = np.asarray(self.matrix(t, q), dtype=float)
        d = self.dimension
        a = np.broadcast_to(a, batch_shape(t, q) + (d, d))
        return 0.5 * (a + np.swapaxes(a, -1, -2))

    def dt(self, t, q, step=None) -> np.ndarray:
        """Time derivative of the metric matrix."""
        q = np.asarray(q, dtype=float)
        d = self.dimension
        shape = batch_shape(t, q) + (d, d)
        if self.static:
            return np.zeros(shape)
        if self.dt_matrix is not None and step is None:
            out = np.asarray(self.dt_matrix(t, q), dtype=float)
            out = np.broadcast_to(out, shape)
            return 0.5 * (out + np.swapaxes(out, -1, -2))
        t = np.asarray(t, dtype=float)
        h = fd_step(t) if step is None else np.asarray(step, dtype=float)
        hb = h[..., None, None] if np.ndim(h) else h
        return (self(t + h, q) - self(t - h, q)) / (2 * hb)

    def dq(self, t, q, step=None) -> np.ndarray:
        """Spatial derivatives ``[..., l, i, j] = d a_ij / d q^l``."""
        q = np.asarray(q, dtype=float)
        d = self.dimension
        shape = batch_shape(t, q) + (d, d, d)
        if self.spatially_constant:
            return np.zeros(shape)
        if self.dq_matrix is not None and step is None:
            out = np.asarray(self.dq_matrix(t, q), dtype=float)
            out = np.broadcast_to(out, shape)
            return 0.5 * (out + np.swapaxes(out, -1, -2))
        out = np.empty(shape)
        for l in range(d):
            h = fd_step(q[..., l]) if step is None else np.broadcast_to(step, q.shape[:-1])
            e = np.zeros(d)
            e[l] = 1.0
            qp = q + h[..., None] * e
            qm = q - h[..., None] * e
            hb = np.asarray(h)[..., None, None]
            out[..., l, :, :] = (self(t, qp) - self(t, qm)) / (2 * hb)
        return out


def check_positive_definite(a, where=None) -> None:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise MetricError(f"metric has non-finite entries at {_where(where)}")
    eig = np.linalg.eigvalsh(a)
    bad = ~(eig[..., 0] > PD_RTOL * np.abs(eig[..., -1]))
    if np.any(bad):
        raise MetricError(
            f"metric is not positive definite at {_where(where, bad)} "
            f"(eigenvalues {np.atleast_2d(eig)[np.atleast_1d(bad)][0].tolist()})"
        )


def _where(where, bad=None) -> str:
    if where is None:
        return "the queried point"
    t, q = where
    q = np.asarray(q, dtype=float)
    if bad is not None and np.ndim(bad) > 0:
        q = np.broadcast_to(q, np.shape(bad) + q.shape[-1:])[bad][0]
        t = np.broadcast_to(t, np.shape(bad))[bad][0]
    return f"t={float(t)!r}, q={np.asarray(q).tolist()}"


def metric_norm(m: MetricField, s: TangentState) -> float:
    """``||v||_t = sqrt(a_t(q)(v, v))`` at a tangent state."""
    a = m(s.t, s.q)
    check_positive_definite(a, (s.t, s.q))
    return float(np.sqrt(max(s.v @ a @ s.v, 0.0)))


def norms(m: MetricField, t, q, v) -> np.ndarray:
    """Vectorised metric norm of velocities ``v`` at ``(t, q)``."""
    a = m(t, q)
    v = np.asarray(v, dtype=float)
    sq = np.einsum("...i,...ij,...j->...", v, a, v)
    return np.sqrt(np.maximum(sq, 0.0))


def covector_norms(m: MetricField, t, q, w) -> np.ndarray:
    """Norm of covectors ``w`` via the inverse metric."""
    a = m(t, q)
    w = np.asarray(w, dtype=float)
    sq = np.einsum("...i,...i->...", w, np.linalg.solve(a, w[..., None])[..., 0])
    return np.sqrt(np.maximum(sq, 0.0))


def dt_metric_quadratic_form(m: MetricField, s: TangentState) -> float:
    """``(d/dt a_t)(v, v)`` at a tangent state."""
    return float(s.v @ m.dt(s.t, s.q) @ s.v)


def christoffel_from_derivatives(g, dg) -> np.ndarray:
    """Christoffel symbols ``[..., k, i, j]`` from a metric and its derivatives.

    Works for any non-degenerate signature; ``dg[..., l, i, j] = d_l g_ij``.
    """
    a = np.swapaxes(dg, -3, -2)
    lowered = a + np.swapaxes(a, -2, -1) - dg
    ginv = np.linalg.inv(g)
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, lowered)


def christoffel_unchecked(m: MetricField, t, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    d = m.dimension
    if m.spatially_constant:
        return np.zeros(batch_shape(t, q) + (d, d, d))
    if m.christoffel_symbols is not None:
        return np.broadcast_to(m.christoffel_symbols(t, q), batch_shape(t, q) + (d, d, d))
    return christoffel_from_derivatives(m(t, q), m.dq(t, q))


def christoffel(m: MetricField, t, q) -> np.ndarray:
    """Christoffel symbols ``Gamma^k_ij`` of the frozen metric ``a_t``."""
    q = np.asarray(q, dtype=float)
    check_positive_definite(m(t, q), (t, q))
    return christoffel_unchecked(m, t, q)


def geodesic_acceleration(m: MetricField, t, q, v) -> np.ndarray:
    """``-Gamma^k_ij v^i v^j`` for the frozen metric ``a_t``."""
    if m.spatially_constant:
        return np.zeros(np.broadcast_shapes(np.shape(q), np.shape(v)))
    gam = christoffel_unchecked(m, t, q)
    return -np.einsum("...kij,...i,...j->...k", gam, v, v)


# -- catalog -----------------------------------------------------------------

def _identity(t, q, d, scale=None):
    shape = batch_shape(t, q)
    out = np.broadcast_to(np.eye(d), shape + (d, d))
    if scale is None:
        return out
    return np.asarray(scale)[..., None, None] * out


def _flat_distance(manifold, factor):
    def dist(t, p, q):
        dq = manifold.displacement(p, q)
        return np.sqrt(factor(t)) * np.linalg.norm(dq, axis=-1)
    return dist


def great_circle(p, q, radius=1.0):
    """Great-circle distance between polar-chart points ``(theta, phi)``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)

    def unit(x):
        th, ph = x[..., 0], x[..., 1]
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)

    a, b = unit(p), unit(q)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return radius * np.arctan2(cross, dot)


def euclidean(manifold: ChartManifold) -> MetricField:
    d = manifold.dimension
    name = "flat-torus" if manifold.kind == "torus" else "euclidean"
    return MetricField(
        manifold,
        lambda t, q: _identity(t, q, d),
        static=True,
        spatially_constant=True,
        closed_form_distance=_flat_distance(manifold, lambda t: np.ones_like(np.asarray(t, float))),
        name=name,
    )


def conformal_exp(manifold: ChartManifold, rate: float = 1.0) -> MetricField:
    """``exp(2 rate t) * I``."""
    d = manifold.dimension
    factor = lambda t: np.exp(2 * rate * np.asarray(t, dtype=float))
    return MetricField(
        manifold,
        lambda t, q: _identity(t, q, d, factor(t)),
        dt_matrix=lambda t, q: _identity(t, q, d, 2 * rate * factor(t)),
        spatially_constant=True,
        closed_form_distance=_flat_distance(manifold, factor),
        name="conformal-exp",
        params={"rate": rate},
    )


def conformal_poly(manifold: ChartManifold) -> MetricField:
    """``(1 + t^2) * I``."""
    d = manifold.dimension
    factor = lambda t: 1.0 + np.asarray(t, dtype=float) ** 2
    return MetricField(
        manifold,
        lambda t, q: _identity(t, q, d, factor(t)),
        dt_matrix=lambda t, q: _identity(t, q, d, 2 * np.asarray(t, dtype=float)),
        spatially_constant=True,
        closed_form_distance=_flat_distance(manifold, factor),
        name="conformal-poly",
    )


def round_sphere(manifold: ChartManifold | None = None, radius: float = 1.0) -> MetricField:
    """``radius^2 (d theta^2 + sin^2 theta d phi^2)`` on the polar chart."""
    manifold = manifold or ChartManifold.sphere()
    if manifold.kind != "sphere":
        raise ValueError("the sphere metric needs the sphere chart")
    r2 = radius**2

    def matrix(t, q):
        th = np.broadcast_to(q[..., 0], batch_shape(t, q))
        out = np.zeros(th.shape + (2, 2))
        out[..., 0, 0] = r2
        out[..., 1, 1] = r2 * np.sin(th) ** 2
        return out

    def dq_matrix(t, q):
        th = np.broadcast_to(q[..., 0], batch_shape(t, q))
        out = np.zeros(th.shape + (2, 2, 2))
        out[..., 0, 1, 1] = 2 * r2 * np.sin(th) * np.cos(th)
        return out

    def symbols(t, q):
        th = np.broadcast_to(q[..., 0], batch_shape(t, q))
        out = np.zeros(th.shape + (2, 2, 2))
        out[..., 0, 1, 1] = -np.sin(th) * np.cos(th)
        out[..., 1, 0, 1] = out[..., 1, 1, 0] = np.cos(th) / np.sin(th)
        return out

    return MetricField(
        manifold,
        matrix,
        dq_matrix=dq_matrix,
        christoffel_symbols=symbols,
        static=True,
        closed_form_distance=lambda t, p, q: great_circle(p, q, radius)
        * np.ones(np.shape(t)),
        name="sphere",
        params={"radius": radius},
    )


def from_expressions(manifold: ChartManifold, entries, params=None,
                     analytic: bool = False) -> MetricField:
    """Metric whose entries are expression-language strings in ``t, q1..qd``.

    ``entries`` is a full ``d x d`` nested list (it is symmetrised).  With
    ``analytic=True`` the derivatives are taken symbolically; otherwise the
    finite-difference path is used.
    """
    d = manifold.dimension
    names = ["t"] + coordinate_names("q", d)
    if len(entries) != d or any(len(row) != d for row in entries):
        raise ValueError(f"metric entries must be a {d}x{d} matrix")
    exprs = [[Expression.parse(e, names, params) for e in row] for row in entries]

    def assemble(table):
        def fn(t, q):
            q = np.asarray(q, dtype=float)
            args = [t] + [q[..., i] for i in range(d)]
            return np.stack([np.stack([e(*args) for e in row], axis=-1) for row in table], axis=-2)
        return fn

    static = all(not e.depends_on("t") for row in exprs for e in row)
    constant = all(not any(e.depends_on(n) for n in names[1:]) for row in exprs for e in row)
    dt_matrix = dq_matrix = None
    if analytic:
        dt_matrix = assemble([[e.diff("t") for e in row] for row in exprs])
        partials = [assemble([[e.diff(names[l + 1]) for e in row] for row in exprs])
                    for l in range(d)]
        dq_matrix = lambda t, q: np.stack([f(t, q) for f in partials], axis=-3)
    return MetricField(
        manifold,
        assemble(exprs),
        dt_matrix=dt_matrix,
        dq_matrix=dq_matrix,
        static=static,
        spatially_constant=constant,
        name="custom",
        params=dict(params or {}),
    )


CATALOG = ("euclidean", "conformal-exp", "conformal-poly", "sphere", "flat-torus", "custom")


def catalog(name: str, manifold: ChartManifold, params=None, entries=None,
            analytic: bool = False) -> MetricField:
    """Build a metric by catalog name."""
    params = dict(params or {})
    if name == "euclidean":
        return euclidean(manifold)
    if name == "flat-torus":
        if manifold.kind != "torus":
            raise ValueError("flat-torus metric needs a torus manifold")
        return euclidean(manifold)
    if name == "conformal-exp":
        return conformal_exp(manifold, float(params.get("rate", 1.0)))
    if name == "conformal-poly":
        return conformal_poly(manifold)
    if name == "sphere":
        return round_sphere(manifold, float(params.get("radius", 1.0)))
    if name == "custom":
        if entries is None:
            raise ValueError("custom metric needs 'entries'")
        return from_expressions(manifold, entries, params, analytic)
    raise ValueError(f"unknown metric {name!r}; choose from {', '.join(CATALOG)}")
