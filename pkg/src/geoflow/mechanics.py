"""Euler-Lagrange forces for ``L = 1/2 a_t(v, v) + b_t(v) - V(t, q)``.

The Euler-Lagrange equation is written as a covariant second-order flow
for the time-dependent metric ``a_t``:

    a_t(., D qdot / dt) = F_t(., v) - (d_t a_t)(., v) - (d_t b_t + d_q V)

with ``F_t = d b_t`` the spatial exterior derivative of ``b_t``.  The
resulting :class:`~geoflow.flows.ForceField` carries ``F_t`` as its
two-form part so the force-growth check can discount it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bounds import (CertificationBundle, GrowthFunction, Sampler, check_covector_growth,
                     check_metric_growth, quadrature_nodes)
from .expressions import Expression, coordinate_names
from .flows import ForceField, Trajectory
from .metric import MetricField, TangentState, batch_shape, fd_step


def _fd_time(fn, t, q):
    t = np.asarray(t, dtype=float)
    h = fd_step(t)
    hb = h[..., None] if np.ndim(h) else h
    out_p, out_m = np.asarray(fn(t + h, q)), np.asarray(fn(t - h, q))
    if out_p.ndim > np.ndim(t):
        return (out_p - out_m) / hb
    return (out_p - out_m) / h


def _fd_space(fn, t, q):
    """``[..., l, *out] = d fn / d q^l`` by central differences."""
    q = np.asarray(q, dtype=float)
    d = q.shape[-1]
    parts = []
    for l in range(d):
        h = fd_step(q[..., l])
        e = np.zeros(d)
        e[l] = 1.0
        fp = np.asarray(fn(t, q + h[..., None] * e), dtype=float)
        fm = np.asarray(fn(t, q - h[..., None] * e), dtype=float)
        hb = h.reshape(h.shape + (1,) * (fp.ndim - h.ndim))
        parts.append((fp - fm) / (2 * hb))
    return np.stack(parts, axis=q.ndim - 1)


@dataclass(frozen=True, eq=False)
class LagrangianSystem:
    """``(a_t, b_t, V)`` with optional analytic derivatives.

    ``one_form(t, q)`` returns ``b`` with shape ``(..., d)``;
    ``potential(t, q)`` returns ``V`` with shape ``(...)``.  Missing
    derivatives (``db_dq[..., l, j] = d_l b_j``, ``db_dt``, ``dV_dq``,
    ``dV_dt``) come from central differences.  ``None`` for ``one_form`` or
    ``potential`` means identically zero.
    """

    metric: MetricField
    one_form: Optional[Callable] = None
    potential: Optional[Callable] = None
    db_dq: Optional[Callable] = None
    db_dt: Optional[Callable] = None
    dV_dq: Optional[Callable] = None
    dV_dt: Optional[Callable] = None
    name: str = "lagrangian"

    @property
    def dimension(self) -> int:
        return self.metric.dimension

    @property
    def analytic(self) -> bool:
        b_ok = self.one_form is None or (self.db_dq is not None and self.db_dt is not None)
        v_ok = self.potential is None or (self.dV_dq is not None and self.dV_dt is not None)
        return self.metric.mode == "analytic" and b_ok and v_ok

    def _shape(self, t, q):
        return batch_shape(t, np.asarray(q, dtype=float))

    def b(self, t, q):
        d = self.dimension
        if self.one_form is None:
            return np.zeros(self._shape(t, q) + (d,))
        return np.broadcast_to(np.asarray(self.one_form(t, q), float), self._shape(t, q) + (d,))

    def V(self, t, q):
        if self.potential is None:
            return np.zeros(self._shape(t, q))
        return np.broadcast_to(np.asarray(self.potential(t, q), float), self._shape(t, q))

    def grad_b(self, t, q):
        d = self.dimension
        shape = self._shape(t, q) + (d, d)
        if self.one_form is None:
            return np.zeros(shape)
        fn = self.db_dq or (lambda t, q: _fd_space(self.b, t, q))
        return np.broadcast_to(np.asarray(fn(t, q), dtype=float), shape)

    def dt_b(self, t, q):
        shape = self._shape(t, q) + (self.dimension,)
        if self.one_form is None:
            return np.zeros(shape)
        fn = self.db_dt or (lambda t, q: _fd_time(self.b, t, q))
        return np.broadcast_to(np.asarray(fn(t, q), dtype=float), shape)

    def grad_V(self, t, q):
        shape = self._shape(t, q) + (self.dimension,)
        if self.potential is None:
            return np.zeros(shape)
        fn = self.dV_dq or (lambda t, q: _fd_space(self.V, t, q))
        return np.broadcast_to(np.asarray(fn(t, q), dtype=float), shape)

    def dt_V(self, t, q):
        shape = self._shape(t, q)
        if self.potential is None:
            return np.zeros(shape)
        fn = self.dV_dt or (lambda t, q: _fd_time(self.V, t, q))
        return np.broadcast_to(np.asarray(fn(t, q), dtype=float), shape)

    def lagrangian(self, t, q, v):
        v = np.asarray(v, dtype=float)
        a = self.metric(t, q)
        kinetic = 0.5 * np.einsum("...i,...ij,...j->...", v, a, v)
        return kinetic + np.einsum("...i,...i->...", self.b(t, q), v) - self.V(t, q)


def two_form(sys: LagrangianSystem, t, q) -> np.ndarray:
    """``F_ij = d_i b_j - d_j b_i`` (space only); antisymmetric by construction."""
    db = sys.grad_b(t, q)
    return db - np.swapaxes(db, -1, -2)


def el_force(sys: LagrangianSystem, s: TangentState) -> np.ndarray:
    """Euler-Lagrange force ``f^k`` at one tangent state."""
    return el_force_field(sys)(s.t, s.q, s.v)


def el_force_field(sys: LagrangianSystem) -> ForceField:
    """The Euler-Lagrange force as a :class:`ForceField` with its two-form part."""
    m = sys.metric

    def total(t, q, v):
        v = np.asarray(v, dtype=float)
        F = two_form(sys, t, q)
        lowered = (np.einsum("...ij,...j->...i", F, v)
                   - np.einsum("...ij,...j->...i", m.dt(t, q), v)
                   - sys.dt_b(t, q) - sys.grad_V(t, q))
        return np.linalg.solve(m(t, q), lowered[..., None])[..., 0]

    return ForceField(total, two_form_part=lambda t, q: two_form(sys, t, q))


def certify_lagrangian(sys: LagrangianSystem, basepoint, g, window: float,
                       sampler: Sampler | None = None) -> CertificationBundle:
    """Metric growth (``1 + rho^2`` form) and the bounds on ``d_t b`` and ``d_q V``.

    The covector bounds are ``||w||_t <= g(1 + rho^2)(1 + rho)`` with the
    norm taken through the inverse metric.  Passing ``g="fitted"`` first
    runs every check with ``g = 1`` and then certifies with the constant
    ``g`` equal to the largest fitted constant, which is how compact
    configuration spaces are handled.
    """
    m = sys.metric
    fitted = isinstance(g, str)
    if fitted:
        if g != "fitted":
            raise ValueError("g must be a GrowthFunction or 'fitted'")
        probe = certify_lagrangian(sys, basepoint, GrowthFunction(), window, sampler)
        c = max(r.fitted_constant for r in probe.reports)
        g = GrowthFunction("constant", c)
    reports = (
        check_metric_growth(m, basepoint, g, window, "R2", sampler),
        check_covector_growth(m, basepoint, sys.dt_b, g, window, "one-form-time-derivative",
                              sampler),
        check_covector_growth(m, basepoint, sys.grad_V, g, window, "potential-gradient",
                              sampler),
    )
    if fitted:
        for r in reports:
            r.details["fitted_growth"] = g.to_dict()
    return CertificationBundle("lagrangian", reports)


def action(sys: LagrangianSystem, traj: Trajectory) -> float:
    """``int L(t, q, qdot) dt`` along a trajectory (diagnostic only)."""
    t, q, v, w, _ = quadrature_nodes(traj)
    sign = 1.0 if traj.t[-1] >= traj.t[0] else -1.0
    return float(sign * np.sum(w * sys.lagrangian(t, q, v)))


def _vector_fn(exprs, d):
    def fn(t, q):
        q = np.asarray(q, dtype=float)
        args = [t] + [q[..., i] for i in range(d)]
        return np.stack([e(*args) for e in exprs], axis=-1)
    return fn


def _scalar_fn(expr, d):
    def fn(t, q):
        q = np.asarray(q, dtype=float)
        return expr(t, *(q[..., i] for i in range(d)))
    return fn


def from_expressions(metric: MetricField, one_form=None, potential=None, params=None,
                     analytic: bool = True, name: str = "lagrangian") -> LagrangianSystem:
    """Lagrangian system from expression strings in ``t, q1..qd``.

    ``one_form`` is a list of ``d`` component strings (or None), ``potential``
    a single string (or None).  With ``analytic`` the derivatives are
    symbolic; otherwise they come from central differences.
    """
    d = metric.dimension
    names = ["t"] + coordinate_names("q", d)
    kwargs = {}
    if one_form is not None:
        if len(one_form) != d:
            raise ValueError(f"one_form needs {d} components")
        bs = [Expression.parse(e, names, params) for e in one_form]
        kwargs["one_form"] = _vector_fn(bs, d)
        if analytic:
            kwargs["db_dt"] = _vector_fn([e.diff("t") for e in bs], d)
            rows = [_vector_fn([e.diff(names[l + 1]) for e in bs], d) for l in range(d)]
            kwargs["db_dq"] = lambda t, q: np.stack([r(t, q) for r in rows], axis=-2)
    if potential is not None:
        V = Expression.parse(potential, names, params)
        kwargs["potential"] = _scalar_fn(V, d)
        if analytic:
            kwargs["dV_dt"] = _scalar_fn(V.diff("t"), d)
            kwargs["dV_dq"] = _vector_fn([V.diff(n) for n in names[1:]], d)
    return LagrangianSystem(metric, name=name, **kwargs)
