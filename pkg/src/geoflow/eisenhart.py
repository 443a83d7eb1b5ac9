"""Lorentzian lift of a Lagrangian system to ``M = T x Q x R``.

Coordinates are ``x = (t, q^1..q^d, y)`` and the metric is

    g = a_t - dt (x) (dy - b_t) - (dy - b_t) (x) dt - 2 V dt^2,

i.e. ``g_tt = -2V``, ``g_ti = b_i``, ``g_ty = -1``, ``g_ij = a_ij`` and
``g_iy = g_yy = 0``.  Nothing depends on ``y``, ``n = d/dy`` is a
covariantly constant null field, and geodesics with ``dt/dlambda != 0``
project to Euler-Lagrange solutions once reparametrised by ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .flows import Status, _drive, integrate_second_order
from .mechanics import LagrangianSystem, el_force_field
from .metric import christoffel_from_derivatives, fd_step

NULL_TOL_ANALYTIC = 1e-8
NULL_TOL_FD = 1e-5


class LiftError(ValueError):
    """The assembled metric is not Lorentzian at some point."""


class NonGraphError(ValueError):
    """``dt/dlambda`` vanishes or changes sign, so the run is not a graph over t."""


@dataclass(frozen=True, eq=False)
class LiftedMetric:
    """The lifted metric of ``base`` in coordinates ``(t, q, y)``."""

    base: LagrangianSystem

    @property
    def dimension(self) -> int:
        return self.base.dimension + 2

    @property
    def analytic(self) -> bool:
        return self.base.analytic

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = self.base.dimension
        t, q = x[..., 0], x[..., 1:1 + d]
        out = np.zeros(x.shape[:-1] + (d + 2, d + 2))
        out[..., 0, 0] = -2.0 * self.base.V(t, q)
        b = self.base.b(t, q)
        out[..., 0, 1:1 + d] = b
        out[..., 1:1 + d, 0] = b
        out[..., 0, -1] = out[..., -1, 0] = -1.0
        out[..., 1:1 + d, 1:1 + d] = self.base.metric(t, q)
        return out

    def derivatives(self, x, finite_difference: bool | None = None) -> np.ndarray:
        """``[..., mu, alpha, beta] = d_mu g_{alpha beta}``.

        Uses the base system's derivative providers unless
        ``finite_difference`` is set, in which case every direction
        (including ``y``) is differenced on the assembled matrix.
        """
        x = np.asarray(x, dtype=float)
        D = self.dimension
        if finite_difference is None:
            finite_difference = not self.analytic
        if finite_difference:
            parts = []
            for mu in range(D):
                h = fd_step(x[..., mu])
                e = np.zeros(D)
                e[mu] = 1.0
                hb = np.asarray(h)[..., None, None]
                parts.append((self(x + h[..., None] * e) - self(x - h[..., None] * e)) / (2 * hb))
            return np.stack(parts, axis=-3)
        d = self.base.dimension
        sys = self.base
        t, q = x[..., 0], x[..., 1:1 + d]
        out = np.zeros(x.shape[:-1] + (D, D, D))
        # time direction
        out[..., 0, 0, 0] = -2.0 * sys.dt_V(t, q)
        dtb = sys.dt_b(t, q)
        out[..., 0, 0, 1:1 + d] = dtb
        out[..., 0, 1:1 + d, 0] = dtb
        out[..., 0, 1:1 + d, 1:1 + d] = sys.metric.dt(t, q)
        # spatial directions
        gV = sys.grad_V(t, q)
        gb = sys.grad_b(t, q)
        da = sys.metric.dq(t, q)
        for l in range(d):
            out[..., 1 + l, 0, 0] = -2.0 * gV[..., l]
            out[..., 1 + l, 0, 1:1 + d] = gb[..., l, :]
            out[..., 1 + l, 1:1 + d, 0] = gb[..., l, :]
            out[..., 1 + l, 1:1 + d, 1:1 + d] = da[..., l, :, :]
        return out

    def christoffel(self, x, finite_difference: bool | None = None) -> np.ndarray:
        return christoffel_from_derivatives(self(x), self.derivatives(x, finite_difference))

    def inner(self, x, u, w) -> np.ndarray:
        return np.einsum("...i,...ij,...j->...", u, self(x), w)

    def null_field(self) -> np.ndarray:
        n = np.zeros(self.dimension)
        n[-1] = 1.0
        return n

    def check_signature(self, x) -> None:
        """Exactly one negative eigenvalue and no (near-)zero ones."""
        g = self(x)
        ev = np.linalg.eigvalsh(g)
        scale = np.max(np.abs(ev), axis=-1, keepdims=True)
        tiny = np.abs(ev) <= 1e-12 * scale
        neg = np.sum(ev < 0, axis=-1)
        bad = np.any(tiny, axis=-1) | (neg != 1)
        if np.any(bad):
            where = np.asarray(x)[bad][0] if np.ndim(x) > 1 else np.asarray(x)
            raise LiftError(f"lifted metric is not Lorentzian at x={where.tolist()}")


def lift_metric(sys: LagrangianSystem, probe_points=None) -> LiftedMetric:
    """Assemble the lift and verify its signature and ``y``-independence."""
    lm = LiftedMetric(sys)
    d = sys.dimension
    if probe_points is None:
        q0 = sys.metric.manifold.default_basepoint()
        probe_points = np.array([np.concatenate([[t], q0, [y]])
                                 for t in (-1.0, 0.0, 1.0) for y in (-1.0, 0.0, 3.0)])
    probe_points = np.atleast_2d(np.asarray(probe_points, dtype=float))
    if probe_points.shape[-1] != d + 2:
        raise ValueError(f"probe points need {d + 2} coordinates")
    lm.check_signature(probe_points)
    shifted = probe_points.copy()
    shifted[:, -1] += 1.2345
    if not np.array_equal(lm(probe_points), lm(shifted)):
        raise LiftError("lifted metric depends on y")
    return lm


def null_y_velocity(lm: LiftedMetric, t, q, v, tdot: float) -> float:
    """``dy/dlambda`` making ``u = (tdot, v, .)`` null.

    ``v`` is ``dq/dlambda``.  Solves ``g(u, u) = 0``, which is linear in
    ``dy/dlambda`` because ``g_yy = 0``.
    """
    if tdot == 0:
        raise NonGraphError("dt/dlambda must be nonzero")
    sys = lm.base
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    av = float(v @ sys.metric(t, q) @ v)
    bv = float(sys.b(t, q) @ v)
    V = float(sys.V(t, q))
    return (av + 2 * bv * tdot - 2 * V * tdot**2) / (2 * tdot)


def initial_lift_velocity(lm: LiftedMetric, t, q, v, tdot: float = 1.0,
                          kind: str = "null", interval: float = 1.0) -> np.ndarray:
    """Lift velocity over the E-L data ``(t, q, dq/dt = v)``.

    ``kind="null"`` picks ``dy/dlambda`` so that ``g(u, u) = 0``;
    ``"spacelike"``/``"timelike"`` shift it so that ``g(u, u) = +-interval``.
    """
    v = np.asarray(v, dtype=float) * tdot
    ydot = null_y_velocity(lm, t, q, v, tdot)
    if kind != "null":
        sign = 1.0 if kind == "spacelike" else -1.0
        if kind not in ("spacelike", "timelike"):
            raise ValueError("kind must be null, spacelike or timelike")
        # g(u, u) changes by -2 tdot * delta when dy/dlambda changes by delta
        ydot -= sign * interval / (2 * tdot)
    return np.concatenate([[tdot], v, [ydot]])


@dataclass(frozen=True, eq=False)
class LiftRun:
    """Accepted states of a lifted geodesic with its conserved quantities."""

    lam: np.ndarray
    x: np.ndarray
    u: np.ndarray
    accel: np.ndarray
    g_uu: np.ndarray
    g_nu: np.ndarray
    status: Status
    lam_star: Optional[float] = None
    stats: dict = field(default_factory=dict)

    @property
    def causal_type(self) -> str:
        scale = max(1.0, float(np.max(np.abs(self.u[0]))) ** 2)
        val = float(self.g_uu[0])
        if abs(val) <= 1e-10 * scale:
            return "null"
        return "spacelike" if val > 0 else "timelike"

    def drift(self) -> dict:
        span = max(abs(float(self.lam[-1] - self.lam[0])), 1.0)
        return {
            "g_uu": float(np.max(np.abs(self.g_uu - self.g_uu[0]))),
            "g_nu": float(np.max(np.abs(self.g_nu - self.g_nu[0]))),
            "g_uu_per_unit": float(np.max(np.abs(self.g_uu - self.g_uu[0]))) / span,
            "g_nu_per_unit": float(np.max(np.abs(self.g_nu - self.g_nu[0]))) / span,
        }

    def to_csv(self, path=None) -> str:
        d = self.x.shape[1] - 2
        header = (["lambda", "t"] + [f"q_{i + 1}" for i in range(d)] + ["y", "u_t"]
                  + [f"u_q_{i + 1}" for i in range(d)] + ["u_y", "g_uu", "g_nu"])
        rows = np.column_stack([self.lam, self.x, self.u, self.g_uu, self.g_nu])
        lines = [",".join(header)] + [",".join(format(v, ".17g") for v in r) for r in rows]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def lift_rhs(lm: LiftedMetric):
    D = lm.dimension

    def rhs(lam, y):
        x, u = y[:D], y[D:]
        gam = lm.christoffel(x)
        return np.concatenate([u, -np.einsum("kij,i,j->k", gam, u, u)])

    return rhs


def lift_geodesic(lm: LiftedMetric, x0, u0, horizon: float, lam0: float = 0.0,
                  rtol: float = 1e-10, atol: float = 1e-10) -> LiftRun:
    """Integrate the geodesic equation of the lifted metric for affine length ``horizon``."""
    D = lm.dimension
    d = D - 2
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    if x0.shape != (D,) or u0.shape != (D,):
        raise ValueError(f"lift states need {D} coordinates")
    if u0[0] == 0:
        raise NonGraphError("initial dt/dlambda is zero; the projection is not a graph over t")
    man = lm.base.metric.manifold
    man.check(x0[1:1 + d])
    lm.check_signature(x0)
    rhs = lift_rhs(lm)

    def split(lam, y):
        return y[:D].copy(), y[D:].copy()

    def valid(lam, y):
        return bool(man.is_valid(y[1:1 + d]))

    traj = _drive(rhs, np.concatenate([x0, u0]), float(lam0), float(horizon), "forward", split,
                  valid, lambda *a: 1.0, rtol, atol, math.inf, 1_000_000, lambda x: x)
    x, u = traj.q, traj.v
    accel = np.array([rhs(l, np.concatenate([xi, ui]))[D:] for l, xi, ui in zip(traj.t, x, u)])
    g_uu = lm.inner(x, u, u)
    g_nu = np.einsum("...j,...j->...", lm(x)[..., -1, :], u)
    stats = {k: v for k, v in traj.stats.items() if k != "max_E"}
    return LiftRun(traj.t, x, u, accel, g_uu, g_nu, traj.status, traj.t_star, stats)


def _hermite(h, s, y0, y1, d0, d1):
    h00, h10 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s
    h01, h11 = -2 * s**3 + 3 * s**2, s**3 - s**2
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def _interpolate(run: LiftRun, lam):
    """Cubic Hermite values of ``x`` and ``u`` at affine parameters ``lam``."""
    k = np.clip(np.searchsorted(run.lam, lam, side="right") - 1, 0, len(run.lam) - 2)
    h = run.lam[k + 1] - run.lam[k]
    s = ((lam - run.lam[k]) / h)[:, None]
    hb = h[:, None]
    x = _hermite(hb, s, run.x[k], run.x[k + 1], run.u[k], run.u[k + 1])
    u = _hermite(hb, s, run.u[k], run.u[k + 1], run.accel[k], run.accel[k + 1])
    return x, u


def _lam_at_times(run: LiftRun, times):
    """Invert ``t(lambda)`` by bisection on the Hermite interpolant, then Newton."""
    t_s = run.x[:, 0]
    k = np.clip(np.searchsorted(t_s, times, side="right") - 1, 0, len(t_s) - 2)
    lo, hi = run.lam[k], run.lam[k + 1]
    lam = lo + (hi - lo) * (times - t_s[k]) / (t_s[k + 1] - t_s[k])
    for _ in range(8):
        x, u = _interpolate(run, lam)
        lam = np.clip(lam - (x[:, 0] - times) / u[:, 0], lo, hi)
    return lam


def project_and_compare(lm: LiftedMetric, run: LiftRun, tolerance: float = 1e-6) -> dict:
    """Compare the projected lift run with a direct Euler-Lagrange integration.

    The lift run is reparametrised by ``t`` (``dt/dlambda`` must stay
    positive) and ``(q(t), dq/dt)`` is compared at the accepted times of the
    direct run, which starts from the same data.
    """
    d = lm.base.dimension
    tdot = run.u[:, 0]
    if not np.all(tdot > 0):
        raise NonGraphError(f"dt/dlambda is not positive along the run (min {tdot.min()!r})")
    t0, t1 = float(run.x[0, 0]), float(run.x[-1, 0])
    q0 = run.x[0, 1:1 + d]
    v0 = run.u[0, 1:1 + d] / tdot[0]
    direct = integrate_second_order(lm.base.metric, el_force_field(lm.base), t0, q0, v0,
                                    t1 - t0, energy_method="closed"
                                    if lm.base.metric.closed_form_distance else "auto")
    times = direct.t
    lam = _lam_at_times(run, times)
    x, u = _interpolate(run, lam)
    q_lift = x[:, 1:1 + d]
    v_lift = u[:, 1:1 + d] / u[:, :1]
    man = lm.base.metric.manifold
    dev_q = np.max(np.abs(man.displacement(direct.q, man.canonicalize(q_lift))))
    dev_v = np.max(np.abs(direct.v - v_lift))
    deviation = float(max(dev_q, dev_v))
    return {
        "matched": bool(deviation <= tolerance),
        "max_deviation": deviation,
        "max_position_deviation": float(dev_q),
        "max_velocity_deviation": float(dev_v),
        "tolerance": tolerance,
        "t_range": [t0, t1],
        "compared_points": int(len(times)),
        "direct_status": direct.status.value,
    }


def check_null_constancy(lm: LiftedMetric, points) -> dict:
    """``max |nabla_mu n^nu| = max |Gamma^nu_{mu y}|`` over sample points ``(t, q, y)``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    gam = lm.christoffel(points)
    worst = float(np.max(np.abs(gam[..., :, :, -1])))
    analytic = lm.analytic
    tol = NULL_TOL_ANALYTIC if analytic else NULL_TOL_FD
    return {"max_nabla_n": worst, "pass": bool(worst <= tol), "tolerance": tol,
            "mode": "analytic" if analytic else "finite-difference",
            "samples": int(points.shape[0])}


def sample_lift_points(lm: LiftedMetric, count: int, seed: int = 0, t_range=(-1.0, 1.0),
                       q_halfwidth: float = 2.0, y_range=(-5.0, 5.0)) -> np.ndarray:
    """Uniform ``(t, q, y)`` samples around the base basepoint."""
    rng = np.random.default_rng(seed)
    man = lm.base.metric.manifold
    d = man.dimension
    p = man.default_basepoint()
    if man.kind == "sphere":
        q = np.column_stack([rng.uniform(0.2, math.pi - 0.2, count),
                             rng.uniform(0, 2 * math.pi, count)])
    else:
        q = man.canonicalize(p + rng.uniform(-q_halfwidth, q_halfwidth, (count, d)))
    t = rng.uniform(*t_range, count)
    y = rng.uniform(*y_range, count)
    return np.column_stack([t, q, y])
