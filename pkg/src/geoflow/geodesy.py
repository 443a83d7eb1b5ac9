"""Exponential map, Riemannian distance by shooting, and the proper functions.

The distance ``rho_t(p, q)`` of the frozen metric ``a_t`` is found by
solving ``exp_p^t(w) = q`` for ``w`` with Newton's method on the endpoint
residual, started from the straight chart line ``q - p`` and a fixed set of
perturbations of it.  The smallest ``||w||_t`` among converged starts is
the distance.  All problems in a call are integrated together, one step
size per problem, so large sample sets stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .integrators import solve_batch
from .manifolds import ChartError
from .metric import MetricField, TangentState, geodesic_acceleration, norms

SHOOT_TOL = 1e-10
IVP_TOL = 1e-10
MAX_NEWTON = 50
N_PERTURB = 8
MAX_HALVINGS = 6
MAX_IVP_STEPS = 20_000
COARSE_IVP_TOL = 1e-7
COARSE_SWITCH = 1e-4
PATIENCE = 4
STALL = 15
CONTINUATION_STAGES = 4
PERTURB_SCALE = 0.25


class ChartExitError(ChartError):
    """A geodesic left the chart before the end of its parameter interval."""

    def __init__(self, message, parameter):
        super().__init__(message)
        self.parameter = parameter


class DistanceError(RuntimeError):
    """Shooting did not converge where a distance was required."""


@dataclass(frozen=True)
class DistanceResult:
    value: float
    initial_velocity: np.ndarray
    converged: bool
    residual: float
    closed_form: Optional[float] = None

    @property
    def cross_check_error(self) -> Optional[float]:
        if self.closed_form is None or not self.converged:
            return None
        return abs(self.value - self.closed_form)


def _geodesic_rhs(m: MetricField):
    d = m.dimension

    def rhs(lam, y):
        q, v, t = y[..., :d], y[..., d:2 * d], y[..., 2 * d]
        acc = geodesic_acceleration(m, t, q, v)
        return np.concatenate([v, acc, np.zeros_like(t)[..., None]], axis=-1)

    return rhs


def _pack(t, q, w):
    t = np.asarray(t, dtype=float)
    return np.concatenate([q, w, t[..., None]], axis=-1)


def _valid(m: MetricField):
    d = m.dimension
    return lambda y: m.manifold.is_valid(y[..., :d])


def exp_map_batch(m: MetricField, t, p, w, tol=IVP_TOL):
    """Vectorised exponential map. Returns ``(endpoints, ok, exit_parameter)``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    n = max(p.shape[0], w.shape[0])
    p = np.broadcast_to(p, (n, m.dimension))
    w = np.broadcast_to(w, (n, m.dimension))
    t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    y, ok, lam = solve_batch(_geodesic_rhs(m), _pack(t, p, w), 0.0, 1.0,
                             rtol=tol, atol=tol, valid=_valid(m))
    return y[:, :m.dimension], ok, lam


def exp_map(m: MetricField, t: float, p, w, tol=IVP_TOL) -> np.ndarray:
    """Endpoint of the geodesic of ``a_t`` from ``p`` with initial velocity ``w``.

    The geodesic equation is integrated over the unit parameter interval.
    Raises :class:`ChartExitError` (carrying the exit parameter) if the
    geodesic leaves the chart.
    """
    p = m.manifold.check(p)
    q, ok, lam = exp_map_batch(m, t, p, w, tol)
    if not ok[0]:
        raise ChartExitError(f"geodesic from {p.tolist()} left the chart at parameter "
                             f"{lam[0]!r}", float(lam[0]))
    return q[0]


def perturbation_directions(d: int, seed: int = 0, count: int = N_PERTURB) -> np.ndarray:
    """Fixed unit-scale perturbations shared by every shooting problem."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((count, d))


def _integrate_endpoints(m, rhs, y0, coarse):
    """Geodesic endpoints, using a loose tolerance for rows flagged ``coarse``."""
    y = np.empty_like(y0)
    ok = np.zeros(y0.shape[0], dtype=bool)
    for flag, tol in ((True, COARSE_IVP_TOL), (False, IVP_TOL)):
        rows = np.flatnonzero(coarse == flag)
        if rows.size:
            y[rows], ok[rows], _ = solve_batch(rhs, y0[rows], 0.0, 1.0, rtol=tol, atol=tol,
                                               valid=_valid(m), max_steps=MAX_IVP_STEPS)
    return y, ok


def _shoot(m, t, p, target, starts, tol, max_iter, group=None):
    """Damped Newton shooting for flattened problems.

    ``t`` (N,), ``p`` (N, d), ``target`` (N, d), ``starts`` (N, d).
    A Newton step is halved until the endpoint residual decreases; a start
    is abandoned after ``MAX_HALVINGS`` halvings, after ``STALL`` iterations
    without halving its residual, or when ``|w|`` wanders far beyond the
    chart distance.  Starts sharing a ``group`` label solve
    the same problem: once one converges the others get ``PATIENCE`` more
    iterations.  Iterates far from convergence are integrated with a loose
    tolerance.  Returns ``(w, converged, residual)``.
    """
    d = m.dimension
    n = p.shape[0]
    w = starts.copy()
    converged = np.zeros(n, dtype=bool)
    residual = np.full(n, np.inf)
    base_w = w.copy()
    step = np.zeros((n, d))
    damping = np.ones(n)
    waiting = np.zeros(n, dtype=int)
    stalled = np.zeros(n, dtype=int)
    reference = np.full(n, np.inf)
    active = np.arange(n)
    rhs = _geodesic_rhs(m)
    eye = np.eye(d)
    scale = np.maximum(1.0, np.linalg.norm(target, axis=-1))
    # starts wandering this far from the chart line are abandoned
    limit = 10.0 * np.linalg.norm(target - p, axis=-1) + 1.0
    for _ in range(max_iter + 1):
        if active.size == 0:
            break
        wa = w[active]
        eps = 1e-7 * np.maximum(1.0, np.linalg.norm(wa, axis=-1))
        cols = wa[:, None, :] + eps[:, None, None] * eye[None]
        ws = np.concatenate([wa[:, None, :], cols], axis=1)  # (m, d+1, d)
        pa = np.broadcast_to(p[active][:, None, :], ws.shape)
        ta = np.broadcast_to(t[active][:, None], ws.shape[:2])
        coarse = residual[active] > COARSE_SWITCH * scale[active]
        y, ok = _integrate_endpoints(m, rhs, _pack(ta, pa, ws), coarse)
        x = y[..., :d]
        r = x[:, 0] - target[active]
        rn = np.where(ok, np.linalg.norm(r, axis=-1), np.inf)
        good = ok & (rn <= tol * scale[active])
        converged[active[good]] = True
        if np.any(coarse & good):
            # a loose-tolerance hit is not a convergence: re-check it accurately
            converged[active[coarse & good]] = False
            good &= ~coarse
        # no decrease: retry from the last accepted iterate with half the step
        worse = ~good & ~(rn < residual[active])
        retry = active[worse]
        damping[retry] *= 0.5
        w[retry] = base_w[retry] + damping[retry, None] * step[retry]
        residual[active] = np.where(worse, residual[active], rn)
        keep = ok & ~good & ~worse
        jac = np.swapaxes((x[keep, 1:] - x[keep, :1]) / eps[keep, None, None], -1, -2)
        with np.errstate(all="ignore"):
            try:
                delta = np.linalg.solve(jac, -r[keep][..., None])[..., 0]
            except np.linalg.LinAlgError:
                delta = np.stack([_lstsq(j, -rr) for j, rr in zip(jac, r[keep])]
                                 ) if keep.any() else np.zeros((0, d))
        # cap the Newton step to keep iterates near the chart region of interest
        wk = wa[keep]
        cap = np.maximum(1.0, np.linalg.norm(wk, axis=-1))
        dn = np.linalg.norm(delta, axis=-1)
        shrink = np.where(np.isfinite(dn) & (dn > cap), cap / np.where(dn > 0, dn, 1.0), 1.0)
        delta = np.where(np.isfinite(delta), delta * shrink[:, None], 0.0)
        idx = active[keep]
        base_w[idx] = wk
        step[idx] = delta
        damping[idx] = 1.0
        w[idx] = wk + delta
        moved = np.concatenate([idx, retry[damping[retry] >= 2.0**-MAX_HALVINGS]])
        active = np.sort(moved[np.linalg.norm(w[moved], axis=-1) <= limit[moved]])
        # Newton that is working halves the residual quickly; drop starts that stall
        halved = residual[active] < 0.5 * reference[active]
        reference[active] = np.where(halved, residual[active], reference[active])
        stalled[active] = np.where(halved, 0, stalled[active] + 1)
        active = active[stalled[active] <= STALL]
        if group is not None and active.size:
            solved = np.zeros(int(group.max()) + 1, dtype=int)
            np.maximum.at(solved, group[converged], 1)
            waiting[active] += solved[group[active]]
            active = active[waiting[active] <= PATIENCE]
    return w, converged, residual


def _continuation(m, t, p, target, tol, max_iter, group, stages=CONTINUATION_STAGES):
    """Shoot at targets moved along the chart line, warm-starting each stage."""
    w = np.zeros_like(p)
    alive = np.ones(p.shape[0], dtype=bool)
    conv = np.zeros(p.shape[0], dtype=bool)
    res = np.full(p.shape[0], np.inf)
    for j in range(1, stages + 1):
        rows = np.flatnonzero(alive)
        if rows.size == 0:
            break
        frac = j / stages
        start = (target[rows] - p[rows]) / stages if j == 1 else w[rows] * j / (j - 1)
        mid = p[rows] + frac * (target[rows] - p[rows])
        w[rows], conv[rows], res[rows] = _shoot(m, t[rows], p[rows], mid, start, tol,
                                                max_iter, group[rows])
        alive[rows] = conv[rows]
    return w, conv & alive, res


def _lstsq(j, r):
    return np.linalg.lstsq(j, r, rcond=None)[0]


def distances(m: MetricField, t, p, q, seed: int = 0, n_perturb: int = N_PERTURB,
              tol: float = SHOOT_TOL, max_iter: int = MAX_NEWTON):
    """Shooting distances for many point pairs at once.

    ``p`` and ``q`` have shape ``(n, d)`` (or broadcast to it) and ``t`` is
    scalar or ``(n,)``.  Returns a dict of arrays ``value``, ``velocity``,
    ``converged`` and ``residual``.
    """
    d = m.dimension
    p = np.atleast_2d(np.asarray(p, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n = max(p.shape[0], q.shape[0])
    p = np.broadcast_to(p, (n, d)).copy()
    q = np.broadcast_to(q, (n, d)).copy()
    t = np.broadcast_to(np.asarray(t, dtype=float), (n,)).copy()

    reps = m.manifold.representatives(p, q)  # (k, n, d)
    k = reps.shape[0]
    dirs = perturbation_directions(d, seed, n_perturb)
    s = 1 + n_perturb
    # flattened problem layout: (problem, representative, start)
    target = np.broadcast_to(reps.transpose(1, 0, 2)[:, :, None, :], (n, k, s, d))
    base = target - p[:, None, None, :]
    size = np.linalg.norm(base, axis=-1, keepdims=True)
    offsets = np.concatenate([np.zeros((1, d)), dirs], axis=0)
    starts = base + PERTURB_SCALE * size * offsets[None, None, :, :]
    pp = np.broadcast_to(p[:, None, None, :], (n, k, s, d))
    tt = np.broadcast_to(t[:, None, None], (n, k, s))

    group = np.broadcast_to(np.arange(n)[:, None, None], (n, k, s)).reshape(-1)
    flat = (tt.reshape(-1), pp.reshape(-1, d), target.reshape(-1, d), starts.reshape(-1, d))
    w = flat[3].copy()
    conv = np.zeros(w.shape[0], dtype=bool)
    res = np.full(w.shape[0], np.inf)
    # straight chart lines first; perturbed starts only for problems they miss
    straight = np.zeros((n, k, s), dtype=bool)
    straight[:, :, 0] = True
    straight = straight.reshape(-1)
    rows = np.flatnonzero(straight)
    w[rows], conv[rows], res[rows] = _shoot(m, *(a[rows] for a in flat), tol, max_iter,
                                            group[rows])
    missed = ~conv.reshape(n, k * s).any(axis=1)
    rows = np.flatnonzero(straight & missed[group])
    if rows.size:
        w[rows], conv[rows], res[rows] = _continuation(m, *(a[rows] for a in flat[:3]), tol,
                                                       max_iter, group[rows])
    missed = ~conv.reshape(n, k * s).any(axis=1)
    rows = np.flatnonzero(~straight & missed[group])
    if rows.size:
        w[rows], conv[rows], res[rows] = _shoot(m, *(a[rows] for a in flat), tol, max_iter,
                                                group[rows])
    w = w.reshape(n, k * s, d)
    conv = conv.reshape(n, k * s)
    res = res.reshape(n, k * s)
    lengths = norms(m, tt.reshape(n, k * s), pp.reshape(n, k * s, d), w)

    masked = np.where(conv, lengths, np.inf)
    best = np.argmin(masked, axis=1)
    fallback = np.argmin(res, axis=1)
    any_conv = conv.any(axis=1)
    pick = np.where(any_conv, best, fallback)
    rows = np.arange(n)
    return {
        "value": lengths[rows, pick],
        "velocity": w[rows, pick],
        "converged": any_conv,
        "residual": res[rows, pick],
    }


def distance(m: MetricField, t: float, p, q, seed: int = 0, **kwargs) -> DistanceResult:
    """Riemannian distance ``rho_t(p, q)`` by multi-start shooting.

    For metrics that carry a closed form, the exact value is attached for
    cross-checking.
    """
    p = m.manifold.check(p)
    q = m.manifold.check(q)
    out = distances(m, t, p, q, seed=seed, **kwargs)
    closed = None
    if m.closed_form_distance is not None:
        closed = float(m.closed_form_distance(t, p, q))
    return DistanceResult(
        value=float(out["value"][0]),
        initial_velocity=out["velocity"][0],
        converged=bool(out["converged"][0]),
        residual=float(out["residual"][0]),
        closed_form=closed,
    )


def rho(m: MetricField, t, p, q, method: str = "auto", seed: int = 0):
    """Vectorised distance from ``p`` to points ``q``.

    ``method`` is ``"closed"``, ``"shoot"`` or ``"auto"`` (closed form when
    the metric has one).  Returns ``(values, converged)``.
    """
    q = np.asarray(q, dtype=float)
    if method == "auto":
        method = "closed" if m.closed_form_distance is not None else "shoot"
    if method == "closed":
        if m.closed_form_distance is None:
            raise ValueError(f"metric {m.name!r} has no closed-form distance")
        vals = np.asarray(m.closed_form_distance(t, p, q), dtype=float)
        vals = np.broadcast_to(vals, np.broadcast_shapes(np.shape(t), q.shape[:-1]))
        return vals, np.ones(vals.shape, dtype=bool)
    shape = np.broadcast_shapes(np.shape(t), q.shape[:-1])
    flat_q = np.broadcast_to(q, shape + q.shape[-1:]).reshape(-1, q.shape[-1])
    flat_t = np.broadcast_to(t, shape).reshape(-1)
    out = distances(m, flat_t, p, flat_q, seed=seed)
    return out["value"].reshape(shape), out["converged"].reshape(shape)


def _require(conv, what):
    if not np.all(conv):
        raise DistanceError(f"distance shooting did not converge for {what}")


def proper_R(m: MetricField, basepoint, t: float, q, method: str = "auto") -> float:
    """``R(t, q) = 1 + rho_t(p, q)``."""
    val, conv = rho(m, t, basepoint, np.asarray(q, dtype=float), method)
    _require(conv, f"q={np.asarray(q).tolist()}")
    return float(1.0 + val)


def proper_E(m: MetricField, basepoint, s: TangentState, method: str = "auto") -> float:
    """``E(t, q, v) = 1 + rho_t(p, q)^2 + ||v||_t^2``."""
    val, conv = rho(m, s.t, basepoint, s.q, method)
    _require(conv, f"q={s.q.tolist()}")
    speed = norms(m, s.t, s.q, s.v)
    return float(1.0 + val**2 + speed**2)


def energies(m: MetricField, basepoint, t, q, v, method: str = "auto"):
    """Vectorised ``E`` over arrays of states; returns ``(E, rho, converged)``."""
    val, conv = rho(m, t, basepoint, q, method)
    speed = norms(m, t, q, v)
    return 1.0 + val**2 + speed**2, val, conv
