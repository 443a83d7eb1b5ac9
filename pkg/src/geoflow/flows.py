"""First- and second-order flows with maximal-interval detection.

Runs are adaptive Dormand-Prince integrations in the chart.  A run stops
when it reaches its horizon, when the step size collapses while the proper
energy ``E`` explodes (``BlowUp``), when the solution leaves the chart or
the force's domain (``LeftChart``), or when the step size collapses for no
visible reason (``StepCollapse``).

Backward runs reflect time: with ``tau = t0 - t`` the equation
``dy/dt = F(t, y)`` becomes ``dy/dtau = -F(t0 - tau, y)``, which is
integrated forward in ``tau``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .geodesy import energies
from .integrators import dopri_step, error_norm, initial_step, step_factor
from .metric import MetricField, TangentState, geodesic_acceleration

RTOL = 1e-10
ATOL = 1e-10
COLLAPSE_REL = 1e-13
ENERGY_CEILING = 1e12
DOUBLING_WINDOW = 10
MAX_STEPS = 1_000_000


class Status(str, Enum):
    REACHED_HORIZON = "ReachedHorizon"
    BLOW_UP = "BlowUp"
    LEFT_CHART = "LeftChart"
    STEP_COLLAPSE = "StepCollapse"
    STEP_LIMIT = "StepLimit"


class FlowError(RuntimeError):
    """A field could not be evaluated at some state."""


@dataclass(frozen=True, eq=False)
class ForceField:
    """A force ``f(t, q, v)`` with optional structure.

    ``two_form_part(t, q)`` is an antisymmetric matrix ``F_t`` (lower
    indices) whose raised action ``a^{-1} F v`` is part of the force;
    ``friction_part(t, q, v)`` is a nonnegative coefficient ``h`` of a
    friction component ``-h v``; ``domain(t, q)`` marks where the force is
    defined.  Only ``total`` drives the dynamics.
    """

    total: Callable
    two_form_part: Optional[Callable] = None
    friction_part: Optional[Callable] = None
    domain: Optional[Callable] = None

    def __call__(self, t, q, v):
        return np.asarray(self.total(t, q, v), dtype=float)

    def two_form(self, t, q) -> Optional[np.ndarray]:
        if self.two_form_part is None:
            return None
        F = np.asarray(self.two_form_part(t, q), dtype=float)
        if np.max(np.abs(F + np.swapaxes(F, -1, -2)), initial=0.0) > 1e-12:
            raise ValueError("two-form part is not antisymmetric")
        return F


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted states of one run plus how it ended."""

    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    E: np.ndarray
    status: Status
    t_star: Optional[float] = None
    direction: str = "forward"
    stats: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.q.shape[1]

    def __len__(self):
        return len(self.t)

    def states(self) -> list[TangentState]:
        return [TangentState(t, q, v) for t, q, v in zip(self.t, self.q, self.v)]

    @property
    def end(self) -> TangentState:
        return TangentState(self.t[-1], self.q[-1], self.v[-1])

    def report(self) -> dict:
        return {
            "status": self.status.value,
            "t_star": self.t_star,
            "direction": self.direction,
            "t0": float(self.t[0]),
            "t_end": float(self.t[-1]),
            "endpoint": {"q": self.q[-1].tolist(), "v": self.v[-1].tolist()},
            "max_E": float(np.max(self.E)),
            "stats": self.stats,
        }

    def to_csv(self, path=None) -> str:
        """Write ``t,q_1..q_d,v_1..v_d,E`` rows with 17 significant digits."""
        d = self.dimension
        header = ["t"] + [f"q_{i + 1}" for i in range(d)] + [f"v_{i + 1}" for i in range(d)] + ["E"]
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        rows = np.column_stack([self.t, self.q, self.v, self.E])
        for row in rows:
            buf.write(",".join(format(x, ".17g") for x in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, status: Status = Status.REACHED_HORIZON) -> "Trajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(x) for x in row] for row in reader if row])
        if header[0] != "t" or header[-1] != "E" or (len(header) - 2) % 2:
            raise ValueError(f"{path}: expected header t,q_1..q_d,v_1..v_d,E")
        d = (len(header) - 2) // 2
        rows = rows.reshape(-1, len(header))
        t = rows[:, 0]
        direction = "backward" if len(t) > 1 and t[-1] < t[0] else "forward"
        return cls(t, rows[:, 1:1 + d], rows[:, 1 + d:1 + 2 * d], rows[:, -1], status,
                   direction=direction)


def blowup_criterion(t: float, step_size: float, energy_history) -> bool:
    """Blow-up test: collapsed step together with an exploding energy.

    Fires when ``step_size < 1e-13 max(1, |t|)`` and the latest energy
    exceeds ``1e12`` or has at least doubled over the last ten accepted
    steps.
    """
    if not step_size < COLLAPSE_REL * max(1.0, abs(t)):
        return False
    if len(energy_history) == 0:
        return False
    latest = energy_history[-1]
    if not math.isfinite(latest) or latest > ENERGY_CEILING:
        return True
    if len(energy_history) > DOUBLING_WINDOW:
        return latest >= 2.0 * energy_history[-1 - DOUBLING_WINDOW]
    return False


def _sign(direction: str) -> float:
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    return 1.0 if direction == "forward" else -1.0


def _drive(rhs, y0, t0, horizon, direction, split, valid, energy, rtol, atol,
           max_step, max_steps, canonical):
    """Shared adaptive loop.  ``split(t, y) -> (q, v)`` for recording."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    sign = _sign(direction)

    def reflected(tau, y):
        return sign * rhs(t0 + sign * tau, y)

    y = np.array(y0, dtype=float)
    tau = 0.0
    q, v = split(t0, y)
    e0 = energy(t0, canonical(q), v)
    ts, qs, vs, es = [t0], [canonical(q)], [v], [e0]
    f = reflected(0.0, y)
    h = min(initial_step(reflected, 0.0, y, f, horizon, rtol, atol), max_step)
    accepted = rejected = 0
    min_step = math.inf
    status, t_star = Status.STEP_LIMIT, None
    last_reject = None
    for _ in range(max_steps):
        if tau >= horizon:
            status = Status.REACHED_HORIZON
            break
        h = min(h, horizon - tau, max_step)
        with np.errstate(all="ignore"):
            y_new, err_vec, f_new = dopri_step(reflected, tau, y, h, f)
            err = error_norm(err_vec, y, y_new, rtol, atol)
        t_new = t0 + sign * (tau + h)
        if not (math.isfinite(err) and np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
            rejected += 1
            last_reject = "nonfinite"
            h *= 0.25
        elif not valid(t_new, y_new):
            rejected += 1
            last_reject = "chart"
            h *= 0.25
        elif err <= 1.0:
            last = tau + h >= horizon
            tau = horizon if last else tau + h
            min_step = min(min_step, h)
            y, f = y_new, f_new
            accepted += 1
            t_acc = t0 + sign * tau
            q, v = split(t_acc, y)
            qc = canonical(q)
            ts.append(t_acc)
            qs.append(qc)
            vs.append(v)
            es.append(energy(t_acc, qc, v))
            last_reject = None
            h *= float(step_factor(err))
        else:
            rejected += 1
            last_reject = "error"
            h *= min(1.0, float(step_factor(err)))
        t_cur = ts[-1]
        if h < COLLAPSE_REL * max(1.0, abs(t_cur)):
            if last_reject == "chart":
                status = Status.LEFT_CHART
            elif blowup_criterion(t_cur, h, es[-1 - DOUBLING_WINDOW:]):
                status = Status.BLOW_UP
            else:
                status = Status.STEP_COLLAPSE
            t_star = float(t_cur)
            break
    else:
        t_star = float(ts[-1])
    if status is Status.STEP_LIMIT and tau >= horizon:
        status = Status.REACHED_HORIZON
    stats = {
        "accepted_steps": accepted,
        "rejected_steps": rejected,
        "min_step": None if accepted == 0 else float(min_step),
        "max_E": float(np.max(es)),
    }
    return Trajectory(np.array(ts), np.array(qs), np.array(vs), np.array(es), status,
                      t_star, direction, stats)


def _guard(fn, name):
    def wrapped(t, *args):
        try:
            return np.asarray(fn(t, *args), dtype=float)
        except Exception as exc:
            state = ", ".join(np.asarray(a).tolist().__repr__() for a in args)
            raise FlowError(f"{name} failed at t={float(t)!r}, state {state}: {exc}") from exc
    return wrapped


def _energy_fn(m, basepoint, method):
    def energy(t, q, v):
        e, _, conv = energies(m, basepoint, t, q, v, method)
        return float(e) if bool(np.all(conv)) else math.nan
    return energy


def integrate_first_order(m: MetricField, field, t0: float, q0, horizon: float,
                          direction: str = "forward", basepoint=None, domain=None,
                          rtol=RTOL, atol=ATOL, max_step=math.inf, max_steps=MAX_STEPS,
                          energy_method: str = "auto") -> Trajectory:
    """Integrate ``dq/dt = field(t, q)``.

    Samples record ``v = field(t, q)`` and ``E = 1 + rho_t(p, q)^2 + ||v||_t^2``.
    """
    man = m.manifold
    q0 = man.check(q0)
    p = man.default_basepoint() if basepoint is None else np.asarray(basepoint, float)
    nu = _guard(field, "vector field")

    def rhs(t, y):
        return nu(t, y)

    def split(t, y):
        return y.copy(), nu(t, y)

    def valid(t, y):
        return bool(man.is_valid(y)) and (domain is None or bool(domain(t, y)))

    if domain is not None and not domain(t0, q0):
        raise ValueError("initial point lies outside the field's domain")
    return _drive(rhs, q0, float(t0), float(horizon), direction, split, valid,
                  _energy_fn(m, p, energy_method), rtol, atol, max_step, max_steps,
                  man.canonicalize)


def second_order_rhs(m: MetricField, force):
    """Chart form ``q' = v``, ``v' = f - Gamma(v, v)`` of the covariant equation."""
    d = m.dimension
    f = _guard(force, "force")

    def rhs(t, y):
        q, v = y[:d], y[d:]
        return np.concatenate([v, f(t, q, v) + geodesic_acceleration(m, t, q, v)])

    return rhs


def integrate_second_order(m: MetricField, force, t0: float, q0, v0, horizon: float,
                           direction: str = "forward", basepoint=None, rtol=RTOL,
                           atol=ATOL, max_step=math.inf, max_steps=MAX_STEPS,
                           energy_method: str = "auto") -> Trajectory:
    """Integrate ``D^{(t)} qdot / dt = f(t, q, qdot)`` for the time-dependent metric.

    ``force`` is a :class:`ForceField` or a bare callable ``(t, q, v)``.
    """
    man = m.manifold
    q0 = man.check(q0)
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    d = m.dimension
    if v0.shape != (d,):
        raise ValueError(f"v0 must have {d} components")
    p = man.default_basepoint() if basepoint is None else np.asarray(basepoint, float)
    domain = getattr(force, "domain", None)

    def split(t, y):
        return y[:d].copy(), y[d:].copy()

    def valid(t, y):
        return bool(man.is_valid(y[:d])) and (domain is None or bool(domain(t, y[:d])))

    if domain is not None and not domain(t0, q0):
        raise ValueError("initial point lies outside the force's domain")
    return _drive(second_order_rhs(m, force), np.concatenate([q0, v0]), float(t0),
                  float(horizon), direction, split, valid, _energy_fn(m, p, energy_method),
                  rtol, atol, max_step, max_steps, man.canonicalize)
