"""Growth functions, Bihari envelopes, sampled hypothesis checks, and
verifiers for the distance and energy inequalities along trajectories.

A certification "pass" only means that no violation was found over the
sample set (a random box plus deterministic stress rays); every report
states that scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .flows import Trajectory
from .geodesy import rho
from .manifolds import ChartManifold
from .metric import MetricField, TangentState, covector_norms, norms

ETA = math.e - 1.0
RATIO_SLACK = 1e-12
VERIFY_REL = 1e-6
QUAD_TOL = 1e-12
Y_MAX = float(np.finfo(float).max)
LOG_MAX = math.log(Y_MAX) - 1e-9
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class GrowthRangeError(ValueError):
    """``G^{-1}(z)`` lies beyond the representable range of ``y``."""

    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = bracket


# -- growth functions ----------------------------------------------------------

@dataclass(frozen=True)
class GrowthFunction:
    """A growth function ``g >= 1`` on ``[1, inf)``.

    ``kind`` is ``"constant"`` (``g = c``), ``"log"`` (``c ln(eta + x)``) or
    ``"loglog"`` (``c ln(eta + x) ln(eta + ln(eta + x))``) with
    ``eta = e - 1``, so both non-constant kinds equal ``c`` at ``x = 1``.
    All three make ``G(y) = int_1^y dx / (x g(x))`` diverge.
    """

    kind: str = "constant"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "log", "loglog"):
            raise ValueError(f"unknown growth kind {self.kind!r}")
        if not (math.isfinite(self.c) and self.c >= 1.0):
            raise ValueError("growth constant must be a finite number >= 1")

    @classmethod
    def from_dict(cls, spec) -> "GrowthFunction":
        if isinstance(spec, (int, float)):
            return cls("constant", float(spec))
        return cls(spec.get("kind", "constant"), float(spec.get("c", 1.0)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c}

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full(x.shape, self.c)
        inner = np.log(ETA + x)
        if self.kind == "log":
            return self.c * inner
        return self.c * inner * np.log(ETA + inner)

    def _in_log(self, s):
        """``1 / g(e^s)``: the integrand of ``G`` after ``x = e^s``."""
        if self.kind == "constant":
            return 1.0 / self.c
        # ln(eta + e^s) without overflow for large s
        inner = s + math.log1p(ETA * math.exp(-s))
        if self.kind == "log":
            return 1.0 / (self.c * inner)
        return 1.0 / (self.c * inner * math.log(ETA + inner))

    def _G_log(self, s: float) -> float:
        if self.kind == "constant":
            return s / self.c
        if s == 0.0:
            return 0.0
        val, _ = integrate.quad(self._in_log, 0.0, s, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=500)
        return val

    def G(self, y):
        """``G(y) = int_1^y dx / (x g(x))`` (closed form for constant g)."""
        y = np.asarray(y, dtype=float)
        if np.any(y < 1.0):
            raise ValueError("G is defined on [1, inf)")
        if self.kind == "constant":
            return np.log(y) / self.c
        out = np.array([self._G_log(math.log(v)) for v in y.ravel()]).reshape(y.shape)
        return out if out.ndim else float(out)

    def G_inv(self, z):
        """Inverse of ``G`` by bracketed root finding in ``ln y``."""
        z = np.asarray(z, dtype=float)
        if np.any(z < 0):
            raise ValueError("G_inv is defined on [0, inf)")
        if self.kind == "constant":
            s = self.c * z
            if np.any(s > LOG_MAX):
                raise GrowthRangeError(f"G_inv({float(np.max(z))!r}) overflows",
                                       (1.0, math.inf))
            return np.exp(s)
        out = np.array([self._G_inv_scalar(float(v)) for v in z.ravel()]).reshape(z.shape)
        return out if out.ndim else float(out)

    def _G_inv_scalar(self, z: float) -> float:
        if z == 0.0:
            return 1.0
        lo, hi = 0.0, min(max(1.0, z), LOG_MAX)
        while self._G_log(hi) < z:
            if hi >= LOG_MAX:
                raise GrowthRangeError(
                    f"G_inv({z!r}) exceeds the reachable range: G(y) < {z!r} "
                    f"for all y up to {Y_MAX!r}", (math.exp(lo), Y_MAX))
            lo, hi = hi, min(2.0 * hi, LOG_MAX)
        s = optimize.brentq(lambda s: self._G_log(s) - z, lo, hi, xtol=1e-15,
                            rtol=4 * np.finfo(float).eps, maxiter=200)
        return math.exp(s)


def growth_G(g: GrowthFunction, y):
    return g.G(y)


def growth_G_inv(g: GrowthFunction, z):
    return g.G_inv(z)


def bihari_envelope(g: GrowthFunction, E0: float, beta: float, t0: float, t):
    """``G^{-1}(G(E0) + beta |t - t0|)``, the a-priori energy bound."""
    if E0 < 1.0:
        raise ValueError("E0 must be >= 1")
    if not beta > 0:
        raise ValueError("beta must be positive")
    elapsed = np.abs(np.asarray(t, dtype=float) - t0)
    if g.kind == "constant":
        with np.errstate(over="ignore"):
            out = E0 * np.exp(g.c * beta * elapsed)
        if np.any(~np.isfinite(out)):
            raise GrowthRangeError("envelope overflows", (E0, math.inf))
        return out if out.ndim else float(out)
    return g.G_inv(g.G(E0) + beta * elapsed)


def omega(g: GrowthFunction, K: float, x, y):
    """Weight ``Omega(x, y)`` bounding the relative growth rate of the energy."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e = 1 + x**2 + y**2
    gx = g(1 + x**2)
    ge = g(e)
    num = x * y + x**2 * gx + e * y / (K + y) * ge + gx * y**2
    return num / (e * ge)


def omega_sup(g: GrowthFunction, K: float = 1.0, extent: float = 1e4, n: int = 400) -> float:
    """Grid estimate of ``sup_{x, y > 0} 2 Omega(x, y)``; never exceeds 6."""
    axis = np.concatenate([[0.0], np.geomspace(1e-4, extent, n)])
    x, y = np.meshgrid(axis, axis)
    return float(np.max(2 * omega(g, K, x, y)))


# -- sampling ------------------------------------------------------------------

@dataclass(frozen=True)
class Samples:
    t: np.ndarray
    q: np.ndarray
    v: np.ndarray
    stress: np.ndarray

    def __len__(self):
        return len(self.t)

    def subset(self, mask) -> "Samples":
        return Samples(self.t[mask], self.q[mask], self.v[mask], self.stress[mask])


@dataclass(frozen=True)
class Sampler:
    """Box samples in ``(t, q, v)`` plus deterministic stress rays.

    ``q_box`` is ``(lo, hi)`` (scalars or per-axis); by default it is
    ``basepoint +- 10`` on R^n and the whole chart on compact manifolds.
    Velocities are uniform in ``[-v_box, v_box]^d``.  The stress set takes
    ``t`` in ``{-r, 0, r}``, positions on the axis rays from the basepoint
    at distances ``stress_radii`` and velocities on the axis rays with the
    same magnitudes.
    """

    count: int = 10_000
    seed: int = 0
    q_box: Optional[tuple] = None
    v_box: float = 10.0
    stress_radii: tuple = (1.0, 10.0, 100.0)
    stress: bool = True

    def scope(self, window: float) -> str:
        return (f"no violation over {self.count} uniform samples with t in [-{window:g}, "
                f"{window:g}], |v_i| <= {self.v_box:g}, seed {self.seed}, plus stress rays of "
                f"radii {list(self.stress_radii)}; sampling cannot prove a global bound")

    def _box(self, manifold: ChartManifold, basepoint):
        d = manifold.dimension
        if self.q_box is not None:
            lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (d,)) for b in self.q_box)
            return lo, hi
        if manifold.kind == "torus":
            return np.zeros(d), np.asarray(manifold.periods, dtype=float)
        if manifold.kind == "sphere":
            return np.array([0.01, 0.0]), np.array([math.pi - 0.01, 2 * math.pi])
        return basepoint - 10.0, basepoint + 10.0

    def _stress_points(self, manifold, basepoint):
        d = manifold.dimension
        if manifold.kind == "sphere":
            return np.array([[0.01, 0.0], [math.pi / 2, 0.0], [math.pi / 2, math.pi],
                             [math.pi - 0.01, 1.0], [1.0, 3.0]])
        pts = [basepoint]
        for r in self.stress_radii:
            for i in range(d):
                for sgn in (1.0, -1.0):
                    pts.append(basepoint + sgn * r * np.eye(d)[i])
        return manifold.canonicalize(np.array(pts))

    def draw(self, manifold: ChartManifold, window: float, basepoint=None) -> Samples:
        d = manifold.dimension
        p = manifold.default_basepoint() if basepoint is None else np.asarray(basepoint, float)
        rng = np.random.default_rng(self.seed)
        lo, hi = self._box(manifold, p)
        t = rng.uniform(-window, window, self.count)
        q = lo + (hi - lo) * rng.uniform(size=(self.count, d))
        v = rng.uniform(-self.v_box, self.v_box, (self.count, d))
        parts = [(t, q, v, np.zeros(self.count, dtype=bool))]
        if self.stress:
            qs = self._stress_points(manifold, p)
            vs = np.array([s * r * np.eye(d)[i] for r in self.stress_radii
                           for i in range(d) for s in (1.0, -1.0)])
            ts = np.array([-window, 0.0, window])
            T, Qi, Vi = np.meshgrid(np.arange(3), np.arange(len(qs)), np.arange(len(vs)),
                                    indexing="ij")
            n = T.size
            parts.append((ts[T.ravel()], qs[Qi.ravel()], vs[Vi.ravel()], np.ones(n, dtype=bool)))
        t, q, v, st = (np.concatenate(x) for x in zip(*parts))
        keep = manifold.is_valid(q)
        return Samples(t[keep], q[keep], v[keep], st[keep])


# -- reports -------------------------------------------------------------------

def _json_float(x):
    if x is None:
        return None
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


@dataclass(frozen=True)
class CertificationReport:
    """Outcome of one sampled hypothesis check.

    ``worst_ratio`` is the largest ``lhs / rhs`` with the given ``g``;
    ``fitted_constant`` is the smallest constant ``g`` (at least 1) that
    makes the bound hold on the sample set; ``witness`` is the sample
    attaining ``worst_ratio``.
    """

    hypothesis: str
    verdict: str
    samples_checked: int
    worst_ratio: float
    fitted_constant: float
    witness: Optional[TangentState] = None
    skipped: int = 0
    scope: str = ""
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "hypothesis": self.hypothesis,
            "verdict": self.verdict,
            "samples": self.samples_checked,
            "skipped": self.skipped,
            "worst_ratio": _json_float(self.worst_ratio),
            "fitted_constant": _json_float(self.fitted_constant),
            "witness": None if self.witness is None else self.witness.to_dict(),
            "scope": self.scope,
            "details": self.details,
        }


@dataclass(frozen=True)
class CertificationBundle:
    """Several reports whose joint verdict is the AND of the parts."""

    name: str
    reports: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {"bundle": self.name, "verdict": self.verdict,
                "reports": [r.to_dict() for r in self.reports]}


def _report(hypothesis, samples: Samples, lhs, rhs, fit, skipped, scope, details=None):
    """Assemble a report from per-sample ``lhs``, ``rhs`` and the ``g = 1`` ratio ``fit``."""
    n = len(lhs)
    if n == 0:
        return CertificationReport(hypothesis, "fail", 0, math.nan, math.nan, None, skipped,
                                   scope, {"reason": "no usable samples", **(details or {})})
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lhs == 0, 0.0, lhs / rhs)
    i = int(np.argmax(np.where(np.isnan(ratio), -np.inf, ratio)))
    worst = float(ratio[i])
    fitted = max(1.0, float(np.max(fit)))
    verdict = "pass" if worst <= 1.0 + RATIO_SLACK else "fail"
    witness = TangentState(samples.t[i], samples.q[i], samples.v[i])
    info = {"witness_lhs": float(lhs[i]), "witness_rhs": float(rhs[i])}
    info.update(details or {})
    return CertificationReport(hypothesis, verdict, n, worst, fitted, witness, skipped, scope, info)


def _distances(m, basepoint, samples, method):
    vals, conv = rho(m, samples.t, basepoint, samples.q, method)
    return np.asarray(vals, dtype=float), np.asarray(conv, dtype=bool)


def _apply(fn, *args):
    """Evaluate ``fn`` on stacked samples, falling back to a per-sample loop."""
    n = len(args[0])
    try:
        out = np.asarray(fn(*args), dtype=float)
        if out.shape[:1] == (n,):
            return out
    except Exception:
        pass
    return np.array([np.asarray(fn(*(a[i] for a in args)), dtype=float) for i in range(n)])


def _in_domain(domain, samples):
    if domain is None:
        return np.ones(len(samples), dtype=bool)
    return np.array([bool(domain(t, q)) for t, q in zip(samples.t, samples.q)], dtype=bool)


def check_metric_growth(m: MetricField, basepoint, g: GrowthFunction, window: float,
                        mode: str = "R", sampler: Sampler | None = None,
                        method: str = "auto") -> CertificationReport:
    """``+-(d_t a_t)(v, v) <= 2 g(arg) a_t(v, v)`` with ``arg = 1 + rho`` or ``1 + rho^2``."""
    if mode not in ("R", "R2"):
        raise ValueError("mode must be 'R' or 'R2'")
    sampler = sampler or Sampler()
    p = np.asarray(basepoint, dtype=float)
    s = sampler.draw(m.manifold, window, p)
    s = s.subset(np.any(s.v != 0, axis=-1))
    hyp = f"metric-growth-{mode}"
    if m.static:
        n = len(s)
        return CertificationReport(hyp, "pass", n, 0.0, 1.0, None, 0, sampler.scope(window),
                                   {"reason": "static metric: time derivative vanishes"})
    r, conv = _distances(m, p, s, method)
    s, r = s.subset(conv), r[conv]
    dta = np.einsum("ni,nij,nj->n", s.v, m.dt(s.t, s.q), s.v)
    av = np.einsum("ni,nij,nj->n", s.v, m(s.t, s.q), s.v)
    arg = 1 + r if mode == "R" else 1 + r**2
    lhs = np.abs(dta)
    return _report(hyp, s, lhs, 2 * g(arg) * av, lhs / (2 * av), int(np.sum(~conv)),
                   sampler.scope(window))


def check_wintner(m: MetricField, basepoint, nu: Callable, g: GrowthFunction, window: float,
                  sampler: Sampler | None = None, domain=None,
                  method: str = "auto") -> CertificationReport:
    """``||nu(t, q)||_t <= g(R) R`` with ``R = 1 + rho_t(p, q)``."""
    sampler = sampler or Sampler()
    p = np.asarray(basepoint, dtype=float)
    s = sampler.draw(m.manifold, window, p)
    inside = _in_domain(domain, s)
    s = s.subset(inside)
    r, conv = _distances(m, p, s, method)
    s, r = s.subset(conv), r[conv]
    lhs = norms(m, s.t, s.q, _apply(nu, s.t, s.q))
    R = 1 + r
    return _report("wintner", s, lhs, g(R) * R, lhs / R, int(np.sum(~conv)),
                   sampler.scope(window), {"outside_domain": int(np.sum(~inside))})


def force_remainder(m: MetricField, force, t, q, v, direction: str = "both"):
    """``f - F_sharp(v)`` (plus ``h v`` for forward-only checks) on stacked samples."""
    f = _apply(force, t, q, v)
    two_form = getattr(force, "two_form_part", None)
    if two_form is not None:
        F = _apply(two_form, t, q)
        if np.max(np.abs(F + np.swapaxes(F, -1, -2)), initial=0.0) > 1e-12:
            raise ValueError("two-form part is not antisymmetric")
        Fv = np.einsum("nij,nj->ni", F, v)
        f = f - np.linalg.solve(m(t, q), Fv[..., None])[..., 0]
    friction = getattr(force, "friction_part", None)
    if friction is not None and direction == "forward":
        h = _apply(friction, t, q, v).reshape(len(t))
        if np.any(h < 0):
            raise ValueError("friction coefficient must be nonnegative")
        f = f + h[:, None] * v
    return f


def check_force_growth(m: MetricField, basepoint, force, g: GrowthFunction, K: float,
                       window: float, sampler: Sampler | None = None, direction: str = "both",
                       method: str = "auto") -> CertificationReport:
    """``||f - F_sharp(v)||_t <= g(E) E / (K + ||v||_t)``.

    With ``direction="forward"`` a friction component ``-h v`` of the force
    is discounted as well.
    """
    if not K > 0:
        raise ValueError("K must be positive")
    sampler = sampler or Sampler()
    p = np.asarray(basepoint, dtype=float)
    s = sampler.draw(m.manifold, window, p)
    inside = _in_domain(getattr(force, "domain", None), s)
    s = s.subset(inside)
    r, conv = _distances(m, p, s, method)
    s, r = s.subset(conv), r[conv]
    rem = force_remainder(m, force, s.t, s.q, s.v, direction)
    lhs = norms(m, s.t, s.q, rem)
    speed = norms(m, s.t, s.q, s.v)
    E = 1 + r**2 + speed**2
    return _report("force-growth", s, lhs, g(E) * E / (K + speed), lhs * (K + speed) / E,
                   int(np.sum(~conv)), sampler.scope(window),
                   {"K": K, "direction": direction, "outside_domain": int(np.sum(~inside))})


def check_covector_growth(m: MetricField, basepoint, covector: Callable, g: GrowthFunction,
                          window: float, name: str, sampler: Sampler | None = None,
                          method: str = "auto") -> CertificationReport:
    """``||w(t, q)||_t <= g(1 + rho^2) (1 + rho)`` for a covector field ``w``."""
    sampler = sampler or Sampler()
    p = np.asarray(basepoint, dtype=float)
    s = sampler.draw(m.manifold, window, p)
    r, conv = _distances(m, p, s, method)
    s, r = s.subset(conv), r[conv]
    lhs = covector_norms(m, s.t, s.q, _apply(covector, s.t, s.q))
    return _report(name, s, lhs, g(1 + r**2) * (1 + r), lhs / (1 + r), int(np.sum(~conv)),
                   sampler.scope(window))


def certify_second_order(m: MetricField, basepoint, force, g: GrowthFunction, K: float,
                         window: float, sampler: Sampler | None = None,
                         direction: str = "both") -> CertificationBundle:
    """Metric growth in the ``1 + rho^2`` form together with the force bound."""
    return CertificationBundle("second-order", (
        check_metric_growth(m, basepoint, g, window, "R2", sampler),
        check_force_growth(m, basepoint, force, g, K, window, sampler, direction),
    ))


# -- verification along trajectories ---------------------------------------------

def _hermite(h, s, q0, q1, v0, v1):
    """Cubic Hermite position and derivative at fractions ``s`` of a step."""
    s = s[:, None]
    h00, h10 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s
    h01, h11 = -2 * s**3 + 3 * s**2, s**3 - s**2
    q = h00 * q0 + h10 * h * v0 + h01 * q1 + h11 * h * v1
    d00, d10 = (6 * s**2 - 6 * s) / h, 3 * s**2 - 4 * s + 1
    d01, d11 = (-6 * s**2 + 6 * s) / h, 3 * s**2 - 2 * s
    dq = d00 * q0 + d10 * v0 + d01 * q1 + d11 * v1
    return q, dq


def quadrature_nodes(traj: Trajectory, panels_per_unit: float = 32.0):
    """Gauss-Legendre nodes on sub-panels of every step.

    Returns node times, interpolated positions/velocities, weights and the
    index of the step each node belongs to.
    """
    ts, qs, vs, ws, owner = [], [], [], [], []
    for i in range(len(traj.t) - 1):
        t0, t1 = traj.t[i], traj.t[i + 1]
        h = t1 - t0
        q0, q1 = traj.q[i], traj.q[i + 1]
        panels = max(1, int(math.ceil(abs(h) * panels_per_unit)))
        edges = np.linspace(0.0, 1.0, panels + 1)
        frac = ((edges[:-1, None] + edges[1:, None]) / 2
                + (edges[1:, None] - edges[:-1, None]) / 2 * GL_NODES[None]).ravel()
        wt = (np.diff(edges)[:, None] / 2 * GL_WEIGHTS[None]).ravel() * abs(h)
        q, dq = _hermite(h, frac, q0, q1, traj.v[i], traj.v[i + 1])
        ts.append(t0 + frac * h)
        qs.append(q)
        vs.append(dq)
        ws.append(wt)
        owner.append(np.full(frac.size, i))
    return (np.concatenate(ts), np.concatenate(qs), np.concatenate(vs), np.concatenate(ws),
            np.concatenate(owner))


def _unwrap(manifold: ChartManifold, q):
    """Undo torus canonicalisation so consecutive samples are close."""
    if manifold.kind != "torus":
        return q
    steps = manifold.displacement(q[:-1], q[1:])
    return np.concatenate([q[:1], q[:1] + np.cumsum(steps, axis=0)])


def verify_distance_inequality(m: MetricField, basepoint, traj: Trajectory, g: GrowthFunction,
                               mode: str = "erx", method: str = "auto") -> dict:
    """Check the integrated distance inequality on every pair of sample times.

    ``erx``: ``+-[rho(t2) - rho(t1)] <= int (||qdot|| + g(1 + rho) rho) dt``;
    ``ers``: ``+-[rho(t2)^2 - rho(t1)^2] <= 2 int (rho ||qdot|| + g(1 + rho^2) rho^2) dt``,
    with ``rho = rho_t(p, q(t))``.  Integrals use Gauss-Legendre panels on
    cubic Hermite interpolants of each step.  ``satisfied`` requires
    ``lhs <= rhs + 1e-6 (1 + |rhs|)`` for both signs and every pair.
    """
    if mode not in ("erx", "ers"):
        raise ValueError("mode must be 'erx' or 'ers'")
    p = np.asarray(basepoint, dtype=float)
    if traj.t[-1] < traj.t[0]:
        traj = Trajectory(traj.t[::-1], traj.q[::-1], traj.v[::-1], traj.E[::-1], traj.status,
                          traj.t_star, traj.direction, traj.stats)
    q_path = _unwrap(m.manifold, traj.q)
    traj = Trajectory(traj.t, q_path, traj.v, traj.E, traj.status)
    tn, qn, vn, wn, owner = quadrature_nodes(traj)
    qn_c = m.manifold.canonicalize(qn)
    r_nodes, conv_n = rho(m, tn, p, qn_c, method)
    r_samp, conv_s = rho(m, traj.t, p, m.manifold.canonicalize(traj.q), method)
    if not (np.all(conv_n) and np.all(conv_s)):
        return {"mode": mode, "verified": False, "satisfied": False,
                "reason": "distance shooting did not converge at some sample",
                "unconverged": int(np.sum(~conv_n) + np.sum(~conv_s))}
    speed = norms(m, tn, qn_c, vn)
    if mode == "erx":
        integrand = speed + g(1 + r_nodes) * r_nodes
        level = np.asarray(r_samp, dtype=float)
    else:
        integrand = 2 * (r_nodes * speed + g(1 + r_nodes**2) * r_nodes**2)
        level = np.asarray(r_samp, dtype=float) ** 2
    per_step = np.bincount(owner, weights=wn * integrand, minlength=len(traj.t) - 1)
    C = np.concatenate([[0.0], np.cumsum(per_step)])
    worst, worst_pair = -math.inf, (0, 0)
    n = len(traj.t)
    for i in range(n - 1):
        diff = level[i + 1:] - level[i]
        rhs = C[i + 1:] - C[i]
        excess = (np.abs(diff) - rhs) / (1 + np.abs(rhs))
        j = int(np.argmax(excess))
        if excess[j] > worst:
            worst, worst_pair = float(excess[j]), (i, i + 1 + j)
    lhs_full = float(level[-1] - level[0])
    rhs_full = float(C[-1])
    i, j = worst_pair
    return {
        "mode": mode,
        "verified": True,
        "satisfied": bool(worst <= VERIFY_REL),
        "lhs": lhs_full,
        "rhs": rhs_full,
        "t_range": [float(traj.t[0]), float(traj.t[-1])],
        "worst_relative_excess": worst,
        "worst_interval": [float(traj.t[i]), float(traj.t[j])],
        "pairs_checked": n * (n - 1) // 2,
    }


def verify_energy_envelope(traj: Trajectory, g: GrowthFunction, beta: float = 6.0,
                           t0: float | None = None) -> dict:
    """Check the recorded ``E`` column against the Bihari envelope from ``E(t0)``.

    The envelope is ``G^{-1}(G(E0) + beta |t - t0|)``; samples where it
    exceeds the floating-point range are counted as dominated.
    """
    t = traj.t
    if t0 is None:
        t0 = float(t[0])
    k = int(np.argmin(np.abs(t - t0)))
    E0 = float(traj.E[k])
    if not np.all(np.isfinite(traj.E)):
        return {"satisfied": False, "reason": "non-finite energy recorded", "beta": beta}
    env = np.empty_like(traj.E)
    overflow = 0
    for i, ti in enumerate(t):
        try:
            env[i] = bihari_envelope(g, E0, beta, t0, ti)
        except GrowthRangeError:
            env[i] = math.inf
            overflow += 1
    with np.errstate(invalid="ignore"):
        excess = traj.E / env - 1.0
    i = int(np.argmax(excess))
    return {
        "satisfied": bool(np.all(traj.E <= env * (1 + VERIFY_REL))),
        "beta": beta,
        "growth": g.to_dict(),
        "E0": E0,
        "t0": float(t0),
        "max_violation": float(max(excess[i], 0.0)),
        "worst_t": float(t[i]),
        "worst_E": float(traj.E[i]),
        "worst_envelope": _json_float(env[i]),
        "envelope_overflow_samples": overflow,
        "samples": int(len(t)),
    }
