"""Dormand-Prince 5(4) embedded Runge-Kutta pair.

``dopri_step`` is the shared kernel: it advances any array-valued state by
one step and returns the embedded error estimate.  ``solve_batch``
integrates many independent problems over the same interval with a step
size per problem, which is what geodesic shooting needs.  The single
trajectory driver with blow-up detection lives in :mod:`geoflow.flows`.
"""

from __future__ import annotations

import numpy as np

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array(A[6] + [0.0])
# fifth-order minus embedded fourth-order weights
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
ORDER = 5


def _bc(h, y):
    """Reshape per-problem ``h`` so it broadcasts against ``y``."""
    h = np.asarray(h, dtype=float)
    return h.reshape(h.shape + (1,) * (np.ndim(y) - h.ndim))


def dopri_step(rhs, t, y, h, k1):
    """One Dormand-Prince step.

    Returns ``(y_new, err, k7)`` where ``k7 = rhs(t + h, y_new)`` can be
    reused as the first stage of the next step.
    """
    hb = _bc(h, y)
    k = [k1]
    for s in range(1, 7):
        acc = sum(a * ks for a, ks in zip(A[s], k) if a != 0.0)
        k.append(rhs(t + C[s] * h, y + hb * acc))
    y_new = y + hb * sum(b * ks for b, ks in zip(B[:6], k[:6]) if b != 0.0)
    err = hb * sum(e * ks for e, ks in zip(E, k) if e != 0.0)
    return y_new, err, k[6]


def error_norm(err, y, y_new, rtol, atol, batch=False):
    """Scaled RMS error; per leading index when ``batch`` is true."""
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    ratio = (err / scale) ** 2
    if not batch:
        return float(np.sqrt(np.mean(ratio)))
    flat = ratio.reshape(ratio.shape[0], -1, ratio.shape[-1]) if ratio.ndim > 1 \
        else ratio.reshape(-1, 1, 1)
    return np.sqrt(np.max(np.mean(flat, axis=-1), axis=-1))


def initial_step(rhs, t, y, f0, direction_span, rtol, atol, batch=False):
    """Hairer-Wanner starting step estimate, capped by the span."""
    def norm(x):
        scale = atol + rtol * np.abs(y)
        r = (x / scale) ** 2
        if not batch:
            return np.sqrt(np.mean(r))
        r = r.reshape(r.shape[0], -1)
        return np.sqrt(np.mean(r, axis=-1))

    d0, d1 = norm(y), norm(f0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    h0 = np.minimum(h0, direction_span)
    y1 = y + _bc(h0, y) * f0
    f1 = rhs(t + h0, y1)
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = norm(f1 - f0) / h0
        big = np.maximum(d1, d2)
        h1 = np.where(big <= 1e-15, np.maximum(1e-6, h0 * 1e-3),
                      (0.01 / np.maximum(big, 1e-300)) ** (1.0 / ORDER))
    h = np.minimum(np.minimum(100 * h0, h1), direction_span)
    h = np.where(np.isfinite(h) & (h > 0), h, np.minimum(1e-6, direction_span))
    return h if batch else float(h)


def step_factor(err):
    with np.errstate(divide="ignore"):
        fac = SAFETY * np.power(np.maximum(err, 1e-10), -1.0 / ORDER)
    return np.clip(fac, MIN_FACTOR, MAX_FACTOR)


def solve_batch(rhs, y0, t0, t1, rtol=1e-10, atol=1e-10, valid=None, max_steps=100_000):
    """Integrate ``n`` independent problems ``y' = rhs(t, y)`` from t0 to t1.

    ``y0`` has shape ``(n, ...)``; ``rhs`` receives the times of the
    currently active problems (shape ``(m,)``) and their states.  ``valid``
    optionally maps states to a boolean per problem; a problem whose step
    cannot be shrunk enough to stay valid, or whose step size collapses,
    is marked failed.

    Returns ``(y_end, ok, t_reached)``.
    """
    y = np.array(y0, dtype=float)
    n = y.shape[0]
    span = float(t1 - t0)
    if span <= 0:
        raise ValueError("solve_batch integrates forward; need t1 > t0")
    t = np.full(n, float(t0))
    ok = np.ones(n, dtype=bool)
    done = np.zeros(n, dtype=bool)
    active = np.arange(n)
    with np.errstate(all="ignore"):
        f = rhs(t, y)
    h = initial_step(rhs, t, y, f, np.full(n, span), rtol, atol, batch=True)
    for _ in range(max_steps):
        if active.size == 0:
            break
        ta, ya, fa, ha = t[active], y[active], f[active], h[active]
        ha = np.minimum(ha, t1 - ta)
        with np.errstate(all="ignore"):
            y_new, err_vec, f_new = dopri_step(rhs, ta, ya, ha, fa)
            err = error_norm(err_vec, ya, y_new, rtol, atol, batch=True)
        finite = np.isfinite(err)
        if valid is not None:
            inside = np.asarray(valid(y_new), dtype=bool)
            inside = inside.reshape(inside.shape[0], -1).all(axis=-1) if inside.ndim > 1 else inside
        else:
            inside = np.ones(active.size, dtype=bool)
        accept = finite & inside & (err <= 1.0)
        fac = np.where(finite & inside, step_factor(np.where(finite, err, 1.0)), 0.25)
        fac = np.where(accept, fac, np.minimum(fac, 1.0))
        idx = active[accept]
        t[idx] = np.where(ha[accept] >= (t1 - ta[accept]), t1, ta[accept] + ha[accept])
        y[idx] = y_new[accept]
        f[idx] = f_new[accept]
        h[active] = ha * fac
        finished = accept & (t[active] >= t1)
        done[active[finished]] = True
        collapse = ~finished & (h[active] < 1e-13 * np.maximum(1.0, np.abs(t[active])))
        ok[active[collapse]] = False
        active = active[~finished & ~collapse]
    else:
        ok[active] = False
    ok &= done
    return y, ok, t
