"""Single-chart manifolds: Euclidean space, flat tori and the polar sphere chart."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

POLE_MARGIN = 1e-6

KINDS = ("euclidean", "torus", "sphere")


class ChartError(ValueError):
    """A point lies outside the valid region of its chart."""


@dataclass(frozen=True)
class ChartManifold:
    """A manifold described by one coordinate chart.

    ``kind`` is one of ``"euclidean"`` (R^n), ``"torus"`` (flat torus with
    per-axis ``periods``) or ``"sphere"`` (S^2 in polar coordinates
    ``(theta, phi)``, with a small neighbourhood of each pole excluded).
    """

    kind: str
    dimension: int
    periods: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind == "torus":
            if len(self.periods) != self.dimension:
                raise ValueError("torus needs one period per axis")
            if any(p <= 0 for p in self.periods):
                raise ValueError("torus periods must be positive")
        if self.kind == "sphere" and self.dimension != 2:
            raise ValueError("the sphere chart is two-dimensional")

    @classmethod
    def euclidean(cls, dimension: int) -> "ChartManifold":
        return cls("euclidean", dimension)

    @classmethod
    def torus(cls, periods) -> "ChartManifold":
        periods = tuple(float(p) for p in np.atleast_1d(periods))
        return cls("torus", len(periods), periods)

    @classmethod
    def sphere(cls) -> "ChartManifold":
        return cls("sphere", 2)

    @property
    def compact(self) -> bool:
        return self.kind in ("torus", "sphere")

    def is_valid(self, q) -> np.ndarray:
        """Elementwise validity of points ``q`` with shape ``(..., d)``."""
        q = np.asarray(q, dtype=float)
        ok = np.all(np.isfinite(q), axis=-1)
        if self.kind == "sphere":
            theta = q[..., 0]
            ok &= (theta > POLE_MARGIN) & (theta < np.pi - POLE_MARGIN)
        return ok

    def check(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.dimension:
            raise ChartError(
                f"expected {self.dimension} coordinates, got shape {q.shape}"
            )
        bad = ~self.is_valid(q)
        if np.any(bad):
            first = q[bad][0] if q.ndim > 1 else q
            raise ChartError(f"point {first.tolist()} is outside the {self.kind} chart")
        return q

    def canonicalize(self, q) -> np.ndarray:
        """Wrap torus coordinates into ``[0, period)``; other charts unchanged."""
        q = np.array(q, dtype=float)
        if self.kind == "torus":
            per = np.asarray(self.periods)
            q = np.mod(q, per)
            # np.mod can return the period itself for tiny negative inputs
            q = np.where(q >= per, q - per, q)
        return q

    def displacement(self, q0, q1) -> np.ndarray:
        """Chart displacement ``q1 - q0``, taking the shortest wrap on a torus."""
        dq = np.asarray(q1, dtype=float) - np.asarray(q0, dtype=float)
        if self.kind == "torus":
            per = np.asarray(self.periods)
            dq = dq - per * np.round(dq / per)
        return dq

    def default_basepoint(self) -> np.ndarray:
        if self.kind == "sphere":
            return np.array([np.pi / 2, 0.0])
        return np.zeros(self.dimension)

    def representatives(self, p, q) -> np.ndarray:
        """Chart representatives of ``q`` to shoot at from ``p``.

        Returns shape ``(k, ..., d)``.  For the torus these are the ``3**d``
        lattice translates around the representative nearest to ``p``; on the
        sphere chart ``phi`` is shifted by a multiple of ``2 pi`` to be
        nearest to ``p``.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.kind == "torus":
            per = np.asarray(self.periods)
            near = p + self.displacement(p, q)
            shifts = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=self.dimension)))
            shifts = shifts.reshape((len(shifts),) + (1,) * (near.ndim - 1) + (self.dimension,))
            return near[None] + shifts * per
        if self.kind == "sphere":
            q = q.copy()
            dphi = q[..., 1] - p[..., 1]
            q[..., 1] -= 2 * np.pi * np.round(dphi / (2 * np.pi))
            return q[None]
        return q[None]
