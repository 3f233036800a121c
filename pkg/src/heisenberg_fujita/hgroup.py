"""Heisenberg group arithmetic and homogeneous geometry.

Points of H^N are triples ``(x, y, tau)`` with ``x, y`` in R^N and ``tau``
real.  The group law carries a symplectic twist in the last coordinate, the
homogeneous norm is ``((|x|^2 + |y|^2)^2 + tau^2)^(1/4)``, and the anisotropic
dilations scale ``tau`` quadratically.  Haar measure is Lebesgue measure.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special


@dataclass(frozen=True)
class GroupPoint:
    """A point of H^N with exact coordinate storage."""

    x: np.ndarray
    y: np.ndarray
    tau: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError(f"x and y must be vectors of equal length, got {x.shape} and {y.shape}")
        tau = float(self.tau)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.isfinite(tau)):
            raise ValueError("GroupPoint coordinates must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "tau", tau)

    @property
    def N(self) -> int:
        return self.x.size

    @classmethod
    def identity(cls, N: int = 1) -> "GroupPoint":
        return cls(np.zeros(N), np.zeros(N), 0.0)

    @classmethod
    def from_coords(cls, *coords: float) -> "GroupPoint":
        """Build from a flat ``(x_1..x_N, y_1..y_N, tau)`` sequence."""
        c = np.asarray(coords, dtype=float).ravel()
        if c.size % 2 == 0:
            raise ValueError("flat coordinates need odd length 2N+1")
        n = (c.size - 1) // 2
        return cls(c[:n], c[n:2 * n], c[-1])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.y, [self.tau]])

    def __eq__(self, other):
        if not isinstance(other, GroupPoint):
            return NotImplemented
        return (np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)
                and self.tau == other.tau)

    def __hash__(self):
        return hash((self.x.tobytes(), self.y.tobytes(), self.tau))


def _check_same_dim(a: GroupPoint, b: GroupPoint):
    if a.N != b.N:
        raise ValueError(f"dimension mismatch: N={a.N} vs N={b.N}")


def compose(a: GroupPoint, b: GroupPoint) -> GroupPoint:
    """Group product ``a o b``."""
    _check_same_dim(a, b)
    twist = 2.0 * (np.dot(a.x, b.y) - np.dot(b.x, a.y))
    return GroupPoint(a.x + b.x, a.y + b.y, a.tau + b.tau + twist)


def inverse(a: GroupPoint) -> GroupPoint:
    return GroupPoint(-a.x, -a.y, -a.tau)


def hnorm(a: GroupPoint) -> float:
    """Homogeneous (Koranyi) norm."""
    z2 = np.dot(a.x, a.x) + np.dot(a.y, a.y)
    return float(np.sqrt(np.sqrt(z2 * z2 + a.tau * a.tau)))


def distance(a: GroupPoint, b: GroupPoint) -> float:
    """Left-invariant distance ``|b^{-1} o a|``."""
    return hnorm(compose(inverse(b), a))


def dilate(lam: float, a: GroupPoint) -> GroupPoint:
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    return GroupPoint(lam * a.x, lam * a.y, lam * lam * a.tau)


# Vectorized versions for N = 1 coordinate arrays.  These broadcast and are
# what the grid code uses.

def compose_xyt(x1, y1, t1, x2, y2, t2):
    return x1 + x2, y1 + y2, t1 + t2 + 2.0 * (x1 * y2 - x2 * y1)


def hnorm_xyt(x, y, tau):
    z2 = np.asarray(x) ** 2 + np.asarray(y) ** 2
    return np.sqrt(np.sqrt(z2 * z2 + np.asarray(tau) ** 2))


def hnorm_rt(r, tau):
    """Norm as a function of horizontal radius and vertical coordinate."""
    r2 = np.asarray(r) ** 2
    return np.sqrt(np.sqrt(r2 * r2 + np.asarray(tau) ** 2))


def distance_xyt(x, y, tau, center: GroupPoint):
    """Distance from each point ``(x, y, tau)`` to ``center`` (N = 1)."""
    cx, cy = float(center.x[0]), float(center.y[0])
    dx, dy, dt = compose_xyt(-cx, -cy, -center.tau, x, y, tau)
    return hnorm_xyt(dx, dy, dt)


@dataclass(frozen=True)
class GeometryParams:
    N: int
    Q: int
    unit_ball_volume: float

    def __post_init__(self):
        if self.Q != 2 * self.N + 2:
            raise ValueError("Q must equal 2N+2")
        if not self.unit_ball_volume > 0:
            raise ValueError("unit ball volume must be positive")


def homogeneous_dimension(N: int) -> int:
    return 2 * N + 2


@lru_cache(maxsize=None)
def unit_ball_volume(N: int = 1) -> float:
    """Lebesgue volume of ``{|eta| < 1}`` in H^N.

    Each horizontal slice at height tau is a Euclidean 2N-ball of radius
    ``(1 - tau^2)^(1/4)``, so the volume reduces to a one-dimensional
    integral of ``omega_2N (1 - tau^2)^(N/2)``.
    """
    if N < 1:
        raise ValueError("N must be a positive integer")
    omega = np.pi ** N / special.gamma(N + 1)
    val, _ = integrate.quad(lambda s: (1.0 - s * s) ** (0.5 * N), -1.0, 1.0,
                            epsabs=0, epsrel=1e-13)
    return float(omega * val)


@lru_cache(maxsize=None)
def geometry(N: int = 1) -> GeometryParams:
    return GeometryParams(N, homogeneous_dimension(N), unit_ball_volume(N))


def ball_volume(r: float, geom: GeometryParams | None = None) -> float:
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    geom = geom or geometry(1)
    return geom.unit_ball_volume * r ** geom.Q


def integrate_radial(f: Callable, radius: float, N: int = 1, points=None) -> float:
    """Integral of ``f(|eta|)`` over a ball of the given radius.

    Uses the polar formula ``Q |B_1| int_0^a f(s) s^(Q-1) ds``, which is exact
    for any center because Haar measure is left invariant.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    g = geometry(N)
    pts = None if points is None else [s for s in points if 0 < s < radius]
    val, _ = integrate.quad(lambda s: f(s) * s ** (g.Q - 1), 0.0, radius,
                            points=pts or None, limit=400, epsabs=0, epsrel=1e-11)
    return g.Q * g.unit_ball_volume * val


def ball_grid(center: GroupPoint, radius: float, n: int = 96):
    """Cell centers and volume of a uniform ambient grid covering B(center, radius).

    Returns ``(x, y, tau, inside, cell_volume)`` with 3D arrays.  The tau range
    accounts for the shear of the left translation.
    """
    if center.N != 1:
        raise ValueError("ambient grid quadrature is implemented for N = 1")
    cx, cy = float(center.x[0]), float(center.y[0])
    hx = 2.0 * radius / n
    t_half = radius ** 2 + 2.0 * radius * (abs(cx) + abs(cy))
    nt = int(np.ceil(n * t_half / radius ** 2))
    ht = 2.0 * t_half / nt
    xs = cx - radius + hx * (np.arange(n) + 0.5)
    ys = cy - radius + hx * (np.arange(n) + 0.5)
    ts = center.tau - t_half + ht * (np.arange(nt) + 0.5)
    X, Y, T = np.meshgrid(xs, ys, ts, indexing="ij")
    inside = distance_xyt(X, Y, T, center) < radius
    return X, Y, T, inside, hx * hx * ht


def integrate_ball(f: Callable, center: GroupPoint, radius: float, n: int = 96,
                   method: str = "grid") -> float:
    """Haar integral of ``f(distance(center, .))`` over ``B(center, radius)``.

    ``method="grid"`` is the ambient midpoint rule (cells counted by their
    center); ``method="polar"`` uses the exact radial reduction.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if method == "polar":
        probe = np.asarray(f(np.linspace(0.0, radius, 65)), dtype=float)
        if not np.all(np.isfinite(probe)):
            raise ValueError("profile has non-finite samples on [0, radius]")
        return integrate_radial(f, radius, center.N)
    if method != "grid":
        raise ValueError(f"unknown method {method!r}")
    X, Y, T, inside, dv = ball_grid(center, radius, n)
    d = distance_xyt(X[inside], Y[inside], T[inside], center)
    vals = np.asarray(f(d), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("profile has non-finite samples inside the ball")
    return float(vals.sum() * dv)
