"""Axisymmetric sub-Laplacian engine.

On functions of ``r = |(x, y)|`` and ``tau`` the sub-Laplacian of H^1 has no
mixed terms and reads ``u_rr + u_r / r + 4 r^2 u_tautau``.  This module
discretizes that operator on a cylinder ``r < R, |tau| < L`` with

* finite volumes in ``r`` (cell centers, no-flux axis, Dirichlet at ``R``),
* a vertex grid on ``tau >= 0`` with even reflection at ``tau = 0`` and
  Dirichlet at ``L``,

and diagonalizes it exactly: a generalized symmetric eigenproblem in ``tau``
followed, for every ``tau``-mode, by a symmetric tridiagonal eigenproblem in
``r``.  Any function of the operator (heat flow, subordinated fractional flow,
exact fractional power) is then applied with two small batched products and
no time-step restriction.

The discrete operator has nonnegative off-diagonal couplings, so its
exponential is a nonnegative, mass non-increasing, L-infinity contractive
map.  Those are the properties the nonlinear solver relies on.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import eigh_tridiagonal

from .hgroup import hnorm_rt


def stretched_nodes(h0: float, core: float, length: float, ratio: float) -> np.ndarray:
    """Nodes ``0 = s_0 < ... < s_n = length``.

    Uniform spacing ``h0`` up to ``core``, then geometric growth by ``ratio``;
    the whole set is rescaled so the last node lands on ``length``.
    """
    if not (h0 > 0 and length > 0 and ratio >= 1):
        raise ValueError("need h0 > 0, length > 0, ratio >= 1")
    # work in units of h0 with slack in the comparisons, so that dilated
    # grids get exactly the same node count despite rounding
    c, L = core / h0, length / h0
    nodes = [0.0]
    h = 1.0
    while nodes[-1] < L * (1 - 1e-9):
        if nodes[-1] >= c * (1 - 1e-9):
            h *= ratio
        nodes.append(nodes[-1] + h)
    s = np.asarray(nodes)
    return s * (length / s[-1])


@dataclass(frozen=True)
class AxialGrid:
    """Geometry of the axisymmetric cylinder and its stretched meshes."""

    r_max: float = 8.0
    tau_max: float = 40.0
    hr: float = 0.05
    htau: float = 0.05
    r_core: float = 2.0
    tau_core: float = 4.0
    ratio: float = 1.04

    @classmethod
    def for_horizon(cls, T: float, h: float = 0.1, ratio: float = 1.04) -> "AxialGrid":
        """Cylinder large enough that the heat flow up to time ``T`` stays inside.

        The kernel spreads like ``sqrt(t)`` horizontally and like ``t``
        vertically (its vertical profile is ``sech^2(pi tau / 8t)``), so the
        cylinder is scaled accordingly with generous margins.
        """
        T = max(float(T), 1.0)
        return cls(r_max=max(8.0, 8.0 * np.sqrt(T)), tau_max=max(40.0, 30.0 * T),
                   hr=h, htau=h, r_core=2.0, tau_core=2.0, ratio=ratio)

    def dilated(self, lam: float) -> "AxialGrid":
        """Geometrically similar grid under the dilation ``(r, tau) -> (lam r, lam^2 tau)``."""
        l2 = lam * lam
        return replace(self, r_max=lam * self.r_max, tau_max=l2 * self.tau_max,
                       hr=lam * self.hr, htau=l2 * self.htau,
                       r_core=lam * self.r_core, tau_core=l2 * self.tau_core)

    def r_faces(self) -> np.ndarray:
        return stretched_nodes(self.hr, self.r_core, self.r_max, self.ratio)

    def tau_nodes(self) -> np.ndarray:
        """All vertices including the Dirichlet node at ``tau_max``."""
        return stretched_nodes(self.htau, self.tau_core, self.tau_max, self.ratio)

    @property
    def h_min(self) -> float:
        return min(self.hr, self.htau)

    def engine(self) -> "AxialEngine":
        return _engine(self)

    def summary(self) -> dict:
        e = self.engine()
        return {"r_max": self.r_max, "tau_max": self.tau_max, "hr": self.hr, "htau": self.htau,
                "n_r": e.n_r, "n_tau": e.n_tau}


@lru_cache(maxsize=8)
def _engine(grid: AxialGrid) -> "AxialEngine":
    return AxialEngine(grid)


class AxialEngine:
    """Exact eigen-decomposition of the discrete axisymmetric sub-Laplacian."""

    def __init__(self, grid: AxialGrid):
        self.grid = grid
        f = grid.r_faces()
        n = f.size - 1
        rc = 0.5 * (f[1:] + f[:-1])
        vol = 0.5 * (f[1:] ** 2 - f[:-1] ** 2)  # int r dr over each cell
        flux = f[1:-1] / np.diff(rc)
        dr = np.zeros(n)
        dr[:-1] -= flux
        dr[1:] -= flux
        dr[-1] -= f[-1] / (f[-1] - rc[-1])
        self.faces, self.rc, self.vol = f, rc, vol

        tn = grid.tau_nodes()
        h = np.diff(tn)
        m = tn.size - 1  # unknowns at tn[0..m-1], Dirichlet at tn[m]
        om = np.empty(m)
        om[0] = 0.5 * h[0]
        om[1:] = 0.5 * (h[:-1] + h[1:])
        kd = np.empty(m)
        kd[0] = -1.0 / h[0]
        kd[1:] = -(1.0 / h[:-1] + 1.0 / h[1:])
        ko = 1.0 / h[:-1]
        so = np.sqrt(om)
        mu, W = eigh_tridiagonal(kd / om, ko / (so[:-1] * so[1:]))
        self.tau, self.om = tn[:-1], om
        self.S = W / so[:, None]  # S^T diag(om) S = I
        self.mu = mu

        sv = np.sqrt(vol)
        d0 = dr / vol
        e0 = flux / (sv[:-1] * sv[1:])
        E = np.empty((m, n))
        V = np.empty((m, n, n))
        for k in range(m):
            E[k], V[k] = eigh_tridiagonal(d0 + 4.0 * rc ** 2 * mu[k], e0)
        self.E, self.V, self.sv = E, V, sv
        self.Vt = np.ascontiguousarray(V.transpose(0, 2, 1))
        self._mult_cache: dict = {}

    @property
    def n_r(self) -> int:
        return self.rc.size

    @property
    def n_tau(self) -> int:
        return self.tau.size

    @property
    def shape(self):
        return (self.n_r, self.n_tau)

    def weights(self) -> np.ndarray:
        """Haar measure of each (r-cell, tau-cell) ring; the tau cells cover both signs."""
        return 2.0 * np.pi * self.vol[:, None] * (2.0 * self.om)[None, :]

    def norms(self) -> np.ndarray:
        return hnorm_rt(self.rc[:, None], self.tau[None, :])

    def forward(self, u: np.ndarray) -> np.ndarray:
        """Coefficients of ``u`` in the joint eigenbasis, shape ``(n_tau, n_r)``."""
        uh = u @ (self.om[:, None] * self.S)
        z = (self.sv[:, None] * uh).T
        return np.matmul(self.Vt, z[:, :, None])[:, :, 0]

    def backward(self, c: np.ndarray) -> np.ndarray:
        z = np.matmul(self.V, c[:, :, None])[:, :, 0]
        return (z.T / self.sv[:, None]) @ self.S.T

    def apply_multiplier(self, u: np.ndarray, mult: np.ndarray) -> np.ndarray:
        return self.backward(self.forward(u) * mult)

    def operator(self, u: np.ndarray) -> np.ndarray:
        """The discrete sub-Laplacian itself (for consistency tests)."""
        return self.apply_multiplier(u, self.E)

    # multipliers ---------------------------------------------------------

    def heat_multiplier(self, t: float) -> np.ndarray:
        key = ("heat", float(t))
        hit = self._mult_cache.get(key)
        if hit is None:
            hit = self._remember(key, np.exp(t * self.E))
        return hit

    def subordinated_multiplier(self, t: float, alpha: float, n_nodes: int = 200) -> np.ndarray:
        """Quadrature of ``int exp(s E) phi_t(s) ds`` over the subordination nodes."""
        from .kernels import subordination_nodes

        key = ("sub", float(t), float(alpha), n_nodes)
        hit = self._mult_cache.get(key)
        if hit is None:
            s, w = subordination_nodes(alpha, t, n_nodes)
            out = np.zeros_like(self.E)
            for sk, wk in zip(s, w):
                out += wk * np.exp(sk * self.E)
            hit = self._remember(key, out)
        return hit

    def fractional_power_multiplier(self, t: float, alpha: float) -> np.ndarray:
        """``exp(-t (-E)^(alpha/2))``: the exact fractional semigroup of the discrete operator."""
        return np.exp(-t * (-self.E) ** (0.5 * alpha))

    def semigroup_multiplier(self, t: float, alpha: float) -> np.ndarray:
        return self.heat_multiplier(t) if alpha == 2 else self.subordinated_multiplier(t, alpha)

    def _remember(self, key, value):
        if len(self._mult_cache) > 64:
            self._mult_cache.clear()
        self._mult_cache[key] = value
        return value


class AxialField:
    """Rotation-invariant, tau-even function sampled on an :class:`AxialGrid`.

    ``values[j, k]`` is the value at horizontal radius ``rc[j]`` and height
    ``+-tau[k]``.
    """

    def __init__(self, grid: AxialGrid, values):
        self.grid = grid
        eng = grid.engine()
        values = np.asarray(values, dtype=float)
        if values.shape != eng.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {eng.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.values = values

    @property
    def engine(self) -> AxialEngine:
        return self.grid.engine()

    @classmethod
    def from_profile(cls, grid: AxialGrid, f) -> "AxialField":
        """Sample ``f(|eta|)`` at the cell centers."""
        return cls(grid, np.asarray(f(grid.engine().norms()), dtype=float))

    @classmethod
    def delta(cls, grid: AxialGrid, mass: float = 1.0) -> "AxialField":
        """Point mass at the origin: all mass in the central cell."""
        eng = grid.engine()
        v = np.zeros(eng.shape)
        v[0, 0] = mass / eng.weights()[0, 0]
        return cls(grid, v)

    def copy_with(self, values) -> "AxialField":
        return AxialField(self.grid, values)

    def mass(self) -> float:
        return float(np.sum(self.values * self.engine.weights()))

    def sup(self) -> float:
        return float(self.values.max())

    def interpolator(self):
        eng = self.engine
        r = np.concatenate([[0.0], eng.rc, [eng.faces[-1]]])
        t = np.concatenate([eng.tau, [self.grid.tau_max]])
        v = np.zeros((r.size, t.size))
        v[1:-1, :-1] = self.values
        v[0, :-1] = self.values[0]  # even extension across the axis
        return RegularGridInterpolator((r, t), v, bounds_error=False, fill_value=0.0)

    def evaluate(self, r, tau):
        """Bilinear interpolation at arbitrary ``(r, tau)``; zero outside the cylinder."""
        r = np.abs(np.asarray(r, dtype=float))
        tau = np.abs(np.asarray(tau, dtype=float))
        r, tau = np.broadcast_arrays(r, tau)
        pts = np.stack([r.ravel(), tau.ravel()], axis=-1)
        return self.interpolator()(pts).reshape(r.shape)

    def evaluate_xyt(self, x, y, tau):
        return self.evaluate(np.hypot(x, y), tau)
