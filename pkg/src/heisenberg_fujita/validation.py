"""Numerical checks of the linear layer, shared by the CLI and the test suite.

Every check returns a plain dict with the measured quantity, the tolerance
and a ``passed`` flag, so reports serialize directly to JSON.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .axial import AxialField, AxialGrid
from .hgroup import GroupPoint, hnorm_rt, hnorm_xyt
from .kernels import envelope_fit
from .semigroup import (GridSpec, group_convolve_radial, heat_kernel, heat_kernel_axial,
                        horizontal_brownian_endpoints, mc_heat_kernel)

DEFAULT_PROBES = ((0.0, 0.0, 0.0), (0.5, 0.0, 0.0), (0.0, 0.0, 1.0), (1.0, 0.0, 1.0), (0.0, 1.5, -0.5))


def _check(name, value, tol, passed, **extra):
    out = {"check": name, "value": float(value), "tolerance": float(tol), "passed": bool(passed)}
    out.update(extra)
    return out


def mass_check(spec: GridSpec, times: Sequence[float] = (0.25, 0.5, 1.0), alpha: float = 2.0,
               tol: float = 0.02) -> list:
    """Total mass of the kernel sampled on the Cartesian grid."""
    out = []
    for t in times:
        m = heat_kernel(t, spec, alpha).mass()
        out.append(_check(f"mass t={t:g}", abs(m - 1.0), tol, abs(m - 1.0) <= tol, mass=m))
    return out


def symmetry_check(spec: GridSpec, t: float = 0.5, alpha: float = 2.0, tol: float = 1e-8) -> dict:
    """``G(eta) = G(eta^{-1})``; on a symmetric grid inversion reverses every axis."""
    K = heat_kernel(t, spec, alpha)
    scale = K.sup()
    d = float(np.max(np.abs(K.values - K.inverted().values))) / scale
    return _check(f"inversion symmetry t={t:g}", d, tol, d <= tol)


def chapman_kolmogorov_check(grid: AxialGrid, t: float = 0.5, tol: float = 0.05) -> dict:
    """L1 defect of ``G(t/2) * G(t/2)`` against ``G(t)`` (group convolution)."""
    half = heat_kernel_axial(0.5 * t, grid)
    full = heat_kernel_axial(t, grid)
    conv = group_convolve_radial(half, half)
    w = grid.engine().weights()
    defect = float(np.sum(np.abs(conv.values - full.values) * w) / np.sum(np.abs(full.values) * w))
    return _check(f"Chapman-Kolmogorov t={t:g}", defect, tol, defect <= tol)


def dilation_check(spec: GridSpec, t: float = 0.25, lam: float = 2.0, radius: float = 1.0,
                   tol: float = 0.05) -> list:
    """``G(delta_lam eta, lam^2 t) = lam^(-Q) G(eta, t)`` near the origin.

    Compared on a grid pair related by the dilation and, to expose the
    discretization error, on one grid.
    """
    Q = 4
    base = heat_kernel_axial(t, spec.axial_grid())
    eng = base.engine
    near = eng.norms() <= radius
    r, tau = eng.rc[:, None] * np.ones_like(eng.tau)[None, :], np.ones_like(eng.rc)[:, None] * eng.tau[None, :]
    ref = lam ** (-Q) * base.values[near]
    out = []
    pair = heat_kernel_axial(lam * lam * t, spec.dilated(lam).axial_grid())
    got = pair.evaluate(lam * r[near], lam * lam * tau[near])
    err = float(np.max(np.abs(got - ref)) / np.max(ref))
    out.append(_check(f"dilation lam={lam:g} (grid pair)", err, tol, err <= tol))
    same = heat_kernel_axial(lam * lam * t, spec.axial_grid())
    got = same.evaluate(lam * r[near], lam * lam * tau[near])
    err = float(np.max(np.abs(got - ref)) / np.max(ref))
    out.append(_check(f"dilation lam={lam:g} (single grid)", err, tol, err <= tol))
    return out


def kernel_samples(t: float, grid: AxialGrid, alpha: float = 2.0, radius_factor: float = 3.0,
                   floor: float = 1e-10):
    """Norms and values of the axial kernel inside ``|eta| <= radius_factor t^(1/alpha)``."""
    K = heat_kernel_axial(t, grid, alpha)
    n = K.engine.norms()
    keep = (n <= radius_factor * t ** (1.0 / alpha)) & (K.values > floor * K.sup())
    return n[keep], K.values[keep]


def envelope_check(grid: AxialGrid, alpha: float = 2.0, fit_time: float = 1.0,
                   holdout: Sequence[float] = (0.5, 2.0), max_spread: float = 1e3,
                   max_violation: float = 0.01, n_grid: int = 60):
    """Fit two-sided envelopes at ``fit_time`` and test them on held-out times."""
    Q = 4
    n, v = kernel_samples(fit_time, grid, alpha)
    env = envelope_fit(n, fit_time, v, alpha, Q, n_grid=n_grid)
    spread = env.C2 / env.C1
    out = [_check("envelope C2/C1", spread, max_spread, np.isfinite(spread) and spread <= max_spread,
                  C1=env.C1, c1=env.c1, C2=env.C2, c2=env.c2)]
    for t in holdout:
        n, v = kernel_samples(t, grid, alpha)
        lo = env.evaluate(n, t, "lower")
        hi = env.evaluate(n, t, "upper")
        frac = float(np.mean((v < lo * (1 - 1e-9)) | (v > hi * (1 + 1e-9))))
        out.append(_check(f"envelope held-out t={t:g}", frac, max_violation, frac <= max_violation,
                          n_samples=int(v.size)))
    return env, out


def monte_carlo_check(grid: AxialGrid, t: float = 1.0, probes=DEFAULT_PROBES, n_samples: int = 200_000,
                      seed: int = 12345, n_sigma: float = 3.0, rel: float = 0.05) -> list:
    """Kernel-smoothed diffusion endpoints against the grid kernel at probe points.

    The grid kernel is compared after the same Gaussian smoothing in
    ``(r, tau)`` the estimator applies, evaluated by quadrature on the
    axial mesh, so the comparison is free of smoothing bias.
    """
    K = heat_kernel_axial(t, grid)
    samples = horizontal_brownian_endpoints(t, n_samples, seed)
    bw = (0.125, 0.125, 0.25)
    out = []
    for x, y, tau in probes:
        est = mc_heat_kernel(GroupPoint([x], [y], tau), t, n_samples, seed, bw, rotational=True, samples=samples)
        ref = _smoothed_axial(K, math.hypot(x, y), tau, bw[0], bw[2])
        err = abs(est.estimate - ref)
        tol = n_sigma * est.stderr + rel * ref
        out.append(_check(f"Monte Carlo at ({x:g},{y:g},{tau:g})", err, tol, err <= tol,
                          mc=est.estimate, stderr=est.stderr, grid=ref))
    return out


def _smoothed_axial(K: AxialField, r0: float, tau0: float, h: float, ht: float) -> float:
    from scipy import special

    eng = K.engine
    R = eng.rc[:, None]
    z = r0 * R / h ** 2
    kr = np.exp(-0.5 * ((r0 - R) / h) ** 2) * special.i0e(z) / (2 * math.pi * h ** 2)
    w = eng.weights() / 2.0  # one sign of tau per column; add both signs explicitly
    kt = (np.exp(-0.5 * ((eng.tau[None, :] - tau0) / ht) ** 2)
          + np.exp(-0.5 * ((-eng.tau[None, :] - tau0) / ht) ** 2)) / (math.sqrt(2 * math.pi) * ht)
    return float(np.sum(K.values * kr * kt * w))


def fractional_tail_slope(grid: AxialGrid, alpha: float = 1.0, t: float = 1.0,
                          norms=(2.0, 4.0), angles=(0.0, math.pi / 4), target: float | None = None,
                          tol: float = 0.5) -> list:
    """Log-log slope of the fractional kernel along rays of fixed angle in ``(r^2, tau)``."""
    target = -(4 + alpha) if target is None else target
    K = heat_kernel_axial(t, grid, alpha)
    hs = np.linspace(norms[0], norms[1], 9)
    out = []
    for ang in angles:
        v = K.evaluate(hs * math.sqrt(math.cos(ang)), hs * hs * math.sin(ang))
        if np.any(v <= 0):
            # ray leaves the grid before the outer norm
            out.append(_check(f"far-field slope alpha={alpha:g} angle={ang:.3f}", math.inf, tol, False,
                              slope=math.nan))
            continue
        slope = float(np.polyfit(np.log(hs), np.log(v), 1)[0])
        out.append(_check(f"far-field slope alpha={alpha:g} angle={ang:.3f}", abs(slope - target), tol,
                          abs(slope - target) <= tol, slope=slope))
    return out
