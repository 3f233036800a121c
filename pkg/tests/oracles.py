"""Independent reference values used by the tests.

Nothing here is imported by the package; each oracle is derived by a route
separate from the code it checks.
"""
import math
import warnings

import numpy as np
from scipy import integrate


def exact_heat_kernel(r, tau, t):
    """Heat kernel of the sub-Laplacian on H^1 as a one-dimensional Fourier integral in ``tau``.

    For the vector fields ``X = d_x - 2y d_tau``, ``Y = d_y + 2x d_tau`` the
    partial Fourier transform in ``tau`` turns the operator into a harmonic
    oscillator whose Mehler kernel gives
    ``G = (1/pi) int_0^inf xi / (pi sinh 4 xi t) exp(-xi r^2 coth 4 xi t) cos(xi tau) dxi``.
    """
    def f(xi):
        return (xi / (math.pi * math.sinh(4 * xi * t)) * math.exp(-xi * r * r / math.tanh(4 * xi * t))
                * math.cos(xi * tau) / math.pi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val, _ = integrate.quad(f, 1e-12, 60.0 / t, limit=400)
    return val


def origin_heat_kernel(t):
    """Closed form of the integral above at the origin: ``1 / (64 t^2)``."""
    return 1.0 / (64.0 * t * t)


def unit_ball_volume_by_counting(n=200):
    """Midpoint count of cells of ``[-1,1]^3`` inside the unit ball of H^1, with Richardson on n, 2n.

    The count converges at first order in the cell size (boundary layer),
    so the Richardson combination ``2 V(2n) - V(n)`` removes the leading error.
    """
    def count(m):
        h = 2.0 / m
        c = -1 + h * (np.arange(m) + 0.5)
        # integrate out the angle: cells in (r, tau) weighted by 2 pi r
        R, T = np.meshgrid(c[c > 0], c, indexing="ij")
        inside = (R ** 4 + T ** 2) < 1
        return float(np.sum(2 * math.pi * R * inside) * h * h)
    return 2 * count(2 * n) - count(n)


def ball_mass_monte_carlo(profile, sigma, n=10_000_000, seed=7, chunk=1_000_000):
    """Brute-force ``int_{|eta| < sigma} profile(|eta|)`` by uniform sampling of the bounding box."""
    rng = np.random.default_rng(seed)
    box = np.array([sigma, sigma, sigma * sigma])
    acc = 0.0
    acc2 = 0.0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        pts = (rng.random((m, 3)) * 2 - 1) * box
        rho = ((pts[:, 0] ** 2 + pts[:, 1] ** 2) ** 2 + pts[:, 2] ** 2) ** 0.25
        v = np.where(rho < sigma, profile(rho), 0.0)
        acc += v.sum()
        acc2 += (v * v).sum()
        done += m
    vol = float(np.prod(2 * box))
    mean = acc / n
    se = math.sqrt(max(acc2 / n - mean * mean, 0.0) / n)
    return mean * vol, se * vol


def small_axial_grid():
    from heisenberg_fujita.axial import AxialGrid
    return AxialGrid(r_max=6.0, tau_max=20.0, hr=0.1, htau=0.1, r_core=2.0, tau_core=2.0, ratio=1.08)
