"""Linear flows on H^1: heat semigroup, fractional semigroup, Monte Carlo oracle.

Two discretizations live here.

``Field`` / ``GridSpec``
    A uniform Cartesian box in ``(x, y, tau)`` with homogeneous Dirichlet
    data.  ``sublaplacian_apply`` is the centered second-order stencil with
    mixed derivatives and ``heat_evolve`` is explicit Euler under a CFL
    bound.  General (non-radial) data use this path; it is expensive, so it
    is meant for small boxes.

``AxialField`` / ``AxialGrid`` (see :mod:`.axial`)
    Rotation-invariant, tau-even data.  Flows are applied exactly through an
    eigen-decomposition, so kernels and long nonlinear runs are cheap.
    ``heat_kernel`` computes on this path and samples the result onto the
    requested Cartesian grid.

:func:`flow` dispatches on the field type.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from .axial import AxialField, AxialGrid
from .hgroup import GroupPoint, compose_xyt
from .kernels import subordination_nodes


class InstabilityError(RuntimeError):
    """Non-finite values appeared during time stepping."""


class ConfigurationError(ValueError):
    """Parameters that cannot produce a meaningful run."""


# ---------------------------------------------------------------------------
# Cartesian grids and fields

@dataclass(frozen=True)
class GridSpec:
    """Uniform box ``[-Rx,Rx] x [-Ry,Ry] x [-Rtau,Rtau]`` with odd point counts."""

    half_widths: tuple = (6.0, 6.0, 24.0)
    points: tuple = (97, 97, 193)

    def __post_init__(self):
        hw = tuple(float(v) for v in self.half_widths)
        pts = tuple(int(v) for v in self.points)
        if len(hw) != 3 or len(pts) != 3:
            raise ValueError("GridSpec needs three half widths and three point counts")
        if any(v <= 0 for v in hw):
            raise ValueError("half widths must be positive")
        if any(n < 3 or n % 2 == 0 for n in pts):
            raise ValueError("point counts must be odd and >= 3 so the grid is symmetric")
        object.__setattr__(self, "half_widths", hw)
        object.__setattr__(self, "points", pts)

    @property
    def spacings(self):
        return tuple(2.0 * R / (n - 1) for R, n in zip(self.half_widths, self.points))

    @property
    def h_min(self) -> float:
        return min(self.spacings)

    @property
    def cell_volume(self) -> float:
        hx, hy, ht = self.spacings
        return hx * hy * ht

    @property
    def shape(self):
        return self.points

    def axes(self):
        return tuple(np.linspace(-R, R, n) for R, n in zip(self.half_widths, self.points))

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def dilated(self, lam: float) -> "GridSpec":
        Rx, Ry, Rt = self.half_widths
        return GridSpec((lam * Rx, lam * Ry, lam * lam * Rt), self.points)

    def contains(self, p: GroupPoint) -> bool:
        Rx, Ry, Rt = self.half_widths
        return abs(p.x[0]) <= Rx and abs(p.y[0]) <= Ry and abs(p.tau) <= Rt

    def axial_grid(self) -> AxialGrid:
        """Axisymmetric cylinder matched to this box.

        Mesh sizes scale with the box so that a dilated box yields an exactly
        dilated cylinder.
        """
        Rx, Ry, Rt = self.half_widths
        R = max(Rx, Ry)
        return AxialGrid(r_max=math.hypot(Rx, Ry), tau_max=Rt, hr=R / 120.0, htau=Rt / 480.0,
                         r_core=R / 3.0, tau_core=Rt / 6.0)

    def summary(self) -> dict:
        return {"half_widths": list(self.half_widths), "points": list(self.points)}


SNAPSHOT_MAGIC = b"HFIELD\x00\x00"
SNAPSHOT_VERSION = 1


class Field:
    """Samples of a function on a :class:`GridSpec`, array shape ``(nx, ny, ntau)``."""

    def __init__(self, spec: GridSpec, values):
        values = np.asarray(values, dtype=float)
        if values.size != np.prod(spec.points):
            raise ValueError(f"expected {np.prod(spec.points)} values, got {values.size}")
        values = values.reshape(spec.points)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.spec = spec
        self.values = values

    @classmethod
    def zeros(cls, spec: GridSpec) -> "Field":
        return cls(spec, np.zeros(spec.points))

    @classmethod
    def from_function(cls, spec: GridSpec, f) -> "Field":
        X, Y, T = spec.mesh()
        return cls(spec, np.broadcast_to(f(X, Y, T), spec.points).copy())

    @classmethod
    def delta(cls, spec: GridSpec, mass: float = 1.0) -> "Field":
        v = np.zeros(spec.points)
        v[tuple(n // 2 for n in spec.points)] = mass / spec.cell_volume
        return cls(spec, v)

    def copy_with(self, values) -> "Field":
        return Field(self.spec, values)

    def mass(self) -> float:
        return float(self.values.sum() * self.spec.cell_volume)

    def sup(self) -> float:
        return float(self.values.max())

    def inverted(self) -> "Field":
        """The field composed with the group inverse, ``eta -> -eta``."""
        return Field(self.spec, self.values[::-1, ::-1, ::-1])

    # I/O ---------------------------------------------------------------
    def save(self, path):
        nx, ny, nt = self.spec.points
        Rx, Ry, Rt = self.spec.half_widths
        with open(path, "wb") as fh:
            fh.write(SNAPSHOT_MAGIC)
            fh.write(struct.pack("<4q3d", SNAPSHOT_VERSION, nx, ny, nt, Rx, Ry, Rt))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Field":
        data = Path(path).read_bytes()
        if data[:8] != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a field snapshot")
        version, nx, ny, nt, Rx, Ry, Rt = struct.unpack_from("<4q3d", data, 8)
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        off = 8 + struct.calcsize("<4q3d")
        vals = np.frombuffer(data, dtype="<f8", offset=off)
        return cls(GridSpec((Rx, Ry, Rt), (nx, ny, nt)), vals.copy())

    def to_csv(self, path):
        X, Y, T = self.spec.mesh()
        table = np.column_stack([X.ravel(), Y.ravel(), T.ravel(), self.values.ravel()])
        np.savetxt(path, table, delimiter=",", header="x,y,tau,value", comments="", fmt="%.17g")


@dataclass
class DiscreteMeasure:
    """A nonnegative density (Cartesian or axial) plus point masses."""

    density: Field | AxialField | None = None
    atoms: list = dc_field(default_factory=list)

    def __post_init__(self):
        for p, m in self.atoms:
            if not isinstance(p, GroupPoint) or not m > 0:
                raise ValueError("atoms must be (GroupPoint, positive mass) pairs")

    def total_mass(self) -> float:
        m = sum(float(w) for _, w in self.atoms)
        return m + (self.density.mass() if self.density is not None else 0.0)


# ---------------------------------------------------------------------------
# Cartesian stencil and explicit flow

def _pad(u):
    return np.pad(u, 1)


def _coefficients(spec: GridSpec):
    x, y, _ = spec.axes()
    return x[:, None, None], y[None, :, None]


def sublaplacian_apply(u: Field) -> Field:
    """Centered second-order finite differences of the sub-Laplacian.

    ``u_xx + u_yy + 4(x^2+y^2) u_tautau + 4x u_ytau - 4y u_xtau`` with zero
    values outside the box.
    """
    v = u.values
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input")
    hx, hy, ht = u.spec.spacings
    x, y = _coefficients(u.spec)
    p = _pad(v)
    c = p[1:-1, 1:-1, 1:-1]
    uxx = (p[2:, 1:-1, 1:-1] - 2 * c + p[:-2, 1:-1, 1:-1]) / hx ** 2
    uyy = (p[1:-1, 2:, 1:-1] - 2 * c + p[1:-1, :-2, 1:-1]) / hy ** 2
    utt = (p[1:-1, 1:-1, 2:] - 2 * c + p[1:-1, 1:-1, :-2]) / ht ** 2
    uyt = (p[1:-1, 2:, 2:] - p[1:-1, 2:, :-2] - p[1:-1, :-2, 2:] + p[1:-1, :-2, :-2]) / (4 * hy * ht)
    uxt = (p[2:, 1:-1, 2:] - p[2:, 1:-1, :-2] - p[:-2, 1:-1, 2:] + p[:-2, 1:-1, :-2]) / (4 * hx * ht)
    out = uxx + uyy + 4.0 * (x * x + y * y) * utt + 4.0 * x * uyt - 4.0 * y * uxt
    return Field(u.spec, out)


def cfl_time_step(spec: GridSpec, cfl_safety: float = 0.4) -> float:
    Rx, Ry, _ = spec.half_widths
    max_coef = 2.0 + 4.0 * (Rx * Rx + Ry * Ry)
    return cfl_safety * spec.h_min ** 2 / (2.0 * max_coef)


def heat_evolve(u0: Field, t: float, cfl_safety: float = 0.4, checkpoints: Sequence[float] = (),
                diagnostics: dict | None = None):
    """Explicit Euler heat flow on the Cartesian box.

    Returns the field at time ``t``; if ``checkpoints`` are given, returns a
    list of fields at those times (each clamped to ``t``) plus the final one.
    Negative values produced by the stencil are clamped to zero; the most
    negative pre-clamp value is written to ``diagnostics['min_before_clamp']``.
    """
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    dt_cfl = cfl_time_step(u0.spec, cfl_safety)
    if dt_cfl <= 1e-12:
        raise ConfigurationError(f"CFL time step {dt_cfl:.3e} too small for this box")
    n_steps = max(1, int(math.ceil(t / dt_cfl)))
    dt = t / n_steps
    marks = sorted(float(c) for c in checkpoints)
    mark_steps = [min(n_steps, int(round(c / dt))) for c in marks]
    stored = []
    u = u0
    worst = 0.0
    for step in range(1, n_steps + 1):
        v = u.values + dt * sublaplacian_apply(u).values
        if not np.all(np.isfinite(v)):
            raise InstabilityError(f"non-finite values at step {step}/{n_steps} (dt={dt:.3e})")
        worst = min(worst, float(v.min()))
        u = Field(u.spec, np.maximum(v, 0.0))
        while mark_steps and mark_steps[0] == step:
            stored.append(u)
            mark_steps.pop(0)
    if diagnostics is not None:
        diagnostics.update(min_before_clamp=worst, n_steps=n_steps, dt=dt)
    if marks:
        return stored + [u]
    return u


# ---------------------------------------------------------------------------
# Generic flows

def _axial_flow(u: AxialField, mult) -> AxialField:
    v = u.engine.apply_multiplier(u.values, mult)
    # the exact exponential is a positive map; only roundoff can go negative
    return u.copy_with(np.maximum(v, 0.0) if u.values.min() >= 0 else v)


def heat_flow(u, t: float):
    if t == 0:
        return u
    if isinstance(u, AxialField):
        return _axial_flow(u, u.engine.heat_multiplier(t))
    return heat_evolve(u, t)


def frac_evolve(u0, t: float, alpha: float, n_nodes: int = 200, cutoff: float = 1e-13):
    """Fractional flow by subordination: ``sum_k w_k e^{s_k Delta} u0``.

    The weights come from :func:`kernels.subordination_nodes` and sum to one.
    On axial fields the average is one spectral multiplier.  On Cartesian
    fields the nodes are visited in increasing order by a single explicit
    march; once the flow has decayed below ``cutoff`` times its initial sup
    the remaining (tiny) contributions are dropped.
    """
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    if not 0 < alpha < 2:
        raise ConfigurationError("subordination needs 0 < alpha < 2; use heat_flow for alpha = 2")
    if isinstance(u0, AxialField):
        return _axial_flow(u0, u0.engine.subordinated_multiplier(t, alpha, n_nodes))
    s, w = subordination_nodes(alpha, t, n_nodes)
    acc = np.zeros_like(u0.values)
    cur, s_prev = u0, 0.0
    top = max(u0.sup(), 1e-300)
    for sk, wk in zip(s, w):
        cur = heat_evolve(cur, sk - s_prev)
        s_prev = sk
        acc += wk * cur.values
        if cur.sup() < cutoff * top:
            break
    return Field(u0.spec, acc)


def flow(u, t: float, alpha: float = 2.0):
    """The semigroup ``e^{t Lambda_alpha}`` applied to ``u``."""
    if alpha == 2:
        return heat_flow(u, t)
    if t == 0:
        return u
    return frac_evolve(u, t, alpha)


# ---------------------------------------------------------------------------
# Kernels and measures

def heat_kernel_axial(t: float, grid: AxialGrid, alpha: float = 2.0) -> AxialField:
    """Flow of the discrete unit point mass at the origin."""
    return flow(AxialField.delta(grid), t, alpha)


def heat_kernel(t: float, spec: GridSpec, alpha: float = 2.0, grid: AxialGrid | None = None) -> Field:
    """Discrete kernel ``G(., t)`` sampled on the Cartesian grid ``spec``.

    The kernel is computed on the axisymmetric cylinder matched to the box
    (or the one supplied) and interpolated bilinearly in ``(r, |tau|)``.
    """
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    K = heat_kernel_axial(t, grid or spec.axial_grid(), alpha)
    X, Y, T = spec.mesh()
    return Field(spec, K.evaluate_xyt(X, Y, T))


def sample_on_grid(u: AxialField, spec: GridSpec) -> Field:
    X, Y, T = spec.mesh()
    return Field(spec, u.evaluate_xyt(X, Y, T))


def apply_to_measure(mu: DiscreteMeasure, t: float, alpha: float = 2.0, spec: GridSpec | None = None):
    """``e^{t Lambda_alpha} mu`` for a density plus atoms.

    With an axial (or absent) density and all atoms at the origin the result
    stays axial.  Otherwise a Cartesian ``spec`` is needed: each atom
    contributes its mass times the kernel translated by the group law,
    evaluated at ``zeta^{-1} o eta`` and renormalized so the sampled mass
    equals the kernel mass.
    """
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    origin_atoms = all(np.all(p.as_array() == 0) for p, _ in mu.atoms)
    if spec is None and isinstance(mu.density, Field):
        spec = mu.density.spec
    if spec is None:
        if not origin_atoms:
            raise ValueError("atoms away from the origin need a Cartesian GridSpec")
        grid = mu.density.grid if mu.density is not None else AxialGrid()
        out = np.zeros(grid.engine().shape)
        if mu.density is not None:
            out += flow(mu.density, t, alpha).values
        total = sum(m for _, m in mu.atoms)
        if total:
            out += total * heat_kernel_axial(t, grid, alpha).values
        return AxialField(grid, out)

    for p, _ in mu.atoms:
        if not spec.contains(p):
            raise ValueError(f"atom at {p.as_array()} lies outside the grid box")
    out = np.zeros(spec.points)
    if mu.density is not None:
        if isinstance(mu.density, AxialField):
            out += sample_on_grid(flow(mu.density, t, alpha), spec).values
        else:
            if mu.density.spec != spec:
                raise ValueError("density grid differs from the target grid")
            out += flow(mu.density, t, alpha).values
    if mu.atoms:
        K = heat_kernel_axial(t, spec.axial_grid(), alpha)
        X, Y, T = spec.mesh()
        for p, m in mu.atoms:
            dx, dy, dt = compose_xyt(-p.x[0], -p.y[0], -p.tau, X, Y, T)
            vals = K.evaluate_xyt(dx, dy, dt)
            s = vals.sum() * spec.cell_volume
            if s > 0:
                vals *= K.mass() / s
            out += m * vals
    return Field(spec, out)


# ---------------------------------------------------------------------------
# Monte Carlo oracle

def horizontal_brownian_endpoints(t: float, n_samples: int, seed: int, h_step: float = 0.01,
                                  shard: int = 1 << 15):
    """Endpoints at time ``t`` of the diffusion generated by the sub-Laplacian.

    ``dX = sqrt(2) dB1``, ``dY = sqrt(2) dB2``, ``dtau = 2 (X dY - Y dX)``.
    The midpoint rule for the area term coincides with the left-point rule
    because the increment terms cancel, so no drift correction appears.
    Samples are generated in shards with seeds spawned from ``seed`` so the
    result does not depend on how the work is split.
    """
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    n_steps = max(100, int(math.ceil(t / h_step)))
    dt = t / n_steps
    n_shards = -(-n_samples // shard)
    seqs = np.random.SeedSequence(seed).spawn(n_shards)
    out = np.empty((n_samples, 3))
    for i, ss in enumerate(seqs):
        lo, hi = i * shard, min(n_samples, (i + 1) * shard)
        rng = np.random.default_rng(ss)
        m = hi - lo
        x = np.zeros(m)
        y = np.zeros(m)
        tau = np.zeros(m)
        sd = math.sqrt(2.0 * dt)
        for _ in range(n_steps):
            dx = sd * rng.standard_normal(m)
            dy = sd * rng.standard_normal(m)
            tau += 2.0 * (x * dy - y * dx)
            x += dx
            y += dy
        out[lo:hi] = np.column_stack([x, y, tau])
    return out


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    stderr: float
    n_samples: int
    bandwidth: tuple
    smoothed_mass: float


def mc_heat_kernel(eta: GroupPoint, t: float, n_samples: int = 200_000, seed: int = 12345,
                   bandwidth=(0.125, 0.125, 0.25), h_step: float = 0.01, rotational: bool = False,
                   samples=None) -> MonteCarloEstimate:
    """Kernel-smoothed density of the hypoelliptic diffusion at ``eta``.

    Gaussian product kernel with the given bandwidths (default: the spacing
    of the default grid).  With ``rotational=True`` the horizontal kernel is
    averaged over rotations about the tau axis, which is legitimate because
    the heat kernel is rotation invariant and reduces the variance a lot.
    """
    if n_samples < 10_000:
        raise ValueError("Monte Carlo estimate needs at least 10^4 samples")
    if samples is None:
        samples = horizontal_brownian_endpoints(t, n_samples, seed, h_step)
    hx, hy, ht = bandwidth
    X, Y, T = samples[:, 0], samples[:, 1], samples[:, 2]
    ex, ey, et = float(eta.x[0]), float(eta.y[0]), float(eta.tau)
    kt = np.exp(-0.5 * ((T - et) / ht) ** 2) / (math.sqrt(2 * math.pi) * ht)
    if rotational:
        if hx != hy:
            raise ValueError("rotational smoothing needs equal horizontal bandwidths")
        r0 = math.hypot(ex, ey)
        R = np.hypot(X, Y)
        # angular average of a 2D Gaussian: exp(-(r^2+R^2)/2h^2) I0(rR/h^2)/(2 pi h^2)
        z = r0 * R / hx ** 2
        kz = np.exp(-0.5 * ((r0 - R) / hx) ** 2) * special.i0e(z) / (2 * math.pi * hx ** 2)
    else:
        kz = (np.exp(-0.5 * ((X - ex) / hx) ** 2 - 0.5 * ((Y - ey) / hy) ** 2)
              / (2 * math.pi * hx * hy))
    k = kz * kt
    est = float(k.mean())
    se = float(k.std(ddof=1) / math.sqrt(k.size))
    # mass of the smoothed empirical measure inside a box of half width 50 bandwidths
    box = 50.0
    def _frac(c, h):
        return 0.5 * (special.erf((box * h - c) / (math.sqrt(2) * h)) + special.erf((box * h + c) / (math.sqrt(2) * h)))
    mass = float(np.mean(_frac(X, hx) * _frac(Y, hy) * _frac(T, ht)))
    return MonteCarloEstimate(est, se, int(k.size), tuple(bandwidth), mass)


# ---------------------------------------------------------------------------
# Group convolution of radial functions

def group_convolve_radial(f: AxialField, g: AxialField, xi_max: float | None = None,
                          n_xi: int = 512, n_theta: int = 96) -> AxialField:
    """``(f * g)(eta) = int f(zeta^{-1} o eta) g(zeta) d zeta`` for axial fields.

    In Fourier variables along ``tau`` the group convolution becomes a
    planar convolution twisted by the phase ``cos(2 xi r rho sin(theta))``:

        F(r, xi) = int rho drho dtheta  f^(d, xi) g^(rho, xi) cos(2 xi r rho sin theta)

    with ``d^2 = r^2 + rho^2 - 2 r rho cos theta``.  The result is transformed
    back and returned on ``f``'s grid.
    """
    if f.grid != g.grid:
        raise ValueError("both fields must live on the same axial grid")
    eng = f.engine
    tau, om = eng.tau, 2.0 * eng.om
    if xi_max is None:
        xi_max = math.pi / (2.0 * tau[1])
    xi = np.linspace(0.0, xi_max, n_xi)
    C = np.cos(np.outer(tau, xi))  # (n_tau, n_xi)
    fh = (f.values * om) @ C  # (n_r, n_xi)
    gh = (g.values * om) @ C
    rc, vol = eng.rc, eng.vol
    r_ext = np.concatenate([[0.0], rc, [eng.faces[-1]]])
    fh_ext = np.vstack([fh[:1], fh, np.zeros((1, n_xi))])

    theta = (np.arange(n_theta) + 0.5) * (2 * math.pi / n_theta)
    cth, sth = np.cos(theta), np.sin(theta)
    active = np.nonzero(np.abs(gh).max(axis=1) > 1e-14 * np.abs(gh).max())[0]
    out_hat = np.zeros_like(fh)
    for i, r in enumerate(rc):
        acc = np.zeros(n_xi)
        for j in active:
            rho = rc[j]
            d = np.sqrt(np.maximum(r * r + rho * rho - 2 * r * rho * cth, 0.0))
            idx = np.clip(np.searchsorted(r_ext, d) - 1, 0, r_ext.size - 2)
            frac = np.clip((d - r_ext[idx]) / (r_ext[idx + 1] - r_ext[idx]), 0.0, 1.0)
            fd = fh_ext[idx] * (1 - frac)[:, None] + fh_ext[idx + 1] * frac[:, None]
            fd[d >= r_ext[-1]] = 0.0
            phase = np.cos(2.0 * np.outer(r * rho * sth, xi))
            acc += vol[j] * gh[j] * (fd * phase).sum(axis=0) * (2 * math.pi / n_theta)
        out_hat[i] = acc
    # inverse cosine transform: h(tau) = (1/pi) int_0^inf H(xi) cos(xi tau) dxi
    wxi = np.full(n_xi, xi[1] - xi[0])
    wxi[[0, -1]] *= 0.5
    vals = (out_hat * wxi) @ C.T / math.pi
    return AxialField(f.grid, vals)
