"""Closed-form kernel ingredients.

Envelope profiles for the two-sided heat-kernel bounds, the envelope itself,
a fitter for its constants, and the density of the stable subordinator that
turns heat flows into fractional flows.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .hgroup import GroupPoint, hnorm


class QuadratureError(RuntimeError):
    """Raised when a density evaluation fails its internal consistency check."""


def _check_alpha(alpha: float, closed: bool = True):
    ok = 0 < alpha <= 2 if closed else 0 < alpha < 2
    if not ok:
        raise ValueError(f"alpha={alpha} outside {'(0,2]' if closed else '(0,2)'}")


def g_profile(s, alpha: float, Q: int):
    """Decay profile: Gaussian for the heat kernel, algebraic for alpha < 2."""
    _check_alpha(alpha)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("profile argument must be nonnegative")
    if alpha == 2:
        out = np.exp(-s * s)
    else:
        out = (1.0 + s) ** (-Q - alpha)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class KernelEnvelope:
    """Constants of the lower/upper kernel envelopes ``C/t^(Q/a) g(|eta|/(c t^(1/a)))``."""

    alpha: float
    Q: int
    C1: float
    c1: float
    C2: float
    c2: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        for name in ("C1", "c1", "C2", "c2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    def evaluate(self, norm, t, side: str = "upper"):
        """Envelope as a function of the homogeneous norm and time."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("time must be positive")
        if side == "lower":
            C, c = self.C1, self.c1
        elif side == "upper":
            C, c = self.C2, self.c2
        else:
            raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")
        scale = t ** (1.0 / self.alpha)
        return C / t ** (self.Q / self.alpha) * g_profile(np.asarray(norm) / (c * scale), self.alpha, self.Q)

    @property
    def tightness(self) -> float:
        """``log(C2/C1) + log(c2/c1)``, the quantity the fitter minimizes."""
        return float(np.log(self.C2 / self.C1) + np.log(self.c2 / self.c1))


def envelope_eval(eta: GroupPoint, t: float, env: KernelEnvelope, side: str = "upper") -> float:
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    return float(env.evaluate(hnorm(eta), t, side))


def envelope_fit(norms, times, values, alpha: float, Q: int, n_grid: int = 50,
                 c_range=(0.1, 10.0), min_samples: int = 100) -> KernelEnvelope:
    """Fit envelope constants that bracket every sample.

    For each trial scale ``c`` on a log grid the amplitude is forced by the
    extremal sample ratio (smallest ratio for the lower envelope, largest for
    the upper one).  The lower and upper halves of the objective
    ``log(C2/C1) + log(c2/c1)`` decouple, so each scale is chosen separately.
    """
    norms = np.asarray(norms, dtype=float).ravel()
    times = np.broadcast_to(np.asarray(times, dtype=float), norms.shape).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if not (norms.shape == values.shape):
        raise ValueError("norms and values must have the same length")
    if values.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {values.size}")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ValueError("kernel samples must be strictly positive and finite")
    if np.any(times <= 0):
        raise ValueError("sample times must be positive")

    scaled = norms / times ** (1.0 / alpha)
    amp = values * times ** (Q / alpha)
    cs = np.logspace(np.log10(c_range[0]), np.log10(c_range[1]), n_grid)
    # log ratio of samples to the unit-amplitude profile for every trial scale
    with np.errstate(over="ignore", divide="ignore"):
        logr = np.log(amp)[None, :] - np.log(g_profile(scaled[None, :] / cs[:, None], alpha, Q))
    logC1 = logr.min(axis=1)
    logC2 = logr.max(axis=1)
    lo = np.argmax(logC1 + np.log(cs))
    hi = np.argmin(logC2 + np.log(cs))
    return KernelEnvelope(alpha, Q, float(np.exp(logC1[lo])), float(cs[lo]),
                          float(np.exp(logC2[hi])), float(cs[hi]))


# ---------------------------------------------------------------------------
# stable subordinator density

def _levy_half(x):
    """Density with Laplace transform exp(-sqrt(lambda))."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = (4.0 * np.pi) ** -0.5 * x ** -1.5 * np.exp(-0.25 / x)
    return np.where(x > 0, out, 0.0)


@lru_cache(maxsize=32)
def _kanter_nodes(beta: float, n: int):
    # Kanter's representation of the one-sided beta-stable density
    xs, ws = special.roots_legendre(n)
    u = 0.5 * np.pi * (xs + 1.0)
    w = 0.5 * ws  # includes the 1/pi prefactor
    with np.errstate(over="ignore"):
        a = (np.sin(beta * u) / np.sin(u)) ** (1.0 / (1.0 - beta)) * np.sin((1.0 - beta) * u) / np.sin(beta * u)
    return a, w


def _kanter(x, beta: float, n: int = 400):
    a, w = _kanter_nodes(beta, n)
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        z = x ** (-beta / (1.0 - beta))
        s = np.nan_to_num(w * a * np.exp(-np.multiply.outer(z, a))).sum(axis=-1)
        out = beta / (1.0 - beta) * x ** (-1.0 / (1.0 - beta)) * s
    # far left of the support the density underflows; inf * 0 shows up as nan
    return np.where(np.isfinite(out), out, 0.0)


def _series(x, beta: float, kmax: int = 400):
    # large-x expansion, convergent for beta < 1
    x = np.asarray(x, dtype=float)
    k = np.arange(1, kmax + 1)
    logc = special.gammaln(k * beta + 1.0) - special.gammaln(k + 1.0)
    coef = (-1.0) ** (k + 1) * np.sin(k * np.pi * beta) * np.exp(logc)
    terms = coef * np.exp(-np.multiply.outer(np.log(x), k * beta + 1.0))
    return terms.sum(axis=-1) / np.pi


@lru_cache(maxsize=32)
def _switch_point(beta: float) -> float:
    """Abscissa beyond which the series replaces the integral representation.

    At ``x = 1`` the exponential damping in the integral representation is
    still strong enough for fixed Gauss-Legendre nodes, and the series terms
    decay without cancellation.  Both are evaluated there and must agree,
    otherwise the evaluation is considered unreliable (this happens as
    ``beta`` approaches 1).
    """
    x_sw = 1.0
    a, b = float(_kanter(x_sw, beta)), float(_series(x_sw, beta))
    if not abs(a - b) <= 1e-7 * abs(b):
        raise QuadratureError(
            f"subordinator density for beta={beta}: integral {a:.12e} vs series {b:.12e} at x={x_sw:.4g}")
    return x_sw


def phi_unit(s, alpha: float):
    """Subordinator density at unit time, ``phi_1^alpha``."""
    _check_alpha(alpha, closed=False)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("subordinator density needs s > 0")
    beta = 0.5 * alpha
    if alpha == 1:
        return _levy_half(s)
    x_sw = _switch_point(beta)
    out = np.empty_like(s)
    big = s >= x_sw
    if np.any(big):
        out[big] = _series(s[big], beta)
    if np.any(~big):
        out[~big] = _kanter(s[~big], beta)
    return np.maximum(out, 0.0)


def phi_density(alpha: float, t: float, s):
    """Density ``phi_t^alpha(s)`` of the subordination measure.

    Obtained from the unit-time density by the exact scaling
    ``t^(-2/alpha) phi_1(s t^(-2/alpha))``.
    """
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    k = t ** (-2.0 / alpha)
    out = k * phi_unit(k * np.asarray(s, dtype=float), alpha)
    return out if out.ndim else float(out)


def phi_tail_constant(alpha: float) -> float:
    """Limit of ``s^(1+alpha/2) phi_1^alpha(s)`` as ``s`` grows."""
    beta = 0.5 * alpha
    return beta / special.gamma(1.0 - beta)


def subordination_nodes(alpha: float, t: float, n: int = 200, decades: float | None = None,
                        tail_mass: float = 1e-6):
    """Nodes and weights for ``int_0^inf F(s) phi_t^alpha(s) ds``.

    Log-spaced nodes on ``t^(2/alpha) [1e-4, 10^upper]``, trapezoid rule in
    ``log s``, weights renormalized to sum to one.  The lower end is safe
    because the density vanishes faster than any power at the origin.  The
    upper end is ``decades`` if given, otherwise the point beyond which the
    algebraic tail carries less than ``tail_mass`` (at least four decades).
    """
    _check_alpha(alpha, closed=False)
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    beta = 0.5 * alpha
    if decades is None:
        # mass beyond S is ~ S^(-beta) / Gamma(1 - beta)
        decades = max(4.0, np.log10(1.0 / (special.gamma(1.0 - beta) * tail_mass)) / beta)
    scale = t ** (2.0 / alpha)
    u = np.linspace(-4.0, decades, n) * np.log(10.0)
    s = scale * np.exp(u)
    w = np.full(n, u[1] - u[0])
    w[[0, -1]] *= 0.5
    w = w * s * phi_density(alpha, t, s)
    return s, w / w.sum()
