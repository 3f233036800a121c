"""Initial-datum families and computable solvability conditions.

The necessary conditions bound the ball-sup functional
``sigma -> sup_eta mu(B(eta, sigma))``; the sufficient ones bound that
functional (subcritical case), a ``theta``-mean over balls (any ``p``), or a
``Psi_beta``-mean (critical case).  Each checker returns the worst ratio
between the functional and its admissible bound over the sampled radii.

For radial data that are nonincreasing in the homogeneous norm every ball
functional is maximized by the ball centered at the origin (a monotone
rearrangement argument), so analytic families are evaluated there with the
exact polar formula.  Raw Cartesian fields are searched over a lattice of
centers.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .axial import AxialField, AxialGrid
from .hgroup import GroupPoint, distance_xyt, geometry, hnorm, integrate_radial
from .semigroup import DiscreteMeasure, Field, GridSpec

Q_DEFAULT = 4


def fujita_exponent(alpha: float, Q: int = Q_DEFAULT) -> float:
    return 1.0 + alpha / Q


def _is_critical(p: float, alpha: float, Q: int) -> bool:
    return math.isclose(p, fujita_exponent(alpha, Q), rel_tol=1e-12, abs_tol=1e-12)


def regime_of(p: float, alpha: float, Q: int = Q_DEFAULT) -> str:
    if _is_critical(p, alpha, Q):
        return "critical"
    return "subcritical" if p < fujita_exponent(alpha, Q) else "supercritical"


# ---------------------------------------------------------------------------
# profiles

def phi_alpha_radial(rho, p: float, alpha: float, Q: int = Q_DEFAULT, cutoff_eps: float = 1e-3):
    """Optimal-singularity profile as a function of the norm, flat below ``cutoff_eps``."""
    if not cutoff_eps > 0:
        raise ValueError("cutoff_eps must be positive")
    reg = regime_of(p, alpha, Q)
    if reg == "subcritical":
        raise ValueError("the optimal singularity profile needs p >= 1 + alpha/Q")
    r = np.maximum(np.asarray(rho, dtype=float), cutoff_eps)
    if reg == "critical":
        out = r ** (-Q) * np.log(math.e + 1.0 / r) ** (-Q / alpha - 1.0)
    else:
        out = r ** (-alpha / (p - 1.0))
    return out if out.ndim else float(out)


def phi_alpha_profile(eta: GroupPoint, p: float, alpha: float, cutoff_eps: float, Q: int = Q_DEFAULT) -> float:
    return float(phi_alpha_radial(hnorm(eta), p, alpha, Q, cutoff_eps))


# ---------------------------------------------------------------------------
# data

class InitialDatum:
    """Base class: nonnegative initial data with optional analytic radial profile."""

    radial = True
    has_atoms = False

    def profile(self, rho):
        raise NotImplementedError

    def breakpoints(self) -> list:
        return []

    def descriptor(self) -> str:
        raise NotImplementedError

    def sup_norm(self) -> float:
        return float(self.profile(0.0))

    def on_axial(self, grid: AxialGrid) -> AxialField:
        return AxialField.from_profile(grid, self.profile)

    def on_grid(self, spec: GridSpec) -> Field:
        X, Y, T = spec.mesh()
        return Field(spec, self.profile(np.sqrt(np.sqrt((X * X + Y * Y) ** 2 + T * T))))

    def state(self, grid, amplitude: float = 1.0):
        """Sampled field scaled by ``amplitude`` on an axial or Cartesian grid."""
        f = self.on_axial(grid) if isinstance(grid, AxialGrid) else self.on_grid(grid)
        return f.copy_with(amplitude * f.values)

    def measure(self, grid, amplitude: float = 1.0) -> DiscreteMeasure:
        return DiscreteMeasure(density=self.state(grid, amplitude))


@dataclass(frozen=True)
class PowerDecay(InitialDatum):
    """``(1 + |eta|)^(-A)``."""

    A: float

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("decay rate A must be positive")

    def profile(self, rho):
        return (1.0 + np.asarray(rho, dtype=float)) ** (-self.A)

    def descriptor(self) -> str:
        return f"PowerDecay(A={self.A:g})"


@dataclass(frozen=True)
class OptimalSingularity(InitialDatum):
    """``gamma * Phi_alpha(max(|eta|, eps)) + C_alpha``."""

    gamma: float
    p: float
    alpha: float = 2.0
    C_alpha: float = 0.0
    cutoff_eps: float = 1e-3
    Q: int = Q_DEFAULT

    def __post_init__(self):
        if self.gamma < 0 or self.C_alpha < 0:
            raise ValueError("gamma and C_alpha must be nonnegative")
        phi_alpha_radial(1.0, self.p, self.alpha, self.Q, self.cutoff_eps)  # validates p

    def profile(self, rho):
        return self.gamma * phi_alpha_radial(rho, self.p, self.alpha, self.Q, self.cutoff_eps) + self.C_alpha

    def breakpoints(self):
        return [self.cutoff_eps]

    def descriptor(self) -> str:
        return (f"OptimalSingularity(gamma={self.gamma:g},p={self.p:g},alpha={self.alpha:g},"
                f"C={self.C_alpha:g},eps={self.cutoff_eps:g})")


@dataclass(frozen=True)
class PointMass(InitialDatum):
    mass: float = 1.0
    has_atoms = True

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("point mass must be positive")

    def descriptor(self) -> str:
        return f"PointMass(m={self.mass:g})"

    def sup_norm(self) -> float:
        return math.inf

    def on_axial(self, grid: AxialGrid) -> AxialField:
        return AxialField.delta(grid, self.mass)

    def on_grid(self, spec: GridSpec) -> Field:
        return Field.delta(spec, self.mass)

    def measure(self, grid, amplitude: float = 1.0) -> DiscreteMeasure:
        return DiscreteMeasure(atoms=[(GroupPoint.identity(), amplitude * self.mass)])


@dataclass(frozen=True, eq=False)
class RawField(InitialDatum):
    """A sampled density, Cartesian or axial."""

    field: Field | AxialField
    label: str = "raw"
    radial = False

    def descriptor(self) -> str:
        return f"RawField({self.label})"

    def sup_norm(self) -> float:
        return self.field.sup()

    def on_axial(self, grid: AxialGrid) -> AxialField:
        if not isinstance(self.field, AxialField) or self.field.grid != grid:
            raise ValueError("raw field does not live on this axial grid")
        return self.field

    def on_grid(self, spec: GridSpec) -> Field:
        if not isinstance(self.field, Field) or self.field.spec != spec:
            raise ValueError("raw field does not live on this Cartesian grid")
        return self.field


# ---------------------------------------------------------------------------
# ball functionals

def _ball_volume(sigma: float, Q: int) -> float:
    N = (Q - 2) // 2
    return geometry(N).unit_ball_volume * sigma ** Q


def _radial_ball_integral(f: Callable, sigma: float, Q: int, points=()) -> float:
    return integrate_radial(f, sigma, (Q - 2) // 2, points=list(points))


class _LatticeBalls:
    """Ball sums of a Cartesian field over a lattice of centers."""

    def __init__(self, fld: Field, stride: int = 4):
        self.field = fld
        spec = fld.spec
        idx = [np.arange(n // 2 % stride, n, stride) for n in spec.points]
        ax = spec.axes()
        self.centers = [(ax[0][i], ax[1][j], ax[2][k]) for i in idx[0] for j in idx[1] for k in idx[2]]
        self.X, self.Y, self.T = spec.mesh()

    def sums(self, values: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
        """``max over centers`` of the sum of ``values * cell`` over each ball."""
        dv = self.field.spec.cell_volume
        order = np.argsort(sigmas)
        s_sorted = sigmas[order]
        v = values.ravel()
        best = np.zeros(sigmas.size)
        for cx, cy, ct in self.centers:
            d = distance_xyt(self.X, self.Y, self.T, GroupPoint([cx], [cy], ct)).ravel()
            # node j lies in ball k iff d_j < s_k: bin by the first radius that contains it
            b = np.searchsorted(s_sorted, d, side="right")
            sums = np.cumsum(np.bincount(b, weights=v, minlength=s_sorted.size + 1))[:-1] * dv
            best[order] = np.maximum(best[order], sums)
        return best


def _truncation_warning(datum: InitialDatum, sigma: float) -> str | None:
    if isinstance(datum, RawField) and isinstance(datum.field, Field):
        Rx, Ry, Rt = datum.field.spec.half_widths
        half_diag = min(math.hypot(Rx, Ry), math.sqrt(Rt))
        if sigma > half_diag:
            return f"sigma={sigma:g} exceeds the box extent {half_diag:g}; ball mass is truncated"
    return None


def ball_sup_measure(mu: InitialDatum, sigma: float, Q: int = Q_DEFAULT, stride: int = 4) -> float:
    """``sup_eta mu(B(eta, sigma))``."""
    return float(ball_sup_measures(mu, np.array([sigma]), Q, stride)[0])


def ball_sup_measures(mu: InitialDatum, sigmas, Q: int = Q_DEFAULT, stride: int = 4) -> np.ndarray:
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
    if np.any(sigmas <= 0):
        raise ValueError("radii must be positive")
    if isinstance(mu, PointMass):
        return np.full(sigmas.size, mu.mass)
    if isinstance(mu, RawField):
        if not isinstance(mu.field, Field):
            raise ValueError("ball functionals of raw data need a Cartesian field")
        msg = _truncation_warning(mu, float(sigmas.max()))
        if msg:
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return _LatticeBalls(mu.field, stride).sums(mu.field.values, sigmas)
    return np.array([_radial_ball_integral(mu.profile, s, Q, mu.breakpoints()) for s in sigmas])


def ball_means(mu: InitialDatum, transform: Callable, sigmas, Q: int = Q_DEFAULT, stride: int = 4) -> np.ndarray:
    """``sup_zeta`` of the average of ``transform(mu)`` over ``B(zeta, sigma)``."""
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
    if mu.has_atoms:
        raise ValueError("ball means of a transformed measure need a density (atoms present)")
    vols = np.array([_ball_volume(s, Q) for s in sigmas])
    if isinstance(mu, RawField):
        if not isinstance(mu.field, Field):
            raise ValueError("ball functionals of raw data need a Cartesian field")
        return _LatticeBalls(mu.field, stride).sums(transform(mu.field.values), sigmas) / vols
    ints = np.array([_radial_ball_integral(lambda r: transform(mu.profile(r)), s, Q, mu.breakpoints())
                     for s in sigmas])
    return ints / vols


def default_sigma_grid(T: float, alpha: float, h_min: float = 0.05, n: int = 16) -> np.ndarray:
    top = T ** (1.0 / alpha)
    lo = min(4.0 * h_min, 0.5 * top)
    # strictly inside (0, T^(1/alpha)); the top value is approached, not hit
    return np.geomspace(lo, top * (1 - 1e-9), n)


# ---------------------------------------------------------------------------
# reports

CONDITION_IDS = ("NEC_SUB", "NEC_CRIT", "NEC_SUP", "SUF_SUB", "SUF_THETA", "SUF_CRIT")


@dataclass
class ConditionReport:
    condition_id: str
    passed: bool
    worst_sigma: float
    worst_ratio: float
    constant_used: float
    datum: str = ""
    T: float = math.nan
    p: float = math.nan
    alpha: float = math.nan
    params: dict = dc_field(default_factory=dict)
    ratios: list = dc_field(default_factory=list)
    warnings: list = dc_field(default_factory=list)

    def __post_init__(self):
        if self.condition_id not in CONDITION_IDS:
            raise ValueError(f"unknown condition {self.condition_id}")

    CSV_HEADER = ("condition_id", "passed", "worst_sigma", "worst_ratio", "constant_used",
                  "datum", "T", "p", "alpha")

    def csv_row(self) -> list:
        return [self.condition_id, str(bool(self.passed)).lower(), f"{self.worst_sigma:.10g}",
                f"{self.worst_ratio:.10g}", f"{self.constant_used:.10g}", self.datum,
                f"{self.T:.10g}", f"{self.p:.10g}", f"{self.alpha:.10g}"]


def _report(cid, sigmas, ratios, gamma, mu, T, p, alpha, **params) -> ConditionReport:
    ratios = np.asarray(ratios, dtype=float)
    i = int(np.argmax(ratios))
    worst = float(ratios[i])
    msgs = [m for m in (_truncation_warning(mu, float(np.max(sigmas))),) if m]
    return ConditionReport(cid, bool(worst <= 1.0), float(sigmas[i]), worst, float(gamma),
                           mu.descriptor(), float(T), float(p), float(alpha), params,
                           ratios.tolist(), msgs)


def _check_sigma_grid(sigma_grid, T, alpha):
    s = np.atleast_1d(np.asarray(sigma_grid, dtype=float))
    if s.size == 0:
        raise ValueError("sigma grid is empty")
    top = T ** (1.0 / alpha)
    if np.any(s <= 0) or np.any(s >= top * (1 + 1e-12)):
        raise ValueError(f"sigma grid must lie in (0, T^(1/alpha)) = (0, {top:g})")
    return s


def necessary_check(mu: InitialDatum, T: float, p: float, alpha: float, gamma_A: float,
                    sigma_grid=None, Q: int = Q_DEFAULT) -> ConditionReport:
    """Necessary condition for existence on ``[0, T)`` at the constant ``gamma_A``."""
    if not gamma_A > 0:
        raise ValueError("gamma_A must be positive")
    if not T > 0:
        raise ValueError("T must be positive")
    reg = regime_of(p, alpha, Q)
    if reg == "subcritical":
        s = np.array([T ** (1.0 / alpha)])
        bound = gamma_A * T ** (Q / alpha - 1.0 / (p - 1.0))
        ratios = ball_sup_measures(mu, s, Q) / bound
        return _report("NEC_SUB", s, ratios, gamma_A, mu, T, p, alpha)
    if sigma_grid is None:
        sigma_grid = default_sigma_grid(T, alpha)
    s = _check_sigma_grid(sigma_grid, T, alpha)
    masses = ball_sup_measures(mu, s, Q)
    if reg == "critical":
        bound = gamma_A * np.log(math.e + T ** (1.0 / alpha) / s) ** (-Q / alpha)
        return _report("NEC_CRIT", s, masses / bound, gamma_A, mu, T, p, alpha)
    bound = gamma_A * s ** (Q - alpha / (p - 1.0))
    return _report("NEC_SUP", s, masses / bound, gamma_A, mu, T, p, alpha)


def sufficient_subcritical(mu: InitialDatum, T: float, p: float, alpha: float, gamma_C: float,
                           Q: int = Q_DEFAULT) -> ConditionReport:
    if not (1 < p < fujita_exponent(alpha, Q)) or _is_critical(p, alpha, Q):
        raise ValueError(f"subcritical condition needs 1 < p < {fujita_exponent(alpha, Q):g}")
    if not gamma_C > 0:
        raise ValueError("gamma_C must be positive")
    s = np.array([T ** (1.0 / alpha)])
    bound = gamma_C * T ** (Q / alpha - 1.0 / (p - 1.0))
    return _report("SUF_SUB", s, ball_sup_measures(mu, s, Q) / bound, gamma_C, mu, T, p, alpha)


def sufficient_theta(mu: InitialDatum, T: float, p: float, alpha: float, theta: float, gamma_D: float,
                     sigma_grid=None, Q: int = Q_DEFAULT) -> ConditionReport:
    if not theta > 1:
        raise ValueError("theta must exceed 1")
    if not gamma_D > 0:
        raise ValueError("gamma_D must be positive")
    if mu.has_atoms:
        raise ValueError("theta-means are infinite for measures with atoms")
    if sigma_grid is None:
        sigma_grid = default_sigma_grid(T, alpha)
    s = _check_sigma_grid(sigma_grid, T, alpha)
    means = ball_means(mu, lambda v: np.maximum(v, 0.0) ** theta, s, Q) ** (1.0 / theta)
    ratios = means / (gamma_D * s ** (-alpha / (p - 1.0)))
    return _report("SUF_THETA", s, ratios, gamma_D, mu, T, p, alpha, theta=theta)


def psi_beta(s, beta: float):
    """``s [log(e + s)]^beta``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("psi_beta needs s >= 0")
    out = s * np.log(math.e + s) ** beta
    return out if out.ndim else float(out)


def psi_beta_inverse(v, beta: float, rtol: float = 1e-12):
    """Inverse of :func:`psi_beta` by bisection (vectorized)."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("psi_beta_inverse needs v >= 0")
    if np.any(v > 1e300):
        raise OverflowError("psi_beta_inverse bracket would exceed 1e300")
    # log(e + s) >= 1 gives s <= v, and monotonicity gives s >= v / log(e + v)^beta;
    # bisecting geometrically in that bracket keeps relative accuracy at any scale
    pos = v > 0
    w = np.where(pos, v, 1.0)
    hi = w.copy()
    lo = w / np.log(math.e + w) ** beta
    for _ in range(200):
        if np.all(hi - lo <= rtol * hi):
            break
        mid = lo * np.sqrt(hi / lo)
        up = psi_beta(mid, beta) < w
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    out = np.where(pos, lo * np.sqrt(hi / lo), 0.0)
    return out if out.ndim else float(out)


def rho_critical(s, alpha: float, Q: int = Q_DEFAULT):
    """``s^(-Q) [log(e + 1/s)]^(-Q/alpha)``."""
    s = np.asarray(s, dtype=float)
    out = s ** (-Q) * np.log(math.e + 1.0 / s) ** (-Q / alpha)
    return out if out.ndim else float(out)


def sufficient_critical(mu: InitialDatum, T: float, p: float, alpha: float, beta: float, gamma_E: float,
                        sigma_grid=None, Q: int = Q_DEFAULT) -> ConditionReport:
    if not _is_critical(p, alpha, Q):
        raise ValueError(f"critical condition needs p = {fujita_exponent(alpha, Q):g}")
    if not gamma_E > 0:
        raise ValueError("gamma_E must be positive")
    if mu.has_atoms:
        raise ValueError("Psi-means need a density (atoms present)")
    if sigma_grid is None:
        sigma_grid = default_sigma_grid(T, alpha)
    s = _check_sigma_grid(sigma_grid, T, alpha)
    scale = T ** (1.0 / (p - 1.0))
    means = ball_means(mu, lambda v: psi_beta(scale * np.maximum(v, 0.0), beta), s, Q)
    lhs = psi_beta_inverse(means, beta)
    ratios = lhs / (gamma_E * rho_critical(s * T ** (-1.0 / alpha), alpha, Q))
    return _report("SUF_CRIT", s, ratios, gamma_E, mu, T, p, alpha, beta=beta)


def sufficient_check(mu: InitialDatum, T: float, p: float, alpha: float, gamma: float,
                     theta: float = 1.5, beta: float = 1.0, sigma_grid=None, Q: int = Q_DEFAULT):
    """The sufficient condition that matches the regime of ``p``."""
    reg = regime_of(p, alpha, Q)
    if reg == "subcritical":
        return sufficient_subcritical(mu, T, p, alpha, gamma, Q)
    if reg == "critical":
        return sufficient_critical(mu, T, p, alpha, beta, gamma, sigma_grid, Q)
    return sufficient_theta(mu, T, p, alpha, theta, gamma, sigma_grid, Q)


def scaled(mu: InitialDatum, lam: float) -> InitialDatum:
    """``lam * mu`` for the analytic families."""
    if isinstance(mu, PowerDecay):
        return _Scaled(mu, lam)
    if isinstance(mu, OptimalSingularity):
        return OptimalSingularity(lam * mu.gamma, mu.p, mu.alpha, lam * mu.C_alpha, mu.cutoff_eps, mu.Q)
    if isinstance(mu, PointMass):
        return PointMass(lam * mu.mass)
    if isinstance(mu, _Scaled):
        return _Scaled(mu.base, lam * mu.lam)
    if isinstance(mu, RawField):
        return RawField(mu.field.copy_with(lam * mu.field.values), f"{lam:g}*{mu.label}")
    raise TypeError(f"cannot scale {type(mu).__name__}")


@dataclass(frozen=True)
class _Scaled(InitialDatum):
    base: InitialDatum
    lam: float

    def profile(self, rho):
        return self.lam * self.base.profile(rho)

    def breakpoints(self):
        return self.base.breakpoints()

    def descriptor(self) -> str:
        return f"{self.lam:g}*{self.base.descriptor()}"


# ---------------------------------------------------------------------------
# calibration against the simulator

@dataclass
class Calibration:
    """Constants inferred from the existence threshold of one datum family."""

    p: float
    alpha: float
    T: float
    family: str
    lambda_star: float
    gamma_necessary: float
    gamma_sufficient: float
    safety: float
    bisection_steps: int
    params: dict = dc_field(default_factory=dict)


def calibrate_constants(family: InitialDatum, T: float, cfg, lam_lo: float, lam_hi: float,
                        safety: float = 0.5, rel_tol: float = 0.05, theta: float = 1.5, beta: float = 1.0,
                        sigma_grid=None, Q: int = Q_DEFAULT) -> Calibration:
    """Calibrate the necessary and sufficient constants on a datum family.

    The simulator locates ``lambda_star``, the largest amplitude of
    ``family`` whose solution survives to ``T`` (bisection in ``log lambda``
    between a surviving ``lam_lo`` and a blowing-up ``lam_hi``).  Every
    functional grows with the amplitude, so

    * the smallest necessary constant consistent with all observed
      existence cases is the necessary functional at ``lambda_star``;
    * the largest sufficient constant for which every passing amplitude
      survives is the sufficient functional at ``lambda_star``, which is then
      multiplied by ``safety`` to absorb transfer to other data shapes.
    """
    from .nonlinear import estimate_lifespan

    p, alpha = cfg.p, cfg.alpha
    run_cfg = cfg.with_horizon(T)

    def survives(lam):
        rec = estimate_lifespan(family, lam, run_cfg)
        if not rec.valid:
            raise RuntimeError(f"invalid simulation at lambda={lam:g}")
        return not rec.blew_up

    if not survives(lam_lo):
        raise ValueError(f"lower bracket lambda={lam_lo:g} already blows up before T={T:g}")
    if survives(lam_hi):
        raise ValueError(f"upper bracket lambda={lam_hi:g} survives to T={T:g}")
    lo, hi, steps = lam_lo, lam_hi, 0
    while hi / lo > 1 + rel_tol:
        mid = math.sqrt(lo * hi)
        if survives(mid):
            lo = mid
        else:
            hi = mid
        steps += 1
    mu = scaled(family, lo)
    nec = necessary_check(mu, T, p, alpha, 1.0, sigma_grid, Q)
    suf = sufficient_check(mu, T, p, alpha, 1.0, theta, beta, sigma_grid, Q)
    return Calibration(p, alpha, T, family.descriptor(), lo, nec.worst_ratio,
                       safety * suf.worst_ratio, safety, steps, {"theta": theta, "beta": beta})
