"""Life-span experiments and their closed-form counterparts.

* the ODE comparison bound for ``f' = a2 t^(-a) f^b``;
* the predicted dependence of the life span ``T(lam phi)`` on the amplitude
  for data decaying like ``|eta|^(-A)``;
* amplitude sweeps and log-log regression against the prediction.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy import integrate, stats

from .nonlinear import EvolutionConfig, LifespanRecord, estimate_lifespan


# ---------------------------------------------------------------------------
# ODE comparison

@dataclass(frozen=True)
class OdeBound:
    admissible: bool
    bound_on_a1: float
    blowup_time: float


def _ode_blowup_time(a1, a2, a, b, t_star, T, rtol=1e-12):
    """First time in ``(t_star, T]`` at which ``f' = a2 t^(-a) f^b, f(t_star) = a1`` blows up, else ``inf``.

    The substitution ``w = f^(1-b)`` gives ``w' = -(b-1) a2 t^(-a)``, which
    has no singularity: blow-up of ``f`` is the first zero of ``w``.
    """
    def rhs(t, w):
        return [-(b - 1.0) * a2 * t ** (-a)]

    def hits_zero(t, w):
        return w[0]
    hits_zero.terminal = True
    hits_zero.direction = -1

    w0 = a1 ** (1.0 - b)
    sol = integrate.solve_ivp(rhs, (t_star, T), [w0], method="DOP853", rtol=rtol,
                              atol=rtol * w0, events=hits_zero)
    if sol.status == -1:
        # integration failure (step underflow) is treated as blow-up
        return float(sol.t[-1])
    if sol.t_events[0].size:
        return float(sol.t_events[0][0])
    return math.inf


def ode_comparison_bound(a1: float, a2: float, a: float, b: float, t_star: float, T: float,
                         rtol: float = 1e-10) -> OdeBound:
    """Admissibility of ``a1`` and the supremal admissible ``a1`` on ``(t_star, T)``.

    A datum is admissible when the solution stays finite up to ``T``.  The
    supremum is located by bisection in ``log a1`` to relative tolerance
    ``rtol``.
    """
    if not (a1 > 0 and a2 > 0 and a >= 0 and b > 1):
        raise ValueError("need a1, a2 > 0, a >= 0, b > 1")
    if not (0 < t_star < 0.5 * T):
        raise ValueError("need 0 < t_star < T/2")
    tb = _ode_blowup_time(a1, a2, a, b, t_star, T)

    def ok(x):
        return _ode_blowup_time(x, a2, a, b, t_star, T) > T

    lo, hi = 1.0, 1.0
    while not ok(lo):
        lo *= 0.5
    while ok(hi):
        hi *= 2.0
    lo = min(lo, hi)
    while hi - lo > rtol * hi:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return OdeBound(bool(tb > T), lo, tb)


# ---------------------------------------------------------------------------
# predictions

class Regime(enum.Enum):
    SUBCRIT = "SUBCRIT"
    CRIT_A_GT_Q = "CRIT_A_GT_Q"
    CRIT_A_EQ_Q = "CRIT_A_EQ_Q"
    SUPER_SMALL_A = "SUPER_SMALL_A"
    GLOBAL = "GLOBAL"


@dataclass(frozen=True)
class ScalingPrediction:
    """Predicted small-amplitude behaviour of the life span.

    ``exponent`` is the power of ``lam`` in ``T`` (or in ``log T`` when
    ``log_law``); ``log_correction`` marks the borderline decay ``A = Q`` in
    the subcritical range, where ``lam^(-1)`` is replaced by
    ``lam^(-1)/log(lam^(-1))``.
    """

    regime: Regime
    exponent: float | None
    log_law: bool
    log_correction: bool = False


def predicted_exponent(p: float, alpha: float, Q: int, A: float, rel_tol: float = 1e-12) -> ScalingPrediction:
    if not (p > 1 and A > 0 and 0 < alpha <= 2):
        raise ValueError("need p > 1, A > 0, 0 < alpha <= 2")
    pF = 1.0 + alpha / Q
    crit_decay = alpha / (p - 1.0)
    if math.isclose(p, pF, rel_tol=rel_tol):
        if math.isclose(A, Q, rel_tol=rel_tol):
            return ScalingPrediction(Regime.CRIT_A_EQ_Q, -(p - 1.0) / p, True)
        if A > Q:
            return ScalingPrediction(Regime.CRIT_A_GT_Q, -(p - 1.0), True)
        return ScalingPrediction(Regime.SUPER_SMALL_A, -1.0 / (1.0 / (p - 1.0) - A / alpha), False)
    if p < pF:
        eq = math.isclose(A, Q, rel_tol=rel_tol)
        return ScalingPrediction(Regime.SUBCRIT, -1.0 / (1.0 / (p - 1.0) - min(A, Q) / alpha), False, eq)
    if A < crit_decay and not math.isclose(A, crit_decay, rel_tol=rel_tol):
        return ScalingPrediction(Regime.SUPER_SMALL_A, -1.0 / (1.0 / (p - 1.0) - A / alpha), False)
    return ScalingPrediction(Regime.GLOBAL, None, False)


# ---------------------------------------------------------------------------
# sweeps

class SweepAborted(RuntimeError):
    def __init__(self, message: str, records: list):
        super().__init__(message)
        self.records = records


def sweep_lambda(datum, lambdas: Sequence[float], cfg: EvolutionConfig, threads: int = 1,
                 prediction: ScalingPrediction | None = None) -> list:
    """Life spans for a descending list of amplitudes.

    Runs are grouped in batches of ``threads`` and executed concurrently.
    When the prediction is ``GLOBAL`` and a run is censored, the remaining
    (smaller) amplitudes are skipped: by comparison they would be censored
    too.  An invalid run raises :class:`SweepAborted` carrying the records
    gathered so far.
    """
    lams = [float(x) for x in lambdas]
    if any(x <= 0 for x in lams):
        raise ValueError("amplitudes must be positive")
    if any(a < b for a, b in zip(lams, lams[1:])):
        raise ValueError("amplitudes must be sorted in descending order")
    if prediction is None and hasattr(datum, "A"):
        prediction = predicted_exponent(cfg.p, cfg.alpha, 4, datum.A)
    stop_on_censor = prediction is not None and prediction.regime is Regime.GLOBAL
    threads = max(1, int(threads))
    grid = cfg.resolved_grid
    if hasattr(grid, "engine"):
        grid.engine()  # build the shared eigen-decomposition once, before the workers start

    records: list = []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for start in range(0, len(lams), threads):
            batch = lams[start:start + threads]
            out = list(pool.map(lambda lam: estimate_lifespan(datum, lam, cfg), batch))
            for rec in out:
                if not rec.valid:
                    raise SweepAborted(f"invalid run at lambda={rec.lam:g}: {rec.message}", records)
                records.append(rec)
                if stop_on_censor and not rec.blew_up:
                    return records
    return records


def default_lambdas(datum, cfg: EvolutionConfig, n: int = 8, lam_start: float = 1.0,
                    fill: float = 0.8, rel_tol: float = 0.05) -> list:
    """One descending decade whose smallest amplitude blows up near ``fill * T_max``."""
    def T_of(lam):
        return estimate_lifespan(datum, lam, cfg).T_est

    lo = hi = lam_start
    while T_of(hi) > fill * cfg.T_max:
        hi *= 4.0
    while T_of(lo) <= fill * cfg.T_max:
        lo /= 4.0
        if lo < 1e-12:
            raise ValueError("no amplitude survives past the horizon fraction")
    while hi / lo > 1 + rel_tol:
        mid = math.sqrt(lo * hi)
        if T_of(mid) > fill * cfg.T_max:
            lo = mid
        else:
            hi = mid
    return list(np.geomspace(10.0 * hi, hi, n))


# ---------------------------------------------------------------------------
# regression

@dataclass
class ScalingFit:
    slope: float
    stderr: float
    intercept: float
    agrees: bool | None
    predicted: float | None
    regime: str
    n_used: int
    n_censored: int
    residuals: dict = dc_field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"regime": self.regime, "predicted": self.predicted, "slope": self.slope,
                "stderr": self.stderr, "agrees": "not-applicable" if self.agrees is None else self.agrees,
                "n_censored": self.n_censored, "residuals": self.residuals}


def fit_scaling(records: Sequence[LifespanRecord], prediction: ScalingPrediction) -> ScalingFit:
    """Least squares of ``log T`` (``log log T`` for log laws) against ``log lam``.

    ``agrees`` is ``None`` for log laws: their rate is not resolvable at
    feasible horizons.  At the borderline decay both the pure power law and
    the log-corrected law are fitted and their residual norms reported.
    """
    used = [r for r in records if r.blew_up and r.valid]
    n_cens = sum(1 for r in records if not r.blew_up)
    if len(used) < 4:
        raise ValueError(f"need at least 4 uncensored records, got {len(used)}")
    lam = np.array([r.lam for r in used])
    if lam.max() / lam.min() < 10.0 * (1 - 1e-9):
        raise ValueError("uncensored records must span at least one decade in lambda")
    T = np.array([r.T_est for r in used])
    x = np.log(lam)
    y = np.log(np.log(T)) if prediction.log_law else np.log(T)
    if not np.all(np.isfinite(y)):
        raise ValueError("log-law fit needs T_est > 1 for every record")
    fit = stats.linregress(x, y)
    res = {"power": float(np.linalg.norm(y - (fit.intercept + fit.slope * x)))}
    if prediction.log_correction and np.all(lam < 1):
        z = np.log(1.0 / lam / np.log(1.0 / lam))
        alt = stats.linregress(z, y)
        res["log_corrected"] = float(np.linalg.norm(y - (alt.intercept + alt.slope * z)))
    pred = prediction.exponent
    if prediction.log_law or pred is None:
        agrees = None
    else:
        agrees = bool(abs(fit.slope - pred) <= max(0.2 * abs(pred), 2.0 * fit.stderr))
    return ScalingFit(float(fit.slope), float(fit.stderr), float(fit.intercept), agrees, pred,
                      prediction.regime.value, len(used), n_cens, res)


def log_growth_profile(records: Sequence[LifespanRecord]) -> dict:
    """Shape of ``T`` as a function of ``log(1/lam)``.

    Reports strict monotonicity and compares the secant slope over the
    smaller-amplitude half with the one over the larger-amplitude half; a
    larger slope at small amplitude means faster than linear growth in
    ``log(1/lam)``.
    """
    recs = sorted((r for r in records if r.blew_up), key=lambda r: -r.lam)
    if len(recs) < 3:
        raise ValueError("need at least 3 uncensored records")
    x = np.log(1.0 / np.array([r.lam for r in recs]))
    T = np.array([r.T_est for r in recs])
    mid = len(recs) // 2
    upper = (T[mid] - T[0]) / (x[mid] - x[0])
    lower = (T[-1] - T[mid]) / (x[-1] - x[mid])
    return {"strictly_increasing": bool(np.all(np.diff(T) > 0)), "secant_large_lambda": float(upper),
            "secant_small_lambda": float(lower), "superlinear": bool(lower > upper),
            "lambdas": [float(r.lam) for r in recs], "T_est": T.tolist()}
