"""Semilinear problem ``u_t + (-Delta_H)^{alpha/2} u = u^p`` in mild form.

Time stepping is the first-order Duhamel splitting
``u <- e^{dt Lambda}(u + dt u^p)``.  Both factors are monotone maps, so the
scheme preserves ordering of data, which is what makes life spans monotone in
the amplitude and lets the Picard iterates increase.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Sequence

import numpy as np

from .axial import AxialField, AxialGrid
from .semigroup import (DiscreteMeasure, Field, GridSpec, InstabilityError,
                        apply_to_measure, flow)


class BlowUp(Exception):
    """Sup norm crossed the blow-up threshold."""

    def __init__(self, t_cross: float, sup: float, iterate: int | None = None):
        self.t_cross = t_cross
        self.sup = sup
        self.iterate = iterate
        where = f" in iterate {iterate}" if iterate is not None else ""
        super().__init__(f"sup norm {sup:.3e} crossed the threshold at t={t_cross:.6g}{where}")


@dataclass(frozen=True)
class EvolutionConfig:
    """Parameters of a nonlinear run.

    The step at time ``t`` is ``min(dt_max, max(dt_macro, dt_relative * t))``:
    fixed early on, then geometric, and independent of the solution so runs
    at different amplitudes share one time grid.  ``grid=None`` picks an
    axial cylinder sized for ``T_max``.
    """

    p: float
    alpha: float = 2.0
    dt_macro: float = 0.005
    T_max: float = 10.0
    blowup_threshold: float = 1e6
    grid: AxialGrid | GridSpec | None = None
    dt_relative: float = 0.0
    dt_max: float = math.inf
    refine_levels: int = 2

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not 0 < self.alpha <= 2:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not (self.dt_macro > 0 and self.T_max > 0 and self.blowup_threshold > 0):
            raise ValueError("dt_macro, T_max and blowup_threshold must be positive")
        if self.dt_relative < 0 or self.refine_levels < 0:
            raise ValueError("dt_relative and refine_levels must be nonnegative")

    @property
    def resolved_grid(self):
        return self.grid if self.grid is not None else AxialGrid.for_horizon(self.T_max)

    def with_horizon(self, T: float) -> "EvolutionConfig":
        return replace(self, T_max=float(T))

    def step_at(self, t: float) -> float:
        return min(self.dt_max, max(self.dt_macro, self.dt_relative * t))


def _grid_meta(grid) -> dict:
    if isinstance(grid, AxialGrid):
        s = grid.summary()
        return {"backend": "axial", "nx": s["n_r"], "ntau": s["n_tau"], "h_min": grid.h_min,
                "r_max": grid.r_max, "tau_max": grid.tau_max}
    return {"backend": "cartesian", "nx": grid.points[0], "ntau": grid.points[2], "h_min": grid.h_min,
            "half_widths": list(grid.half_widths)}


@dataclass
class LifespanRecord:
    """One amplitude's life-span observation; censored runs carry ``T_est = T_max``."""

    lam: float
    T_est: float
    blew_up: bool
    resolution: dict
    threshold_used: float
    valid: bool = True
    message: str = ""
    sup_trace: list = dc_field(default_factory=list)
    n_steps: int = 0

    CSV_HEADER = ("lambda", "T_est", "blew_up", "nx", "ntau", "threshold")

    def csv_row(self) -> list:
        return [f"{self.lam:.10g}", f"{self.T_est:.10g}", str(self.blew_up).lower(),
                str(self.resolution.get("nx", "")), str(self.resolution.get("ntau", "")),
                f"{self.threshold_used:.10g}"]


def duhamel_step(u, cfg: EvolutionConfig, dt: float | None = None, t: float = 0.0, linear: bool = True):
    """One explicit Duhamel step ``e^{dt Lambda}(u + dt u^p)``.

    ``linear=False`` switches the semigroup off, leaving an explicit Euler
    step of ``f' = f^p`` (a test hook).  Raises :class:`BlowUp` with the
    step's end time when the new sup norm exceeds the threshold, and
    :class:`InstabilityError` on non-finite values.
    """
    dt = cfg.dt_macro if dt is None else dt
    if np.any(u.values < 0):
        raise ValueError("duhamel_step needs nonnegative data")
    w = u.copy_with(u.values + dt * u.values ** cfg.p)
    v = flow(w, dt, cfg.alpha) if linear else w
    if not np.all(np.isfinite(v.values)):
        raise InstabilityError(f"non-finite values after the step ending at t={t + dt:.6g}")
    top = v.sup()
    if top > cfg.blowup_threshold:
        raise BlowUp(t + dt, top)
    return v


def _initial_state(datum, lam: float, grid):
    from .conditions import InitialDatum

    if isinstance(datum, InitialDatum):
        return datum.state(grid, lam)
    if isinstance(datum, (Field, AxialField)):
        return datum.copy_with(lam * datum.values)
    raise TypeError(f"unsupported datum {type(datum).__name__}")


def march(u0, cfg: EvolutionConfig, t0: float = 0.0, t_end: float | None = None,
          dt_scale: float = 1.0, trace: list | None = None, on_step: Callable | None = None):
    """March from ``(u0, t0)`` to ``t_end`` (default ``T_max``) with the configured schedule.

    Returns ``(u, t, n_steps)``.  A :class:`BlowUp` escapes with the
    pre-crossing state attached as ``state = (u, t)``.
    """
    t_end = cfg.T_max if t_end is None else t_end
    u, t, n = u0, t0, 0
    while t < t_end * (1 - 1e-12):
        dt = min(dt_scale * cfg.step_at(t), t_end - t)
        try:
            v = duhamel_step(u, cfg, dt, t)
        except BlowUp as e:
            e.state = (u, t, dt)
            raise
        u, t, n = v, t + dt, n + 1
        if trace is not None:
            trace.append((t, u.sup()))
        if on_step is not None:
            on_step(u, t)
    return u, t, n


def estimate_lifespan(datum, lam: float, cfg: EvolutionConfig, trace_points: int = 64) -> LifespanRecord:
    """Blow-up time of the solution with initial value ``lam * datum``.

    After the first threshold crossing the final step is re-run from the
    last sub-threshold state with ``dt`` halved, ``refine_levels`` times; the
    estimate is the end of the crossing step at the finest level.  Runs that
    reach ``T_max`` are censored, runs that produce non-finite values are
    flagged invalid.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    grid = cfg.resolved_grid
    meta = _grid_meta(grid)
    u0 = _initial_state(datum, lam, grid)
    if u0.sup() >= cfg.blowup_threshold:
        raise ValueError(f"initial sup {u0.sup():.3e} already exceeds the blow-up threshold")
    trace = [(0.0, u0.sup())]
    try:
        _, _, n = march(u0, cfg, trace=trace)
        return LifespanRecord(lam, cfg.T_max, False, meta, cfg.blowup_threshold,
                              sup_trace=_downsample(trace, trace_points), n_steps=n)
    except InstabilityError as e:
        return LifespanRecord(lam, math.nan, False, meta, cfg.blowup_threshold, valid=False,
                              message=str(e), sup_trace=_downsample(trace, trace_points))
    except BlowUp as e:
        crossing = e
    n = len(trace) - 1
    scale = 1.0
    for _ in range(cfg.refine_levels):
        scale *= 0.5
        u, t, _ = crossing.state
        try:
            march(u, cfg, t0=t, t_end=cfg.T_max, dt_scale=scale)
        except BlowUp as e:
            crossing = e
        except InstabilityError:
            break
        # a finer run that survives keeps the coarser crossing
    return LifespanRecord(lam, crossing.t_cross, True, meta, cfg.blowup_threshold,
                          sup_trace=_downsample(trace, trace_points), n_steps=n)


def _downsample(trace, k):
    if len(trace) <= k:
        return [list(map(float, r)) for r in trace]
    idx = np.unique(np.linspace(0, len(trace) - 1, k).round().astype(int))
    return [[float(trace[i][0]), float(trace[i][1])] for i in idx]


# ---------------------------------------------------------------------------
# Picard iteration and supersolutions

def _time_nodes(checkpoints: Sequence[float], n_intervals: int) -> np.ndarray:
    top = max(checkpoints)
    return np.unique(np.concatenate([np.linspace(0.0, top, n_intervals + 1), np.asarray(checkpoints, float)]))


def _linear_part(mu: DiscreteMeasure, t: float, alpha: float, grid):
    if t == 0:
        if mu.atoms:
            return None
        return mu.density
    if isinstance(grid, GridSpec):
        return apply_to_measure(mu, t, alpha, grid)
    if mu.density is None:
        mu = DiscreteMeasure(density=AxialField(grid, np.zeros(grid.engine().shape)), atoms=mu.atoms)
    return apply_to_measure(mu, t, alpha)


def _trapezoid_weights(nodes: np.ndarray, j: int, skip_first: bool) -> np.ndarray:
    w = np.zeros(j + 1)
    h = np.diff(nodes[: j + 1])
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    if skip_first:
        w[0] = 0.0
    return w


def _duhamel_integrals(sources: list, nodes: np.ndarray, alpha: float, skip_first: bool) -> list:
    """``int_0^{t_j} e^{(t_j - s) Lambda} f(s) ds`` for every node ``t_j`` by the trapezoid rule.

    ``sources[i]`` is ``f(s_i)`` (``None`` is allowed where the weight
    vanishes).  Axial fields are summed in the eigenbasis so each source is
    transformed once.
    """
    like = next(f for f in sources if f is not None)
    out = []
    if isinstance(like, AxialField):
        eng = like.engine
        coeffs = [None if f is None else eng.forward(f.values) for f in sources]
        for j, tj in enumerate(nodes):
            w = _trapezoid_weights(nodes, j, skip_first)
            acc = np.zeros_like(eng.E)
            for i in range(j + 1):
                if w[i] == 0 or coeffs[i] is None:
                    continue
                lag = tj - nodes[i]
                m = eng.semigroup_multiplier(lag, alpha) if lag > 0 else 1.0
                acc += w[i] * m * coeffs[i]
            out.append(like.copy_with(np.maximum(eng.backward(acc), 0.0)))
        return out
    for j, tj in enumerate(nodes):
        w = _trapezoid_weights(nodes, j, skip_first)
        acc = np.zeros_like(like.values)
        for i in range(j + 1):
            if w[i] == 0 or sources[i] is None:
                continue
            lag = tj - nodes[i]
            acc += w[i] * (flow(sources[i], lag, alpha).values if lag > 0 else sources[i].values)
        out.append(like.copy_with(acc))
    return out


def picard_iterate(mu: DiscreteMeasure, cfg: EvolutionConfig, n_iter: int,
                   t_checkpoints: Sequence[float], n_intervals: int = 32) -> list:
    """Monotone iterates ``u_n = e^{t Lambda} mu + int_0^t e^{(t-s) Lambda} u_{n-1}(s)^p ds``.

    All iterates live on one time grid: ``n_intervals`` uniform intervals up
    to the last checkpoint, with the checkpoints merged in.  With atoms the
    ``s = 0`` endpoint of the Duhamel integral is singular and left out of
    the trapezoid sum.  Returns ``iterates[n][k]``, the ``(n+1)``-th iterate
    at checkpoint ``k``.
    """
    if n_iter < 2:
        raise ValueError("n_iter must be at least 2")
    ts = [float(t) for t in t_checkpoints]
    if not ts or min(ts) <= 0 or max(ts) > cfg.T_max:
        raise ValueError("checkpoints must lie in (0, T_max]")
    grid = cfg.resolved_grid
    nodes = _time_nodes(ts, n_intervals)
    linear = [_linear_part(mu, t, cfg.alpha, grid) for t in nodes]
    skip_first = bool(mu.atoms)
    picks = [int(np.searchsorted(nodes, t)) for t in ts]

    current = linear
    history = [[current[k] for k in picks]]
    for n in range(2, n_iter + 1):
        sources = [None if u is None else u.copy_with(u.values ** cfg.p) for u in current]
        integrals = _duhamel_integrals(sources, nodes, cfg.alpha, skip_first)
        nxt = []
        for j, t in enumerate(nodes):
            if linear[j] is None:
                nxt.append(None)
                continue
            u = linear[j].copy_with(linear[j].values + integrals[j].values)
            if u.sup() > cfg.blowup_threshold:
                raise BlowUp(float(t), u.sup(), iterate=n)
            nxt.append(u)
        current = nxt
        history.append([current[k] for k in picks])
    return history


@dataclass
class SupersolutionReport:
    passed: bool
    worst_ratio: float
    worst_time: float
    ratios: list
    tolerance: float


def supersolution_check(w_builder: Callable, mu: DiscreteMeasure, cfg: EvolutionConfig,
                        t_samples: Sequence[float], tol: float = 0.05, n_intervals: int = 32,
                        floor: float = 1e-14) -> SupersolutionReport:
    """Check ``F[w](t) <= 2 w(t)`` where ``F[w] = e^{t Lambda} mu + int_0^t e^{(t-s) Lambda}(2w(s))^p ds``.

    The ratio is taken pointwise.  Points where ``F[w]`` is below ``floor``
    times its maximum are treated as exact zeros (roundoff level), points
    with ``w = 0`` and a non-negligible ``F[w]`` give an infinite ratio.
    """
    grid = cfg.resolved_grid
    ts = sorted(float(t) for t in t_samples)
    if not ts or ts[0] <= 0:
        raise ValueError("t_samples must be positive")
    nodes = _time_nodes(ts, n_intervals)
    skip_first = bool(mu.atoms)
    ws, sources = [], []
    for t in nodes:
        w = None if (t == 0 and skip_first) else w_builder(float(t))
        if w is not None and np.any(w.values < 0):
            raise ValueError("w_builder must return nonnegative fields")
        ws.append(w)
        sources.append(None if w is None else w.copy_with((2.0 * w.values) ** cfg.p))
    if all(s is None or not np.any(s.values) for s in sources):
        integrals = [None] * len(nodes)
    else:
        integrals = _duhamel_integrals(sources, nodes, cfg.alpha, skip_first)
    ratios = []
    for t in ts:
        j = int(np.searchsorted(nodes, t))
        lin = _linear_part(mu, t, cfg.alpha, grid) if (mu.atoms or mu.density is not None) else None
        F = np.zeros_like(ws[j].values)
        if lin is not None:
            F = F + lin.values
        if integrals[j] is not None:
            F = F + integrals[j].values
        top = F.max() if F.size else 0.0
        live = F > floor * top if top > 0 else np.zeros(F.shape, bool)
        two_w = 2.0 * ws[j].values
        if np.any(live & (two_w <= 0)):
            ratios.append(math.inf)
            continue
        r = np.zeros_like(F)
        r[live] = F[live] / two_w[live]
        ratios.append(float(r.max()) if r.size else 0.0)
    k = int(np.argmax(ratios))
    return SupersolutionReport(bool(ratios[k] <= 1.0 + tol), float(ratios[k]), ts[k], ratios, tol)
