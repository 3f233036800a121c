"""Command-line driver for batch experiments.

Configuration comes from an INI file (a ``[common]`` section plus one
section per subcommand) and is overridden by ``--set key=value`` and the
dedicated flags.  Every artifact carries the config hash, the package
version and grid metadata.  With ``--deterministic`` no timestamps or wall
times are written, so identical configs give byte-identical outputs.

Exit codes: 0 success, 2 usage or configuration error, 3 a check failed,
4 numerical instability.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .axial import AxialGrid
from .conditions import (OptimalSingularity, PointMass, PowerDecay, RawField, calibrate_constants,
                         default_sigma_grid, necessary_check, regime_of, scaled, sufficient_check)
from .kernels import phi_tail_constant, phi_unit
from .lifespan import (Regime, SweepAborted, default_lambdas, fit_scaling, log_growth_profile,
                       ode_comparison_bound, predicted_exponent, sweep_lambda)
from .nonlinear import EvolutionConfig, LifespanRecord, estimate_lifespan
from .semigroup import ConfigurationError, Field, GridSpec, InstabilityError, heat_kernel_axial
from .svg import Plot
from . import validation

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_UNSTABLE = 0, 2, 3, 4
DEFAULT_SEED = 20240601

DEFAULTS = {
    "kernel-validate": {
        "alpha": 2.0, "half_widths": "6,6,24", "points": "97,97,193", "times": "0.25,0.5,1",
        "ck_time": 0.5, "dilation_time": 0.25, "mc_samples": 200000, "mc_time": 1.0,
        "subordination": "auto", "chapman_kolmogorov": True,
    },
    "evolve": {
        "p": 1.25, "alpha": 2.0, "datum": "power:A=5", "lambda": 0.1, "T_max": 200.0,
        "dt_macro": 0.005, "dt_relative": 0.005, "threshold": 1e6, "h": 0.1,
    },
    "lifespan-sweep": {
        "p": 1.25, "alpha": 2.0, "A": 5.0, "lambdas": "0.1,0.01", "n_lambda": 8, "T_max": 600.0,
        "dt_macro": 0.005, "dt_relative": 0.005, "threshold": 1e6, "h": 0.1,
    },
    "conditions-check": {
        "p": 2.0, "alpha": 2.0, "datum": "power:A=5", "lambda": 1.0, "T": 10.0,
        "gamma_necessary": "calibrate", "gamma_sufficient": "calibrate", "theta": 1.5, "beta": 1.0,
        "calibration_datum": "power:A=3", "h": 0.05, "dt_macro": 0.005, "dt_relative": 0.005,
        "n_sigma": 16,
    },
    "ode-lemma": {
        "a1": 1.0, "a2": 1.0, "a": 1.0, "b": 2.0, "t_star": 0.1, "T": 2.0, "random_cases": 100,
    },
}


class UsageError(Exception):
    pass


class CheckFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration

def _coerce(value, like):
    if isinstance(value, str) and not isinstance(like, str):
        v = value.strip()
        try:
            if isinstance(like, bool):
                if v.lower() in ("1", "true", "yes", "on"):
                    return True
                if v.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(v)
            if isinstance(like, int):
                return int(v)
            if isinstance(like, float):
                return float(v)
        except ValueError:
            raise UsageError(f"cannot parse {value!r} as {type(like).__name__}") from None
    return value


def resolve_config(command: str, args) -> dict:
    cfg = dict(DEFAULTS[command])
    file_values = {}
    if args.config:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        try:
            with open(args.config) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
        for section in ("common", command):
            if parser.has_section(section):
                file_values.update(parser.items(section))
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for source in (file_values, overrides):
        for k, v in source.items():
            if k in ("seed", "threads", "out", "deterministic", "verify"):
                continue
            if k not in cfg:
                raise UsageError(f"unknown key {k!r} for {command}")
            cfg[k] = _coerce(v, DEFAULTS[command][k])
    common = {"seed": DEFAULT_SEED, "threads": 1, "deterministic": False, "verify": False}
    for k in common:
        if k in file_values:
            common[k] = _coerce(file_values[k], common[k])
    if args.seed is not None:
        common["seed"] = args.seed
    if args.threads is not None:
        common["threads"] = args.threads
    common["deterministic"] = common["deterministic"] or args.deterministic
    common["verify"] = common["verify"] or args.verify
    if common["seed"] < 0 or common["seed"] >= 2 ** 64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    if common["threads"] < 1:
        raise UsageError("threads must be positive")
    cfg.update(common)
    return cfg


def config_hash(cfg: dict) -> str:
    stable = {k: v for k, v in cfg.items() if k not in ("threads", "deterministic")}
    return hashlib.sha256(json.dumps(stable, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _floats(text, n=None, name="value"):
    try:
        out = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r} for {name}") from None
    if n is not None and len(out) != n:
        raise UsageError(f"{name} needs {n} values, got {len(out)}")
    return out


def parse_datum(text: str, p: float, alpha: float, h: float = 0.05):
    """``power:A=5``, ``optimal:gamma=1,eps=0.1,C=0``, ``point:mass=1`` or ``snapshot:PATH``.

    The origin cutoff ``eps`` of the optimal profile defaults to twice the mesh size ``h``.
    """
    kind, _, rest = str(text).partition(":")
    kind = kind.strip().lower()
    if kind == "snapshot":
        try:
            return RawField(Field.load(rest), Path(rest).name)
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot load snapshot {rest}: {e}") from None
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        k, _, v = item.partition("=")
        try:
            params[k.strip()] = float(v)
        except ValueError:
            raise UsageError(f"bad datum parameter {item!r}") from None
    try:
        if kind == "power":
            return PowerDecay(params.get("A", 5.0))
        if kind == "optimal":
            return OptimalSingularity(params.get("gamma", 1.0), p, alpha, params.get("C", 0.0),
                                      params.get("eps", 2.0 * h))
        if kind == "point":
            return PointMass(params.get("mass", 1.0))
    except ValueError as e:
        raise UsageError(f"invalid datum {text!r}: {e}") from None
    raise UsageError(f"unknown datum kind {kind!r}")


# ---------------------------------------------------------------------------
# output

class Writer:
    """Single owner of all file output for one run."""

    def __init__(self, out: Path, cfg: dict, command: str):
        self.out = out
        self.cfg = cfg
        self.meta = {"command": command, "config_hash": config_hash(cfg), "version": __version__}
        self.started = time.time()
        out.mkdir(parents=True, exist_ok=True)

    def _stamp(self, payload: dict) -> dict:
        body = dict(self.meta)
        body["config"] = {k: v for k, v in self.cfg.items() if k not in ("threads", "deterministic")}
        if not self.cfg["deterministic"]:
            body["elapsed_s"] = round(time.time() - self.started, 3)
            body["created"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        body.update(payload)
        return body

    def json(self, name: str, payload: dict):
        text = json.dumps(_plain(self._stamp(payload)), indent=2, sort_keys=True, allow_nan=True)
        (self.out / name).write_text(text + "\n")

    def csv(self, name: str, header, rows, grid: dict | None = None):
        buf = io.StringIO()
        buf.write(f"# config_hash={self.meta['config_hash']} version={self.meta['version']}\n")
        if grid:
            buf.write("# grid " + " ".join(f"{k}={v}" for k, v in sorted(grid.items())) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        (self.out / name).write_text(buf.getvalue())

    def svg(self, name: str, plot: Plot, grid: dict | None = None):
        plot.metadata.update(self.meta)
        if grid:
            plot.metadata.update({f"grid_{k}": v for k, v in grid.items()})
        (self.out / name).write_text(plot.render())


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Regime):
        return obj.value
    return obj


def _record_dict(r: LifespanRecord) -> dict:
    return {"lambda": r.lam, "T_est": r.T_est, "blew_up": r.blew_up, "valid": r.valid,
            "n_steps": r.n_steps, "resolution": r.resolution, "sup_trace": r.sup_trace}


# ---------------------------------------------------------------------------
# subcommands

def cmd_kernel_validate(cfg: dict, w: Writer) -> int:
    alpha = float(cfg["alpha"])
    sub = str(cfg["subordination"]).lower()
    if sub not in ("auto", "true", "false"):
        raise UsageError("subordination must be auto, true or false")
    if alpha == 2 and sub == "true":
        raise ConfigurationError("subordination is only defined for alpha < 2")
    if alpha < 2 and sub == "false":
        raise ConfigurationError("alpha < 2 needs the subordinated flow")
    if not 0 < alpha <= 2:
        raise ConfigurationError("alpha must lie in (0, 2]")
    spec = GridSpec(tuple(_floats(cfg["half_widths"], 3, "half_widths")),
                    tuple(int(v) for v in _floats(cfg["points"], 3, "points")))
    grid = spec.axial_grid()
    times = _floats(cfg["times"], name="times")
    checks = []
    if alpha == 2:
        checks += validation.mass_check(spec, times)
        checks.append(validation.symmetry_check(spec, times[len(times) // 2]))
        if cfg["chapman_kolmogorov"]:
            checks.append(validation.chapman_kolmogorov_check(grid, float(cfg["ck_time"])))
        checks += validation.dilation_check(spec, float(cfg["dilation_time"]))
        env, env_checks = validation.envelope_check(grid)
        checks += env_checks
        checks += validation.monte_carlo_check(grid, float(cfg["mc_time"]), n_samples=int(cfg["mc_samples"]),
                                               seed=int(cfg["seed"]) % 2 ** 32)
    else:
        s = np.exp(np.linspace(np.log(1e6), np.log(1e8), 9))
        slope = float(np.polyfit(np.log(s), np.log(phi_unit(s, alpha)), 1)[0])
        target = -(1 + alpha / 2)
        checks.append({"check": "subordinator tail exponent", "value": abs(slope / target - 1),
                       "tolerance": 0.02, "passed": abs(slope / target - 1) <= 0.02, "slope": slope,
                       "tail_constant": phi_tail_constant(alpha)})
        checks.append(validation.symmetry_check(spec, times[len(times) // 2], alpha))
        checks += validation.fractional_tail_slope(grid, alpha)
        env = None
    profile_t = times[-1]
    K = heat_kernel_axial(profile_t, grid, alpha)
    eng = K.engine
    on_axis = eng.rc < 3.0
    plot = Plot(f"kernel profile, alpha={alpha:g}, t={profile_t:g}", "|eta| (horizontal axis)",
                "G", ylog=True)
    plot.add(eng.rc[on_axis], K.values[on_axis, 0], "grid kernel")
    if env is not None:
        plot.add(eng.rc[on_axis], env.evaluate(eng.rc[on_axis], profile_t, "lower"), "lower envelope", dashed=True)
        plot.add(eng.rc[on_axis], env.evaluate(eng.rc[on_axis], profile_t, "upper"), "upper envelope", dashed=True)
    meta = {"nx": spec.points[0], "ny": spec.points[1], "ntau": spec.points[2],
            "n_r": eng.n_r, "n_tau_axial": eng.n_tau}
    w.svg("kernel_profile.svg", plot, meta)
    failed = [c["check"] for c in checks if not c["passed"]]
    w.json("kernel_report.json", {"grid": {**spec.summary(), **meta}, "alpha": alpha, "checks": checks,
                                  "failures": failed, "passed": not failed})
    return EXIT_CHECK if failed else EXIT_OK


def _evolution_config(cfg: dict, T_max: float) -> EvolutionConfig:
    try:
        return EvolutionConfig(p=float(cfg["p"]), alpha=float(cfg["alpha"]), dt_macro=float(cfg["dt_macro"]),
                               T_max=T_max, blowup_threshold=float(cfg["threshold"]),
                               grid=AxialGrid.for_horizon(T_max, h=float(cfg["h"])),
                               dt_relative=float(cfg["dt_relative"]))
    except ValueError as e:
        raise ConfigurationError(str(e)) from None


def cmd_evolve(cfg: dict, w: Writer) -> int:
    ecfg = _evolution_config(cfg, float(cfg["T_max"]))
    datum = parse_datum(cfg["datum"], ecfg.p, ecfg.alpha, float(cfg["h"]))
    if isinstance(datum, RawField):
        raise ConfigurationError("evolve runs on the axial backend; snapshots are for conditions-check")
    rec = estimate_lifespan(datum, float(cfg["lambda"]), ecfg)
    grid = rec.resolution
    w.csv("lifespan_records.csv", LifespanRecord.CSV_HEADER, [rec.csv_row()], grid)
    w.json("evolve_summary.json", {"datum": datum.descriptor(), "record": _record_dict(rec), "grid": grid})
    plot = Plot(f"sup norm, {datum.descriptor()}, lambda={rec.lam:g}", "t", "sup u", ylog=True)
    tr = np.array(rec.sup_trace)
    plot.add(tr[:, 0], tr[:, 1], "sup norm")
    w.svg("sup_trace.svg", plot, grid)
    if not rec.valid:
        return EXIT_UNSTABLE
    return EXIT_OK


def cmd_lifespan_sweep(cfg: dict, w: Writer) -> int:
    ecfg = _evolution_config(cfg, float(cfg["T_max"]))
    A = float(cfg["A"])
    datum = PowerDecay(A)
    pred = predicted_exponent(ecfg.p, ecfg.alpha, 4, A)
    if str(cfg["lambdas"]).strip().lower() == "auto":
        lams = default_lambdas(datum, ecfg, int(cfg["n_lambda"]))
    else:
        given = _floats(cfg["lambdas"], name="lambdas")
        if len(given) == 2:
            lams = list(np.geomspace(max(given), min(given), int(cfg["n_lambda"])))
        else:
            lams = sorted(given, reverse=True)
    status = EXIT_OK
    try:
        records = sweep_lambda(datum, lams, ecfg, threads=int(cfg["threads"]), prediction=pred)
    except SweepAborted as e:
        records, status = e.records, EXIT_UNSTABLE
    grid = records[0].resolution if records else {}
    w.csv("lifespan_records.csv", LifespanRecord.CSV_HEADER, [r.csv_row() for r in records], grid)
    fit_json = {"regime": pred.regime.value, "predicted": pred.exponent, "log_law": pred.log_law,
                "n_censored": sum(not r.blew_up for r in records), "records": [_record_dict(r) for r in records],
                "grid": grid}
    plot = Plot(f"life span, p={ecfg.p:g}, A={A:g}", "lambda", "T_est", xlog=True, ylog=True)
    done = [r for r in records if r.blew_up]
    if done:
        plot.add([r.lam for r in done], [r.T_est for r in done], "T_est", points=True)
    if pred.regime is Regime.GLOBAL:
        consistent = all(not r.blew_up for r in records)
        fit_json.update(slope=None, stderr=None, agrees="not-applicable",
                        verdict="all runs censored: consistent with T = infinity" if consistent
                        else "blow-up observed where global existence is predicted")
        if not consistent and status == EXIT_OK:
            status = EXIT_CHECK
    else:
        try:
            fit = fit_scaling(records, pred)
        except ValueError as e:
            fit_json.update(slope=None, stderr=None, agrees=False, verdict=str(e))
            status = status or EXIT_CHECK
        else:
            fit_json.update(fit.as_dict())
            if pred.log_law:
                prof = log_growth_profile(records)
                fit_json["growth_profile"] = prof
                fit_json["verdict"] = ("log law: rate not resolvable at this horizon; T increasing "
                                       f"{prof['strictly_increasing']}, faster than linear in log(1/lambda) "
                                       f"{prof['superlinear']}")
                if not (prof["strictly_increasing"] and prof["superlinear"]):
                    status = status or EXIT_CHECK
            else:
                if not fit.agrees:
                    status = status or EXIT_CHECK
                lam = np.array([r.lam for r in done])
                ref = np.exp(fit.intercept) * lam ** pred.exponent
                plot.add(lam, ref, f"predicted slope {pred.exponent:g}", dashed=True)
    w.json("fit.json", fit_json)
    w.svg("lifespan_fit.svg", plot, grid)
    return status


def cmd_conditions_check(cfg: dict, w: Writer) -> int:
    p, alpha, T = float(cfg["p"]), float(cfg["alpha"]), float(cfg["T"])
    datum = parse_datum(cfg["datum"], p, alpha, float(cfg["h"]))
    lam = float(cfg["lambda"])
    mu = scaled(datum, lam) if lam != 1 else datum
    h = float(cfg["h"])
    ecfg = EvolutionConfig(p=p, alpha=alpha, dt_macro=float(cfg["dt_macro"]), T_max=T,
                           grid=AxialGrid.for_horizon(T, h=h), dt_relative=float(cfg["dt_relative"]))
    calib = None
    if "calibrate" in (str(cfg["gamma_necessary"]), str(cfg["gamma_sufficient"])):
        fam = parse_datum(cfg["calibration_datum"], p, alpha, float(cfg["h"]))
        calib = calibrate_constants(fam, T, ecfg, 1e-2, 1e3, theta=float(cfg["theta"]), beta=float(cfg["beta"]))
    g_nec = calib.gamma_necessary if str(cfg["gamma_necessary"]) == "calibrate" else float(cfg["gamma_necessary"])
    g_suf = calib.gamma_sufficient if str(cfg["gamma_sufficient"]) == "calibrate" else float(cfg["gamma_sufficient"])
    h_min = mu.field.spec.h_min if isinstance(mu, RawField) else h
    sig = default_sigma_grid(T, alpha, h_min, int(cfg["n_sigma"]))
    reports = [necessary_check(mu, T, p, alpha, g_nec, sig)]
    if not mu.has_atoms or regime_of(p, alpha) == "subcritical":
        reports.append(sufficient_check(mu, T, p, alpha, g_suf, float(cfg["theta"]), float(cfg["beta"]), sig))
    status = EXIT_OK
    verify = None
    if cfg["verify"]:
        if isinstance(mu, RawField):
            raise ConfigurationError("--verify simulates on the axial backend and needs an analytic datum")
        rec = estimate_lifespan(mu, 1.0, ecfg)
        if not rec.valid:
            return EXIT_UNSTABLE
        suf_pass = any(r.passed for r in reports if r.condition_id.startswith("SUF"))
        gross = any(r.worst_ratio >= 10 for r in reports if r.condition_id.startswith("NEC"))
        inconsistent = (suf_pass and rec.blew_up) or (gross and not rec.blew_up)
        verify = {"blew_up": rec.blew_up, "T_est": rec.T_est, "sufficient_pass": suf_pass,
                  "necessary_gross_failure": gross, "inconsistent": inconsistent}
        if inconsistent:
            status = EXIT_CHECK
    rows = [r.csv_row() for r in reports]
    w.csv("conditions_report.csv", reports[0].CSV_HEADER, rows,
          {"h": h_min, "n_sigma": len(sig)})
    payload = {"datum": mu.descriptor(), "regime": regime_of(p, alpha),
               "reports": [{**{k: getattr(r, k) for k in ("condition_id", "passed", "worst_sigma", "worst_ratio",
                                                          "constant_used", "params", "warnings")}}
                           for r in reports],
               "verify": verify}
    if calib is not None:
        payload["calibration"] = {"family": calib.family, "lambda_star": calib.lambda_star,
                                  "gamma_necessary": calib.gamma_necessary,
                                  "gamma_sufficient": calib.gamma_sufficient, "safety": calib.safety}
    w.json("conditions_report.json", payload)
    return status


def cmd_ode_lemma(cfg: dict, w: Writer) -> int:
    args = [float(cfg[k]) for k in ("a1", "a2", "a", "b", "t_star", "T")]
    try:
        one = ode_comparison_bound(*args)
    except ValueError as e:
        raise ConfigurationError(str(e)) from None
    payload = {"single": {"admissible": one.admissible, "bound_on_a1": one.bound_on_a1,
                          "blowup_time": one.blowup_time}}
    n = int(cfg["random_cases"])
    rows, worst = [], 0.0
    rng = np.random.default_rng(int(cfg["seed"]))
    for _ in range(n):
        a2 = rng.uniform(0.1, 10.0)
        a = float(rng.choice([0.0, 0.5, 1.0, 2.0]))
        b = rng.uniform(1.2, 3.0)
        ts = rng.uniform(0.01, 0.4)
        T = rng.uniform(1.0, 10.0)
        c = rng.uniform(0.2, 5.0)
        base = ode_comparison_bound(1.0, a2, a, b, ts, T).bound_on_a1
        moved = ode_comparison_bound(1.0, c * a2, a, b, ts, T).bound_on_a1
        dev = abs(moved / (base * c ** (-1.0 / (b - 1.0))) - 1.0)
        worst = max(worst, dev)
        rows.append([f"{a2:.10g}", f"{a:g}", f"{b:.10g}", f"{ts:.10g}", f"{T:.10g}", f"{c:.10g}",
                     f"{base:.12g}", f"{moved:.12g}", f"{dev:.3e}"])
    w.csv("ode_lemma_cases.csv", ("a2", "a", "b", "t_star", "T", "c", "bound", "bound_scaled", "scaling_dev"), rows)
    payload["random"] = {"n": n, "worst_scaling_deviation": worst, "tolerance": 1e-4, "passed": worst <= 1e-4}
    w.json("ode_lemma.json", payload)
    return EXIT_OK if worst <= 1e-4 else EXIT_CHECK


COMMANDS = {
    "kernel-validate": cmd_kernel_validate,
    "evolve": cmd_evolve,
    "lifespan-sweep": cmd_lifespan_sweep,
    "conditions-check": cmd_conditions_check,
    "ode-lemma": cmd_ode_lemma,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heisenberg-fujita", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=str, default=None, help="INI file with [common] and [%s] sections" % name)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--deterministic", action="store_true")
        sp.add_argument("--out", type=Path, default=Path("out"))
        sp.add_argument("--verify", action="store_true", help="cross-check against a short simulation")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        writer = Writer(args.out / args.command, cfg, args.command)
        return COMMANDS[args.command](cfg, writer)
    except (UsageError, ConfigurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InstabilityError as e:
        print(f"numerical instability: {e}", file=sys.stderr)
        return EXIT_UNSTABLE


if __name__ == "__main__":
    sys.exit(main())
