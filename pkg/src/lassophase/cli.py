"""Command-line front end.

Subcommands: risk-curve, phase-curve, verify-phase, calibrate, amp-demo,
mse-experiment. A YAML config file supplies the covariance/prior/geometry/mc
blocks plus a per-command section; command-line flags override the file. Data
goes to CSV files (17 significant digits, atomic replace, no timestamps, so
reruns are byte-identical); progress goes to stderr; a JSON summary per run
echoes the config, the seed, the output paths, and the runtime.

Config layout (all blocks optional unless the command needs them):

    covariance: {family: ar1, rho: 0.5}
    prior:      {epsilon: 0.15, d_epsilon: 0.0,
                 magnitude_law: {kind: point, value: 1.0}}
    geometry:   {delta: 0.5, sigma_w: 0.2}
    mc:         {p_grid: [100, 200, 400], replicates: 200,
                 use_quadrature: null}
    seed: 0
    out: .
    risk_curve:     {lambda_grid: [0.1, ..., 1.0]}
    phase_curve:    {epsilon_grid: [...], d_epsilon: 0.0}
    verify_phase:   {epsilon_grid: [0.2, 0.5, 0.8], p: 200, m: 50,
                     window: 0.2, grid_points: 9}
    calibrate:      {alpha_grid: [...]}
    amp_demo:       {p: 500, alpha: 2.0, maxiter: 500, tol: 1e-8}
    mse_experiment: {lambda_grid: [...], p: 200, m: 50}
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import logging
import os
import sys
import tempfile
import time

import numpy as np
import yaml

from .amp import amp_fixed_point_lambda, amp_run
from .covariance import CovarianceSpec, build
from .errors import LassoPhaseError, ParameterError
from .lasso import solve_lasso
from .montecarlo import empirical_transition, mse_experiment, sample_instance
from .phase import delta_c
from .priors import MagnitudeLaw, SignalPrior
from .state_evolution import MCConfig, calibrate_lambda, risk_curve

log = logging.getLogger("lassophase")

COMMANDS = (
    "risk-curve",
    "phase-curve",
    "verify-phase",
    "calibrate",
    "amp-demo",
    "mse-experiment",
)

# commands whose math needs a nonzero-signal prior and a geometry block
_NEEDS_PRIOR = {"risk-curve", "calibrate", "amp-demo", "mse-experiment"}
_NEEDS_GEOMETRY = {"risk-curve", "calibrate", "amp-demo", "mse-experiment"}


class ConfigError(ParameterError):
    """Validation failure; messages carry config field paths."""


# recognized keys of each per-command section; anything else is a typo and
# silently ignoring it would change results, so reject
_EXTRA_KEYS = {
    "risk-curve": {"lambda_grid"},
    "phase-curve": {"epsilon_grid", "d_epsilon"},
    "verify-phase": {"epsilon_grid", "d_epsilon", "p", "m", "window", "grid_points"},
    "calibrate": {"alpha_grid"},
    "amp-demo": {"p", "alpha", "maxiter", "tol"},
    "mse-experiment": {"lambda_grid", "p", "m"},
}

_TOP_KEYS = {"covariance", "prior", "geometry", "mc", "seed", "out"} | {
    c.replace("-", "_") for c in COMMANDS
}


@dataclasses.dataclass
class RunConfig:
    command: str
    covariance: CovarianceSpec
    prior: SignalPrior | None
    delta: float | None
    sigma_w: float
    mc: MCConfig
    seed: int
    out: str
    extra: dict


def _parse_args(argv):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML config file")
    common.add_argument("--seed", type=int, help="override config seed (and mc.base_seed)")
    common.add_argument("--workers", type=int,
                        help="compute threads (default: env LASSO_PHASE_WORKERS); never affects results")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--p-grid", metavar="P1,P2,...", help="override mc.p_grid")
    common.add_argument("--replicates", type=int, help="override mc.replicates")
    ap = argparse.ArgumentParser(
        prog="lassophase",
        description="Asymptotic lasso risk and phase boundaries under correlated Gaussian designs.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "risk-curve": "theoretical MSE vs lambda table",
        "phase-curve": "delta_c over an epsilon grid",
        "verify-phase": "theoretical delta_c vs empirical recovery transition",
        "calibrate": "alpha -> (tau, theta, lambda) calibration table",
        "amp-demo": "run AMP on one instance and compare to the lasso optimum",
        "mse-experiment": "empirical lasso MSE vs the theoretical curve",
    }
    for cmd in COMMANDS:
        sub.add_parser(cmd, parents=[common], help=helps[cmd])
    return ap.parse_args(argv)


def _load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"config: cannot read {path!r}: {e}")
    except yaml.YAMLError as e:
        raise ConfigError(f"config: invalid YAML in {path!r}: {e}")
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigError("config: top level must be a mapping")
    return cfg


def build_config(args) -> RunConfig:
    cfg = _load_config_file(args.config) if args.config else {}
    command = args.command
    problems = []

    top_unknown = set(cfg) - _TOP_KEYS
    if top_unknown:
        problems.append(f"config: unknown top-level keys {sorted(top_unknown)}")

    cov_block = cfg.get("covariance")
    cov = None
    if cov_block is None:
        problems.append("covariance: missing block")
    elif not isinstance(cov_block, dict):
        problems.append("covariance: must be a mapping")
    else:
        try:
            cov = CovarianceSpec.from_dict(cov_block)
            for msg in cov.validate():
                problems.append(f"covariance.{msg}")
        except (ParameterError, TypeError, ValueError) as e:
            problems.append(f"covariance: {e}")

    prior = None
    prior_block = cfg.get("prior")
    if prior_block is not None:
        if not isinstance(prior_block, dict):
            problems.append("prior: must be a mapping")
        else:
            try:
                prior = SignalPrior.from_dict(prior_block)
            except (ParameterError, TypeError, ValueError, KeyError) as e:
                problems.append(f"prior: {e}")
    elif command in _NEEDS_PRIOR:
        problems.append(f"prior: missing block (required by {command})")
    if prior is not None and command in _NEEDS_PRIOR and prior.epsilon <= 0.0:
        problems.append("prior.epsilon: must be positive for risk and calibration computations")

    delta = None
    sigma_w = 0.0
    geom = cfg.get("geometry")
    if geom is not None:
        if not isinstance(geom, dict):
            problems.append("geometry: must be a mapping")
        else:
            unknown = set(geom) - {"delta", "sigma_w"}
            if unknown:
                problems.append(f"geometry: unknown fields {sorted(unknown)}")
            delta = geom.get("delta")
            sigma_w = geom.get("sigma_w", 0.0)
            if delta is not None and not (0.0 < float(delta) <= 1.0):
                problems.append(f"geometry.delta: must lie in (0, 1], got {delta}")
            if float(sigma_w) < 0.0:
                problems.append(f"geometry.sigma_w: must be nonnegative, got {sigma_w}")
    if command in _NEEDS_GEOMETRY and (geom is None or delta is None):
        problems.append(f"geometry.delta: missing (required by {command})")

    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    mc_block = dict(cfg.get("mc") or {})
    if "base_seed" not in mc_block or args.seed is not None:
        mc_block["base_seed"] = seed
    if args.p_grid is not None:
        try:
            mc_block["p_grid"] = [int(tok) for tok in args.p_grid.split(",") if tok.strip()]
        except ValueError:
            problems.append(f"--p-grid: not a comma-separated integer list: {args.p_grid!r}")
    if args.replicates is not None:
        mc_block["replicates"] = args.replicates
    mc = None
    try:
        mc = MCConfig.from_dict(mc_block)
    except (ParameterError, TypeError, ValueError) as e:
        problems.append(f"mc: {e}")

    for cmd in COMMANDS:
        sec = cmd.replace("-", "_")
        block = cfg.get(sec)
        if block is None:
            continue
        if not isinstance(block, dict):
            problems.append(f"{sec}: must be a mapping")
        else:
            unknown = set(block) - _EXTRA_KEYS[cmd]
            if unknown:
                problems.append(f"{sec}: unknown keys {sorted(unknown)} "
                                f"(recognized: {sorted(_EXTRA_KEYS[cmd])})")
    extra = cfg.get(command.replace("-", "_"), {})
    if not isinstance(extra, dict):
        extra = {}

    if problems:
        raise ConfigError("\n".join(problems))

    out = args.out if args.out is not None else str(cfg.get("out", "."))
    return RunConfig(
        command=command,
        covariance=cov,
        prior=prior,
        delta=float(delta) if delta is not None else None,
        sigma_w=float(sigma_w),
        mc=mc,
        seed=seed,
        out=out,
        extra=extra,
    )


def _set_workers(n):
    if n is None:
        env = os.environ.get("LASSO_PHASE_WORKERS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError(f"LASSO_PHASE_WORKERS: not an integer: {env!r}")
    if n is not None:
        import numba

        n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)
        log.info("compute threads: %d", n)


# ----------------------------------------------------------------------
# output plumbing


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    s = str(v)
    if any(ch in s for ch in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def _write_csv(path: str, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _config_echo(rc: RunConfig) -> dict:
    return {
        "command": rc.command,
        "covariance": rc.covariance.to_dict(),
        "prior": rc.prior.to_dict() if rc.prior is not None else None,
        "geometry": {"delta": rc.delta, "sigma_w": rc.sigma_w},
        "mc": rc.mc.to_dict(),
        "seed": rc.seed,
        "out": rc.out,
        "extra": rc.extra,
    }


# ----------------------------------------------------------------------
# subcommands: each returns (output paths, summary extras)


def _prior_or_default_law(rc: RunConfig):
    if rc.prior is not None:
        return rc.prior.d_epsilon, rc.prior.magnitude_law
    return float(rc.extra.get("d_epsilon", 0.0)), MagnitudeLaw()


def cmd_risk_curve(rc: RunConfig):
    lams = [float(x) for x in rc.extra.get("lambda_grid", np.linspace(0.1, 1.0, 10))]
    if any(lam <= 0 for lam in lams):
        raise ConfigError("risk_curve.lambda_grid: entries must be positive")
    rows = risk_curve(lams, rc.prior, rc.covariance, rc.delta, rc.sigma_w ** 2, rc.mc)
    path = os.path.join(rc.out, "risk_curve.csv")
    _write_csv(path, ("lambda", "alpha", "tau_star_sq", "mse", "stderr"),
               [(r["lambda"], r["alpha"], r["tau_star_sq"], r["mse"], r["stderr"]) for r in rows])
    return [path], {}


def cmd_phase_curve(rc: RunConfig):
    eps_grid = [float(x) for x in rc.extra.get("epsilon_grid", np.linspace(0.05, 0.95, 31))]
    d_eps, law = _prior_or_default_law(rc)
    rows = []
    for eps in eps_grid:
        point = delta_c(eps, d_eps, rc.covariance, rc.mc, magnitude_law=law)
        log.info("epsilon=%.4f: delta_c=%.5f (alpha*=%.4f)", eps, point.delta_c, point.alpha_star)
        rows.append((
            point.epsilon, point.d_epsilon, point.delta_c, point.alpha_star,
            point.stderr, point.fail_fraction,
            " ".join(str(p) for p in rc.mc.p_grid),
        ))
    path = os.path.join(rc.out, "phase_curve.csv")
    _write_csv(path, ("epsilon", "d_epsilon", "delta_c", "alpha_star",
                      "stderr", "fail_fraction", "p_grid"), rows)
    return [path], {}


def cmd_verify_phase(rc: RunConfig):
    eps_grid = [float(x) for x in rc.extra.get("epsilon_grid", (0.2, 0.5, 0.8))]
    p = int(rc.extra.get("p", 200))
    m = int(rc.extra.get("m", 50))
    window = float(rc.extra.get("window", 0.2))
    points = int(rc.extra.get("grid_points", 9))
    d_eps, law = _prior_or_default_law(rc)
    rows = []
    for eps in eps_grid:
        theory = delta_c(eps, d_eps, rc.covariance, rc.mc, magnitude_law=law)
        grid = np.linspace(max(0.02, theory.delta_c - window),
                           min(1.0, theory.delta_c + window), points)
        fit = empirical_transition(eps, d_eps, rc.covariance, p, grid, m=m,
                                   seed=rc.seed, magnitude_law=law)
        log.info("epsilon=%.4f: theory %.4f, empirical %.4f%s",
                 eps, theory.delta_c, fit.delta_hat,
                 " (separated)" if fit.separated else "")
        rows.append((eps, d_eps, theory.delta_c, fit.delta_hat,
                     abs(fit.delta_hat - theory.delta_c), fit.separated, p, m))
    path = os.path.join(rc.out, "verify_phase.csv")
    _write_csv(path, ("epsilon", "d_epsilon", "delta_c_theory", "delta_hat",
                      "abs_gap", "separated", "p", "m"), rows)
    return [path], {}


def cmd_calibrate(rc: RunConfig):
    alphas = [float(x) for x in rc.extra.get("alpha_grid", np.linspace(0.5, 3.0, 11))]
    rows = []
    for a in alphas:
        pt = calibrate_lambda(a, rc.prior, rc.covariance, rc.delta, rc.sigma_w ** 2, rc.mc)
        rows.append((pt.alpha, pt.tau_star_sq, pt.theta_star, pt.lam, pt.mc_stderr))
    path = os.path.join(rc.out, "calibrate.csv")
    _write_csv(path, ("alpha", "tau_star_sq", "theta_star", "lambda", "mc_stderr"), rows)
    return [path], {}


def cmd_amp_demo(rc: RunConfig):
    p = int(rc.extra.get("p", 500))
    alpha = float(rc.extra.get("alpha", 2.0))
    maxiter = int(rc.extra.get("maxiter", 500))
    tol = float(rc.extra.get("tol", 1e-8))
    point = calibrate_lambda(alpha, rc.prior, rc.covariance, rc.delta,
                             rc.sigma_w ** 2, rc.mc)
    if not (point.lam > 0):
        raise ConfigError(
            f"amp_demo.alpha: calibrated lambda is {point.lam:g} at alpha={alpha:g}; "
            "pick a larger alpha"
        )
    model = build(rc.covariance.with_dim(p))
    inst = sample_instance(p, rc.delta, rc.prior, model, rc.sigma_w, seed=rc.seed)
    trace = amp_run(inst.X, inst.y, model, alpha, rc.sigma_w ** 2, prior=rc.prior,
                    mc=rc.mc, maxiter=maxiter, tol=tol, beta_true=inst.beta0)
    sol = solve_lasso(inst.X, inst.y, point.lam)
    gap = float(np.sum((trace.final.beta - sol.beta) ** 2) / p)
    emp_lam = amp_fixed_point_lambda(trace.final, model)
    log.info("AMP %s in %d iterations; gap to lasso %.3e", trace.status, len(trace), gap)
    path = os.path.join(rc.out, "amp_trace.csv")
    trace_text_rows = [
        (i + 1, trace.mse[i], trace.dbeta[i], trace.dz[i], trace.tau_sq[i], trace.support[i])
        for i in range(len(trace))
    ]
    _write_csv(path, ("iteration", "mse", "dbeta", "dz", "tau_sq", "support"), trace_text_rows)
    extras = {
        "amp_status": trace.status,
        "iterations": len(trace),
        "lambda": point.lam,
        "empirical_lambda": emp_lam,
        "gap_to_lasso": gap,
    }
    return [path], extras


def cmd_mse_experiment(rc: RunConfig):
    lams = [float(x) for x in rc.extra.get("lambda_grid", np.linspace(0.1, 1.0, 10))]
    if any(lam <= 0 for lam in lams):
        raise ConfigError("mse_experiment.lambda_grid: entries must be positive")
    p = int(rc.extra.get("p", 200))
    m = int(rc.extra.get("m", 50))
    rows = mse_experiment(lams, rc.prior.epsilon, rc.prior.d_epsilon, rc.covariance,
                          rc.delta, rc.sigma_w, p, m, seed=rc.seed, mc=rc.mc,
                          magnitude_law=rc.prior.magnitude_law)
    path = os.path.join(rc.out, "mse_experiment.csv")
    _write_csv(path, ("lambda", "alpha", "theory_mse", "theory_stderr",
                      "emp_mean", "emp_stderr", "n_ok"),
               [(r["lambda"], r["alpha"], r["theory_mse"], r["theory_stderr"],
                 r["emp_mean"], r["emp_stderr"], r["n_ok"]) for r in rows])
    return [path], {}


_DISPATCH = {
    "risk-curve": cmd_risk_curve,
    "phase-curve": cmd_phase_curve,
    "verify-phase": cmd_verify_phase,
    "calibrate": cmd_calibrate,
    "amp-demo": cmd_amp_demo,
    "mse-experiment": cmd_mse_experiment,
}


def run(rc: RunConfig) -> int:
    os.makedirs(rc.out, exist_ok=True)
    t0 = time.time()
    outputs, extras = _DISPATCH[rc.command](rc)
    summary = {
        "command": rc.command,
        "config": _config_echo(rc),
        "seed": rc.seed,
        "outputs": [os.path.abspath(p) for p in outputs],
        "runtime_seconds": time.time() - t0,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    summary.update(extras)
    spath = os.path.join(rc.out, rc.command.replace("-", "_") + "_summary.json")
    _atomic_write(spath, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for pth in outputs + [spath]:
        log.info("wrote %s", pth)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    args = _parse_args(argv)
    try:
        _set_workers(args.workers)
        rc = build_config(args)
        return run(rc)
    except ConfigError as e:
        log.error("invalid configuration:\n%s", e)
        return 2
    except LassoPhaseError as e:
        log.error("%s: %s", type(e).__name__, e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
