"""Command-line entry point.

Exit codes: 0 when every check passes, 1 when a mathematical check fails,
2 on input errors. Every command writes ``report.json`` into the output
directory; ``solve`` and ``genr`` also write CSV trajectories.
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import matops
from .backward import solve_linear_bsde
from .config import ConfigError, load_config
from .errors import (AssumptionViolation, BlowUpDetected, LostPositivity, NoConvergence,
                     NotPositiveDefinite, SREError)
from .io import write_path_csv, write_report, write_rows_csv
from .paths import TimeGrid
from .problem import CheckReport, check_assumption_i, check_assumption_ii, transform
from .riccati import explosion_probe, solution_checks, solve_sre
from .stochastic import (brownian_ensemble, diffusion_refinement, euler_second_moment,
                         generate_gauge, mc_representation, oracle_agrees)

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class _Timer:
    def __init__(self):
        self.timings = {}

    def __call__(self, name):
        timer = self

        class _Span:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = time.perf_counter() - self.t0

        return _Span()


def _report(cfg, checks, summary, diagnostics, timer):
    return {
        "config_echo": cfg.echo,
        "checks": [c.to_dict() for c in checks],
        "solution_summary": summary,
        "diagnostics": diagnostics,
        "timings": timer.timings,
    }


def _mat(m):
    return np.asarray(m).tolist()


def _need_problem(cfg):
    if cfg.problem is None:
        raise ConfigError("missing section [problem]")
    return cfg.problem


def cmd_check(cfg, args, timer):
    p = _need_problem(cfg)
    with timer("check"):
        tp = transform(p)
        checks = [check_assumption_i(tp, cfg.solver.assumption_tol),
                  check_assumption_ii(p, cfg.solver.delta, tp.R)]
    ok = all(c.passed for c in checks)
    lo, hi = (float(x) for x in matops.eig_extremes(tp.K_T))
    summary = {
        "status": "pass" if ok else "fail",
        "max_rtil_norm": checks[0].metrics["max_rtil_norm"],
        "min_eig_qtil": checks[0].metrics["min_eig_qtil"],
        "eig_extremes_KT": [lo, hi],
    }
    return (EXIT_OK if ok else EXIT_FAIL), _report(cfg, checks, summary, {}, timer)


def _failure(exc):
    info = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("node", "min_eig", "last_finite"):
        v = getattr(exc, attr, None)
        if v is not None:
            info[attr] = v
    rep = getattr(exc, "report", None)
    if rep is not None:
        info["iteration"] = rep.to_dict()
    if isinstance(exc, BlowUpDetected) and exc.last_finite is not None and exc.path is not None:
        info["last_finite_time"] = float(exc.path.grid.nodes[exc.last_finite])
    return info


def cmd_solve(cfg, args, timer):
    p = _need_problem(cfg)
    opts = cfg.solver
    out = Path(cfg.out_dir)
    try:
        with timer("solve"):
            sol = solve_sre(p, opts)
    except (AssumptionViolation, BlowUpDetected, NoConvergence, LostPositivity,
            NotPositiveDefinite) as exc:
        checks = list(getattr(exc, "reports", []))
        failed = "assumptions" if isinstance(exc, AssumptionViolation) else type(exc).__name__
        checks.append(CheckReport("pipeline", False, {}, {}, str(exc)))
        summary = {"status": "fail", "reason": str(exc), "failed_check": failed}
        return EXIT_FAIL, _report(cfg, checks, summary, {"failure": _failure(exc)}, timer)

    d = sol.diagnostics
    checks = d.assumption_reports + solution_checks(sol, opts)
    failed = [c.name for c in checks[2:] if not c.passed]
    summary = {
        "status": "fail" if failed else "pass",
        "reason": "; ".join(f"{n} check failed" for n in failed),
        "n": p.n,
        "T": p.T,
        "grid_steps": p.grid_steps,
        "P0": _mat(sol.Ppath.values[0]),
        "X0": _mat(sol.Xpath.values[0]),
        "K0": _mat(sol.Kpath.values[0]),
        "P_T": _mat(sol.Ppath.values[-1]),
    }
    diagnostics = {
        "sre_residual_max": d.sre_residual_max,
        "terminal_exact": d.terminal_exact,
        "inverse_identity_max": d.inverse_identity_max,
        "min_eig_K_over_time": float(np.min(d.min_eig_K_over_time)),
        "beta0": d.beta0,
        "lower_bound": d.lower_bound.to_dict(),
        "iteration": d.iteration.to_dict(),
    }
    if "csv" in cfg.formats:
        with timer("write"):
            for name, path in (("P", sol.Ppath), ("K", sol.Kpath), ("X", sol.Xpath),
                               ("Lambda", sol.Lambda_path), ("R", sol.Rpath)):
                write_path_csv(path, out / f"{name}.csv")
            it = d.iteration
            write_rows_csv(["iteration", "sup_diff", "monotonicity_margin"],
                           [(k + 1, s, m) for k, (s, m) in enumerate(
                               zip(it.sup_diff_per_iter, it.monotonicity_margin_per_iter))],
                           out / "iterates.csv")
    code = EXIT_FAIL if failed else EXIT_OK
    return code, _report(cfg, checks, summary, diagnostics, timer)


def cmd_oracle(cfg, args, timer):
    oc = cfg.oracle
    if oc is None:
        raise ConfigError("missing section [oracle]")
    grid = TimeGrid(oc.T, oc.grid_steps)
    with timer("ode"):
        Y = solve_linear_bsde(oc.data, grid)
    with timer("brownian"):
        ens = brownian_ensemble(oc.seed, oc.n_paths, grid, oc.antithetic, args.threads)
    checks, probes = [], []
    with timer("monte_carlo"):
        for k, vec in enumerate(oc.probes):
            v = np.asarray(vec)
            ref = float(v @ Y.values[0] @ v)
            est = mc_representation(oc.data, v, ens)
            em = euler_second_moment(oc.data.Ahat, oc.data.Chat, oc.data.Qhat, oc.data.Hhat,
                                     v, grid)
            ok, allowance = oracle_agrees(est, ref, grid.dt, oc.bias_c, oc.sigmas)
            probes.append({"p": vec, "ode": ref, "mc": est.to_dict(), "euler_mean": em})
            checks.append(CheckReport(
                f"probe_{k}", bool(ok), {"ode": ref, "mc": est.value, "stderr": est.stderr,
                                         "abs_error": abs(est.value - ref)},
                {"sigmas": oc.sigmas, "bias_c": oc.bias_c, "dt": grid.dt,
                 "allowance": allowance}))
    ok = all(c.passed for c in checks)
    summary = {"status": "pass" if ok else "fail", "probes": probes}
    diagnostics = {"n_paths": oc.n_paths, "grid_steps": oc.grid_steps, "seed": oc.seed,
                   "antithetic": oc.antithetic}
    return (EXIT_OK if ok else EXIT_FAIL), _report(cfg, checks, summary, diagnostics, timer)


def cmd_explode(cfg, args, timer):
    ec = cfg.explode
    if ec is None:
        raise ConfigError("missing section [explode]")
    grid = TimeGrid(ec.T, ec.grid_steps)
    with timer("probe"):
        res = explosion_probe(ec.Qtil, ec.X_T, grid, ec.overflow_guard)
    if res.blown_up:
        summary = {"status": "blow_up", "blow_up_time": res.blow_up_time,
                   "time_to_blow_up": ec.T - res.blow_up_time,
                   "last_finite_node": res.path.last_finite}
    else:
        summary = {"status": "completed", "X0": _mat(res.path.values[0])}
    if "csv" in cfg.formats:
        write_path_csv(res.path, Path(cfg.out_dir) / "X.csv")
    return EXIT_OK, _report(cfg, [], summary, {"overflow_guard": ec.overflow_guard}, timer)


def _scalar_closed_form(gc, W, grid):
    """``R = S0 exp(-(b^2 + b c + c^2) t - (b + c) W)`` for scalar data and F = 0."""
    if gc.S0.shape != (1, 1) or np.any(gc.F != 0):
        return None
    b, c, s0 = gc.B[0, 0], gc.C[0, 0], gc.S0[0, 0]
    return s0 * np.exp(-(b * b + b * c + c * c) * grid.nodes - (b + c) * W)


def cmd_genr(cfg, args, timer):
    gc = cfg.genr
    if gc is None:
        raise ConfigError("missing section [genr]")
    sign = -1 if gc.flip_sign else 1
    with timer("refinement"):
        rep = diffusion_refinement(gc.B, gc.C, gc.F, gc.S0, gc.T, gc.seed, gc.ladder, sign,
                                   gc.slope_threshold)
    grid = TimeGrid(gc.T, gc.ladder[-1])
    dW = brownian_ensemble(gc.seed, 1, grid).increments[0]
    with timer("gauge"):
        R = generate_gauge(gc.B, gc.C, gc.F, gc.S0, dW, grid)
    W = np.concatenate([[0.0], np.cumsum(dW)])
    exact = _scalar_closed_form(gc, W, grid)
    summary = {"status": "pass" if rep.passed else "fail", "slope": rep.slope,
               "R_T": _mat(R.values[-1]), "symmetric": R.symmetric}
    if exact is not None:
        summary["closed_form_max_error"] = float(np.max(np.abs(R.values[:, 0, 0] - exact)))
    checks = [CheckReport("diffusion_slope", rep.passed, rep.to_dict(),
                          {"threshold": gc.slope_threshold})]
    if "csv" in cfg.formats:
        write_path_csv(R, Path(cfg.out_dir) / "R.csv")
    return (EXIT_OK if rep.passed else EXIT_FAIL), _report(cfg, checks, summary, {}, timer)


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "oracle": cmd_oracle,
            "explode": cmd_explode, "genr": cmd_genr}


def build_parser():
    ap = argparse.ArgumentParser(prog="isre", description="Indefinite stochastic Riccati solver")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", help="output directory (overrides [output].directory)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for path simulation")
    ap.add_argument("--override-checks", action="store_true",
                    help="solve even when a hypothesis check fails")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.out_dir = args.out
        if args.override_checks:
            cfg.solver = replace(cfg.solver, override_checks=True)
            cfg.echo["solver"] = cfg.solver.to_dict()
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        code, report = COMMANDS[args.command](cfg, args, _Timer())
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SREError, ValueError) as exc:
        # Remaining library errors here come from inconsistent input data.
        print(f"input error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    write_report(report, cfg.out_dir)
    status = report["solution_summary"].get("status", "")
    reason = report["solution_summary"].get("reason", "")
    print(f"{args.command}: {status}" + (f" ({reason})" if reason else ""))
    return code


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
