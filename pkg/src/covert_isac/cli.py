"""Command-line front end: scenario solves, sweeps, oracle validation, exports.

Exit codes: 0 success, 1 usage or configuration error, 2 infeasible scenario,
3 solver or numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import detection as det
from . import optimizer as opt
from .beampattern import SteeringGrid, make_grid, write_beampattern_csv
from .scenario import (
    ChannelSet,
    ConfigError,
    MODE_NAMES,
    SystemConfig,
    generate_channels,
    load_config,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_SOLVER = 3

SWEEP_PARAMS = ("p_b_max", "p_a_max", "r_min", "max_objective")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _worker_count() -> int:
    env = os.environ.get("COVERT_ISAC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SystemExit(EXIT_USAGE)
    return max(1, min(4, os.cpu_count() or 1))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covert-isac",
                     description="Covert-communication beampattern design toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", parents=[], help="run one scenario design")
    solve.add_argument("config")
    solve.add_argument("--mode", choices=MODE_NAMES, default="bounded")
    solve.add_argument("--benchmark", choices=opt.BENCHMARKS, default="dfan")
    solve.add_argument("--out", default=".")
    solve.add_argument("--timeout-s", type=float, default=None)
    solve.set_defaults(func=cmd_solve)

    sweep = sub.add_parser("sweep", help="parameter sweep producing a CSV")
    sweep.add_argument("config")
    sweep.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    sweep.add_argument("--from", dest="start", type=float, required=True)
    sweep.add_argument("--to", dest="stop", type=float, required=True)
    sweep.add_argument("--steps", type=int, required=True)
    sweep.add_argument("--seeds", type=int, default=10)
    sweep.add_argument("--mode", choices=MODE_NAMES, default="statistical")
    sweep.add_argument("--benchmark", choices=opt.BENCHMARKS, default="dfan")
    sweep.add_argument("--l-max", type=float, default=30.0,
                       help="sensing-error cap for rate sweeps")
    sweep.add_argument("--out", default="sweep.csv")
    sweep.add_argument("--timeout-s", type=float, default=None)
    sweep.set_defaults(func=cmd_sweep)

    validate = sub.add_parser("validate-dep",
                              help="closed forms vs Monte Carlo for the detection formulas")
    validate.add_argument("config")
    validate.add_argument("--mode", choices=MODE_NAMES + ("all",), default="all")
    validate.add_argument("--samples", type=int, default=10**6)
    validate.add_argument("--seed", type=int, default=None)
    validate.add_argument("--solution", default=None,
                          help="optional solution file supplying the design")
    validate.add_argument("--out", default="-")
    validate.set_defaults(func=cmd_validate_dep)

    beam = sub.add_parser("beampattern", help="re-evaluate a solution file into a CSV")
    beam.add_argument("solution")
    beam.add_argument("--out", default="beampattern.csv")
    beam.set_defaults(func=cmd_beampattern)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except opt.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except opt.SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


# ---------------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    if args.mode == "instantaneous":
        print("solve: the design problems are defined for bounded, gaussian, "
              "or statistical warden models", file=sys.stderr)
        return EXIT_USAGE
    channels = generate_channels(cfg, args.mode)
    grid = make_grid(cfg)
    solution = opt.benchmark_solve(cfg, channels, grid, args.benchmark,
                                   time_limit=args.timeout_s)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    opt.save_solution(out_dir / "solution.json", cfg, solution)
    write_beampattern_csv(solution.pair(), grid, out_dir / "beampattern.csv")
    print(f"status={solution.status} objective={solution.objective:.6g} "
          f"rate={solution.achieved_rate:.6g} rank_ratio={solution.rank_ratio:.3g}")
    if solution.status.startswith("warning"):
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------------------


def _sweep_point(cfg: SystemConfig, args, param: str, value: float, seed: int):
    """One (parameter value, seed) cell; errors become a status string."""
    point_cfg = cfg.replace(seed=cfg.seed + seed)
    try:
        if param == "p_b_max":
            point_cfg = point_cfg.replace(p_t=point_cfg.p_a_max + value)
        elif param == "p_a_max":
            p_a = max(value - 1.0, point_cfg.p_a_min)
            point_cfg = point_cfg.replace(p_a_max=value, p_a=p_a)
        elif param == "r_min":
            point_cfg = point_cfg.replace(r_min=value)
        channels = generate_channels(point_cfg, args.mode)
        grid = make_grid(point_cfg)
        if param in ("p_b_max", "p_a_max", "max_objective"):
            l_max = value if param == "max_objective" else args.l_max
            rate, solution = opt.max_covert_rate(point_cfg, channels, grid, l_max=l_max,
                                                 benchmark=args.benchmark,
                                                 time_limit=args.timeout_s)
            if solution is None:
                return (value, seed, args.mode, args.benchmark, 0.0, float("nan"),
                        "infeasible")
            return (value, seed, args.mode, args.benchmark, solution.achieved_rate,
                    solution.objective, solution.status)
        solution = opt.benchmark_solve(point_cfg, channels, grid, args.benchmark,
                                       time_limit=args.timeout_s)
        return (value, seed, args.mode, args.benchmark, solution.achieved_rate,
                solution.objective, solution.status)
    except opt.InfeasibleError:
        return (value, seed, args.mode, args.benchmark, float("nan"), float("nan"),
                "infeasible")
    except opt.SolverFailure as exc:
        return (value, seed, args.mode, args.benchmark, float("nan"), float("nan"),
                f"solver-failure:{exc}")


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.steps < 2:
        print("sweep: --steps must be at least 2", file=sys.stderr)
        return EXIT_USAGE
    if not args.start < args.stop:
        print("sweep: require --from < --to", file=sys.stderr)
        return EXIT_USAGE
    if args.mode == "instantaneous":
        print("sweep: design sweeps need bounded, gaussian, or statistical mode",
              file=sys.stderr)
        return EXIT_USAGE
    values = np.linspace(args.start, args.stop, args.steps)
    cells = [(v, s) for v in values for s in range(args.seeds)]
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        rows = list(pool.map(lambda cell: _sweep_point(cfg, args, args.param, *cell),
                             cells))
    # Buffered rows come back in submission order: param-major, then seed.
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "seed", "mode", "benchmark", "covert_rate",
                         "objective", "status"])
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _reference_design(cfg: SystemConfig, channels: ChannelSet):
    """Mid-covert-regime reference design used when no solution file is given."""
    n = cfg.n
    t_cov = (cfg.p_a / n) * np.eye(n, dtype=complex)
    h_w = np.asarray(channels.h_w_hat, dtype=complex)
    rho1 = float(np.real(h_w.conj() @ (t_cov / cfg.p_a) @ h_w))
    target_rho2 = 0.5 * cfg.epsilon * (cfg.p_a_max - cfg.p_a_min) * rho1
    norm = float(np.linalg.norm(h_w))
    if norm == 0:
        w1 = np.zeros(n, dtype=complex)
    else:
        w1 = np.sqrt(target_rho2) * h_w / (norm**2)
        w1 = w1 * norm  # |h_w^H w1|^2 = target_rho2
    return w1, t_cov


def _validate_rows(cfg: SystemConfig, mode: str, w1, t_cov, samples: int, seed: int):
    rows = []
    channels = generate_channels(cfg, mode)
    if mode in ("bounded", "gaussian"):
        h_w = np.asarray(channels.h_w_hat, dtype=complex)
        rho1 = float(np.real(h_w.conj() @ (t_cov / cfg.p_a) @ h_w))
        rho2 = float(np.abs(h_w.conj() @ w1) ** 2)
        inp = det.BoundedDepInputs(rho1=rho1, rho2=rho2, sigma_w2=cfg.sigma_w2,
                                   p_a_min=cfg.p_a_min, p_a_max=cfg.p_a_max)
        result = det.min_dep_bounded(inp)
        gamma = result.gamma_star
        mc = det.mc_rates_bounded(inp, gamma, n_samples=samples, seed=seed)
        rows.append((mode, "p_fa", float(det.pfa_bounded(inp, gamma)), mc.pfa,
                     mc.pfa_half_width))
        rows.append((mode, "p_md", float(det.pmd_bounded(inp, gamma)), mc.pmd,
                     mc.pmd_half_width))
        rows.append((mode, "xi_star", result.xi_star, mc.xi, mc.xi_half_width))
    elif mode == "statistical":
        wcsi = channels.wcsi
        omega = wcsi.omega_w
        lam_a = float(np.real(np.trace(omega @ (t_cov / cfg.p_a)))) * wcsi.l_w
        lam_w1 = float(np.real(w1.conj() @ omega @ w1)) * wcsi.l_w
        if lam_w1 <= 0:
            lam_w1 = lam_a
        params = det.StatisticalDepParams(t_a=lam_a, lambda_w1=lam_w1,
                                          lambda_a=lam_a, sigma_w2=cfg.sigma_w2,
                                          p_a_min=cfg.p_a_min, p_a_max=cfg.p_a_max)
        gamma = 0.5 * (cfg.sigma_w2 + params.delta_a)
        mc = det.mc_rates_statistical(params, gamma, n_samples=samples, seed=seed)
        rows.append((mode, "p_fa", float(det.pfa_statistical(params, gamma)), mc.pfa,
                     mc.pfa_half_width))
        rows.append((mode, "p_md", float(det.pmd_statistical(params, gamma)), mc.pmd,
                     mc.pmd_half_width))
        closed = det.avg_min_dep_statistical(lam_w1, lam_a, cfg.p_a_min, cfg.p_a_max)
        est, half = det.mc_avg_min_dep_statistical(lam_w1, lam_a, cfg.p_a_min,
                                                   cfg.p_a_max, n_samples=samples,
                                                   seed=seed)
        rows.append((mode, "xi_bar_star", closed, est, half))
    elif mode == "instantaneous":
        p_b = channels.wcsi.p_b
        closed = det.avg_min_dep_instantaneous(p_b, cfg.p_a_min, cfg.p_a_max).xi_star
        est, half = det.mc_avg_min_dep_instantaneous(p_b, cfg.p_a_min, cfg.p_a_max,
                                                     n_samples=samples, seed=seed)
        rows.append((mode, "xi_bar2_star", closed, est, half))
    return rows


def cmd_validate_dep(args) -> int:
    cfg = load_config(args.config)
    if args.samples < 10**4:
        print("validate-dep: --samples must be at least 10000", file=sys.stderr)
        return EXIT_USAGE
    seed = cfg.seed if args.seed is None else args.seed
    modes = list(MODE_NAMES) if args.mode == "all" else [args.mode]
    if args.solution:
        doc = opt.load_solution(args.solution)
        w1, t_cov = doc["w1"], doc["t_cov"]
    else:
        w1, t_cov = _reference_design(cfg, generate_channels(cfg, "bounded"))
    rows = []
    for mode in modes:
        rows.extend(_validate_rows(cfg, mode, w1, t_cov, args.samples, seed))
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="",
                                                  encoding="utf-8")
    try:
        writer = csv.writer(out)
        writer.writerow(["mode", "quantity", "closed_form", "monte_carlo",
                         "half_width", "abs_err"])
        worst = 0.0
        for mode, quantity, closed, mc_val, half in rows:
            err = abs(closed - mc_val)
            worst = max(worst, err)
            writer.writerow([mode, quantity, _fmt(closed), _fmt(mc_val),
                             _fmt(half), _fmt(err)])
    finally:
        if out is not sys.stdout:
            out.close()
    if args.samples >= 10**6 and worst > 0.005:
        print(f"validation failed: worst |closed - mc| = {worst:.4g}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------------------


def cmd_beampattern(args) -> int:
    doc = opt.load_solution(args.solution)
    cfg_echo = dict(doc["config"])
    cfg_echo.pop("schema", None)
    path_loss = cfg_echo.pop("path_loss")
    from .scenario import PathLossParams
    cfg = SystemConfig(path_loss=PathLossParams(**path_loss),
                       **{k: tuple(v) if k == "target_angles" else v
                          for k, v in cfg_echo.items()})
    grid = make_grid(cfg)
    from .beampattern import CovariancePair
    pair = CovariancePair(w1=doc["w1_cov"], t=doc["t_cov"], eta=doc["eta"])
    write_beampattern_csv(pair, grid, args.out)
    print(f"wrote {grid.size} rows to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
