"""Command-line front end.

Subcommands: ``complete``, ``rpca``, ``diagnose``, ``bench`` and ``gen``.
Exit status is 0 on success, 1 when a bench suite fails its predicates and
2 on malformed input or an infeasible configuration.  The environment
variable ``APGD_NUM_THREADS`` caps the BLAS thread pool.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io as fio
from .exceptions import ConfigurationError, ParseError
from .harness import (
    TABLE2_ROWS,
    InstanceParams,
    make_instance,
    metrics,
    nmae,
    noiseless_completion_config,
    noiseless_rpca_config,
    noisy_config,
    rfne,
    run_suite,
    SUITES,
)
from .observe import (
    DiagnosticsReport,
    ObservationKind,
    ObservationSet,
    TangentSpace,
    alpha_sparsity,
    estimate_rip,
    estimate_rip_sparse,
    estimate_rop,
    incoherence,
)
from .regularizers import RegularizerSpec
from .solver import SolverConfig, default_lambdas, solve
from .spectral import LowRankFactors, SparsePerturbation, lrssvd

logger = logging.getLogger("apgd")

THREADS_ENV = "APGD_NUM_THREADS"

SYNTH_PRESETS = {
    "noiseless": ("completion", dict(d1=200, d2=100, r=3, p=0.3)),
    "rpca": ("rpca", dict(d1=200, d2=200, r=5, p=1.0, alpha=0.05)),
    **{f"table2-{k}": ("completion", {n: v for n, v in row.items() if n != "reported"})
       for k, row in TABLE2_ROWS.items()},
}


@dataclass
class RunConfig:
    """Everything one solve needs: input files, model kind, solver settings and outputs."""

    observations: str | None = None
    shape: list | None = None
    kind: str = "EntrySampling"
    holdout: str | None = None
    rating_range: list = field(default_factory=lambda: [1.0, 5.0])
    ground_truth: str | None = None  # directory written by write_factors
    sparse_truth: str | None = None  # triplet CSV of s*
    noise_std: float | None = None
    synth: str | None = None
    seed: int = 0
    out: str = "out"
    solver: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d, base_dir=None):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown run config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if base_dir is not None:
            for name in ("observations", "holdout", "ground_truth", "sparse_truth"):
                val = getattr(cfg, name)
                if val is not None and not os.path.isabs(val):
                    setattr(cfg, name, str(Path(base_dir) / val))
        return cfg

    def to_dict(self):
        return dataclasses.asdict(self)


def _load_run_config(args):
    if args.config:
        d = fio.read_json(args.config)
        if not isinstance(d, dict):
            raise ParseError("run config must be a JSON object", args.config, 1)
        cfg = RunConfig.from_dict(d, base_dir=Path(args.config).parent)
    else:
        cfg = RunConfig()
    if getattr(args, "input", None):
        cfg.observations = args.input
    for flag, name in (("seed", "seed"), ("out", "out"), ("synth", "synth"),
                       ("noise_std", "noise_std"), ("holdout", "holdout")):
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, name, val)
    overrides = {
        "tol": args.tol, "max_iter": args.max_iter, "lambda_L": args.lambda_l,
        "lambda_s": args.lambda_s, "r0": args.rank_cap, "tau_L": args.tau_l,
    }
    for k, v in overrides.items():
        if v is not None:
            cfg.solver[k] = v
    if args.reg is not None:
        cfg.solver["reg_L"] = {"family": args.reg, "gamma": args.gamma_l or cfg.solver.get("reg_L", {}).get("gamma", 1.0)}
        # completion has no sparse part, so its penalty is left at the default
        if args.command != "complete":
            cfg.solver["reg_s"] = {"family": args.reg,
                                   "gamma": args.gamma_s or cfg.solver.get("reg_s", {}).get("gamma", 1.0)}
    return cfg


def _solver_config(cfg, obs):
    """SolverConfig from the bag; noise-scaled lambdas fill in when a noise level is known."""
    d = dict(cfg.solver)
    if "seed" not in d:
        d["seed"] = cfg.seed
    if "lambda_L" not in d:
        if cfg.noise_std is None:
            raise ConfigurationError("give --lambda-l (or solver.lambda_L) or a --noise-std for default lambdas")
        lam_L, lam_s = default_lambdas(obs, cfg.noise_std)
        d["lambda_L"] = lam_L
        d.setdefault("lambda_s", lam_s)
    return SolverConfig.from_dict(d)


def _write_solution(out, sol, obs, config, extra_metrics=None):
    out.mkdir(parents=True, exist_ok=True)
    fio.write_factors(out / "factors", sol.L, config.to_dict())
    sol.trace.to_csv(out / "trace.csv")
    if obs.d_s:
        fio.write_sparse_part(out / "s.csv", obs, sol.s)
    report = {"converged": sol.converged, "iterations": sol.iterations, "rank": sol.L.rank}
    report.update(extra_metrics or {})
    fio.write_json(out / "metrics.json", report)
    return report


def _holdout_metrics(cfg, sol):
    if not cfg.holdout:
        return {}
    trip = fio.read_triplets(cfg.holdout)
    pred = sol.L.entries(trip.rows, trip.cols)
    return {"nmae": nmae(pred, trip.vals, cfg.rating_range), "holdout_size": int(trip.vals.size)}


def _truth_metrics(cfg, sol, obs):
    out = {}
    if cfg.ground_truth:
        L_star = fio.read_factors(cfg.ground_truth)
        out["rfne"] = rfne(sol.L, L_star)
    if cfg.sparse_truth and obs.d_s:
        trip = fio.read_triplets(cfg.sparse_truth, obs.shape)
        grid = np.zeros(obs.shape)
        grid[trip.rows, trip.cols] = trip.vals
        s_star = grid[obs.rows, obs.cols]
        out["exact_support"] = bool(np.array_equal(s_star != 0, sol.s != 0))
    return out


def _synth_solve(cfg, kind_override=None):
    try:
        kind, params = SYNTH_PRESETS[cfg.synth]
    except KeyError:
        raise ConfigurationError(f"unknown --synth preset {cfg.synth!r}; choose from {sorted(SYNTH_PRESETS)}") from None
    kind = kind_override or kind
    inst = make_instance(kind, InstanceParams(**params), cfg.seed)
    if cfg.solver.get("lambda_L") is not None:
        config = _solver_config(cfg, inst.obs)
    elif inst.params["noise_abs"] > 0:
        config = noisy_config(inst)
    elif kind == "rpca":
        config = noiseless_rpca_config(inst)
    else:
        config = noiseless_completion_config(inst)
    keep = {k: v for k, v in cfg.solver.items() if k in ("tol", "max_iter", "r0", "seed")}
    if keep:
        config = dataclasses.replace(config, **keep)
    sol = solve(inst.obs, config, ground_truth=(inst.L_star, inst.s_star if inst.obs.d_s else None))
    m = metrics(sol, inst).to_dict()
    if inst.obs.d_s:
        m["exact_support"] = bool(np.array_equal(inst.s_star != 0, sol.s != 0))
    return _write_solution(Path(cfg.out), sol, inst.obs, config, {k: v for k, v in m.items() if v is not None})


def cmd_complete(args):
    cfg = _load_run_config(args)
    if cfg.synth:
        report = _synth_solve(cfg, "completion")
    else:
        if not cfg.observations:
            raise ConfigurationError("complete needs an observations file or --synth")
        obs = fio.read_observations(cfg.observations, cfg.shape, ObservationKind.EntrySampling)
        config = _solver_config(cfg, obs)
        sol = solve(obs, config)
        extra = {**_holdout_metrics(cfg, sol), **_truth_metrics(cfg, sol, obs)}
        report = _write_solution(Path(cfg.out), sol, obs, config, extra)
    print(_summary_line(report))
    return 0


def _read_rpca_input(path, shape):
    with open(path) as fh:
        head = fh.readline()
    if head.lower().startswith("%%matrixmarket") or head.strip() == "i,j,value":
        obs = fio.read_observations(path, shape, ObservationKind.Identity)
        return obs
    X = fio.read_dense(path)
    d1, d2 = X.shape
    rows, cols = np.divmod(np.arange(d1 * d2), d2)
    return ObservationSet(rows, cols, X.reshape(-1), (d1, d2), kind=ObservationKind.Identity)


def cmd_rpca(args):
    cfg = _load_run_config(args)
    if cfg.synth:
        report = _synth_solve(cfg, "rpca")
    else:
        if not cfg.observations:
            raise ConfigurationError("rpca needs a matrix file or --synth")
        obs = _read_rpca_input(cfg.observations, cfg.shape)
        config = _solver_config(cfg, obs)
        sol = solve(obs, config)
        report = _write_solution(Path(cfg.out), sol, obs, config, _truth_metrics(cfg, sol, obs))
    print(_summary_line(report))
    return 0


def cmd_diagnose(args):
    cfg = _load_run_config(args)
    if not cfg.observations:
        raise ConfigurationError("diagnose needs an observations file")
    kind = ObservationKind.parse(args.kind or cfg.kind)
    obs = fio.read_observations(cfg.observations, cfg.shape, kind)
    if args.factors:
        lr = fio.read_factors(args.factors)
    else:
        # rank-r estimate from the first gradient step
        r = args.rank_cap or 1
        lr = lrssvd(LowRankFactors.zeros(obs.shape), obs.scatter(obs.sampling_scale * obs.b),
                    r, inner_iters=100, tol=1e-10).factors
    T = TangentSpace.of(lr)
    tau_L = cfg.solver.get("tau_L", 1.0)
    kappa_L = estimate_rip(obs, T, tau_L=tau_L, seed=cfg.seed) ** 2
    kappa_s = kappa = alpha = 0.0
    if obs.d_s and args.support:
        trip = fio.read_triplets(args.support, obs.shape)
        grid = np.zeros(obs.shape, dtype=bool)
        grid[trip.rows, trip.cols] = trip.vals != 0
        omega = grid[obs.rows, obs.cols]
        kappa_s = estimate_rip_sparse(obs, omega, tau_s=cfg.solver.get("tau_s", 1.0), seed=cfg.seed) ** 2
        kappa = estimate_rop(obs, T, omega, seed=cfg.seed) ** 2
        alpha = alpha_sparsity(SparsePerturbation(trip.rows, trip.cols, trip.vals, obs.shape))
    report = DiagnosticsReport(incoherence(lr), kappa_L, kappa_s, kappa, alpha)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    fio.write_json(out / "diagnostics.json", report.to_dict())
    print(" ".join(f"{k}={v:.6g}" for k, v in report.to_dict().items()))
    return 0


def cmd_bench(args):
    if args.seed is None:
        raise ConfigurationError("bench needs an explicit --seed")
    options = {}
    if args.seeds is not None:
        options["n_seeds"] = args.seeds
    if args.row is not None:
        if args.suite != "table2":
            raise ConfigurationError("--row applies to the table2 suite only")
        options["row"] = args.row
    rep = run_suite(args.suite, seed=args.seed, **options)
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    rep.write_json(out / f"{args.suite}.json")
    rep.to_csv(out / f"{args.suite}.csv")
    for name, ok in rep.predicates.items():
        print(f"{'PASS' if ok else 'FAIL'} {args.suite}: {name}")
    return 0 if rep.passed else 1


def cmd_gen(args):
    """Write a synthetic instance plus a run config that solves it."""
    params = InstanceParams(args.d1, args.d2, args.r, args.p, noise_std=args.noise_std,
                            alpha=args.alpha)
    kind = args.kind
    inst = make_instance(kind, params, args.seed)
    out = Path(args.out or "fixture")
    out.mkdir(parents=True, exist_ok=True)
    fio.write_observations(out / "observations.mtx", inst.obs)
    fio.write_factors(out / "truth", inst.L_star)
    if kind == "rpca":
        fio.write_sparse_part(out / "s_truth.csv", inst.obs, inst.s_star)
        solver = noiseless_rpca_config(inst) if args.noise_std == 0 else noisy_config(inst, tau_L=1.0)
    else:
        solver = noiseless_completion_config(inst) if args.noise_std == 0 else noisy_config(inst)
    run = RunConfig(
        observations="observations.mtx", shape=list(inst.obs.shape),
        kind=inst.obs.kind.value, ground_truth="truth",
        sparse_truth="s_truth.csv" if kind == "rpca" else None,
        seed=args.seed, out="result", solver=solver.to_dict(),
    )
    fio.write_json(out / "config.json", run.to_dict())
    print(f"wrote {kind} instance {inst.obs.shape} with n={inst.obs.n} to {out}")
    return 0


def _summary_line(report):
    return " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in report.items())


def _common(p):
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--reg", choices=["l1", "capped", "scad", "mcp"])
    p.add_argument("--gamma-l", type=float, help="shape parameter of the low-rank penalty")
    p.add_argument("--gamma-s", type=float, help="shape parameter of the sparse penalty")
    p.add_argument("--lambda-l", type=float)
    p.add_argument("--lambda-s", type=float)
    p.add_argument("--tau-l", type=float, help="multiplier on the step d1 d2 / n")
    p.add_argument("--rank-cap", type=int)
    p.add_argument("--noise-std", type=float, help="noise level for default lambdas")
    p.add_argument("--synth", help=f"synthetic preset: {', '.join(SYNTH_PRESETS)}")


def build_parser():
    parser = argparse.ArgumentParser(prog="apgd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("complete", help="matrix completion from sampled entries")
    p.add_argument("input", nargs="?", help="MatrixMarket or i,j,value file")
    p.add_argument("--holdout", help="i,j,value file of held-out ratings for NMAE")
    _common(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("rpca", help="low-rank plus sparse separation")
    p.add_argument("input", nargs="?", help="dense CSV matrix, MatrixMarket or i,j,value file")
    _common(p)
    p.set_defaults(func=cmd_rpca)

    p = sub.add_parser("diagnose", help="incoherence, isometry and orthogonality estimates")
    p.add_argument("input", nargs="?")
    p.add_argument("--factors", help="directory with factors.json")
    p.add_argument("--support", help="i,j,value file whose nonzeros form the sparse support")
    p.add_argument("--kind", choices=[k.value for k in ObservationKind])
    _common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bench", help="run an experiment suite")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--seeds", type=int, help="number of seeds per cell")
    p.add_argument("--row", type=int, choices=sorted(TABLE2_ROWS))
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="write a synthetic fixture and its run config")
    p.add_argument("--kind", choices=["completion", "rpca"], default="completion")
    p.add_argument("--d1", type=int, default=200)
    p.add_argument("--d2", type=int, default=100)
    p.add_argument("--r", type=int, default=3)
    p.add_argument("--p", type=float, default=0.3)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)
    return parser


def _thread_limit():
    val = os.environ.get(THREADS_ENV)
    if not val:
        return nullcontext()
    try:
        n = int(val)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {val!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
