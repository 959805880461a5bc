"""Command-line entry point: ``bayesmask {gen,fit,compare,trajectory,race}``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .baselines import ard_fit, lasso_cv, least_squares, unbiased_noise_precision
from .solvers import EG, EM, HYBRID, MACHINE_EPS, SolverConfig, fit

BM_METHODS = {"bm-em": EM, "bm-eg": EG, "bm-hybrid": HYBRID}


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, frozenset):
        return sorted(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _dump(obj, path):
    text = json.dumps(obj, indent=2, default=_json_default, allow_nan=False)
    Path(path).write_text(text)


def _finite(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


def cmd_gen(args):
    if args.kind == "toy":
        data = ex.gen_toy(args.seed, pairs=args.pairs)
    else:
        data = ex.gen_uniform(args.seed, args.k, args.multiplier)
    ex.save_dataset(data, args.out, kind=args.kind, seed=args.seed)


def cmd_fit(args):
    data = ex.load_dataset(args.data)
    out = Path(args.out)
    if args.method in BM_METHODS:
        kw = dict(variant=BM_METHODS[args.method], delta=args.delta, seed=args.seed)
        if args.eta is not None:
            kw["eta"] = args.eta
        if args.method == "bm-hybrid":
            kw["switch_iteration"] = args.switch_t
        cfg = SolverConfig(**kw)
        res = fit(data, cfg)
        doc = {
            "method": args.method,
            "status": res.status,
            "error": res.error,
            "beta": res.beta,
            "pi": res.pi,
            "pruned": np.flatnonzero(res.pruned),
            "pruned_at": {str(k): v for k, v in res.pruned_at.items()},
            "lam": res.state.lam,
            "iterations": res.n_iterations,
            "config": {k: _finite(v) for k, v in cfg.__dict__.items()},
        }
        ex.write_csv(
            [{"iteration": h.iteration, "objective": h.objective, "elapsed": h.elapsed, "n_active": h.n_active}
             for h in res.history],
            out.with_name(out.stem + "_history.csv"),
        )
        if not res.ok:
            _dump(doc, out)
            raise RuntimeError(f"fit failed: {res.error}")
    else:
        if args.method == "ls":
            est = least_squares(data)
        else:
            lam = unbiased_noise_precision(data)
            est = lasso_cv(data, lam, args.folds, seed=args.seed) if args.method == "lasso" else ard_fit(data, lam)
        doc = {
            "method": args.method,
            "beta": est.beta_hat,
            "lam": _finite(est.lam),
            "alpha": est.alpha,
            "gamma": est.gamma_hat,
            "pruned": np.flatnonzero(est.pruned),
        }
    doc["manifest"] = ex.manifest(data=str(args.data))
    _dump(doc, out)


def cmd_compare(args):
    spec = ex.ExperimentSpec.from_dict(json.loads(Path(args.spec).read_text()))
    res = ex.run_comparison(spec, n_jobs=args.jobs)
    ex.write_comparison(res, args.out)


def cmd_trajectory(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    points = None
    if args.points:
        points = [tuple(float(v) for v in p.split(",")) for p in args.points]
    records = ex.run_trajectories(args.seed, args.n_samples, points, args.budget, args.eta, args.eta_plain)
    for algo in (ex.EM, ex.EG, ex.EG_NO_REPARAM):
        rows = [r for rec in records if rec.algorithm == algo for r in rec.rows()]
        ex.write_csv(rows, out / f"trajectory_{algo}.csv")
    ex.write_csv(
        [{"algorithm": r.algorithm, "beta1_init": r.initial_point[0], "pi1_init": r.initial_point[1],
          "pruned_at": r.pruned_at, "status": r.status} for r in records],
        out / "pruning.csv",
    )
    _dump(ex.manifest(seed=args.seed, n_samples=args.n_samples, budget=args.budget, eta=args.eta,
                      eta_plain=args.eta_plain, initial_points=points or ex.default_initial_points()),
          out / "manifest.json")


def cmd_race(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series = ex.run_convergence_race(args.seed, args.k, args.switch_t, delta=args.delta,
                                     max_iterations=args.max_iterations)
    for name, s in series.items():
        ex.write_csv(s.rows(), out / f"race_{name}.csv")
    _dump(ex.manifest(seed=args.seed, k=args.k, switch_t=args.switch_t, delta=args.delta,
                      final={n: {"correct": s.final_correct, "wrong": s.final_wrong, "status": s.status}
                             for n, s in series.items()}),
          out / "manifest.json")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayesmask", description="Bayesian masking for sparse linear regression")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--kind", choices=["toy", "uniform"], required=True)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--pairs", type=int, default=20)
    g.add_argument("--multiplier", type=int, default=20)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="fit one estimator to a dataset file")
    f.add_argument("--data", required=True)
    f.add_argument("--method", choices=[*BM_METHODS, "lasso", "ard", "ls"], required=True)
    f.add_argument("--delta", type=float, default=MACHINE_EPS)
    f.add_argument("--eta", type=float, default=None)
    f.add_argument("--switch-t", type=int, default=200)
    f.add_argument("--folds", type=int, default=10)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("compare", help="run a BM / Lasso / ARD comparison from a JSON spec")
    c.add_argument("--spec", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--jobs", type=int, default=1)
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("trajectory", help="learning trajectories on the toy problem")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--n-samples", type=int, default=100)
    t.add_argument("--budget", type=int, default=50_000)
    t.add_argument("--eta", type=float, default=2e-6)
    t.add_argument("--eta-plain", type=float, default=2e-4)
    t.add_argument("--points", nargs="*", metavar="BETA,PI")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_trajectory)

    r = sub.add_parser("race", help="hybrid vs FAB-EM pruning over time")
    r.add_argument("--k", type=int, default=50)
    r.add_argument("--switch-t", type=int, default=200)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--delta", type=float, default=1e-3)
    r.add_argument("--max-iterations", type=int, default=100_000)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_race)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # report every failure as JSON on stderr
        json.dump({"error": type(exc).__name__, "message": str(exc), "command": args.command}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
