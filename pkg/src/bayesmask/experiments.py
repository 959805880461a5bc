"""Synthetic benchmarks comparing Bayesian masking with Lasso and ARD.

Two data designs are provided: the two-feature toy problem (rows
``(1, 0)`` and ``(0.5, 1)`` repeated, true weights ``(0, 1)``) and uniform
random designs with half of the weights zeroed.  Drivers return plain
row dictionaries so results can go straight to CSV.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import binomial_ci, mean_se, score_selection
from .baselines import ard_fit, lasso_cv, unbiased_noise_precision
from .errors import BayesMaskError
from .model import Dataset, initial_state_from
from .solvers import EG, EM, HYBRID, SolverConfig, fit

TOY_K2, UNIFORM_K = "TOY_K2", "UNIFORM_K"
TOY_DESIGN = np.array([[1.0, 0.0], [0.5, 1.0]])
TOY_BETA = np.array([0.0, 1.0])
METHODS = ("BM", "LASSO", "ARD")


def gen_toy(seed: int, pairs: int = 20, noise_variance: float = 0.005) -> Dataset:
    """Stack ``pairs`` copies of the 2x2 toy design (N = 2 * pairs)."""
    if pairs < 1:
        raise ValueError("pairs must be positive")
    rng = np.random.default_rng(seed)
    x = np.tile(TOY_DESIGN, (pairs, 1))
    y = x @ TOY_BETA + rng.normal(0.0, math.sqrt(noise_variance), size=2 * pairs)
    return Dataset(x=x, y=y, true_beta=TOY_BETA, true_irrelevant=frozenset({0}))


def gen_uniform(seed: int, k: int, multiplier: int = 20, noise_variance: float = 0.2) -> Dataset:
    """``X, beta ~ U[0, 1]`` with a random ``floor(k/2)`` subset of ``beta`` zeroed."""
    if k < 2:
        raise ValueError("uniform design needs k >= 2")
    rng = np.random.default_rng(seed)
    n = multiplier * k
    x = rng.uniform(0.0, 1.0, size=(n, k))
    beta = rng.uniform(0.0, 1.0, size=k)
    zero = rng.choice(k, size=k // 2, replace=False)
    beta[zero] = 0.0
    y = x @ beta + rng.normal(0.0, math.sqrt(noise_variance), size=n)
    return Dataset(x=x, y=y, true_beta=beta, true_irrelevant=frozenset(int(i) for i in zero))


def trial_seed(master: int, index: int) -> int:
    """Seed for trial ``index`` derived from the master seed by a counter split."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# -- files -------------------------------------------------------------------

def git_revision() -> Optional[str]:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None if out.returncode == 0 else None


def manifest(**extra) -> dict:
    out = {"library": "bayesmask", "version": __version__, "git_revision": git_revision()}
    out.update(extra)
    return out


def _manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_dataset(data: Dataset, path, **extra) -> None:
    """CSV with ``y`` first and ``x_1..x_K`` after, plus ``<path>.json`` alongside.

    Values are written with 17 significant digits so a reload is bit-exact.
    """
    path = Path(path)
    header = ["y"] + [f"x_{k + 1}" for k in range(data.n_features)]
    table = np.column_stack([data.y, data.x])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in table:
            w.writerow([repr(float(v)) for v in row])
    meta = manifest(
        n_samples=data.n_samples,
        n_features=data.n_features,
        true_beta=None if data.true_beta is None else [float(b) for b in data.true_beta],
        true_irrelevant=None if data.true_irrelevant is None else sorted(data.true_irrelevant),
        **extra,
    )
    _manifest_path(path).write_text(json.dumps(meta, indent=2))


def load_dataset(path) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    table = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
    true_beta = true_irrelevant = None
    mpath = _manifest_path(path)
    if mpath.exists():
        meta = json.loads(mpath.read_text())
        true_beta = meta.get("true_beta")
        ti = meta.get("true_irrelevant")
        true_irrelevant = None if ti is None else frozenset(ti)
    return Dataset(x=table[:, 1:], y=table[:, 0], true_beta=true_beta, true_irrelevant=true_irrelevant)


def write_csv(rows: Sequence[dict], path) -> None:
    rows = list(rows)
    fields = []
    for r in rows:
        for key in r:
            if key not in fields:
                fields.append(key)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})


# -- comparison --------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    """One batch of seeded trials.

    ``known_noise`` hands the true noise precision to Lasso and ARD; without
    it they use the unbiased LS residual variance.  ``alpha_grid=None``
    selects the default log grid.
    """

    kind: str = TOY_K2
    k: int = 2
    trials: int = 500
    seed: int = 0
    solver: SolverConfig = SolverConfig()
    folds: int = 2
    alpha_grid: Optional[tuple] = None
    noise_variance: float = 0.005
    sample_multiplier: int = 20
    pairs: int = 20
    known_noise: bool = True
    methods: tuple = METHODS

    def __post_init__(self):
        if self.kind not in (TOY_K2, UNIFORM_K):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.kind == TOY_K2 and self.k != 2:
            raise ValueError("the toy design has exactly two features")
        if self.kind == UNIFORM_K and self.k < 2:
            raise ValueError("uniform design needs k >= 2")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")

    @classmethod
    def toy(cls, **kw) -> "ExperimentSpec":
        kw.setdefault("solver", SolverConfig(variant=EM))
        return cls(kind=TOY_K2, k=2, **kw)

    @classmethod
    def uniform(cls, k: int, **kw) -> "ExperimentSpec":
        kw.setdefault("solver", SolverConfig(variant=HYBRID, switch_iteration=500, delta=1e-3))
        kw.setdefault("folds", 10)
        kw.setdefault("noise_variance", 0.2)
        kw.setdefault("known_noise", False)
        kw.setdefault("trials", 100)
        return cls(kind=UNIFORM_K, k=k, **kw)

    def generate(self, index: int) -> Dataset:
        s = trial_seed(self.seed, index)
        if self.kind == TOY_K2:
            return gen_toy(s, self.pairs, self.noise_variance)
        return gen_uniform(s, self.k, self.sample_multiplier, self.noise_variance)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["alpha_grid"] = None if self.alpha_grid is None else list(self.alpha_grid)
        d["methods"] = list(self.methods)
        d["solver"] = {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in d["solver"].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        solver = dict(d.pop("solver", {}) or {})
        if "pi_step_cap" in solver and solver["pi_step_cap"] is None:
            solver["pi_step_cap"] = math.inf
        if d.get("alpha_grid") is not None:
            d["alpha_grid"] = tuple(d["alpha_grid"])
        if "methods" in d:
            d["methods"] = tuple(d["methods"])
        kind = d.get("kind", TOY_K2)
        base = cls.toy() if kind == TOY_K2 else cls.uniform(int(d.get("k", 2)))
        merged = dataclasses.asdict(base)
        merged.pop("solver")
        merged.update(d)
        merged["alpha_grid"] = None if merged.get("alpha_grid") is None else tuple(merged["alpha_grid"])
        merged["methods"] = tuple(merged["methods"])
        solver_cfg = dataclasses.replace(base.solver, **solver)
        return cls(solver=solver_cfg, **merged)


def _method_row(method: str, zero_mask, beta_hat, data: Dataset, status="ok", error=None, **extra) -> dict:
    score = score_selection(zero_mask, data.truth_zero_mask())
    row = {
        "method": method,
        "status": status,
        "error": error,
        "m1": score.m1,
        "m2": score.m2,
        "m3": score.m3,
        "precision": score.precision,
        "recall": score.recall,
        "f1": score.f1,
        "pruned": " ".join(str(i) for i in np.flatnonzero(zero_mask)),
        "beta_hat": json.dumps([float(b) for b in beta_hat]),
    }
    row.update(extra)
    return row


def run_trial(spec: ExperimentSpec, index: int) -> list:
    """Fit every requested method on trial ``index``; one row per method."""
    data = spec.generate(index)
    seed = trial_seed(spec.seed, index)
    rows = []
    lam = None
    for method in spec.methods:
        base = {"trial": index, "seed": seed}
        try:
            if method == "BM":
                res = fit(data, spec.solver)
                if not res.ok:
                    raise BayesMaskError(res.error)
                row = _method_row(
                    method, res.pruned, res.beta, data, status=res.status, iterations=res.n_iterations
                )
            else:
                if lam is None:
                    lam = 1.0 / spec.noise_variance if spec.known_noise else unbiased_noise_precision(data)
                if method == "LASSO":
                    est = lasso_cv(data, lam, spec.folds, spec.alpha_grid, seed=seed)
                    row = _method_row(method, est.pruned, est.beta_hat, data, alpha=est.alpha)
                else:
                    est = ard_fit(data, lam)
                    row = _method_row(method, est.pruned, est.beta_hat, data)
        except (BayesMaskError, ValueError, np.linalg.LinAlgError) as exc:
            row = {"method": method, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        rows.append({**base, **row})
    return rows


def summarize(rows: Sequence[dict], methods: Sequence[str] = METHODS) -> list:
    """Per-method aggregates: mean and standard error of precision, recall
    and F1, pruning rates with 95% binomial intervals, and the mean of the
    relevant weights over trials where every irrelevant feature was pruned.
    """
    out = []
    for method in methods:
        mine = [r for r in rows if r["method"] == method]
        ok = [r for r in mine if r["status"] != "failed"]
        summary = {"method": method, "trials": len(mine), "failed": len(mine) - len(ok)}
        for key in ("precision", "recall", "f1"):
            m, se = mean_se(r[key] for r in ok)
            summary[f"{key}_mean"] = m
            summary[f"{key}_se"] = se
        hits = sum(r["m3"] for r in ok)
        total = sum(r["m1"] for r in ok)
        summary["irrelevant_pruned"] = hits
        summary["irrelevant_total"] = total
        if total:
            lo, hi = binomial_ci(hits, total)
            summary.update(prune_rate=hits / total, prune_rate_lo=lo, prune_rate_hi=hi)
        else:
            summary.update(prune_rate=None, prune_rate_lo=None, prune_rate_hi=None)
        summary["relevant_pruned"] = sum(r["m2"] - r["m3"] for r in ok)
        relevant = []
        for r in ok:
            if r["m3"] == r["m1"]:
                beta = json.loads(r["beta_hat"])
                pruned = {int(i) for i in r["pruned"].split()} if r["pruned"] else set()
                relevant.extend(b for i, b in enumerate(beta) if i not in pruned)
        m, se = mean_se(relevant)
        summary["relevant_beta_mean_given_pruned"] = m
        summary["relevant_beta_se_given_pruned"] = se
        out.append(summary)
    return out


@dataclass
class ComparisonResult:
    spec: ExperimentSpec
    rows: list
    summary: list

    def by_method(self, method: str) -> dict:
        return next(s for s in self.summary if s["method"] == method)


def run_comparison(spec: ExperimentSpec, n_jobs: int = 1, progress=None) -> ComparisonResult:
    """Run ``spec.trials`` seeded trials; a failing fit is recorded, not raised.

    With ``n_jobs > 1`` trials run in worker processes; rows are merged in
    trial order so the output does not depend on scheduling.
    """
    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            per_trial = list(pool.map(run_trial, [spec] * spec.trials, range(spec.trials)))
    else:
        per_trial = []
        for i in range(spec.trials):
            per_trial.append(run_trial(spec, i))
            if progress is not None:
                progress(i + 1, spec.trials)
    rows = [r for trial_rows in per_trial for r in trial_rows]
    return ComparisonResult(spec=spec, rows=rows, summary=summarize(rows, spec.methods))


def write_comparison(result: ComparisonResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(result.rows, out / "trials.csv")
    write_csv(result.summary, out / "summary.csv")
    (out / "manifest.json").write_text(json.dumps(manifest(spec=result.spec.to_dict()), indent=2))


# -- learning trajectories ---------------------------------------------------

EG_NO_REPARAM = "EG_NO_REPARAM"


@dataclass
class TrajectoryRecord:
    """``(beta_1, pi_1)`` after every iteration until feature 1 is pruned.

    ``pruned_at`` is the iteration at which feature 1 left the model, or
    None if it survived the whole budget.
    """

    algorithm: str
    initial_point: tuple
    iterations: np.ndarray
    beta1: np.ndarray
    pi1: np.ndarray
    pruned_at: Optional[int]
    status: str = "ok"

    def rows(self) -> list:
        return [
            {"algorithm": self.algorithm, "beta1_init": self.initial_point[0], "pi1_init": self.initial_point[1],
             "iteration": int(t), "beta1": float(b), "pi1": float(p)}
            for t, b, p in zip(self.iterations, self.beta1, self.pi1)
        ]


def default_initial_points() -> list:
    """Ten points on a diagonal towards the upper right of the (beta_1, pi_1) plane."""
    return [(round(0.1 * i, 10), round(0.09 * i + 0.05, 10)) for i in range(1, 11)]


def trajectory_configs(budget: int, eta_reparam: float = 2e-6, eta_plain: float = 2e-4) -> dict:
    common = dict(tolerance=0.0, max_iterations=budget, pi_step_cap=math.inf)
    return {
        EM: SolverConfig(variant=EM, **common),
        EG: SolverConfig(variant=EG, eta=eta_reparam, **common),
        EG_NO_REPARAM: SolverConfig(variant=EG, eta=eta_plain, reparametrize=False, **common),
    }


def run_trajectories(
    seed: int,
    n_samples: int = 100,
    initial_points=None,
    budget: int = 50_000,
    eta_reparam: float = 2e-6,
    eta_plain: float = 2e-4,
    algorithms: Sequence[str] = (EM, EG, EG_NO_REPARAM),
) -> list:
    """Learning paths of the irrelevant toy feature from several starting points.

    The relevant feature starts at its true values ``beta_2 = 1, pi_2 = 1``;
    masks start at ``mu = pi``.  Each run stops as soon as feature 1 is
    pruned or after ``budget`` iterations.
    """
    data = gen_toy(seed, pairs=n_samples // 2)
    points = default_initial_points() if initial_points is None else [tuple(p) for p in initial_points]
    configs = trajectory_configs(budget, eta_reparam, eta_plain)
    records = []
    for b1, p1 in points:
        if not (b1 > 0.0 and 0.0 < p1 < 1.0):
            raise ValueError(f"initial point {(b1, p1)} outside beta > 0, 0 < pi < 1")
        init = initial_state_from(data, beta=[b1, TOY_BETA[1]], pi=[p1, 1.0])
        for algo in algorithms:
            res = fit(data, configs[algo], init_state=init, callback=lambda rec: 0 not in rec.active)
            hist = [h for h in res.history if 0 in h.active]
            records.append(
                TrajectoryRecord(
                    algorithm=algo,
                    initial_point=(b1, p1),
                    iterations=np.array([h.iteration for h in hist]),
                    beta1=np.array([h.beta[h.active.index(0)] for h in hist]),
                    pi1=np.array([h.pi[h.active.index(0)] for h in hist]),
                    pruned_at=res.pruned_at.get(0),
                    status=res.status if res.ok else f"failed: {res.error}",
                )
            )
    return records


# -- convergence race ----------------------------------------------------------

@dataclass
class RaceSeries:
    algorithm: str
    iterations: np.ndarray
    elapsed: np.ndarray
    correct: np.ndarray
    wrong: np.ndarray
    status: str

    @property
    def final_wrong(self) -> int:
        return int(self.wrong[-1])

    @property
    def final_correct(self) -> int:
        return int(self.correct[-1])

    def first_reaching(self, count: int, by: str = "iterations"):
        """Iteration (or elapsed time) at which ``count`` correct prunes were reached."""
        hit = np.flatnonzero(self.correct >= count)
        if hit.size == 0:
            return None
        series = self.iterations if by == "iterations" else self.elapsed
        return series[hit[0]].item()

    def rows(self) -> list:
        return [
            {"algorithm": self.algorithm, "iteration": int(t), "elapsed": float(e),
             "correct_pruned": int(c), "wrong_pruned": int(w)}
            for t, e, c, w in zip(self.iterations, self.elapsed, self.correct, self.wrong)
        ]


def race_configs(switch: int, delta: float = 1e-3, max_iterations: int = 100_000) -> dict:
    return {
        HYBRID: SolverConfig(variant=HYBRID, switch_iteration=switch, delta=delta, max_iterations=max_iterations),
        EM: SolverConfig(variant=EM, delta=delta, max_iterations=max_iterations),
    }


def _race_series(name: str, res, truth: np.ndarray) -> RaceSeries:
    k = len(truth)
    its, el, cor, wr = [], [], [], []
    for h in res.history:
        pruned = np.ones(k, dtype=bool)
        pruned[list(h.active)] = False
        its.append(h.iteration)
        el.append(h.elapsed)
        cor.append(int((pruned & truth).sum()))
        wr.append(int((pruned & ~truth).sum()))
    return RaceSeries(name, np.array(its), np.array(el), np.array(cor), np.array(wr),
                      res.status if res.ok else f"failed: {res.error}")


def run_convergence_race(
    seed: int,
    k: int = 50,
    switch: int = 200,
    multiplier: int = 20,
    delta: float = 1e-3,
    max_iterations: int = 100_000,
) -> dict:
    """Hybrid and plain FAB-EM on the same uniform dataset.

    Returns ``{"HYBRID": RaceSeries, "EM": RaceSeries}`` with the number of
    correctly and wrongly pruned features after every iteration.
    """
    data = gen_uniform(seed, k, multiplier)
    truth = data.truth_zero_mask()
    out = {}
    for name, cfg in race_configs(switch, delta, max_iterations).items():
        out[name] = _race_series(name, fit(data, cfg), truth)
    return out
