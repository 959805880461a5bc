"""Comparison estimators: least squares, Lasso and ARD.

All three use the same likelihood scaling as the masked model: squared
error weighted by half the noise precision ``lam``.  Lasso minimizes
``lam/2 ||y - X b||^2 + alpha ||b||_1``; ARD maximizes the type-II
likelihood of ``b ~ N(0, diag(gamma))`` and reports the posterior mean.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from ._linalg import solve_spd
from .errors import ConvergenceError, SingularSystemError
from .model import Dataset

LS, LASSO, ARD = "LS", "LASSO", "ARD"
# |beta| (Lasso) or gamma (ARD) below this counts as pruned
ZERO_TOL = 1e-10
_POLISH_EVERY = 20


@dataclass
class BaselineEstimate:
    beta_hat: np.ndarray
    method: str
    lam: float
    alpha: Optional[float] = None
    gamma_hat: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in (LS, LASSO, ARD):
            raise ValueError(f"unknown method {self.method!r}")
        if (self.alpha is not None) != (self.method == LASSO):
            raise ValueError("alpha is reported for Lasso estimates only")
        if (self.gamma_hat is not None) != (self.method == ARD):
            raise ValueError("gamma_hat is reported for ARD estimates only")

    @property
    def pruned(self) -> np.ndarray:
        if self.method == ARD:
            return self.gamma_hat < ZERO_TOL
        if self.method == LASSO:
            return np.abs(self.beta_hat) < ZERO_TOL
        return np.zeros(len(self.beta_hat), dtype=bool)


def _ls_solution(x, y):
    try:
        return solve_spd(x.T @ x, x.T @ y, rcond=1e-13)
    except SingularSystemError as exc:
        raise SingularSystemError("X^T X is rank deficient") from exc


def unbiased_noise_precision(data: Dataset) -> float:
    """Inverse of the unbiased residual variance ``RSS / (N - K)`` of the LS fit."""
    n, k = data.x.shape
    if n <= k:
        raise ValueError("need more samples than features for the unbiased variance")
    beta = _ls_solution(data.x, data.y)
    r = data.y - data.x @ beta
    return (n - k) / float(r @ r)


def least_squares(data: Dataset) -> BaselineEstimate:
    beta = _ls_solution(data.x, data.y)
    n, k = data.x.shape
    r = data.y - data.x @ beta
    rss = float(r @ r)
    dof = n - k if n > k else n
    lam = dof / rss if rss > 0.0 else np.inf
    return BaselineEstimate(beta_hat=beta, method=LS, lam=lam)


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def lasso_1d(x, y, lam: float, alpha: float) -> float:
    """One-feature Lasso: soft-threshold the LS estimate by ``alpha / (lam x'x)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xx = float(x @ x)
    if not xx > 0.0:
        raise ValueError("x must not be identically zero")
    b_ls = float(x @ y) / xx
    return float(soft_threshold(b_ls, alpha / (lam * xx)))


def lasso_cd(
    data: Dataset,
    lam: float,
    alpha: float,
    tol: float = 1e-12,
    max_sweeps: int = 100_000,
    beta0=None,
) -> BaselineEstimate:
    """Cyclic coordinate descent until the largest coordinate change is below ``tol``."""
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")
    x, y = data.x, data.y
    beta, sweeps = _lasso_cd_raw(x.T @ x, x.T @ y, lam, alpha, tol, max_sweeps, beta0)
    return BaselineEstimate(beta_hat=beta, method=LASSO, lam=lam, alpha=alpha, info={"sweeps": sweeps})


def _lasso_cd_raw(gram, xty, lam, alpha, tol, max_sweeps, beta0=None):
    """Coordinate descent, then an exact solve on the support it found.

    On correlated designs plain coordinate descent needs thousands of sweeps
    to settle; once the support and signs are right the optimum solves
    ``G_AA b_A = X_A'y - alpha/lam * sign``.  If that candidate violates the
    optimality conditions, descent resumes from it at the requested ``tol``.
    """
    k = gram.shape[0]
    gram = np.ascontiguousarray(gram, dtype=float)
    xty = np.ascontiguousarray(xty, dtype=float)
    beta = np.zeros(k) if beta0 is None else np.array(beta0, dtype=float)
    done = 0
    while done < max_sweeps:
        chunk = min(_POLISH_EVERY, max_sweeps - done)
        used = _kernels.lasso_cd_gram(gram, xty, float(lam), float(alpha), beta, float(tol), chunk)
        done += chunk if used < 0 else used
        exact = _lasso_support_solve(gram, xty, lam, alpha, beta)
        if exact is not None:
            return exact, done
        if used >= 0:
            return beta, done
    raise ConvergenceError(f"Lasso coordinate descent did not converge in {max_sweeps} sweeps")


def _lasso_support_solve(gram, xty, lam, alpha, beta):
    idx = np.flatnonzero(beta)
    out = np.zeros_like(beta)
    if idx.size:
        sign = np.sign(beta[idx])
        try:
            b = solve_spd(gram[np.ix_(idx, idx)], xty[idx] - alpha / lam * sign)
        except SingularSystemError:
            return None
        if np.any(np.sign(b) != sign):
            return None
        out[idx] = b
    corr = lam * (xty - gram @ out)
    inactive = np.ones(len(beta), dtype=bool)
    inactive[idx] = False
    if np.any(np.abs(corr[inactive]) > alpha * (1.0 + 1e-9)):
        return None
    return out


def lasso_objective(data: Dataset, beta, lam: float, alpha: float) -> float:
    r = data.y - data.x @ beta
    return 0.5 * lam * float(r @ r) + alpha * float(np.sum(np.abs(beta)))


def default_alpha_grid(n_samples: int, size: int = 30) -> np.ndarray:
    return np.logspace(-4, 2, size) * n_samples


def cv_folds(n_samples: int, folds: int, seed: int) -> list:
    """Seeded random partition of ``range(n_samples)`` into ``folds`` parts."""
    perm = np.random.default_rng(seed).permutation(n_samples)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def lasso_cv(
    data: Dataset,
    lam: float,
    folds: int = 10,
    alpha_grid=None,
    seed: int = 0,
    tol: float = 1e-10,
) -> BaselineEstimate:
    """Pick ``alpha`` by K-fold held-out squared error, then refit on all data.

    Ties go to the earliest grid entry.  Fits along the grid are
    warm-started from the previous grid point.
    """
    n = data.n_samples
    if folds < 2 or n < folds:
        raise ValueError("need folds >= 2 and at least one sample per fold")
    grid = default_alpha_grid(n) if alpha_grid is None else np.asarray(alpha_grid, dtype=float)
    parts = cv_folds(n, folds, seed)
    errors = np.zeros(len(grid))
    for test in parts:
        train = np.setdiff1d(np.arange(n), test, assume_unique=True)
        xtr, ytr = data.x[train], data.y[train]
        gram, xty = xtr.T @ xtr, xtr.T @ ytr
        beta = None
        for i, alpha in enumerate(grid):
            beta, _ = _lasso_cd_raw(gram, xty, lam, alpha, tol, 100_000, beta)
            r = data.y[test] - data.x[test] @ beta
            errors[i] += float(r @ r)
    errors /= n
    best = int(np.argmin(errors))
    est = lasso_cd(data, lam, float(grid[best]), tol=tol)
    est.info.update(cv_errors=errors, alpha_grid=grid)
    return est


def ard_1d(x, y, lam: float):
    """Closed-form one-feature ARD: returns ``(beta_hat, gamma_hat)``.

    ``gamma_hat = max(0, b_ls^2 - 1/(lam x'x))`` and the posterior mean is
    the LS estimate soft-thresholded by ``1/(lam |x'y|)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xx = float(x @ x)
    if not xx > 0.0 or not lam > 0.0:
        raise ValueError("need x'x > 0 and lam > 0")
    xy = float(x @ y)
    b_ls = xy / xx
    gamma = max(0.0, b_ls * b_ls - 1.0 / (lam * xx))
    if gamma == 0.0:
        return 0.0, 0.0
    return float(np.sign(b_ls) * max(0.0, abs(b_ls) - 1.0 / (lam * abs(xy)))), gamma


def ard_neg_log_evidence(x, y, lam: float, gamma) -> float:
    """``log|C| + y' C^-1 y`` with ``C = I/lam + X diag(gamma) X'`` (constants dropped)."""
    x = np.atleast_2d(np.asarray(x, dtype=float).T).T
    c = np.eye(len(y)) / lam + (x * np.asarray(gamma, dtype=float)) @ x.T
    sign, logdet = np.linalg.slogdet(c)
    return float(logdet + y @ np.linalg.solve(c, y))


def _posterior(gram, xty, lam, gamma, idx):
    """Posterior covariance and mean of the weights restricted to ``idx``."""
    a = lam * gram[np.ix_(idx, idx)]
    a[np.diag_indices_from(a)] += 1.0 / gamma[idx]
    cov = np.linalg.inv(a)
    return cov, lam * cov @ xty[idx]


def ard_fit(
    data: Dataset,
    lam: float,
    tol: float = 1e-8,
    max_sweeps: int = 10_000,
    update: str = "coordinate",
) -> BaselineEstimate:
    """Type-II maximum likelihood over diagonal prior variances.

    ``update="coordinate"`` maximizes the evidence exactly in one ``gamma_k``
    at a time (the multi-feature version of the one-dimensional closed
    form), which reaches exact zeros.  ``update="em"`` uses the classic
    ``gamma_k <- E[b_k^2 | y]`` fixed point, which only approaches zero
    asymptotically.  Starts from ``gamma = 1`` and stops when
    ``max |d gamma| <= tol * max(1, max gamma)``.
    """
    if not lam > 0.0:
        raise ValueError("lam must be positive")
    if update not in ("coordinate", "em"):
        raise ValueError(f"unknown update {update!r}")
    x, y = data.x, data.y
    k = data.n_features
    gram, xty = x.T @ x, x.T @ y
    gamma = np.ones(k)
    step = _ard_coordinate_sweep if update == "coordinate" else _ard_em_step
    for sweep in range(1, max_sweeps + 1):
        old = gamma.copy()
        gamma = step(gram, xty, lam, gamma)
        if np.max(np.abs(gamma - old)) <= tol * max(1.0, float(gamma.max(initial=0.0))):
            break
    else:
        raise ConvergenceError(f"ARD did not converge in {max_sweeps} sweeps")
    gamma = np.where(gamma < ZERO_TOL, 0.0, gamma)
    beta = np.zeros(k)
    idx = np.flatnonzero(gamma > 0.0)
    if idx.size:
        _, mean = _posterior(gram, xty, lam, gamma, idx)
        beta[idx] = mean
    return BaselineEstimate(beta_hat=beta, method=ARD, lam=lam, gamma_hat=gamma, info={"sweeps": sweep})


def _ard_coordinate_sweep(gram, xty, lam, gamma):
    gamma = gamma.copy()
    for k in range(len(gamma)):
        others = np.flatnonzero(gamma > 0.0)
        others = others[others != k]
        s = lam * gram[k, k]
        q = lam * xty[k]
        if others.size:
            cov, _ = _posterior(gram, xty, lam, gamma, others)
            gk = gram[others, k]
            s -= lam * lam * gk @ cov @ gk
            q -= lam * lam * gk @ cov @ xty[others]
        gamma[k] = max(0.0, (q * q - s) / (s * s))
    return gamma


def _ard_em_step(gram, xty, lam, gamma):
    new = np.zeros_like(gamma)
    idx = np.flatnonzero(gamma > 0.0)
    if idx.size:
        cov, mean = _posterior(gram, xty, lam, gamma, idx)
        new[idx] = mean * mean + np.diag(cov)
    return new
