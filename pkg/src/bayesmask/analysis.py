"""Estimator bias of the masked model and feature-selection scoring."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from ._linalg import solve_spd
from .model import masked_gram


@dataclass(frozen=True)
class SelectionScore:
    """Counts over irrelevant-feature identification.

    ``m1`` truly irrelevant, ``m2`` estimated irrelevant (pruned), ``m3``
    correctly pruned.  Ratios with a zero denominator are ``None``.
    """

    m1: int
    m2: int
    m3: int
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]


def score_selection(estimate_zero_mask, truth_zero_mask) -> SelectionScore:
    est = np.asarray(estimate_zero_mask, dtype=bool)
    truth = np.asarray(truth_zero_mask, dtype=bool)
    if est.shape != truth.shape:
        raise ValueError(f"mask lengths differ: {est.shape} vs {truth.shape}")
    m1 = int(truth.sum())
    m2 = int(est.sum())
    m3 = int((est & truth).sum())
    precision = m3 / m2 if m2 > 0 else None
    recall = m3 / m1 if m1 > 0 else None
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0.0:
        f1 = 2.0 * precision * recall / (precision + recall)
    return SelectionScore(m1, m2, m3, precision, recall, f1)


def fab_bias(beta_star, x, mu):
    """Noise-averaged masked estimator for fixed mask posteriors.

    For ``y = X beta_star + eps`` and fixed ``mu``, the closed-form weight
    update averages to ``Omega^-1 (X * M)^T X beta_star``.  Returns that
    expectation and, computed separately from the cross terms
    ``b_k = (x_k * mu_k)^T sum_{l != k} beta*_l (x_l * (1 - mu_l))``, the bias
    ``Omega^-1 b``.  Columns of ``x`` and ``mu`` are paired feature by
    feature.
    """
    beta_star = np.asarray(beta_star, dtype=float)
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    omega = masked_gram(x, mu)
    xt = x * mu
    expected = solve_spd(omega, xt.T @ (x @ beta_star))

    off = x * (1.0 - mu) * beta_star  # column l: beta*_l (x_l * (1 - mu_l))
    total = off.sum(axis=1)
    b = np.array([xt[:, k] @ (total - off[:, k]) for k in range(x.shape[1])])
    return expected, solve_spd(omega, b)


def fab_1d_estimator(x, y, mu) -> float:
    """``(x * mu)^T y / (x * mu)^T x`` for a single feature."""
    x = np.asarray(x, dtype=float)
    xt = x * np.asarray(mu, dtype=float)
    denom = float(xt @ x)
    if denom == 0.0:
        raise ValueError("feature is fully masked: (x * mu)^T x = 0")
    return float(xt @ np.asarray(y, dtype=float)) / denom


def binomial_ci(successes: int, trials: int, level: float = 0.95):
    """Exact (Clopper-Pearson) interval for a binomial proportion."""
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


def mean_se(values):
    """Mean and standard error of the non-missing values; ``(None, None)`` if empty."""
    v = np.array([float(a) for a in values if a is not None], dtype=float)
    if v.size == 0:
        return None, None
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se
