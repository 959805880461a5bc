"""Bayesian masking model: data containers and the FIC lower bound.

The model inserts a binary mask ``Z`` between the design matrix and the
weights, ``y = (X * Z) @ beta + eps`` with ``z_nk ~ Bern(pi_k)``.  Inference
works with a mean-field posterior ``q(z_nk) = Bern(mu_nk)``; the latent
matrix itself is never sampled, only its first and second moments enter.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateNoiseError, ModelDomainError

LOG_2PI = float(np.log(2.0 * np.pi))


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``x`` (N x K) and targets ``y`` with optional ground truth."""

    x: np.ndarray
    y: np.ndarray
    true_beta: Optional[np.ndarray] = None
    true_irrelevant: Optional[frozenset] = None

    def __post_init__(self):
        x = _frozen(self.x)
        y = _frozen(self.y)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"x must be a non-empty 2-d array, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError(f"y must have shape ({x.shape[0]},), got {y.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("x and y must not contain NaN or Inf")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        tb = self.true_beta
        if tb is not None:
            tb = _frozen(tb)
            if tb.shape != (x.shape[1],):
                raise ValueError("true_beta length must equal the number of features")
            object.__setattr__(self, "true_beta", tb)
        ti = self.true_irrelevant
        if ti is None and tb is not None:
            ti = frozenset(int(k) for k in np.flatnonzero(tb == 0.0))
        elif ti is not None:
            ti = frozenset(int(k) for k in ti)
        object.__setattr__(self, "true_irrelevant", ti)

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def truth_zero_mask(self) -> np.ndarray:
        """Boolean mask of truly irrelevant features (requires ground truth)."""
        if self.true_irrelevant is None:
            raise ValueError("dataset carries no ground truth")
        mask = np.zeros(self.n_features, dtype=bool)
        mask[list(self.true_irrelevant)] = True
        return mask


@dataclass(frozen=True)
class BMState:
    """Parameters of the masked regression over the currently active features.

    ``lam`` is the noise precision; ``mu`` holds the variational Bernoulli
    means, one column per active feature; ``active`` maps columns back to
    the original feature indices.
    """

    beta: np.ndarray
    lam: float
    pi: np.ndarray
    mu: np.ndarray
    active: tuple

    def __post_init__(self):
        beta = _frozen(self.beta)
        pi = _frozen(self.pi)
        mu = _frozen(self.mu)
        active = tuple(int(k) for k in self.active)
        k = len(active)
        if beta.shape != (k,) or pi.shape != (k,) or mu.ndim != 2 or mu.shape[1] != k:
            raise ValueError(
                f"inconsistent shapes: beta {beta.shape}, pi {pi.shape}, "
                f"mu {mu.shape}, {k} active features"
            )
        lam = float(self.lam)
        if not lam > 0.0:
            raise ModelDomainError(f"noise precision must be positive, got {lam}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "lam", lam)

    @property
    def n_active(self) -> int:
        return len(self.active)

    def replace(self, **changes) -> "BMState":
        kw = dict(beta=self.beta, lam=self.lam, pi=self.pi, mu=self.mu, active=self.active)
        kw.update(changes)
        return BMState(**kw)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    elapsed: float
    n_active: int
    active: tuple
    pi: np.ndarray
    beta: np.ndarray


@dataclass
class FitResult:
    """Outcome of a BM fit.

    ``status`` is one of ``"converged"``, ``"max_iterations"``,
    ``"empty_model"``, ``"stopped"`` (by the callback) or ``"failed"``; a
    failed fit keeps the history up to the failing iteration and the error
    message in ``error``.
    """

    state: BMState
    history: list
    pruned_at: dict
    n_features: int
    status: str = "converged"
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status != "failed"

    @property
    def beta(self) -> np.ndarray:
        """Weights over the original features; pruned ones are exact zeros."""
        out = np.zeros(self.n_features)
        out[list(self.state.active)] = self.state.beta
        return out

    @property
    def pi(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        out[list(self.state.active)] = self.state.pi
        return out

    @property
    def pruned(self) -> np.ndarray:
        mask = np.ones(self.n_features, dtype=bool)
        mask[list(self.state.active)] = False
        return mask

    @property
    def n_iterations(self) -> int:
        return self.history[-1].iteration


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def bernoulli_second_moment(mu_row) -> np.ndarray:
    """``E[z z^T]`` for independent Bernoulli entries with means ``mu_row``.

    Off-diagonal entries are ``mu_k mu_l``; the diagonal is ``mu_k`` because
    ``z^2 = z`` for binary ``z``.
    """
    mu = np.asarray(mu_row, dtype=float)
    out = np.outer(mu, mu)
    np.fill_diagonal(out, mu)
    return out


def active_design(state: BMState, data: Dataset) -> np.ndarray:
    if state.active == tuple(range(data.n_features)):
        return data.x
    return data.x[:, list(state.active)]


def masked_gram(x: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """``Omega = sum_n (x_n x_n^T) * E[z_n z_n^T]``."""
    x, mu = _c(x), _c(mu)
    xt = x * mu
    omega = xt.T @ xt
    omega.flat[:: omega.shape[0] + 1] += _kernels.mask_variance_diag(x, mu)
    return omega


def expected_sse(x: np.ndarray, y: np.ndarray, mu: np.ndarray, beta: np.ndarray) -> float:
    """``sum_n E_q[(y_n - (x_n * z_n)^T beta)^2]``.

    Written as residual of the mean mask plus the mask variance, which is
    non-negative term by term (unlike the expanded quadratic).
    """
    return float(_kernels.expected_sse(_c(x), _c(y), _c(mu), _c(beta)))


class FicTerms(NamedTuple):
    """The five additive pieces of the FIC lower bound."""

    loglik: float
    log_prior: float
    penalty: float
    dimension: float
    entropy: float

    @property
    def total(self) -> float:
        return self.loglik + self.log_prior + self.penalty + self.dimension + self.entropy


def _check_pi_positive(pi: np.ndarray) -> None:
    if np.any(~(pi > 0.0)):
        raise ModelDomainError("masking priors must be strictly positive")


def fic_terms(state: BMState, data: Dataset) -> FicTerms:
    x = active_design(state, data)
    y = data.y
    mu, pi, lam = state.mu, state.pi, state.lam
    n = data.n_samples
    _check_pi_positive(pi)

    sse = expected_sse(x, y, mu, state.beta)
    loglik = 0.5 * n * (np.log(lam) - LOG_2PI) - 0.5 * lam * sse
    log_prior, entropy = _kernels.bernoulli_sums(np.ascontiguousarray(mu), np.ascontiguousarray(pi))
    m = mu.mean(axis=0)
    penalty = -0.5 * float(np.sum(np.log(n * pi) + (m - pi) / pi))
    dimension = -0.5 * (state.n_active + 1) * np.log(n)
    return FicTerms(float(loglik), float(log_prior), penalty, float(dimension), float(entropy))


def fic_lower_bound(state: BMState, data: Dataset) -> float:
    """Lower bound of the factorized information criterion for ``state``.

    Constants from the priors on ``beta`` and ``lam`` are dropped.
    """
    return fic_terms(state, data).total


def grad_beta_pi(state: BMState, data: Dataset):
    """Analytic partial derivatives of the lower bound in ``beta`` and ``pi``.

    Returns ``(d_beta, d_pi)``.  The ``pi`` derivative is undefined where
    ``pi_k = 1`` unless every ``mu_nk = 1``; those entries come back as NaN.
    """
    x = active_design(state, data)
    mu, pi, lam = state.mu, state.pi, state.lam
    n = data.n_samples
    _check_pi_positive(pi)

    xt = x * mu
    omega_beta = xt.T @ (xt @ state.beta) + _kernels.mask_variance_diag(_c(x), _c(mu)) * state.beta
    d_beta = lam * (xt.T @ data.y - omega_beta)

    m = mu.mean(axis=0)
    d_pi = np.full_like(pi, np.nan)
    inner = pi < 1.0
    p, mm = pi[inner], m[inner]
    d_pi[inner] = n * mm / p - n * (1.0 - mm) / (1.0 - p) - 0.5 / p + 0.5 * mm / (p * p)
    edge = ~inner & (m >= 1.0)
    # pi = 1 with every mask on: the (1 - mu) log(1 - pi) term vanishes identically.
    d_pi[edge] = n - 0.5 + 0.5 * m[edge]
    return d_beta, d_pi


def closed_form_noise_variance(x, y, mu, beta, floor: float = 0.0) -> float:
    """Closed-form ``1/lambda`` given ``mu`` and ``beta``."""
    var = expected_sse(x, y, mu, beta) / len(y)
    if not np.isfinite(var):
        raise DegenerateNoiseError(f"noise variance is not finite ({var})")
    if var <= floor:
        if floor <= 0.0:
            raise DegenerateNoiseError("noise variance collapsed to zero")
        var = floor
    return var


def initial_state_from(
    data: Dataset,
    beta: Sequence[float],
    pi: Sequence[float],
    mu=None,
    lam: Optional[float] = None,
    active=None,
) -> BMState:
    """Build a state by hand; ``mu`` defaults to ``pi`` broadcast over rows and
    ``lam`` to the closed-form noise precision."""
    pi = np.asarray(pi, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if active is None:
        active = tuple(range(data.n_features))
    if mu is None:
        mu = np.broadcast_to(pi, (data.n_samples, len(pi)))
    if lam is None:
        x = data.x[:, list(active)]
        lam = 1.0 / closed_form_noise_variance(x, data.y, np.asarray(mu), beta)
    return BMState(beta=beta, lam=lam, pi=pi, mu=mu, active=active)
