"""FAB inference for the Bayesian masking model.

Three drivers share one loop: FAB-EM (closed-form M-step every iteration),
FAB-EG (reparametrized gradient step instead of the M-step) and the hybrid
that runs M-steps for the first ``switch_iteration`` iterations and G-steps
afterwards.  Every iteration is E-step, pruning, then parameter update.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from . import _kernels
from ._linalg import solve_spd
from .errors import (
    BayesMaskError,
    EmptyModelError,
    ModelDomainError,
)
from .model import (
    BMState,
    Dataset,
    FitResult,
    IterationRecord,
    active_design,
    closed_form_noise_variance,
    fic_lower_bound,
    grad_beta_pi,
    masked_gram,
)

EM, EG, HYBRID = "EM", "EG", "HYBRID"
VARIANTS = (EM, EG, HYBRID)
MACHINE_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`fit`.

    ``eta=None`` means the default learning coefficient ``2e-2 / N``.
    ``pi_step_cap=math.inf`` disables learning-coefficient control.
    ``reparametrize=False`` turns the G-step into plain gradient ascent on
    ``(beta, pi)``.
    """

    variant: str = EM
    delta: float = MACHINE_EPS
    switch_iteration: int = 0
    eta: Optional[float] = None
    pi_step_cap: float = 0.05
    max_iterations: int = 10_000
    tolerance: float = 1e-8
    e_step_sweeps: int = 3
    seed: int = 0
    init: str = "ridge"
    reparametrize: bool = True
    beta_floor: float = 1e-8
    pi_floor: float = 1e-12
    noise_floor: float = 1e-12

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if self.eta is not None and not self.eta > 0.0:
            raise ValueError("eta must be positive")
        if not self.pi_step_cap > 0.0:
            raise ValueError("pi_step_cap must be positive")
        if self.switch_iteration < 0:
            raise ValueError("switch_iteration must be non-negative")
        if self.max_iterations < 1 or self.e_step_sweeps < 1:
            raise ValueError("max_iterations and e_step_sweeps must be positive")
        if not self.tolerance >= 0.0:
            raise ValueError("tolerance must be non-negative")
        if self.init not in ("ridge", "random"):
            raise ValueError(f"unknown init policy {self.init!r}")

    def eta_for(self, n_samples: int) -> float:
        return 2e-2 / n_samples if self.eta is None else self.eta

    def uses_g_step(self, t: int) -> bool:
        if self.variant == EM:
            return False
        if self.variant == EG:
            return True
        return t >= self.switch_iteration


def _noise_floor(data: Dataset, rel: float) -> float:
    scale = float(np.mean(data.y * data.y))
    return rel * (scale if scale > 0.0 else 1.0)


def initialize(data: Dataset, config: SolverConfig = SolverConfig()) -> BMState:
    """Start near the all-features-on regime.

    ``mu = 0.95`` everywhere (``"random"`` jitters it in ``[0.9, 1)`` using
    ``config.seed``), ``pi`` from the mask means, ``beta`` from a
    lightly ridged least-squares fit and ``lam`` from its closed form.
    """
    x, y = data.x, data.y
    n, k = x.shape
    if config.init == "random":
        rng = np.random.default_rng(config.seed)
        mu = rng.uniform(0.9, 1.0, size=(n, k))
    else:
        mu = np.full((n, k), 0.95)
    beta = linalg.solve(x.T @ x + 1e-6 * np.eye(k), x.T @ y, assume_a="pos")
    var = closed_form_noise_variance(x, y, mu, beta, _noise_floor(data, config.noise_floor))
    return BMState(beta=beta, lam=1.0 / var, pi=mu.mean(axis=0), mu=mu, active=tuple(range(k)))


def fab_e_step(state: BMState, data: Dataset, sweeps: int = 3, clip_pi: bool = False) -> BMState:
    """Update the mask posteriors by the fixed-point equations.

    Each ``mu_nk`` becomes ``sigmoid(c_nk + logit(pi_k) - 1/(2 N pi_k))``
    with ``c_nk = x_nk b_k lam (y_n - x_nk b_k / 2 - sum_{l != k} mu_nl x_nl b_l)``,
    visiting coordinates row by row and reusing fresh values.

    ``pi`` must lie strictly inside (0, 1).  With ``clip_pi`` the solvers'
    boundary handling applies instead of raising: ``pi_k = 1`` (left by a
    G-step clamp) pins the column to ``mu = 1``, and ``pi`` is floored at
    machine epsilon.
    """
    pi = state.pi
    if clip_pi:
        pi = np.clip(pi, MACHINE_EPS, 1.0)
    elif np.any((pi <= 0.0) | (pi >= 1.0)):
        raise ModelDomainError("E-step needs every pi strictly inside (0, 1)")
    n = data.n_samples
    with np.errstate(divide="ignore"):
        # pi = 1 gives +inf log-odds, i.e. mu = 1 exactly
        bias = np.log(pi) - np.log1p(-pi) - 0.5 / (n * pi)
    x = np.ascontiguousarray(active_design(state, data))
    mu = np.array(state.mu, dtype=float, order="C")
    _kernels.e_step_sweeps(x, data.y, np.asarray(state.beta, dtype=float), state.lam, bias, mu, int(sweeps))
    return state.replace(mu=mu)


_BELOW_ONE = float(np.nextafter(1.0, 0.0))


def _pi_ceiling(mu):
    """1 for columns of exact ones, else the largest double below 1.

    A column mean can round up to 1 while some ``mu < 1``; ``pi = 1`` would
    then put ``log(1 - pi) = -inf`` into the bound.
    """
    return np.where(mu.min(axis=0) >= 1.0, 1.0, _BELOW_ONE)


def fab_m_step(state: BMState, data: Dataset, noise_floor: float = 0.0) -> BMState:
    """Closed-form maximizers of the bound in ``beta``, ``lam`` and ``pi``.

    ``beta = Omega^-1 (X * M)^T y``, then ``1/lam`` is the expected mean
    squared residual at the new ``beta``, then ``pi_k`` is the column mean of
    ``mu``.  A noise variance at or below ``noise_floor`` is clamped to it;
    with the default floor of zero it raises instead.
    """
    x = active_design(state, data)
    mu = state.mu
    omega = masked_gram(x, mu)
    beta = solve_spd(omega, (x * mu).T @ data.y)
    var = closed_form_noise_variance(x, data.y, mu, beta, noise_floor)
    pi = np.minimum(mu.mean(axis=0), _pi_ceiling(mu))
    return state.replace(beta=beta, lam=1.0 / var, pi=pi)


def reparam_direction_matrix(beta, pi):
    """Entries ``(a_bb, a_bp, a_pp)`` of the symmetric 2x2 matrix that maps the
    ``(beta, pi)`` gradient to the step direction of each feature.

    It is ``(J^T J)^-1`` for the Jacobian ``J`` of ``(beta, pi) -> (beta, beta pi)``.
    """
    beta = np.asarray(beta, dtype=float)
    pi = np.asarray(pi, dtype=float)
    return np.ones_like(beta), -pi / beta, (1.0 + pi * pi) / (beta * beta)


def g_step_direction(
    state: BMState,
    data: Dataset,
    reparametrize: bool = True,
    beta_floor: float = 1e-8,
):
    """Ascent direction ``(d_beta, d_pi)`` for the G-step, before scaling by eta.

    With reparametrization the gradient is premultiplied, feature by
    feature, by the inverse of the metric induced by ``(beta, s = beta pi)``:
    ``[[1, -pi/b], [-pi/b, (1 + pi^2)/b^2]]``.  Features with ``pi = 1`` move
    only along ``beta``.  ``|beta|`` below ``beta_floor`` is replaced by
    ``sign(beta) * beta_floor`` (sign of zero taken as +).
    """
    g_beta, g_pi = grad_beta_pi(state, data)
    pi = state.pi
    inner = pi < 1.0
    d_beta = g_beta.copy()
    d_pi = np.zeros_like(pi)
    if reparametrize:
        b = state.beta
        b = np.where(np.abs(b) < beta_floor, np.where(b < 0.0, -beta_floor, beta_floor), b)
        a_bb, a_bp, a_pp = reparam_direction_matrix(b[inner], pi[inner])
        gb, gp = g_beta[inner], g_pi[inner]
        d_beta[inner] = a_bb * gb + a_bp * gp
        d_pi[inner] = a_bp * gb + a_pp * gp
    else:
        d_pi[inner] = g_pi[inner]
    return d_beta, d_pi


def apply_g_step(
    state: BMState,
    data: Dataset,
    d_beta: np.ndarray,
    d_pi: np.ndarray,
    eta_t: float,
    pi_floor: float = 1e-12,
    noise_floor: float = 0.0,
) -> BMState:
    beta = state.beta + eta_t * d_beta
    pi = np.clip(state.pi + eta_t * d_pi, pi_floor, 1.0)
    x = active_design(state, data)
    var = closed_form_noise_variance(x, data.y, state.mu, beta, noise_floor)
    return state.replace(beta=beta, pi=pi, lam=1.0 / var)


def fab_g_step(
    state: BMState,
    data: Dataset,
    eta_t: float,
    reparametrize: bool = True,
    beta_floor: float = 1e-8,
    pi_floor: float = 1e-12,
    noise_floor: float = 0.0,
) -> BMState:
    """One gradient step on ``(beta, pi)`` followed by the closed-form ``lam``.

    The resulting ``pi`` is clamped to ``[pi_floor, 1]``.  A feature that
    reaches ``pi = 1`` is locked in: the next E-step sets its masks to 1 and
    its ``pi`` gradient vanishes.  Until then the bound is ``-inf`` if some of
    its masks are below 1.
    """
    d_beta, d_pi = g_step_direction(state, data, reparametrize, beta_floor)
    return apply_g_step(state, data, d_beta, d_pi, eta_t, pi_floor, noise_floor)


def learning_coefficient(pi_delta, eta: float, cap: float = 0.05) -> float:
    """Shrink ``eta`` so that no ``pi_k`` moves by more than ``cap``.

    ``pi_delta`` is the proposed change of ``pi`` under step ``eta``.
    """
    pi_delta = np.asarray(pi_delta, dtype=float)
    biggest = float(np.max(np.abs(pi_delta))) if pi_delta.size else 0.0
    if biggest <= cap:
        return eta
    return eta * cap / biggest


def prune(state: BMState, delta: float):
    """Drop features whose mean mask ``sum_n mu_nk / N`` is below ``delta``.

    Returns ``(state, dropped)`` where ``dropped`` lists original feature
    indices in their original order.  Raises :class:`EmptyModelError` when
    nothing would survive.
    """
    means = state.mu.mean(axis=0)
    keep = ~(means < delta)
    if keep.all():
        return state, []
    dropped = [k for k, kept in zip(state.active, keep) if not kept]
    if not keep.any():
        raise EmptyModelError(f"all features pruned (delta={delta})")
    idx = np.flatnonzero(keep)
    new = BMState(
        beta=state.beta[idx],
        lam=state.lam,
        pi=state.pi[idx],
        mu=state.mu[:, idx],
        active=tuple(state.active[i] for i in idx),
    )
    return new, dropped


def _empty_state(state: BMState, n: int) -> BMState:
    return BMState(beta=np.zeros(0), lam=state.lam, pi=np.zeros(0), mu=np.zeros((n, 0)), active=())


def fit(
    data: Dataset,
    config: SolverConfig = SolverConfig(),
    init_state: Optional[BMState] = None,
    callback: Optional[Callable[[IterationRecord], bool]] = None,
) -> FitResult:
    """Run FAB-EM, FAB-EG or the hybrid on ``data``.

    Stops when the relative change of the bound, ``|dG| / (|G| + 1)``, falls
    below ``config.tolerance`` on an iteration without pruning, or after
    ``config.max_iterations``.  ``callback`` sees each iteration record and
    may return True to stop early (status ``"stopped"``).

    Numerical failures do not raise: the result has ``status == "failed"``,
    the message in ``error`` and the history up to the failure.
    """
    n = data.n_samples
    noise_floor = _noise_floor(data, config.noise_floor)
    eta = config.eta_for(n)
    start = time.perf_counter()
    history = []
    pruned_at = {}

    def record(t, st, obj):
        rec = IterationRecord(
            iteration=t,
            objective=obj,
            elapsed=time.perf_counter() - start,
            n_active=st.n_active,
            active=st.active,
            pi=st.pi,
            beta=st.beta,
        )
        history.append(rec)
        return rec

    def result(st, status, error=None):
        return FitResult(
            state=st,
            history=history,
            pruned_at=pruned_at,
            n_features=data.n_features,
            status=status,
            error=error,
        )

    try:
        state = initialize(data, config) if init_state is None else init_state
        obj = fic_lower_bound(state, data)
    except BayesMaskError as exc:
        raise ValueError(f"cannot initialize: {exc}") from exc
    record(0, state, obj)

    for t in range(config.max_iterations):
        try:
            state = fab_e_step(state, data, config.e_step_sweeps, clip_pi=True)
            try:
                state, dropped = prune(state, config.delta)
            except EmptyModelError:
                for k in state.active:
                    pruned_at[k] = t + 1
                state = _empty_state(state, n)
                record(t + 1, state, fic_lower_bound(state, data))
                return result(state, "empty_model")
            for k in dropped:
                pruned_at[k] = t + 1
            if config.uses_g_step(t):
                d_beta, d_pi = g_step_direction(state, data, config.reparametrize, config.beta_floor)
                eta_t = eta
                if math.isfinite(config.pi_step_cap):
                    eta_t = learning_coefficient(eta * d_pi, eta, config.pi_step_cap)
                state = apply_g_step(state, data, d_beta, d_pi, eta_t, config.pi_floor, noise_floor)
            else:
                state = fab_m_step(state, data, noise_floor)
            new_obj = fic_lower_bound(state, data)
        except BayesMaskError as exc:
            return result(state, "failed", f"{type(exc).__name__}: {exc}")

        rec = record(t + 1, state, new_obj)
        if callback is not None and callback(rec):
            return result(state, "stopped")
        if not dropped and abs(new_obj - obj) / (abs(obj) + 1.0) < config.tolerance:
            return result(state, "converged")
        obj = new_obj
    return result(state, "max_iterations")
