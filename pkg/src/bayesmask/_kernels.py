"""Compiled inner loops.  Callers validate inputs; nothing here checks shapes."""
import math

import numba
import numpy as np


@numba.njit(cache=True)
def _sigmoid(t):
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@numba.njit(cache=True)
def bernoulli_sums(mu, pi):
    """Return ``(sum mu log pi + (1-mu) log(1-pi), sum H(mu))`` with 0 log 0 = 0."""
    n_rows, n_feat = mu.shape
    lp = np.empty(n_feat)
    lq = np.empty(n_feat)
    for k in range(n_feat):
        lp[k] = math.log(pi[k])
        lq[k] = math.log1p(-pi[k]) if pi[k] < 1.0 else -math.inf
    log_prior = 0.0
    entropy = 0.0
    for n in range(n_rows):
        for k in range(n_feat):
            m = mu[n, k]
            if m > 0.0:
                log_prior += m * lp[k]
                entropy -= m * math.log(m)
            if m < 1.0:
                log_prior += (1.0 - m) * lq[k]
                entropy -= (1.0 - m) * math.log1p(-m)
    return log_prior, entropy


@numba.njit(cache=True)
def e_step_sweeps(x, y, beta, lam, bias, mu, sweeps):
    """Gauss-Seidel passes of the mask fixed point, in place on ``mu``.

    ``bias[k]`` is the data-independent part of the log-odds.  Order is
    sweep, then row, then feature.
    """
    n_rows, n_feat = x.shape
    for _ in range(sweeps):
        for n in range(n_rows):
            # r = sum_l mu_nl x_nl beta_l, kept current as mu_n changes
            r = 0.0
            for k in range(n_feat):
                r += mu[n, k] * x[n, k] * beta[k]
            for k in range(n_feat):
                a = x[n, k] * beta[k]
                r -= mu[n, k] * a
                c = a * lam * (y[n] - 0.5 * a - r)
                m = _sigmoid(c + bias[k])
                mu[n, k] = m
                r += m * a
    return mu


@numba.njit(cache=True)
def lasso_cd_gram(gram, xty, lam, alpha, beta, tol, max_sweeps):
    """Cyclic coordinate descent on ``lam/2 ||y - X b||^2 + alpha ||b||_1``.

    Works from the Gram matrix; ``beta`` is updated in place.  Returns the
    number of sweeps used, or -1 when ``max_sweeps`` ran out.
    """
    k_feat = gram.shape[0]
    # grad_part[k] = (X^T X b)_k, maintained incrementally
    gb = gram @ beta
    for sweep in range(max_sweeps):
        max_change = 0.0
        for k in range(k_feat):
            g_kk = gram[k, k]
            if g_kk <= 0.0:
                continue
            old = beta[k]
            rho = lam * (xty[k] - gb[k] + g_kk * old)
            if rho > alpha:
                new = (rho - alpha) / (lam * g_kk)
            elif rho < -alpha:
                new = (rho + alpha) / (lam * g_kk)
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                beta[k] = new
                for j in range(k_feat):
                    gb[j] += gram[j, k] * delta
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if max_change < tol:
            return sweep + 1
    return -1


@numba.njit(cache=True)
def expected_sse(x, y, mu, beta):
    """``sum_n (y_n - sum_k mu_nk a_nk)^2 + sum_nk a_nk^2 mu_nk (1 - mu_nk)`` with ``a = x * beta``."""
    n_rows, n_feat = x.shape
    total = 0.0
    for n in range(n_rows):
        r = y[n]
        v = 0.0
        for k in range(n_feat):
            a = x[n, k] * beta[k]
            m = mu[n, k]
            r -= m * a
            v += a * a * (m - m * m)
        total += r * r + v
    return total


@numba.njit(cache=True)
def mask_variance_diag(x, mu):
    """``sum_n x_nk^2 mu_nk (1 - mu_nk)`` per column."""
    n_rows, n_feat = x.shape
    out = np.zeros(n_feat)
    for n in range(n_rows):
        for k in range(n_feat):
            m = mu[n, k]
            out[k] += x[n, k] * x[n, k] * (m - m * m)
    return out


def warmup():
    """Trigger compilation on tiny inputs."""
    x = np.ones((2, 2))
    e_step_sweeps(x, np.ones(2), np.ones(2), 1.0, np.zeros(2), np.full((2, 2), 0.5), 1)
    bernoulli_sums(np.full((2, 2), 0.5), np.full(2, 0.5))
    expected_sse(x, np.ones(2), np.full((2, 2), 0.5), np.ones(2))
    mask_variance_diag(x, np.full((2, 2), 0.5))
    lasso_cd_gram(np.eye(2), np.ones(2), 1.0, 0.1, np.zeros(2), 1e-6, 10)
