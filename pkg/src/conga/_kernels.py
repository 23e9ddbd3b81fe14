"""Compiled inner loops of the sampler.

All random numbers are drawn by the caller (numpy Generator) and passed in,
so chains are reproducible and checkpointable from Python.
"""
import math

import numpy as np
from numba import njit

# tail mass below exp(-42) ~ 6e-19 of the running sum is dropped
_TAIL_LOG_TOL = 42.0


@njit(cache=True)
def log_normalizer(loglam, lam, h, ftab, lgam, upper, B):
    """log sum_{y=0..B} exp(y log(lam) - log(y!) - F(y) h), exiting early once
    the remaining tail is provably negligible."""
    m = -np.inf
    s = 0.0
    ah = abs(h)
    for y in range(B + 1):
        t = y * loglam - lgam[y] - ftab[y] * h
        if t > m:
            s = s * math.exp(m - t) + 1.0
            m = t
        else:
            s += math.exp(t - m)
        if y + 1.0 > lam:
            rho = lam / (y + 1.0)
            tail = t + ah * (upper - ftab[y]) + math.log(rho / (1.0 - rho))
            if tail < m + math.log(s) - _TAIL_LOG_TOL:
                break
    return m + math.log(s)


@njit(cache=True)
def compute_fields(fx, beta):
    """h[t, j] = sum_{k != j} beta[j, k] F(x[t, k]) with a fixed summation order."""
    n, P = fx.shape
    h = np.zeros((n, P))
    for t in range(n):
        for j in range(P):
            acc = 0.0
            for k in range(P):
                if k != j:
                    acc += beta[j, k] * fx[t, k]
            h[t, j] = acc
    return h


@njit(cache=True)
def compute_log_normalizers(lam, h, ftab, lgam, upper, B):
    n, P = lam.shape
    out = np.empty((n, P))
    for t in range(n):
        for j in range(P):
            out[t, j] = log_normalizer(math.log(lam[t, j]), lam[t, j], h[t, j],
                                       ftab, lgam, upper, B)
    return out


@njit(cache=True)
def nb_log_marginal(x, a, b, lgam_x):
    """log of int Pois(x; l) Gamma(l; a, b) dl (negative binomial mass)."""
    return (math.lgamma(a + x) - math.lgamma(a) - lgam_x
            + a * math.log(b) - (a + x) * math.log(b + 1.0))


@njit(cache=True)
def fresh_log_ratio(x, lam_old, lam_new, cand, K1, a, b, shape, rate,
                    h, logz_old, ftab, lgam, upper, B, use_lik):
    """Log MH ratio for moving a singleton random effect from lam_old to
    lam_new = lam_old + K1 (cand - lam_old).

    Returns (log_ratio, logz_new).  log_ratio is -inf when the reverse move is
    impossible.
    """
    if not lam_new > 0.0:
        return -np.inf, logz_old
    z_rev = (lam_old - (1.0 - K1) * lam_new) / K1
    if not z_rev > 0.0:
        return -np.inf, logz_old
    ll_new = math.log(lam_new)
    ll_old = math.log(lam_old)
    r = (a - 1.0) * (ll_new - ll_old) - b * (lam_new - lam_old)
    r += (shape - 1.0) * (math.log(z_rev) - math.log(cand)) - rate * (z_rev - cand)
    logz_new = logz_old
    if use_lik:
        logz_new = log_normalizer(ll_new, lam_new, h, ftab, lgam, upper, B)
        r += x * (ll_new - ll_old) - (logz_new - logz_old)
    return r, logz_new


@njit(cache=True)
def dp_sweep_column(x, lam, loglam, h, logz, ftab, lgam, upper, B,
                    M, K1, a, b, use_lik, u_choice, cand, u_acc, buf):
    """One pass of DP reassignment over all observations of a single node.

    Modifies lam, loglam and logz in place.  Returns
    (mh_attempts, mh_accepts, exact_fresh_draws).
    """
    n = x.size
    attempts = 0
    accepts = 0
    exact = 0
    log_m = math.log(M)
    if use_lik:
        shape_add = 1.0
    else:
        shape_add = 0.0
    for i in range(n):
        xi = x[i]
        lg_xi = lgam[xi]
        mx = -np.inf
        for k in range(n):
            if k == i:
                if use_lik:
                    lw = log_m + nb_log_marginal(xi, a, b, lg_xi)
                else:
                    lw = log_m
            elif use_lik:
                lw = xi * loglam[k] - lam[k] - lg_xi
            else:
                lw = 0.0
            buf[k] = lw
            if lw > mx:
                mx = lw
        tot = 0.0
        for k in range(n):
            w = math.exp(buf[k] - mx)
            buf[k] = w
            tot += w
        target = u_choice[i] * tot
        run = 0.0
        pick = n - 1
        for k in range(n):
            run += buf[k]
            if target < run:
                pick = k
                break

        if pick != i:
            if lam[pick] != lam[i]:
                lam[i] = lam[pick]
                loglam[i] = loglam[pick]
                if use_lik:
                    logz[i] = log_normalizer(loglam[i], lam[i], h[i], ftab, lgam, upper, B)
            continue

        shared = False
        for k in range(n):
            if k != i and lam[k] == lam[i]:
                shared = True
                break
        lc = cand[i]
        if shared:
            # leaving a shared cluster: conjugate draw from the base posterior
            lam[i] = lc
            loglam[i] = math.log(lc)
            if use_lik:
                logz[i] = log_normalizer(loglam[i], lc, h[i], ftab, lgam, upper, B)
            exact += 1
            continue

        attempts += 1
        l0 = lam[i]
        l1 = l0 + K1 * (lc - l0)
        shape = a + shape_add * xi
        rate = b + shape_add
        r, lz1 = fresh_log_ratio(xi, l0, l1, lc, K1, a, b, shape, rate,
                                 h[i], logz[i], ftab, lgam, upper, B, use_lik)
        if math.log(u_acc[i]) < r:
            accepts += 1
            lam[i] = l1
            loglam[i] = math.log(l1)
            logz[i] = lz1
    return attempts, accepts, exact


@njit(cache=True)
def beta_row_delta(l, new_row, beta, fx, loglam, lam, H, logz,
                   ftab, lgam, upper, B, new_h, new_logz):
    """Change in log pseudo-likelihood when row/column l of beta becomes new_row.

    Fills new_h and new_logz with the fields and log normalizers under the
    candidate so they can be committed on acceptance.
    """
    n, P = fx.shape
    total = 0.0
    for t in range(n):
        hl = 0.0
        for k in range(P):
            if k != l:
                hl += new_row[k] * fx[t, k]
        lz = log_normalizer(loglam[t, l], lam[t, l], hl, ftab, lgam, upper, B)
        total += -fx[t, l] * (hl - H[t, l]) - (lz - logz[t, l])
        new_h[t, l] = hl
        new_logz[t, l] = lz
        ftl = fx[t, l]
        for j in range(P):
            if j == l:
                continue
            d = new_row[j] - beta[l, j]
            if d == 0.0 or ftl == 0.0:
                new_h[t, j] = H[t, j]
                new_logz[t, j] = logz[t, j]
                continue
            hj = H[t, j] + d * ftl
            lz = log_normalizer(loglam[t, j], lam[t, j], hj, ftab, lgam, upper, B)
            total += -fx[t, j] * (hj - H[t, j]) - (lz - logz[t, j])
            new_h[t, j] = hj
            new_logz[t, j] = lz
    return total
