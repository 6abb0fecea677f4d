"""numba kernels for the sampler hot loops.

Spins live in a full window array ``w`` (int8); ``free_idx`` lists the window
positions that may change. ``field[k]`` is the local field on free site ``k``
and is kept in sync incrementally after every accepted flip.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def interface_cut(w, measured, center2):
    """Window index of the mismatch-minimising cut.

    Cut ``c`` puts measured sites left of ``c`` on the minus side and sites right
    of ``c`` on the plus side; site ``c`` itself is not counted. Ties go to the
    cut closest to the centre (``center2`` is twice the centre index), then to
    the left one unless the measured magnetisation is negative. That keeps the
    estimator equivariant under reflection combined with a global spin flip.
    """
    n = w.shape[0]
    total_minus = 0
    mag = 0
    for i in range(n):
        if measured[i]:
            mag += w[i]
            if w[i] < 0:
                total_minus += 1
    best = -1
    best_m = n + 1
    best_d = 4 * n + 4
    plus_left = 0
    minus_upto = 0  # minus sites at indices <= c
    for c in range(n):
        if measured[c] and w[c] < 0:
            minus_upto += 1
        m = plus_left + (total_minus - minus_upto)
        d = abs(2 * c - center2)
        if m < best_m or (m == best_m and d < best_d):
            best, best_m, best_d = c, m, d
        elif m == best_m and d == best_d and mag < 0:
            # mirror-image tie, scanned left to right: negative magnetisation
            # takes the right-hand cut, otherwise the left-hand one stays
            best = c
        if measured[c] and w[c] > 0:
            plus_left += 1
    return best


@njit(cache=True)
def _accept_flip(w, field, J, free_idx, k):
    i = free_idx[k]
    new = -w[i]
    w[i] = new
    nf = free_idx.shape[0]
    for j in range(nf):
        field[j] += 2.0 * new * J[k, j]


@njit(cache=True)
def metropolis_batch(
    w, field, J, free_idx, beta, orders, uniforms,
    block_of, block_sums, cuts, measured, center2, t0,
):
    """Run ``orders.shape[0]`` Metropolis sweeps.

    Sweep ``t`` (global index ``t0 + t``) is measured when ``block_of[t0 + t] >= 0``.
    Returns the number of accepted flips.
    """
    nsweep, nf = orders.shape
    n = w.shape[0]
    accepted = 0
    for t in range(nsweep):
        for r in range(nf):
            k = orders[t, r]
            dE = 2.0 * w[free_idx[k]] * field[k]
            if dE <= 0.0 or uniforms[t, r] < math.exp(-beta * dE):
                _accept_flip(w, field, J, free_idx, k)
                accepted += 1
        b = block_of[t0 + t]
        if b >= 0:
            for i in range(n):
                block_sums[b, i] += w[i]
            cuts[t0 + t] = interface_cut(w, measured, center2)
    return accepted


@njit(cache=True)
def heatbath_batch(
    w, field, J, free_idx, beta, orders, uniforms,
    block_of, block_sums, cuts, measured, center2, t0,
):
    """Heat-bath counterpart of :func:`metropolis_batch`."""
    nsweep, nf = orders.shape
    n = w.shape[0]
    accepted = 0
    for t in range(nsweep):
        for r in range(nf):
            k = orders[t, r]
            p_plus = 1.0 / (1.0 + math.exp(-2.0 * beta * field[k]))
            new = 1 if uniforms[t, r] < p_plus else -1
            if new != w[free_idx[k]]:
                _accept_flip(w, field, J, free_idx, k)
                accepted += 1
        b = block_of[t0 + t]
        if b >= 0:
            for i in range(n):
                block_sums[b, i] += w[i]
            cuts[t0 + t] = interface_cut(w, measured, center2)
    return accepted


@njit(cache=True)
def heatbath_pair_batch(
    w_lo, f_lo, w_hi, f_hi, J, free_idx, beta, orders, uniforms, probe, record, t0,
):
    """Coupled heat-bath sweeps for two ordered chains sharing randomness.

    ``record[t0 + t, 0/1]`` receives the spins of the lower/upper chain at
    window index ``probe`` after each sweep. Returns the first sweep at which
    the pointwise order ``w_lo <= w_hi`` failed, or -1.
    """
    nsweep, nf = orders.shape
    violated = -1
    for t in range(nsweep):
        for r in range(nf):
            k = orders[t, r]
            i = free_idx[k]
            u = uniforms[t, r]
            new_lo = 1 if u < 1.0 / (1.0 + math.exp(-2.0 * beta * f_lo[k])) else -1
            new_hi = 1 if u < 1.0 / (1.0 + math.exp(-2.0 * beta * f_hi[k])) else -1
            if new_lo != w_lo[i]:
                _accept_flip(w_lo, f_lo, J, free_idx, k)
            if new_hi != w_hi[i]:
                _accept_flip(w_hi, f_hi, J, free_idx, k)
        if violated < 0:
            for k in range(nf):
                i = free_idx[k]
                if w_lo[i] > w_hi[i]:
                    violated = t0 + t
                    break
        if probe >= 0:
            record[t0 + t, 0] = w_lo[probe]
            record[t0 + t, 1] = w_hi[probe]
    return violated


@njit(cache=True)
def local_fields(w, J, free_idx, static):
    nf = free_idx.shape[0]
    out = static.copy()
    for k in range(nf):
        s = w[free_idx[k]]
        for j in range(nf):
            out[j] += J[k, j] * s
    return out
