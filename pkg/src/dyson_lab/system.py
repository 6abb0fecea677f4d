"""Compiled representation of a window, its boundary and a conditioning pattern.

Only free sites are dynamic. Boundary spins, frozen window sites and the
uniform field are folded into a static field on every free site; pair
couplings among free sites form a dense matrix with decoupling masks applied.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    EMPTY_PATTERN,
    BoundaryRule,
    CapacityError,
    ConditioningPattern,
    ModelSpec,
    Window,
    exterior_field,
)

MAX_FREE_SITES = 4096


@dataclass(eq=False)
class System:
    spec: ModelSpec
    window: Window
    bc: BoundaryRule
    pattern: ConditioningPattern
    free_idx: np.ndarray  # window indices of dynamic sites
    base: np.ndarray  # int8 window spins with frozen values filled in, 0 at free sites
    J: np.ndarray  # (nf, nf) couplings among free sites
    static: np.ndarray  # (nf,) field from everything that never moves, including h
    measured: np.ndarray  # window mask of sites seen by the interface estimator

    @property
    def n_free(self) -> int:
        return len(self.free_idx)

    @property
    def center2(self) -> int:
        return self.window.size - 1

    def full(self, free_spins: np.ndarray) -> np.ndarray:
        w = self.base.copy()
        w[self.free_idx] = free_spins
        return w


def _pair_couplings(spec: ModelSpec, d: np.ndarray, R: int) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    safe = np.where(d >= 1, d, 1.0)
    J = safe ** -spec.alpha + np.where(d == 1, spec.nn_boost, 0.0)
    return np.where((d >= 1) & (d <= R), J, 0.0)


def build_system(
    spec: ModelSpec,
    window: Window,
    bc: BoundaryRule,
    pattern: ConditioningPattern | None = None,
) -> System:
    pattern = pattern or EMPTY_PATTERN
    pattern.check_within(window)
    R = bc.radius
    frozen = pattern.frozen_mask(window)
    groups = pattern.group_labels(window)
    free_idx = np.flatnonzero(~frozen)
    if len(free_idx) > MAX_FREE_SITES:
        raise CapacityError(f"{len(free_idx)} free sites exceed the cap of {MAX_FREE_SITES}")

    base = np.zeros(window.size, dtype=np.int8)
    for lo, hi, vals in pattern.frozen:
        base[lo - window.lo : hi - window.lo + 1] = vals

    sites = window.lo + free_idx
    g = groups[free_idx]
    d = np.abs(sites[:, None] - sites[None, :])
    J = _pair_couplings(spec, d, R) * (g[:, None] == g[None, :])

    static = np.full(len(free_idx), spec.field_h, dtype=float)
    ordinary = g < 0
    if ordinary.any():
        x = sites[ordinary]
        ext = exterior_field(spec, window, bc, x)
        for lo, hi, vals in pattern.frozen:
            if np.all(vals == vals[0]):
                right = lo > x
                dmin = np.where(right, lo - x, x - hi)
                dmax = np.where(right, hi - x, x - lo)
                ext += vals[0] * spec.coupling_sum(np.maximum(dmin, 1), np.minimum(dmax, R))
            else:
                block = np.arange(lo, hi + 1)
                ext += _pair_couplings(spec, np.abs(x[:, None] - block[None, :]), R) @ vals.astype(float)
        static[ordinary] += ext

    measured = ~frozen
    return System(spec, window, bc, pattern, free_idx, base, J, static, measured)
