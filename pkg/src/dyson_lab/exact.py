"""Brute-force enumeration of small windows: the trust anchor for everything else.

Configuration ``k`` (an integer bitmask) has spin +1 at window index ``i`` when
bit ``i`` is set.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import networkx as nx
import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .io import write_csv
from .model import (
    BoundaryRule,
    CapacityError,
    ConditioningPattern,
    DomainError,
    ModelSpec,
    Window,
)
from .system import build_system

DEFAULT_CAP = 22
EXHAUSTIVE_FKG_MAX = 6
CLOSURE_FKG_MAX = 12
_CHUNK = 1 << 16


def spin_table(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows of +-1 spins for bitmasks ``start .. stop-1``."""
    stop = (1 << n) if stop is None else stop
    k = np.arange(start, stop, dtype=np.int64)
    bits = (k[:, None] >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.int8)


@dataclass(eq=False)
class ExactDistribution:
    spec: ModelSpec
    window: Window
    bc: BoundaryRule
    pattern: ConditioningPattern | None
    energies: np.ndarray  # indexed by bitmask over the free sites
    log_probs: np.ndarray
    log_partition: float
    free_sites: np.ndarray  # absolute site of each bit
    frozen: dict  # absolute site -> spin for frozen window sites

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def n_free(self) -> int:
        return len(self.free_sites)

    def spins(self) -> np.ndarray:
        """All free-site configurations, row ``k`` for bitmask ``k``."""
        return spin_table(self.n_free)

    def bit(self, site: int) -> int:
        hits = np.flatnonzero(self.free_sites == site)
        if len(hits) == 0:
            raise DomainError(f"site {site} is not a free site of this distribution")
        return int(hits[0])

    def site_spins(self, site: int) -> np.ndarray:
        """Spin at ``site`` for every bitmask (constant for frozen sites)."""
        if site in self.frozen:
            return np.full(1 << self.n_free, self.frozen[site], dtype=np.int8)
        b = self.bit(site)
        k = np.arange(1 << self.n_free, dtype=np.int64)
        return (2 * ((k >> b) & 1) - 1).astype(np.int8)

    def window_spins(self) -> np.ndarray:
        """Full window configurations (frozen sites included), one row per bitmask."""
        out = np.zeros((1 << self.n_free, self.window.size), dtype=np.int8)
        for j, x in enumerate(self.window.sites()):
            out[:, j] = self.site_spins(int(x))
        return out

    def write_csv(self, path) -> None:
        p = self.probs
        write_csv(
            path,
            ["config_bitmask", "energy", "probability"],
            ((k, float(self.energies[k]), float(p[k])) for k in range(len(p))),
        )


def enumerate_window(
    spec: ModelSpec,
    window: Window,
    bc: BoundaryRule,
    pattern: ConditioningPattern | None = None,
    cap: int = DEFAULT_CAP,
) -> ExactDistribution:
    """Exact Gibbs distribution on ``window`` by listing every configuration.

    Energies are computed chunk by chunk in bitmask order, so the result does
    not depend on how the chunks are scheduled.
    """
    system = build_system(spec, window, bc, pattern)
    n = system.n_free
    if n > cap:
        raise CapacityError(f"{n} free sites exceed the enumeration cap of {cap}")
    J = system.J
    h = system.static
    energies = np.empty(1 << n)
    for start in range(0, 1 << n, _CHUNK):
        stop = min(start + _CHUNK, 1 << n)
        s = spin_table(n, start, stop).astype(float)
        energies[start:stop] = -0.5 * np.einsum("ki,ij,kj->k", s, J, s) - s @ h
    logw = -spec.beta * energies
    logZ = float(logsumexp(logw))
    frozen = {}
    for lo, hi, vals in (pattern.frozen if pattern else ()):
        for x, v in zip(range(lo, hi + 1), vals):
            frozen[x] = int(v)
    return ExactDistribution(
        spec, window, bc, pattern, energies, logw - logZ, logZ, window.lo + system.free_idx, frozen
    )


def _match_mask(dist: ExactDistribution, fixed: Mapping[int, int]) -> np.ndarray:
    mask = np.ones(1 << dist.n_free, dtype=bool)
    for site, spin in fixed.items():
        if spin not in (-1, 1):
            raise DomainError(f"fixed spin must be +-1, got {spin}")
        if site in dist.frozen:
            if dist.frozen[site] != spin:
                raise DomainError(f"site {site} is frozen to {dist.frozen[site]}")
            continue
        mask &= dist.site_spins(site) == spin
    return mask


def conditional(dist: ExactDistribution, fixed: Mapping[int, int], target_site: int) -> float:
    """Exact ``P(sigma_target = +1 | fixed)``."""
    if target_site in fixed:
        raise DomainError("target site is among the fixed sites")
    mask = _match_mask(dist, fixed)
    if not mask.any():
        raise DomainError("contradictory assignment")
    lp = dist.log_probs[mask]
    plus = dist.site_spins(target_site)[mask] == 1
    if not plus.any():
        return 0.0
    return float(np.exp(logsumexp(lp[plus]) - logsumexp(lp)))


def conditional_distribution(dist: ExactDistribution, fixed: Mapping[int, int]) -> ExactDistribution:
    """The distribution of the remaining free sites given ``fixed``."""
    mask = _match_mask(dist, fixed)
    keep = [x for x in dist.free_sites if x not in fixed]
    lp = dist.log_probs[mask]
    lp = lp - logsumexp(lp)
    # re-index the surviving configurations by the bitmask over ``keep``
    k_old = np.flatnonzero(mask)
    k_new = np.zeros(len(k_old), dtype=np.int64)
    for j, x in enumerate(keep):
        k_new |= ((k_old >> dist.bit(int(x))) & 1) << j
    out = np.empty(1 << len(keep))
    out[k_new] = lp
    energies = np.empty(1 << len(keep))
    energies[k_new] = dist.energies[mask]
    return ExactDistribution(
        dist.spec, dist.window, dist.bc, dist.pattern, energies, out, float("nan"),
        np.asarray(keep), {**dist.frozen, **fixed},
    )


def magnetization(dist: ExactDistribution, site: int) -> float:
    return float(np.dot(dist.probs, dist.site_spins(site)))


# FKG domination ----------------------------------------------------------------


@dataclass
class FKGResult:
    dominates: bool
    worst_gap: float  # max over tested upper sets of E_lo[1_U] - E_hi[1_U]
    witness: frozenset | None  # violating upper set (bitmasks) when ``dominates`` is False
    method: str


def _upper_closure(seeds, n: int) -> set:
    out = set()
    stack = list(seeds)
    while stack:
        k = stack.pop()
        if k in out:
            continue
        out.add(k)
        for i in range(n):
            if not (k >> i) & 1:
                stack.append(k | (1 << i))
    return out


def upper_sets(n: int) -> np.ndarray:
    """Every upper set of the Boolean lattice on ``n <= 6`` bits, as bitsets.

    Bit ``k`` of an entry is set when configuration ``k`` belongs to the set.
    Built from the split on the top variable: an upper set is a pair
    ``(U0, U1)`` of upper sets on one variable fewer with ``U0`` inside ``U1``.
    """
    if n > EXHAUSTIVE_FKG_MAX:
        raise CapacityError("explicit upper-set listing is limited to 6 sites")
    sets = np.array([0, 1], dtype=np.uint64)
    for m in range(n):
        width = np.uint64(1 << m)
        out = []
        for a in sets:
            b = sets[(a & ~sets) == 0]
            out.append(a | (b << width))
        sets = np.concatenate(out)
    return sets


def _set_sums(sets: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_{k in U} weights[k]`` for every bitset ``U`` (byte lookup tables)."""
    n_elems = len(weights)
    total = np.zeros(len(sets))
    byte_vals = np.arange(256)
    for start in range(0, n_elems, 8):
        w = np.zeros(8)
        chunk = weights[start : start + 8]
        w[: len(chunk)] = chunk
        table = ((byte_vals[:, None] >> np.arange(8)) & 1) @ w
        idx = ((sets >> np.uint64(start)) & np.uint64(255)).astype(np.int64)
        total += table[idx]
    return total


def _bits(u: int, n_elems: int) -> frozenset:
    return frozenset(k for k in range(n_elems) if (u >> k) & 1)


def _max_violation_closure(diff: np.ndarray, n: int) -> tuple[float, frozenset]:
    """``max_U sum_{k in U} diff[k]`` over upper sets ``U`` via a minimum cut."""
    scale = 1e12
    g = nx.DiGraph()
    total = 0.0
    for k, w in enumerate(diff):
        c = int(round(w * scale))
        if c > 0:
            g.add_edge("s", k, capacity=c)
            total += c
        elif c < 0:
            g.add_edge(k, "t", capacity=-c)
        for i in range(n):
            if not (k >> i) & 1:
                g.add_edge(k, k | (1 << i))  # infinite capacity
    if "s" not in g or "t" not in g:
        best = frozenset(k for k in range(len(diff)) if diff[k] > 0) if total > 0 else frozenset()
        return total / scale, frozenset(_upper_closure(best, n)) if best else frozenset()
    cut, (src_side, _) = nx.minimum_cut(g, "s", "t")
    closure = frozenset(k for k in src_side if k != "s")
    return float(sum(diff[k] for k in closure)), closure


def fkg_dominates(dist_hi: ExactDistribution, dist_lo: ExactDistribution, seed: int = 0) -> FKGResult:
    """Whether ``dist_hi`` stochastically dominates ``dist_lo``.

    Up to six free sites every upper set is listed. Up to ``CLOSURE_FKG_MAX``
    sites the worst upper set is found exactly as a maximum-weight closure
    (minimum cut); beyond that a fixed-seed sample of upper sets generated by
    random antichains is tested.
    """
    if dist_hi.window != dist_lo.window or not np.array_equal(dist_hi.free_sites, dist_lo.free_sites):
        raise DomainError("distributions live on different windows")
    n = dist_hi.n_free
    diff = dist_lo.probs - dist_hi.probs
    if n <= EXHAUSTIVE_FKG_MAX:
        sets = upper_sets(n)
        sums = _set_sums(sets, diff)
        i = int(np.argmax(sums))
        worst, witness = float(sums[i]), _bits(int(sets[i]), len(diff))
        method = "exhaustive"
    elif n <= CLOSURE_FKG_MAX:
        worst, witness = _max_violation_closure(diff, n)
        method = "closure"
    else:
        rng = np.random.default_rng(seed)
        worst, witness = 0.0, frozenset()
        for _ in range(2000):
            seeds = rng.integers(0, 1 << n, size=rng.integers(1, 4))
            u = frozenset(_upper_closure(seeds.tolist(), n))
            g = float(diff[list(u)].sum())
            if g > worst:
                worst, witness = g, u
        method = "sampled"
    ok = worst <= 1e-12
    return FKGResult(ok, max(worst, 0.0), None if ok else witness, method)


# Interface point ---------------------------------------------------------------


def interface_cuts(window: Window, configs: np.ndarray, measured: np.ndarray | None = None) -> np.ndarray:
    """Interface estimator applied to each row of ``configs`` (absolute sites)."""
    measured = np.ones(window.size, dtype=bool) if measured is None else measured
    c2 = window.size - 1
    out = np.empty(len(configs), dtype=np.int64)
    for r in range(len(configs)):
        out[r] = _kernels.interface_cut(configs[r], measured, c2)
    return out + window.lo


def interface_distribution(dist: ExactDistribution) -> dict[int, float]:
    """Law of the interface point under an exact Dobrushin distribution."""
    if dist.bc.kind != "dobrushin":
        raise DomainError("interface distribution needs Dobrushin boundary conditions")
    w = dist.window
    if w.lo != -w.hi:
        raise DomainError("interface distribution needs a symmetric window [-L, L]")
    if w.hi > 10:
        raise CapacityError("exact interface distribution is limited to L <= 10")
    cuts = interface_cuts(w, dist.window_spins())
    p = dist.probs
    return {int(c): float(p[cuts == c].sum()) for c in w.sites()}
