"""Seeded single-site dynamics on a compiled :class:`~dyson_lab.system.System`.

Random streams: chain ``k`` of a run seeded with ``seed`` draws from
``PCG64(SeedSequence(seed, spawn_key=(k,)))``. Every sweep consumes ``2 * n_free``
uniforms in one block: the first half are sort keys giving the site order, the
second half are the acceptance uniforms. Batched and one-at-a-time sweeps
therefore see identical randomness.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .model import (
    BoundaryRule,
    CapacityError,
    ConditioningPattern,
    Configuration,
    DysonError,
    ModelSpec,
    Window,
)
from .stats import N_BLOCKS, block_se
from .system import System, build_system

log = logging.getLogger(__name__)

METHODS = ("metropolis", "heatbath")
MAX_SAMPLES = 50_000_000


class InvariantError(DysonError, AssertionError):
    """A property that must hold by construction was violated."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def draw_sweeps(rng: np.random.Generator, n_sweeps: int, n_free: int):
    """Site orders and acceptance uniforms for ``n_sweeps`` sweeps."""
    u = rng.random((n_sweeps, 2, n_free))
    orders = np.argsort(u[:, 0, :], axis=1, kind="stable").astype(np.int64)
    return orders, np.ascontiguousarray(u[:, 1, :])


def _batch_size(n_free: int) -> int:
    return max(1, min(4096, 2_000_000 // max(n_free, 1)))


def _initial_spins(system: System, init, rng: np.random.Generator) -> np.ndarray:
    nf = system.n_free
    if isinstance(init, Configuration):
        if init.window != system.window:
            raise DysonError("initial configuration lives on a different window")
        return init.spins[system.free_idx].copy()
    if init in ("plus", 1):
        return np.ones(nf, dtype=np.int8)
    if init in ("minus", -1):
        return -np.ones(nf, dtype=np.int8)
    if init in (None, "random"):
        return np.where(rng.random(nf) < 0.5, 1, -1).astype(np.int8)
    raise DysonError(f"unknown initial state {init!r}")


@dataclass(eq=False)
class ChainState:
    system: System
    w: np.ndarray
    field: np.ndarray
    rng: np.random.Generator
    sweep_count: int = 0

    @classmethod
    def start(
        cls,
        spec: ModelSpec,
        window: Window,
        bc: BoundaryRule,
        pattern: ConditioningPattern | None = None,
        init=None,
        seed: int = 0,
        stream: int = 0,
    ) -> "ChainState":
        system = build_system(spec, window, bc, pattern)
        rng = make_rng(seed, stream)
        w = system.full(_initial_spins(system, init, rng))
        field_ = _kernels.local_fields(w, system.J, system.free_idx, system.static)
        return cls(system, w, field_, rng)

    @property
    def config(self) -> Configuration:
        return Configuration(self.system.window, self.w.copy())

    @property
    def bc(self) -> BoundaryRule:
        return self.system.bc

    def interface_cut(self) -> int:
        s = self.system
        return s.window.lo + int(_kernels.interface_cut(self.w, s.measured, s.center2))


def _advance(state: ChainState, beta: float, n_sweeps: int, kernel) -> int:
    s = state.system
    orders, u = draw_sweeps(state.rng, n_sweeps, s.n_free)
    dummy_blocks = np.full(n_sweeps, -1, dtype=np.int64)
    acc = kernel(
        state.w, state.field, s.J, s.free_idx, beta, orders, u,
        dummy_blocks, np.zeros((1, 1)), np.zeros(1, dtype=np.int64), s.measured, s.center2, 0,
    )
    state.sweep_count += n_sweeps
    return acc


def metropolis_sweep(state: ChainState, spec: ModelSpec | None = None) -> ChainState:
    """One Metropolis sweep in random-permutation order (in place; returns ``state``)."""
    beta = (spec or state.system.spec).beta
    _advance(state, beta, 1, _kernels.metropolis_batch)
    return state


def heatbath_sweep(state: ChainState, spec: ModelSpec | None = None) -> ChainState:
    beta = (spec or state.system.spec).beta
    _advance(state, beta, 1, _kernels.heatbath_batch)
    return state


def _check_pair(lo: ChainState, hi: ChainState) -> None:
    if not np.array_equal(lo.system.free_idx, hi.system.free_idx) or lo.system.window != hi.system.window:
        raise DysonError("paired chains must share window and free sites")
    if np.any(lo.w > hi.w):
        raise InvariantError("paired chains are not pointwise ordered")
    if np.any(lo.system.static > hi.system.static + 1e-12):
        raise InvariantError("lower chain has a larger static field than the upper chain")


def monotone_pair_sweep(
    state_lo: ChainState, state_hi: ChainState, spec: ModelSpec | None = None
) -> tuple[ChainState, ChainState]:
    """Advance two ordered chains by one coupled heat-bath sweep.

    Both chains use the site order and uniforms drawn from ``state_lo.rng``.
    Raises :class:`InvariantError` if the pointwise order is ever lost.
    """
    _check_pair(state_lo, state_hi)
    beta = (spec or state_lo.system.spec).beta
    s = state_lo.system
    orders, u = draw_sweeps(state_lo.rng, 1, s.n_free)
    rec = np.zeros((1, 2), dtype=np.int8)
    bad = _kernels.heatbath_pair_batch(
        state_lo.w, state_lo.field, state_hi.w, state_hi.field, s.J, s.free_idx, beta, orders, u, -1, rec, 0
    )
    state_lo.sweep_count += 1
    state_hi.sweep_count += 1
    if bad >= 0:
        raise InvariantError("monotone coupling lost pointwise order")
    return state_lo, state_hi


@dataclass
class PairRecord:
    """Probe spins of a coupled pair after every sweep."""

    lo: np.ndarray
    hi: np.ndarray
    sweeps_total: int
    sweeps_burnin: int


def run_monotone_pair(
    state_lo: ChainState, state_hi: ChainState, sweeps: int, burnin: int, probe: int
) -> PairRecord:
    """Coupled heat-bath run recording the spin at site ``probe`` in both chains."""
    _check_pair(state_lo, state_hi)
    s = state_lo.system
    beta = s.spec.beta
    k = s.window.index(probe)
    rec = np.zeros((sweeps, 2), dtype=np.int8)
    B = _batch_size(s.n_free)
    t = 0
    while t < sweeps:
        nb = min(B, sweeps - t)
        orders, u = draw_sweeps(state_lo.rng, nb, s.n_free)
        bad = _kernels.heatbath_pair_batch(
            state_lo.w, state_lo.field, state_hi.w, state_hi.field, s.J, s.free_idx, beta, orders, u, k, rec, t
        )
        if bad >= 0:
            raise InvariantError(f"monotone coupling lost pointwise order at sweep {bad}")
        t += nb
    state_lo.sweep_count += sweeps
    state_hi.sweep_count += sweeps
    return PairRecord(rec[burnin:, 0].copy(), rec[burnin:, 1].copy(), sweeps, burnin)


@dataclass(eq=False)
class RunStats:
    window: Window
    profile: np.ndarray
    std_errors: np.ndarray
    interface_samples: np.ndarray
    sweeps_total: int
    sweeps_burnin: int
    seed: int
    acceptance_rate: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.profile.shape != (self.window.size,):
            raise DysonError("profile length must equal the window size")
        if not np.all(np.isfinite(self.std_errors)):
            raise DysonError("non-finite standard errors")

    @property
    def sites(self) -> np.ndarray:
        return self.window.sites()

    def magnetization(self, site: int) -> tuple[float, float]:
        k = self.window.index(site)
        return float(self.profile[k]), float(self.std_errors[k])

    def profile_rows(self):
        for x, m, se in zip(self.sites, self.profile, self.std_errors):
            yield int(x), float(m), float(se)

    def to_json(self) -> dict:
        return {
            "window": [self.window.lo, self.window.hi],
            "seed": self.seed,
            "sweeps_total": self.sweeps_total,
            "sweeps_burnin": self.sweeps_burnin,
            "acceptance_rate": self.acceptance_rate,
            "params": self.params,
            "profile": [float(v) for v in self.profile],
            "std_errors": [float(v) for v in self.std_errors],
            "interface_samples": [int(v) for v in self.interface_samples],
        }

    def write_csv(self, path) -> None:
        from .io import write_csv

        write_csv(path, ["site", "magnetization", "std_error"], self.profile_rows())

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")


def run(
    spec: ModelSpec,
    window: Window,
    bc: BoundaryRule,
    pattern: ConditioningPattern | None = None,
    sweeps: int = 10_000,
    burnin: int = 1_000,
    seed: int = 0,
    *,
    method: str = "metropolis",
    init=None,
    stream: int = 0,
) -> RunStats:
    """Sample ``sweeps`` sweeps and measure after each sweep past ``burnin``."""
    if not sweeps > burnin >= 0:
        raise DysonError(f"need sweeps > burnin >= 0, got sweeps={sweeps}, burnin={burnin}")
    n_meas = sweeps - burnin
    if n_meas < N_BLOCKS:
        raise DysonError(f"need at least {N_BLOCKS} measured sweeps")
    if n_meas > MAX_SAMPLES:
        raise CapacityError(f"{n_meas} measured sweeps exceed the cap of {MAX_SAMPLES}")
    if method not in METHODS:
        raise DysonError(f"unknown update method {method!r}")
    kernel = _kernels.metropolis_batch if method == "metropolis" else _kernels.heatbath_batch

    state = ChainState.start(spec, window, bc, pattern, init=init, seed=seed, stream=stream)
    s = state.system
    per_block = n_meas // N_BLOCKS
    block_of = np.full(sweeps, -1, dtype=np.int64)
    block_of[burnin : burnin + per_block * N_BLOCKS] = np.arange(per_block * N_BLOCKS) // per_block
    block_sums = np.zeros((N_BLOCKS, window.size))
    cuts = np.zeros(sweeps, dtype=np.int64)

    B = _batch_size(s.n_free)
    accepted = 0
    t = 0
    while t < sweeps:
        nb = min(B, sweeps - t)
        orders, u = draw_sweeps(state.rng, nb, s.n_free)
        accepted += kernel(
            state.w, state.field, s.J, s.free_idx, spec.beta, orders, u,
            block_of, block_sums, cuts, s.measured, s.center2, t,
        )
        t += nb
    state.sweep_count = sweeps

    means = block_sums / per_block
    profile = means.mean(axis=0)
    se = means.std(axis=0, ddof=1) / np.sqrt(N_BLOCKS)
    samples = cuts[burnin : burnin + per_block * N_BLOCKS] + window.lo
    rate = accepted / max(1, sweeps * s.n_free)
    params = {
        "alpha": spec.alpha, "beta": spec.beta, "nn_boost": spec.nn_boost, "field_h": spec.field_h,
        "bc": bc.kind, "radius": bc.radius, "method": method, "stream": stream,
    }
    return RunStats(window, profile, se, samples, sweeps, burnin, seed, rate, params)


def interface_mean_se(stats: RunStats) -> tuple[float, float]:
    x = stats.interface_samples.astype(float)
    return float(x.mean()), float(block_se(x))
