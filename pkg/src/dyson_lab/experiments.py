"""Drivers for the interface, repulsion, decoupling and one-sided-gap experiments.

All drivers are deterministic functions of their arguments and ``seed``.
Independent chains use streams ``0, 1, ...`` of the same seed and are
aggregated in stream order, so the worker count never changes a result.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .model import (
    BoundaryRule,
    ConditioningPattern,
    Configuration,
    DomainError,
    ModelSpec,
    SpecificationError,
    Window,
    alternating_spins,
    exterior_field,
    uas_tail,
)
from .sampler import ChainState, InvariantError, run, run_monotone_pair
from .stats import block_se, block_std_se
from .model import _logistic

log = logging.getLogger(__name__)

DEFAULT_RADIUS = 100_000
SMALLNESS = 0.1  # span * N**(1 - alpha) must not exceed this
FUTURE_FACTOR = 4  # free region to the right of the origin is FUTURE_FACTOR * L0 long


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("DYSON_LAB_THREADS", "1")))
    except ValueError:
        return 1


def _fan_out(fn, jobs: list, workers: int | None = None) -> list:
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def frozen_block_length(alpha: float, span: int, threshold: float = SMALLNESS) -> int:
    """Smallest ``N`` with ``span * N**(1 - alpha) <= threshold``."""
    span = max(int(span), 1)
    N = max(1, math.ceil((span / threshold) ** (1.0 / (alpha - 1.0))))
    while N > 1 and span * (N - 1) ** (1.0 - alpha) <= threshold:
        N -= 1
    while span * N ** (1.0 - alpha) > threshold:
        N += 1
    return N


def step_configuration(window: Window, cut: int) -> Configuration:
    """Minus left of ``cut``, plus from ``cut`` on."""
    s = np.where(window.sites() < cut, -1, 1)
    return Configuration(window, s)


# Interface localisation --------------------------------------------------------


@dataclass(eq=False)
class InterfaceEstimate:
    L: int
    samples: np.ndarray
    mean: float
    std: float
    se_mean: float
    se_std: float
    center: float = 0.0
    drift_warning: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.L < 1:
            raise DomainError("L must be >= 1")

    def tail_fraction(self, eps: float) -> float:
        """Fraction of samples farther than ``eps * L`` from the centre."""
        return float(np.mean(np.abs(self.samples - self.center) > eps * self.L))

    @classmethod
    def from_samples(cls, L: int, samples, center: float = 0.0, **params) -> "InterfaceEstimate":
        x = np.asarray(samples)
        xf = x.astype(float)
        std, se_std = block_std_se(xf)
        return cls(
            L, x, float(xf.mean()), std, float(block_se(xf)), se_std, center, _drifting(xf), dict(params)
        )


def _drifting(x: np.ndarray) -> bool:
    """Monotone drift of the interface mean over the second half of a run."""
    half = x[len(x) // 2 :]
    if len(half) < 64:
        return False
    q = np.array([c.mean() for c in np.array_split(half, 4)])
    steps = np.diff(q)
    monotone = np.all(steps > 0) or np.all(steps < 0)
    return bool(monotone and abs(q[-1] - q[0]) > 3.0 * block_se(half))


def _interface_chain(spec, L, sweeps, burnin, seed, stream, radius, method):
    w = Window.symmetric(L)
    stats = run(
        spec, w, BoundaryRule.dobrushin(radius), None, sweeps, burnin, seed,
        method=method, init=step_configuration(w, 0), stream=stream,
    )
    return stats.interface_samples


def interface_localization(
    spec: ModelSpec,
    L: int,
    sweeps: int,
    seed: int,
    *,
    beta: float | None = None,
    burnin: int | None = None,
    radius: int = DEFAULT_RADIUS,
    chains: int = 1,
    workers: int | None = None,
    method: str = "metropolis",
) -> InterfaceEstimate:
    """Interface point samples on ``[-L, L]`` with Dobrushin boundary conditions."""
    if beta is not None:
        spec = spec.with_beta(beta)
    burnin = sweeps // 10 if burnin is None else burnin
    jobs = [(spec, L, sweeps, burnin, seed, k, radius, method) for k in range(chains)]
    samples = np.concatenate(_fan_out(_interface_chain, jobs, workers))
    est = InterfaceEstimate.from_samples(
        L, samples, 0.0, alpha=spec.alpha, beta=spec.beta, sweeps=sweeps, burnin=burnin,
        seed=seed, chains=chains, radius=radius, method=method,
    )
    if est.drift_warning:
        log.warning("interface mean drifts over the second half of the run (L=%d)", L)
    return est


@dataclass
class ExponentFit:
    slope: float
    se: float
    ci_low: float
    ci_high: float
    intercept: float
    r2: float


def fluctuation_exponent(estimates: Sequence[InterfaceEstimate]) -> ExponentFit:
    """Slope of ``log std`` against ``log L`` with a 95% interval.

    Points are weighted by the propagated standard error of ``log std`` when
    every estimate carries one; otherwise the residual scatter sets the error.
    """
    Ls = sorted({e.L for e in estimates})
    if len(Ls) < 3:
        raise DomainError("need at least three distinct L values")
    x = np.log([e.L for e in estimates])
    y = np.log([e.std for e in estimates])
    sig = np.array([e.se_std / e.std if e.std > 0 else 0.0 for e in estimates])
    A = np.column_stack([np.ones_like(x), x])
    if np.all(sig > 0):
        wts = 1.0 / sig
        coef, *_ = np.linalg.lstsq(A * wts[:, None], y * wts, rcond=None)
        cov = np.linalg.inv((A * wts[:, None] ** 2).T @ A)
    else:
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        dof = max(len(y) - 2, 1)
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(A.T @ A)
    slope = float(coef[1])
    se = float(math.sqrt(max(cov[1, 1], 0.0)))
    resid = y - A @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(slope, se, slope - 1.96 * se, slope + 1.96 * se, float(coef[0]), r2)


# Entropic repulsion ------------------------------------------------------------


@dataclass(eq=False)
class RepulsionProfile:
    sites: np.ndarray
    magnetization: np.ndarray
    std_errors: np.ndarray
    N: int
    frozen_spin: int
    radius: int

    @property
    def wet_length(self) -> int:
        """Length of the leading run of sites with negative mean magnetisation."""
        nonneg = np.flatnonzero(self.magnetization >= 0)
        return int(nonneg[0]) if len(nonneg) else len(self.magnetization)

    def rows(self):
        for x, m, se in zip(self.sites, self.magnetization, self.std_errors):
            yield int(x), float(m), float(se)


def _frozen_block_rule(N: int, gap: int, spin: int, radius: int) -> BoundaryRule:
    """Frozen block ``[-gap - N, -gap - 1]`` with plus everywhere else."""
    return BoundaryRule.explicit([(-gap - N, -gap - 1, spin)], 1, radius)


def entropic_repulsion(
    spec: ModelSpec,
    L: int,
    N: int | None,
    sweeps: int,
    seed: int,
    *,
    frozen_spin: int = -1,
    burnin: int | None = None,
    radius: int | None = None,
    method: str = "metropolis",
) -> RepulsionProfile:
    """Magnetisation on ``[0, L]`` next to a frozen block of length ``N`` inside the plus phase."""
    N_min = frozen_block_length(spec.alpha, L)
    if N is None:
        N = N_min
    if L * N ** (1.0 - spec.alpha) > SMALLNESS:
        raise SpecificationError(
            f"frozen block N={N} violates L * N**(1 - alpha) <= {SMALLNESS}; need N >= {N_min}"
        )
    radius = 2 * (N + L) if radius is None else radius
    burnin = sweeps // 10 if burnin is None else burnin
    w = Window(0, L)
    bc = _frozen_block_rule(N, 0, frozen_spin, radius)
    init = step_configuration(w, L // 2 + 1) if frozen_spin < 0 else Configuration.constant(w, 1)
    stats = run(spec, w, bc, None, sweeps, burnin, seed, method=method, init=init)
    return RepulsionProfile(w.sites(), stats.profile, stats.std_errors, N, frozen_spin, radius)


# Decoupling stability ----------------------------------------------------------


@dataclass(eq=False)
class DecouplingResult:
    coupled: InterfaceEstimate
    decoupled: InterfaceEstimate
    L: int
    L0: int
    N: int
    block_energy: float
    contour_cost: float

    @property
    def shift(self) -> float:
        return self.decoupled.mean - self.coupled.mean

    @property
    def joint_se(self) -> float:
        return math.hypot(self.coupled.se_mean, self.decoupled.se_mean)

    @property
    def tolerance(self) -> float:
        return max(2.0 * self.joint_se, 0.05 * self.L)

    @property
    def stable(self) -> bool:
        return abs(self.shift) <= self.tolerance

    @property
    def within_budget(self) -> bool:
        return self.block_energy <= 0.5 * self.contour_cost


def block_coupling_energy(spec: ModelSpec, lo: int, hi: int, radius: int) -> float:
    """Total coupling between ``[lo, hi]`` and its complement (maximal interaction energy)."""
    w = Window(lo, hi)
    return float(exterior_field(spec, w, BoundaryRule.plus(radius), w.sites()).sum())


def decoupling_stability(
    spec: ModelSpec,
    L: int,
    L0: int,
    sweeps: int,
    seed: int,
    *,
    burnin: int | None = None,
    radius: int | None = None,
    method: str = "metropolis",
) -> DecouplingResult:
    """Interface on ``[0, L]`` beside a frozen minus block, with and without decoupling ``[0, L0 - 1]``."""
    if L0 >= L:
        raise DomainError("decoupled block must be shorter than L")
    if L0 < 0:
        raise DomainError("L0 must be >= 0")
    N = frozen_block_length(spec.alpha, L)
    radius = 2 * (N + L) if radius is None else radius
    burnin = sweeps // 10 if burnin is None else burnin
    w = Window(0, L)
    bc = _frozen_block_rule(N, 0, -1, radius)
    center = L / 2.0
    init = step_configuration(w, L // 2 + 1)
    coupled = run(spec, w, bc, None, sweeps, burnin, seed, method=method, init=init)
    pattern = ConditioningPattern(decoupled=[(0, L0 - 1)]) if L0 > 0 else None
    decoupled = run(spec, w, bc, pattern, sweeps, burnin, seed, method=method, init=init)
    params = dict(alpha=spec.alpha, beta=spec.beta, sweeps=sweeps, burnin=burnin, seed=seed)
    est_c = InterfaceEstimate.from_samples(L, coupled.interface_samples, center, **params)
    est_d = InterfaceEstimate.from_samples(L, decoupled.interface_samples, center, **params)
    energy = block_coupling_energy(spec, 0, L0 - 1, radius) if L0 > 0 else 0.0
    return DecouplingResult(est_c, est_d, L, L0, N, energy, L ** (2.0 - spec.alpha))


# One-sided gap -----------------------------------------------------------------


@dataclass(eq=False)
class GapCurve:
    L0: np.ndarray
    gaps: np.ndarray
    std_errors: np.ndarray
    p_plus: np.ndarray
    p_minus: np.ndarray
    N: np.ndarray
    R_future: np.ndarray
    sweeps: int
    burnin: int
    seed: int

    def __post_init__(self):
        if np.any(np.abs(self.gaps) > 2):
            raise InvariantError("gap outside [-2, 2]")

    def rows(self):
        for row in zip(self.L0, self.gaps, self.std_errors, self.p_plus, self.p_minus, self.N, self.R_future):
            yield int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]), int(row[5]), int(row[6])


def gap_geometry(alpha: float, L0: int, R_future: int | None = None) -> tuple[int, int]:
    """``(N, R_future)`` for an alternating block of length ``L0``."""
    R_future = FUTURE_FACTOR * L0 if R_future is None else int(R_future)
    if R_future < 0:
        raise DomainError("R_future must be >= 0")
    return frozen_block_length(alpha, L0 + R_future), R_future


def gap_setup(
    spec: ModelSpec, L0: int, past_spin: int, radius: int | None = None, R_future: int | None = None
):
    """Window, boundary rule and pattern for one arm of the gap experiment."""
    N, R_future = gap_geometry(spec.alpha, L0, R_future)
    radius = 2 * (N + L0 + R_future) if radius is None else radius
    w = Window(-L0, R_future)
    bc = _frozen_block_rule(N, L0, past_spin, radius)
    pattern = ConditioningPattern(frozen=[(-L0, -1, alternating_spins(-L0, -1))]) if L0 > 0 else None
    return w, bc, pattern


def _gap_point(spec, L0, sweeps, burnin, seed, stream, R_future):
    w, bc_minus, pattern = gap_setup(spec, L0, -1, R_future=R_future)
    _, bc_plus, _ = gap_setup(spec, L0, +1, R_future=R_future)
    lo = ChainState.start(spec, w, bc_minus, pattern, init="minus", seed=seed, stream=stream)
    hi = ChainState.start(spec, w, bc_plus, pattern, init="plus", seed=seed, stream=stream)
    rec = run_monotone_pair(lo, hi, sweeps, burnin, probe=0)
    return rec.lo, rec.hi


def g_gap(
    spec: ModelSpec,
    L0_list: Sequence[int],
    sweeps: int,
    seed: int,
    *,
    burnin: int | None = None,
    workers: int | None = None,
    R_future: int | None = None,
) -> GapCurve:
    """``P(sigma_0 = + | plus past) - P(sigma_0 = + | minus past)`` behind an alternating block.

    Both arms run as one monotone heat-bath pair sharing all randomness, so
    the plus-past chain dominates the minus-past chain sweep by sweep.
    """
    L0s = [int(x) for x in L0_list]
    if any(x < 0 for x in L0s):
        raise DomainError("L0 must be >= 0")
    burnin = sweeps // 10 if burnin is None else burnin
    jobs = [(spec, L0, sweeps, burnin, seed, k, R_future) for k, L0 in enumerate(L0s)]
    results = _fan_out(_gap_point, jobs, workers)
    gaps, ses, pp, pm, Ns, Rs = [], [], [], [], [], []
    for L0, (lo, hi) in zip(L0s, results):
        d = (hi == 1).astype(float) - (lo == 1).astype(float)
        gaps.append(float(d.mean()))
        ses.append(float(block_se(d)))
        pp.append(float(np.mean(hi == 1)))
        pm.append(float(np.mean(lo == 1)))
        N, R_f = gap_geometry(spec.alpha, L0, R_future)
        Ns.append(N)
        Rs.append(R_f)
    return GapCurve(
        np.array(L0s), np.array(gaps), np.array(ses), np.array(pp), np.array(pm),
        np.array(Ns), np.array(Rs), sweeps, burnin, seed,
    )


# Two-sided continuity ----------------------------------------------------------


@dataclass(eq=False)
class ContinuityProfile:
    m: np.ndarray
    uniform_bound: np.ndarray
    pointwise_bound: np.ndarray | None

    def rows(self):
        pw = self.pointwise_bound if self.pointwise_bound is not None else [float("nan")] * len(self.m)
        for m, u, p in zip(self.m, self.uniform_bound, pw):
            yield int(m), float(u), float(p)


def alternating_past_exterior(L0: int, radius: int) -> BoundaryRule:
    """Exterior of site 0: alternating spins on ``[-L0, -1]``, plus everywhere else."""
    vals = alternating_spins(-L0, -1)
    return BoundaryRule.explicit([(x, x, int(v)) for x, v in zip(range(-L0, 0), vals)], 1, radius)


def two_sided_continuity_profile(
    spec: ModelSpec, m_list: Sequence[int], center: BoundaryRule | None = None
) -> ContinuityProfile:
    """Certified oscillation of the single-site conditional at the origin.

    For each ``m`` the exterior within distance ``m`` is held fixed and
    everything farther away may change. ``uniform_bound`` is
    ``2 beta * uas_tail(m)`` and holds for every fixed inner exterior.
    ``pointwise_bound`` is the exact worst case around the exterior ``center``:
    the far field moves by at most ``2 uas_tail(m)`` either way and the
    logistic map is monotone.
    """
    ms = np.array([int(m) for m in m_list])
    if np.any(ms < 1):
        raise DomainError("m must be >= 1")
    tails = np.array([uas_tail(spec, int(m)) for m in ms])
    uniform = 2.0 * spec.beta * tails
    pointwise = None
    if center is not None:
        pointwise = np.empty(len(ms))
        w = Window(0, 0)
        for k, (m, t) in enumerate(zip(ms, tails)):
            h_in = float(exterior_field(spec, w, replace(center, radius=int(m)), [0])[0]) + spec.field_h
            hi = _logistic(2.0 * spec.beta * (h_in + 2.0 * t))
            lo = _logistic(2.0 * spec.beta * (h_in - 2.0 * t))
            pointwise[k] = float(hi - lo)
    return ContinuityProfile(ms, uniform, pointwise)
