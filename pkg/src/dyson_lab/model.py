"""Couplings, boundary rules and energies for the one-dimensional Dyson model.

Sites are integers. Pair couplings are ``J(n) = n**-alpha`` with an optional
extra nearest-neighbour term; every long-range sum is truncated at a radius
``R`` and the neglected tail is bounded by :func:`uas_tail`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit, zeta

ALPHA_STAR = 3.0 - math.log(3.0) / math.log(2.0)


class DysonError(Exception):
    """Base class for all errors raised by dyson_lab."""


class SummabilityError(DysonError, ValueError):
    pass


class DomainError(DysonError, ValueError):
    pass


class SpecificationError(DysonError, ValueError):
    pass


class CapacityError(DysonError, ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    alpha: float
    beta: float
    nn_boost: float = 0.0
    field_h: float = 0.0

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise SummabilityError(f"alpha must exceed 1 for summable couplings, got {self.alpha}")
        if self.beta < 0:
            raise DomainError(f"beta must be >= 0, got {self.beta}")
        if self.nn_boost < 0:
            raise DomainError(f"nn_boost must be >= 0 (ferromagnetic), got {self.nn_boost}")

    def with_beta(self, beta: float) -> "ModelSpec":
        return ModelSpec(self.alpha, beta, self.nn_boost, self.field_h)

    def table(self, R: int) -> np.ndarray:
        """Coupling table ``t[n] = J(n)`` for ``0 <= n <= R`` (``t[0] = 0``)."""
        return _coupling_table(self.alpha, self.nn_boost, int(R))

    def coupling_sum(self, a, b):
        """``sum_{n=a}^{b} J(n)`` for integers ``1 <= a``; empty ranges give 0.

        Vectorised over ``a`` and ``b``. Uses Hurwitz zeta differences so that
        ranges of length 10**7 cost the same as short ones.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(a < 1):
            raise DomainError("coupling sums start at distance 1")
        empty = b < a
        bb = np.where(empty, a, b)
        s = zeta(self.alpha, a) - zeta(self.alpha, bb + 1.0)
        s = s + np.where(a == 1.0, self.nn_boost, 0.0)
        s = np.where(empty, 0.0, s)
        return s if s.ndim else float(s)


@lru_cache(maxsize=64)
def _coupling_table(alpha: float, nn_boost: float, R: int) -> np.ndarray:
    n = np.arange(R + 1, dtype=float)
    t = np.zeros(R + 1)
    t[1:] = n[1:] ** -alpha
    if R >= 1:
        t[1] += nn_boost
    t.setflags(write=False)
    return t


def coupling(spec: ModelSpec, n: int) -> float:
    if n < 1:
        raise DomainError(f"no coupling at distance {n}")
    return float(n) ** -spec.alpha + (spec.nn_boost if n == 1 else 0.0)


def uas_tail(spec: ModelSpec, R: int) -> float:
    """Upper bound on ``sum_{n>R} J(n)`` from the integral comparison."""
    if spec.alpha <= 1:
        raise SummabilityError("tail bound requires alpha > 1")
    if R < 1:
        raise DomainError("R must be >= 1")
    return R ** (1.0 - spec.alpha) / (spec.alpha - 1.0)


@dataclass(frozen=True)
class Window:
    lo: int
    hi: int

    def __post_init__(self):
        if self.hi < self.lo:
            raise DomainError(f"empty window [{self.lo}, {self.hi}]")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def __contains__(self, site) -> bool:
        return self.lo <= site <= self.hi

    def index(self, site: int) -> int:
        if site not in self:
            raise DomainError(f"site {site} outside window [{self.lo}, {self.hi}]")
        return site - self.lo

    @classmethod
    def symmetric(cls, L: int) -> "Window":
        return cls(-L, L)


@dataclass(frozen=True, eq=False)
class Configuration:
    window: Window
    spins: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.spins, dtype=np.int8)
        if s.shape != (self.window.size,):
            raise DomainError(f"expected {self.window.size} spins, got shape {s.shape}")
        if not np.all(np.abs(s) == 1):
            raise DomainError("spins must be +1 or -1")
        object.__setattr__(self, "spins", s)

    def __eq__(self, other):
        return (
            isinstance(other, Configuration)
            and self.window == other.window
            and np.array_equal(self.spins, other.spins)
        )

    def __getitem__(self, site: int) -> int:
        return int(self.spins[self.window.index(site)])

    def flipped(self, site: int | None = None) -> "Configuration":
        """Flip one site, or every site when ``site`` is None."""
        s = self.spins.copy()
        if site is None:
            s = -s
        else:
            s[self.window.index(site)] *= -1
        return Configuration(self.window, s)

    @classmethod
    def constant(cls, window: Window, spin: int) -> "Configuration":
        return cls(window, np.full(window.size, spin, dtype=np.int8))


# Boundary rules ----------------------------------------------------------------

_KINDS = ("plus", "minus", "free", "dobrushin", "explicit")


@dataclass(frozen=True)
class BoundaryRule:
    """Spins outside the window.

    ``explicit`` rules map closed ranges ``(a, b, spin)`` to fixed spins and use
    ``default`` elsewhere. A default of 0 means "no spin there" (free); a
    default of None makes any uncovered site within reach an error.
    """

    kind: str
    radius: int
    segments: tuple = ()
    default: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise SpecificationError(f"unknown boundary kind {self.kind!r}")
        if int(self.radius) < 1:
            raise SpecificationError("truncation radius must be >= 1")
        segs = tuple(sorted((int(a), int(b), int(s)) for a, b, s in self.segments))
        for a, b, s in segs:
            if b < a:
                raise SpecificationError(f"empty boundary range [{a}, {b}]")
            if s not in (-1, 0, 1):
                raise SpecificationError(f"boundary spin must be -1, 0 or +1, got {s}")
        for (a0, b0, _), (a1, _, _) in zip(segs, segs[1:]):
            if a1 <= b0:
                raise SpecificationError(f"overlapping boundary ranges at {a1}")
        if self.default not in (None, -1, 0, 1):
            raise SpecificationError(f"bad default spin {self.default!r}")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "radius", int(self.radius))

    @classmethod
    def plus(cls, R: int) -> "BoundaryRule":
        return cls("plus", R)

    @classmethod
    def minus(cls, R: int) -> "BoundaryRule":
        return cls("minus", R)

    @classmethod
    def free(cls, R: int) -> "BoundaryRule":
        return cls("free", R)

    @classmethod
    def dobrushin(cls, R: int) -> "BoundaryRule":
        return cls("dobrushin", R)

    @classmethod
    def explicit(cls, segments: Iterable, default: int | None, R: int) -> "BoundaryRule":
        return cls("explicit", R, tuple(segments), default)

    def spin_at(self, site: int) -> int:
        if self.kind == "plus":
            return 1
        if self.kind == "minus":
            return -1
        if self.kind == "free":
            return 0
        if self.kind == "dobrushin":
            return 1 if site >= 0 else -1
        for a, b, s in self.segments:
            if a <= site <= b:
                return s
        if self.default is None:
            raise SpecificationError(f"explicit boundary does not cover site {site}")
        return self.default

    def pieces(self, lo: int, hi: int) -> list[tuple[int, int, int]]:
        """Constant-spin pieces ``(a, b, spin)`` tiling ``[lo, hi]``."""
        if hi < lo:
            return []
        if self.kind in ("plus", "minus", "free"):
            return [(lo, hi, self.spin_at(lo))]
        if self.kind == "dobrushin":
            out = []
            if lo < 0:
                out.append((lo, min(hi, -1), -1))
            if hi >= 0:
                out.append((max(lo, 0), hi, 1))
            return out
        out = []
        cur = lo
        for a, b, s in self.segments:
            if b < cur or a > hi:
                continue
            if a > cur:
                out.append((cur, a - 1, self._default_for(cur, a - 1)))
            out.append((max(a, cur), min(b, hi), s))
            cur = min(b, hi) + 1
        if cur <= hi:
            out.append((cur, hi, self._default_for(cur, hi)))
        return out

    def _default_for(self, a: int, b: int) -> int:
        if self.default is None:
            raise SpecificationError(f"explicit boundary does not cover sites [{a}, {b}]")
        return self.default

    def exterior_pieces(self, window: Window) -> list[tuple[int, int, int]]:
        """Non-empty spin pieces within reach ``radius`` on both sides of the window."""
        R = self.radius
        left = self.pieces(window.lo - R, window.lo - 1)
        right = self.pieces(window.hi + 1, window.hi + R)
        return [p for p in left + right if p[2] != 0]

    def flipped(self) -> "BoundaryRule":
        """Global spin flip of the boundary."""
        if self.kind == "plus":
            return BoundaryRule.minus(self.radius)
        if self.kind == "minus":
            return BoundaryRule.plus(self.radius)
        if self.kind == "free":
            return self
        if self.kind == "dobrushin":
            # minus for i < 0, plus for i >= 0 flips to plus for i < 0, minus for i >= 0
            return BoundaryRule.explicit([(-(10**15), -1, 1), (0, 10**15, -1)], None, self.radius)
        default = None if self.default is None else -self.default
        return BoundaryRule.explicit([(a, b, -s) for a, b, s in self.segments], default, self.radius)

    def with_overrides(self, window: Window, fixed: Mapping[int, int]) -> "BoundaryRule":
        """Explicit rule equal to this one around ``window`` but with ``fixed`` spins imposed.

        Covers ``[window.lo - R, window.hi + R]``; anything beyond is free.
        """
        R = self.radius
        out: list[tuple[int, int, int]] = []
        for a, b, s in self.pieces(window.lo - R, window.hi + R):
            inside = sorted(k for k in fixed if a <= k <= b)
            cur = a
            for k in inside:
                if k > cur:
                    out.append((cur, k - 1, s))
                out.append((k, k, int(fixed[k])))
                cur = k + 1
            if cur <= b:
                out.append((cur, b, s))
        return BoundaryRule.explicit(out, 0, R)

    def dominated_by(self, other: "BoundaryRule", window: Window) -> bool:
        """Pointwise ``self <= other`` on every site within reach of ``window``."""
        R = max(self.radius, other.radius)
        cuts = set()
        for rule in (self, other):
            for a, b, _ in rule.pieces(window.lo - R, window.lo - 1) + rule.pieces(window.hi + 1, window.hi + R):
                cuts.add(a)
        return all(self.spin_at(c) <= other.spin_at(c) for c in cuts)


# Conditioning patterns ---------------------------------------------------------


@dataclass(frozen=True)
class ConditioningPattern:
    """Frozen blocks and decoupled blocks inside a window.

    ``frozen`` entries are ``(lo, hi, values)`` where ``values`` is one spin or a
    sequence of ``hi - lo + 1`` spins. ``decoupled`` entries ``(lo, hi)`` keep
    their internal couplings and lose all couplings to the rest of the system.
    """

    frozen: tuple = ()
    decoupled: tuple = ()

    def __post_init__(self):
        frozen = []
        for lo, hi, values in self.frozen:
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise SpecificationError(f"empty frozen range [{lo}, {hi}]")
            if np.ndim(values) == 0:
                vals = np.full(hi - lo + 1, int(values), dtype=np.int8)
            else:
                vals = np.asarray(values, dtype=np.int8)
                if vals.shape != (hi - lo + 1,):
                    raise SpecificationError(f"frozen range [{lo}, {hi}] needs {hi - lo + 1} spins")
            if not np.all(np.abs(vals) == 1):
                raise SpecificationError("frozen spins must be +1 or -1")
            vals.setflags(write=False)
            frozen.append((lo, hi, vals))
        decoupled = [(int(lo), int(hi)) for lo, hi in self.decoupled]
        for lo, hi in decoupled:
            if hi < lo:
                raise SpecificationError(f"empty decoupled range [{lo}, {hi}]")
        ranges = sorted([(lo, hi) for lo, hi, _ in frozen] + decoupled)
        for (a0, b0), (a1, _) in zip(ranges, ranges[1:]):
            if a1 <= b0:
                raise SpecificationError(f"pattern ranges overlap at site {a1}")
        object.__setattr__(self, "frozen", tuple(frozen))
        object.__setattr__(self, "decoupled", tuple(decoupled))

    def __eq__(self, other):
        if not isinstance(other, ConditioningPattern):
            return NotImplemented
        return self.decoupled == other.decoupled and len(self.frozen) == len(other.frozen) and all(
            a[:2] == b[:2] and np.array_equal(a[2], b[2]) for a, b in zip(self.frozen, other.frozen)
        )

    __hash__ = None

    def check_within(self, window: Window) -> None:
        for lo, hi, *_ in list(self.frozen) + list(self.decoupled):
            if lo < window.lo or hi > window.hi:
                raise SpecificationError(f"pattern range [{lo}, {hi}] outside window [{window.lo}, {window.hi}]")

    def frozen_mask(self, window: Window) -> np.ndarray:
        mask = np.zeros(window.size, dtype=bool)
        for lo, hi, _ in self.frozen:
            mask[lo - window.lo : hi - window.lo + 1] = True
        return mask

    def group_labels(self, window: Window) -> np.ndarray:
        """-1 for ordinary sites, otherwise the index of the decoupled block."""
        g = np.full(window.size, -1, dtype=np.int64)
        for k, (lo, hi) in enumerate(self.decoupled):
            g[lo - window.lo : hi - window.lo + 1] = k
        return g

    def apply(self, config: Configuration) -> Configuration:
        """Return ``config`` with the frozen spins written in."""
        s = config.spins.copy()
        for lo, hi, vals in self.frozen:
            s[lo - config.window.lo : hi - config.window.lo + 1] = vals
        return Configuration(config.window, s)


EMPTY_PATTERN = ConditioningPattern()


def alternating_spins(lo: int, hi: int) -> np.ndarray:
    """The configuration ``(-1)**i`` on ``[lo, hi]``."""
    i = np.arange(lo, hi + 1)
    return np.where(i % 2 == 0, 1, -1).astype(np.int8)


# Energies ----------------------------------------------------------------------


def _exterior_vector(bc: BoundaryRule, window: Window):
    """Spins on ``[lo - R, hi + R]`` with the window itself zeroed."""
    R = bc.radius
    ext = np.zeros(window.size + 2 * R, dtype=float)
    for a, b, s in bc.exterior_pieces(window):
        ext[a - (window.lo - R) : b - (window.lo - R) + 1] = s
    return ext


def window_energy(
    spec: ModelSpec,
    config: Configuration,
    bc: BoundaryRule,
    pattern: ConditioningPattern | None = None,
) -> float:
    """Energy of ``config`` given ``bc`` by explicit pair summation.

    Counts every pair with at least one site in the window and separation at
    most ``bc.radius``. Decoupled blocks of ``pattern`` only interact internally.
    """
    window = config.window
    R = bc.radius
    n = window.size
    J = spec.table(max(R, 1))
    s = config.spins.astype(float)
    groups = (pattern or EMPTY_PATTERN).group_labels(window)
    ext = _exterior_vector(bc, window)

    energy = 0.0
    # intra-window pairs
    for d in range(1, min(n, R + 1)):
        same = groups[d:] == groups[:-d]
        energy -= J[d] * float(np.sum(s[d:] * s[:-d] * same))
    # window-exterior pairs
    offsets = np.arange(1, R + 1)
    for i in range(n):
        if groups[i] >= 0:
            continue
        pos = i + R
        left = ext[pos - offsets]
        right = ext[pos + offsets]
        energy -= s[i] * float(np.dot(J[1:], left + right))
    energy -= spec.field_h * float(np.sum(s))
    return energy


def exterior_field(
    spec: ModelSpec,
    window: Window,
    bc: BoundaryRule,
    sites: Sequence[int] | np.ndarray,
) -> np.ndarray:
    """Field ``sum_j J(|j - x|) w_j`` on each ``x`` from boundary spins within reach."""
    x = np.asarray(sites, dtype=np.int64)
    R = bc.radius
    field_ = np.zeros(len(x))
    for a, b, s in bc.exterior_pieces(window):
        if b < window.lo:
            dmin, dmax = x - b, x - a
        else:
            dmin, dmax = a - x, b - x
        field_ += s * spec.coupling_sum(np.maximum(dmin, 1), np.minimum(dmax, R))
    return field_


def _local_field(spec, config, bc, site, pattern=None) -> float:
    window = config.window
    k = window.index(site)
    R = bc.radius
    groups = (pattern or EMPTY_PATTERN).group_labels(window)
    d = np.abs(window.sites() - site)
    mask = (d >= 1) & (d <= R) & (groups == groups[k])
    J = spec.table(min(max(int(d.max()), 1), R))
    h = float(np.sum(J[np.minimum(d[mask], R)] * config.spins[mask]))
    if groups[k] < 0:
        h += float(exterior_field(spec, window, bc, [site])[0])
    return h + spec.field_h


def flip_delta(
    spec: ModelSpec,
    config: Configuration,
    bc: BoundaryRule,
    site: int,
    pattern: ConditioningPattern | None = None,
) -> float:
    """``H(config with site flipped) - H(config)``."""
    if site not in config.window:
        raise DomainError(f"site {site} outside window")
    return 2.0 * config[site] * _local_field(spec, config, bc, site, pattern)


@dataclass(frozen=True)
class SiteConditional:
    p_plus: float
    half_width: float
    local_field: float


def _logistic(x):
    return expit(x)


def single_site_spec(spec: ModelSpec, site: int, exterior: BoundaryRule) -> SiteConditional:
    """Probability that ``site`` is +1 given the exterior spins.

    ``exterior`` is read on every site within its radius of ``site``; anything
    farther away is unknown, and ``half_width`` bounds how much it can move the
    answer.
    """
    w = Window(site, site)
    h = float(exterior_field(spec, w, exterior, [site])[0]) + spec.field_h
    p = float(_logistic(2.0 * spec.beta * h))
    if spec.beta == 0.0:
        return SiteConditional(p, 0.0, h)
    t = 2.0 * uas_tail(spec, exterior.radius)
    hi = float(_logistic(2.0 * spec.beta * (h + t)))
    lo = float(_logistic(2.0 * spec.beta * (h - t)))
    return SiteConditional(p, max(hi - p, p - lo), h)


@dataclass(frozen=True)
class AlternatingBlockEnergy:
    L0: int
    value: float
    bound: float


def alternating_block_energy(spec: ModelSpec, L0: int, exterior: BoundaryRule) -> AlternatingBlockEnergy:
    """Coupling sum between ``(-1)**i`` on ``[1, L0]`` and the exterior spins.

    Returns ``sum_{i in block} sum_{k outside} J(|k - i|) (-1)**i w_k`` (the
    Hamiltonian interaction term is its negative). For each exterior site the
    inner sum over the block alternates with decreasing magnitude, so it is at
    most the coupling to the nearest block site; summing those gives ``bound``,
    which holds for every exterior and every ``L0``.
    """
    if L0 < 1:
        raise DomainError("L0 must be >= 1")
    w = Window(1, L0)
    i = w.sites()
    sign = alternating_spins(1, L0).astype(float)
    field_ = exterior_field(spec, w, exterior, i)
    value = float(np.dot(sign, field_))
    bound = 2.0 * float(spec.coupling_sum(1, exterior.radius))
    return AlternatingBlockEnergy(L0, value, bound)
