"""Fast invariant suite behind ``dyson-lab check``. Each check takes well under a second."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .exact import conditional, enumerate_window, fkg_dominates, magnetization
from .markov import ChainSpec, chain_to_field, erasure_entropy_density, field_to_chain, ks_entropy
from .model import BoundaryRule, Configuration, ModelSpec, Window, flip_delta, window_energy
from .sampler import ChainState, InvariantError, run_monotone_pair

R = 200


def _flip_delta_consistency() -> str:
    spec = ModelSpec(1.5, 1.0, field_h=0.1)
    rng = np.random.default_rng(0)
    w = Window(-3, 4)
    worst = 0.0
    for bc in (BoundaryRule.plus(R), BoundaryRule.dobrushin(R), BoundaryRule.free(R)):
        c = Configuration(w, np.where(rng.random(w.size) < 0.5, 1, -1))
        for x in w.sites():
            d = flip_delta(spec, c, bc, int(x))
            e = window_energy(spec, c.flipped(int(x)), bc) - window_energy(spec, c, bc)
            worst = max(worst, abs(d - e))
    assert worst < 1e-12, worst
    return f"max |delta - energy difference| = {worst:.1e}"


def _two_spin_closed_form() -> str:
    spec = ModelSpec(1.8, 0.7)
    d = enumerate_window(spec, Window(0, 1), BoundaryRule.free(R))
    z = 2 * math.exp(0.7) + 2 * math.exp(-0.7)
    assert abs(d.log_partition - math.log(z)) < 1e-12
    return f"log Z = {d.log_partition:.6f}"


def _dlr_single_site() -> str:
    spec = ModelSpec(1.5, 0.8)
    w = Window(0, 4)
    bc = BoundaryRule.plus(R)
    dist = enumerate_window(spec, w, bc)
    fixed = {0: -1, 1: 1, 3: 1, 4: -1}
    direct = conditional(dist, fixed, 2)
    sub = enumerate_window(spec, Window(2, 2), bc.with_overrides(w, fixed))
    p = (1 + magnetization(sub, 2)) / 2
    assert abs(direct - p) < 1e-10, (direct, p)
    return f"|difference| = {abs(direct - p):.1e}"


def _fkg_plus_minus() -> str:
    spec = ModelSpec(1.5, 1.0)
    w = Window(0, 4)
    res = fkg_dominates(enumerate_window(spec, w, BoundaryRule.plus(R)), enumerate_window(spec, w, BoundaryRule.minus(R)))
    assert res.dominates
    return f"method={res.method}"


def _monotone_pair() -> str:
    spec = ModelSpec(1.5, 1.0)
    w = Window(0, 31)
    lo = ChainState.start(spec, w, BoundaryRule.minus(R), init="minus", seed=1)
    hi = ChainState.start(spec, w, BoundaryRule.plus(R), init="plus", seed=1)
    try:
        run_monotone_pair(lo, hi, 200, 0, probe=0)
    except InvariantError as exc:
        raise AssertionError(str(exc)) from exc
    assert np.all(lo.w <= hi.w)
    return "200 coupled sweeps ordered"


def _bridge_roundtrip() -> str:
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in (2, 3, 4):
        c = ChainSpec.random(k, rng)
        worst = max(worst, float(np.abs(field_to_chain(chain_to_field(c)).P - c.P).max()))
    assert worst < 1e-10
    return f"max error {worst:.1e}"


def _erasure_bound() -> str:
    c = ChainSpec.symmetric_binary(0.9)
    h = ks_entropy(c)
    vals = [erasure_entropy_density(c, n) for n in (1, 4, 16, 64)]
    assert all(v <= h + 1e-12 for v in vals)
    return f"h = {h:.4f}, erasure(64) = {vals[-1]:.4f}"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("flip_delta matches energy differences", _flip_delta_consistency),
    ("two-spin partition function closed form", _two_spin_closed_form),
    ("single-site DLR identity", _dlr_single_site),
    ("FKG: plus dominates minus", _fkg_plus_minus),
    ("monotone coupling keeps order", _monotone_pair),
    ("chain/field round trip", _bridge_roundtrip),
    ("erasure entropy below entropy rate", _erasure_bound),
]


def run_checks(out=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            detail = fn()
            out(f"PASS  {name}: {detail}")
        except AssertionError as exc:
            ok = False
            out(f"FAIL  {name}: {exc}")
    return ok
