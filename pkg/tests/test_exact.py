import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyson_lab.exact import (
    CapacityError,
    conditional,
    conditional_distribution,
    enumerate_window,
    fkg_dominates,
    interface_cuts,
    interface_distribution,
    magnetization,
    upper_sets,
)
from dyson_lab.io import read_csv
from dyson_lab.model import (
    BoundaryRule,
    ConditioningPattern,
    Configuration,
    DomainError,
    ModelSpec,
    Window,
    single_site_spec,
    window_energy,
)

R = 80


def brute_force(spec, window, bc, pattern=None):
    """Independent oracle: Boltzmann weights from window_energy over itertools.product."""
    free = [x for x in window.sites() if not (pattern and pattern.frozen_mask(window)[x - window.lo])]
    weights = {}
    for combo in itertools.product([-1, 1], repeat=len(free)):
        c = Configuration.constant(window, 1)
        s = c.spins.copy()
        for x, v in zip(free, combo):
            s[x - window.lo] = v
        c = Configuration(window, s)
        if pattern:
            c = pattern.apply(c)
        weights[tuple(c.spins.tolist())] = math.exp(-spec.beta * window_energy(spec, c, bc, pattern))
    Z = sum(weights.values())
    return {k: v / Z for k, v in weights.items()}, Z


RULES = [BoundaryRule.plus(R), BoundaryRule.minus(R), BoundaryRule.free(R), BoundaryRule.dobrushin(R),
         BoundaryRule.explicit([(-5, -1, 1), (6, 9, -1)], 0, R)]


@pytest.mark.parametrize("bc", RULES, ids=lambda b: b.kind)
@pytest.mark.parametrize("n", [1, 3, 5])
def test_enumeration_matches_brute_force(bc, n):
    spec = ModelSpec(1.6, 0.7, nn_boost=0.2, field_h=0.1)
    w = Window(0, n - 1)
    probs, Z = brute_force(spec, w, bc)
    dist = enumerate_window(spec, w, bc)
    assert dist.log_partition == pytest.approx(math.log(Z), abs=1e-10)
    rows = dist.window_spins()
    for k, p in enumerate(dist.probs):
        assert p == pytest.approx(probs[tuple(rows[k].tolist())], abs=1e-12)


def test_enumeration_with_pattern_matches_brute_force():
    spec = ModelSpec(1.5, 1.1)
    w = Window(0, 5)
    pat = ConditioningPattern(frozen=[(0, 1, [1, -1])], decoupled=[(3, 4)])
    probs, Z = brute_force(spec, w, BoundaryRule.dobrushin(R), pat)
    dist = enumerate_window(spec, w, BoundaryRule.dobrushin(R), pat)
    rows = dist.window_spins()
    assert dist.n_free == 4
    for k, p in enumerate(dist.probs):
        assert p == pytest.approx(probs[tuple(rows[k].tolist())], abs=1e-12)


def test_single_site_infinite_temperature():
    d = enumerate_window(ModelSpec(1.5, 0.0), Window(0, 0), BoundaryRule.plus(R))
    assert d.probs.tolist() == pytest.approx([0.5, 0.5], abs=1e-15)


def test_two_spin_closed_form():
    beta = 1.0
    d = enumerate_window(ModelSpec(1.7, beta), Window(0, 1), BoundaryRule.free(R))
    z = 2 * math.exp(beta) + 2 * math.exp(-beta)
    # bitmask bit i set means site i is +
    p = d.probs
    assert p[0b11] == pytest.approx(math.exp(beta) / z, abs=1e-15)
    assert p[0b00] == pytest.approx(math.exp(beta) / z, abs=1e-15)
    assert p[0b01] == pytest.approx(math.exp(-beta) / z, abs=1e-15)
    assert p[0b10] == pytest.approx(math.exp(-beta) / z, abs=1e-15)


def test_normalization_and_non_nullness():
    for bc in RULES:
        d = enumerate_window(ModelSpec(1.5, 20.0), Window(-2, 4), bc)
        assert d.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(d.probs > 0)
        assert np.isfinite(d.log_partition)


def test_magnetization_examples():
    spec = ModelSpec(1.5, 1.0)
    d = enumerate_window(spec, Window(0, 7), BoundaryRule.plus(R))
    assert all(magnetization(d, x) > 0 for x in range(8))
    d0 = enumerate_window(ModelSpec(1.5, 0.0), Window(0, 4), BoundaryRule.plus(R))
    assert all(abs(magnetization(d0, x)) < 1e-15 for x in range(5))
    dp = enumerate_window(spec, Window(0, 4), BoundaryRule.plus(R))
    dm = enumerate_window(spec, Window(0, 4), BoundaryRule.minus(R))
    for x in range(5):
        assert magnetization(dp, x) == pytest.approx(-magnetization(dm, x), abs=1e-14)


def test_magnetization_pinned_ten_sites():
    # With a plus sea on both sides every site sees the same field.
    d = enumerate_window(ModelSpec(1.5, 2.0), Window(0, 9), BoundaryRule.plus(1000))
    m = [magnetization(d, x) for x in range(10)]
    assert min(m) >= 0.9
    assert m == pytest.approx([0.999999997218] * 10, abs=1e-11)


def test_capacity_error():
    with pytest.raises(CapacityError):
        enumerate_window(ModelSpec(1.5, 1.0), Window(0, 9), BoundaryRule.plus(R), cap=8)


def test_conditional_examples():
    d0 = enumerate_window(ModelSpec(1.5, 0.0), Window(0, 3), BoundaryRule.dobrushin(R))
    assert conditional(d0, {}, 2) == pytest.approx(0.5)
    spec = ModelSpec(1.5, 1.3)
    w = Window(0, 4)
    d = enumerate_window(spec, w, BoundaryRule.plus(R))
    fixed = {x: 1 for x in range(5) if x != 2}
    direct = conditional(d, fixed, 2)
    ext = BoundaryRule.plus(R).with_overrides(Window(2, 2), fixed)
    assert direct == pytest.approx(single_site_spec(spec, 2, ext).p_plus, abs=1e-12)
    with pytest.raises(DomainError):
        conditional(d, {7: 1}, 2)


@given(st.lists(st.sampled_from([-1, 1]), min_size=3, max_size=3))
def test_conditional_flip_symmetry(vals):
    spec = ModelSpec(1.5, 0.9)
    w = Window(0, 3)
    dp = enumerate_window(spec, w, BoundaryRule.dobrushin(R))
    dm = enumerate_window(spec, w, BoundaryRule.dobrushin(R).flipped())
    fixed = dict(zip((0, 1, 3), vals))
    flipped = {k: -v for k, v in fixed.items()}
    assert conditional(dp, fixed, 2) + conditional(dm, flipped, 2) == pytest.approx(1.0, abs=1e-12)


def _dlr_case(spec, window, bc, sub_sites, values):
    dist = enumerate_window(spec, window, bc)
    outside = [int(x) for x in window.sites() if x not in sub_sites]
    fixed = dict(zip(outside, values))
    cond = conditional_distribution(dist, fixed)
    sub = Window(min(sub_sites), max(sub_sites))
    direct = enumerate_window(spec, sub, bc.with_overrides(sub, fixed))
    for x in sub.sites():
        assert magnetization(cond, int(x)) == pytest.approx(magnetization(direct, int(x)), abs=1e-10)


@pytest.mark.parametrize("bc", RULES[:4], ids=lambda b: b.kind)
def test_dlr_consistency_small_grid(bc):
    spec = ModelSpec(1.5, 1.0, field_h=0.05)
    rng = np.random.default_rng(3)
    for n in (3, 5):
        w = Window(-1, n - 2)
        for lo in w.sites():
            for size in (1, 2):
                sub = [int(x) for x in range(lo, lo + size) if x <= w.hi]
                if len(sub) != size:
                    continue
                vals = rng.choice([-1, 1], n - size).tolist()
                _dlr_case(spec, w, bc, sub, vals)


def test_dedekind_counts():
    assert [len(upper_sets(n)) for n in range(0, 5)] == [2, 3, 6, 20, 168]


def test_fkg_examples():
    spec = ModelSpec(1.5, 1.0)
    w = Window(0, 3)
    dp = enumerate_window(spec, w, BoundaryRule.plus(R))
    dm = enumerate_window(spec, w, BoundaryRule.minus(R))
    res = fkg_dominates(dp, dm)
    assert res.dominates and res.method == "exhaustive"
    assert fkg_dominates(dp, dp).dominates
    rev = fkg_dominates(dm, dp)
    assert not rev.dominates and rev.witness
    d0a = enumerate_window(ModelSpec(1.5, 0.0), w, BoundaryRule.plus(R))
    d0b = enumerate_window(ModelSpec(1.5, 0.0), w, BoundaryRule.minus(R))
    assert fkg_dominates(d0a, d0b).dominates and fkg_dominates(d0b, d0a).dominates


def test_fkg_closure_matches_exhaustive_on_small_case():
    from dyson_lab import exact

    spec = ModelSpec(1.5, 0.6)
    w = Window(0, 4)
    da = enumerate_window(spec, w, BoundaryRule.dobrushin(R))
    db = enumerate_window(spec, w, BoundaryRule.plus(R))
    diff = da.probs - db.probs
    sums = exact._set_sums(upper_sets(5), diff)
    worst_closure, _ = exact._max_violation_closure(diff, 5)
    assert worst_closure == pytest.approx(float(sums.max()), abs=1e-12)


def test_fkg_closure_path_for_larger_windows():
    spec = ModelSpec(1.5, 1.0)
    w = Window(0, 7)
    res = fkg_dominates(enumerate_window(spec, w, BoundaryRule.plus(R)), enumerate_window(spec, w, BoundaryRule.dobrushin(R)))
    assert res.dominates and res.method == "closure"


def test_fkg_rejects_mismatched_windows():
    spec = ModelSpec(1.5, 1.0)
    with pytest.raises(DomainError):
        fkg_dominates(enumerate_window(spec, Window(0, 2), BoundaryRule.plus(R)),
                      enumerate_window(spec, Window(0, 3), BoundaryRule.plus(R)))


def test_interface_estimator_examples():
    w = Window(-4, 4)
    step = np.where(w.sites() < 0, -1, 1).astype(np.int8)
    assert interface_cuts(w, step[None, :])[0] == 0
    plus = np.ones(w.size, dtype=np.int8)
    assert interface_cuts(w, plus[None, :])[0] == -4


def test_interface_distribution_examples():
    spec = ModelSpec(1.5, 20.0)
    law = interface_distribution(enumerate_window(spec, Window(-3, 3), BoundaryRule.dobrushin(1000)))
    assert sum(law.values()) == pytest.approx(1.0)
    mode = max(law, key=law.get)
    assert mode == 0 and all(law[0] > v for c, v in law.items() if c != 0)
    law0 = interface_distribution(enumerate_window(ModelSpec(1.5, 0.0), Window(-3, 3), BoundaryRule.dobrushin(R)))
    for c in range(1, 4):
        assert law0[c] == pytest.approx(law0[-c], abs=1e-14)
    law1 = interface_distribution(enumerate_window(ModelSpec(1.5, 1.0), Window(-1, 1), BoundaryRule.dobrushin(R)))
    assert len(law1) == 3 and sum(law1.values()) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        interface_distribution(enumerate_window(spec, Window(-1, 1), BoundaryRule.plus(R)))


def test_csv_dump(tmp_path):
    d = enumerate_window(ModelSpec(1.5, 1.0), Window(0, 2), BoundaryRule.plus(R))
    d.write_csv(tmp_path / "d.csv")
    raw = (tmp_path / "d.csv").read_bytes()
    assert raw.startswith(b"config_bitmask,energy,probability\n") and b"\r" not in raw
    rows = read_csv(tmp_path / "d.csv")
    assert len(rows) == 8
    assert sum(float(r["probability"]) for r in rows) == pytest.approx(1.0)
