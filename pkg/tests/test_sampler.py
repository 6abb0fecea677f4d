import json

import numpy as np
import pytest
from scipy import stats as sps

from dyson_lab.exact import enumerate_window, magnetization
from dyson_lab.model import (
    BoundaryRule,
    CapacityError,
    ConditioningPattern,
    Configuration,
    DysonError,
    ModelSpec,
    SpecificationError,
    Window,
)
from dyson_lab.sampler import (
    ChainState,
    InvariantError,
    heatbath_sweep,
    metropolis_sweep,
    monotone_pair_sweep,
    run,
    run_monotone_pair,
)

R = 100


def test_same_seed_identical_runs():
    spec = ModelSpec(1.5, 1.0)
    w = Window(-5, 5)
    a = run(spec, w, BoundaryRule.dobrushin(R), None, 3000, 300, seed=11)
    b = run(spec, w, BoundaryRule.dobrushin(R), None, 3000, 300, seed=11)
    assert np.array_equal(a.profile, b.profile)
    assert np.array_equal(a.std_errors, b.std_errors)
    assert np.array_equal(a.interface_samples, b.interface_samples)
    c = run(spec, w, BoundaryRule.dobrushin(R), None, 3000, 300, seed=12)
    assert not np.array_equal(a.interface_samples, c.interface_samples)


def test_batched_and_single_sweeps_agree():
    spec = ModelSpec(1.5, 0.8)
    w = Window(0, 9)
    s1 = ChainState.start(spec, w, BoundaryRule.plus(R), init="random", seed=5)
    s2 = ChainState.start(spec, w, BoundaryRule.plus(R), init="random", seed=5)
    for _ in range(50):
        metropolis_sweep(s1)
    from dyson_lab.sampler import _advance
    from dyson_lab import _kernels

    _advance(s2, spec.beta, 50, _kernels.metropolis_batch)
    assert np.array_equal(s1.w, s2.w) and s1.sweep_count == s2.sweep_count == 50


def test_metropolis_infinite_temperature_accepts_everything():
    spec = ModelSpec(1.5, 0.0)
    w = Window(0, 7)
    s = ChainState.start(spec, w, BoundaryRule.plus(R), init="random", seed=1)
    before = s.w.copy()
    metropolis_sweep(s)
    assert np.array_equal(s.w, -before)
    st = run(spec, w, BoundaryRule.plus(R), None, 640, 0, seed=1)
    assert st.acceptance_rate == 1.0


def test_heatbath_infinite_temperature_profile_vanishes():
    spec = ModelSpec(1.5, 0.0)
    w = Window(0, 15)
    st = run(spec, w, BoundaryRule.plus(R), None, 20_000, 0, seed=2, method="heatbath")
    assert np.all(np.abs(st.profile) <= 4 * st.std_errors)


def test_frozen_sites_never_change():
    spec = ModelSpec(1.5, 0.5)
    w = Window(0, 9)
    pat = ConditioningPattern(frozen=[(2, 4, [-1, 1, -1])])
    s = ChainState.start(spec, w, BoundaryRule.plus(R), pat, init="random", seed=3)
    for _ in range(200):
        metropolis_sweep(s)
        assert s.config.spins[2:5].tolist() == [-1, 1, -1]
    st = run(spec, w, BoundaryRule.plus(R), pat, 1000, 100, seed=3)
    assert st.profile[2:5].tolist() == [-1.0, 1.0, -1.0]
    assert st.std_errors[2:5].tolist() == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("method", ["metropolis", "heatbath"])
@pytest.mark.parametrize("bc", [BoundaryRule.plus(R), BoundaryRule.dobrushin(R), BoundaryRule.free(R)],
                         ids=lambda b: b.kind)
def test_six_site_magnetization_matches_exact(method, bc):
    spec = ModelSpec(1.5, 0.5)
    w = Window(-3, 2)
    d = enumerate_window(spec, w, bc)
    st = run(spec, w, bc, None, 40_000, 2_000, seed=21, method=method)
    for x, m, se in st.profile_rows():
        assert abs(m - magnetization(d, x)) <= 4 * max(se, 1e-4)


def test_decoupled_sampling_matches_exact():
    spec = ModelSpec(1.5, 0.7)
    w = Window(0, 5)
    pat = ConditioningPattern(frozen=[(0, 0, -1)], decoupled=[(3, 4)])
    d = enumerate_window(spec, w, BoundaryRule.plus(R), pat)
    st = run(spec, w, BoundaryRule.plus(R), pat, 40_000, 2_000, seed=8, method="heatbath")
    for x, m, se in st.profile_rows():
        assert abs(m - magnetization(d, x)) <= 4 * max(se, 1e-4)


def test_detailed_balance_chi_square():
    spec = ModelSpec(1.5, 0.6)
    w = Window(0, 3)
    bc = BoundaryRule.dobrushin(R)
    d = enumerate_window(spec, w, bc)
    s = ChainState.start(spec, w, bc, init="random", seed=99)
    counts = np.zeros(16)
    weights = 1 << np.arange(4)
    for t in range(60_000):
        metropolis_sweep(s)
        if t % 3 == 0:
            bits = (s.w > 0).astype(int)
            counts[int(bits @ weights)] += 1
    expected = d.probs * counts.sum()
    chi2, p = sps.chisquare(counts, expected)
    assert p > 0.001


def test_monotone_pair_properties():
    spec = ModelSpec(1.5, 1.0)
    w = Window(0, 9)
    a = ChainState.start(spec, w, BoundaryRule.plus(R), init="plus", seed=4)
    b = ChainState.start(spec, w, BoundaryRule.plus(R), init="plus", seed=4)
    for _ in range(100):
        monotone_pair_sweep(a, b)
        assert np.array_equal(a.w, b.w)
    spec0 = ModelSpec(1.5, 0.0)
    lo = ChainState.start(spec0, w, BoundaryRule.minus(R), init="minus", seed=4)
    hi = ChainState.start(spec0, w, BoundaryRule.plus(R), init="plus", seed=4)
    monotone_pair_sweep(lo, hi)
    assert np.array_equal(lo.w, hi.w)


def test_monotone_pair_long_run_at_L64():
    spec = ModelSpec(1.5, 2.0)
    w = Window(-64, 64)
    lo = ChainState.start(spec, w, BoundaryRule.minus(R), init="minus", seed=7)
    hi = ChainState.start(spec, w, BoundaryRule.plus(R), init="plus", seed=7)
    rec = run_monotone_pair(lo, hi, 10_000, 0, probe=0)
    assert np.all(rec.lo <= rec.hi)
    assert np.all(lo.w <= hi.w)


def test_monotone_pair_rejects_unordered_start():
    spec = ModelSpec(1.5, 1.0)
    w = Window(0, 3)
    lo = ChainState.start(spec, w, BoundaryRule.plus(R), init="plus", seed=1)
    hi = ChainState.start(spec, w, BoundaryRule.plus(R), init="minus", seed=1)
    with pytest.raises(InvariantError):
        monotone_pair_sweep(lo, hi)


def test_all_plus_profile_positive_at_low_temperature():
    spec = ModelSpec(1.5, 2.0)
    st = run(spec, Window(0, 99), BoundaryRule.plus(1000), None, 2_000, 200, seed=1)
    assert np.all(st.profile > 0)


def test_run_argument_errors():
    spec = ModelSpec(1.5, 1.0)
    w = Window(0, 3)
    with pytest.raises(DysonError):
        run(spec, w, BoundaryRule.plus(R), None, 100, 100, seed=0)
    with pytest.raises(SpecificationError):
        run(spec, w, BoundaryRule.plus(R), ConditioningPattern(frozen=[(5, 6, 1)]), 1000, 10, seed=0)
    with pytest.raises(CapacityError):
        run(spec, Window(0, 10_000), BoundaryRule.plus(R), None, 1000, 10, seed=0)
    with pytest.raises(DysonError):
        run(spec, w, BoundaryRule.plus(R), None, 1000, 10, seed=0, method="wolff")


def test_initial_configuration_and_heatbath_sweep():
    spec = ModelSpec(1.5, 1.0)
    w = Window(0, 4)
    c = Configuration(w, [1, -1, 1, -1, 1])
    s = ChainState.start(spec, w, BoundaryRule.free(R), init=c, seed=0)
    assert s.config == c
    heatbath_sweep(s)
    assert s.sweep_count == 1


def test_run_stats_serialisation(tmp_path):
    spec = ModelSpec(1.5, 1.0)
    st = run(spec, Window(-2, 2), BoundaryRule.dobrushin(R), None, 640, 64, seed=5)
    st.write_csv(tmp_path / "p.csv")
    st.write_json(tmp_path / "p.json")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "site,magnetization,std_error" and len(lines) == 6
    data = json.loads((tmp_path / "p.json").read_text())
    assert data["seed"] == 5 and data["sweeps_total"] == 640 and len(data["interface_samples"]) == 576
