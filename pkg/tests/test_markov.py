import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyson_lab.markov import (
    ChainSpec,
    NNFieldSpec,
    chain_to_field,
    erasure_convergence,
    erasure_entropy_density,
    field_conditional,
    field_to_chain,
    g_function,
    ks_entropy,
    load_json,
    path_entropy,
    save_json,
)
from dyson_lab.model import DomainError


def random_chain(seed, k):
    return ChainSpec.random(k, np.random.default_rng(seed))


def test_chain_validation():
    with pytest.raises(DomainError):
        ChainSpec.from_matrix([[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(DomainError):
        ChainSpec(np.array([[0.6, 0.5], [0.5, 0.5]]), np.array([0.5, 0.5]))
    with pytest.raises(DomainError):
        ChainSpec(np.array([[0.9, 0.1], [0.5, 0.5]]), np.array([0.5, 0.5]))
    with pytest.raises(DomainError):
        NNFieldSpec(np.array([[1.0, -1.0], [1.0, 1.0]]))


def test_uniform_chain_gives_constant_field():
    c = ChainSpec.from_matrix(np.full((3, 3), 1 / 3))
    f = chain_to_field(c)
    assert np.allclose(f.W, f.W[0, 0])
    assert field_conditional(f, 0, 2) == pytest.approx([1 / 3] * 3)
    assert field_to_chain(NNFieldSpec(np.ones((3, 3)))).P == pytest.approx(np.full((3, 3), 1 / 3))


def test_symmetric_binary_is_ising():
    for p in (0.5, 0.7, 0.9):
        f = chain_to_field(ChainSpec.symmetric_binary(p))
        two_beta_j = math.log(f.W[0, 0] / f.W[0, 1])
        assert math.exp(two_beta_j) == pytest.approx(p / (1 - p))
    f = chain_to_field(ChainSpec.symmetric_binary(0.5))
    assert math.log(f.W[0, 0] / f.W[0, 1]) == pytest.approx(0.0, abs=1e-15)


def test_ising_field_to_chain_closed_form():
    c = field_to_chain(NNFieldSpec.ising(0.5))
    expected = math.exp(0.5) / (math.exp(0.5) + math.exp(-0.5))
    assert expected == pytest.approx(0.7310585786, abs=1e-10)
    assert c.P[0, 0] == pytest.approx(expected, abs=1e-12)
    assert c.pi == pytest.approx([0.5, 0.5])


@given(st.integers(0, 10_000), st.sampled_from([2, 3, 4]))
def test_round_trip_identity(seed, k):
    c = random_chain(seed, k)
    back = field_to_chain(chain_to_field(c))
    assert np.abs(back.P - c.P).max() <= 1e-10
    assert np.abs(back.pi - c.pi).max() <= 1e-10


@given(st.integers(0, 10_000), st.sampled_from([2, 3, 4]))
def test_field_to_chain_reproduces_path_weights(seed, k):
    """Ratios of path probabilities match ratios of Gibbs weights with the same end points."""
    rng = np.random.default_rng(seed)
    W = rng.random((k, k)) + 0.1
    c = field_to_chain(NNFieldSpec(W))
    assert np.allclose(c.pi @ c.P, c.pi, atol=1e-12)
    a, b = 0, k - 1
    paths = list(itertools.product(range(k), repeat=2))
    pw = [c.P[a, x] * c.P[x, y] * c.P[y, b] for x, y in paths]
    gw = [W[a, x] * W[x, y] * W[y, b] for x, y in paths]
    assert np.allclose(np.array(pw) / sum(pw), np.array(gw) / sum(gw), atol=1e-12)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_field_conditional_matches_path_enumeration(k):
    c = random_chain(17 + k, k)
    f = chain_to_field(c)
    for a, b in itertools.product(range(k), repeat=2):
        joint = np.array([c.pi[a] * c.P[a, m] * c.P[m, b] for m in range(k)])
        assert np.abs(field_conditional(f, a, b) - joint / joint.sum()).max() <= 1e-15


def test_field_conditional_symmetric_bias():
    for p, biased in ((0.8, True), (0.3, False)):
        f = chain_to_field(ChainSpec.symmetric_binary(p))
        assert (field_conditional(f, 0, 0)[0] > 0.5) == biased


def test_g_function_examples():
    # W(a, b) = v_a v_b: every interior site carries v_a twice, so the law is v**2 normalised
    iid = NNFieldSpec(np.outer([1.0, 2.0], [1.0, 2.0]))
    g = g_function(iid, 3)
    pi = field_to_chain(iid).pi
    assert pi == pytest.approx([0.2, 0.8])
    for cond in g.table.values():
        assert cond == pytest.approx(pi)
    g = g_function(chain_to_field(ChainSpec.symmetric_binary(0.9)), 1)
    assert g.table[(0,)] == pytest.approx([0.9, 0.1])
    f = chain_to_field(random_chain(3, 3))
    g1, g5 = g_function(f, 1), g_function(f, 5)
    for past, cond in g5.table.items():
        assert np.abs(cond - g1.table[past[-1:]]).max() <= 1e-12
    assert g5.max_deviation <= 1e-12
    with pytest.raises(DomainError):
        g_function(f, 0)


def test_ks_entropy_examples():
    assert ks_entropy(ChainSpec.symmetric_binary(0.5)) == pytest.approx(math.log(2))
    perm = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert ks_entropy(perm) == 0.0
    h = ks_entropy(ChainSpec.symmetric_binary(0.9))
    assert h == pytest.approx(-(0.9 * math.log(0.9) + 0.1 * math.log(0.1)), abs=1e-15)
    assert h == pytest.approx(0.3251, abs=1e-4)


@given(st.integers(0, 10_000), st.sampled_from([2, 3, 4]))
def test_ks_entropy_range(seed, k):
    assert 0 <= ks_entropy(random_chain(seed, k)) <= math.log(k) + 1e-12


def test_erasure_iid_equals_ks():
    c = ChainSpec.from_matrix(np.tile([0.2, 0.5, 0.3], (3, 1)))
    for n in (1, 2, 7):
        assert erasure_entropy_density(c, n) == pytest.approx(ks_entropy(c), abs=1e-12)


def test_erasure_n1_brute_force():
    c = ChainSpec.symmetric_binary(0.9)
    # H(X1 | X0, X2) = H(X0, X1, X2) - H(X0, X2) over the 8 length-3 paths
    probs = {}
    for a, m, b in itertools.product(range(2), repeat=3):
        probs[(a, m, b)] = c.pi[a] * c.P[a, m] * c.P[m, b]
    ends = {}
    for (a, m, b), p in probs.items():
        ends[(a, b)] = ends.get((a, b), 0.0) + p
    H = lambda ps: -sum(p * math.log(p) for p in ps)
    expected = H(probs.values()) - H(ends.values())
    assert erasure_entropy_density(c, 1) == pytest.approx(expected, abs=1e-14)
    assert path_entropy(c, 3) == pytest.approx(H(probs.values()), abs=1e-14)


def test_erasure_converges_like_one_over_n():
    c = ChainSpec.symmetric_binary(0.9)
    fit = erasure_convergence(c, np.arange(4, 65))
    assert abs(fit.erasure[-1] - fit.h) <= 0.02
    assert fit.r2 >= 0.99
    assert np.all(np.abs(fit.erasure - fit.h) <= abs(fit.C) * 2 / fit.n)


@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_erasure_never_exceeds_entropy_rate(seed, k):
    c = random_chain(seed, k)
    h = ks_entropy(c)
    vals = [erasure_entropy_density(c, n) for n in (1, 2, 5, 20)]
    assert all(v <= h + 1e-12 for v in vals)
    # n * (h - erasure(n)) is the information the two end points carry about the block
    info = [n * (h - v) for n, v in zip((1, 2, 5, 20), vals)]
    assert all(i >= -1e-12 for i in info)


def test_json_round_trip(tmp_path):
    c = random_chain(5, 3)
    save_json(c, tmp_path / "c.json")
    back = load_json(tmp_path / "c.json")
    assert isinstance(back, ChainSpec) and np.allclose(back.P, c.P)
    f = chain_to_field(c)
    save_json(f, tmp_path / "f.json")
    assert np.allclose(load_json(tmp_path / "f.json").W, f.W)
    (tmp_path / "bad.json").write_text('{"x": 1}')
    with pytest.raises(DomainError):
        load_json(tmp_path / "bad.json")
