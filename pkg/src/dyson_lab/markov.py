"""Finite-state Markov chains as nearest-neighbour Gibbs fields, and back.

Entropies are in nats.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import DomainError

POWER_TOL = 1e-14
POWER_MAXITER = 100_000


def _entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def perron(M: np.ndarray, tol: float = POWER_TOL, maxiter: int = POWER_MAXITER) -> tuple[float, np.ndarray]:
    """Perron eigenvalue and positive right eigenvector of a positive matrix."""
    M = np.asarray(M, dtype=float)
    v = np.full(M.shape[0], 1.0 / M.shape[0])
    lam = 0.0
    for _ in range(maxiter):
        u = M @ v
        lam_new = float(u.sum() / v.sum())
        u /= u.sum()
        if np.max(np.abs(u - v)) < tol:
            v = u
            lam = lam_new
            break
        v, lam = u, lam_new
    else:
        raise RuntimeError("power iteration did not converge")
    assert lam > 0 and np.all(v > 0), "Perron data must be positive for a positive matrix"
    return float((M @ v).sum() / v.sum()), v


def stationary(P: np.ndarray) -> np.ndarray:
    _, left = perron(np.asarray(P).T)
    return left / left.sum()


@dataclass(eq=False)
class ChainSpec:
    P: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 2:
            raise DomainError("P must be a square matrix with k >= 2")
        if np.any(P <= 0):
            raise DomainError("transition probabilities must be strictly positive")
        if np.max(np.abs(P.sum(axis=1) - 1)) > 1e-12:
            raise DomainError("rows of P must sum to 1")
        pi = np.asarray(self.pi, dtype=float)
        if np.any(pi <= 0) or abs(pi.sum() - 1) > 1e-10 or np.max(np.abs(pi @ P - pi)) > 1e-10:
            raise DomainError("pi is not the stationary distribution of P")
        self.P, self.pi = P, pi

    @property
    def k(self) -> int:
        return self.P.shape[0]

    @classmethod
    def from_matrix(cls, P) -> "ChainSpec":
        P = np.asarray(P, dtype=float)
        if np.any(P <= 0):
            raise DomainError("transition probabilities must be strictly positive")
        return cls(P, stationary(P))

    @classmethod
    def random(cls, k: int, rng: np.random.Generator) -> "ChainSpec":
        P = rng.random((k, k)) + 0.05
        return cls.from_matrix(P / P.sum(axis=1, keepdims=True))

    @classmethod
    def symmetric_binary(cls, p_stay: float) -> "ChainSpec":
        return cls.from_matrix([[p_stay, 1 - p_stay], [1 - p_stay, p_stay]])

    def to_json(self) -> dict:
        return {"k": self.k, "P": self.P.tolist(), "pi": self.pi.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "ChainSpec":
        P = np.asarray(data["P"], dtype=float)
        if "k" in data and P.shape != (data["k"], data["k"]):
            raise DomainError("matrix shape does not match k")
        return cls(P, np.asarray(data["pi"])) if "pi" in data else cls.from_matrix(P)


@dataclass(eq=False)
class NNFieldSpec:
    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1] or W.shape[0] < 2:
            raise DomainError("W must be a square matrix with k >= 2")
        if np.any(W <= 0):
            raise DomainError("pair weights must be strictly positive")
        self.W = W

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @classmethod
    def ising(cls, beta_J: float) -> "NNFieldSpec":
        s = np.array([1.0, -1.0])
        return cls(np.exp(beta_J * np.outer(s, s)))

    def to_json(self) -> dict:
        return {"k": self.k, "W": self.W.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "NNFieldSpec":
        return cls(np.asarray(data["W"], dtype=float))


def save_json(obj: ChainSpec | NNFieldSpec, path) -> None:
    Path(path).write_text(json.dumps(obj.to_json(), indent=1) + "\n")


def chain_to_field(chain: ChainSpec) -> NNFieldSpec:
    """The transition matrix itself serves as nearest-neighbour pair weights."""
    return NNFieldSpec(chain.P.copy())


def field_to_chain(field: NNFieldSpec) -> ChainSpec:
    """Chain whose paths have the field's Gibbs weights (Perron normalisation)."""
    lam, r = perron(field.W)
    _, l = perron(field.W.T)
    P = field.W * r[None, :] / (lam * r[:, None])
    P /= P.sum(axis=1, keepdims=True)
    pi = l * r
    return ChainSpec(P, pi / pi.sum())


def field_conditional(field: NNFieldSpec, a_left: int, a_right: int) -> np.ndarray:
    """Law of the middle site given both neighbours."""
    w = field.W[a_left, :] * field.W[:, a_right]
    return w / w.sum()


@dataclass(eq=False)
class GFunction:
    depth: int
    table: dict  # past tuple (oldest first) -> next-symbol distribution
    kernel: np.ndarray
    max_deviation: float  # largest gap between the table and kernel[last symbol]


def g_function(field: NNFieldSpec, depth: int) -> GFunction:
    """Next-symbol law given the last ``depth`` symbols, from stationary path weights."""
    if depth < 1:
        raise DomainError("depth must be >= 1")
    chain = field_to_chain(field)
    P, pi, k = chain.P, chain.pi, chain.k
    table = {}
    dev = 0.0
    for past in np.ndindex(*(k,) * depth):
        w = pi[past[0]]
        for a, b in zip(past, past[1:]):
            w *= P[a, b]
        joint = np.array([w * P[past[-1], b] for b in range(k)])
        cond = joint / joint.sum()
        table[past] = cond
        dev = max(dev, float(np.max(np.abs(cond - P[past[-1]]))))
    return GFunction(depth, table, P, dev)


def ks_entropy(chain: ChainSpec | np.ndarray, pi: np.ndarray | None = None) -> float:
    """Entropy rate ``-sum_a pi_a sum_b P_ab ln P_ab``.

    Accepts a raw matrix (with ``pi``) so that chains with zero entries can be
    evaluated too.
    """
    if isinstance(chain, ChainSpec):
        P, pi = chain.P, chain.pi
    else:
        P = np.asarray(chain, dtype=float)
        pi = stationary_any(P) if pi is None else np.asarray(pi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    return float(-np.sum(pi[:, None] * terms))


def stationary_any(P: np.ndarray) -> np.ndarray:
    """Stationary vector from the eigenvalue-1 left eigenvector (no positivity needed)."""
    vals, vecs = np.linalg.eig(np.asarray(P).T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    return v / v.sum()


def erasure_entropy_density(chain: ChainSpec, n: int) -> float:
    """``H(X_1..X_n | X_0, X_{n+1}) / n`` for the stationary chain."""
    if n < 1:
        raise DomainError("block length must be >= 1")
    h = ks_entropy(chain)
    joint = chain.pi[:, None] * np.linalg.matrix_power(chain.P, n + 1)
    return ((n + 1) * h + _entropy(chain.pi) - _entropy(joint)) / n


def path_entropy(chain: ChainSpec, length: int) -> float:
    """``H(X_0 .. X_{length-1})`` by listing every path (small cases only)."""
    P, pi, k = chain.P, chain.pi, chain.k
    probs = []
    for path in np.ndindex(*(k,) * length):
        w = pi[path[0]]
        for a, b in zip(path, path[1:]):
            w *= P[a, b]
        probs.append(w)
    return _entropy(np.array(probs))


@dataclass
class ErasureFit:
    n: np.ndarray
    erasure: np.ndarray
    h: float
    C: float  # fitted constant in erasure(n) - h ~ C / n
    r2: float


def erasure_convergence(chain: ChainSpec, ns) -> ErasureFit:
    """Least-squares fit of ``erasure(n) - h = C / n`` with its coefficient of determination."""
    ns = np.asarray(ns, dtype=int)
    h = ks_entropy(chain)
    e = np.array([erasure_entropy_density(chain, int(n)) for n in ns])
    gap = e - h
    x = 1.0 / ns
    C = float(x @ gap / (x @ x))
    ss_tot = float(((gap - gap.mean()) ** 2).sum())
    r2 = 1.0 - float(((gap - C * x) ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return ErasureFit(ns, e, h, C, r2)


def load_json(path) -> ChainSpec | NNFieldSpec:
    """Read a chain (has ``P``) or a field (has ``W``) from a JSON file."""
    data = json.loads(Path(path).read_text())
    if "P" in data:
        return ChainSpec.from_json(data)
    if "W" in data:
        return NNFieldSpec.from_json(data)
    raise DomainError("JSON object has neither 'P' nor 'W'")
