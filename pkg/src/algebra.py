"""
Algebraic checks of the ansatz: word reduction for the 2-species algebra, the
quadratic relations of the fundamental symbols, the local generator, hat
operators and the bond-by-bond stationarity residual.
"""

import logging
from functools import lru_cache, reduce
from typing import Literal

import numpy as np
import scipy.sparse

from src.core import Configuration, hop_allowed, reduce_species
from src.tensor import (
    FundamentalSymbol,
    TensorOperator,
    build_ansatz,
    build_fundamental,
    trace_weight,
)
from src.utils import PreconditionError, RelationCheck, RelationReport

log = logging.getLogger(__name__)

Word = str

_WORD_SYMBOLS = {
    "D": FundamentalSymbol.D,
    "E": FundamentalSymbol.E,
    "A": FundamentalSymbol.A,
}


def _check_word(w: Word) -> Word:
    if set(w) - set(_WORD_SYMBOLS):
        raise PreconditionError(f"Words are built from D, E and A, got {w!r}")
    return w


@lru_cache(maxsize=None)
def _reduce(w: Word) -> int:
    for i in range(len(w) - 1):
        pair = w[i : i + 2]
        head, tail = w[:i], w[i + 2 :]
        if pair == "DE":
            return _reduce(head + "D" + tail) + _reduce(head + "E" + tail)
        if pair == "DA":
            return _reduce(head + "A" + tail)
        if pair == "AE":
            return _reduce(head + "A" + tail)
    # normal form E^a A^c D^b
    return 1


def reduce_word(w: Word) -> int:
    """⟨0|w|0⟩ by rewriting DE = D + E, DA = A and AE = A"""
    return _reduce(_check_word(w))


def evaluate_word(w: Word, d: int | None = None) -> int:
    """⟨0|w|0⟩ from the truncated matrices, d defaulting to len(w) + 2"""
    _check_word(w)
    d = d if d is not None else len(w) + 2
    product = reduce(
        np.matmul,
        [build_fundamental(_WORD_SYMBOLS[c], d) for c in w],
        np.eye(d, dtype=np.int64),
    )
    return int(product[0, 0])


def _counter_window(d: int, rank: int, limit: int) -> np.ndarray:
    """Basis indices of (C^d)^⊗rank whose counters are all below limit"""
    if rank == 0:
        return np.array([0])
    digits = np.array(np.unravel_index(np.arange(d**rank), (d,) * rank))
    return np.flatnonzero((digits < limit).all(axis=0))


def _compare(name: str, lhs, rhs, window: np.ndarray) -> RelationCheck:
    diff = lhs - rhs
    if scipy.sparse.issparse(diff):
        diff = diff.toarray()
    diff = diff[np.ix_(window, window)]
    deviation = int(np.abs(diff).max()) if diff.size else 0
    offending = None
    if deviation:
        row, col = np.argwhere(diff != 0)[0]
        offending = [int(window[row]), int(window[col])]
        log.error(f"{name} fails at entry {offending} with deviation {deviation}")
    return RelationCheck(
        name=name, holds=deviation == 0, max_deviation=deviation, offending_entry=offending
    )


def check_quadratic(d: int) -> RelationReport:
    """δε = 1, δA = 0 and Aε = 0 on the indices below d - 1"""
    if d < 3:
        raise PreconditionError(f"Quadratic relations need d >= 3, got {d}")
    eps = build_fundamental(FundamentalSymbol.EPS, d)
    delta = build_fundamental(FundamentalSymbol.DELTA, d)
    A = build_fundamental(FundamentalSymbol.A, d)
    identity = np.eye(d, dtype=np.int64)
    zero = np.zeros((d, d), dtype=np.int64)
    window = np.arange(d - 1)

    report = RelationReport(
        suite="quadratic",
        d=d,
        checks=[
            _compare("delta*eps = 1", delta @ eps, identity, window),
            _compare("delta*A = 0", delta @ A, zero, window),
            _compare("A*eps = 0", A @ eps, zero, window),
        ],
    )
    log.info(f"Quadratic relations at d={d}: {'pass' if report.passed else 'FAIL'}")
    return report


def build_local_generator(N: int) -> np.ndarray:
    """
    Rates of one bond as an (N+1)^2 square matrix, pair (a, b) at index
    a*(N+1) + b. Columns are source pairs.
    """
    size = N + 1
    Q = np.zeros((size * size, size * size), dtype=np.int64)
    for a in range(size):
        for b in range(size):
            if hop_allowed(a, b):
                Q[b * size + a, a * size + b] += 1
                Q[a * size + b, a * size + b] -= 1
    return Q


@lru_cache(maxsize=None)
def build_hats(N: int) -> dict[int, TensorOperator]:
    """Hat operators X̂_K making the bond terms of the master equation telescope"""
    one, eps, delta, A = (
        FundamentalSymbol.ONE,
        FundamentalSymbol.EPS,
        FundamentalSymbol.DELTA,
        FundamentalSymbol.A,
    )
    if N == 2:
        return {
            0: TensorOperator.monomial(one, coefficient=-1),
            1: TensorOperator.monomial(one),
            2: TensorOperator.zero(1),
        }
    if N == 3:
        X0 = build_ansatz(3)[0]
        return {
            0: -X0 + TensorOperator.monomial(eps, one, one) - TensorOperator.monomial(one, one, one),
            1: TensorOperator.monomial(one, one, one) - TensorOperator.monomial(delta, one, one),
            2: TensorOperator.monomial(A, delta, one, coefficient=-1),
            3: TensorOperator.monomial(A, A, one, coefficient=-1),
        }
    raise PreconditionError(f"Hat operators are only available for N = 2 and N = 3, got N={N}")


def check_hat_relations(N: int, d: int) -> RelationReport:
    """
    For every exchanging pair K J (K >= 1, J > K or J = 0):
        X_K X_J = X̂_K X_J - X_K X̂_J
        X_K X_J = X_J X̂_K - X̂_J X_K
    and for every J: X_J X̂_J = X̂_J X_J. Entries are compared where every
    counter is below d - 2.
    """
    if d < 4:
        raise PreconditionError(f"Hat relations need d >= 4, got {d}")
    hats = build_hats(N)
    ansatz = build_ansatz(N)
    X = {K: scipy.sparse.csr_matrix(op.to_dense(d)) for K, op in ansatz.items()}
    H = {K: scipy.sparse.csr_matrix(op.to_dense(d)) for K, op in hats.items()}
    window = _counter_window(d, ansatz[0].rank, d - 2)

    checks = []
    for K in range(1, N + 1):
        for J in range(N + 1):
            if not hop_allowed(K, J):
                continue
            product = X[K] @ X[J]
            checks.append(
                _compare(f"hat1(K={K},J={J})", product, H[K] @ X[J] - X[K] @ H[J], window)
            )
            checks.append(
                _compare(f"hat2(K={K},J={J})", product, X[J] @ H[K] - H[J] @ X[K], window)
            )
    for J in range(N + 1):
        checks.append(_compare(f"hat3(J={J})", X[J] @ H[J], H[J] @ X[J], window))

    report = RelationReport(suite=f"hats N={N}", d=d, checks=checks)
    log.info(
        f"Hat relations for N={N} at d={d}: "
        f"{sum(c.holds for c in checks)}/{len(checks)} hold"
    )
    return report


def stationarity_residual(config: Configuration, d: int | Literal["auto"] = "auto") -> int:
    """
    Σ over bonds of the local generator applied to the weights, i.e. the
    master equation Σ_C' Q(C, C') W(C') evaluated at C. Zero when W is stationary.
    """
    reduced, _ = reduce_species(config)
    N = reduced.n_species
    L = reduced.length
    if N == 0 or L == 1:
        return 0

    Q = build_local_generator(N)
    size = N + 1
    residual = 0
    for i in range(L):
        j = (i + 1) % L
        row = reduced.sites[i] * size + reduced.sites[j]
        for col in np.flatnonzero(Q[row]):
            c, e = divmod(int(col), size)
            sites = list(reduced.sites)
            sites[i], sites[j] = c, e
            neighbour = Configuration(sites=tuple(sites), n_species=N)
            residual += int(Q[row, col]) * trace_weight(neighbour, d=d)
    return residual
