"""
Tensor-product matrix ansatz for the stationary weights of the N-TASEP.

Operators are sums of tensor products of the fundamental symbols 1, ε, δ, A,
D = 1 + δ and E = 1 + ε acting on queue counters. X_K^(N) has C(N,2) slots and
is built recursively from X_M^(N-1). A weight is the trace of the product of
the X operators of the sites, evaluated exactly on sparse counter states.
"""

import itertools
import logging
import math
from collections import defaultdict
from enum import Enum
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
)

from src.core import Configuration, Sector, canonical_sites, reduce_species, rotate_sites, sector_of
from src.multiline import multiline_normalization
from src.utils import DivergentTraceError, PreconditionError, TruncationOverflowError

log = logging.getLogger(__name__)

CounterState = dict[tuple[int, ...], int]


class FundamentalSymbol(str, Enum):
    ONE = "1"
    EPS = "eps"
    DELTA = "delta"
    A = "A"
    D = "D"
    E = "E"


def slot_images(sym: FundamentalSymbol, n: int) -> tuple[int, ...]:
    """Counters reached from |n⟩, each with coefficient 1"""
    match sym:
        case FundamentalSymbol.ONE:
            return (n,)
        case FundamentalSymbol.EPS:
            return (n + 1,)
        case FundamentalSymbol.DELTA:
            return (n - 1,) if n > 0 else ()
        case FundamentalSymbol.A:
            return (0,) if n == 0 else ()
        case FundamentalSymbol.D:
            return (n, n - 1) if n > 0 else (n,)
        case FundamentalSymbol.E:
            return (n, n + 1)


def build_fundamental(sym: FundamentalSymbol, d: int) -> np.ndarray:
    """Truncated d×d realisation; column n holds the image of |n⟩"""
    if d < 1:
        raise PreconditionError(f"Truncation dimension must be positive, got {d}")
    matrix = np.zeros((d, d), dtype=np.int64)
    for n in range(d):
        for image in slot_images(sym, n):
            if image < d:
                matrix[image, n] += 1
    return matrix


Monomial = tuple[FundamentalSymbol, ...]

_MERGES = {
    frozenset({FundamentalSymbol.ONE, FundamentalSymbol.EPS}): FundamentalSymbol.E,
    frozenset({FundamentalSymbol.ONE, FundamentalSymbol.DELTA}): FundamentalSymbol.D,
}


class TensorOperator(BaseModel):
    """Formal sum of monomials of fundamental symbols, all of the same rank"""

    model_config = ConfigDict(frozen=True)

    rank: int
    terms: tuple[tuple[int, Monomial], ...] = ()

    @model_validator(mode="after")
    def check_terms(self) -> "TensorOperator":
        for _, monomial in self.terms:
            if len(monomial) != self.rank:
                raise ValueError(f"Monomial {monomial} does not have rank {self.rank}")
        return self

    @classmethod
    def from_terms(cls, rank: int, terms) -> "TensorOperator":
        """Collect equal monomials and drop zero coefficients"""
        collected: dict[Monomial, int] = {}
        for coefficient, monomial in terms:
            monomial = tuple(FundamentalSymbol(s) for s in monomial)
            collected[monomial] = collected.get(monomial, 0) + coefficient
        return cls(
            rank=rank,
            terms=tuple((c, m) for m, c in collected.items() if c != 0),
        )

    @classmethod
    def monomial(cls, *symbols: FundamentalSymbol | str, coefficient: int = 1) -> "TensorOperator":
        return cls.from_terms(len(symbols), [(coefficient, symbols)])

    @classmethod
    def scalar(cls, value: int) -> "TensorOperator":
        return cls.from_terms(0, [(value, ())])

    @classmethod
    def zero(cls, rank: int) -> "TensorOperator":
        return cls(rank=rank, terms=())

    def _check_rank(self, other: "TensorOperator") -> None:
        if other.rank != self.rank:
            raise PreconditionError(f"Rank mismatch: {self.rank} and {other.rank}")

    def tensor(self, other: "TensorOperator") -> "TensorOperator":
        """self ⊗ other"""
        return TensorOperator.from_terms(
            self.rank + other.rank,
            [(c1 * c2, m1 + m2) for c1, m1 in self.terms for c2, m2 in other.terms],
        )

    def __add__(self, other: "TensorOperator") -> "TensorOperator":
        self._check_rank(other)
        return TensorOperator.from_terms(self.rank, self.terms + other.terms)

    def __neg__(self) -> "TensorOperator":
        return self.scale(-1)

    def __sub__(self, other: "TensorOperator") -> "TensorOperator":
        return self + (-other)

    def scale(self, factor: int) -> "TensorOperator":
        return TensorOperator.from_terms(self.rank, [(factor * c, m) for c, m in self.terms])

    def __rmul__(self, factor: int) -> "TensorOperator":
        return self.scale(factor)

    def combined(self) -> "TensorOperator":
        """Merge pairs 1 + ε into E and 1 + δ into D where monomials differ in one slot"""
        terms = list(self.terms)
        merged = True
        while merged:
            merged = False
            for (i, (c1, m1)), (j, (c2, m2)) in itertools.combinations(enumerate(terms), 2):
                if c1 != c2:
                    continue
                diff = [s for s in range(self.rank) if m1[s] != m2[s]]
                if len(diff) != 1:
                    continue
                slot = diff[0]
                symbol = _MERGES.get(frozenset({m1[slot], m2[slot]}))
                if symbol is None:
                    continue
                terms[i] = (c1, m1[:slot] + (symbol,) + m1[slot + 1 :])
                del terms[j]
                merged = True
                break
        return TensorOperator.from_terms(self.rank, terms)

    def to_dense(self, d: int) -> np.ndarray:
        """Truncated realisation on (C^d)^⊗rank, first slot most significant"""
        size = d**self.rank
        dense = np.zeros((size, size), dtype=np.int64)
        for coefficient, monomial in self.terms:
            factors = [build_fundamental(s, d) for s in monomial]
            dense += coefficient * reduce(np.kron, factors, np.ones((1, 1), dtype=np.int64))
        return dense

    def monomials(self) -> list[list[str]]:
        return [[s.value for s in monomial] for _, monomial in self.terms]

    def as_record(self) -> dict:
        return {
            "rank": self.rank,
            "terms": [
                {"coefficient": str(c), "monomial": [s.value for s in m]} for c, m in self.terms
            ],
        }

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for c, m in self.terms:
            body = "⊗".join(s.value for s in m) if m else "1"
            parts.append(body if c == 1 else f"{c}·{body}")
        return " + ".join(parts)


def apply(op: TensorOperator, state: CounterState, d: int | None = None) -> CounterState:
    """
    Slot-wise linear action of op on a sparse counter state. Counters reaching
    d raise TruncationOverflowError.
    """
    result: CounterState = defaultdict(int)
    for counters, amplitude in state.items():
        if len(counters) != op.rank:
            raise PreconditionError(
                f"Counter state {counters} does not match operator rank {op.rank}"
            )
        for coefficient, monomial in op.terms:
            images = [slot_images(s, n) for s, n in zip(monomial, counters)]
            for image in itertools.product(*images):
                if d is not None and any(n >= d for n in image):
                    raise TruncationOverflowError(d, image)
                result[image] += coefficient * amplitude
    return {counters: c for counters, c in result.items() if c != 0}


def build_aKM(N: int, K: int, M: int) -> TensorOperator:
    """Building block a_{KM}^(N) of rank N-1"""
    if N < 1 or not 0 <= K <= N:
        raise PreconditionError(f"a_KM needs N >= 1 and 0 <= K <= N, got N={N}, K={K}")
    one, eps, delta, A = (
        FundamentalSymbol.ONE,
        FundamentalSymbol.EPS,
        FundamentalSymbol.DELTA,
        FundamentalSymbol.A,
    )

    if K == 0:
        if not 0 <= M <= N - 1:
            raise PreconditionError(f"a_0M^({N}) needs 0 <= M <= {N - 1}, got M={M}")
        if M == 0:
            symbols = (one,) * (N - 1)
        else:
            symbols = (one,) * (M - 1) + (eps,) + (one,) * (N - M - 1)
    elif M == 0:
        if K == N:
            symbols = (A,) * (N - 1)
        else:
            symbols = (A,) * (K - 1) + (delta,) + (one,) * (N - K - 1)
    elif K <= M <= N - 1:
        if M == K:
            symbols = (A,) * (K - 1) + (one,) * (N - K)
        else:
            symbols = (
                (A,) * (K - 1) + (delta,) + (one,) * (M - K - 1) + (eps,) + (one,) * (N - M - 1)
            )
    else:
        raise PreconditionError(f"a_KM^({N}) is not defined for K={K}, M={M}")

    return TensorOperator.monomial(*symbols)


@lru_cache(maxsize=None)
def build_ansatz(N: int) -> dict[int, TensorOperator]:
    """X_K^(N) for K = 0..N, with the a_KM slots ahead of the X^(N-1) slots"""
    if N < 0:
        raise PreconditionError(f"Number of species must be non-negative, got {N}")
    if N == 0:
        return {0: TensorOperator.scalar(1)}

    lower = build_ansatz(N - 1)
    rank = math.comb(N, 2)
    ansatz = {}

    x0 = TensorOperator.zero(rank)
    for M in range(N):
        x0 = x0 + build_aKM(N, 0, M).tensor(lower[M])
    ansatz[0] = x0.combined()

    for K in range(1, N + 1):
        xk = build_aKM(N, K, 0).tensor(lower[0])
        for M in range(K, N):
            xk = xk + build_aKM(N, K, M).tensor(lower[M])
        ansatz[K] = xk.combined()

    return ansatz


def _evaluate_trace(sites: tuple[int, ...], n_species: int, d: int) -> int:
    """
    Σ_v ⟨v| X_{τ_1} ... X_{τ_L} |v⟩, the rightmost operator applied first.

    A counter changes by at most one per site, so states that cannot return to
    their start in the remaining sites are dropped. A closed path starting at
    L//2 + 1 or above never empties its queue and repeats one unit higher, so
    starts up to L//2 suffice once such sentinel starts are shown not to contribute.
    Sentinel starts are tracked without truncation.
    """
    ansatz = build_ansatz(n_species)
    rank = math.comb(n_species, 2)
    L = len(sites)
    sentinel = L // 2 + 1

    states: dict[tuple[tuple[int, ...], tuple[int, ...]], int] = {}
    for v in itertools.product(range(sentinel + 1), repeat=rank):
        if max(v, default=0) < sentinel and any(n >= d for n in v):
            raise TruncationOverflowError(d, v)
        states[(v, v)] = 1

    for step, label in enumerate(reversed(sites), start=1):
        remaining = L - step
        op = ansatz[label]
        updated: dict[tuple[tuple[int, ...], tuple[int, ...]], int] = defaultdict(int)
        for (v, counters), amplitude in states.items():
            genuine = max(v, default=0) < sentinel
            for coefficient, monomial in op.terms:
                images = [slot_images(s, n) for s, n in zip(monomial, counters)]
                for image in itertools.product(*images):
                    if any(abs(n - start) > remaining for n, start in zip(image, v)):
                        continue
                    if genuine and any(n >= d for n in image):
                        raise TruncationOverflowError(d, image)
                    updated[(v, image)] += coefficient * amplitude
        states = {key: c for key, c in updated.items() if c != 0}

    total = 0
    for (v, counters), amplitude in states.items():
        if v != counters:
            continue
        if max(v, default=0) == sentinel:
            raise DivergentTraceError(
                f"Trace of {sites} has a closed path from {v} that never empties a queue"
            )
        total += amplitude
    return total


def trace_product(sites: tuple[int, ...] | list[int], n_species: int, d: int) -> int:
    """Truncated trace of the ansatz operators of sites, taken in the given order"""
    sites = tuple(sites)
    if any(not 0 <= label <= n_species for label in sites):
        raise PreconditionError(f"Labels of {sites} outside 0..{n_species}")
    return _evaluate_trace(sites, n_species, d)


@lru_cache(maxsize=None)
def _cached_trace(sites: tuple[int, ...], n_species: int, d: int) -> int:
    return _evaluate_trace(sites, n_species, d)


def _trace_cut(sites: tuple[int, ...], n_species: int) -> tuple[int, ...]:
    """Canonical rotation turned so that the last site holds the highest class"""
    canonical = canonical_sites(sites)
    first = canonical.index(n_species)
    return rotate_sites(canonical, first + 1)


def trace_weight(
    config: Configuration, d: int | Literal["auto"] = "auto", max_doublings: int = 4
) -> int:
    """
    Stationary weight W(C) = Tr(X_{τ_1} ... X_{τ_L}) as an exact integer.

    Args:
        config: The configuration. Species are reduced first.
        d: Truncation dimension. With "auto" the evaluation starts at L + 1 and
            doubles d whenever a counter overflows.
        max_doublings: How often d may be doubled in automatic mode.
    """
    reduced, _ = reduce_species(config)
    if reduced.n_species <= 1:
        return 1

    sites = _trace_cut(reduced.sites, reduced.n_species)
    if d != "auto":
        return _cached_trace(sites, reduced.n_species, d)

    for attempt in Retrying(
        retry=retry_if_exception_type(TruncationOverflowError),
        stop=stop_after_attempt(max_doublings + 1),
        before_sleep=before_sleep_log(log, logging.WARNING),
        reraise=True,
    ):
        with attempt:
            dimension = (len(sites) + 1) * 2 ** (attempt.retry_state.attempt_number - 1)
            weight = _cached_trace(sites, reduced.n_species, dimension)

    log.debug(f"Trace weight of {config}: {weight}")
    return weight


def normalization(sector: Sector) -> int:
    """Z = Π_k C(L, m_k)"""
    return multiline_normalization(sector)


def probability(config: Configuration, d: int | Literal["auto"] = "auto") -> Fraction:
    """W(C) / Z of the sector of the species-reduced configuration"""
    reduced, _ = reduce_species(config)
    return Fraction(trace_weight(reduced, d=d), normalization(sector_of(reduced)))
