"""
Exact stationary distribution of a sector, solved from its Markov generator
with fraction-free elimination, and the cross-validation harness that checks
every weight route against it.
"""

import logging
import math
from fractions import Fraction
from functools import partial
from typing import Any

import numpy as np
import scipy.sparse
from pydantic import BaseModel, ConfigDict

from src.core import Configuration, Sector, hop_allowed, reduce_species, sector_of
from src.multiline import count_ancestors
from src.parallel import parallel_map
from src.pushing import weight_recursive
from src.tensor import normalization, trace_weight
from src.utils import (
    ComparisonReport,
    ComparisonRow,
    ConsistencyError,
    EnumerationBoundError,
)

log = logging.getLogger(__name__)


class SectorGenerator(BaseModel):
    """
    Generator Q of a sector, columns indexing source configurations, states in
    lexicographic order.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    sector: Sector
    configurations: tuple[Configuration, ...]
    matrix: Any

    @property
    def size(self) -> int:
        return len(self.configurations)

    @property
    def index(self) -> dict[tuple[int, ...], int]:
        return {c.sites: i for i, c in enumerate(self.configurations)}


class StationaryVector(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    configurations: tuple[Configuration, ...]
    probabilities: tuple[Fraction, ...]
    frozen: bool = False

    def probability_of(self, config: Configuration) -> Fraction:
        for c, p in zip(self.configurations, self.probabilities):
            if c.sites == config.sites:
                return p
        raise KeyError(f"{config} is not in the sector")

    def as_dict(self) -> dict[Configuration, Fraction]:
        return dict(zip(self.configurations, self.probabilities))


def _outgoing(sites: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Targets of every allowed exchange, one entry per bond"""
    L = len(sites)
    if L == 1:
        return []
    targets = []
    for i in range(L):
        j = (i + 1) % L
        if hop_allowed(sites[i], sites[j]):
            swapped = list(sites)
            swapped[i], swapped[j] = sites[j], sites[i]
            targets.append(tuple(swapped))
    return targets


def build_generator(
    sector: Sector, max_states: int | None = 200_000, workers: int = 1
) -> SectorGenerator:
    configurations = tuple(sector.configurations(max_states=max_states))
    index = {c.sites: i for i, c in enumerate(configurations)}
    log.info(f"Building the generator of {sector} on {len(configurations)} states")

    targets = parallel_map(
        _outgoing, [c.sites for c in configurations], workers=workers, desc="Generator"
    )
    rows, cols, data = [], [], []
    for source, outgoing in enumerate(targets):
        for target in outgoing:
            rows.append(index[target])
            cols.append(source)
            data.append(1)
        rows.append(source)
        cols.append(source)
        data.append(-len(outgoing))

    n = len(configurations)
    matrix = scipy.sparse.coo_matrix(
        (np.array(data, dtype=np.int64), (rows, cols)), shape=(n, n)
    ).tocsc()
    return SectorGenerator(sector=sector, configurations=configurations, matrix=matrix)


def _bareiss_echelon(m: list[list[int]]) -> list[int]:
    """
    Fraction-free row echelon form in place. Returns the pivot columns.
    Every division is exact.
    """
    n_rows = len(m)
    n_cols = len(m[0]) if m else 0
    pivots = []
    previous = 1
    r = 0
    for c in range(n_cols):
        if r == n_rows:
            break
        pivot_row = next((i for i in range(r, n_rows) if m[i][c] != 0), None)
        if pivot_row is None:
            continue
        m[r], m[pivot_row] = m[pivot_row], m[r]
        p = m[r][c]
        pivot = m[r]
        for i in range(r + 1, n_rows):
            row = m[i]
            f = row[c]
            for j in range(c + 1, n_cols):
                row[j] = (p * row[j] - f * pivot[j]) // previous
            row[c] = 0
        previous = p
        pivots.append(c)
        r += 1
    return pivots


def stationary(gen: SectorGenerator, max_states: int | None = 3_000) -> StationaryVector:
    """Normalised kernel of Q with exact rationals, checked by re-multiplication"""
    n = gen.size
    if max_states is not None and n > max_states:
        raise EnumerationBoundError(
            f"Sector {gen.sector} has {n} states, more than the exact solve bound of {max_states}"
        )
    if n == 1:
        log.info(f"Sector {gen.sector} is frozen")
        return StationaryVector(
            configurations=gen.configurations, probabilities=(Fraction(1),), frozen=True
        )

    m = [[int(x) for x in row] for row in gen.matrix.toarray()]
    pivots = _bareiss_echelon(m)
    free = sorted(set(range(n)) - set(pivots))
    if len(free) != 1:
        raise ConsistencyError(
            f"Generator of {gen.sector} has a kernel of dimension {len(free)}, expected 1"
        )

    x = [Fraction(0)] * n
    x[free[0]] = Fraction(1)
    for k in reversed(range(len(pivots))):
        c = pivots[k]
        row = m[k]
        total = sum(row[j] * x[j] for j in range(c + 1, n) if row[j])
        x[c] = -Fraction(total) / row[c]

    norm = sum(x)
    probabilities = tuple(p / norm for p in x)

    coo = gen.matrix.tocoo()
    residual = [Fraction(0)] * n
    for i, j, q in zip(coo.row, coo.col, coo.data):
        residual[int(i)] += int(q) * probabilities[int(j)]
    if any(residual):
        raise ConsistencyError(f"Stationary vector of {gen.sector} does not solve Q P = 0")
    if any(p <= 0 for p in probabilities):
        raise ConsistencyError(f"Stationary vector of {gen.sector} is not strictly positive")

    return StationaryVector(configurations=gen.configurations, probabilities=probabilities)


def master_equation_residual(
    gen: SectorGenerator, d: int | str = "auto"
) -> list[int]:
    """Q W for the unnormalised trace weights, one entry per configuration"""
    weights = [trace_weight(c, d=d) for c in gen.configurations]
    coo = gen.matrix.tocoo()
    residual = [0] * gen.size
    for i, j, q in zip(coo.row, coo.col, coo.data):
        residual[int(i)] += int(q) * weights[int(j)]
    return residual


def _multiline_feasible(config: Configuration, max_multiline: int | None) -> bool:
    reduced, _ = reduce_species(config)
    cumulative = sector_of(reduced).counts.cumulative
    n_candidates = math.prod(math.comb(reduced.length, m) for m in cumulative[:-1])
    return max_multiline is None or n_candidates <= max_multiline


def _route_weights(
    config: Configuration, max_multiline: int | None
) -> tuple[int, int, int | None]:
    multiline = None
    if _multiline_feasible(config, max_multiline):
        try:
            multiline = count_ancestors(
                config, max_multiline=max_multiline, progress=False
            )
        except EnumerationBoundError:
            multiline = None
    return trace_weight(config), weight_recursive(config), multiline


def compare_all(
    sector: Sector,
    max_states: int | None = 200_000,
    max_multiline: int | None = 1_000_000,
    max_solve_states: int | None = 3_000,
    workers: int = 1,
) -> ComparisonReport:
    """Probability of every configuration by the oracle, the trace, the ancestors and the multiline count"""
    gen = build_generator(sector, max_states=max_states, workers=workers)
    solution = stationary(gen, max_states=max_solve_states)

    routes = parallel_map(
        partial(_route_weights, max_multiline=max_multiline),
        list(gen.configurations),
        workers=workers,
        desc="Weights",
    )

    rows = []
    first_mismatch = None
    with_multiline = all(multiline is not None for _, _, multiline in routes)
    for config, p, (trace, ancestor, multiline) in zip(
        gen.configurations, solution.probabilities, routes
    ):
        reduced, _ = reduce_species(config)
        Z = normalization(sector_of(reduced))
        agree = (
            p == Fraction(trace, Z)
            and trace == ancestor
            and (multiline is None or multiline == trace)
        )
        if not agree and first_mismatch is None:
            first_mismatch = str(config)
            log.error(
                f"Mismatch at {config}: oracle {p}, trace {trace}/{Z}, "
                f"ancestors {ancestor}, multiline {multiline}"
            )
        rows.append(
            ComparisonRow(
                configuration=str(config),
                oracle_probability=str(p),
                trace_weight=str(trace),
                ancestor_weight=str(ancestor),
                multiline_weight=None if multiline is None else str(multiline),
                normalization=str(Z),
                agree=agree,
            )
        )

    methods = ["oracle", "trace", "ancestors"] + (["multiline"] if with_multiline else [])
    report = ComparisonReport(
        length=sector.length,
        populations=list(sector.populations),
        n_states=gen.size,
        methods=methods,
        frozen=solution.frozen,
        rows=rows,
        first_mismatch=first_mismatch,
    )
    log.info(
        f"Compared {gen.size} configurations of {sector} with {', '.join(methods)}: "
        f"{'agree' if report.agree else 'MISMATCH'}"
    )
    return report
