"""
N-line configurations and their projection onto N-TASEP configurations.

Row k of an N-line configuration carries m_k = P_1 + ... + P_k particles.
Labeling row by row (each particle of the upper row is served by the nearest
free particle of the lower row at the same site or to its left) turns the
uniform measure on N-line configurations into the stationary measure.
"""

import itertools
import logging
import math
from collections import Counter
from collections.abc import Iterator, Sequence
from functools import partial

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.core import Configuration, Sector, particle_counts, reduce_species
from src.parallel import parallel_map
from src.utils import EnumerationBoundError, PreconditionError

log = logging.getLogger(__name__)

LabeledLine = tuple[int, ...]
Row = tuple[int, ...]

SAMPLE_CHUNK_SIZE = 100_000


class MultilineConfig(BaseModel):
    """N binary rows of equal length with non-decreasing particle counts"""

    model_config = ConfigDict(frozen=True)

    rows: tuple[Row, ...]

    @model_validator(mode="after")
    def check_rows(self) -> "MultilineConfig":
        if not self.rows:
            raise ValueError("A multiline configuration needs at least one row")
        length = len(self.rows[0])
        previous = 0
        for k, row in enumerate(self.rows, start=1):
            if len(row) != length:
                raise ValueError(f"Row {k} has length {len(row)}, expected {length}")
            if any(bit not in (0, 1) for bit in row):
                raise ValueError(f"Row {k} is not binary: {row}")
            if sum(row) < previous:
                raise ValueError(
                    f"Row {k} has {sum(row)} particles, fewer than the {previous} above it"
                )
            previous = sum(row)
        return self

    @property
    def length(self) -> int:
        return len(self.rows[0])

    @property
    def n_lines(self) -> int:
        return len(self.rows)

    @property
    def cumulative(self) -> tuple[int, ...]:
        return tuple(sum(row) for row in self.rows)

    def as_record(self) -> dict:
        return {
            "L": self.length,
            "N": self.n_lines,
            "rows": ["".join(str(bit) for bit in row) for row in self.rows],
        }

    def __str__(self) -> str:
        return "\n".join("".join(str(bit) for bit in row) for row in self.rows)


def parse_multiline(text: str) -> MultilineConfig:
    """One row of '0'/'1' characters per line"""
    lines = [line.strip() for line in text.strip().splitlines() if line.strip()]
    rows = []
    for line in lines:
        if set(line) - {"0", "1"}:
            raise PreconditionError(f"Row {line!r} is not a binary string")
        rows.append(tuple(int(c) for c in line))
    return MultilineConfig(rows=tuple(rows))


def multiline_normalization(sector: Sector) -> int:
    """Number of N-line configurations of a sector, Π_k C(L, m_k)"""
    return math.prod(math.comb(sector.length, m) for m in sector.counts.cumulative)


def _row_from_positions(length: int, positions: Sequence[int]) -> Row:
    row = [0] * length
    for i in positions:
        row[i] = 1
    return tuple(row)


def associate_line(
    upper_labels: Sequence[int],
    lower_row: Sequence[int],
    n_classes: int | None = None,
    start: int | None = None,
) -> LabeledLine:
    """
    One labeling stage. For c = 1, 2, ... the class-c particles of the upper
    line are scanned right to left, cyclically from `start`, and each one binds
    the nearest unbound lower particle at the same site or to its left. Unbound
    lower particles get the label n_classes + 1.

    Args:
        upper_labels: Labels of the upper line, 0 for empty sites.
        lower_row: Occupancy of the lower line.
        n_classes: Number of classes of the upper line. Defaults to its largest label.
        start: Site where the scan starts. Defaults to the rightmost site.
    """
    L = len(upper_labels)
    if len(lower_row) != L:
        raise PreconditionError(f"Lines have different lengths: {L} and {len(lower_row)}")
    n_upper = sum(1 for label in upper_labels if label > 0)
    if sum(lower_row) < n_upper:
        raise PreconditionError(
            f"Lower line has {sum(lower_row)} particles, fewer than the {n_upper} above it"
        )
    if n_classes is None:
        n_classes = max(upper_labels, default=0)
    if start is None:
        start = L - 1

    scan = [(start - t) % L for t in range(L)]
    labels = [0] * L
    for c in range(1, n_classes + 1):
        for i in scan:
            if upper_labels[i] != c:
                continue
            for t in range(L):
                j = (i - t) % L
                if lower_row[j] and not labels[j]:
                    labels[j] = c
                    break

    return tuple(
        labels[j] if labels[j] else (n_classes + 1 if lower_row[j] else 0) for j in range(L)
    )


def label_multiline(ml: MultilineConfig, start: int | None = None) -> Configuration:
    """Fold associate_line from the first row down to the last"""
    labels: LabeledLine = tuple(ml.rows[0])
    for k, row in enumerate(ml.rows[1:], start=1):
        labels = associate_line(labels, row, n_classes=k, start=start)
    return Configuration(sites=labels, n_species=ml.n_lines)


def _matching_rows(
    config: Configuration, fixed: tuple[Row, ...] = ()
) -> Iterator[tuple[Row, ...]]:
    """Rows 1..N-1 starting with fixed which, above the particles of config, label to config"""
    L = config.length
    last = tuple(1 if label > 0 else 0 for label in config.sites)
    cumulative = particle_counts(config).cumulative

    choices = [
        [_row_from_positions(L, c) for c in itertools.combinations(range(L), m)]
        for m in cumulative[len(fixed) : -1]
    ]
    for rest in itertools.product(*choices):
        upper = fixed + rest
        ml = MultilineConfig.model_construct(rows=upper + (last,))
        if label_multiline(ml).sites == config.sites:
            yield upper


def ancestor_rows(config: Configuration) -> Iterator[tuple[Row, ...]]:
    """Choices of rows 1..N-1 which, above the particles of config, label to config"""
    return _matching_rows(config)


def _count_with_first_row(config: Configuration, first: Row) -> int:
    return sum(1 for _ in _matching_rows(config, (first,)))


def count_ancestors(
    config: Configuration,
    max_multiline: int | None = None,
    workers: int = 1,
    progress: bool = True,
) -> int:
    """
    Number of N-line configurations whose last row sits on the particles of
    config and which label to config. The configuration is species-reduced
    first. The enumeration is split over the choices of the first row.
    """
    reduced, _ = reduce_species(config)
    N = reduced.n_species
    if N <= 1:
        return 1

    L = reduced.length
    cumulative = particle_counts(reduced).cumulative
    n_candidates = math.prod(math.comb(L, m) for m in cumulative[:-1])
    if max_multiline is not None and n_candidates > max_multiline:
        raise EnumerationBoundError(
            f"Counting ancestors of {config} needs {n_candidates} multiline "
            f"configurations, more than the bound of {max_multiline}"
        )

    firsts = [
        _row_from_positions(L, c) for c in itertools.combinations(range(L), cumulative[0])
    ]
    counts = parallel_map(
        partial(_count_with_first_row, reduced),
        firsts,
        workers=workers,
        desc="First rows",
        progress=progress,
    )
    total = sum(counts)
    log.debug(f"{config}: {total} of {n_candidates} multiline configurations")
    return total


def _random_rows(rng: np.random.Generator, size: int, length: int, m: int) -> np.ndarray:
    """size independent uniform rows with m particles each"""
    rows = np.zeros((size, length), dtype=bool)
    if m == 0:
        return rows
    keys = rng.random((size, length))
    chosen = np.argpartition(keys, m - 1, axis=1)[:, :m] if m < length else np.argsort(keys, axis=1)
    np.put_along_axis(rows, chosen, True, axis=1)
    return rows


def _sample_occupancies(
    rng: np.random.Generator, size: int, length: int, cumulative: Sequence[int]
) -> np.ndarray:
    return np.concatenate(
        [_random_rows(rng, size, length, m) for m in cumulative], axis=1
    )


def sample_multiline(sector: Sector, seed: int) -> MultilineConfig:
    """A uniform N-line configuration, deterministic given seed"""
    cumulative = sector.counts.cumulative
    if cumulative and cumulative[-1] > sector.length:
        raise PreconditionError(f"{cumulative[-1]} particles do not fit on {sector.length} sites")
    rng = np.random.default_rng(seed)
    flat = _sample_occupancies(rng, 1, sector.length, cumulative)[0]
    rows = tuple(
        tuple(int(bit) for bit in flat[k * sector.length : (k + 1) * sector.length])
        for k in range(len(cumulative))
    )
    return MultilineConfig(rows=rows)


def _sample_chunk(
    task: tuple[np.random.SeedSequence, int], sector: Sector
) -> dict[tuple[int, ...], int]:
    seed_seq, size = task
    L = sector.length
    cumulative = sector.counts.cumulative
    rng = np.random.default_rng(seed_seq)
    occupancies = _sample_occupancies(rng, size, L, cumulative)
    unique, counts = np.unique(occupancies, axis=0, return_counts=True)

    tally: Counter[tuple[int, ...]] = Counter()
    for flat, count in zip(unique, counts):
        rows = tuple(
            tuple(int(bit) for bit in flat[k * L : (k + 1) * L]) for k in range(len(cumulative))
        )
        ml = MultilineConfig.model_construct(rows=rows)
        tally[label_multiline(ml).sites] += int(count)
    return dict(tally)


def sample_counts(
    sector: Sector, samples: int, seed: int, workers: int = 1
) -> dict[Configuration, int]:
    """
    Occurrences of each configuration among labelings of uniform N-line samples.
    The stream is split into fixed-size chunks with SeedSequence.spawn, so the
    result depends on seed and samples only.
    """
    if samples < 1:
        raise PreconditionError(f"At least one sample is required, got {samples}")
    if sector.n_species == 0:
        return {Configuration(sites=(0,) * sector.length, n_species=0): samples}

    n_chunks = math.ceil(samples / SAMPLE_CHUNK_SIZE)
    sizes = [SAMPLE_CHUNK_SIZE] * (n_chunks - 1) + [samples - SAMPLE_CHUNK_SIZE * (n_chunks - 1)]
    tasks = list(zip(np.random.SeedSequence(seed).spawn(n_chunks), sizes))

    log.info(f"Sampling {samples} multiline configurations of {sector} in {n_chunks} chunk(s)")
    tallies = parallel_map(
        partial(_sample_chunk, sector=sector), tasks, workers=workers, desc="Sample chunks"
    )

    total: Counter[tuple[int, ...]] = Counter()
    for tally in tallies:
        total.update(tally)
    return {
        Configuration(sites=sites, n_species=sector.n_species): count
        for sites, count in sorted(total.items())
    }


def empirical_distribution(
    sector: Sector, samples: int, seed: int, workers: int = 1
) -> dict[Configuration, float]:
    counts = sample_counts(sector, samples, seed, workers=workers)
    return {config: count / samples for config, count in counts.items()}
