"""
Pushing procedure for binary-string weights and the staged reverse algorithm
that generates the ancestors of an N-species configuration.
"""

import logging
from collections.abc import Sequence
from functools import lru_cache

from src.core import Configuration, canonical_sites, particle_counts, reduce_species
from src.utils import ConsistencyError, PreconditionError

log = logging.getLogger(__name__)

BinaryString = tuple[int, ...]
AncestorSet = frozenset[Configuration]


def as_binary(b: str | Sequence[int]) -> BinaryString:
    bits = tuple(int(c) for c in b)
    if any(bit not in (0, 1) for bit in bits):
        raise PreconditionError(f"Not a binary string: {b!r}")
    return bits


@lru_cache(maxsize=None)
def _omega_push(b: BinaryString) -> int:
    seen = {b}
    frontier = [b]
    while frontier:
        s = frontier.pop()
        for i in range(len(s) - 1):
            if s[i] == 1 and s[i + 1] == 0:
                pushed = s[:i] + (0, 1) + s[i + 2 :]
                if pushed not in seen:
                    seen.add(pushed)
                    frontier.append(pushed)
    return len(seen)


def omega_push(b: str | Sequence[int]) -> int:
    """Number of strings reachable from b (b included) by pushing 1s to the right"""
    return _omega_push(as_binary(b))


@lru_cache(maxsize=None)
def _omega_reduce(b: BinaryString) -> int:
    for i in range(len(b) - 1):
        if b[i] == 1 and b[i + 1] == 0:
            head, tail = b[:i], b[i + 2 :]
            return _omega_reduce(head + (1,) + tail) + _omega_reduce(head + (0,) + tail)
    # sorted string: all 0s before all 1s
    return 1


def omega_reduce(b: str | Sequence[int]) -> int:
    """ω through the rewrite ω(B10B') = ω(B1B') + ω(B0B')"""
    return _omega_reduce(as_binary(b))


def two_species_weight(config: Configuration) -> int:
    """
    Product of the ω weights of the binary strings separating consecutive
    second-class particles around the ring.
    """
    if config.n_species != 2:
        raise PreconditionError(f"Expected a 2-species configuration, got N={config.n_species}")

    walls = [i for i, label in enumerate(config.sites) if label == 2]
    if not walls:
        raise PreconditionError(
            f"{config} has no second-class particle; reduce the species first"
        )

    L = config.length
    weight = 1
    for j, start in enumerate(walls):
        stop = walls[(j + 1) % len(walls)]
        gap = (stop - start - 1) % L if len(walls) > 1 else L - 1
        segment = tuple(config.sites[(start + 1 + t) % L] for t in range(gap))
        weight *= _omega_push(segment)
    return weight


def push_closure(sites: tuple[int, ...], K: int) -> set[tuple[int, ...]]:
    """
    All configurations reachable by pushing class-K particles to the right
    through holes. Classes below K are hopped over, classes K and above block.
    """
    L = len(sites)
    seen = {sites}
    frontier = [sites]
    while frontier:
        s = frontier.pop()
        for i, label in enumerate(s):
            if label != K:
                continue
            j = (i + 1) % L
            for _ in range(L - 1):
                if not 0 < s[j] < K:
                    break
                j = (j + 1) % L
            if s[j] != 0:
                continue
            pushed = list(s)
            pushed[i], pushed[j] = 0, K
            pushed = tuple(pushed)
            if pushed not in seen:
                seen.add(pushed)
                frontier.append(pushed)
    return seen


def _check_reverse_preconditions(config: Configuration) -> None:
    if config.n_species < 2:
        raise PreconditionError(f"Ancestors need N >= 2, got N={config.n_species}")
    if particle_counts(config).populations[-1] == 0:
        raise PreconditionError(
            f"{config} has no particle of class {config.n_species}; reduce the species first"
        )


def _stage_sites(sites: tuple[int, ...], n_species: int) -> list[set[tuple[int, ...]]]:
    stages = []
    current = {sites}
    for K in range(1, n_species):
        pushed = set()
        generated = 0
        for s in current:
            closure = push_closure(s, K)
            generated += len(closure)
            pushed |= closure
        if len(pushed) != generated:
            raise ConsistencyError(
                f"Stage {K} for {sites} generated {generated} configurations "
                f"but only {len(pushed)} are distinct"
            )
        current = pushed
        stages.append(current)
    return stages


def _ancestor_sites(sites: tuple[int, ...], n_species: int) -> set[tuple[int, ...]]:
    stages = _stage_sites(sites, n_species)
    final = stages[-1] if stages else {sites}
    ancestors = {tuple(0 if label == n_species else label for label in s) for s in final}
    if len(ancestors) != len(final):
        raise ConsistencyError(f"Removing class {n_species} from {sites} merged ancestors")
    return ancestors


def ancestor_stages(config: Configuration) -> list[AncestorSet]:
    """Sets obtained after pushing class 1, class 2, ..., class N-1"""
    _check_reverse_preconditions(config)
    return [
        frozenset(Configuration(sites=s, n_species=config.n_species) for s in stage)
        for stage in _stage_sites(config.sites, config.n_species)
    ]


def ancestors(config: Configuration) -> AncestorSet:
    """(N-1)-species configurations from which config is generated"""
    _check_reverse_preconditions(config)
    return frozenset(
        Configuration(sites=s, n_species=config.n_species - 1)
        for s in _ancestor_sites(config.sites, config.n_species)
    )


@lru_cache(maxsize=None)
def _weight(sites: tuple[int, ...], n_species: int) -> int:
    if n_species <= 1:
        return 1
    return sum(
        _weight(canonical_sites(s), n_species - 1)
        for s in _ancestor_sites(sites, n_species)
    )


def weight_recursive(config: Configuration) -> int:
    """
    Stationary weight as the number of single-species ancestors, summed level
    by level. The configuration is species-reduced first.
    """
    reduced, _ = reduce_species(config)
    if reduced.n_species <= 1:
        return 1
    weight = _weight(canonical_sites(reduced.sites), reduced.n_species)
    log.debug(f"Recursive weight of {config}: {weight}")
    return weight
