"""Ring configurations of the multispecies TASEP, their populations and sectors"""

import logging
import math
from collections import Counter
from collections.abc import Iterator

from pydantic import BaseModel, ConfigDict, model_validator
from sympy.utilities.iterables import multiset_permutations

from src.utils import ConfigurationParseError, EnumerationBoundError

log = logging.getLogger(__name__)


class Configuration(BaseModel):
    """A ring of class labels, 0 being a hole and N the highest declared class"""

    model_config = ConfigDict(frozen=True)

    sites: tuple[int, ...]
    n_species: int

    @model_validator(mode="after")
    def check_labels(self) -> "Configuration":
        if len(self.sites) == 0:
            raise ValueError("A configuration needs at least one site")
        if self.n_species < 0:
            raise ValueError(f"Invalid number of species: {self.n_species}")
        for label in self.sites:
            if label < 0 or label > self.n_species:
                raise ValueError(
                    f"Label {label} outside 0..{self.n_species} in {self.sites}"
                )
        return self

    @property
    def length(self) -> int:
        return len(self.sites)

    def as_record(self) -> dict:
        return {"L": self.length, "N": self.n_species, "sites": list(self.sites)}

    def __str__(self) -> str:
        return render(self)


class Counts(BaseModel):
    """Per-class populations P_1..P_N"""

    model_config = ConfigDict(frozen=True)

    populations: tuple[int, ...]

    @model_validator(mode="after")
    def check_populations(self) -> "Counts":
        if any(p < 0 for p in self.populations):
            raise ValueError(f"Populations must be non-negative: {self.populations}")
        return self

    @property
    def cumulative(self) -> tuple[int, ...]:
        """m_k = P_1 + ... + P_k"""
        total = 0
        cumulative = []
        for p in self.populations:
            total += p
            cumulative.append(total)
        return tuple(cumulative)

    @property
    def total(self) -> int:
        return sum(self.populations)


class Sector(BaseModel):
    """All ring configurations of length L with fixed populations"""

    model_config = ConfigDict(frozen=True)

    length: int
    populations: tuple[int, ...]

    @model_validator(mode="after")
    def check_sector(self) -> "Sector":
        if self.length < 1:
            raise ValueError(f"Ring length must be positive, got {self.length}")
        if any(p < 0 for p in self.populations):
            raise ValueError(f"Populations must be non-negative: {self.populations}")
        if sum(self.populations) > self.length:
            raise ValueError(
                f"{sum(self.populations)} particles do not fit on {self.length} sites"
            )
        return self

    @property
    def n_species(self) -> int:
        return len(self.populations)

    @property
    def holes(self) -> int:
        return self.length - sum(self.populations)

    @property
    def counts(self) -> Counts:
        return Counts(populations=self.populations)

    @property
    def size(self) -> int:
        """Multinomial L! / (P_1! ... P_N! (L - m_N)!)"""
        size = math.factorial(self.length) // math.factorial(self.holes)
        for p in self.populations:
            size //= math.factorial(p)
        return size

    def configurations(self, max_states: int | None = None) -> Iterator[Configuration]:
        """Configurations of the sector in lexicographic order"""
        if max_states is not None and self.size > max_states:
            raise EnumerationBoundError(
                f"Sector L={self.length}, P={self.populations} has {self.size} states, "
                f"more than the bound of {max_states}"
            )
        labels = [0] * self.holes
        for label, p in enumerate(self.populations, start=1):
            labels.extend([label] * p)
        for sites in multiset_permutations(labels):
            yield Configuration(sites=tuple(sites), n_species=self.n_species)

    def __str__(self) -> str:
        return f"L={self.length}, P=({','.join(str(p) for p in self.populations)})"


def parse_config(text: str, n_species: int | None = None) -> Configuration:
    """
    Parse a configuration from its canonical text, either a compact digit string
    ("2103") or comma-separated labels ("2,10,0"). The number of species defaults
    to the largest label present.
    """
    stripped = text.strip()
    if not stripped:
        raise ConfigurationParseError("Empty configuration text")

    tokens = stripped.split(",") if "," in stripped else list(stripped)
    sites = []
    for token in tokens:
        token = token.strip()
        if not (token.isascii() and token.isdigit()):
            raise ConfigurationParseError(f"Malformed label {token!r} in {text!r}")
        sites.append(int(token))

    highest = max(sites)
    if n_species is None:
        n_species = highest
    elif n_species < highest:
        raise ConfigurationParseError(
            f"Declared {n_species} species but label {highest} is present in {text!r}"
        )

    return Configuration(sites=tuple(sites), n_species=n_species)


def render(config: Configuration) -> str:
    if config.n_species <= 9:
        return "".join(str(label) for label in config.sites)
    return ",".join(str(label) for label in config.sites)


def particle_counts(config: Configuration) -> Counts:
    counter = Counter(config.sites)
    return Counts(
        populations=tuple(counter[k] for k in range(1, config.n_species + 1))
    )


def sector_of(config: Configuration) -> Sector:
    return Sector(length=config.length, populations=particle_counts(config).populations)


def rotate_sites(sites: tuple[int, ...], k: int) -> tuple[int, ...]:
    k %= len(sites)
    return sites[k:] + sites[:k]


def rotate(config: Configuration, k: int) -> Configuration:
    """Cyclic shift: site i of the result is site i + k of the input"""
    return Configuration(sites=rotate_sites(config.sites, k), n_species=config.n_species)


def canonical_sites(sites: tuple[int, ...]) -> tuple[int, ...]:
    """Lexicographically minimal rotation"""
    return min(rotate_sites(sites, k) for k in range(len(sites)))


def canonical_rotation(config: Configuration) -> Configuration:
    return Configuration(sites=canonical_sites(config.sites), n_species=config.n_species)


def reduce_species(config: Configuration) -> tuple[Configuration, dict[int, int]]:
    """
    Relabel the classes actually present to 1..N' preserving their order.
    Holes stay holes. Returns the reduced configuration and the relabeling.
    """
    present = sorted({label for label in config.sites if label > 0})
    relabel = {label: new for new, label in enumerate(present, start=1)}
    sites = tuple(relabel.get(label, 0) for label in config.sites)
    return Configuration(sites=sites, n_species=len(present)), relabel


def hop_allowed(left: int, right: int) -> bool:
    """Whether the pair (left, right) on a bond exchanges at rate 1"""
    return left >= 1 and (right == 0 or right > left)


def sectors(length: int, n_species: int) -> Iterator[Sector]:
    """All sectors of a ring of given length in which every class 1..N is present"""
    if n_species == 0:
        yield Sector(length=length, populations=())
        return

    def compositions(remaining: int, parts: int) -> Iterator[tuple[int, ...]]:
        if parts == 0:
            yield ()
            return
        for first in range(1, remaining - parts + 2):
            for rest in compositions(remaining - first, parts - 1):
                yield (first,) + rest

    for particles in range(n_species, length + 1):
        for populations in compositions(particles, n_species):
            yield Sector(length=length, populations=populations)
