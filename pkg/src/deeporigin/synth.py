"""Synthetic labeled corpora with controllable cluster structure.

Each family is a Bernoulli cluster: a fixed Boolean prototype of dimension D
whose samples flip every bit independently with a small probability, standing
in for obfuscated variants of one malware family. First-seen dates are drawn
uniformly from the family's date range so the temporal split protocol can be
exercised end to end.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .classifier import LabeledSample
from .errors import ConfigError, DataError
from .rng import RngStream
from .vectorizer import FeatureVector


@dataclass(frozen=True)
class SyntheticFamilySpec:
    family_label: str
    prototype: tuple[int, ...]  # set indices of the prototype bit vector
    dimension: int
    flip_rate: float
    sample_count: int
    date_start: date
    date_end: date

    def validate(self) -> None:
        if not 0.0 <= self.flip_rate < 0.5:
            raise ConfigError(
                f"flip_rate must be in [0, 0.5) so samples stay near their "
                f"prototype, got {self.flip_rate}"
            )
        if self.sample_count < 1:
            raise ConfigError(f"sample_count must be >= 1, got {self.sample_count}")
        if self.dimension < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dimension}")
        if any(not 0 <= i < self.dimension for i in self.prototype):
            raise ConfigError("prototype indices out of range")
        if self.date_end < self.date_start:
            raise ConfigError("date_end precedes date_start")


def generate_family(spec: SyntheticFamilySpec, rng: RngStream) -> list[LabeledSample]:
    """Draw sample_count prototype variants; deterministic under the stream."""
    spec.validate()
    proto = np.zeros(spec.dimension, dtype=np.float64)
    if spec.prototype:
        proto[list(spec.prototype)] = 1.0
    span_days = (spec.date_end - spec.date_start).days
    samples = []
    for i in range(spec.sample_count):
        if spec.flip_rate > 0.0:
            flips = rng.uniform(spec.dimension) < spec.flip_rate
            bits = np.where(flips, 1.0 - proto, proto)
        else:
            bits = proto
        offset = int(rng.integers(0, span_days)) if span_days > 0 else 0
        indices = tuple(int(j) for j in np.flatnonzero(bits))
        samples.append(
            LabeledSample(
                sample_id=f"{spec.family_label}-{i:04d}",
                vector=FeatureVector(dimension=spec.dimension, set_indices=indices),
                family_label=spec.family_label,
                first_seen=spec.date_start + timedelta(days=offset),
            )
        )
    return samples


def temporal_split(samples: list[LabeledSample], cutoff: date):
    """Partition by first-seen date: strictly before cutoff trains, rest tests."""
    train = [s for s in samples if s.first_seen < cutoff]
    test = [s for s in samples if s.first_seen >= cutoff]
    if not train:
        raise DataError("empty train: every sample is on or after the cutoff")
    if not test:
        raise DataError("empty test: every sample predates the cutoff")
    return train, test


def random_prototype(dimension: int, rng: RngStream, density: float = 0.5) -> tuple[int, ...]:
    bits = rng.uniform(dimension) < density
    return tuple(int(i) for i in np.flatnonzero(bits))


def hamming(a: tuple[int, ...], b: tuple[int, ...]) -> int:
    return len(set(a) ^ set(b))


def separated_prototype(
    dimension: int,
    existing: list[tuple[int, ...]],
    rng: RngStream,
    min_separation_fraction: float = 0.2,
    max_tries: int = 1000,
) -> tuple[int, ...]:
    """Rejection-sample a prototype at least min_separation from every other."""
    floor = min_separation_fraction * dimension
    for _ in range(max_tries):
        candidate = random_prototype(dimension, rng)
        if all(hamming(candidate, p) >= floor for p in existing):
            return candidate
    raise DataError(
        f"could not place a prototype {floor:.0f} bits from all "
        f"{len(existing)} existing prototypes after {max_tries} tries"
    )
