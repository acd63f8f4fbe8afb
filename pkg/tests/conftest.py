from datetime import date

import pytest

from deeporigin.classifier import LabeledDataset
from deeporigin.rng import RngStream
from deeporigin.synth import SyntheticFamilySpec, generate_family, random_prototype


def make_dataset(
    families: int,
    dimension: int,
    samples_per_family: int,
    flip_rate: float = 0.02,
    seed: int = 1,
    label_prefix: str = "fam",
    date_start: date = date(2016, 1, 1),
    date_end: date = date(2017, 12, 31),
) -> LabeledDataset:
    proto_rng = RngStream(seed, "protos")
    samples = []
    for i in range(families):
        label = f"{label_prefix}{i:02d}"
        spec = SyntheticFamilySpec(
            family_label=label,
            prototype=random_prototype(dimension, proto_rng),
            dimension=dimension,
            flip_rate=flip_rate,
            sample_count=samples_per_family,
            date_start=date_start,
            date_end=date_end,
        )
        samples.extend(generate_family(spec, RngStream(seed, f"gen:{label}")))
    return LabeledDataset.from_samples(samples)


@pytest.fixture(scope="session")
def separable_dataset() -> LabeledDataset:
    # 3 well-separated Bernoulli clusters, 20-dim, ~200 samples
    return make_dataset(families=3, dimension=20, samples_per_family=67, flip_rate=0.0)
