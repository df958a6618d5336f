"""
Gerador de conjuntos sintéticos com corrupção controlada.

Cada identidade tem um protótipo na esfera unitária. Amostras limpas são
protótipo + ruído (q_true = 1). Com probabilidade rho uma amostra é
corrompida: mistura com um distrator (fundo aleatório ou o protótipo de
outra identidade) com intensidade beta, e q_true = 1 − beta.
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from modules.qan_model import ImageSet, Sample
from utils.exceptions import ConfigError, DimensionError, QanError
from utils.netcore import RngState
from utils.validators import validar_gen_spec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenSpec:
    n_identities: int = 100
    sets_per_identity: int = 2
    samples_per_set: int = 8
    d_in: int = 32
    rho: float = 0.3
    beta_lo: float = 0.5
    beta_hi: float = 0.95
    noise_sigma: float = 0.1
    seed: int = 0
    n_test_identities: int = 0

    def __post_init__(self):
        ok, msg = validar_gen_spec(self)
        if not ok:
            raise ConfigError(msg)


@dataclass(frozen=True, eq=False)
class Dataset:
    sets: tuple
    d_in: int

    def __post_init__(self):
        sets = tuple(self.sets)
        for image_set in sets:
            for sample in image_set.samples:
                if len(sample.x) != self.d_in:
                    raise DimensionError(
                        f"conjunto {image_set.set_id}: amostra de tamanho {len(sample.x)}, d_in={self.d_in}"
                    )
        object.__setattr__(self, "sets", sets)

    @cached_property
    def identities(self):
        return sorted({s.identity for s in self.sets})

    @cached_property
    def sets_by_identity(self):
        grouped = {}
        for image_set in self.sets:
            grouped.setdefault(image_set.identity, []).append(image_set)
        return grouped

    def samples(self):
        return [sample for image_set in self.sets for sample in image_set.samples]

    @property
    def num_samples(self):
        return sum(len(s) for s in self.sets)

    def subset(self, identities):
        """Novo Dataset apenas com os conjuntos das identidades dadas"""
        keep = set(identities)
        return Dataset(tuple(s for s in self.sets if s.identity in keep), self.d_in)

    def equals(self, other):
        if self.d_in != other.d_in or len(self.sets) != len(other.sets):
            return False
        for a, b in zip(self.sets, other.sets):
            if (a.identity, a.set_id, len(a)) != (b.identity, b.set_id, len(b)):
                return False
            if not (np.array_equal(a.X, b.X) and np.array_equal(a.q_true, b.q_true)):
                return False
        return True


def _unit_vectors(rng, count, dim):
    v = rng.normal(size=(count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def generate(spec):
    """Gera n_identities + n_test_identities identidades; determinístico pela seed"""
    rng = RngState(spec.seed)
    n_total = spec.n_identities + spec.n_test_identities
    prototypes = _unit_vectors(rng, n_total, spec.d_in)
    sets = []
    set_id = 0
    corrupted = 0
    for identity in range(n_total):
        prototype = prototypes[identity]
        for _ in range(spec.sets_per_identity):
            samples = []
            for _ in range(spec.samples_per_set):
                is_corrupted = rng.random() < spec.rho
                noise = rng.normal(0.0, spec.noise_sigma, size=spec.d_in)
                if not is_corrupted:
                    samples.append(Sample(prototype + noise, identity, 1.0))
                    continue
                beta = rng.uniform(spec.beta_lo, spec.beta_hi)
                if rng.random() < 0.5 or n_total == 1:
                    distractor = _unit_vectors(rng, 1, spec.d_in)[0]
                else:
                    other = int(rng.integers(n_total - 1))
                    distractor = prototypes[other if other < identity else other + 1]
                x = (1.0 - beta) * prototype + beta * distractor + noise
                samples.append(Sample(x, identity, 1.0 - beta))
                corrupted += 1
            sets.append(ImageSet(tuple(samples), identity, set_id))
            set_id += 1
    dataset = Dataset(tuple(sets), spec.d_in)
    logger.info(
        "Gerados %d conjuntos, %d amostras (%d corrompidas)",
        len(dataset.sets), dataset.num_samples, corrupted,
    )
    return dataset


def split_train_test(dataset, n_train):
    """Separa identidades < n_train (treino) das demais (teste), sem sobreposição"""
    identities = dataset.identities
    train_ids = [i for i in identities if i < n_train]
    test_ids = [i for i in identities if i >= n_train]
    if not train_ids:
        raise QanError("nenhuma identidade de treino")
    train = dataset.subset(train_ids)
    test = dataset.subset(test_ids) if test_ids else None
    return train, test


def save(dataset, path):
    from database.qanset import save_dataset
    save_dataset(dataset, path)


def load(path):
    from database.qanset import load_dataset
    return load_dataset(path)
