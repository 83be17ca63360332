"""Master-seed substreams. Every random draw in the toolkit comes from here."""
import numpy as np

SEED_OFFSETS = {
    "init": 0,
    "data": 1_000,
    "latent": 2_000,
    "train": 3_000,
    "sample": 4_000,
    "eval": 5_000,
    "classifier": 6_000,
}

_SEED_MASK = (1 << 64) - 1


def derive_seed(master: int, stream: str, index: int = 0) -> int:
    if stream not in SEED_OFFSETS:
        raise KeyError(f"unknown seed stream {stream!r}")
    return int(master) + SEED_OFFSETS[stream] + int(index)


def trial_seed(master: int, trial: int) -> int:
    return int(master) + int(trial)


def make_rng(seed: int) -> np.random.Generator:
    # negative 64-bit seeds wrap to their unsigned value
    return np.random.default_rng(int(seed) & _SEED_MASK)


def rng_for(master: int, stream: str, index: int = 0) -> np.random.Generator:
    return make_rng(derive_seed(master, stream, index))
