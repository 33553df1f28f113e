"""Производные потоки случайных чисел от главного seed."""
import numpy as np

_SEED_MASK = (1 << 64) - 1


def derive_seed(master: int, *keys: int) -> int:
    """
    Детерминированно выводит 64-битный seed из главного seed и пути ключей.

    Один и тот же путь ``keys`` всегда даёт тот же seed, разные пути независимы.
    """
    sequence = np.random.SeedSequence(int(master) & _SEED_MASK, spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def individual_stream(seed: int, individual: int) -> np.random.Generator:
    """
    Счётчиковый поток индивида: Philox с ключом ``seed`` и счётчиком, сдвинутым на 2^64·i.

    Поток зависит только от (seed, i), но не от порядка обработки индивидов.
    """
    counter = np.array([0, individual, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=int(seed) & _SEED_MASK, counter=counter))
