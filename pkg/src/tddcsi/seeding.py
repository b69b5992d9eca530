"""Counter-based random streams derived from one master seed.

A stream is ``PCG64(SeedSequence(master_seed, spawn_key=(domain, *keys)))``.
Domains separate purposes (channel draws, RF chains, noise, pilots, SNR
draws, shuffling); keys are small integers (split, link, class, chunk, ...)
or strings, which are folded to integers with CRC32. Distinct key tuples give
statistically independent streams, so any sample can be regenerated alone and
chunks can be produced in any order.
"""
import zlib

import numpy as np

DOMAINS = {"channel": 0, "rf": 1, "noise": 2, "pilots": 3, "snr": 4, "shuffle": 5, "train": 6}
SPLITS = {"train": 0, "val": 1, "test": 2, "classifier": 3}


def _key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    return int(k)


def stream_key(domain, *keys):
    return (DOMAINS[domain],) + tuple(_key(k) for k in keys)


def stream(master_seed, domain, *keys):
    seq = np.random.SeedSequence(int(master_seed), spawn_key=stream_key(domain, *keys))
    return np.random.Generator(np.random.PCG64(seq))


def derived_seed(master_seed, domain, *keys):
    """A 63-bit integer seed for consumers that take an int (e.g. training)."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=stream_key(domain, *keys))
    return int(seq.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))
