"""Per-subcarrier RF chain gains that break uplink/downlink reciprocity.

Only the diagonal (per-chain) gains are modeled. Chains are drawn once per
link and then held fixed.
"""
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError

MIN_GAIN = 1e-6
RF_SIDECAR_MAGIC = b"TDRF"


@dataclass(frozen=True)
class RfChainConfig:
    mean_gain: complex = 1.0 + 0.0j
    variance: float = 0.1

    def __post_init__(self):
        if self.variance < 0:
            raise ConfigError("RF gain variance must be >= 0")
        if abs(self.mean_gain) == 0:
            raise ConfigError("RF mean gain must be nonzero")


@dataclass(frozen=True, eq=False)
class RfChainSet:
    """Gains of the UE transmit, AP receive, AP transmit and UE receive chains."""

    t_ul: np.ndarray
    r_ul: np.ndarray
    t_dl: np.ndarray
    r_dl: np.ndarray

    def __post_init__(self):
        vecs = [np.asarray(getattr(self, f), dtype=np.complex128) for f in ("t_ul", "r_ul", "t_dl", "r_dl")]
        n = len(vecs[0])
        for name, vec in zip(("t_ul", "r_ul", "t_dl", "r_dl"), vecs):
            if vec.shape != (n,):
                raise ValueError("all four chain vectors must have the same length")
            if not np.all(np.isfinite(vec)) or np.any(np.abs(vec) < MIN_GAIN):
                raise ValueError(f"{name} has non-finite or near-zero entries")
            vec.flags.writeable = False
            object.__setattr__(self, name, vec)

    @property
    def n_subcarriers(self):
        return len(self.t_ul)

    @classmethod
    def identity(cls, n_subcarriers):
        one = np.ones(n_subcarriers, dtype=np.complex128)
        return cls(one, one, one, one)

    def reciprocity_factor(self):
        """(r_dl*t_dl)/(r_ul*t_ul) per subcarrier."""
        return (self.r_dl * self.t_dl) / (self.r_ul * self.t_ul)

    def to_bytes(self):
        """Sidecar: magic, u32 N, then 4 vectors as little-endian float32 (re, im) pairs."""
        body = np.concatenate([self.t_ul, self.r_ul, self.t_dl, self.r_dl]).astype("<c8")
        return RF_SIDECAR_MAGIC + struct.pack("<I", self.n_subcarriers) + body.tobytes()

    @classmethod
    def from_bytes(cls, buf):
        if len(buf) < 8 or buf[:4] != RF_SIDECAR_MAGIC:
            raise FormatError("not an RF chain sidecar")
        (n,) = struct.unpack_from("<I", buf, 4)
        if len(buf) != 8 + 4 * n * 8:
            raise FormatError(f"RF sidecar length {len(buf)} does not match N={n}")
        vals = np.frombuffer(buf, dtype="<c8", offset=8).astype(np.complex128)
        return cls(*vals.reshape(4, n))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def gen_rf_chains(cfg, n_subcarriers, rng=None):
    """Draw 4*N i.i.d. CN(mean_gain, variance) gains; near-zero draws are redrawn.

    Gains are rounded to complex64 so the binary sidecar reproduces them exactly.
    """
    rng = np.random.default_rng(rng)
    scale = np.sqrt(cfg.variance / 2.0)
    gains = np.empty((4, n_subcarriers), dtype=np.complex128)
    for row in range(4):
        vec = cfg.mean_gain + scale * (rng.standard_normal(n_subcarriers) + 1j * rng.standard_normal(n_subcarriers))
        vec = vec.astype(np.complex64).astype(np.complex128)
        bad = np.abs(vec) < MIN_GAIN
        while bad.any():
            k = int(bad.sum())
            redraw = cfg.mean_gain + scale * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
            vec[bad] = redraw.astype(np.complex64)
            bad = np.abs(vec) < MIN_GAIN
        gains[row] = vec
    return RfChainSet(*gains)


def effective_channel(g, chains, direction):
    """End-to-end channel ``r*g*t`` on the last axis of ``g`` for direction ``"UL"`` or ``"DL"``."""
    g = np.asarray(g)
    if g.shape[-1] != chains.n_subcarriers:
        raise ValueError(f"channel has {g.shape[-1]} subcarriers, chains have {chains.n_subcarriers}")
    direction = str(direction).upper()
    if direction == "UL":
        return chains.r_ul * g * chains.t_ul
    if direction == "DL":
        return chains.r_dl * g * chains.t_dl
    raise ValueError(f"direction must be UL or DL, got {direction!r}")


def oracle_reciprocity(h_ul, chains):
    """Exact downlink channel from the uplink one given known chains (test/baseline oracle only)."""
    h_ul = np.asarray(h_ul)
    if h_ul.shape[-1] != chains.n_subcarriers:
        raise ValueError(f"channel has {h_ul.shape[-1]} subcarriers, chains have {chains.n_subcarriers}")
    denom = chains.r_ul * chains.t_ul
    if np.any(denom == 0):
        raise ZeroDivisionError("uplink chain gain is zero; reciprocity map is not invertible")
    return (chains.r_dl * chains.t_dl) * h_ul / denom
