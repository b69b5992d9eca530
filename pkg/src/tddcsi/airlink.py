"""Comb-pilot uplink sounding: pilot grid, noisy reception, LS estimates, real flattening."""
from dataclasses import dataclass

import numpy as np

QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)

# Layout id written to dataset headers and model manifests.
FLATTEN_LAYOUT = "re_block_im_block"
FLATTEN_LAYOUT_ID = 1


@dataclass(frozen=True)
class PilotGrid:
    n_subcarriers: int
    spacing: int

    def __post_init__(self):
        if not 1 <= self.spacing <= self.n_subcarriers:
            raise ValueError(f"pilot spacing must lie in [1, {self.n_subcarriers}], got {self.spacing}")

    @property
    def indices(self):
        return np.arange(0, self.n_subcarriers, self.spacing)

    @property
    def n_pilots(self):
        return -(-self.n_subcarriers // self.spacing)


def make_pilot_grid(n_subcarriers, spacing):
    return PilotGrid(int(n_subcarriers), int(spacing))


@dataclass(frozen=True, eq=False)
class PilotBlock:
    symbols: np.ndarray
    seed: int | None = None


@dataclass(frozen=True, eq=False)
class PilotCsi:
    values: np.ndarray
    snr_db: float | np.ndarray | None = None


def gen_pilot_symbols(grid, rng=None, size=None):
    """QPSK pilots for every pilot index; ``size`` adds leading batch axes.

    An integer ``rng`` is recorded as the block's seed.
    """
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    batch = () if size is None else tuple(np.atleast_1d(size))
    return PilotBlock(QPSK[rng.integers(0, 4, size=batch + (grid.n_pilots,))], seed)


def noise_variance(rx_power, snr_db):
    return rx_power / 10.0 ** (np.asarray(snr_db, dtype=np.float64) / 10.0)


def simulate_pilot_rx(h, block, grid, snr_db, rng=None):
    """Received pilots ``y = h*x + w`` at the pilot indices.

    Noise power is set per block against the empirical received pilot power.
    ``snr_db`` may be a per-block array; ``None`` or ``inf`` means noiseless.
    """
    h = np.asarray(h)
    sig = h[..., grid.indices] * block.symbols
    if snr_db is None:
        return sig
    snr = np.asarray(snr_db, dtype=np.float64)
    if np.all(np.isposinf(snr)):
        return sig
    if np.any(np.isnan(snr)) or np.any(np.isneginf(snr)):
        raise ValueError("SNR must be finite or +inf")
    rng = np.random.default_rng(rng)
    p_rx = np.mean(np.abs(sig) ** 2, axis=-1)
    sigma2 = noise_variance(p_rx, snr)  # +inf SNR gives zero variance
    w = (rng.standard_normal(sig.shape) + 1j * rng.standard_normal(sig.shape)) * np.sqrt(sigma2 / 2.0)[..., None]
    return sig + w


def ls_estimate(y, block, snr_db=None):
    x = block.symbols
    if np.shape(y) != np.shape(x):
        raise ValueError(f"received shape {np.shape(y)} does not match pilot shape {np.shape(x)}")
    if np.any(np.abs(x) < 1e-12):
        raise ZeroDivisionError("pilot symbol too close to zero for LS estimation")
    return PilotCsi(np.asarray(y) / x, snr_db)


def flatten_csi(values):
    """Complex ``(..., L)`` to real ``(..., 2L)``: all real parts, then all imaginary parts."""
    values = np.asarray(values)
    if values.shape[-1] < 1:
        raise ValueError("need at least one value")
    return np.concatenate([values.real, values.imag], axis=-1)


def unflatten_csi(flat):
    flat = np.asarray(flat)
    half, odd = divmod(flat.shape[-1], 2)
    if odd:
        raise ValueError("flattened CSI must have even length")
    out = np.empty(flat.shape[:-1] + (half,), dtype=np.result_type(flat.dtype, np.complex64))
    out.real = flat[..., :half]
    out.imag = flat[..., half:]
    return out
