"""Tapped-delay-line channels (3GPP TR 38.901 TDL-A..E) on an OFDM grid.

Tap gains are drawn per realization; ``freq_response`` evaluates the
channel analytically at the subcarrier frequencies, so tap delays are never
quantized to a sampling grid.
"""
import csv
import enum
from collections import namedtuple
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.special import j0

from .errors import ConfigError, FormatError

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_DELAY_SPREAD = 100e-9
PDP_FORMAT_VERSION = 1


class ChannelClass(enum.IntEnum):
    TDL_A = 0
    TDL_B = 1
    TDL_C = 2
    TDL_D = 3
    TDL_E = 4

    @property
    def letter(self):
        return self.name[-1]

    @property
    def has_los(self):
        return self in (ChannelClass.TDL_D, ChannelClass.TDL_E)

    @classmethod
    def parse(cls, text):
        """Accept ``ChannelClass`` members, ints, and spellings like ``C``, ``TDL-C``, ``tdl_c``."""
        if isinstance(text, cls):
            return text
        if isinstance(text, (int, np.integer)):
            try:
                return cls(int(text))
            except ValueError:
                raise ConfigError(f"unknown channel class index {text}") from None
        key = str(text).strip().upper().replace("-", "_")
        if len(key) == 1:
            key = "TDL_" + key
        try:
            return cls[key]
        except KeyError:
            raise ConfigError(f"unknown channel class {text!r}") from None


N_CLASSES = len(ChannelClass)

TapRecord = namedtuple("TapRecord", "channel_class tap_index normalized_delay power_db k_db")


@dataclass(frozen=True, eq=False)
class PowerDelayProfile:
    """Delays (s, strictly ascending), linear powers summing to one, optional K-factor of tap 0."""

    channel_class: ChannelClass
    delays: np.ndarray
    powers: np.ndarray
    los_k_db: float | None = None

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=np.float64)
        powers = np.asarray(self.powers, dtype=np.float64)
        if delays.ndim != 1 or delays.shape != powers.shape or len(delays) == 0:
            raise ConfigError("delays and powers must be equal-length 1-d arrays")
        if delays[0] < 0 or np.any(np.diff(delays) <= 0):
            raise ConfigError("tap delays must be non-negative and strictly ascending")
        if np.any(powers < 0) or abs(powers.sum() - 1.0) > 1e-12:
            raise ConfigError("tap powers must be non-negative and sum to one")
        if (self.los_k_db is not None) != ChannelClass(self.channel_class).has_los:
            raise ConfigError(f"K-factor must be given exactly for LOS profiles ({self.channel_class.name})")
        delays.flags.writeable = False
        powers.flags.writeable = False
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "powers", powers)

    @property
    def n_taps(self):
        return len(self.delays)

    @property
    def k_linear(self):
        return None if self.los_k_db is None else 10.0 ** (self.los_k_db / 10.0)

    def los_power(self):
        """Specular share of tap 0 (zero for NLOS profiles)."""
        if self.los_k_db is None:
            return 0.0
        k = self.k_linear
        return self.powers[0] * k / (k + 1.0)

    def diffuse_powers(self):
        """Per-tap variance of the Rayleigh part."""
        out = self.powers.copy()
        if self.los_k_db is not None:
            out[0] /= self.k_linear + 1.0  # not p0 - los_power(), which cancels for large K
        return out


def read_tdl_table(path=None):
    """Raw rows of the TDL data file, in file order, keyed by class."""
    if path is None:
        text = resources.files("tddcsi").joinpath("data/tdl_pdp.csv").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    table = {c: [] for c in ChannelClass}
    for lineno, row in enumerate(csv.reader(lines), 1):
        if len(row) not in (4, 5):
            raise FormatError(f"PDP data row {lineno}: expected 4 or 5 fields, got {len(row)}")
        try:
            cls = ChannelClass.parse(row[0])
            k_db = float(row[4]) if len(row) == 5 and row[4].strip() else None
            rec = TapRecord(cls, int(row[1]), float(row[2]), float(row[3]), k_db)
        except ValueError as exc:
            raise FormatError(f"PDP data row {lineno}: {exc}") from None
        table[cls].append(rec)
    return table


def load_pdp(channel_class, delay_spread=DEFAULT_DELAY_SPREAD, path=None):
    """Profile of one TDL class with normalized delays scaled by ``delay_spread``.

    Taps are sorted by delay and taps sharing a delay are merged (their
    Rayleigh parts add in power), so the result satisfies the ascending-delay
    invariant; the tabulated order is kept in the data file.
    """
    cls = ChannelClass.parse(channel_class)
    if not delay_spread > 0:
        raise ConfigError("delay_spread must be positive")
    rows = read_tdl_table(path)[cls]
    if not rows:
        raise ConfigError(f"no taps for {cls.name} in PDP data")
    k_db = rows[0].k_db
    if any(r.k_db is not None for r in rows[1:]):
        raise FormatError("only tap 0 may carry a K-factor")
    norm = np.array([r.normalized_delay for r in rows])
    lin = 10.0 ** (np.array([r.power_db for r in rows]) / 10.0)
    lin /= lin.sum()
    # tap 0 sits at delay 0 in every table; a stable sort keeps it first
    order = np.argsort(norm, kind="stable")
    uniq, first = np.unique(norm[order], return_index=True)
    merged = np.add.reduceat(lin[order], first)
    merged /= merged.sum()
    return PowerDelayProfile(cls, uniq * delay_spread, merged, k_db)


@dataclass(frozen=True)
class DopplerSpec:
    ue_speed: float  # m/s
    carrier_hz: float

    def __post_init__(self):
        if self.ue_speed < 0 or self.carrier_hz <= 0:
            raise ConfigError("speed must be >= 0 and carrier > 0")

    @classmethod
    def from_kmph(cls, speed_kmph, carrier_hz):
        return cls(speed_kmph / 3.6, carrier_hz)

    @property
    def f_d(self):
        return self.ue_speed * self.carrier_hz / SPEED_OF_LIGHT


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Tap gains of one or a batch (leading axes) of channel draws.

    ``diffuse`` holds the Rayleigh part of every tap, ``los`` the specular
    part of tap 0. ``diffuse_power`` is the per-tap variance of ``diffuse``
    (already scaled by ``beta``); evolution needs it to keep variances stationary.
    """

    diffuse: np.ndarray
    los: np.ndarray
    diffuse_power: np.ndarray
    beta: float = 1.0
    time_s: float = 0.0

    @property
    def taps(self):
        taps = self.diffuse.copy()
        taps[..., 0] += self.los
        return taps


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def realize_channel(pdp, beta=1.0, rng=None, size=None):
    """Draw tap gains: CN(0, beta*p_i) per tap, plus a unit-power LOS ray of random phase for D/E.

    ``size`` adds leading batch axes (int or tuple).
    """
    if not beta > 0:
        raise ConfigError("beta must be positive")
    rng = np.random.default_rng(rng)
    batch = () if size is None else tuple(np.atleast_1d(size))
    diffuse_power = beta * pdp.diffuse_powers()
    diffuse = _cn(rng, batch + (pdp.n_taps,)) * np.sqrt(diffuse_power)
    if pdp.los_k_db is not None:
        phase = rng.random(batch)
        los = np.sqrt(beta * pdp.los_power()) * np.exp(2j * np.pi * phase)
    else:
        los = np.zeros(batch, dtype=np.complex128)
    return ChannelRealization(diffuse, np.asarray(los, dtype=np.complex128), diffuse_power, beta, 0.0)


def jakes_correlation(f_d, dt):
    return float(j0(2.0 * np.pi * f_d * dt))


def evolve_channel(ch, dt, doppler, rng=None):
    """Advance ``ch`` by ``dt`` seconds.

    Diffuse taps follow a first-order Gauss-Markov step with Jakes
    correlation J0(2*pi*f_d*dt); the LOS ray turns by its Doppler phase
    (arrival along the direction of travel).
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return ChannelRealization(ch.diffuse.copy(), ch.los.copy(), ch.diffuse_power, ch.beta, ch.time_s)
    rng = np.random.default_rng(rng)
    rho = jakes_correlation(doppler.f_d, dt)
    innov = _cn(rng, ch.diffuse.shape) * np.sqrt(ch.diffuse_power)
    diffuse = rho * ch.diffuse + np.sqrt(1.0 - rho * rho) * innov
    los = ch.los * np.exp(2j * np.pi * doppler.f_d * dt)
    return ChannelRealization(diffuse, los, ch.diffuse_power, ch.beta, ch.time_s + dt)


def steering_matrix(delays, n_subcarriers, scs):
    """``E[i, n] = exp(-j*2*pi*n*scs*tau_i)``."""
    n = np.arange(n_subcarriers, dtype=np.float64)
    return np.exp(-2j * np.pi * np.outer(np.asarray(delays, dtype=np.float64) * scs, n))


def freq_response(ch, pdp, n_subcarriers, scs):
    """Channel at subcarriers ``n = 0..N-1``: ``H(n) = sum_i tap_i * exp(-j*2*pi*n*scs*tau_i)``.

    ``ch`` may be a ``ChannelRealization`` or a raw array of tap gains whose
    last axis matches ``pdp.delays``.
    """
    if n_subcarriers < 1 or not scs > 0:
        raise ValueError("need n_subcarriers >= 1 and scs > 0")
    taps = ch.taps if isinstance(ch, ChannelRealization) else np.asarray(ch, dtype=np.complex128)
    if taps.shape[-1] != pdp.n_taps:
        raise ValueError(f"{taps.shape[-1]} taps for a {pdp.n_taps}-tap profile")
    return taps @ steering_matrix(pdp.delays, n_subcarriers, scs)
