"""Experiment configuration and its flat ``key = value`` file format."""
import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from functools import cached_property

from .. import seeding
from ..airlink import make_pilot_grid
from ..chanmodel import ChannelClass, DopplerSpec, load_pdp
from ..errors import ConfigError
from ..neuralcore import TrainConfig
from ..rffront import RfChainConfig, gen_rf_chains

ALL_CLASSES = tuple(ChannelClass)


@dataclass(frozen=True)
class ExperimentConfig:
    n_subcarriers: int = 256
    scs_hz: float = 30e3
    carrier_hz: float = 3.5e9
    sample_rate_hz: float = 1e8  # recorded only; tap delays are not quantized
    ue_speed_kmph: float = 20.0
    pilot_spacing: int = 24
    snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    classes: tuple = ALL_CLASSES
    rf_mean_gain: complex = 1 + 0j
    rf_variance: float = 0.1
    delay_spread_s: float = 100e-9
    beta: float = 1.0
    tdd_delay_s: float = 5e-4
    train_snr_min_db: float = 0.0
    train_snr_max_db: float = 30.0
    m_aps: int = 1
    k_ues: int = 1
    link_id: int = 0
    n_train: int = 50_000
    n_val: int = 5_000
    n_classifier: int = 10_000
    n_test: int = 10_000
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    early_stop_patience: int = 10
    master_seed: int = 0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(ChannelClass.parse(c) for c in self.classes))
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        positive = ("n_subcarriers", "scs_hz", "carrier_hz", "sample_rate_hz", "pilot_spacing",
                    "delay_spread_s", "beta", "m_aps", "k_ues", "n_train", "n_val", "n_classifier",
                    "n_test", "learning_rate", "batch_size", "max_epochs", "early_stop_patience")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.ue_speed_kmph < 0 or self.tdd_delay_s < 0 or self.rf_variance < 0:
            raise ConfigError("ue_speed_kmph, tdd_delay_s and rf_variance must be >= 0")
        if not self.snr_grid_db:
            raise ConfigError("snr_grid_db must not be empty")
        if not self.classes:
            raise ConfigError("classes must not be empty")
        if self.train_snr_min_db > self.train_snr_max_db:
            raise ConfigError("train_snr_min_db exceeds train_snr_max_db")
        if self.pilot_spacing > self.n_subcarriers:
            raise ConfigError("pilot_spacing exceeds n_subcarriers")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def doppler(self):
        return DopplerSpec.from_kmph(self.ue_speed_kmph, self.carrier_hz)

    @property
    def rf(self):
        return RfChainConfig(complex(self.rf_mean_gain), self.rf_variance)

    def pdp(self, channel_class):
        key = ("pdp", ChannelClass.parse(channel_class))
        if key not in self._cache:
            self._cache[key] = load_pdp(key[1], self.delay_spread_s)
        return self._cache[key]

    def grid(self, spacing=None):
        return make_pilot_grid(self.n_subcarriers, spacing or self.pilot_spacing)

    def chains(self, link_id=None):
        """RF chain set of a link; fixed for the lifetime of the experiment."""
        link = self.link_id if link_id is None else link_id
        key = ("chains", link)
        if key not in self._cache:
            self._cache[key] = gen_rf_chains(self.rf, self.n_subcarriers, seeding.stream(self.master_seed, "rf", link))
        return self._cache[key]

    def train_config(self, *keys):
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            early_stop_patience=self.early_stop_patience,
            seed=seeding.derived_seed(self.master_seed, "train", *keys),
        )

    def to_text(self):
        lines = []
        for f in _public_fields():
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @cached_property
    def config_hash(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]


def _public_fields():
    return [f for f in fields(ExperimentConfig) if not f.name.startswith("_")]


def _format_value(value):
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, ChannelClass):
        return value.name
    if isinstance(value, complex):
        return repr(value).strip("()")
    return repr(value)


def _parse_value(name, kind, text):
    text = text.strip()
    try:
        if name == "classes":
            return tuple(ChannelClass.parse(t) for t in text.split(",") if t.strip())
        if name == "snr_grid_db":
            return tuple(float(t) for t in text.split(",") if t.strip())
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is complex:
            return complex(text.replace(" ", ""))
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r} ({exc})") from None
    raise ConfigError(f"{name}: unsupported field type")


_TYPES = {"n_subcarriers": int, "pilot_spacing": int, "m_aps": int, "k_ues": int, "link_id": int,
          "n_train": int, "n_val": int, "n_classifier": int, "n_test": int, "batch_size": int,
          "max_epochs": int, "early_stop_patience": int, "master_seed": int, "rf_mean_gain": complex,
          "snr_grid_db": tuple, "classes": tuple}


def parse_config(text, base=None):
    """Parse ``key = value`` lines (``#`` starts a comment) over defaults or ``base``."""
    known = {f.name for f in _public_fields()}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, _TYPES.get(key, float), value)
    base = base or ExperimentConfig()
    return base.replace(**values)


def load_config(path, base=None):
    with open(path) as fh:
        return parse_config(fh.read(), base)
