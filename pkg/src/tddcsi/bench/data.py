"""Link sample generation and the binary dataset format.

One sample follows the uplink/downlink flow of a single AP-UE link: draw
the physical channel, pass it through the uplink RF chains, receive noisy
pilots, LS-estimate and flatten them (input); advance the channel by the TDD
turnaround, pass it through the downlink chains and flatten the full band
(target). Chains are fixed per link.
"""
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .. import seeding
from ..airlink import (FLATTEN_LAYOUT_ID, flatten_csi, gen_pilot_symbols, ls_estimate,
                       simulate_pilot_rx)
from ..chanmodel import ChannelClass, evolve_channel, freq_response, realize_channel
from ..errors import FormatError
from ..rffront import RfChainSet, effective_channel

CHUNK = 1000
DATASET_MAGIC = b"TDDS"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sHIIBBI")


@dataclass(frozen=True, eq=False)
class LinkSample:
    input: np.ndarray
    target: np.ndarray
    channel_class: ChannelClass
    snr_db: float
    link_id: int


@dataclass(eq=False)
class LinkDataset:
    """Samples of one class on one link, as float32 arrays.

    ``split`` and ``link_id`` identify the random stream domain the samples
    came from; training and test data never share one.
    """

    inputs: np.ndarray
    targets: np.ndarray
    snr_db: np.ndarray
    channel_class: ChannelClass
    n_subcarriers: int
    n_pilots: int
    link_id: int = 0
    split: str = "train"
    master_seed: int = 0
    tag: str = ""

    def __len__(self):
        return len(self.inputs)

    def sample(self, i):
        return LinkSample(self.inputs[i], self.targets[i], self.channel_class, float(self.snr_db[i]), self.link_id)

    def one_hot(self, n_classes=len(ChannelClass)):
        out = np.zeros((len(self), n_classes), dtype=np.float32)
        out[:, int(self.channel_class)] = 1.0
        return out


def sample_streams(master_seed, split, link_id, channel_class, tag, chunk):
    keys = (seeding.SPLITS[split], link_id, int(ChannelClass.parse(channel_class)), tag, chunk)
    return {d: seeding.stream(master_seed, d, *keys) for d in ("channel", "noise", "pilots", "snr")}


def gen_batch(cfg, channel_class, count, chains, streams, snr_db=None, grid=None):
    """Vectorized generation of ``count`` samples.

    ``snr_db=None`` draws each sample's SNR uniformly from the training range;
    ``inf`` gives noiseless pilots. Returns ``(inputs, targets, snr)`` as float32.
    """
    cls = ChannelClass.parse(channel_class)
    grid = grid or cfg.grid()
    pdp = cfg.pdp(cls)
    n, scs = cfg.n_subcarriers, cfg.scs_hz
    ch = realize_channel(pdp, cfg.beta, streams["channel"], size=count)
    h_ul = effective_channel(freq_response(ch, pdp, n, scs), chains, "UL")
    block = gen_pilot_symbols(grid, streams["pilots"], size=count)
    if snr_db is None:
        snr = streams["snr"].uniform(cfg.train_snr_min_db, cfg.train_snr_max_db, count)
    else:
        snr = np.full(count, float(snr_db))
    y = simulate_pilot_rx(h_ul, block, grid, snr, streams["noise"])
    est = ls_estimate(y, block)
    ch_dl = evolve_channel(ch, cfg.tdd_delay_s, cfg.doppler, streams["channel"])
    h_dl = effective_channel(freq_response(ch_dl, pdp, n, scs), chains, "DL")
    return (flatten_csi(est.values).astype(np.float32),
            flatten_csi(h_dl).astype(np.float32),
            snr.astype(np.float32))


def gen_sample(cfg, channel_class, snr_db, chains, index=0, split="train", link_id=0, tag="", grid=None):
    """One sample, reproducible from (master seed, split, link, class, tag, index)."""
    streams = sample_streams(cfg.master_seed, split, link_id, channel_class, f"{tag}#{index}", 0)
    x, y, snr = gen_batch(cfg, channel_class, 1, chains, streams, snr_db, grid)
    return LinkSample(x[0], y[0], ChannelClass.parse(channel_class), float(snr[0]), link_id)


def gen_class_dataset(cfg, channel_class, count, split="train", chains=None, link_id=None,
                      snr_db=None, grid=None, tag=""):
    """``count`` samples of one class, produced in independently seeded chunks."""
    if count < 1:
        raise ValueError("count must be >= 1")
    link = cfg.link_id if link_id is None else link_id
    chains = chains if chains is not None else cfg.chains(link)
    grid = grid or cfg.grid()
    xs, ys, ss = [], [], []
    for chunk, start in enumerate(range(0, count, CHUNK)):
        streams = sample_streams(cfg.master_seed, split, link, channel_class, tag, chunk)
        x, y, s = gen_batch(cfg, channel_class, min(CHUNK, count - start), chains, streams, snr_db, grid)
        xs.append(x)
        ys.append(y)
        ss.append(s)
    return LinkDataset(np.concatenate(xs), np.concatenate(ys), np.concatenate(ss),
                       ChannelClass.parse(channel_class), cfg.n_subcarriers, grid.n_pilots,
                       link, split, cfg.master_seed, tag)


def gen_dataset(cfg, counts, split="train", chains=None, link_id=None, snr_db=None, grid=None,
                tag="", out_dir=None):
    """Per-class datasets for ``counts`` (class -> sample count); optionally written to ``out_dir``."""
    out = {}
    for cls, count in counts.items():
        cls = ChannelClass.parse(cls)
        out[cls] = gen_class_dataset(cfg, cls, count, split, chains, link_id, snr_db, grid, tag)
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            save_dataset(out[cls], dataset_path(out_dir, split, cls, out[cls].link_id),
                         chains if chains is not None else cfg.chains(out[cls].link_id))
    return out


def gen_multilink(cfg, m_aps, k_ues, counts, split="train", snr_db=None, grid=None, tag=""):
    """Independent datasets for every AP-UE link; each link has its own chains and streams.

    Returns ``{(m, k): {class: LinkDataset}}``; link ``(m, k)`` has id ``m*k_ues + k``.
    """
    if m_aps < 1 or k_ues < 1:
        raise ValueError("need at least one AP and one UE")
    links = {}
    for m in range(m_aps):
        for k in range(k_ues):
            link = m * k_ues + k
            links[(m, k)] = gen_dataset(cfg, counts, split, cfg.chains(link), link, snr_db, grid, tag)
    return links


def dataset_path(out_dir, split, channel_class, link_id=0):
    cls = ChannelClass.parse(channel_class)
    return os.path.join(out_dir, f"{split}_link{link_id}_{cls.letter}.tdds")


def dataset_to_bytes(ds):
    head = _HEADER.pack(DATASET_MAGIC, DATASET_VERSION, ds.n_subcarriers, ds.n_pilots,
                        FLATTEN_LAYOUT_ID, int(ds.channel_class), len(ds))
    rec = np.concatenate([ds.inputs, ds.targets, ds.snr_db[:, None]], axis=1).astype("<f4")
    return head + rec.tobytes()


def dataset_from_bytes(buf, **meta):
    if len(buf) < _HEADER.size:
        raise FormatError("dataset file truncated (shorter than header)")
    magic, version, n, n_p, layout, cls, count = _HEADER.unpack_from(buf, 0)
    if magic != DATASET_MAGIC:
        raise FormatError("bad magic; not a dataset file")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    if layout != FLATTEN_LAYOUT_ID:
        raise FormatError(f"unknown flatten layout id {layout}")
    width = 2 * n_p + 2 * n + 1
    if len(buf) != _HEADER.size + 4 * width * count:
        raise FormatError(f"dataset body has {len(buf) - _HEADER.size} bytes, header implies {4 * width * count}")
    rec = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(count, width).astype(np.float32)
    return LinkDataset(np.ascontiguousarray(rec[:, : 2 * n_p]), np.ascontiguousarray(rec[:, 2 * n_p : -1]),
                       np.ascontiguousarray(rec[:, -1]), ChannelClass(cls), n, n_p, **meta)


def save_dataset(ds, path, chains=None):
    """Write ``path`` plus a JSON metadata sidecar and, if given, the RF chain sidecar."""
    with open(path, "wb") as fh:
        fh.write(dataset_to_bytes(ds))
    meta = {"link_id": ds.link_id, "split": ds.split, "master_seed": ds.master_seed, "tag": ds.tag}
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True)
    if chains is not None:
        chains.save(path + ".rf")


def load_dataset(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    meta = {}
    if os.path.exists(path + ".meta.json"):
        with open(path + ".meta.json") as fh:
            meta = json.load(fh)
    return dataset_from_bytes(buf, **meta)


def load_chains(path):
    return RfChainSet.load(path + ".rf")
