import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tddcsi import seeding
from tddcsi.airlink import unflatten_csi
from tddcsi.bench import data as bdata
from tddcsi.bench.config import ExperimentConfig, load_config, parse_config
from tddcsi.bench.metrics import accuracy, metric_mse, metric_nmse
from tddcsi.bench.sweeps import COLUMNS, SweepResult, read_csv, run_accuracy_sweep, run_mse_sweep
from tddcsi.cascade import TddnetModel, classifier_spec, predictor_spec
from tddcsi.chanmodel import ChannelClass
from tddcsi.errors import ConfigError, FormatError
from tddcsi.neuralcore import init_model

SMALL = ExperimentConfig(n_train=300, n_val=100, n_classifier=200, n_test=300, max_epochs=2,
                         snr_grid_db=(0.0, 30.0))


# -- config ---------------------------------------------------------------

def test_default_config_numbers():
    cfg = ExperimentConfig()
    assert (cfg.n_subcarriers, cfg.scs_hz, cfg.carrier_hz, cfg.sample_rate_hz) == (256, 30e3, 3.5e9, 1e8)
    assert cfg.ue_speed_kmph == 20 and cfg.pilot_spacing == 24
    assert cfg.grid().n_pilots == 11
    assert cfg.snr_grid_db == (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    assert cfg.classes == tuple(ChannelClass)


def test_config_text_round_trip(tmp_path):
    cfg = ExperimentConfig(rf_mean_gain=0.9 - 0.1j, classes=("A", "E"), master_seed=2**63 + 5)
    path = tmp_path / "exp.cfg"
    path.write_text("# experiment\n" + cfg.to_text())
    back = load_config(path)
    assert back == cfg
    assert back.config_hash == cfg.config_hash
    assert cfg.replace(master_seed=1).config_hash != cfg.config_hash


def test_config_parsing_rules():
    cfg = parse_config("pilot_spacing = 16   # sparser comb\n\nsnr_grid_db = 0, 10\nclasses = tdl-c\n")
    assert cfg.pilot_spacing == 16 and cfg.snr_grid_db == (0.0, 10.0) and cfg.classes == (ChannelClass.TDL_C,)
    for text, msg in (("nonsense = 1", "unknown key"), ("n_train = 5\nn_train = 6", "duplicate"),
                      ("n_train", "expected"), ("n_train = many", "cannot parse"), ("classes = Z", "unknown")):
        with pytest.raises(ConfigError, match=msg):
            parse_config(text)


@pytest.mark.parametrize("field,value", [("n_subcarriers", 0), ("scs_hz", -1.0), ("rf_variance", -0.1),
                                         ("snr_grid_db", ()), ("pilot_spacing", 300), ("train_snr_min_db", 40.0)])
def test_config_invariants(field, value):
    with pytest.raises(ConfigError):
        ExperimentConfig(**{field: value})


# -- seeding ----------------------------------------------------------------

def test_streams_are_keyed():
    draw = lambda *k: seeding.stream(0, *k).random(4).tolist()  # noqa: E731
    assert draw("channel", 0, 1) == draw("channel", 0, 1)
    assert draw("channel", 0, 1) != draw("noise", 0, 1)
    assert draw("channel", 0, 1) != draw("channel", 0, 2)
    assert draw("channel", "x") != draw("channel", "y")
    assert seeding.stream(1, "channel").random() != seeding.stream(0, "channel").random()
    assert 0 <= seeding.derived_seed(0, "train", 1) < 2**63


# -- samples and datasets -------------------------------------------------------

def test_sample_dimensions_and_reproducibility():
    cfg = ExperimentConfig()
    chains = cfg.chains()
    a = bdata.gen_sample(cfg, "C", 10.0, chains, index=4)
    b = bdata.gen_sample(cfg, "C", 10.0, chains, index=4)
    assert a.input.shape == (22,) and a.target.shape == (512,)
    assert a.input.tobytes() == b.input.tobytes() and a.target.tobytes() == b.target.tobytes()
    assert a.input.tobytes() != bdata.gen_sample(cfg, "C", 10.0, chains, index=5).input.tobytes()
    assert np.all(np.isfinite(a.target))


def test_reciprocal_identity_case():
    cfg = ExperimentConfig(rf_variance=0.0, tdd_delay_s=0.0)
    grid = cfg.grid()
    for cls in ChannelClass:
        s = bdata.gen_sample(cfg, cls, math.inf, cfg.chains(), index=1)
        np.testing.assert_array_equal(unflatten_csi(s.input), unflatten_csi(s.target)[grid.indices])


def test_dataset_counts_labels_and_round_trip(tmp_path):
    counts = {"A": 1500, "D": 10}
    out = bdata.gen_dataset(SMALL, counts, "train", out_dir=tmp_path)
    for cls, n in counts.items():
        cls = ChannelClass.parse(cls)
        ds = out[cls]
        assert len(ds) == n and ds.channel_class is cls
        assert ds.one_hot().sum(axis=0)[int(cls)] == n
        path = bdata.dataset_path(tmp_path, "train", cls)
        back = bdata.load_dataset(path)
        for name in ("inputs", "targets", "snr_db"):
            assert getattr(back, name).tobytes() == getattr(ds, name).tobytes()
        assert (back.split, back.link_id, back.master_seed) == ("train", 0, 0)
        chains = bdata.load_chains(path)
        assert chains.to_bytes() == SMALL.chains().to_bytes()
    snr = out[ChannelClass.TDL_A].snr_db
    assert snr.min() >= 0 and snr.max() <= 30 and snr.std() > 5


def test_dataset_format_errors(tmp_path):
    ds = bdata.gen_class_dataset(SMALL, "B", 5)
    raw = bdata.dataset_to_bytes(ds)
    assert raw[:4] == b"TDDS"
    assert len(raw) == bdata._HEADER.size + 5 * 4 * (22 + 512 + 1)
    with pytest.raises(FormatError, match="truncated"):
        bdata.dataset_from_bytes(raw[:10])
    with pytest.raises(FormatError, match="body"):
        bdata.dataset_from_bytes(raw[:-4])
    with pytest.raises(FormatError, match="magic"):
        bdata.dataset_from_bytes(b"NOPE" + raw[4:])
    with pytest.raises(FormatError, match="version"):
        bdata.dataset_from_bytes(raw[:4] + (9).to_bytes(2, "little") + raw[6:])


def test_chunks_are_independent_of_total_count():
    small = bdata.gen_class_dataset(SMALL, "E", 1000)
    big = bdata.gen_class_dataset(SMALL, "E", 2500)
    assert big.inputs[:1000].tobytes() == small.inputs.tobytes()


def test_splits_use_disjoint_streams():
    train = bdata.gen_class_dataset(SMALL, "C", 200, "train")
    test = bdata.gen_class_dataset(SMALL, "C", 200, "test")
    assert train.split == "train" and test.split == "test"
    rows = {r.tobytes() for r in train.targets}
    assert not any(r.tobytes() in rows for r in test.targets)


def test_multilink_single_link_reduces_to_dataset():
    one = bdata.gen_multilink(SMALL, 1, 1, {"A": 50})
    ref = bdata.gen_dataset(SMALL, {"A": 50})
    assert one[(0, 0)][ChannelClass.TDL_A].inputs.tobytes() == ref[ChannelClass.TDL_A].inputs.tobytes()


def test_multilink_independence():
    links = bdata.gen_multilink(SMALL, 2, 3, {"C": 10_000}, snr_db=math.inf)
    assert len(links) == 6
    ids = sorted(ds[ChannelClass.TDL_C].link_id for ds in links.values())
    assert ids == list(range(6))
    chain_bytes = {SMALL.chains(i).to_bytes() for i in ids}
    assert len(chain_bytes) == 6
    a = unflatten_csi(links[(0, 0)][ChannelClass.TDL_C].targets.astype(np.float64))
    b = unflatten_csi(links[(1, 2)][ChannelClass.TDL_C].targets.astype(np.float64))
    for n in (0, 100, 255):
        x, y = a[:, n], b[:, n]
        corr = abs(np.mean((x - x.mean()) * np.conj(y - y.mean()))) / (x.std() * y.std())
        assert corr < 0.05


# -- metrics ---------------------------------------------------------------

def test_metric_examples():
    rng = np.random.default_rng(0)
    h = rng.standard_normal((4, 256)) + 1j * rng.standard_normal((4, 256))
    assert metric_nmse(h, h) == 0.0
    assert metric_nmse(np.zeros_like(h), h) == pytest.approx(1.0)
    assert metric_mse(h + 1, h) == pytest.approx(1.0)
    with pytest.raises(ZeroDivisionError):
        metric_nmse(h, np.zeros_like(h))
    with pytest.raises(ValueError):
        metric_mse(h[:, :10], h)
    assert accuracy([1, 2, 3, 3], [1, 2, 0, 3]) == 0.75


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3), st.floats(0, 2 * np.pi))
def test_nmse_is_scale_invariant(seed, mag, phase):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    p = h + 0.1 * (rng.standard_normal(64) + 1j * rng.standard_normal(64))
    alpha = mag * np.exp(1j * phase)
    assert metric_nmse(alpha * p, alpha * h) == pytest.approx(metric_nmse(p, h), rel=1e-9)


# -- sweeps ------------------------------------------------------------------

def _random_model(cfg=SMALL):
    rng = np.random.default_rng(0)
    grid = cfg.grid()
    return TddnetModel(init_model(classifier_spec(grid.n_pilots), rng),
                       {c: init_model(predictor_spec(grid.n_pilots, cfg.n_subcarriers), rng) for c in ChannelClass},
                       grid)


def test_accuracy_sweep_rows():
    res = run_accuracy_sweep(_random_model(), SMALL)
    assert len(res) == 2 * 6
    for row in res.rows:
        assert 0 <= row.value <= 1 and row.metric == "accuracy"
        assert row.n_samples == (SMALL.n_test * 5 if row.channel_class == "ALL" else SMALL.n_test)
        # exact ratio of integers
        assert row.value * row.n_samples == pytest.approx(round(row.value * row.n_samples), abs=1e-9)
    per_class = [r.value for r in res.select(x_value=0.0) if r.channel_class != "ALL"]
    assert res.value(channel_class="ALL", x_value=0.0) == pytest.approx(np.mean(per_class))


def test_mse_sweep_csv_is_reproducible(tmp_path):
    model = _random_model()
    a = run_mse_sweep(model, SMALL)
    b = run_mse_sweep(model, SMALL)
    assert a.to_csv() == b.to_csv()
    text = a.to_csv()
    assert text.splitlines()[0] == ",".join(COLUMNS)
    assert {r.channel_class for r in a.rows} == {c.name for c in ChannelClass}
    assert {r.method for r in a.rows} == {"cascade", "oracle", "linear", "wiener_none", "wiener_oracle"}
    assert {r.config_hash for r in a.rows} == {SMALL.config_hash}
    path = a.write(tmp_path / "mse.csv")
    assert read_csv(path).to_csv() == text


def test_mse_sweep_oracle_only_and_noiseless():
    model = _random_model()
    model.classifier = None
    res = run_mse_sweep(model, SMALL, no_noise=True, oracle_classifier=True, baselines=False)
    assert {r.method for r in res.rows} == {"oracle"}
    assert {r.x_value for r in res.rows} == {math.inf}
    assert "inf" in res.to_csv()


def test_sweep_rejects_unknown_metric():
    with pytest.raises(ValueError):
        SweepResult("x").add(SMALL, "A", "snr_db", 0, "m", "rmse", 1.0, 1)


# -- command line ---------------------------------------------------------------

def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "tddcsi.cli", *args], cwd=cwd, capture_output=True, text=True,
                          env=dict(os.environ, OPENBLAS_NUM_THREADS="1"))


def test_cli_end_to_end(tmp_path):
    (tmp_path / "exp.cfg").write_text("n_train = 300\nn_val = 100\nn_classifier = 100\nn_test = 200\n"
                                      "max_epochs = 2\nclasses = A, C\nsnr_grid_db = 10\n")
    common = ["--config", "exp.cfg", "--seed", "3"]
    r = _cli("gen-data", *common, "--out", "data", "--class", "C", cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "data" / "train_link0_C.tdds").exists()
    assert (tmp_path / "data" / "train_link0_C.tdds.rf").exists()
    for cls in "AC":
        r = _cli("train-predictor", *common, "--class", cls, "--data", "data", "--out", "model", cwd=tmp_path)
        assert r.returncode == 0, r.stderr
    r = _cli("eval-mse", *common, "--model", "model", "--out", "res", "--oracle-classifier", cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    rows = read_csv(tmp_path / "res" / "mse.csv").rows
    assert {r.channel_class for r in rows} == {"TDL_A", "TDL_C"} and {r.seed for r in rows} == {3}
    r = _cli("eval-mismatch", *common, "--model", "model", "--out", "res", cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    # needs a classifier that was never trained
    r = _cli("eval-accuracy", *common, "--model", "model", "--out", "res", cwd=tmp_path)
    assert r.returncode == 2 and "classifier" in r.stderr
    r = _cli("train-classifier", *common, "--out", "model", cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    r = _cli("eval-accuracy", *common, "--model", "model", "--out", "res", "--no-noise", cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    first = (tmp_path / "res" / "accuracy.csv").read_bytes()
    _cli("eval-accuracy", *common, "--model", "model", "--out", "res", "--no-noise", cwd=tmp_path)
    assert (tmp_path / "res" / "accuracy.csv").read_bytes() == first


def test_cli_usage_errors(tmp_path):
    (tmp_path / "bad.cfg").write_text("warp_factor = 9\n")
    r = _cli("gen-data", "--config", "bad.cfg", cwd=tmp_path)
    assert r.returncode == 2 and "warp_factor" in r.stderr
    r = _cli("train-predictor", cwd=tmp_path)
    assert r.returncode == 2  # argparse: --class is required
    r = _cli("gen-data", "--seed", "-1", cwd=tmp_path)
    assert r.returncode == 2
