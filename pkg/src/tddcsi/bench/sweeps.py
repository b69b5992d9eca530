"""The evaluation sweeps and their CSV output.

Every sweep draws fresh test samples from the ``test`` split, so test data
never shares a random stream with training data. Test sets are keyed by
(class, SNR) only, so different sweeps and pilot spacings see the same
channel realizations.
"""
import csv
import io
import logging
import math
import os
from collections import namedtuple

import numpy as np

from ..airlink import unflatten_csi
from ..baselines import CalibrationMode, linear_interp, wiener_interp
from ..cascade import classify_batch, predict_batch
from ..chanmodel import ChannelClass
from ..neuralcore import forward
from .data import gen_class_dataset
from .metrics import accuracy, metric_mse, metric_nmse

log = logging.getLogger(__name__)

COLUMNS = ("experiment", "class", "x_name", "x_value", "method", "metric", "value", "n_samples",
           "config_hash", "seed")
METRICS = ("mse", "nmse", "accuracy")
DEFAULT_SPACINGS = (8, 16, 24, 32, 48)
PILOT_SWEEP_SNR_DB = 22.0

SweepRow = namedtuple("SweepRow", COLUMNS[:1] + ("channel_class",) + COLUMNS[2:])  # "class" is a keyword


def _fmt(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


class SweepResult:
    """Rows of one sweep; ``to_csv`` is the stable on-disk form."""

    def __init__(self, experiment, rows=()):
        self.experiment = experiment
        self.rows = list(rows)

    def add(self, cfg, cls, x_name, x_value, method, metric, value, n_samples):
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}")
        name = cls if isinstance(cls, str) else ChannelClass.parse(cls).name
        self.rows.append(SweepRow(self.experiment, name, x_name, float(x_value), method, metric,
                                  float(value), int(n_samples), cfg.config_hash, cfg.master_seed))

    def __len__(self):
        return len(self.rows)

    def select(self, **match):
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]

    def value(self, **match):
        rows = self.select(**match)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {match}")
        return rows[0].value

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def write(self, path):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())
        return path


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        rows = [SweepRow(r[0], r[1], r[2], float(r[3]), r[4], r[5], float(r[6]), int(r[7]), r[8], int(r[9]))
                for r in reader]
    return SweepResult(rows[0].experiment if rows else "", rows)


def _snr_points(cfg, snr_grid, no_noise):
    if no_noise:
        return (math.inf,)
    return tuple(float(s) for s in (snr_grid if snr_grid is not None else cfg.snr_grid_db))


def _snr_arg(snr):
    return None if math.isinf(snr) else snr


def eval_set(cfg, channel_class, snr_db, grid=None, count=None):
    """Fresh test samples of one class at a fixed SNR (``inf`` for noiseless pilots)."""
    return gen_class_dataset(cfg, channel_class, count or cfg.n_test, "test", snr_db=snr_db, grid=grid,
                             tag=f"eval/snr={snr_db!r}")


def _complex(flat):
    return unflatten_csi(np.asarray(flat, dtype=np.float64))


def run_accuracy_sweep(model, cfg, snr_grid=None, no_noise=False):
    """Per-class and pooled (``ALL``) classifier accuracy at each SNR."""
    result = SweepResult("accuracy")
    for snr in _snr_points(cfg, snr_grid, no_noise):
        pred_all, true_all = [], []
        for cls in cfg.classes:
            ds = eval_set(cfg, cls, snr, model.grid)
            pred, _ = classify_batch(model, ds.inputs)
            truth = np.full(len(ds), int(cls))
            result.add(cfg, cls, "snr_db", snr, "classifier", "accuracy", accuracy(pred, truth), len(ds))
            pred_all.append(pred)
            true_all.append(truth)
        pred_all, true_all = np.concatenate(pred_all), np.concatenate(true_all)
        acc = accuracy(pred_all, true_all)
        result.add(cfg, "ALL", "snr_db", snr, "classifier", "accuracy", acc, len(true_all))
        log.info("accuracy snr=%s pooled=%.4f", snr, acc)
    return result


def _add_errors(result, cfg, cls, x_name, x_value, method, pred, truth):
    result.add(cfg, cls, x_name, x_value, method, "nmse", metric_nmse(pred, truth), len(truth))
    result.add(cfg, cls, x_name, x_value, method, "mse", metric_mse(pred, truth), len(truth))


def _baselines(result, cfg, cls, x_name, x_value, snr, pilots, truth, grid):
    pdp = cfg.pdp(cls)
    _add_errors(result, cfg, cls, x_name, x_value, "linear", linear_interp(pilots, grid), truth)
    for mode in CalibrationMode:
        est = wiener_interp(pilots, pdp, _snr_arg(snr), grid, mode, cfg.chains(), cfg.scs_hz).values
        _add_errors(result, cfg, cls, x_name, x_value, f"wiener_{mode.value}", est, truth)


def run_mse_sweep(model, cfg, snr_grid=None, no_noise=False, oracle_classifier=False, baselines=True):
    """Downlink NMSE and MSE per (class, SNR) for the cascade, oracle routing and the baselines.

    With ``oracle_classifier`` only the oracle-routed curve is produced, so no
    trained classifier is needed.
    """
    result = SweepResult("mse")
    for cls in cfg.classes:
        for snr in _snr_points(cfg, snr_grid, no_noise):
            ds = eval_set(cfg, cls, snr, model.grid)
            truth = _complex(ds.targets)
            if not oracle_classifier:
                _, pred = predict_batch(model, ds.inputs)
                _add_errors(result, cfg, cls, "snr_db", snr, "cascade", pred, truth)
            _, pred = predict_batch(model, ds.inputs, oracle_classes=cls)
            _add_errors(result, cfg, cls, "snr_db", snr, "oracle", pred, truth)
            if baselines:
                _baselines(result, cfg, cls, "snr_db", snr, snr, _complex(ds.inputs), truth, model.grid)
            log.info("mse %s snr=%s done", cls.name, snr)
    return result


def run_pilot_sweep(cfg, predictors, spacings=DEFAULT_SPACINGS, channel_class=ChannelClass.TDL_C,
                    snr_db=PILOT_SWEEP_SNR_DB, trainer=None):
    """NMSE versus pilot spacing for the learned predictor and the baselines.

    ``predictors`` maps spacing -> predictor model for ``channel_class``;
    missing spacings are trained on demand with ``trainer(cfg, spacing)``
    (which must return the model) and stored back into the mapping.
    """
    cls = ChannelClass.parse(channel_class)
    result = SweepResult("pilot_sweep")
    for spacing in spacings:
        grid = cfg.grid(spacing)
        if spacing not in predictors:
            if trainer is None:
                raise ValueError(f"no predictor for spacing {spacing} and no trainer given")
            predictors[spacing] = trainer(cfg, spacing)
        ds = eval_set(cfg, cls, float(snr_db), grid)
        truth = _complex(ds.targets)
        pred = _complex(forward(predictors[spacing], ds.inputs))
        _add_errors(result, cfg, cls, "pilot_spacing", spacing, "proposed", pred, truth)
        _baselines(result, cfg, cls, "pilot_spacing", spacing, float(snr_db), _complex(ds.inputs), truth, grid)
        log.info("pilot sweep spacing=%d done", spacing)
    return result


def run_mismatch(model, cfg, snr_grid=None, no_noise=False, reference=ChannelClass.TDL_A):
    """NMSE of every class under its matched predictor and under the ``reference`` predictor."""
    ref = ChannelClass.parse(reference)
    result = SweepResult("mismatch")
    for cls in cfg.classes:
        for snr in _snr_points(cfg, snr_grid, no_noise):
            ds = eval_set(cfg, cls, snr, model.grid)
            truth = _complex(ds.targets)
            _, matched = predict_batch(model, ds.inputs, oracle_classes=cls)
            _, mismatched = predict_batch(model, ds.inputs, oracle_classes=ref)
            _add_errors(result, cfg, cls, "snr_db", snr, "matched", matched, truth)
            _add_errors(result, cfg, cls, "snr_db", snr, f"predictor_{ref.letter}", mismatched, truth)
    return result
