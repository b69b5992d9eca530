"""Training entry points built on the experiment config."""
import logging

import numpy as np

from ..cascade import TddnetModel, classifier_spec, predictor_spec, train_cascade
from ..chanmodel import ChannelClass
from ..neuralcore import train
from .data import gen_class_dataset

log = logging.getLogger(__name__)


def _progress(tag, entry):
    extra = f" acc={entry['val_accuracy']:.4f}" if "val_accuracy" in entry else ""
    log.info("%s epoch %d train=%.5g val=%.5g%s", tag, entry["epoch"], entry["train_loss"], entry["val_loss"], extra)


def training_sets(cfg, classes=None, spacing=None, chains=None):
    """Predictor train/val sets and classifier sets for every class, SNR drawn per the training policy."""
    grid = cfg.grid(spacing)
    classes = [ChannelClass.parse(c) for c in (classes or ChannelClass)]
    tag = f"spacing{grid.spacing}"
    sets = {"train": {}, "val": {}, "classifier": {}}
    for cls in classes:
        sets["train"][cls] = gen_class_dataset(cfg, cls, cfg.n_train, "train", chains, grid=grid, tag=tag)
        sets["val"][cls] = gen_class_dataset(cfg, cls, cfg.n_val, "val", chains, grid=grid, tag=tag)
        sets["classifier"][cls] = gen_class_dataset(cfg, cls, cfg.n_classifier, "classifier", chains,
                                                    grid=grid, tag=tag)
    return sets


def train_predictor(cfg, channel_class, train_set, val_set=None, spacing=None):
    cls = ChannelClass.parse(channel_class)
    grid = cfg.grid(spacing)
    tcfg = cfg.train_config("predictor", int(cls), grid.spacing)
    val = None if val_set is None else (val_set.inputs, val_set.targets)
    return train(predictor_spec(grid.n_pilots, grid.n_subcarriers), train_set.inputs, train_set.targets, tcfg,
                 validation=val, progress=lambda e: _progress(f"predictor {cls.letter}/{grid.spacing}", e))


def train_classifier(cfg, classifier_sets, spacing=None):
    grid = cfg.grid(spacing)
    x = np.concatenate([classifier_sets[c].inputs for c in sorted(classifier_sets)])
    y = np.concatenate([classifier_sets[c].one_hot() for c in sorted(classifier_sets)])
    tcfg = cfg.train_config("classifier", grid.spacing)
    return train(classifier_spec(grid.n_pilots), x, y, tcfg, progress=lambda e: _progress("classifier", e))


def train_all(cfg, spacing=None, sets=None):
    """Generate data (unless given) and train the full cascade for one pilot spacing."""
    grid = cfg.grid(spacing)
    sets = sets or training_sets(cfg, spacing=grid.spacing)
    pcfgs = {cls: cfg.train_config("predictor", int(cls), grid.spacing) for cls in ChannelClass}
    model, logs = train_cascade(sets["train"], cfg.train_config("classifier", grid.spacing), pcfgs, grid,
                                val_sets=sets["val"], classifier_sets=sets["classifier"], progress=_progress)
    model.manifest.update(manifest_entries(cfg))
    return model, logs


def manifest_entries(cfg):
    return {
        "config_hash": cfg.config_hash,
        "master_seed": cfg.master_seed,
        "link_id": cfg.link_id,
        "delay_spread_s": cfg.delay_spread_s,
        "rf_variance": cfg.rf_variance,
        "train_snr_db": f"{cfg.train_snr_min_db}..{cfg.train_snr_max_db}",
        "optimizer": f"adam lr={cfg.learning_rate} batch={cfg.batch_size} epochs<={cfg.max_epochs} "
                     f"patience={cfg.early_stop_patience}",
    }


def empty_model(cfg, spacing=None):
    return TddnetModel(None, {}, cfg.grid(spacing), manifest_entries(cfg))


def train_spacing_predictor(cfg, spacing, channel_class=ChannelClass.TDL_C):
    """Train one class's predictor for a given pilot spacing (pilot-spacing sweep)."""
    cls = ChannelClass.parse(channel_class)
    grid = cfg.grid(spacing)
    tag = f"spacing{grid.spacing}"
    train_set = gen_class_dataset(cfg, cls, cfg.n_train, "train", grid=grid, tag=tag)
    val_set = gen_class_dataset(cfg, cls, cfg.n_val, "val", grid=grid, tag=tag)
    model, _ = train_predictor(cfg, cls, train_set, val_set, grid.spacing)
    return model
