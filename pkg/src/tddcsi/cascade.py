"""Cascaded downlink CSI predictor.

A small classifier decides which TDL class the uplink pilot estimates come
from; the predictor trained for that class maps the same pilot estimates to
the full-band downlink channel, calibrating the RF chains and interpolating
between pilots in one pass.
"""
import os
from dataclasses import dataclass, field

import numpy as np

from .airlink import FLATTEN_LAYOUT, PilotCsi, PilotGrid, flatten_csi, unflatten_csi
from .chanmodel import N_CLASSES, ChannelClass
from .errors import FormatError
from .neuralcore import MlpSpec, forward, load_model, save_model, train

CLASSIFIER_HIDDEN = (22, 22)
PREDICTOR_HIDDEN = (512, 128)
MANIFEST = "manifest.txt"


def classifier_spec(n_pilots):
    return MlpSpec((2 * n_pilots, *CLASSIFIER_HIDDEN, N_CLASSES), ("tanh", "sigmoid", "softmax"))


def predictor_spec(n_pilots, n_subcarriers):
    return MlpSpec((2 * n_pilots, *PREDICTOR_HIDDEN, 2 * n_subcarriers), ("tanh", "tanh", "linear"))


@dataclass(eq=False)
class TddnetModel:
    """Classifier plus one predictor per channel class, all sized for ``grid``.

    Predictors may be missing while a bundle is being assembled class by
    class; routing a sample to a missing predictor is an error.
    """

    classifier: object
    predictors: dict
    grid: PilotGrid
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.predictors = {ChannelClass.parse(k): v for k, v in self.predictors.items()}
        want_in = 2 * self.grid.n_pilots
        if self.classifier is not None:
            dims = self.classifier.spec.layer_dims
            if dims[0] != want_in or dims[-1] != N_CLASSES:
                raise ValueError(f"classifier dims {dims} do not fit a {self.grid.n_pilots}-pilot grid")
        for cls, model in self.predictors.items():
            dims = model.spec.layer_dims
            if dims[0] != want_in or dims[-1] != 2 * self.grid.n_subcarriers:
                raise ValueError(f"predictor {cls.name} dims {dims} do not fit the grid")

    @property
    def is_complete(self):
        return self.classifier is not None and len(self.predictors) == N_CLASSES


def _as_inputs(model, pilot_csi):
    values = pilot_csi.values if isinstance(pilot_csi, PilotCsi) else pilot_csi
    values = np.asarray(values)
    if np.iscomplexobj(values):
        if values.shape[-1] != model.grid.n_pilots:
            raise ValueError(f"{values.shape[-1]} pilot values, model expects {model.grid.n_pilots}")
        return flatten_csi(values).astype(np.float32)
    if values.shape[-1] != 2 * model.grid.n_pilots:
        raise ValueError(f"input dim {values.shape[-1]}, model expects {2 * model.grid.n_pilots}")
    return values.astype(np.float32)


def classify_batch(model, inputs):
    """Labels and class probabilities for a batch of pilot CSI (complex or already flattened)."""
    if model.classifier is None:
        raise ValueError("model has no trained classifier")
    x = np.atleast_2d(_as_inputs(model, inputs))
    probs = forward(model.classifier, x)
    return np.argmax(probs, axis=1), probs  # argmax picks the lowest index on ties


def classify(model, pilot_csi):
    labels, probs = classify_batch(model, pilot_csi)
    return ChannelClass(int(labels[0])), probs[0]


def predict_batch(model, inputs, oracle_classes=None):
    """Route every sample to a predictor and return ``(classes used, downlink CSI (B, N))``.

    ``oracle_classes`` (a class or one per sample) bypasses the classifier.
    """
    x = np.atleast_2d(_as_inputs(model, inputs))
    if oracle_classes is None:
        labels, _ = classify_batch(model, x)
    else:
        labels = np.broadcast_to(np.asarray([int(ChannelClass.parse(c)) for c in np.atleast_1d(oracle_classes)]),
                                 (len(x),))
    out = np.empty((len(x), model.grid.n_subcarriers), dtype=np.complex64)
    for code in np.unique(labels):
        cls = ChannelClass(int(code))
        if cls not in model.predictors:
            raise ValueError(f"no trained predictor for {cls.name}")
        sel = labels == code
        out[sel] = unflatten_csi(forward(model.predictors[cls], x[sel]))
    return np.asarray(labels, dtype=np.int64), out


def predict_downlink(model, pilot_csi, oracle_class=None):
    """Downlink CSI on all subcarriers for one pilot CSI vector; returns ``(class used, H)``."""
    labels, out = predict_batch(model, pilot_csi, oracle_class)
    return ChannelClass(int(labels[0])), out[0]


def train_cascade(train_sets, classifier_cfg, predictor_cfgs, grid, val_sets=None, classifier_sets=None,
                  progress=None):
    """Train the classifier and every per-class predictor independently.

    ``train_sets`` maps class -> dataset with ``inputs``/``targets``; the
    classifier trains on the pooled inputs of ``classifier_sets`` (default:
    ``train_sets``) with one-hot labels. ``predictor_cfgs`` is one TrainConfig
    or a mapping class -> TrainConfig.
    """
    missing = [c.name for c in ChannelClass if c not in train_sets or len(train_sets[c]) == 0]
    if missing:
        raise ValueError(f"empty or missing training data for {', '.join(missing)}")
    cls_sets = classifier_sets or train_sets
    x = np.concatenate([cls_sets[c].inputs for c in ChannelClass])
    y = np.concatenate([cls_sets[c].one_hot() for c in ChannelClass])
    classifier, clog = train(classifier_spec(grid.n_pilots), x, y, classifier_cfg,
                             progress=_tagged(progress, "classifier"))
    predictors, logs = {}, {"classifier": clog}
    for cls in ChannelClass:
        cfg = predictor_cfgs[cls] if isinstance(predictor_cfgs, dict) else predictor_cfgs
        ds = train_sets[cls]
        val = None if val_sets is None else (val_sets[cls].inputs, val_sets[cls].targets)
        predictors[cls], logs[cls.name] = train(predictor_spec(grid.n_pilots, grid.n_subcarriers), ds.inputs,
                                                ds.targets, cfg, validation=val,
                                                progress=_tagged(progress, cls.name))
    return TddnetModel(classifier, predictors, grid), logs


def _tagged(progress, tag):
    if progress is None:
        return None
    return lambda entry: progress(tag, entry)


def save_bundle(model, directory, extra=None):
    """Write ``classifier.mdl``, ``predictor_{A..E}.mdl`` and a ``key = value`` manifest."""
    os.makedirs(directory, exist_ok=True)
    if model.classifier is not None:
        save_model(model.classifier, os.path.join(directory, "classifier.mdl"))
    for cls, pred in model.predictors.items():
        save_model(pred, os.path.join(directory, f"predictor_{cls.letter}.mdl"))
    manifest = dict(model.manifest)
    manifest.update(extra or {})
    manifest.update({
        "n_subcarriers": model.grid.n_subcarriers,
        "pilot_spacing": model.grid.spacing,
        "n_pilots": model.grid.n_pilots,
        "flatten_layout": FLATTEN_LAYOUT,
        "predictors": ",".join(c.letter for c in sorted(model.predictors)),
        "has_classifier": int(model.classifier is not None),
    })
    with open(os.path.join(directory, MANIFEST), "w") as fh:
        for key in sorted(manifest):
            fh.write(f"{key} = {manifest[key]}\n")


def read_manifest(directory):
    out = {}
    with open(os.path.join(directory, MANIFEST)) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    return out


def load_bundle(directory):
    manifest = read_manifest(directory)
    try:
        grid = PilotGrid(int(manifest["n_subcarriers"]), int(manifest["pilot_spacing"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad model manifest in {directory}: {exc}") from None
    if manifest.get("flatten_layout") != FLATTEN_LAYOUT:
        raise FormatError(f"model uses flatten layout {manifest.get('flatten_layout')!r}")
    classifier = None
    path = os.path.join(directory, "classifier.mdl")
    if os.path.exists(path):
        classifier = load_model(path)
    predictors = {}
    for cls in ChannelClass:
        path = os.path.join(directory, f"predictor_{cls.letter}.mdl")
        if os.path.exists(path):
            predictors[cls] = load_model(path)
    return TddnetModel(classifier, predictors, grid, manifest)
