"""Dense feed-forward networks: forward pass, losses, backprop, SGD/Adam, training, file format.

Parameters of a model live in one contiguous buffer; ``weights[i]`` (fan_out x
fan_in) and ``biases[i]`` are views into it, so optimizer updates are a single
pass over ``model.flat``.
"""
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import kernels
from .errors import FormatError, TrainingDiverged

ACTIVATIONS = ("linear", "tanh", "sigmoid", "softmax")
_ACT_CODE = {name: code for code, name in enumerate(ACTIVATIONS)}
CE_CLAMP = 1e-12

MODEL_MAGIC = b"TDDN"
MODEL_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    layer_dims: tuple
    activations: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        acts = tuple(self.activations)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "activations", acts)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"bad layer dims {dims}")
        if len(acts) != len(dims) - 1:
            raise ValueError("need one activation per non-input layer")
        for i, act in enumerate(acts):
            if act not in _ACT_CODE:
                raise ValueError(f"unknown activation {act!r}")
            if act == "softmax" and i != len(acts) - 1:
                raise ValueError("softmax is only allowed on the output layer")

    @property
    def n_layers(self):
        return len(self.activations)

    @property
    def n_params(self):
        d = self.layer_dims
        return sum(d[i + 1] * d[i] + d[i + 1] for i in range(self.n_layers))

    def layer_slices(self):
        """(weight slice, bias slice) into the flat buffer for every layer."""
        out, pos = [], 0
        d = self.layer_dims
        for i in range(self.n_layers):
            nw = d[i + 1] * d[i]
            out.append((slice(pos, pos + nw), slice(pos + nw, pos + nw + d[i + 1])))
            pos += nw + d[i + 1]
        return out


class MlpModel:
    def __init__(self, spec, flat):
        flat = np.ascontiguousarray(flat)
        if flat.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got {flat.shape}")
        self.spec = spec
        self.flat = flat
        self.weights, self.biases = _views(spec, flat)

    @classmethod
    def from_arrays(cls, spec, weights, biases, dtype=np.float32):
        flat = np.empty(spec.n_params, dtype=dtype)
        model = cls(spec, flat)
        for w_dst, b_dst, w, b in zip(model.weights, model.biases, weights, biases):
            if np.shape(w) != w_dst.shape or np.shape(b) != b_dst.shape:
                raise ValueError("parameter shapes do not match spec")
            w_dst[...] = w
            b_dst[...] = b
        return model

    @property
    def dtype(self):
        return self.flat.dtype

    def copy(self):
        return MlpModel(self.spec, self.flat.copy())

    def astype(self, dtype):
        return MlpModel(self.spec, self.flat.astype(dtype))

    def __eq__(self, other):
        return (
            isinstance(other, MlpModel)
            and self.spec == other.spec
            and self.flat.dtype == other.flat.dtype
            and self.flat.tobytes() == other.flat.tobytes()
        )

    __hash__ = None

    def __repr__(self):
        dims = "-".join(map(str, self.spec.layer_dims))
        return f"MlpModel({dims}, {'/'.join(self.spec.activations)}, {self.dtype})"


def _views(spec, flat):
    weights, biases = [], []
    d = spec.layer_dims
    for i, (ws, bs) in enumerate(spec.layer_slices()):
        weights.append(flat[ws].reshape(d[i + 1], d[i]))
        biases.append(flat[bs])
    return weights, biases


def init_model(spec, rng=None, dtype=np.float32):
    """Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases."""
    rng = np.random.default_rng(rng)
    model = MlpModel(spec, np.zeros(spec.n_params, dtype=dtype))
    for w in model.weights:
        fan_out, fan_in = w.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return model


def _activate(kind, z):
    """Apply activation to pre-activations ``z`` (B, n) in place and return it."""
    if kind == "tanh":
        np.tanh(z, out=z)
    elif kind == "sigmoid":
        expit(z, out=z)
    elif kind == "softmax":
        z -= z.max(axis=-1, keepdims=True)
        np.exp(z, out=z)
        z /= z.sum(axis=-1, keepdims=True)
    return z


def _forward_all(model, x):
    acts = [x]
    a = x
    for w, b, kind in zip(model.weights, model.biases, model.spec.activations):
        z = a @ w.T
        z += b
        a = _activate(kind, z)
        acts.append(a)
    return acts


def forward(model, x):
    """Network output for one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=model.dtype)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != model.spec.layer_dims[0]:
        raise ValueError(f"input dim {x.shape[-1]} does not match network input {model.spec.layer_dims[0]}")
    out = _forward_all(model, np.ascontiguousarray(xb))[-1]
    return out[0] if single else out


def loss_cross_entropy(probs, one_hot):
    """``-log(probs[label])`` with probabilities clamped at 1e-12; batch mean for 2-d input."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(one_hot, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError("probability and label shapes differ")
    per = -np.sum(y * np.log(np.maximum(p, CE_CLAMP)), axis=-1)
    return float(np.mean(per))


def loss_mse(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return float(np.mean((pred - target) ** 2))


def resolve_loss(spec, loss=None):
    if loss is None:
        loss = "cross_entropy" if spec.activations[-1] == "softmax" else "mse"
    if loss not in ("cross_entropy", "mse"):
        raise ValueError(f"unknown loss {loss!r}")
    if loss == "cross_entropy" and spec.activations[-1] != "softmax":
        raise ValueError("cross-entropy needs a softmax output layer")
    return loss


def backprop(model, x, y, loss=None, grad=None):
    """Batch-mean loss and its gradient as a flat array laid out like ``model.flat``."""
    spec = model.spec
    loss = resolve_loss(spec, loss)
    x = np.ascontiguousarray(x, dtype=model.dtype)
    y = np.ascontiguousarray(y, dtype=model.dtype)
    acts = _forward_all(model, x)
    out = acts[-1]
    if out.shape != y.shape:
        raise ValueError(f"target shape {y.shape} does not match output {out.shape}")
    batch = x.shape[0]
    if grad is None:
        grad = np.empty_like(model.flat)
    g_w, g_b = _views(spec, grad)

    if loss == "cross_entropy":
        value = loss_cross_entropy(out, y)
        # softmax + cross-entropy collapse to (p - y); the clamp only affects the reported value
        delta = (out - y) / out.dtype.type(batch)
        first_elementwise = False
    else:
        value = loss_mse(out, y)
        delta = (out - y) * out.dtype.type(2.0 / out.size)
        first_elementwise = True

    for i in range(spec.n_layers - 1, -1, -1):
        kind = spec.activations[i]
        if first_elementwise or i < spec.n_layers - 1:
            if kind == "softmax":
                a = acts[i + 1]
                delta = a * (delta - np.sum(delta * a, axis=-1, keepdims=True))
            else:
                kernels.activation_backward(kind, acts[i + 1], delta)
        np.matmul(delta.T, acts[i], out=g_w[i])
        np.sum(delta, axis=0, out=g_b[i])
        if i > 0:
            delta = delta @ model.weights[i]
    return value, grad


@dataclass(frozen=True)
class Sgd:
    learning_rate: float = 1e-2


@dataclass(frozen=True)
class Adam:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class OptimizerState:
    optimizer: object
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0
    grad: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def for_model(cls, optimizer, model):
        if isinstance(optimizer, Adam):
            return cls(optimizer, np.zeros_like(model.flat), np.zeros_like(model.flat), 0, np.empty_like(model.flat))
        return cls(optimizer, grad=np.empty_like(model.flat))


def train_step(model, x, y, state, loss=None):
    """One optimizer update on a mini-batch; mutates ``model`` and ``state``, returns the batch loss."""
    value, grad = backprop(model, x, y, loss, grad=state.grad)
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite batch loss {value} at step {state.t + 1}")
    opt = state.optimizer
    state.t += 1
    if isinstance(opt, Adam):
        step = opt.learning_rate * np.sqrt(1.0 - opt.beta2**state.t) / (1.0 - opt.beta1**state.t)
        kernels.adam_update(model.flat, grad, state.m, state.v, step, opt.beta1, opt.beta2, opt.eps)
    elif isinstance(opt, Sgd):
        model.flat -= model.dtype.type(opt.learning_rate) * grad
    else:
        raise TypeError(f"unsupported optimizer {opt!r}")
    return value


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    early_stop_patience: int = 10
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def make_optimizer(self):
        if self.optimizer == "adam":
            return Adam(self.learning_rate, self.beta1, self.beta2, self.eps)
        return Sgd(self.learning_rate)


def evaluate(model, x, y, loss=None, chunk=8192):
    """Mean loss over a dataset (and accuracy for classifiers) without updating anything."""
    loss = resolve_loss(model.spec, loss)
    total, correct, n = 0.0, 0, len(x)
    for s in range(0, n, chunk):
        out = forward(model, x[s : s + chunk])
        yb = y[s : s + chunk]
        fn = loss_cross_entropy if loss == "cross_entropy" else loss_mse
        total += fn(out, yb) * len(yb)
        if loss == "cross_entropy":
            correct += int(np.sum(np.argmax(out, axis=1) == np.argmax(yb, axis=1)))
    result = {"loss": total / n}
    if loss == "cross_entropy":
        result["accuracy"] = correct / n
    return result


def _canonical_order(x, y):
    """Row order that depends only on row contents, never on storage order."""
    rows = np.ascontiguousarray(np.concatenate([x.view(np.uint8), y.view(np.uint8)], axis=1))
    keyed = rows.view(np.dtype((np.void, rows.shape[1]))).ravel()
    return np.argsort(keyed, kind="stable")


def train(spec, inputs, targets, cfg=TrainConfig(), loss=None, validation=None, progress=None):
    """Mini-batch training with early stopping on validation loss.

    Without ``validation`` a seeded ``cfg.validation_fraction`` split is held
    out. Returns ``(model, log)`` where the model carries the parameters of the
    best validation epoch and ``log`` has one dict per epoch.
    """
    loss = resolve_loss(spec, loss)
    x = np.ascontiguousarray(inputs, dtype=np.float32)
    y = np.ascontiguousarray(targets, dtype=np.float32)
    if len(x) == 0 or len(x) != len(y):
        raise ValueError("need a nonempty dataset with matching inputs and targets")
    if x.shape[1] != spec.layer_dims[0] or y.shape[1] != spec.layer_dims[-1]:
        raise ValueError("dataset dims do not match the network spec")

    init_seq, split_seq, shuffle_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    order = _canonical_order(x, y)
    x, y = x[order], y[order]
    if validation is None:
        perm = np.random.default_rng(split_seq).permutation(len(x))
        n_val = max(1, int(round(cfg.validation_fraction * len(x))))
        if n_val >= len(x):
            raise ValueError("dataset too small for a validation split")
        xv, yv = x[perm[:n_val]], y[perm[:n_val]]
        x, y = x[perm[n_val:]], y[perm[n_val:]]
    else:
        xv = np.ascontiguousarray(validation[0], dtype=np.float32)
        yv = np.ascontiguousarray(validation[1], dtype=np.float32)

    model = init_model(spec, init_seq)
    state = OptimizerState.for_model(cfg.make_optimizer(), model)
    shuffle = np.random.default_rng(shuffle_seq)
    best, best_loss, stale, log = model.copy(), np.inf, 0, []
    n = len(x)
    for epoch in range(1, cfg.max_epochs + 1):
        perm = shuffle.permutation(n)
        running = 0.0
        try:
            for s in range(0, n, cfg.batch_size):
                idx = perm[s : s + cfg.batch_size]
                running += train_step(model, x[idx], y[idx], state, loss) * len(idx)
        except TrainingDiverged as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}", log) from None
        val = evaluate(model, xv, yv, loss)
        entry = {"epoch": epoch, "train_loss": running / n, "val_loss": val["loss"]}
        if "accuracy" in val:
            entry["val_accuracy"] = val["accuracy"]
        log.append(entry)
        if progress is not None:
            progress(entry)
        if not np.isfinite(val["loss"]):
            raise TrainingDiverged(f"validation loss became {val['loss']} at epoch {epoch}", log)
        if val["loss"] < best_loss:
            best, best_loss, stale = model.copy(), val["loss"], 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    return best, log


def numerical_gradient(model, x, y, loss=None, eps=1e-4):
    """Central finite differences of the batch-mean loss w.r.t. every parameter."""
    loss = resolve_loss(model.spec, loss)
    fn = loss_cross_entropy if loss == "cross_entropy" else loss_mse
    probe = model.copy()
    grad = np.empty(probe.flat.shape, dtype=np.float64)
    for i in range(probe.flat.size):
        orig = probe.flat[i]
        probe.flat[i] = orig + eps
        up = fn(forward(probe, x), y)
        probe.flat[i] = orig - eps
        down = fn(forward(probe, x), y)
        probe.flat[i] = orig
        grad[i] = (up - down) / (2 * eps)
    return grad


def gradient_relative_error(analytic, numeric, floor=1e-8):
    """Largest elementwise ``|a - n| / max(|a| + |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)))


def model_to_bytes(model):
    spec = model.spec
    head = [MODEL_MAGIC, struct.pack("<HH", MODEL_VERSION, spec.n_layers)]
    d = spec.layer_dims
    for i, act in enumerate(spec.activations):
        head.append(struct.pack("<IIB", d[i], d[i + 1], _ACT_CODE[act]))
    body = b"".join(head) + model.flat.astype("<f4").tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def model_from_bytes(buf):
    buf = bytes(buf)
    if len(buf) < 12:
        raise FormatError("model file truncated (shorter than header)")
    if buf[:4] != MODEL_MAGIC:
        raise FormatError("bad magic; not a model file")
    version, n_layers = struct.unpack_from("<HH", buf, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model format version {version} (expected {MODEL_VERSION})")
    pos = 8
    if len(buf) < pos + 9 * n_layers + 4:
        raise FormatError("model file truncated in layer table")
    dims, acts = [], []
    for i in range(n_layers):
        fan_in, fan_out, code = struct.unpack_from("<IIB", buf, pos)
        pos += 9
        if code >= len(ACTIVATIONS):
            raise FormatError(f"layer {i}: unknown activation code {code}")
        if dims and dims[-1] != fan_in:
            raise FormatError(f"layer {i}: fan_in {fan_in} does not chain from {dims[-1]}")
        if not dims:
            dims.append(fan_in)
        dims.append(fan_out)
        acts.append(ACTIVATIONS[code])
    try:
        spec = MlpSpec(tuple(dims), tuple(acts))
    except ValueError as exc:
        raise FormatError(f"invalid layer table: {exc}") from None
    expected = pos + 4 * spec.n_params + 4
    if len(buf) != expected:
        raise FormatError(f"model file has {len(buf)} bytes, layer table implies {expected} (truncated or padded)")
    (crc,) = struct.unpack_from("<I", buf, expected - 4)
    if zlib.crc32(buf[: expected - 4]) != crc:
        raise FormatError("CRC32 mismatch; model file is corrupt")
    flat = np.frombuffer(buf, dtype="<f4", count=spec.n_params, offset=pos).astype(np.float32)
    if not np.all(np.isfinite(flat)):
        raise FormatError("model contains non-finite parameters")
    return MlpModel(spec, flat)


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
