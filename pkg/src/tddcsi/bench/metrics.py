import numpy as np


def metric_mse(pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return float(np.mean(np.abs(pred - truth) ** 2))


def metric_nmse(pred, truth):
    """MSE normalized by the mean power of ``truth``; pooled over all samples for 2-d input."""
    power = float(np.mean(np.abs(np.asarray(truth)) ** 2))
    if power == 0:
        raise ZeroDivisionError("NMSE undefined for an all-zero reference")
    return metric_mse(pred, truth) / power


def accuracy(predicted, labels):
    predicted, labels = np.asarray(predicted), np.asarray(labels)
    return int(np.sum(predicted == labels)) / len(labels)
