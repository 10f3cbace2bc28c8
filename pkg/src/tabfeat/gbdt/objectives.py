"""Loss functions with their first and second derivatives.

Gradients are exact derivatives of the per-row loss that :func:`loss`
averages, so a finite-difference check applies directly.  Softmax uses the
diagonal of the Hessian.
"""
import enum

import numpy as np
from scipy.special import expit, log_softmax, softmax

PROB_CLIP = 1e-15


class Objective(str, enum.Enum):
    MSE = "mse"
    LOGLOSS = "logloss"
    SOFTMAX = "softmax"


def pointwise_loss(objective, y, scores):
    objective = Objective(objective)
    y = np.asarray(y, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    if objective is Objective.MSE:
        return (s - y) ** 2
    if objective is Objective.LOGLOSS:
        p = np.clip(expit(s), PROB_CLIP, 1 - PROB_CLIP)
        return -(y * np.log(p) + (1 - y) * np.log1p(-p))
    p = np.clip(softmax(s, axis=1), PROB_CLIP, 1 - PROB_CLIP)
    return -np.log(p[np.arange(len(y)), y.astype(np.int64)])


def loss(objective, y, scores):
    """Mean loss of raw scores; probabilities are clamped to [1e-15, 1 - 1e-15]."""
    return float(np.mean(pointwise_loss(objective, y, scores)))


def gradients(objective, y, scores):
    """Per-row gradient and (diagonal) hessian of the pointwise loss."""
    objective = Objective(objective)
    s = np.asarray(scores, dtype=np.float64)
    if objective is Objective.MSE:
        return 2.0 * (s - y), np.full(s.shape, 2.0)
    if objective is Objective.LOGLOSS:
        p = expit(s)
        return p - y, p * (1.0 - p)
    p = softmax(s, axis=1)
    onehot = np.zeros_like(p)
    onehot[np.arange(len(y)), np.asarray(y, dtype=np.int64)] = 1.0
    return p - onehot, p * (1.0 - p)


def base_score(objective, y, n_classes=1):
    """Best constant raw score for targets ``y``."""
    objective = Objective(objective)
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        return np.zeros(n_classes) if objective is Objective.SOFTMAX else 0.0
    if objective is Objective.MSE:
        return float(y.mean())
    if objective is Objective.LOGLOSS:
        p = np.clip(y.mean(), PROB_CLIP, 1 - PROB_CLIP)
        return float(np.log(p / (1 - p)))
    prior = np.bincount(y.astype(np.int64), minlength=n_classes) / y.size
    return np.log(np.clip(prior, PROB_CLIP, 1.0))


def log_proba(scores):
    return log_softmax(scores, axis=1)
