"""Scalar losses."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor

PROB_EPS = 1e-7
LOG_SIGMA_CLAMP = 10.0


def mse_loss(pred: Tensor, target) -> Tensor:
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return (diff * diff).mean()


def bce_loss(pred: Tensor, target) -> Tensor:
    """Mean binary cross-entropy of probabilities (clamped to [1e-7, 1 - 1e-7])."""
    target = np.asarray(as_tensor(target).data)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if not np.isin(target, (0.0, 1.0)).all():
        raise ValueError("bce targets must be 0 or 1")
    p = pred.clip(PROB_EPS, 1 - PROB_EPS)
    ll = p.log() * target + (1.0 - p).log() * (1.0 - target)
    return -ll.mean()


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Mean negative log-softmax at the integer class labels."""
    labels = np.asarray(labels, dtype=int)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError("cross_entropy_loss expects (batch, classes) logits and (batch,) labels")
    logp = logits.log_softmax(axis=-1)
    return -logp[np.arange(len(labels)), labels].mean()


def gaussian_kl(mu: Tensor, sigma: Tensor | None = None, log_sigma: Tensor | None = None) -> Tensor:
    """``KL(N(mu, diag sigma^2) || N(0, I))`` summed over all entries."""
    if log_sigma is None:
        log_sigma = as_tensor(sigma).log()
    log_sigma = log_sigma.clip(-LOG_SIGMA_CLAMP, LOG_SIGMA_CLAMP)
    var = (log_sigma * 2.0).exp()
    return ((mu * mu + var - log_sigma * 2.0 - 1.0) * 0.5).sum()


def bernoulli_log_likelihood(logits: Tensor, target: np.ndarray) -> Tensor:
    """Sum of ``log p(target | sigmoid(logits))``, computed from logits."""
    return (logits.log_sigmoid() * target + (-logits).log_sigmoid() * (1.0 - target)).sum()
