"""Group-classification criteria: symmetric descending soft labels, CE and LA.

Every loss takes logits of shape ``(G,)`` for one sample or ``(B, G)`` for a
batch.  Batched values are averaged over rows and the returned gradient is
that of the averaged value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, InvalidGroupError, InvalidPriorError, NonFiniteInputError

PRIOR_FLOOR = 1e-12


class LossWithGrad(NamedTuple):
    value: float
    grad_logits: np.ndarray


@dataclass(frozen=True)
class SoftLabelCodec:
    num_groups: int
    beta: float = 1.0

    def __post_init__(self):
        if self.num_groups < 2:
            raise ConfigError(f"soft labels need at least 2 groups, got {self.num_groups}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class SoftTarget:
    probs: np.ndarray


def _check_groups(g, num_groups: int) -> np.ndarray:
    g = np.asarray(g)
    if g.dtype.kind not in "iu" and not np.all(np.equal(np.mod(g, 1), 0)):
        raise InvalidGroupError(f"group index must be an integer, got {g}")
    g = g.astype(np.int64)
    if np.any(g < 0) or np.any(g >= num_groups):
        raise InvalidGroupError(f"group index outside 0..{num_groups - 1}")
    return g


def encode_soft_logits(codec: SoftLabelCodec, g) -> np.ndarray:
    """Logits ``|G| - beta*|j - g|`` peaked at ``g``; shape (G,) or (B, G)."""
    g = _check_groups(g, codec.num_groups)
    j = np.arange(codec.num_groups)
    return codec.num_groups - codec.beta * np.abs(j - g[..., None]).astype(np.float64)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def soft_target(codec: SoftLabelCodec, g: int) -> SoftTarget:
    return SoftTarget(_softmax(encode_soft_logits(codec, g)))


def soft_target_matrix(codec: SoftLabelCodec, groups) -> np.ndarray:
    """Soft targets for a batch of group indices, shape (B, G)."""
    return _softmax(encode_soft_logits(codec, np.asarray(groups).reshape(-1)))


def _as_logits(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NonFiniteInputError("logits contain NaN or inf")
    if logits.ndim not in (1, 2):
        raise ValueError(f"logits must be 1-D or 2-D, got shape {logits.shape}")
    return logits


def soft_ce_loss(logits, target) -> LossWithGrad:
    """Cross-entropy ``-sum_g q_g log p_g`` against a (soft) target distribution."""
    logits = _as_logits(logits)
    q = np.asarray(target.probs if isinstance(target, SoftTarget) else target, dtype=np.float64)
    if q.shape != logits.shape:
        raise ValueError(f"target shape {q.shape} does not match logits {logits.shape}")
    logp = _log_softmax(logits)
    rows = 1 if logits.ndim == 1 else logits.shape[0]
    value = -float(np.sum(q * logp)) / rows
    grad = (np.exp(logp) - q) / rows
    return LossWithGrad(value, grad)


def _onehot(g: np.ndarray, num_groups: int) -> np.ndarray:
    out = np.zeros(g.shape + (num_groups,))
    np.put_along_axis(out, g[..., None], 1.0, axis=-1)
    return out


def hard_ce_loss(logits, g) -> LossWithGrad:
    logits = _as_logits(logits)
    g = _check_groups(g, logits.shape[-1])
    if logits.ndim == 2 and g.shape != (logits.shape[0],):
        raise ValueError("need one group index per logits row")
    return soft_ce_loss(logits, _onehot(g, logits.shape[-1]))


def empirical_prior(groups, num_groups: int) -> np.ndarray:
    """Group frequencies with a small floor so every class keeps a finite log-prior."""
    counts = np.bincount(np.asarray(groups, dtype=np.int64).reshape(-1), minlength=num_groups)
    prior = counts / max(counts.sum(), 1) + PRIOR_FLOOR
    return prior / prior.sum()


def la_ce_loss(logits, g, prior, tau: float = 1.0) -> LossWithGrad:
    """Logit-adjusted CE: hard CE on ``logits + tau*log(prior)``.

    The adjustment is a constant offset per class, so the gradient with
    respect to the raw logits equals the gradient with respect to the
    adjusted ones.
    """
    logits = _as_logits(logits)
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (logits.shape[-1],):
        raise InvalidPriorError(f"prior must have length {logits.shape[-1]}")
    if np.any(~np.isfinite(prior)) or np.any(prior <= 0):
        raise InvalidPriorError("prior entries must be strictly positive")
    if abs(prior.sum() - 1.0) > 1e-9:
        raise InvalidPriorError(f"prior sums to {prior.sum()}, expected 1")
    return hard_ce_loss(logits + tau * np.log(prior), g)


def entropy(q) -> float:
    q = np.asarray(q, dtype=np.float64)
    nz = q[q > 0]
    return -float(np.sum(nz * np.log(nz)))
