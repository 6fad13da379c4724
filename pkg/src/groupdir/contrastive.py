"""Ordinal group-aware contrastive loss over a batch of embeddings.

For an anchor ``i`` and a partner ``j`` the softmax denominator runs over all
``k != i`` whose group distance to ``i`` is at least the distance between
``i`` and ``j``.  Same-group pairs are therefore pulled together and farther
groups are pushed away more than near ones.

Implementation note: instead of the naive O(B^3) triple loop, distances are
mapped to sorted levels per batch.  For every anchor the denominators are
suffix sums over levels (accumulated in log space so tiny temperatures do not
underflow) and the gradient needs the matching prefix sums of
``count / denominator``, giving O(B^2 + B*L) work.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigError, ZeroVectorError

EPS_NORM = 1e-12
DEFAULT_TEMPERATURE = 2.5


def l1_distance(g_a: np.ndarray, g_b: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(g_a, dtype=np.float64) - np.asarray(g_b, dtype=np.float64))


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= EPS_NORM or nb <= EPS_NORM:
        raise ZeroVectorError("cosine similarity of a (near-)zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _normalize_rows(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms <= EPS_NORM):
        raise ZeroVectorError("embedding batch contains a (near-)zero row")
    return z / norms[:, None], norms


def _check(z, groups, temperature):
    z = np.asarray(z, dtype=np.float64)
    groups = np.asarray(groups).reshape(-1)
    if z.ndim != 2 or z.shape[0] != groups.shape[0]:
        raise ValueError(f"need z of shape (B, D) with B={groups.shape[0]} groups, got {z.shape}")
    if not temperature > 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    return z, groups


def _forward(z, groups, temperature, distance):
    B = z.shape[0]
    n, norms = _normalize_rows(z)
    sim = np.clip(n @ n.T, -1.0, 1.0)

    dist = distance(groups[:, None], groups[None, :])
    levels, lev = np.unique(dist, return_inverse=True)
    lev = lev.reshape(B, B)
    L = levels.size

    off_diag = ~np.eye(B, dtype=bool)
    logits = sim / temperature
    rows = np.broadcast_to(np.arange(B)[:, None], (B, B))

    # log of the summed exp(logits) per (anchor, level), shifted per level
    level_max = np.full((B, L), -np.inf)
    np.maximum.at(level_max, (rows[off_diag], lev[off_diag]), logits[off_diag])
    ref = np.where(off_diag, level_max[rows, lev], logits)
    shifted = np.where(off_diag, np.exp(logits - ref), 0.0)
    flat = (rows * L + lev).ravel()
    mass = np.bincount(flat, weights=shifted.ravel(), minlength=B * L).reshape(B, L)
    cnt = np.bincount(flat, weights=off_diag.ravel().astype(np.float64), minlength=B * L).reshape(B, L)
    with np.errstate(divide="ignore"):
        log_mass = np.where(cnt > 0, level_max + np.log(mass), -np.inf)
    # log denominators: suffix log-sum-exp over levels >= l
    log_denom = np.logaddexp.accumulate(log_mass[:, ::-1], axis=1)[:, ::-1]
    return n, norms, logits, lev, off_diag, cnt, log_denom


def grc_loss(z, groups, temperature: float = DEFAULT_TEMPERATURE,
             distance: Callable = l1_distance) -> float:
    """Ordinal group-aware contrastive loss; 0 for batches with fewer than 2 rows."""
    z, groups = _check(z, groups, temperature)
    B = z.shape[0]
    if B < 2:
        return 0.0
    _, _, logits, lev, off_diag, _, log_denom = _forward(z, groups, temperature, distance)
    terms = np.where(off_diag, logits - np.take_along_axis(log_denom, lev, axis=1), 0.0)
    return -float(terms.sum()) / (B * (B - 1))


def grc_loss_and_grad(z, groups, temperature: float = DEFAULT_TEMPERATURE,
                      distance: Callable = l1_distance) -> tuple[float, np.ndarray]:
    """Loss value and its exact gradient with respect to ``z`` (shape (B, D))."""
    z, groups = _check(z, groups, temperature)
    B = z.shape[0]
    if B < 2:
        if B == 1:
            _normalize_rows(z)
        return 0.0, np.zeros_like(z)
    n, norms, logits, lev, off_diag, cnt, log_denom = _forward(z, groups, temperature, distance)
    N = B * (B - 1)
    ld = np.take_along_axis(log_denom, lev, axis=1)
    value = -float(np.where(off_diag, logits - ld, 0.0).sum()) / N

    # dL/dsim_ik = (-1 + exp(logit_ik) * sum_{l' <= lev_ik} cnt[i,l'] / denom[i,l']) / (N t).
    # W[i, l] = sum_{l' <= l} cnt[i,l'] * denom[i,l] / denom[i,l'] stays <= B since
    # denominators shrink with l.
    W = np.zeros_like(cnt)
    W[:, 0] = cnt[:, 0]
    with np.errstate(invalid="ignore"):
        step = np.exp(np.diff(log_denom, axis=1))
    step[~np.isfinite(log_denom[:, 1:])] = 0.0
    for l in range(1, cnt.shape[1]):
        W[:, l] = W[:, l - 1] * step[:, l - 1] + cnt[:, l]
    with np.errstate(invalid="ignore"):
        coef = np.exp(np.where(off_diag, logits - ld, -np.inf)) * np.take_along_axis(W, lev, axis=1)
    g_sim = np.where(off_diag, coef - 1.0, 0.0) / (N * temperature)

    g_n = (g_sim + g_sim.T) @ n
    radial = np.sum(g_n * n, axis=1, keepdims=True)
    grad = (g_n - radial * n) / norms[:, None]
    return value, grad


def grc_loss_backward(z, groups, temperature: float = DEFAULT_TEMPERATURE,
                      distance: Callable = l1_distance) -> np.ndarray:
    return grc_loss_and_grad(z, groups, temperature, distance)[1]
