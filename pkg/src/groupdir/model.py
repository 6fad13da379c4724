"""Feed-forward encoder, group classifier and per-group expert regressors.

The parameters are plain numpy arrays; forward and backward passes are written
out by hand.  Expert ``g`` is column ``g`` of ``experts.weight`` (shape
``(embed_dim, num_groups)``) together with ``experts.bias[g]``.  Expert outputs
are mapped to label units with a fixed affine read-out
``label_offset[g] + label_scale * raw`` that is stored with the model but
never trained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidGroupError, ShapeMismatchError

CHECKPOINT_FORMAT = "groupdir-checkpoint/1"


@dataclass
class Dense:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weight.shape

    def copy(self) -> "Dense":
        return Dense(self.weight.copy(), self.bias.copy())


@dataclass
class ModelParams:
    encoder: list[Dense]
    classifier: Dense
    experts: Dense
    label_offset: np.ndarray | float = 0.0  # one entry per expert
    label_scale: float = 1.0

    def __post_init__(self):
        self.label_offset = np.broadcast_to(np.asarray(self.label_offset, dtype=np.float64),
                                            (self.experts.shape[1],)).copy()
        self.label_scale = float(self.label_scale)
        for prev, nxt in zip(self.encoder, self.encoder[1:]):
            if prev.shape[1] != nxt.shape[0]:
                raise ShapeMismatchError("encoder layer shapes do not chain")
        e = self.embed_dim
        if self.classifier.shape[0] != e or self.experts.shape[0] != e:
            raise ShapeMismatchError("heads must read the encoder output dimension")
        if self.classifier.shape[1] != self.experts.shape[1]:
            raise ShapeMismatchError("need exactly one expert per group")

    @property
    def input_dim(self) -> int:
        return self.encoder[0].shape[0]

    @property
    def embed_dim(self) -> int:
        return self.encoder[-1].shape[1]

    @property
    def hidden_dims(self) -> list[int]:
        return [layer.shape[1] for layer in self.encoder[:-1]]

    @property
    def num_groups(self) -> int:
        return self.classifier.shape[1]

    def arrays(self) -> list[np.ndarray]:
        """All trainable arrays in a fixed order (views, not copies)."""
        out = []
        for layer in self.encoder:
            out += [layer.weight, layer.bias]
        return out + [self.classifier.weight, self.classifier.bias, self.experts.weight, self.experts.bias]

    def encoder_size(self) -> int:
        """Number of leading entries of :meth:`arrays` that belong to the encoder."""
        return 2 * len(self.encoder)

    def copy(self) -> "ModelParams":
        return ModelParams([l.copy() for l in self.encoder], self.classifier.copy(),
                           self.experts.copy(), self.label_offset.copy(), self.label_scale)

    def zeros_like(self) -> "ModelParams":
        z = self.copy()
        for a in z.arrays():
            a[...] = 0.0
        return z


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each encoder layer
    pre: list[np.ndarray] = field(default_factory=list)  # pre-activation of each encoder layer


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Dense:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Dense(rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out))


def init_params(seed: int, input_dim: int, hidden_dims, embed_dim: int, num_groups: int,
                label_offset=0.0, label_scale: float = 1.0) -> ModelParams:
    hidden_dims = list(hidden_dims)
    dims = [input_dim, *hidden_dims, embed_dim]
    if any(int(d) != d or d < 1 for d in dims) or num_groups < 1:
        raise ConfigError(f"invalid dimensions {dims} with {num_groups} groups")
    rng = np.random.default_rng(seed)
    encoder = [_glorot(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]
    classifier = _glorot(rng, embed_dim, num_groups)
    experts = _glorot(rng, embed_dim, num_groups)
    return ModelParams(encoder, classifier, experts, label_offset, label_scale)


def encode(params: ModelParams, x) -> tuple[np.ndarray, ForwardCache]:
    """Run the encoder; ReLU between layers, linear output."""
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != params.input_dim:
        raise ShapeMismatchError(f"expected (B, {params.input_dim}) input, got {h.shape}")
    cache = ForwardCache()
    last = len(params.encoder) - 1
    for i, layer in enumerate(params.encoder):
        cache.inputs.append(h)
        pre = h @ layer.weight + layer.bias
        cache.pre.append(pre)
        h = pre if i == last else np.maximum(pre, 0.0)
    return h, cache


def classify(params: ModelParams, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != params.embed_dim:
        raise ShapeMismatchError(f"expected (B, {params.embed_dim}) embeddings, got {z.shape}")
    return z @ params.classifier.weight + params.classifier.bias


def _check_route(params: ModelParams, groups) -> np.ndarray:
    g = np.asarray(groups, dtype=np.int64).reshape(-1)
    if np.any(g < 0) or np.any(g >= params.num_groups):
        raise InvalidGroupError(f"expert index outside 0..{params.num_groups - 1}")
    return g


def regress_batch(params: ModelParams, z, groups) -> np.ndarray:
    """Row ``b`` of ``z`` through expert ``groups[b]``; label units."""
    z = np.asarray(z, dtype=np.float64)
    g = _check_route(params, groups)
    if z.ndim != 2 or z.shape != (g.size, params.embed_dim):
        raise ShapeMismatchError(f"expected ({g.size}, {params.embed_dim}) embeddings, got {z.shape}")
    raw = np.einsum("bd,db->b", z, params.experts.weight[:, g]) + params.experts.bias[g]
    return params.label_offset[g] + params.label_scale * raw


def regress(params: ModelParams, z_row, g: int) -> float:
    if not 0 <= int(g) < params.num_groups:
        raise InvalidGroupError(f"expert index {g} outside 0..{params.num_groups - 1}")
    return float(regress_batch(params, np.asarray(z_row, dtype=np.float64).reshape(1, -1), [g])[0])


def backward(params: ModelParams, cache: ForwardCache, grad_z=None, grad_logits=None,
             grad_pred=None, groups=None, z=None, encoder=True) -> tuple[ModelParams, np.ndarray | None]:
    """Gradients of a scalar loss given its derivatives at the model outputs.

    Args:
        grad_z: dLoss/dz, shape (B, embed_dim), or None.
        grad_logits: dLoss/dlogits, shape (B, G), or None.
        grad_pred: dLoss/dy_hat per sample in label units, shape (B,), or None.
            Requires ``groups`` (the expert each sample was routed through).
        z: the encoder output of this forward pass; recomputed from the cache
            when omitted.
        encoder: when False the encoder is treated as frozen and its gradients
            (and the input gradient) are left at zero / None.

    Returns:
        A ``ModelParams``-shaped gradient and dLoss/dx (None if ``encoder`` is
        False).
    """
    if len(cache.pre) != len(params.encoder):
        raise ShapeMismatchError("cache does not match the encoder depth")
    B = cache.inputs[0].shape[0]
    if z is None:
        z = cache.pre[-1]
    if z.shape != (B, params.embed_dim):
        raise ShapeMismatchError("stale cache: embedding shape mismatch")
    grads = params.zeros_like()
    dz = np.zeros_like(z) if grad_z is None else np.array(grad_z, dtype=np.float64)
    if dz.shape != z.shape:
        raise ShapeMismatchError(f"grad_z shape {dz.shape} != {z.shape}")

    if grad_logits is not None:
        gl = np.asarray(grad_logits, dtype=np.float64)
        if gl.shape != (B, params.num_groups):
            raise ShapeMismatchError(f"grad_logits shape {gl.shape} != {(B, params.num_groups)}")
        grads.classifier.weight[...] = z.T @ gl
        grads.classifier.bias[...] = gl.sum(axis=0)
        dz += gl @ params.classifier.weight.T

    if grad_pred is not None:
        g = _check_route(params, groups)
        gp = np.asarray(grad_pred, dtype=np.float64).reshape(-1) * params.label_scale
        if gp.shape != (B,) or g.shape != (B,):
            raise ShapeMismatchError("grad_pred and groups need one entry per sample")
        routed = np.zeros((B, params.num_groups))
        routed[np.arange(B), g] = gp
        grads.experts.weight[...] = z.T @ routed
        grads.experts.bias[...] = routed.sum(axis=0)
        dz += gp[:, None] * params.experts.weight[:, g].T

    if not encoder:
        return grads, None
    d = dz
    for i in range(len(params.encoder) - 1, -1, -1):
        if i != len(params.encoder) - 1:
            d = d * (cache.pre[i] > 0)
        layer = params.encoder[i]
        grads.encoder[i].weight[...] = cache.inputs[i].T @ d
        grads.encoder[i].bias[...] = d.sum(axis=0)
        d = d @ layer.weight.T
    return grads, d


def params_to_dict(params: ModelParams) -> dict:
    def dense(d: Dense) -> dict:
        return {"shape": list(d.weight.shape), "weight": d.weight.ravel().tolist(), "bias": d.bias.tolist()}

    return {
        "encoder": [dense(l) for l in params.encoder],
        "classifier": dense(params.classifier),
        "experts": dense(params.experts),
        "label_offset": params.label_offset.tolist(),
        "label_scale": params.label_scale,
    }


def params_from_dict(data: dict) -> ModelParams:
    def dense(d: dict) -> Dense:
        w = np.asarray(d["weight"], dtype=np.float64).reshape(d["shape"])
        return Dense(w, np.asarray(d["bias"], dtype=np.float64))

    return ModelParams([dense(l) for l in data["encoder"]], dense(data["classifier"]),
                       dense(data["experts"]), np.asarray(data["label_offset"], dtype=np.float64),
                       float(data["label_scale"]))


def save_checkpoint(path, params: ModelParams, config: dict | None = None) -> None:
    """Write parameters (and the training config) as JSON.

    Python's float repr is shortest-round-trip, so loading gives back the
    exact same bits.
    """
    doc = {"format": CHECKPOINT_FORMAT, "config": config or {}, "params": params_to_dict(params)}
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a groupdir checkpoint")
    return params_from_dict(doc["params"]), doc.get("config", {})
