"""Joint objective, Adam, the training loop and both prediction paths.

The objective for one mini-batch is::

    L_final = L_grc + lambda1 * L_mse + lambda2 * L_crit

where ``L_crit`` is the soft-label, CE or logit-adjusted CE loss on the
classifier logits.  During training every sample is regressed by the expert
of its ground-truth group; at inference the classifier picks the expert.

Each expert regresses in units of its bin width around its bin centre (the
single vanilla regressor owns the whole range), and ``L_mse`` is measured in
those units: ``((y - y_hat) / width)**2``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import model as M
from .contrastive import grc_loss_and_grad
from .datagen import Dataset
from .errors import ConfigError, EmptyDatasetError, ShapeMismatchError
from .grouping import GroupingScheme, group_of, make_grouping, sample_lds_weights
from .softlabel import SoftLabelCodec, empirical_prior, hard_ce_loss, la_ce_loss, soft_ce_loss, soft_target_matrix

log = logging.getLogger(__name__)

CRITERIA = ("soft", "ce", "la")
HISTORY_COLUMNS = ("epoch", "l_grc", "l_mse", "l_soft", "l_final", "train_mae", "val_mae_cls", "val_mae_gt")


@dataclass(frozen=True)
class TrainConfig:
    num_groups: int = 20
    y_min: float = 0.0
    y_max: float = 100.0
    lambda1: float = 0.5
    lambda2: float = 1.0
    temperature: float = 2.5
    beta: float = 1.0
    criterion: str = "soft"
    tau: float = 1.0
    use_lds: bool = False
    lds_kernel_radius: int = 2
    lds_sigma: float = 2.0
    lds_intra_bins: int = 1
    learning_rate: float = 1e-3
    epochs: int = 60
    batch_size: int = 128
    seed: int = 0
    stage2_epochs: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    hidden_dims: tuple[int, ...] = (64, 64)
    embed_dim: int = 16
    # MSE-only single-regressor baseline
    vanilla: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        checks = [
            (self.lambda1 >= 0, "lambda1 must be >= 0"),
            (self.lambda2 >= 0, "lambda2 must be >= 0"),
            (self.temperature > 0, "temperature must be > 0"),
            (self.beta > 0, "beta must be > 0"),
            (self.criterion in CRITERIA, f"criterion must be one of {CRITERIA}"),
            (self.learning_rate > 0, "learning_rate must be > 0"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.stage2_epochs >= 0, "stage2_epochs must be >= 0"),
            (self.batch_size >= 2, "batch_size must be >= 2"),
            (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1, "Adam betas must lie in [0, 1)"),
            (self.adam_eps > 0, "adam_eps must be > 0"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.embed_dim >= 1 and all(h >= 1 for h in self.hidden_dims), "layer sizes must be >= 1"),
            (self.lds_intra_bins >= 1, "lds_intra_bins must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        # validates the label range and group count
        self.scheme()

    def scheme(self) -> GroupingScheme:
        return make_grouping(self.y_min, self.y_max, self.num_groups)

    @property
    def num_experts(self) -> int:
        return 1 if self.vanilla else self.num_groups

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: M.ModelParams) -> "AdamState":
        return cls([np.zeros_like(a) for a in params.arrays()], [np.zeros_like(a) for a in params.arrays()], 0)


@dataclass
class EpochRecord:
    epoch: int
    l_grc: float
    l_mse: float
    l_soft: float
    l_final: float
    train_mae: float
    val_mae_cls: float
    val_mae_gt: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTORY_COLUMNS)
            for r in self.records:
                w.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in HISTORY_COLUMNS[1:]])

    @classmethod
    def from_csv(cls, path) -> "TrainHistory":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != HISTORY_COLUMNS:
                raise ValueError(f"{path}: unexpected history header {reader.fieldnames}")
            return cls([EpochRecord(int(row["epoch"]), *(float(row[c]) for c in HISTORY_COLUMNS[1:]))
                        for row in reader])


def multi_expert_mse(preds, targets, weights=None, scale: float = 1.0) -> tuple[float, np.ndarray]:
    """Weighted squared error summed over samples (each already routed to its
    ground-truth expert) and divided by the batch size.

    Returns the value and dLoss/dpred.  ``scale`` divides the residuals, so
    the loss is measured in units of ``scale``.
    """
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if not (p.shape == t.shape == w.shape):
        raise ShapeMismatchError("preds, targets and weights need equal lengths")
    if p.size == 0:
        return 0.0, p.copy()
    B = p.size
    r = (t - p) / scale
    return float(np.sum(w * r * r)) / B, -2.0 * w * r / (scale * B)


@dataclass
class _Context:
    """Per-run constants shared by every batch."""

    config: TrainConfig
    scheme: GroupingScheme
    codec: SoftLabelCodec | None
    prior: np.ndarray | None


def _make_context(config: TrainConfig, train_labels) -> _Context:
    scheme = config.scheme()
    codec = None if config.vanilla else SoftLabelCodec(config.num_groups, config.beta)
    prior = None
    if config.criterion == "la" and not config.vanilla:
        prior = empirical_prior(group_of(scheme, train_labels), config.num_groups)
    return _Context(config, scheme, codec, prior)


def _criterion(ctx: _Context, logits: np.ndarray, groups: np.ndarray):
    crit = ctx.config.criterion
    if crit == "soft":
        return soft_ce_loss(logits, soft_target_matrix(ctx.codec, groups))
    if crit == "ce":
        return hard_ce_loss(logits, groups)
    return la_ce_loss(logits, groups, ctx.prior, ctx.config.tau)


def _routes(ctx: _Context, y: np.ndarray) -> np.ndarray:
    if ctx.config.vanilla:
        group_of(ctx.scheme, y)  # range check only
        return np.zeros(y.shape[0], dtype=np.int64)
    return group_of(ctx.scheme, y)


def _batch_objective(params: M.ModelParams, x, y, weights, ctx: _Context, with_grad: bool = True,
                     frozen_encoder: bool = False):
    cfg = ctx.config
    z, cache = M.encode(params, x)
    g = _routes(ctx, y)
    preds = M.regress_batch(params, z, g)
    l_mse, d_pred = multi_expert_mse(preds, y, weights, scale=params.label_scale)

    if cfg.vanilla:
        comps = {"l_grc": 0.0, "l_mse": l_mse, "l_soft": 0.0, "l_final": l_mse}
        grads = M.backward(params, cache, grad_pred=d_pred, groups=g, z=z)[0] if with_grad else None
        return comps, grads, preds

    if frozen_encoder:
        l_grc, d_z = 0.0, None
    else:
        l_grc, d_z = grc_loss_and_grad(z, g, cfg.temperature)
    crit = _criterion(ctx, M.classify(params, z), g)
    comps = {
        "l_grc": l_grc,
        "l_mse": l_mse,
        "l_soft": crit.value,
        "l_final": l_grc + cfg.lambda1 * l_mse + cfg.lambda2 * crit.value,
    }
    grads = None
    if with_grad:
        grads = M.backward(params, cache, grad_z=d_z, grad_logits=cfg.lambda2 * crit.grad_logits,
                           grad_pred=cfg.lambda1 * d_pred, groups=g, z=z, encoder=not frozen_encoder)[0]
    return comps, grads, preds


def final_loss(params: M.ModelParams, x, y, config: TrainConfig, weights=None, prior=None,
               train_labels=None):
    """Objective, its components and the full parameter gradient for one batch.

    ``prior`` (LA only) defaults to the empirical group frequencies of
    ``train_labels`` or, failing that, of ``y``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise EmptyDatasetError("empty batch")
    ctx = _make_context(config, y if train_labels is None else train_labels)
    if prior is not None:
        ctx.prior = np.asarray(prior, dtype=np.float64)
    comps, grads, _ = _batch_objective(params, x, y, weights, ctx)
    return comps["l_final"], comps, grads


def adam_step(state: AdamState, params: M.ModelParams, grads: M.ModelParams, config: TrainConfig,
              skip: int = 0) -> tuple[M.ModelParams, AdamState]:
    """Bias-corrected Adam with L2-coupled weight decay.

    The first ``skip`` arrays of ``params.arrays()`` (e.g. a frozen encoder)
    are left untouched along with their moments.
    """
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or len(state.m) != len(p_arrays):
        raise ShapeMismatchError("parameter, gradient and optimizer state layouts differ")
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.step + 1
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    new_params = params.copy()
    new_m, new_v = [], []
    for i, (p, g, m, v, out) in enumerate(zip(p_arrays, g_arrays, state.m, state.v, new_params.arrays())):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatchError(f"array {i}: shape {g.shape} vs {p.shape}")
        if i < skip:
            new_m.append(m.copy())
            new_v.append(v.copy())
            continue
        g = g + config.weight_decay * p
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        out[...] = p - config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


def predict(params: M.ModelParams, scheme: GroupingScheme | None, x) -> tuple[np.ndarray, np.ndarray]:
    """Classification-guided prediction: route each sample to its argmax group.

    Ties go to the lowest group index.
    """
    if scheme is not None and scheme.num_groups != params.num_groups:
        raise ShapeMismatchError(f"scheme has {scheme.num_groups} groups, model {params.num_groups}")
    z, _ = M.encode(params, x)
    g_hat = np.argmax(M.classify(params, z), axis=1)
    return g_hat, M.regress_batch(params, z, g_hat)


def predict_gt_guided(params: M.ModelParams, x, g) -> np.ndarray:
    z, _ = M.encode(params, x)
    g = np.broadcast_to(np.asarray(g, dtype=np.int64), (z.shape[0],))
    return M.regress_batch(params, z, g)


def init_model(config: TrainConfig, input_dim: int) -> M.ModelParams:
    k = config.num_experts
    width = (config.y_max - config.y_min) / k
    centres = config.y_min + (np.arange(k) + 0.5) * width
    return M.init_params(config.seed, input_dim, config.hidden_dims, config.embed_dim, k,
                         label_offset=centres, label_scale=width)


def _sample_weights(config: TrainConfig, scheme: GroupingScheme, y) -> np.ndarray | None:
    if not config.use_lds:
        return None
    return sample_lds_weights(y, scheme, config.lds_intra_bins, config.lds_kernel_radius, config.lds_sigma)


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def evaluate_objective(params: M.ModelParams, config: TrainConfig, dataset: Dataset) -> dict:
    """Size-weighted mean of each loss component over ``dataset`` in fixed-order batches."""
    if len(dataset) == 0:
        raise EmptyDatasetError("empty dataset")
    ctx = _make_context(config, dataset.y)
    weights = _sample_weights(config, ctx.scheme, dataset.y)
    totals = dict.fromkeys(("l_grc", "l_mse", "l_soft", "l_final"), 0.0)
    for idx in _batches(len(dataset), config.batch_size, np.arange(len(dataset))):
        comps, _, _ = _batch_objective(params, dataset.x[idx], dataset.y[idx],
                                       None if weights is None else weights[idx], ctx, with_grad=False)
        for k in totals:
            totals[k] += comps[k] * idx.size
    return {k: v / len(dataset) for k, v in totals.items()}


def _val_maes(params: M.ModelParams, ctx: _Context, val_set: Dataset | None) -> tuple[float, float]:
    if val_set is None or len(val_set) == 0:
        return math.nan, math.nan
    _, y_cls = predict(params, None, val_set.x)
    y_gt = predict_gt_guided(params, val_set.x, _routes(ctx, val_set.y))
    return float(np.mean(np.abs(val_set.y - y_cls))), float(np.mean(np.abs(val_set.y - y_gt)))


def train(config: TrainConfig, train_set: Dataset, val_set: Dataset | None = None,
          params: M.ModelParams | None = None) -> tuple[M.ModelParams, TrainHistory]:
    """Mini-batch training of the joint objective.

    Each epoch reshuffles with an RNG seeded from ``config.seed``; the last
    partial batch is kept.  After ``config.epochs`` joint epochs, an optional
    second stage of ``config.stage2_epochs`` freezes the encoder and trains
    the classifier and experts on ``lambda1*L_mse + lambda2*L_crit``.
    """
    if len(train_set) == 0:
        raise EmptyDatasetError("training set is empty")
    ctx = _make_context(config, train_set.y)
    if params is None:
        params = init_model(config, train_set.x.shape[1])
    elif params.num_groups != config.num_experts:
        raise ShapeMismatchError("initial parameters have the wrong number of experts")
    weights = _sample_weights(config, ctx.scheme, train_set.y)
    state = AdamState.zeros(params)
    rng = np.random.default_rng((config.seed, 1))
    history = TrainHistory()
    n = len(train_set)

    total = config.epochs + config.stage2_epochs
    for epoch in range(total):
        frozen = epoch >= config.epochs
        skip = params.encoder_size() if frozen else 0
        sums = dict.fromkeys(("l_grc", "l_mse", "l_soft", "l_final"), 0.0)
        abs_err = 0.0
        for idx in _batches(n, config.batch_size, rng.permutation(n)):
            y = train_set.y[idx]
            comps, grads, preds = _batch_objective(params, train_set.x[idx], y,
                                                   None if weights is None else weights[idx], ctx,
                                                   frozen_encoder=frozen and not config.vanilla)
            params, state = adam_step(state, params, grads, config, skip=skip)
            for k in sums:
                sums[k] += comps[k] * idx.size
            abs_err += float(np.sum(np.abs(y - preds)))
        val_cls, val_gt = _val_maes(params, ctx, val_set)
        rec = EpochRecord(epoch + 1, *(sums[k] / n for k in ("l_grc", "l_mse", "l_soft", "l_final")),
                          abs_err / n, val_cls, val_gt)
        history.records.append(rec)
        log.debug("epoch %d: L=%.4f train_mae=%.3f val_cls=%.3f val_gt=%.3f",
                  rec.epoch, rec.l_final, rec.train_mae, val_cls, val_gt)
    return params, history


def vanilla_config(config: TrainConfig) -> TrainConfig:
    """The MSE-only single-regressor counterpart of ``config``."""
    return replace(config, vanilla=True, lambda2=0.0, stage2_epochs=0)
