"""Regression and group-classification metrics with many/median/few breakdown."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import EmptyInputError, InvalidGroupError, ZeroVarianceError
from .grouping import GroupingScheme, Shot, ShotThresholds, group_of, shot_categories

GM_EPS = 1e-6
REPORT_FIELDS = ("mae", "gm", "bmae", "pearson", "group_accuracy", "absdiff_histogram", "per_shot")


def _pair(preds, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise EmptyInputError("metrics need at least one prediction")
    return p, t


def mae(preds, targets) -> float:
    p, t = _pair(preds, targets)
    return float(np.mean(np.abs(t - p)))


def gm(preds, targets, eps: float = GM_EPS) -> float:
    """Geometric mean of absolute errors, each floored at ``eps``.

    Accumulated in log space so long runs of small errors do not underflow.
    The result is capped at the arithmetic mean of the floored errors, which
    it can only exceed through rounding when all errors are equal.
    """
    p, t = _pair(preds, targets)
    err = np.maximum(np.abs(t - p), eps)
    return float(min(np.exp(np.mean(np.log(err))), np.mean(err)))


def bmae(preds, targets, bins) -> float:
    """Unweighted mean over non-empty bins of the per-bin MAE.

    ``bins`` is either one bin index per sample or a :class:`GroupingScheme`
    used to bin the targets.
    """
    p, t = _pair(preds, targets)
    idx = group_of(bins, t) if isinstance(bins, GroupingScheme) else np.asarray(bins, dtype=np.int64).reshape(-1)
    if idx.shape != t.shape:
        raise ValueError("need one bin index per sample")
    idx = idx - idx.min()
    err = np.abs(t - p)
    counts = np.bincount(idx)
    sums = np.bincount(idx, weights=err)
    nonempty = counts > 0
    return float(np.mean(sums[nonempty] / counts[nonempty]))


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError("pearson needs equal-length inputs")
    if a.size < 2:
        raise EmptyInputError("pearson needs at least two points")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt(np.dot(da, da)), np.sqrt(np.dot(db, db))
    if sa == 0 or sb == 0:
        raise ZeroVarianceError("pearson undefined for a constant sequence")
    return float(np.clip(np.dot(da, db) / (sa * sb), -1.0, 1.0))


class GroupDiagnostics(NamedTuple):
    accuracy: float
    absdiff_histogram: np.ndarray
    row_sums: np.ndarray


def confusion_matrix(pred_groups, true_groups, num_groups: int) -> np.ndarray:
    """Counts with rows indexed by true group and columns by predicted group."""
    p = np.asarray(pred_groups, dtype=np.int64).reshape(-1)
    t = np.asarray(true_groups, dtype=np.int64).reshape(-1)
    if p.shape != t.shape:
        raise ValueError("prediction/ground-truth length mismatch")
    for v in (p, t):
        if v.size and (v.min() < 0 or v.max() >= num_groups):
            raise InvalidGroupError(f"group index outside 0..{num_groups - 1}")
    return np.bincount(t * num_groups + p, minlength=num_groups * num_groups).reshape(num_groups, num_groups)


def group_diagnostics(pred_groups, true_groups, num_groups: int) -> GroupDiagnostics:
    conf = confusion_matrix(pred_groups, true_groups, num_groups)
    p = np.asarray(pred_groups, dtype=np.int64).reshape(-1)
    t = np.asarray(true_groups, dtype=np.int64).reshape(-1)
    if p.size == 0:
        raise EmptyInputError("no group predictions")
    hist = np.bincount(np.abs(p - t), minlength=num_groups)
    return GroupDiagnostics(float(hist[0]) / p.size, hist, conf.sum(axis=1))


@dataclass
class MetricsReport:
    mae: float
    gm: float
    bmae: float
    pearson: float | None  # None flags a zero-variance input
    group_accuracy: float
    absdiff_histogram: list[int]
    per_shot: dict = field(default_factory=dict)  # shot name -> {"mae", "gm", "count"}

    @property
    def mean_absdiff(self) -> float:
        h = np.asarray(self.absdiff_histogram, dtype=np.float64)
        return float(np.dot(np.arange(h.size), h) / h.sum())

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        missing = [k for k in REPORT_FIELDS if k not in data]
        if missing:
            raise ValueError(f"report is missing fields {missing}")
        return cls(**{k: data[k] for k in REPORT_FIELDS})

    def to_text(self) -> str:
        fmt = lambda v: "n/a" if v is None else f"{v:.4f}"
        lines = [
            f"{'metric':<16}{'value':>12}",
            f"{'MAE':<16}{fmt(self.mae):>12}",
            f"{'GM':<16}{fmt(self.gm):>12}",
            f"{'bMAE':<16}{fmt(self.bmae):>12}",
            f"{'Pearson':<16}{fmt(self.pearson):>12}",
            f"{'group acc':<16}{fmt(self.group_accuracy):>12}",
            f"{'mean |dg|':<16}{fmt(self.mean_absdiff):>12}",
            "",
            f"{'shot':<10}{'count':>8}{'MAE':>12}{'GM':>12}",
        ]
        for shot in Shot:
            s = self.per_shot.get(shot.value, {"count": 0, "mae": None, "gm": None})
            lines.append(f"{shot.value:<10}{s['count']:>8}{fmt(s['mae']):>12}{fmt(s['gm']):>12}")
        return "\n".join(lines) + "\n"


def metrics_from_predictions(pred_y, true_y, pred_g, scheme: GroupingScheme,
                             train_counts, thresholds: ShotThresholds = ShotThresholds(),
                             bins=None, gm_eps: float = GM_EPS) -> MetricsReport:
    """Assemble a report from raw predictions.

    Shot categories come from ``train_counts`` (one count per group of
    ``scheme``) and are applied to each sample through its true label's group.
    """
    p, t = _pair(pred_y, true_y)
    true_g = group_of(scheme, t)
    diag = group_diagnostics(pred_g, true_g, scheme.num_groups)
    try:
        r = pearson(p, t)
    except ZeroVarianceError:
        r = None
    shots = np.array([s.value for s in shot_categories(train_counts, thresholds)])
    if shots.size != scheme.num_groups:
        raise ValueError("train_counts must have one entry per group")
    sample_shot = shots[true_g]
    per_shot = {}
    for shot in Shot:
        m = sample_shot == shot.value
        n = int(m.sum())
        per_shot[shot.value] = {
            "mae": mae(p[m], t[m]) if n else None,
            "gm": gm(p[m], t[m], gm_eps) if n else None,
            "count": n,
        }
    return MetricsReport(
        mae=mae(p, t),
        gm=gm(p, t, gm_eps),
        bmae=bmae(p, t, scheme if bins is None else bins),
        pearson=r,
        group_accuracy=diag.accuracy,
        absdiff_histogram=[int(c) for c in diag.absdiff_histogram],
        per_shot=per_shot,
    )


def full_report(params, scheme: GroupingScheme, test_set, thresholds: ShotThresholds = ShotThresholds(),
                train_counts=None, guidance: str = "cls", bins=None) -> MetricsReport:
    """Evaluate a model on ``test_set``.

    ``guidance="cls"`` routes through the predicted group (deployment path);
    ``"gt"`` routes through the true group.  Group accuracy and the |g_hat-g|
    histogram always describe the classifier; for a single-regressor model
    they describe the group its prediction falls in.
    """
    from .training import predict, predict_gt_guided

    if train_counts is None:
        raise ValueError("full_report needs the training-set group counts")
    if params.num_groups == 1:
        # single regressor: report the group its prediction lands in
        _, y_hat = predict(params, None, test_set.x)
        g_hat = group_of(scheme, np.clip(y_hat, scheme.y_min, scheme.y_max))
    else:
        g_hat, y_hat = predict(params, scheme, test_set.x)
    if guidance == "gt":
        route = group_of(scheme, test_set.y) if params.num_groups > 1 else 0
        y_hat = predict_gt_guided(params, test_set.x, route)
    elif guidance != "cls":
        raise ValueError(f"unknown guidance {guidance!r}")
    return metrics_from_predictions(y_hat, test_set.y, g_hat, scheme, train_counts, thresholds, bins)
