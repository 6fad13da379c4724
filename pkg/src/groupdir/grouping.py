"""Partition a continuous label range into contiguous ordinal groups.

Groups are half-open bins ``[y_min + g*width, y_min + (g+1)*width)`` except the
last one, which is closed so that ``y_max`` has a home.  Besides the mapping
itself this module holds the histogram helpers used for shot categorisation
and for label-distribution-smoothing (LDS) sample weights.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DegenerateDensityError,
    InvalidGroupsError,
    InvalidRangeError,
    OutOfRangeError,
)

EPS_DENSITY = 1e-12


@dataclass(frozen=True)
class GroupingScheme:
    y_min: float
    y_max: float
    num_groups: int

    def __post_init__(self):
        if not (math.isfinite(self.y_min) and math.isfinite(self.y_max)) or self.y_min >= self.y_max:
            raise InvalidRangeError(f"need y_min < y_max, got [{self.y_min}, {self.y_max}]")
        if int(self.num_groups) != self.num_groups or self.num_groups < 2:
            raise InvalidGroupsError(f"need at least 2 groups, got {self.num_groups}")

    @property
    def width(self) -> float:
        return (self.y_max - self.y_min) / self.num_groups

    @property
    def span(self) -> float:
        return self.y_max - self.y_min

    def midpoint(self, g: int) -> float:
        return self.y_min + (g + 0.5) * self.width

    def refine(self, factor: int) -> "GroupingScheme":
        """Same range split into ``factor`` times as many bins."""
        return GroupingScheme(self.y_min, self.y_max, self.num_groups * factor)


class Shot(str, enum.Enum):
    MANY = "Many"
    MEDIAN = "Median"
    FEW = "Few"


@dataclass(frozen=True)
class ShotThresholds:
    many_min: int = 100
    few_max: int = 20

    def __post_init__(self):
        if self.few_max <= 0 or self.many_min <= 0:
            raise ConfigError("shot thresholds must be positive")
        if self.few_max >= self.many_min:
            raise ConfigError(f"few_max ({self.few_max}) must be below many_min ({self.many_min})")


def make_grouping(y_min: float, y_max: float, num_groups: int) -> GroupingScheme:
    return GroupingScheme(float(y_min), float(y_max), int(num_groups))


def group_of(scheme: GroupingScheme, y):
    """Map label(s) to group indices.

    Accepts a scalar (returns ``int``) or an array (returns an int64 array).
    Raises :class:`OutOfRangeError` for any label outside ``[y_min, y_max]``.
    """
    arr = np.asarray(y, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < scheme.y_min) or np.any(arr > scheme.y_max):
        raise OutOfRangeError(f"label(s) outside [{scheme.y_min}, {scheme.y_max}]")
    g = np.floor((arr - scheme.y_min) / scheme.width).astype(np.int64)
    g = np.clip(g, 0, scheme.num_groups - 1)
    if g.ndim == 0:
        return int(g)
    return g


def group_distance(g1, g2):
    """L1 distance between group indices (broadcasts over arrays)."""
    if np.ndim(g1) == 0 and np.ndim(g2) == 0:
        return abs(int(g1) - int(g2))
    return np.abs(np.asarray(g1, dtype=np.int64) - np.asarray(g2, dtype=np.int64))


def group_counts(labels, scheme: GroupingScheme) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if labels.size == 0:
        return np.zeros(scheme.num_groups, dtype=np.int64)
    return np.bincount(group_of(scheme, labels), minlength=scheme.num_groups).astype(np.int64)


def shot_categories(counts, thresholds: ShotThresholds = ShotThresholds()) -> list[Shot]:
    out = []
    for c in np.asarray(counts).reshape(-1):
        if c > thresholds.many_min:
            out.append(Shot.MANY)
        elif c < thresholds.few_max:
            out.append(Shot.FEW)
        else:
            out.append(Shot.MEDIAN)
    return out


def gaussian_kernel(kernel_radius: int, sigma: float) -> np.ndarray:
    if sigma <= 0 or kernel_radius < 0:
        raise ConfigError("LDS kernel needs sigma > 0 and kernel_radius >= 0")
    offsets = np.arange(-kernel_radius, kernel_radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (offsets / sigma) ** 2)
    return k / k.sum()


def lds_weights(counts, kernel_radius: int = 2, sigma: float = 2.0, kernel=None) -> np.ndarray:
    """Inverse smoothed-density weights, one per bin, rescaled to mean 1.

    The histogram is convolved with a symmetric kernel, padding the edges by
    repeating the boundary bins so a flat histogram stays flat.  ``kernel`` overrides the Gaussian built from
    ``kernel_radius``/``sigma``; it must have odd length.
    """
    counts = np.asarray(counts, dtype=np.float64).reshape(-1)
    if kernel is None:
        kernel = gaussian_kernel(kernel_radius, sigma)
    else:
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 1 or kernel.size % 2 == 0:
            raise ConfigError("explicit LDS kernel must be 1-D with odd length")
    if counts.size == 0:
        raise DegenerateDensityError("empty histogram")
    r = kernel.size // 2
    smoothed = np.convolve(np.pad(counts, r, mode="edge"), kernel, mode="valid")
    if not np.any(smoothed > 0):
        raise DegenerateDensityError("smoothed label density is zero everywhere")
    raw = 1.0 / np.maximum(smoothed, EPS_DENSITY)
    return raw / raw.mean()


def sample_lds_weights(labels, scheme: GroupingScheme, intra_bins: int = 1,
                       kernel_radius: int = 2, sigma: float = 2.0) -> np.ndarray:
    """Per-sample LDS weights from the histogram of ``labels``.

    The histogram uses ``num_groups * intra_bins`` bins over the scheme range,
    so ``intra_bins=1`` weights at group level.
    """
    if intra_bins < 1:
        raise ConfigError("intra_bins must be >= 1")
    fine = scheme.refine(intra_bins)
    labels = np.asarray(labels, dtype=np.float64)
    bins = group_of(fine, labels)
    w = lds_weights(group_counts(labels, fine), kernel_radius, sigma)
    return w[bins]
