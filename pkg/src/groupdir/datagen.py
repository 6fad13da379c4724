"""Synthetic imbalanced regression data.

Labels for the training split follow an exponentially tilted density on
``[y_min, y_max]`` (head-heavy for ``skew_rate > 0``); validation and test
labels are uniform.  Features are a smooth random-Fourier map of the
normalised label plus Gaussian noise, so nearby labels give nearby inputs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, MalformedRowError

OMEGA_RANGE = (0.5, 4.0 * math.pi)
AMPLITUDE_RANGE = (0.5, 1.5)


@dataclass(frozen=True)
class SynthConfig:
    y_min: float = 0.0
    y_max: float = 100.0
    skew_rate: float = 4.0
    feature_dim: int = 16
    num_fourier: int = 16
    noise_sigma: float = 0.6  # high enough that group prediction is genuinely hard
    n_train: int = 2000
    n_val: int = 1000
    n_test: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.y_min < self.y_max:
            raise ConfigError(f"need y_min < y_max, got [{self.y_min}, {self.y_max}]")
        if not self.skew_rate >= 0:
            raise ConfigError(f"skew_rate must be >= 0, got {self.skew_rate}")
        if self.feature_dim < 1 or self.num_fourier < 1:
            raise ConfigError("feature_dim and num_fourier must be >= 1")
        if not self.noise_sigma >= 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ConfigError("sample counts must be >= 0")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SynthConfig":
        raw = json.loads(text)
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in raw.items() if k in known})


@dataclass
class Dataset:
    x: np.ndarray  # (N, feature_dim)
    y: np.ndarray  # (N,)

    def __len__(self) -> int:
        return self.y.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.x.shape == other.x.shape and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y))


@dataclass(frozen=True)
class FeatureMap:
    amplitude: np.ndarray
    omega: np.ndarray
    phase: np.ndarray
    projection: np.ndarray | None  # (num_fourier, feature_dim); None means identity

    def __call__(self, y_norm) -> np.ndarray:
        u = np.asarray(y_norm, dtype=np.float64).reshape(-1, 1)
        comp = self.amplitude * np.sin(self.omega * u + self.phase)
        return comp if self.projection is None else comp @ self.projection

    def lipschitz(self) -> float:
        """Upper bound on ||dx/d(y_norm)|| over the whole range."""
        base = float(np.sqrt(np.sum((self.amplitude * self.omega) ** 2)))
        if self.projection is None:
            return base
        return base * float(np.linalg.norm(self.projection, 2))


def _streams(seed: int):
    coef, tr, va, te = np.random.SeedSequence(seed).spawn(4)
    return [np.random.default_rng(s) for s in (coef, tr, va, te)]


def feature_map(config: SynthConfig) -> FeatureMap:
    rng = _streams(config.seed)[0]
    k = config.num_fourier
    amplitude = rng.uniform(*AMPLITUDE_RANGE, size=k)
    omega = rng.uniform(*OMEGA_RANGE, size=k)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=k)
    projection = None
    if config.feature_dim != k:
        projection = rng.normal(size=(k, config.feature_dim)) / math.sqrt(k)
    return FeatureMap(amplitude, omega, phase, projection)


def lipschitz_bound(config: SynthConfig) -> float:
    """Bound L with ||x(y1) - x(y2)|| <= L |y1 - y2| for noise-free features (label units)."""
    return feature_map(config).lipschitz() / (config.y_max - config.y_min)


def sample_tilted(rng: np.random.Generator, n: int, rate: float) -> np.ndarray:
    """Inverse-CDF samples on [0, 1] with density proportional to exp(-rate*u)."""
    u = rng.uniform(size=n)
    if rate == 0:
        return u
    # F^-1(u) = -log(1 - u(1 - e^-r)) / r
    return np.clip(-np.log1p(u * np.expm1(-rate)) / rate, 0.0, 1.0)


def _make_split(config: SynthConfig, fmap: FeatureMap, rng, n: int, rate: float) -> Dataset:
    u = sample_tilted(rng, n, rate)
    y = config.y_min + u * (config.y_max - config.y_min)
    y = np.clip(y, config.y_min, config.y_max)
    x = fmap(u).reshape(n, config.feature_dim)
    x = x + config.noise_sigma * rng.standard_normal(size=x.shape)
    return Dataset(x, y)


def generate(config: SynthConfig) -> tuple[Dataset, Dataset, Dataset]:
    fmap = feature_map(config)
    _, r_tr, r_va, r_te = _streams(config.seed)
    return (
        _make_split(config, fmap, r_tr, config.n_train, config.skew_rate),
        _make_split(config, fmap, r_va, config.n_val, 0.0),
        _make_split(config, fmap, r_te, config.n_test, 0.0),
    )


def save_csv(dataset: Dataset, path) -> None:
    d = dataset.x.shape[1] if dataset.x.ndim == 2 else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(d)] + ["y"])
        for row, y in zip(dataset.x, dataset.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])


def load_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRowError(1, "missing header") from None
        if not header or header[-1] != "y":
            raise MalformedRowError(1, "header must end with 'y'")
        d = len(header) - 1
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise MalformedRowError(line_no, f"expected {d + 1} columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise MalformedRowError(line_no, str(exc)) from None
    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), d + 1)
    return Dataset(data[:, :d].copy(), data[:, d].copy())


def write_splits(out_dir, config: SynthConfig) -> list[Path]:
    """Generate and write ``train.csv``, ``val.csv``, ``test.csv`` and ``config.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, ds in zip(("train", "val", "test"), generate(config)):
        save_csv(ds, out / f"{name}.csv")
        written.append(out / f"{name}.csv")
    (out / "config.json").write_text(config.to_json())
    return written + [out / "config.json"]
