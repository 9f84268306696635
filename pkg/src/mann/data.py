"""Datasets: CSV ingestion with label encoding, seeded splits, synthetic generators."""

import csv
import dataclasses
import hashlib
import math
from pathlib import Path
from typing import Optional

import numpy as np

from mann.errors import DataError

MISSING_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "none", "?"})


@dataclasses.dataclass
class ColumnMeta:
    name: str
    kind: str = "numeric"  # "numeric" | "categorical"
    levels: Optional[list] = None

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind}
        if self.levels is not None:
            d["levels"] = list(self.levels)
        return d


@dataclasses.dataclass
class LoadReport:
    rows_read: int = 0
    rows_kept: int = 0
    dropped: int = 0


@dataclasses.dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    column_meta: list = dataclasses.field(default_factory=list)
    name: str = ""
    clean_targets: Optional[np.ndarray] = None
    target_meta: Optional[ColumnMeta] = None
    report: Optional[LoadReport] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
        if self.features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {self.features.shape}")
        if self.features.shape[0] != self.targets.shape[0]:
            raise DataError(
                f"{self.features.shape[0]} feature rows but {self.targets.shape[0]} targets"
            )
        if np.isnan(self.features).any() or np.isnan(self.targets).any():
            raise DataError("dataset contains NaN values")
        if not self.column_meta:
            self.column_meta = [ColumnMeta(f"x{i}") for i in range(self.n_features)]
        if self.clean_targets is not None:
            self.clean_targets = np.asarray(self.clean_targets, dtype=float).reshape(-1)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, rows, name=None):
        rows = np.asarray(rows)
        clean = None if self.clean_targets is None else self.clean_targets[rows]
        return Dataset(
            self.features[rows], self.targets[rows], list(self.column_meta),
            name or self.name, clean, self.target_meta,
        )

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.targets).tobytes())
        return {
            "rows": len(self),
            "cols": self.n_features,
            "sha256": h.hexdigest(),
        }


# -- CSV ----------------------------------------------------------------------

def _is_missing(cell):
    return cell.strip().lower() in MISSING_TOKENS


def _is_number(cell):
    try:
        return math.isfinite(float(cell))
    except ValueError:
        return False


def load_csv(path, target_column, has_header=True, name=None, levels=None) -> Dataset:
    """Read a comma-separated file into a :class:`Dataset`.

    Columns holding any non-numeric value are label-encoded, codes assigned in
    order of first appearance among the kept rows. Rows with a missing cell or
    the wrong number of cells are dropped and counted in ``dataset.report``.
    ``target_column`` is a header name, or a 0-based index (int or digit
    string) when the file has no header, or None for a features-only file.

    ``levels`` maps column names to a previously fitted level list, so a file
    scored by a trained model gets the codes used at training time.
    """
    levels = levels or {}
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if has_header:
        if not rows:
            raise DataError(f"{path}: empty file")
        header, rows = [h.strip() for h in rows[0]], rows[1:]
    else:
        width = max((len(r) for r in rows), default=0)
        header = [f"c{i}" for i in range(width)]

    if target_column is None:
        t_idx = None
    elif isinstance(target_column, int) or (
        isinstance(target_column, str) and target_column.isdigit()
        and target_column not in header
    ):
        t_idx = int(target_column)
        if not 0 <= t_idx < len(header):
            raise DataError(f"target column index {t_idx} out of range")
    elif target_column in header:
        t_idx = header.index(target_column)
    else:
        raise DataError(f"target column {target_column!r} not found in {path}")

    width = len(header)
    kept = [
        [c.strip() for c in r] for r in rows
        if len(r) == width and not any(_is_missing(c) for c in r)
    ]
    report = LoadReport(rows_read=len(rows), rows_kept=len(kept),
                        dropped=len(rows) - len(kept))
    if not kept:
        raise DataError(f"{path}: no usable rows ({report.dropped} dropped)")

    metas, columns = [], []
    for j in range(width):
        cells = [r[j] for r in kept]
        if header[j] in levels:
            columns.append(apply_encoding(cells, levels[header[j]]))
            metas.append(ColumnMeta(header[j], "categorical", list(levels[header[j]])))
        elif all(_is_number(c) for c in cells):
            columns.append(np.array([float(c) for c in cells]))
            metas.append(ColumnMeta(header[j]))
        else:
            codes, found = label_encode(cells)
            columns.append(codes.astype(float))
            metas.append(ColumnMeta(header[j], "categorical", found))

    feat_idx = [j for j in range(width) if j != t_idx]
    features = np.column_stack([columns[j] for j in feat_idx]) if feat_idx \
        else np.empty((len(kept), 0))
    # without a target column the targets are placeholder zeros
    targets = np.zeros(len(kept)) if t_idx is None else columns[t_idx]
    ds = Dataset(
        features, targets, [metas[j] for j in feat_idx], name or path.stem,
        target_meta=None if t_idx is None else metas[t_idx],
    )
    ds.report = report
    return ds


def label_encode(values):
    """Integer codes by first appearance; returns ``(codes, levels)``."""
    lookup = {}
    codes = np.empty(len(values), dtype=int)
    for i, v in enumerate(values):
        codes[i] = lookup.setdefault(v, len(lookup))
    return codes, list(lookup)


def apply_encoding(cells, levels):
    lookup = {v: i for i, v in enumerate(levels)}
    try:
        return np.array([lookup[c] for c in cells], dtype=float)
    except KeyError as exc:
        raise DataError(f"unseen categorical level {exc.args[0]!r}") from None


class MinMaxScaler:
    """Per-column rescaling to [0, 1]; constant columns map to 0."""

    def fit(self, x):
        x = np.asarray(x, dtype=float)
        self.low_ = x.min(axis=0)
        span = x.max(axis=0) - self.low_
        self.span_ = np.where(span > 0, span, 1.0)
        return self

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.low_) / self.span_

    def fit_transform(self, x):
        return self.fit(x).transform(x)


# -- splits -------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class SplitSpec:
    fraction: float = 0.05
    seed: Optional[int] = None
    strategy: str = "random"  # "random" | "threshold"
    column: Optional[int] = None
    threshold: Optional[float] = None

    @classmethod
    def by_threshold(cls, column, threshold):
        return cls(strategy="threshold", column=column, threshold=threshold)


def split_indices(n, spec: SplitSpec):
    """Row indices ``(first, second)`` of a split.

    Random: ``second`` holds ``round(fraction * n)`` rows drawn without
    replacement. Threshold splits need the data itself; see :func:`split`.
    """
    if spec.strategy != "random":
        raise DataError("split_indices only handles random splits")
    if not 0.0 < spec.fraction < 1.0:
        raise DataError(f"split fraction must lie in (0, 1), got {spec.fraction}")
    n_second = int(math.floor(spec.fraction * n + 0.5))
    if n_second < 1 or n_second >= n:
        raise DataError(
            f"fraction {spec.fraction} of {n} rows leaves an empty part"
        )
    perm = np.random.default_rng(spec.seed).permutation(n)
    return np.sort(perm[n_second:]), np.sort(perm[:n_second])


def split(data: Dataset, spec: SplitSpec):
    if spec.strategy == "random":
        first, second = split_indices(len(data), spec)
    elif spec.strategy == "threshold":
        if spec.column is None or spec.threshold is None:
            raise DataError("threshold split needs a column and a threshold")
        col = data.features[:, spec.column]
        first = np.flatnonzero(col < spec.threshold)
        second = np.flatnonzero(col >= spec.threshold)
        if first.size == 0 or second.size == 0:
            raise DataError("threshold split leaves an empty part")
    else:
        raise DataError(f"unknown split strategy {spec.strategy!r}")
    return data.subset(first), data.subset(second)


# -- synthetic data -------------------------------------------------------------

def analytical_function(x, y):
    """Peaked, asymmetric test surface on [-1, 1]^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    envelope = 0.25 + 0.75 * np.exp(-10.0 * (x ** 2 + y ** 2))
    return envelope * (np.sin(2.0 * np.pi * x) + np.cos(2.0 * np.pi * y))


def grid_points(grid_n):
    axis = np.linspace(-1.0, 1.0, grid_n)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _add_noise(clean, noise_sd_fraction, rng):
    sd = noise_sd_fraction * float(np.std(clean))
    if sd == 0.0:
        return clean.copy()
    return clean + rng.normal(0.0, sd, size=clean.shape)


def gen_analytical(grid_n=100, noise_sd_fraction=0.05, seed=None) -> Dataset:
    """Uniform ``grid_n x grid_n`` grid over [-1, 1]^2 with Gaussian target noise.

    Noise standard deviation is ``noise_sd_fraction`` times the standard
    deviation of the clean targets over the grid; the clean values are kept
    in ``clean_targets``.
    """
    if grid_n < 2:
        raise DataError("grid_n must be >= 2")
    pts = grid_points(grid_n)
    clean = analytical_function(pts[:, 0], pts[:, 1])
    rng = np.random.default_rng(seed)
    noisy = _add_noise(clean, noise_sd_fraction, rng)
    return Dataset(pts, noisy, [ColumnMeta("x"), ColumnMeta("y")],
                   f"analytical{grid_n}", clean)


def drift_transform(y, shift):
    """Level-and-scale drift applied to the second segment's targets."""
    return (1.0 + shift) * np.asarray(y, dtype=float) + 0.5 * shift


def gen_drift_pair(n=4000, shift=0.5, seed=None, noise_sd_fraction=0.05):
    """Two segments of ``n`` random points on [-1, 1]^2 for drift experiments.

    The second segment's targets pass through :func:`drift_transform`.
    """
    if n < 100:
        raise DataError("gen_drift_pair needs n >= 100")
    rng = np.random.default_rng(seed)
    segments = []
    for era, s in enumerate((0.0, shift)):
        pts = rng.uniform(-1.0, 1.0, size=(n, 2))
        clean = drift_transform(analytical_function(pts[:, 0], pts[:, 1]), s)
        noisy = _add_noise(clean, noise_sd_fraction, rng)
        segments.append(Dataset(pts, noisy, [ColumnMeta("x"), ColumnMeta("y")],
                                f"drift{era}", clean))
    return segments[0], segments[1]


def gen_moons(n=2000, noise=0.2, seed=None) -> Dataset:
    """Two interleaving half circles with binary labels."""
    rng = np.random.default_rng(seed)
    n_upper = n // 2
    n_lower = n - n_upper
    t_up = rng.uniform(0.0, np.pi, n_upper)
    t_lo = rng.uniform(0.0, np.pi, n_lower)
    upper = np.column_stack([np.cos(t_up), np.sin(t_up)])
    lower = np.column_stack([1.0 - np.cos(t_lo), 0.5 - np.sin(t_lo)])
    x = np.vstack([upper, lower]) + rng.normal(0.0, noise, size=(n, 2))
    y = np.concatenate([np.zeros(n_upper), np.ones(n_lower)])
    perm = rng.permutation(n)
    return Dataset(x[perm], y[perm], [ColumnMeta("x"), ColumnMeta("y")], "moons")
