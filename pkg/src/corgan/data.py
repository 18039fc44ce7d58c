"""Record matrices, file formats, splitting and synthetic corpora.

Two on-disk formats are supported:

* ``corgan-bin v1``: UTF-8 text, first line ``corgan-bin v1 <N> <M>``, then
  ``N`` lines of ``M`` comma-separated ``0``/``1`` entries.
* continuous CSV: comma-separated numeric features with an integer class
  label in ``{1..5}`` as the final column and an optional header row.
  Label ``1`` is the positive class; every other label is negative.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import toeplitz
from scipy.stats import norm

from .errors import ConfigurationError, ParseError, ShapeError

BIN_MAGIC = "corgan-bin"
BIN_VERSION = "v1"
NEIGHBOR_CORRELATION = 0.6


def derive_seed(root: int, component: str) -> int:
    """Stable per-component seed derived from a root seed."""
    digest = hashlib.sha256(f"{int(root)}:{component}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RecordMatrix:
    values: np.ndarray
    mode: str = "binary"
    labels: np.ndarray | None = None
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"RecordMatrix: values must be 2-d, got shape {values.shape}")
        if self.mode not in ("binary", "continuous"):
            raise ConfigurationError(f"RecordMatrix: unknown mode {self.mode!r}")
        if self.mode == "binary" and not np.isin(values, (0.0, 1.0)).all():
            raise ValueError("RecordMatrix: binary mode requires every value in {0, 1}")
        if not np.all(np.isfinite(values)):
            raise ValueError("RecordMatrix: values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64)
            if labels.shape != (values.shape[0],):
                raise ShapeError(f"RecordMatrix: {len(labels)} labels for {values.shape[0]} rows")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if self.column_names is not None and len(self.column_names) != values.shape[1]:
            raise ShapeError("RecordMatrix: column_names length differs from column count")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def take(self, rows) -> "RecordMatrix":
        rows = np.asarray(rows)
        labels = None if self.labels is None else self.labels[rows]
        return RecordMatrix(self.values[rows], self.mode, labels, self.column_names)

    def column_means(self) -> np.ndarray:
        return self.values.mean(axis=0)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def write_binary_matrix(path, data: RecordMatrix | np.ndarray) -> None:
    values = data.values if isinstance(data, RecordMatrix) else np.asarray(data)
    n, m = values.shape
    ints = values.astype(np.int8)
    if not np.array_equal(ints, values):
        raise ValueError("write_binary_matrix: values must be 0/1")
    lines = [f"{BIN_MAGIC} {BIN_VERSION} {n} {m}"]
    lines.extend(",".join("1" if v else "0" for v in row) for row in ints)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_binary_matrix(path) -> RecordMatrix:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != BIN_MAGIC or head[1] != BIN_VERSION:
        raise ParseError(f"{path}: bad header {lines[0]!r}, expected '{BIN_MAGIC} {BIN_VERSION} <N> <M>'")
    try:
        n, m = int(head[2]), int(head[3])
    except ValueError:
        raise ParseError(f"{path}: non-integer dimensions in header {lines[0]!r}") from None
    if n < 0 or m < 1:
        raise ParseError(f"{path}: invalid dimensions {n} x {m}")
    body = lines[1:]
    while body and body[-1] == "":
        body.pop()
    if len(body) != n:
        raise ParseError(f"{path}: header declares {n} rows, found {len(body)}")
    values = np.empty((n, m), dtype=np.float64)
    for i, line in enumerate(body):
        cells = line.split(",")
        if len(cells) != m:
            raise ParseError(f"{path}: row {i + 1} has {len(cells)} columns, header declares {m}")
        for j, cell in enumerate(cells):
            c = cell.strip()
            if c == "0":
                values[i, j] = 0.0
            elif c == "1":
                values[i, j] = 1.0
            else:
                raise ParseError(f"{path}: row {i + 1}, column {j + 1}: entry {cell!r} is not 0 or 1")
    return RecordMatrix(values, "binary")


def load_continuous_csv(path, header: bool = False) -> RecordMatrix:
    """Load features plus a final integer label column; target = (label == 1)."""
    rows, labels = [], []
    names = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if header and names is None:
                names = tuple(row[:-1])
                continue
            if rows and len(row) != len(rows[0]) + 1:
                raise ParseError(f"{path}: line {lineno} has {len(row)} fields, expected {len(rows[0]) + 1}")
            try:
                feats = [float(c) for c in row[:-1]]
                label = float(row[-1])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            if label != int(label) or not 1 <= label <= 5:
                raise ParseError(f"{path}: line {lineno}: label {row[-1]!r} outside {{1..5}}")
            rows.append(feats)
            labels.append(1 if int(label) == 1 else 0)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    values = np.array(rows)
    if not np.all(np.isfinite(values)):
        raise ParseError(f"{path}: non-finite feature value")
    return RecordMatrix(values, "continuous", np.array(labels), names)


def write_continuous_csv(path, data: RecordMatrix, header: bool = False) -> None:
    """Inverse of :func:`load_continuous_csv`; negatives are written as label 2."""
    if data.labels is None:
        raise ConfigurationError("write_continuous_csv: data has no labels")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            names = data.column_names or tuple(f"X{j + 1}" for j in range(data.n_cols))
            writer.writerow(list(names) + ["y"])
        for row, lab in zip(data.values, data.labels):
            writer.writerow([repr(float(v)) for v in row] + [1 if lab == 1 else 2])


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def split(data: RecordMatrix, spec: SplitSpec = SplitSpec()) -> tuple[RecordMatrix, RecordMatrix]:
    """Seeded shuffle split into (train, test); stratified by label when labels exist."""
    n = data.n_rows
    if n < 2:
        raise ValueError("split: need at least 2 rows")
    rng = np.random.default_rng(spec.seed)
    if data.labels is None:
        order = rng.permutation(n)
        k = min(max(int(round(spec.train_fraction * n)), 1), n - 1)
        train_idx, test_idx = order[:k], order[k:]
    else:
        train_idx, test_idx = [], []
        for cls in np.unique(data.labels):
            idx = rng.permutation(np.flatnonzero(data.labels == cls))
            k = int(round(spec.train_fraction * len(idx)))
            train_idx.append(idx[:k])
            test_idx.append(idx[k:])
        train_idx = np.sort(np.concatenate(train_idx))
        test_idx = np.sort(np.concatenate(test_idx))
        if len(train_idx) == 0 or len(test_idx) == 0:
            raise ValueError("split: stratified split left one side empty")
    return data.take(train_idx), data.take(test_idx)


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------

def banded_correlation(m: int, band_width: int) -> np.ndarray:
    """Toeplitz correlation: 0.6 at lag 1 tapering linearly to 0 past ``band_width``."""
    r = np.zeros(m)
    r[0] = 1.0
    for d in range(1, min(band_width, m - 1) + 1):
        r[d] = NEIGHBOR_CORRELATION * (band_width + 1 - d) / band_width
    return toeplitz(r)


def synth_corpus(n: int, m: int, band_width: int = 2, target_marginals=None, seed: int = 0) -> RecordMatrix:
    """Binary records from a thresholded banded Gaussian latent (Gaussian copula).

    Column ``j`` is 1 when its latent normal exceeds the quantile that gives
    marginal probability ``target_marginals[j]``. Without explicit marginals,
    they are drawn uniformly from [0.05, 0.4] with the same seed.
    """
    if m < 2:
        raise ConfigurationError(f"synth_corpus: m must be >= 2, got {m}")
    if n < 1:
        raise ConfigurationError(f"synth_corpus: n must be >= 1, got {n}")
    if band_width < 0:
        raise ConfigurationError(f"synth_corpus: band_width must be >= 0, got {band_width}")
    rng = np.random.default_rng(seed)
    if target_marginals is None:
        target_marginals = rng.uniform(0.05, 0.4, size=m)
    p = np.broadcast_to(np.asarray(target_marginals, dtype=np.float64), (m,))
    if np.any(p <= 0) or np.any(p >= 1):
        raise ConfigurationError("synth_corpus: marginals must lie in (0, 1)")
    corr = banded_correlation(m, band_width)
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        raise ConfigurationError(
            f"synth_corpus: banded correlation (m={m}, band_width={band_width}) is not positive definite"
        ) from None
    z = rng.standard_normal((n, m)) @ chol.T
    thresholds = norm.ppf(1.0 - p)
    return RecordMatrix((z > thresholds).astype(np.float64), "binary")


def synth_continuous(n: int, m: int = 178, positive_fraction: float = 0.2, seed: int = 0) -> RecordMatrix:
    """EEG-like continuous records with a seizure-style positive class.

    Negatives are AR(1) noise; positives add a higher-amplitude oscillation
    with random phase, so neighbouring features are strongly correlated and
    the classes are separable but not trivially so.
    """
    rng = np.random.default_rng(seed)
    labels = (rng.random(n) < positive_fraction).astype(np.int64)
    phi = 0.8
    eps = rng.standard_normal((n, m)) * np.sqrt(1 - phi ** 2)
    x = np.empty((n, m))
    x[:, 0] = rng.standard_normal(n)
    for j in range(1, m):
        x[:, j] = phi * x[:, j - 1] + eps[:, j]
    t = np.arange(m)
    freq = rng.uniform(0.15, 0.35, size=n)
    phase = rng.uniform(0, 2 * np.pi, size=n)
    amp = rng.uniform(1.0, 2.0, size=n)
    wave = amp[:, None] * np.sin(freq[:, None] * t[None, :] + phase[:, None])
    x = x + labels[:, None] * wave
    return RecordMatrix(x * 50.0, "continuous", labels)
