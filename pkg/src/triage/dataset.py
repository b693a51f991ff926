"""Tabular regression datasets: loading, splitting, scaling, contamination.

Everything downstream consumes the :class:`Dataset` container. Loaders are
strict: a non-numeric or non-finite cell is an error, never silently imputed.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "SplitSpec",
    "StandardizationParams",
    "ContaminationSpec",
    "load_csv",
    "write_csv",
    "split",
    "standardize_fit",
    "standardize_apply",
    "standardize_invert",
    "invert_targets",
    "contaminate",
    "generate_linear_synthetic",
]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, target vector and row/column metadata.

    Parameters
    ----------
    features : ndarray of shape (n, d)
        Real-valued feature matrix.
    targets : ndarray of shape (n,)
        Real-valued targets in task units.
    feature_names : list of str
        One name per feature column.
    sample_ids : list of str
        Stable per-row identifiers.
    """

    features: np.ndarray
    targets: np.ndarray
    feature_names: list = field(default_factory=list)
    sample_ids: list = field(default_factory=list)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if targets.ndim != 1:
            raise ValueError("targets must be a 1-d vector")
        n, d = features.shape
        if n < 1 or d < 1:
            raise ValueError(f"dataset needs n >= 1 and d >= 1, got n={n}, d={d}")
        if targets.shape[0] != n:
            raise ValueError(f"targets length {targets.shape[0]} != feature rows {n}")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain NaN/Inf")
        if not np.all(np.isfinite(targets)):
            raise ValueError("targets contain NaN/Inf")
        names = list(self.feature_names) if self.feature_names else [f"x{j}" for j in range(d)]
        ids = list(self.sample_ids) if self.sample_ids else [str(i) for i in range(n)]
        if len(names) != d:
            raise ValueError(f"{len(names)} feature names for {d} columns")
        if len(ids) != n:
            raise ValueError(f"{len(ids)} sample ids for {n} rows")
        features.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def take(self, indices):
        """Row subset by positional indices, preserving order."""
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(
            self.features[idx],
            self.targets[idx],
            self.feature_names,
            [self.sample_ids[i] for i in idx],
        )

    def subset_by_ids(self, ids):
        """Row subset by sample ids, in the order given."""
        position = {sid: i for i, sid in enumerate(self.sample_ids)}
        missing = [sid for sid in ids if sid not in position]
        if missing:
            raise KeyError(f"unknown sample ids: {missing[:5]}")
        return self.take([position[sid] for sid in ids])

    def select_features(self, names):
        """Column subset by feature names, in the order given."""
        col = {name: j for j, name in enumerate(self.feature_names)}
        missing = [name for name in names if name not in col]
        if missing:
            raise KeyError(f"unknown feature columns: {missing}")
        idx = [col[name] for name in names]
        return Dataset(self.features[:, idx], self.targets, list(names), self.sample_ids)


@dataclass(frozen=True)
class SplitSpec:
    """Train/calibration/test fractions plus the shuffle seed."""

    train_fraction: float
    cal_fraction: float
    test_fraction: float
    seed: int

    def __post_init__(self):
        fracs = (self.train_fraction, self.cal_fraction, self.test_fraction)
        for f in fracs:
            if not 0.0 < f < 1.0:
                raise ValueError(f"split fractions must lie in (0,1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class StandardizationParams:
    """Feature z-score parameters and target min-max range, fitted on train."""

    feature_means: np.ndarray
    feature_stds: np.ndarray
    target_min: float
    target_max: float

    def __post_init__(self):
        means = np.asarray(self.feature_means, dtype=np.float64)
        stds = np.asarray(self.feature_stds, dtype=np.float64)
        if means.shape != stds.shape or means.ndim != 1:
            raise ValueError("feature_means and feature_stds must be 1-d and congruent")
        if np.any(stds <= 0):
            raise ValueError("feature_stds must be strictly positive")
        if self.target_max < self.target_min:
            raise ValueError("target_max must be >= target_min")
        object.__setattr__(self, "feature_means", means)
        object.__setattr__(self, "feature_stds", stds)

    @property
    def target_range(self):
        # Constant targets degrade to range 1 so the map stays invertible.
        r = self.target_max - self.target_min
        return r if r > 0 else 1.0


@dataclass(frozen=True)
class ContaminationSpec:
    """Additive label-shift contamination of a seeded row subset.

    ``shift_magnitude`` is expressed in multiples of the clean targets'
    standard deviation; every shifted row moves by exactly that amount, with
    a seeded random sign.
    """

    epsilon: float
    shift_magnitude: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in [0, 0.5), got {self.epsilon}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _parse_cell(text, row, column):
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"non-numeric cell at row {row}, column '{column}': {text!r}") from None
    if not np.isfinite(value):
        raise ValueError(f"non-finite cell at row {row}, column '{column}': {text!r}")
    return value


def load_csv(path, target_column):
    """Load a UTF-8, comma-separated, headered CSV into a Dataset.

    All non-target columns become features in header order. An ``id`` column,
    when present, supplies sample ids; otherwise 0-based row indices are used.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ValueError
        If the target column is missing, a cell fails to parse as a finite
        real (the message names the row and column), or no feature column
        remains.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if target_column not in header:
            raise ValueError(f"{path}: target column '{target_column}' not in header {header}")
        id_col = header.index("id") if "id" in header else None
        target_idx = header.index(target_column)
        feature_idx = [
            j for j, name in enumerate(header) if j != target_idx and j != id_col
        ]
        if not feature_idx:
            raise ValueError(f"{path}: no feature columns besides '{target_column}'")

        rows, targets, ids = [], [], []
        for i, record in enumerate(reader):
            if len(record) != len(header):
                raise ValueError(f"{path}: row {i} has {len(record)} cells, expected {len(header)}")
            rows.append([_parse_cell(record[j], i, header[j]) for j in feature_idx])
            targets.append(_parse_cell(record[target_idx], i, target_column))
            ids.append(record[id_col] if id_col is not None else str(i))

    if not rows:
        raise ValueError(f"{path}: no data rows")
    return Dataset(
        np.array(rows, dtype=np.float64),
        np.array(targets, dtype=np.float64),
        [header[j] for j in feature_idx],
        ids,
    )


def write_csv(ds, path, target_column="y"):
    """Write a Dataset to CSV with 17-significant-digit reals.

    The written file round-trips bit-exactly through :func:`load_csv`.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *ds.feature_names, target_column])
        for i in range(ds.n):
            writer.writerow(
                [ds.sample_ids[i]]
                + [f"{v:.17g}" for v in ds.features[i]]
                + [f"{ds.targets[i]:.17g}"]
            )


def split(ds, spec):
    """Partition rows into (train, cal, test) by a seeded uniform shuffle.

    Calibration and test sizes are ``round(fraction * n)``; the remainder
    goes to train. Raises ``ValueError`` when any split rounds to empty.
    """
    n = ds.n
    if n < 3:
        raise ValueError(f"need n >= 3 to produce three non-empty splits, got {n}")
    n_cal = int(round(spec.cal_fraction * n))
    n_test = int(round(spec.test_fraction * n))
    n_train = n - n_cal - n_test
    if min(n_train, n_cal, n_test) < 1:
        raise ValueError(
            f"empty split for n={n} with fractions "
            f"({spec.train_fraction}, {spec.cal_fraction}, {spec.test_fraction})"
        )
    perm = np.random.default_rng(spec.seed).permutation(n)
    train_idx = perm[:n_train]
    cal_idx = perm[n_train : n_train + n_cal]
    test_idx = perm[n_train + n_cal :]
    return ds.take(train_idx), ds.take(cal_idx), ds.take(test_idx)


def standardize_fit(train):
    """Fit per-feature z-score and target min-max parameters on train rows."""
    if train.n < 2:
        raise ValueError("standardize_fit needs at least 2 rows")
    means = train.features.mean(axis=0)
    stds = train.features.std(axis=0)
    stds = np.where(stds > 0, stds, 1.0)  # constant columns pass through
    return StandardizationParams(
        means, stds, float(train.targets.min()), float(train.targets.max())
    )


def standardize_apply(ds, params):
    """Z-score features and map targets onto [0,1] via the fitted range."""
    if ds.d != params.feature_means.shape[0]:
        raise ValueError(f"dataset has d={ds.d}, params have d={params.feature_means.shape[0]}")
    features = (ds.features - params.feature_means) / params.feature_stds
    targets = (ds.targets - params.target_min) / params.target_range
    return Dataset(features, targets, ds.feature_names, ds.sample_ids)


def standardize_invert(ds, params):
    """Undo :func:`standardize_apply`, recovering original units."""
    if ds.d != params.feature_means.shape[0]:
        raise ValueError(f"dataset has d={ds.d}, params have d={params.feature_means.shape[0]}")
    features = ds.features * params.feature_stds + params.feature_means
    targets = ds.targets * params.target_range + params.target_min
    return Dataset(features, targets, ds.feature_names, ds.sample_ids)


def invert_targets(values, params):
    """Map standardized target values back to original units."""
    return np.asarray(values, dtype=np.float64) * params.target_range + params.target_min


def contaminate(ds, spec):
    """Shift a seeded ``floor(epsilon * n)`` subset of targets.

    Each selected row moves by exactly ``shift_magnitude * std(clean targets)``
    with a random sign. Returns the contaminated dataset and a boolean mask
    marking shifted rows.
    """
    n = ds.n
    n_shift = int(np.floor(spec.epsilon * n))
    mask = np.zeros(n, dtype=bool)
    if n_shift == 0:
        return Dataset(ds.features, ds.targets, ds.feature_names, ds.sample_ids), mask
    rng = np.random.default_rng(spec.seed)
    rows = rng.choice(n, size=n_shift, replace=False)
    signs = rng.choice([-1.0, 1.0], size=n_shift)
    shift = spec.shift_magnitude * float(ds.targets.std())
    targets = ds.targets.copy()
    targets[rows] += signs * shift
    mask[rows] = True
    return Dataset(ds.features, targets, ds.feature_names, ds.sample_ids), mask


def generate_linear_synthetic(n, d, coefficients, noise_std, seed):
    """Sample ``X ~ U[0,1]^d`` and ``y = X @ coefficients + N(0, noise_std^2)``."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    beta = np.asarray(coefficients, dtype=np.float64)
    if beta.shape != (d,):
        raise ValueError(f"coefficients must have shape ({d},), got {beta.shape}")
    rng = np.random.default_rng(seed)
    features = rng.uniform(0.0, 1.0, size=(n, d))
    targets = features @ beta + rng.normal(0.0, noise_std, size=n)
    return Dataset(features, targets)
