"""Checkpointed regressors: iterative linear, boosted trees, feed-forward net.

Each fitter returns a :class:`CheckpointedRun` whose checkpoints 1..E can be
queried independently with :func:`predict`. Training is deterministic under
the config seed and single-threaded; a finished run is immutable and safe to
read from many threads.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "TrainingConfig",
    "CheckpointedRun",
    "DivergenceError",
    "fit_linear_sgd",
    "fit_gbdt",
    "fit_feedforward",
    "fit_regressor",
    "predict",
    "final_residuals",
    "loss_trajectory",
    "variant_grid",
    "save_run",
    "load_run",
]

MODEL_KINDS = ("linear", "gbdt", "mlp")


class DivergenceError(RuntimeError):
    """Training produced a non-finite parameter or loss."""


@dataclass(frozen=True)
class TrainingConfig:
    """Shared training knobs; model-specific fields are ignored by other kinds.

    ``epochs`` counts gradient epochs for linear/mlp and boosting stages for
    gbdt; one checkpoint is stored per epoch/stage (thinned by
    ``checkpoint_stride``, final epoch always kept).
    """

    epochs: int = 50
    learning_rate: float = 0.1
    seed: int = 0
    hidden_sizes: tuple = (32,)
    optimizer: str = "sgd"  # "sgd" | "adam", mlp only
    max_depth: int = 3  # gbdt only
    batch_size: int = None  # mlp only; None = full batch
    early_stop_patience: int = None  # mlp only; None = disabled
    checkpoint_stride: int = 1

    def __post_init__(self):
        if self.epochs < 2:
            raise ValueError(f"epochs must be >= 2, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.checkpoint_stride < 1:
            raise ValueError("checkpoint_stride must be >= 1")


@dataclass(frozen=True)
class CheckpointedRun:
    """A trained regressor with per-checkpoint parameter snapshots."""

    model_kind: str
    snapshots: tuple  # kind-specific immutable parameter snapshots, one per checkpoint
    n_features: int
    config: TrainingConfig
    seed: int

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model_kind {self.model_kind!r}")
        if len(self.snapshots) < 2:
            raise ValueError("a run needs at least 2 checkpoints")

    @property
    def checkpoint_count(self):
        return len(self.snapshots)

    def predict(self, e, X):
        return predict(self, e, X)


def _as_matrix(X, d):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(f"expected a matrix with {d} columns, got shape {X.shape}")
    return X


def _stride_keep(epoch, epochs, stride):
    # 1-based epoch; final epoch always snapshotted so checkpoint E is the full model
    return epoch % stride == 0 or epoch == epochs


# ---------------------------------------------------------------------------
# Linear model, full-batch gradient descent on MSE
# ---------------------------------------------------------------------------


def fit_linear_sgd(train, cfg):
    """Gradient-descent linear regression with one snapshot per epoch.

    Weights start at zero; each epoch takes one full-batch step on the MSE
    gradient. Raises :class:`DivergenceError` (naming the epoch) if any
    parameter becomes non-finite.
    """
    X, y = train.features, train.targets
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    snapshots = []
    for epoch in range(1, cfg.epochs + 1):
        residual = X @ w + b - y
        w = w - cfg.learning_rate * (2.0 / n) * (X.T @ residual)
        b = b - cfg.learning_rate * (2.0 / n) * residual.sum()
        if not (np.all(np.isfinite(w)) and np.isfinite(b)):
            raise DivergenceError(f"linear training diverged at epoch {epoch}")
        if _stride_keep(epoch, cfg.epochs, cfg.checkpoint_stride):
            snapshots.append((w.copy(), float(b)))
    return CheckpointedRun("linear", tuple(snapshots), d, cfg, cfg.seed)


# ---------------------------------------------------------------------------
# Gradient-boosted regression trees (stagewise; checkpoint e = first e trees)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Tree:
    """Binary regression tree as flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X):
        node = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            rows = np.nonzero(active)[0]
            f = feat[rows]
            go_left = X[rows, f] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return self.value[node]


def _best_split(X, r):
    """Exhaustive variance-reduction split search over sorted unique values.

    Returns (feature, threshold, gain) or None when no split separates rows.
    Rows with x <= threshold go left; threshold is the left boundary value.
    """
    n, d = X.shape
    total_sum = r.sum()
    best = None
    for j in range(d):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        rs = r[order]
        # candidate boundaries where the sorted feature value changes
        change = np.nonzero(xs[1:] != xs[:-1])[0]
        if change.size == 0:
            continue
        prefix = np.cumsum(rs)
        n_left = change + 1
        sum_left = prefix[change]
        sum_right = total_sum - sum_left
        n_right = n - n_left
        # SSE reduction = sum_l^2/n_l + sum_r^2/n_r - total^2/n (constant dropped)
        gain = sum_left**2 / n_left + sum_right**2 / n_right
        k = int(np.argmax(gain))
        g = float(gain[k])
        if best is None or g > best[2] + 1e-15:
            best = (j, float(xs[change[k]]), g)
    return best


def _grow_tree(X, r, max_depth):
    feature, threshold, left, right, value = [], [], [], [], []

    def add_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(rows, depth):
        node = add_node()
        res = r[rows]
        value[node] = float(res.mean())
        if depth >= max_depth or rows.size < 2:
            return node
        found = _best_split(X[rows], res)
        if found is None:
            return node
        j, thr, _ = found
        go_left = X[rows, j] <= thr
        feature[node] = j
        threshold[node] = thr
        left[node] = build(rows[go_left], depth + 1)
        right[node] = build(rows[~go_left], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return _Tree(
        np.array(feature, dtype=np.intp),
        np.array(threshold),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(value),
    )


def fit_gbdt(train, cfg):
    """Stagewise boosted regression trees fit to residuals with shrinkage.

    Checkpoint e predicts ``mean(y) + learning_rate * sum(tree_1..tree_e)``,
    so the stored single model doubles as its own checkpoint ensemble. A
    degenerate stage (all rows identical) yields a constant-leaf tree.
    """
    X, y = train.features, train.targets
    base = float(y.mean())
    residual = y - base
    snapshots = []
    trees = []
    for stage in range(1, cfg.epochs + 1):
        tree = _grow_tree(X, residual, cfg.max_depth)
        trees.append(tree)
        residual = residual - cfg.learning_rate * tree.predict(X)
        if _stride_keep(stage, cfg.epochs, cfg.checkpoint_stride):
            snapshots.append((base, tuple(trees)))
    return CheckpointedRun("gbdt", tuple(snapshots), X.shape[1], cfg, cfg.seed)


# ---------------------------------------------------------------------------
# Feed-forward network: rectifier hidden layers, linear output, manual backprop
# ---------------------------------------------------------------------------


def _init_layers(sizes, rng):
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        layers.append(
            (rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out))
        )
    return layers


def _forward(layers, X):
    """Returns (prediction vector, per-layer activations for backprop)."""
    activations = [X]
    a = X
    for i, (W, b) in enumerate(layers):
        z = a @ W + b
        a = z if i == len(layers) - 1 else np.maximum(z, 0.0)
        activations.append(a)
    return a[:, 0], activations


def _backward(layers, activations, y):
    """Gradient of mean squared error w.r.t. every weight and bias."""
    n = y.shape[0]
    grads = [None] * len(layers)
    delta = (2.0 / n) * (activations[-1] - y[:, None])
    for i in range(len(layers) - 1, -1, -1):
        a_prev = activations[i]
        grads[i] = (a_prev.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ layers[i][0].T) * (activations[i] > 0.0)
    return grads


def mlp_loss_and_grads(layers, X, y):
    """Mean squared error and its analytic gradients on a batch."""
    pred, activations = _forward(layers, X)
    loss = float(np.mean((pred - y) ** 2))
    return loss, _backward(layers, activations, y)


class _Adam:
    # adaptive-moment step, beta1=0.9 beta2=0.999 eps=1e-8
    def __init__(self, layers, lr):
        self.lr = lr
        self.t = 0
        self.m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
        self.v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]

    def step(self, layers, grads):
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        out = []
        for i, (W, b) in enumerate(layers):
            new_params = []
            for slot, (p, g) in enumerate(zip((W, b), grads[i])):
                m = b1 * self.m[i][slot] + (1 - b1) * g
                v = b2 * self.v[i][slot] + (1 - b2) * g * g
                self.m[i] = self.m[i][:slot] + (m,) + self.m[i][slot + 1 :]
                self.v[i] = self.v[i][:slot] + (v,) + self.v[i][slot + 1 :]
                m_hat = m / (1 - b1**self.t)
                v_hat = v / (1 - b2**self.t)
                new_params.append(p - self.lr * m_hat / (np.sqrt(v_hat) + eps))
            out.append(tuple(new_params))
        return out


def _sgd_step(layers, grads, lr):
    return [(W - lr * gW, b - lr * gb) for (W, b), (gW, gb) in zip(layers, grads)]


def fit_feedforward(train, cfg):
    """Train a rectifier network with epoch-end snapshots.

    Mini-batch when ``cfg.batch_size`` is set, otherwise full batch. With
    ``early_stop_patience`` set, a seeded 10% slice of train is held out and
    training stops once validation MSE fails to improve for that many epochs,
    keeping the snapshots recorded up to the stopping epoch.
    """
    if not cfg.hidden_sizes:
        raise ValueError("hidden_sizes must be non-empty")
    X, y = train.features, train.targets
    n, d = X.shape
    rng = np.random.default_rng(cfg.seed)
    layers = _init_layers([d, *cfg.hidden_sizes, 1], rng)

    if cfg.early_stop_patience is not None:
        n_val = max(1, n // 10)
        perm = rng.permutation(n)
        val_idx, fit_idx = perm[:n_val], perm[n_val:]
        X_fit, y_fit = X[fit_idx], y[fit_idx]
        X_val, y_val = X[val_idx], y[val_idx]
    else:
        X_fit, y_fit = X, y
        X_val = y_val = None

    adam = _Adam(layers, cfg.learning_rate) if cfg.optimizer == "adam" else None
    snapshots = []
    best_val = np.inf
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        if cfg.batch_size is None:
            batches = [np.arange(X_fit.shape[0])]
        else:
            order = rng.permutation(X_fit.shape[0])
            batches = [
                order[s : s + cfg.batch_size]
                for s in range(0, X_fit.shape[0], cfg.batch_size)
            ]
        for batch in batches:
            loss, grads = mlp_loss_and_grads(layers, X_fit[batch], y_fit[batch])
            if not np.isfinite(loss):
                raise DivergenceError(f"mlp training diverged at epoch {epoch}")
            layers = (
                adam.step(layers, grads)
                if adam is not None
                else _sgd_step(layers, grads, cfg.learning_rate)
            )
        if _stride_keep(epoch, cfg.epochs, cfg.checkpoint_stride):
            snapshots.append(tuple((W.copy(), b.copy()) for W, b in layers))
        if X_val is not None and len(snapshots) >= 2:
            val_pred, _ = _forward(layers, X_val)
            val_mse = float(np.mean((val_pred - y_val) ** 2))
            if val_mse < best_val - 1e-12:
                best_val = val_mse
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break
    return CheckpointedRun("mlp", tuple(snapshots), d, cfg, cfg.seed)


def fit_regressor(train, model_kind, cfg):
    """Dispatch to the fitter for ``model_kind`` in {linear, gbdt, mlp}."""
    if model_kind == "linear":
        return fit_linear_sgd(train, cfg)
    if model_kind == "gbdt":
        return fit_gbdt(train, cfg)
    if model_kind == "mlp":
        return fit_feedforward(train, cfg)
    raise ValueError(f"unknown model_kind {model_kind!r}")


# ---------------------------------------------------------------------------
# Checkpoint queries
# ---------------------------------------------------------------------------


def predict(run, e, X):
    """Predictions of checkpoint ``e`` (1-based, 1 <= e <= E) on rows of X."""
    if not 1 <= e <= run.checkpoint_count:
        raise IndexError(f"checkpoint {e} out of range [1, {run.checkpoint_count}]")
    X = _as_matrix(X, run.n_features)
    snap = run.snapshots[e - 1]
    if run.model_kind == "linear":
        w, b = snap
        return X @ w + b
    if run.model_kind == "gbdt":
        base, trees = snap
        out = np.full(X.shape[0], base)
        for tree in trees:
            out += run.config.learning_rate * tree.predict(X)
        return out
    pred, _ = _forward(snap, X)
    return pred


def final_residuals(run, ds):
    """Signed residuals ``y - f_E(x)`` of the final checkpoint, per sample."""
    return ds.targets - predict(run, run.checkpoint_count, ds.features)


def loss_trajectory(run, ds):
    """Per-sample squared error at every checkpoint, shape (n, E)."""
    E = run.checkpoint_count
    out = np.empty((ds.n, E))
    for e in range(1, E + 1):
        out[:, e - 1] = (ds.targets - predict(run, e, ds.features)) ** 2
    return out


def variant_grid(
    n_features,
    depths=(3, 4, 5),
    width_factors=(0.5, 0.25),
    optimizers=("sgd", "adam"),
    epochs=30,
    learning_rate=0.05,
    seed=0,
):
    """Feed-forward architecture/optimizer variants for consistency studies.

    A depth-L variant has L-1 hidden layers whose widths shrink from the
    input dimension by the given factor per layer (floored at 2 units).
    """
    base = TrainingConfig(epochs=epochs, learning_rate=learning_rate, seed=seed)
    grid = []
    for depth in depths:
        for factor in width_factors:
            sizes = []
            width = float(n_features)
            for _ in range(depth - 1):
                width *= factor
                sizes.append(max(2, int(round(width))))
            for optimizer in optimizers:
                grid.append(
                    replace(base, hidden_sizes=tuple(sizes), optimizer=optimizer)
                )
    if len(grid) < 2:
        raise ValueError("a variant grid needs at least 2 configurations")
    return grid


# ---------------------------------------------------------------------------
# Snapshot serialization (versioned .npz with a JSON header)
# ---------------------------------------------------------------------------

_FORMAT_VERSION = 1


def save_run(run, path):
    """Serialize a run to a self-describing .npz snapshot file."""
    header = {
        "format_version": _FORMAT_VERSION,
        "model_kind": run.model_kind,
        "checkpoint_count": run.checkpoint_count,
        "n_features": run.n_features,
        "seed": run.seed,
        "config": {
            "epochs": run.config.epochs,
            "learning_rate": run.config.learning_rate,
            "seed": run.config.seed,
            "hidden_sizes": list(run.config.hidden_sizes),
            "optimizer": run.config.optimizer,
            "max_depth": run.config.max_depth,
            "batch_size": run.config.batch_size,
            "early_stop_patience": run.config.early_stop_patience,
            "checkpoint_stride": run.config.checkpoint_stride,
        },
    }
    arrays = {}
    if run.model_kind == "linear":
        arrays["weights"] = np.stack([w for w, _ in run.snapshots])
        arrays["biases"] = np.array([b for _, b in run.snapshots])
    elif run.model_kind == "gbdt":
        base, trees = run.snapshots[-1]
        header["base"] = base
        for t, tree in enumerate(trees):
            arrays[f"tree{t}_feature"] = tree.feature
            arrays[f"tree{t}_threshold"] = tree.threshold
            arrays[f"tree{t}_left"] = tree.left
            arrays[f"tree{t}_right"] = tree.right
            arrays[f"tree{t}_value"] = tree.value
        header["tree_counts"] = [len(s[1]) for s in run.snapshots]
    else:
        for e, snap in enumerate(run.snapshots):
            for i, (W, b) in enumerate(snap):
                arrays[f"ckpt{e}_W{i}"] = W
                arrays[f"ckpt{e}_b{i}"] = b
        header["layer_count"] = len(run.snapshots[0])
    np.savez(path, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_run(path):
    """Load a run written by :func:`save_run`."""
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header["format_version"] != _FORMAT_VERSION:
            raise ValueError(f"unsupported snapshot format {header['format_version']}")
        cfg_fields = dict(header["config"])
        cfg_fields["hidden_sizes"] = tuple(cfg_fields["hidden_sizes"])
        cfg = TrainingConfig(**cfg_fields)
        kind = header["model_kind"]
        if kind == "linear":
            snapshots = tuple(
                (data["weights"][e].copy(), float(data["biases"][e]))
                for e in range(header["checkpoint_count"])
            )
        elif kind == "gbdt":
            total = max(header["tree_counts"])
            trees = tuple(
                _Tree(
                    data[f"tree{t}_feature"].copy(),
                    data[f"tree{t}_threshold"].copy(),
                    data[f"tree{t}_left"].copy(),
                    data[f"tree{t}_right"].copy(),
                    data[f"tree{t}_value"].copy(),
                )
                for t in range(total)
            )
            snapshots = tuple((header["base"], trees[:count]) for count in header["tree_counts"])
        else:
            snapshots = tuple(
                tuple(
                    (data[f"ckpt{e}_W{i}"].copy(), data[f"ckpt{e}_b{i}"].copy())
                    for i in range(header["layer_count"])
                )
                for e in range(header["checkpoint_count"])
            )
    return CheckpointedRun(kind, snapshots, header["n_features"], cfg, header["seed"])
