"""K-Means clustering and random-forest regression, written on numpy.

K-Means splits the cities into geographic groups that are solved
separately.  The forest learns tour cost from features of sampled
bitstrings and is used to rank candidate tours.
"""
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EncodingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """Result of a K-Means run.

    Attributes
    ----------
    k: int
    centroids: array, shape (k, 2)
        (lon, lat) of each centre
    assignments: tuple of int
        cluster id per point
    inertia: float
        sum of squared distances to assigned centroids
    iterations: int
    converged: bool
        whether assignments stopped changing before max_iter
    history: tuple of float
        inertia after each assignment step
    """
    k: int
    centroids: np.ndarray
    assignments: tuple
    inertia: float
    iterations: int
    converged: bool
    history: tuple = ()

    def members(self, cluster):
        return [i for i, a in enumerate(self.assignments) if a == cluster]

    def clusters(self):
        """Point indices per cluster, dropping any empty ones."""
        groups = [self.members(j) for j in range(self.k)]
        return [g for g in groups if g]


def _points(cities):
    cities = list(cities)
    if cities and hasattr(cities[0], "lon"):
        return np.array([[c.lon, c.lat] for c in cities], dtype=float)
    return np.asarray(cities, dtype=float).reshape(len(cities), -1)


def _assign(points, centroids):
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    return labels, float(d2[np.arange(len(points)), labels].sum())


def kmeans(cities, k=3, max_iter=100, seed=0):
    """Lloyd's algorithm on (lon, lat) with the Euclidean metric.

    Initial centroids are k distinct points drawn with
    ``numpy.random.default_rng(seed)``.  A cluster that empties is
    re-seeded at the point farthest from its own centroid.  Stops once
    assignments do not change, or after ``max_iter`` updates.

    Parameters
    ----------
    cities: sequence of City, or array of shape (n, 2)
    k: int
        1 <= k <= number of points
    max_iter: int, optional
    seed: int, optional

    Returns
    -------
    model: ClusterModel
    """
    points = _points(cities)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"Need 1 <= k <= {n} for K-Means, got k={k}")

    rng = np.random.default_rng(seed)
    centroids = points[rng.choice(n, size=k, replace=False)].copy()
    labels, inertia = _assign(points, centroids)
    history = [inertia]
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        new = centroids.copy()
        empty = []
        for j in range(k):
            mask = labels == j
            if mask.any():
                new[j] = points[mask].mean(axis=0)
            else:
                empty.append(j)
        if empty:
            d2 = ((points - new[labels]) ** 2).sum(axis=1)
            for j in empty:
                far = int(d2.argmax())
                new[j] = points[far]
                d2[far] = -1.0
                logger.debug("Re-seeded empty cluster %d at point %d", j, far)

        centroids = new
        new_labels, new_inertia = _assign(points, centroids)
        if new_inertia > inertia + 1e-9 * max(1.0, inertia):
            raise RuntimeError(f"K-Means inertia rose from {inertia} to {new_inertia}")
        history.append(new_inertia)
        inertia = new_inertia
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels

    return ClusterModel(k, centroids, tuple(int(a) for a in labels), inertia,
                        iterations, converged, tuple(history))


def featurize(bits, counts):
    """Feature vector for a bitstring: its bits followed by its observed frequency.

    Parameters
    ----------
    bits: str
    counts: SampleCounts

    Returns
    -------
    x: array of length len(bits) + 1
    """
    return np.array([float(b) for b in bits] + [counts.frequency(bits)])


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Feature rows with cost labels and optional non-negative weights."""
    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if len(y) == 0:
            X = X.reshape(0, X.shape[-1] if X.size else 0)
        if X.shape[0] != y.shape[0]:
            raise EncodingError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.shape != y.shape or np.any(w < 0):
                raise EncodingError("Weights must be one non-negative value per row")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, rows):
        w = None if self.weights is None else self.weights[rows]
        return TrainingSet(self.features[rows], self.labels[rows], w)

    @classmethod
    def from_samples(cls, counts, label):
        """One row per distinct sampled bitstring that ``label`` can price.

        Parameters
        ----------
        counts: SampleCounts
            pooled histogram over all runs
        label: callable
            bits -> cost in km, or None to skip the bitstring

        Returns
        -------
        data: TrainingSet
            features from ``featurize``, weights equal to the counts
        """
        rows, labels, weights = [], [], []
        for bits, c in sorted(counts.counts.items()):
            y = label(bits)
            if y is None:
                continue
            rows.append(featurize(bits, counts))
            labels.append(y)
            weights.append(c)
        dim = len(next(iter(counts.counts))) + 1 if counts.counts else 1
        X = np.array(rows).reshape(len(rows), dim)
        return cls(X, np.array(labels), np.array(weights, dtype=float))


@dataclass(frozen=True)
class ForestConfig:
    """Random forest hyper-parameters.

    Attributes
    ----------
    n_trees: int
    max_depth: int
    min_samples_split: int
    seed: int
    bootstrap: bool
        train each tree on a bootstrap resample
    """
    n_trees: int = 100
    max_depth: int = 10
    min_samples_split: int = 2
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("A forest needs at least one tree")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be at least 2")

    def to_dict(self):
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "min_samples_split": self.min_samples_split, "seed": self.seed,
                "bootstrap": self.bootstrap}


@dataclass
class RegressionTree:
    """Binary regression tree stored as parallel arrays.

    Node 0 is the root.  ``feature[i] < 0`` marks a leaf; otherwise rows with
    ``x[feature] <= threshold`` go to ``left[i]``, the rest to ``right[i]``.
    """
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)
    depth: int = 0

    def _new_node(self, value):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        return len(self.value) - 1

    def predict(self, X):
        X = np.atleast_2d(X)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(len(X), dtype=int)
        rows = np.arange(len(X))
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            go_left = X[rows, np.where(inner, f, 0)] <= threshold[node]
            node = np.where(inner, np.where(go_left, left[node], right[node]), node)
        return np.asarray(self.value)[node]

    def to_dict(self):
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left, "right": self.right, "value": self.value,
                "depth": self.depth}


def _best_split(x, y, w):
    # Weighted SSE of each side from cumulative sums over the sorted feature.
    order = np.argsort(x, kind="stable")
    xs, ys, ws = x[order], y[order], w[order]
    cw = np.cumsum(ws)
    cwy = np.cumsum(ws * ys)
    cwy2 = np.cumsum(ws * ys * ys)
    distinct = np.flatnonzero(xs[:-1] < xs[1:])
    if len(distinct) == 0:
        return None
    lw, lwy, lwy2 = cw[distinct], cwy[distinct], cwy2[distinct]
    rw, rwy, rwy2 = cw[-1] - lw, cwy[-1] - lwy, cwy2[-1] - lwy2
    sse = (lwy2 - lwy ** 2 / lw) + (rwy2 - rwy ** 2 / rw)
    best = int(np.argmin(sse))
    i = distinct[best]
    threshold = 0.5 * (xs[i] + xs[i + 1])
    if threshold >= xs[i + 1]:
        threshold = xs[i]
    return float(sse[best]), float(threshold)


def _grow(tree, X, y, w, rows, depth, config, rng):
    yr, wr = y[rows], w[rows]
    lo, hi = yr.min(), yr.max()
    if lo == hi:
        return tree._new_node(yr[0])
    value = min(hi, max(lo, float(np.dot(wr, yr) / wr.sum())))
    node = tree._new_node(value)
    tree.depth = max(tree.depth, depth)
    if depth >= config.max_depth or len(rows) < config.min_samples_split:
        return node

    dim = X.shape[1]
    n_try = -(-dim // 3)
    order = rng.permutation(dim)
    best = None
    # Try a random third of the features; fall back to the rest only if none can split.
    for start, stop in ((0, n_try), (n_try, dim)):
        for f in order[start:stop]:
            found = _best_split(X[rows, f], yr, wr)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], found[1], int(f))
        if best is not None:
            break
    if best is None:
        return node

    _, threshold, f = best
    go_left = X[rows, f] <= threshold
    tree.feature[node] = f
    tree.threshold[node] = threshold
    tree.depth = max(tree.depth, depth + 1)
    tree.left[node] = _grow(tree, X, y, w, rows[go_left], depth + 1, config, rng)
    tree.right[node] = _grow(tree, X, y, w, rows[~go_left], depth + 1, config, rng)
    return node


def fit_tree(X, y, w, config, rng):
    """Grow one CART regression tree on the rows with positive weight."""
    tree = RegressionTree()
    rows = np.flatnonzero(w > 0)
    _grow(tree, X, y, w, rows, 0, config, rng)
    return tree


@dataclass(frozen=True, eq=False)
class ForestModel:
    """A fitted forest; predictions are clipped to the training label range."""
    trees: tuple
    config: ForestConfig
    n_features: int
    y_min: float
    y_max: float

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise EncodingError(f"Forest expects {self.n_features} features, got {X.shape[1]}")
        pred = np.mean([tree.predict(X) for tree in self.trees], axis=0)
        return np.clip(pred, self.y_min, self.y_max)

    def to_dict(self):
        return {"config": self.config.to_dict(), "n_features": self.n_features,
                "y_min": self.y_min, "y_max": self.y_max,
                "trees": [t.to_dict() for t in self.trees]}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def forest_fit(data, config=None):
    """Fit a random forest regressor.

    Each tree sees a bootstrap resample (as per-row multiplicities on the
    data weights) and, at every split, a random ceil(dim/3) of the
    features; splits minimise weighted squared error, with thresholds at
    midpoints between consecutive distinct values.

    Parameters
    ----------
    data: TrainingSet
        at least 2 rows
    config: ForestConfig, optional

    Returns
    -------
    model: ForestModel
    """
    if config is None:
        config = ForestConfig()
    if len(data) < 2:
        raise ValueError(f"A forest needs at least 2 training rows, got {len(data)}")

    X, y = data.features, data.labels
    base = np.ones(len(y)) if data.weights is None else data.weights
    if not np.any(base > 0):
        raise ValueError("All training weights are zero")

    rng = np.random.default_rng(config.seed)
    trees = []
    for _ in range(config.n_trees):
        tree_rng = np.random.default_rng(rng.integers(2 ** 63))
        if config.bootstrap:
            picks = tree_rng.integers(0, len(y), len(y))
            w = base * np.bincount(picks, minlength=len(y))
            if not np.any(w > 0):
                w = base
        else:
            w = base
        trees.append(fit_tree(X, y, w, config, tree_rng))

    return ForestModel(tuple(trees), config, X.shape[1], float(y.min()), float(y.max()))


def forest_predict(model, x):
    """Predicted cost for one feature vector, or an array of predictions for a matrix."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != model.n_features:
            raise EncodingError(f"Forest expects {model.n_features} features, got {x.shape[0]}")
        return float(model.predict(x[None, :])[0])
    return model.predict(x)


def kfold_cv(data, folds=5, config=None):
    """Mean held-out squared error over a seeded k-fold partition.

    Parameters
    ----------
    data: TrainingSet
    folds: int
        at least 2 and at most the number of rows, which must be 3 or more
    config: ForestConfig, optional

    Returns
    -------
    mse: float
    """
    if config is None:
        config = ForestConfig()
    if folds < 2 or len(data) < max(folds, 3):
        raise ValueError(f"Cannot run {folds}-fold cross-validation on {len(data)} rows")

    rng = np.random.default_rng(config.seed)
    parts = np.array_split(rng.permutation(len(data)), folds)
    errors = []
    for i, test in enumerate(parts):
        train = np.concatenate([p for j, p in enumerate(parts) if j != i])
        model = forest_fit(data.subset(train), config)
        pred = model.predict(data.features[test])
        errors.append(float(np.mean((pred - data.labels[test]) ** 2)))
    logger.debug("%d-fold CV errors: %s", folds, errors)
    return float(np.mean(errors))


def with_seed(config, seed):
    return replace(config, seed=seed)
