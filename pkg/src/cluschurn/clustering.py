"""Interpretable three-step clustering of user feature matrices.

1. Per dimension, k-means on the standardized ``(mu, lag1, q, phi)`` slice with
   the cluster count picked by mean Silhouette.
2. Each user's per-dimension vector is replaced by its assigned center and the
   centers are concatenated.
3. k-means with Silhouette selection again on the standardized concatenation.

Soft typing targets for the churn model come from a Student-t kernel (one
degree of freedom) around the step-3 centers.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin

from .exceptions import ValidationError
from .validation import as_rng, check_feature_array, check_is_fitted, check_points

DEFAULT_K_RANGE = (2, 6)
SILHOUETTE_EXACT_MAX = 10_000


@dataclass
class KMeansResult:
    k: int
    centers: np.ndarray
    labels: np.ndarray
    inertia: float
    mean_silhouette: float = None
    per_k_scores: dict = field(default_factory=dict)


def _sq_dists(X, centers):
    return cdist(X, centers, "sqeuclidean")


def _assign(X, centers, prev=None):
    """Nearest center; with ``prev`` given, ties keep the previous label."""
    d2 = _sq_dists(X, centers)
    labels = np.argmin(d2, axis=1)
    if prev is not None:
        rows = np.arange(X.shape[0])
        keep = d2[rows, prev] <= d2[rows, labels]
        labels[keep] = prev[keep]
    return labels


def _kmeans_pp(X, k, rng):
    """Greedy k-means++: each step samples ``2 + log k`` candidates and keeps the best."""
    n = X.shape[0]
    trials = 2 + int(np.log(k))
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = _sq_dists(X, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            cand = rng.choice(n, size=trials, p=d2 / total)
        else:
            cand = rng.integers(n, size=trials)
        cand_d2 = np.minimum(d2[None, :], _sq_dists(X[cand], X))
        best = int(np.argmin(cand_d2.sum(axis=1)))
        centers[j] = X[cand[best]]
        d2 = cand_d2[best]
    return centers


def _update(X, labels, k, centers):
    """Recompute centers; an empty cluster steals the farthest point of the largest one."""
    labels = labels.copy()
    while True:
        counts = np.bincount(labels, minlength=k)
        empty = np.nonzero(counts == 0)[0]
        if not empty.size:
            break
        big = int(np.argmax(counts))
        members = np.nonzero(labels == big)[0]
        d2 = ((X[members] - centers[big]) ** 2).sum(axis=1)
        labels[members[int(np.argmax(d2))]] = empty[0]
    new = np.zeros_like(centers)
    np.add.at(new, labels, X)
    new /= np.bincount(labels, minlength=k)[:, None]
    return new, labels


def _lloyd(X, centers, max_iter):
    k = centers.shape[0]
    labels = _assign(X, centers)
    for _ in range(max_iter):
        centers, labels = _update(X, labels, k, centers)
        new = _assign(X, centers, labels)
        if np.array_equal(new, labels):
            break
        labels = new
    inertia = float(((X - centers[labels]) ** 2).sum())
    return centers, labels, inertia


def kmeans(X, k, seed=0, n_init=10, max_iter=300):
    """Lloyd's algorithm with k-means++ seeding; best of ``n_init`` restarts by inertia."""
    X = check_points(X)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} needs 1 <= k <= n_points={n}")
    rng = as_rng(seed)
    best = None
    for _ in range(n_init):
        run = _lloyd(X, _kmeans_pp(X, k, rng), max_iter)
        if best is None or run[2] < best[2]:
            best = run
    centers, labels, inertia = best
    return KMeansResult(k=k, centers=centers, labels=labels, inertia=inertia)


def silhouette_samples(X, labels):
    """Per-point Silhouette values (exact, O(n^2) distances)."""
    X = check_points(X)
    labels = np.asarray(labels)
    uniq, lab = np.unique(labels, return_inverse=True)
    if uniq.size < 2:
        raise ValidationError("Silhouette is undefined for fewer than 2 clusters")
    n, k = X.shape[0], uniq.size
    sizes = np.bincount(lab, minlength=k)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), lab] = 1.0
    sums = np.empty((n, k))
    for lo in range(0, n, 1024):
        sums[lo:lo + 1024] = cdist(X[lo:lo + 1024], X) @ onehot
    own = sizes[lab]
    a = np.where(own > 1, sums[np.arange(n), lab] / np.maximum(own - 1, 1), 0.0)
    means = sums / sizes[None, :]
    means[np.arange(n), lab] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.zeros(n)
    ok = (own > 1) & (denom > 0)
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return s


def silhouette(X, labels, seed=0, max_exact=SILHOUETTE_EXACT_MAX):
    """Mean Silhouette; above ``max_exact`` points a seeded uniform subsample is scored."""
    X = check_points(X)
    labels = np.asarray(labels)
    if X.shape[0] > max_exact:
        idx = np.sort(as_rng(seed).choice(X.shape[0], size=max_exact, replace=False))
        X, labels = X[idx], labels[idx]
    return float(silhouette_samples(X, labels).mean())


def select_k_and_cluster(X, k_range=DEFAULT_K_RANGE, seed=0, n_init=10):
    """Run k-means for each k in the inclusive range and keep the best mean Silhouette.

    Ties go to the smaller k. Candidates above the number of points are skipped.
    """
    X = check_points(X, min_samples=2)
    lo, hi = k_range
    if lo < 2 or hi < lo:
        raise ValidationError(f"bad k range {k_range}")
    best, scores = None, {}
    for k in range(lo, min(hi, X.shape[0]) + 1):
        res = kmeans(X, k, seed=seed, n_init=n_init)
        res.mean_silhouette = silhouette(X, res.labels, seed=seed)
        scores[k] = res.mean_silhouette
        if best is None or res.mean_silhouette > best.mean_silhouette + 1e-12:
            best = res
    best.per_k_scores = scores
    return best


class Standardizer:
    """Column z-scoring; zero-variance columns map to 0 (ignored by distances)."""

    def __init__(self, mean, scale, keep):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)
        self.keep = np.asarray(keep, dtype=bool)

    @classmethod
    def fit(cls, X):
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        keep = std > 1e-12 * np.maximum(1.0, np.abs(mean))
        return cls(mean, np.where(keep, std, 1.0), keep)

    def transform(self, X):
        Z = (X - self.mean) / self.scale
        Z[:, ~self.keep] = 0.0
        return Z

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist(),
                "keep": self.keep.astype(int).tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mean"], d["scale"], d["keep"])


@dataclass
class FeatureClusterModel:
    """Step-1 result for one dimension; ``centers`` in original feature units."""

    dim: int
    result: KMeansResult
    scaler: Standardizer
    centers: np.ndarray

    def assign(self, block):
        return _assign(self.scaler.transform(block), self.result.centers)


def single_feature_clustering(F, dim, k_range=DEFAULT_K_RANGE, seed=0, n_init=10):
    F = check_feature_array(F)
    block = F[:, dim, :]
    scaler = Standardizer.fit(block)
    res = select_k_and_cluster(scaler.transform(block), k_range, seed=seed, n_init=n_init)
    centers = np.stack([block[res.labels == j].mean(axis=0) for j in range(res.k)])
    return FeatureClusterModel(dim=dim, result=res, scaler=scaler, centers=centers)


def combine_features(F, models):
    """Replace every per-dimension vector by its nearest center and concatenate."""
    F = check_feature_array(F)
    if len(models) != F.shape[1]:
        raise ValidationError(f"{len(models)} models for {F.shape[1]} dimensions")
    blocks = [m.centers[m.assign(F[:, d, :])] for d, m in enumerate(models)]
    return np.concatenate(blocks, axis=1)


def multi_feature_clustering(combined, k_range=DEFAULT_K_RANGE, seed=0, n_init=10, n_types=None):
    """Step 3: returns ``(result, scaler, Q)`` with result centers in standardized space."""
    combined = check_points(combined, min_samples=2)
    scaler = Standardizer.fit(combined)
    Z = scaler.transform(combined)
    if n_types is None:
        res = select_k_and_cluster(Z, k_range, seed=seed, n_init=n_init)
    else:
        res = kmeans(Z, n_types, seed=seed, n_init=n_init)
        res.mean_silhouette = silhouette(Z, res.labels, seed=seed) if n_types > 1 else 0.0
        res.per_k_scores = {n_types: res.mean_silhouette}
    return res, scaler, soft_typing_targets(Z, res.centers)


def soft_typing_targets(Z, centers):
    """Student-t (1 d.o.f.) soft assignment of each row of ``Z`` to each center."""
    Z = check_points(Z)
    centers = check_points(centers)
    kern = 1.0 / (1.0 + cdist(Z, centers, "sqeuclidean"))
    return kern / kern.sum(axis=1, keepdims=True)


EGO_LAYERS = ("tendril", "outsider", "disconnected")


def classify_ego_layer(size, density, core_overlap, tendril_min=0.4, outsider_min=0.05):
    """Jellyfish layer from the share of direct friends inside the core.

    ``size`` and ``density`` are accepted for reporting symmetry; only the
    overlap decides.
    """
    if not 0 <= core_overlap <= 1:
        raise ValidationError(f"core overlap must lie in [0, 1], got {core_overlap}")
    if core_overlap >= tendril_min:
        return "tendril"
    if core_overlap >= outsider_min:
        return "outsider"
    return "disconnected"


class SilhouetteKMeans(BaseEstimator, ClusterMixin):
    """k-means whose cluster count is chosen by mean Silhouette over ``k_range``."""

    def __init__(self, k_range=DEFAULT_K_RANGE, n_init=10, seed=0):
        self.k_range = k_range
        self.n_init = n_init
        self.seed = seed

    def fit(self, X, y=None):
        res = select_k_and_cluster(X, tuple(self.k_range), seed=self.seed, n_init=self.n_init)
        self.result_ = res
        self.n_clusters_ = res.k
        self.cluster_centers_ = res.centers
        self.labels_ = res.labels
        self.silhouette_ = res.mean_silhouette
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        return _assign(check_points(X), self.cluster_centers_)


class ThreeStepClustering(BaseEstimator, ClusterMixin, TransformerMixin):
    """Per-feature clustering, center substitution, then multi-feature clustering.

    ``fit`` takes ``(n, D, 4)`` feature matrices (or their ``(n, D*4)``
    flattening). ``predict`` gives hard types, ``transform`` the soft typing
    targets. Pass ``n_types`` to fix the final cluster count.
    """

    def __init__(self, k_range=DEFAULT_K_RANGE, n_init=10, seed=0, n_types=None):
        self.k_range = k_range
        self.n_init = n_init
        self.seed = seed
        self.n_types = n_types

    def fit(self, F, y=None):
        F = check_feature_array(F)
        k_range = tuple(self.k_range)
        self.feature_models_ = [
            single_feature_clustering(F, d, k_range, seed=self.seed + d, n_init=self.n_init)
            for d in range(F.shape[1])
        ]
        combined = combine_features(F, self.feature_models_)
        res, scaler, Q = multi_feature_clustering(
            combined, k_range, seed=self.seed, n_init=self.n_init, n_types=self.n_types)
        self.result_ = res
        self.scaler_ = scaler
        self.cluster_centers_ = res.centers
        self.n_types_ = res.k
        self.labels_ = res.labels
        self.soft_targets_ = Q
        self.silhouette_ = res.mean_silhouette
        return self

    def combine(self, F):
        check_is_fitted(self, "feature_models_")
        return combine_features(F, self.feature_models_)

    def embed(self, F):
        """Standardized combined features, the space the final centers live in."""
        check_is_fitted(self, "scaler_")
        return self.scaler_.transform(self.combine(F))

    def predict(self, F):
        return _assign(self.embed(F), self.cluster_centers_)

    def transform(self, F):
        return soft_typing_targets(self.embed(F), self.cluster_centers_)

    def to_dict(self, type_names=None):
        check_is_fitted(self, "feature_models_")
        return {
            "format": "cluschurn.clustering",
            "version": 1,
            "params": {"k_range": list(self.k_range), "n_init": self.n_init,
                       "seed": self.seed, "n_types": self.n_types},
            "features": [
                {"dim": m.dim, "k": m.result.k,
                 "centers": m.centers.tolist(),
                 "standardized_centers": m.result.centers.tolist(),
                 "silhouette": m.result.mean_silhouette,
                 "per_k_scores": {str(k): v for k, v in m.result.per_k_scores.items()},
                 "standardization": m.scaler.to_dict()}
                for m in self.feature_models_
            ],
            "types": {
                "k": self.n_types_,
                "centers": self.cluster_centers_.tolist(),
                "silhouette": self.silhouette_,
                "per_k_scores": {str(k): v for k, v in self.result_.per_k_scores.items()},
                "standardization": self.scaler_.to_dict(),
                "names": list(type_names) if type_names else None,
            },
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "cluschurn.clustering" or d.get("version") != 1:
            raise ValidationError("not a version-1 cluster model")
        p = d["params"]
        est = cls(k_range=tuple(p["k_range"]), n_init=p["n_init"], seed=p["seed"],
                  n_types=p["n_types"])
        models = []
        for f in d["features"]:
            centers = np.asarray(f["standardized_centers"])
            res = KMeansResult(k=f["k"], centers=centers, labels=None, inertia=None,
                               mean_silhouette=f["silhouette"],
                               per_k_scores={int(k): v for k, v in f["per_k_scores"].items()})
            models.append(FeatureClusterModel(f["dim"], res, Standardizer.from_dict(f["standardization"]),
                                              np.asarray(f["centers"])))
        t = d["types"]
        est.feature_models_ = models
        est.scaler_ = Standardizer.from_dict(t["standardization"])
        est.cluster_centers_ = np.asarray(t["centers"])
        est.n_types_ = t["k"]
        est.silhouette_ = t["silhouette"]
        est.result_ = KMeansResult(k=t["k"], centers=est.cluster_centers_, labels=None, inertia=None,
                                   mean_silhouette=t["silhouette"],
                                   per_k_scores={int(k): v for k, v in t["per_k_scores"].items()})
        return est
