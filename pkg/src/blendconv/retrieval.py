"""Shape descriptors from layer-2 features and similarity-ranked retrieval."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.special import log_softmax, logsumexp
from sklearn.decomposition import PCA
from sklearn.metrics import average_precision_score

from blendconv.exceptions import (
    ConfigError,
    NonFiniteError,
    StateError,
    UndefinedSimilarityError,
)
from blendconv.network import BlendNet, NetworkParams, Sample
from blendconv.transform import BallGrid

log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

DEFAULT_DIM = 1000


class Metric(str, Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"
    KL = "kl"
    BHATTACHARYYA = "bhattacharyya"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, eq=False)
class Descriptor:
    values: FloatArray
    source: str = ""

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise NonFiniteError(f"descriptor {self.source!r} has non-finite values")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


class Reducer(Protocol):
    """Maps concatenated feature vectors to fixed-size descriptors."""

    dim: int

    @property
    def fitted(self) -> bool: ...

    def fit(self, features: FloatArray) -> Reducer: ...

    def transform(self, features: FloatArray) -> FloatArray: ...


class PCAReducer:
    """
    Linear reducer: PCA on the gallery, zero padded up to `dim`.

    Features no wider than `dim` pass through unchanged and are padded.
    """

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        if dim < 1:
            raise ConfigError(f"descriptor dimension must be >= 1, got {dim}")
        self.dim = dim
        self.features: int | None = None
        self.pca: PCA | None = None

    @property
    def fitted(self) -> bool:
        return self.features is not None

    def fit(self, features: FloatArray) -> PCAReducer:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        samples, width = features.shape
        self.features = width
        if width <= self.dim:
            self.pca = None
            log.debug(f"{width} features fit in {self.dim}, reducer is the identity")
            return self
        components = min(self.dim, samples, width)
        self.pca = PCA(n_components=components, svd_solver="full").fit(features)
        log.debug(f"PCA reducer keeps {components} of {width} features")
        return self

    def transform(self, features: FloatArray) -> FloatArray:
        if not self.fitted:
            raise StateError("reducer used before fit")
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[1] != self.features:
            raise ConfigError(
                f"reducer was fitted on {self.features} features, got {features.shape[1]}"
            )
        reduced = features if self.pca is None else self.pca.transform(features)
        out = np.zeros((len(features), self.dim))
        out[:, : reduced.shape[1]] = reduced
        return out


def feature_vector(net: BlendNet, params: NetworkParams, sample: Sample | BallGrid) -> FloatArray:
    """The 16 layer-2 fields, post-norm and post-ReLU, concatenated."""
    return net.features(params, sample).values.reshape(-1)


def descriptor(
    net: BlendNet,
    params: NetworkParams,
    sample: Sample | BallGrid,
    reducer: Reducer,
    source: str = "",
) -> Descriptor:
    """
    Descriptor of one shape.

    Raises:
        StateError: If the reducer is not fitted.
    """
    if not reducer.fitted:
        raise StateError("reducer must be fitted on the gallery first")
    values = reducer.transform(feature_vector(net, params, sample)[None, :])[0]
    return Descriptor(values, source)


def _check_dims(a: Descriptor, b: Descriptor) -> None:
    if len(a) != len(b):
        raise ConfigError(f"descriptor dimensions differ: {len(a)} vs {len(b)}")


def similarity(a: Descriptor, b: Descriptor, metric: Metric | str = Metric.COSINE) -> float:
    """
    Similarity score, higher is more similar under every metric.

    kl and bhattacharyya compare the softmax-normalized descriptors; kl is
    not symmetric.

    Args:
        a (Descriptor): First descriptor.
        b (Descriptor): Second descriptor.
        metric (Metric | str): cosine, euclidean, kl or bhattacharyya.

    Returns:
        float: cosine, -distance, -KL(a || b) or ln of the Bhattacharyya
            coefficient.

    Raises:
        UndefinedSimilarityError: For a zero-norm descriptor under cosine.
    """
    metric = Metric(metric)
    _check_dims(a, b)
    x, y = a.values, b.values

    match metric:
        case Metric.COSINE:
            norm = float(np.linalg.norm(x) * np.linalg.norm(y))
            if norm == 0.0:
                raise UndefinedSimilarityError("cosine similarity of a zero descriptor")
            return float(np.clip(np.dot(x, y) / norm, -1.0, 1.0))
        case Metric.EUCLIDEAN:
            return -float(np.linalg.norm(x - y))
        case Metric.KL:
            log_p, log_q = log_softmax(x), log_softmax(y)
            return -float(np.sum(np.exp(log_p) * (log_p - log_q)))
        case Metric.BHATTACHARYYA:
            log_p, log_q = log_softmax(x), log_softmax(y)
            return float(min(logsumexp(0.5 * (log_p + log_q)), 0.0))


@dataclass(frozen=True)
class Ranking:
    indices: list[int]
    scores: list[float]


def rank(
    query: Descriptor,
    gallery: Sequence[Descriptor],
    metric: Metric | str = Metric.COSINE,
    prefer: int | None = None,
) -> Ranking:
    """
    Gallery sorted by descending score, ties by ascending index.

    `prefer` moves one gallery index ahead of every item tied with it.
    """
    if not gallery:
        raise ConfigError("cannot rank against an empty gallery")
    if prefer is not None and not 0 <= prefer < len(gallery):
        raise ConfigError(f"preferred index {prefer} outside a gallery of {len(gallery)}")
    scores = np.array([similarity(query, item, metric) for item in gallery])
    behind = np.ones(len(gallery), dtype=bool)
    if prefer is not None:
        behind[prefer] = False
    order = np.lexsort((np.arange(len(gallery)), behind, -scores))
    return Ranking([int(i) for i in order], [float(scores[i]) for i in order])


@dataclass
class RetrievalReport:
    metric: str
    nn_accuracy: float
    mean_ap: float
    queries: int
    skipped: int = 0
    precisions: list[float] = field(default_factory=list)

    def row(self) -> list[object]:
        return [self.metric, self.nn_accuracy, self.mean_ap]


def evaluate(
    queries: Sequence[Descriptor],
    gallery: Sequence[Descriptor],
    query_labels: Sequence[int],
    gallery_labels: Sequence[int],
    metric: Metric | str = Metric.COSINE,
    exclude_self: bool = False,
    self_query: bool = False,
) -> RetrievalReport:
    """
    Nearest-neighbor accuracy and mean average precision.

    Args:
        queries (Sequence[Descriptor]): Query descriptors.
        gallery (Sequence[Descriptor]): Gallery descriptors.
        query_labels (Sequence[int]): Class of every query.
        gallery_labels (Sequence[int]): Class of every gallery item.
        metric (Metric | str): Similarity used for ranking.
        exclude_self (bool): Queries are the gallery itself; drop item i
            from the ranking of query i.
        self_query (bool): Queries are the gallery itself; item i wins
            ties in the ranking of query i, so duplicates rank after it.

    Returns:
        RetrievalReport: Scores in [0, 1]. Queries without a relevant
            gallery item count against accuracy and are left out of the mAP.
    """
    metric = Metric(metric)
    if len(queries) != len(query_labels) or len(gallery) != len(gallery_labels):
        raise ConfigError("every descriptor needs exactly one label")
    if (exclude_self or self_query) and len(queries) != len(gallery):
        raise ConfigError("self-query evaluation needs the queries to be the gallery")

    labels = np.asarray(gallery_labels)
    hits = 0
    precisions = []
    skipped = 0

    for i, (query, label) in enumerate(zip(queries, query_labels)):
        keep = [j for j in range(len(gallery)) if not (exclude_self and j == i)]
        if not keep:
            skipped += 1
            continue
        prefer = i if self_query and not exclude_self else None
        ranking = rank(query, [gallery[j] for j in keep], metric, prefer)
        ordered = labels[[keep[j] for j in ranking.indices]]
        relevant = ordered == label
        hits += int(relevant[0])
        if not relevant.any():
            skipped += 1
            continue
        # the rank order already breaks ties, so score by position
        precisions.append(
            float(average_precision_score(relevant, -np.arange(len(relevant))))
        )

    if not precisions:
        log.warning(f"no query under {metric} has a relevant gallery item, mAP is 0")
    mean_ap = float(np.mean(precisions)) if precisions else 0.0
    nn_accuracy = hits / len(queries) if len(queries) else 0.0
    return RetrievalReport(
        str(metric), nn_accuracy, mean_ap, len(queries), skipped, precisions
    )


@dataclass
class Gallery:
    """Labelled descriptors with their source ids."""

    ids: list[str]
    labels: list[int]
    descriptors: list[Descriptor]

    def __post_init__(self) -> None:
        if not len(self.ids) == len(self.labels) == len(self.descriptors):
            raise ConfigError("gallery ids, labels and descriptors differ in length")
        if len({len(d) for d in self.descriptors}) > 1:
            raise ConfigError("gallery descriptors have different dimensions")

    def __len__(self) -> int:
        return len(self.ids)


def build_gallery(
    net: BlendNet,
    params: NetworkParams,
    samples: Sequence[Sample],
    ids: Sequence[str],
    reducer: Reducer,
) -> Gallery:
    """Fit the reducer on the samples' features and describe every sample."""
    features = np.array([feature_vector(net, params, s) for s in samples])
    reducer.fit(features)
    reduced = reducer.transform(features)
    descriptors = [Descriptor(row, source) for row, source in zip(reduced, ids)]
    return Gallery(list(ids), [s.label for s in samples], descriptors)
