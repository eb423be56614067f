"""DBSCAN, k-distance elbow selection of eps, one-hot campaign features, metrics."""

from __future__ import annotations

import csv
import math
from collections import Counter, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .corpus import RegistrationRecord
from .errors import DegenerateDistances, DimensionMismatch, LengthMismatch, TooFewPoints

NOISE = -1
DEFAULT_MIN_PTS = 5

Metric = Union[Callable[[int, int], float], np.ndarray]

CAMPAIGN_FIELDS = (
    "ga_id",
    "email_account",
    "email_provider",
    "registrant_country",
    "registrar",
    "ip",
)


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int = DEFAULT_MIN_PTS

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_clusters(self) -> int:
        return max(self.labels, default=NOISE) + 1

    @property
    def noise_count(self) -> int:
        return sum(1 for x in self.labels if x == NOISE)

    def members(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for i, lab in enumerate(self.labels):
            if lab != NOISE:
                out.setdefault(lab, []).append(i)
        return out


def _row_distances(metric: Metric, n: int, i: int) -> np.ndarray:
    if isinstance(metric, np.ndarray):
        return metric[i]
    return np.array([metric(i, j) for j in range(n)], dtype=float)


def _map_rows(fn, n: int, threads: int) -> list:
    if threads <= 1 or n < 64:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def neighbor_lists(n: int, metric: Metric, eps: float, threads: int = 1) -> list[list[int]]:
    """Ascending-index eps-neighbourhoods; every point is its own neighbour."""

    def row(i: int) -> list[int]:
        d = _row_distances(metric, n, i)
        hits = np.flatnonzero(d <= eps).tolist()
        if i not in hits:
            hits.append(i)
            hits.sort()
        return hits

    return _map_rows(row, n, threads)


def dbscan(n: int, metric: Metric, params: DbscanParams, threads: int = 1) -> ClusterAssignment:
    """Classic DBSCAN over a distance oracle on point indices ``0..n-1``.

    ``metric`` is either ``f(i, j) -> distance`` or a precomputed ``n x n``
    array. Seeds are visited in ascending index order and neighbourhoods
    expanded in ascending order, so a border point reachable from several
    clusters joins the one created first. The result does not depend on
    ``threads``, which only parallelises the neighbourhood queries.
    """
    nbrs = neighbor_lists(n, metric, params.eps, threads)
    core = [len(nb) >= params.min_pts for nb in nbrs]
    labels: list[int | None] = [None] * n
    next_id = 0
    for seed in range(n):
        if labels[seed] is not None:
            continue
        if not core[seed]:
            labels[seed] = NOISE
            continue
        labels[seed] = next_id
        queue = deque(nbrs[seed])
        while queue:
            q = queue.popleft()
            if labels[q] == NOISE:
                labels[q] = next_id
            elif labels[q] is None:
                labels[q] = next_id
                if core[q]:
                    queue.extend(nbrs[q])
        next_id += 1
    return ClusterAssignment(tuple(labels))  # type: ignore[arg-type]


def k_distances(n: int, metric: Metric, k: int, threads: int = 1) -> np.ndarray:
    """Distance from each point to its k-th nearest other point (unsorted)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if n <= k:
        raise TooFewPoints(f"need more than {k} points, got {n}")

    def row(i: int) -> float:
        d = np.delete(_row_distances(metric, n, i), i)
        return float(np.partition(d, k - 1)[k - 1])

    return np.array(_map_rows(row, n, threads))


def elbow_value(curve: Sequence[float]) -> float:
    """Point of a sorted curve farthest from the chord joining its ends.

    Ties go to the smallest index; a flat curve returns its first value.
    """
    y = np.asarray(curve, dtype=float)
    if np.all(y == y[0]):
        return float(y[0])
    m = len(y) - 1
    j = np.arange(len(y))
    dy = y[-1] - y[0]
    dev = np.abs(dy * j - m * (y - y[0])) / math.hypot(dy, m)
    return float(y[int(np.argmax(dev))])


def select_eps(n: int, metric: Metric, k: int = DEFAULT_MIN_PTS, threads: int = 1) -> float:
    curve = np.sort(k_distances(n, metric, k, threads))
    eps = elbow_value(curve)
    if eps <= 0:
        raise DegenerateDistances("k-distance elbow sits at zero; points are coincident")
    return eps


# -- campaign features ------------------------------------------------------


@dataclass(frozen=True)
class CampaignFeatureMatrix:
    domains: tuple[str, ...]
    columns: tuple[tuple[str, str], ...]
    rows: np.ndarray  # uint8, one row per domain

    @property
    def dimension(self) -> int:
        return len(self.columns)


CampaignInput = tuple[str, "RegistrationRecord | None", Iterable[str], "str | None"]


def _field_values(reg: RegistrationRecord | None, ga_ids: Iterable[str], ip: str | None) -> dict[str, list[str]]:
    reg = reg or RegistrationRecord(domain="")
    single = {
        "email_account": reg.registrant_email_account,
        "email_provider": reg.registrant_email_provider,
        "registrant_country": reg.registrant_country,
        "registrar": reg.registrar,
        "ip": ip,
    }
    out = {name: [v] for name, v in single.items() if v}
    ga = sorted(set(ga_ids))
    if ga:
        out["ga_id"] = ga
    return out


def encode_campaign_features(records: Sequence[CampaignInput]) -> CampaignFeatureMatrix:
    """One binary column per observed (field, value) pair.

    Absent values activate nothing. A site carrying several analytics IDs
    activates each of its ``ga_id`` columns.
    """
    per_record = [_field_values(reg, ga, ip) for _, reg, ga, ip in records]
    observed = {name: set() for name in CAMPAIGN_FIELDS}
    for fields in per_record:
        for name, values in fields.items():
            observed[name].update(values)
    columns = [(name, v) for name in CAMPAIGN_FIELDS for v in sorted(observed[name])]
    index = {col: i for i, col in enumerate(columns)}
    rows = np.zeros((len(records), len(columns)), dtype=np.uint8)
    for r, fields in enumerate(per_record):
        for name, values in fields.items():
            for v in values:
                rows[r, index[(name, v)]] = 1
    return CampaignFeatureMatrix(tuple(d for d, *_ in records), tuple(columns), rows)


def euclidean_distance(row_u: Sequence[int], row_v: Sequence[int]) -> float:
    u, v = np.asarray(row_u), np.asarray(row_v)
    if u.shape != v.shape:
        raise DimensionMismatch(f"{u.shape} != {v.shape}")
    return math.sqrt(int(np.count_nonzero(u != v)))


def euclidean_distance_matrix(rows: np.ndarray) -> np.ndarray:
    x = rows.astype(np.int64)
    counts = x.sum(axis=1)
    mismatches = counts[:, None] + counts[None, :] - 2 * (x @ x.T)
    return np.sqrt(mismatches.astype(float))


# -- evaluation metrics -----------------------------------------------------


def _with_singleton_noise(labels: Sequence[int]) -> list:
    return [("noise", i) if lab == NOISE else lab for i, lab in enumerate(labels)]


def _pairs(count: int) -> int:
    return count * (count - 1) // 2


def _labels(x) -> Sequence[int]:
    return x.labels if isinstance(x, ClusterAssignment) else x


def adjusted_rand_index(a, b) -> float:
    """ARI with NOISE points scored as singleton clusters."""
    la, lb = _labels(a), _labels(b)
    if len(la) != len(lb):
        raise LengthMismatch(f"{len(la)} != {len(lb)}")
    n = len(la)
    if n < 2:
        return 1.0
    xa, xb = _with_singleton_noise(la), _with_singleton_noise(lb)
    index = sum(_pairs(c) for c in Counter(zip(xa, xb)).values())
    sum_a = sum(_pairs(c) for c in Counter(xa).values())
    sum_b = sum(_pairs(c) for c in Counter(xb).values())
    expected = sum_a * sum_b / _pairs(n)
    maximum = (sum_a + sum_b) / 2
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)


def pairwise_f1(predicted, truth) -> float:
    """F1 over same-cluster pairs; NOISE points pair with nothing."""
    lp, lt = _labels(predicted), _labels(truth)
    if len(lp) != len(lt):
        raise LengthMismatch(f"{len(lp)} != {len(lt)}")
    pred_pairs = sum(_pairs(c) for lab, c in Counter(lp).items() if lab != NOISE)
    true_pairs = sum(_pairs(c) for lab, c in Counter(lt).items() if lab != NOISE)
    if pred_pairs == 0 and true_pairs == 0:
        return 1.0
    tp = sum(
        _pairs(c) for (p, t), c in Counter(zip(lp, lt)).items() if p != NOISE and t != NOISE
    )
    if tp == 0:
        return 0.0
    precision, recall = tp / pred_pairs, tp / true_pairs
    return 2 * precision * recall / (precision + recall)


# -- export -----------------------------------------------------------------


def write_assignment(path: str | Path, item_ids: Sequence[str], assignment: ClusterAssignment) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id", "cluster_id"])
        for item, lab in zip(item_ids, assignment.labels):
            w.writerow([item, lab])


def read_assignment(path: str | Path) -> tuple[list[str], ClusterAssignment]:
    items, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            items.append(row["item_id"])
            labels.append(int(row["cluster_id"]))
    return items, ClusterAssignment(tuple(labels))
