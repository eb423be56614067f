"""The studies run over loaded data: type and campaign clustering, address
reuse, campaign overlap, registration-to-payment lags and inflow series."""

from __future__ import annotations

import bisect
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .addresses import CryptoAddress
from .chain import BlockchainCluster, ChainTransaction, PriceTable, cluster_index, to_usd
from .clusterer import (
    DEFAULT_MIN_PTS,
    CampaignFeatureMatrix,
    CampaignInput,
    ClusterAssignment,
    DbscanParams,
    dbscan,
    elbow_value,
    encode_campaign_features,
    euclidean_distance_matrix,
    k_distances,
    select_eps,
)
from .corpus import WebsiteSnapshot
from .errors import DegenerateDistances, EmptyWindow, NoIncludedPayments, TooFewPoints
from .textfeat import TfidfModel, cosine_distance_matrix, fit_tfidf, preprocess, to_csr, transform

log = logging.getLogger(__name__)

# Radius used when every k-distance is zero: groups exact duplicates only.
DEGENERATE_EPS = 1e-9
TOP_TERMS = 10
ECDF_PROBES = (7, 14, 30)


def _eps_k(n: int, min_pts: int) -> int:
    # the k-th nearest other point needs k < n; small inputs use what exists
    return min(min_pts, n - 1)


def _choose_eps(n: int, dist: np.ndarray, min_pts: int, eps: float | None, threads: int) -> tuple[float, bool]:
    if eps is not None:
        return eps, False
    k = _eps_k(n, min_pts)
    if k < 1:
        return DEGENERATE_EPS, True
    try:
        return select_eps(n, dist, k=k, threads=threads), False
    except DegenerateDistances:
        pass
    # Exact duplicates give zero k-distances and can pull the elbow to zero.
    # Any positive radius already groups them, so look for the elbow among
    # the distinct points instead. A knee at the very top of that tail means
    # it is one plateau (isolated points), and any radius reaching it would
    # merge everything: keep to exact duplicates then.
    curve = np.sort(k_distances(n, dist, k, threads))
    positive = curve[curve > 0]
    if len(positive):
        knee = elbow_value(positive)
        if knee < positive[-1]:
            log.info("k-distance elbow at zero; using the elbow of the positive tail")
            return knee, False
    log.warning("no usable k-distance elbow; clustering exact duplicates only")
    return DEGENERATE_EPS, True


# -- type clustering --------------------------------------------------------


@dataclass
class TypeCluster:
    cluster_id: int
    size: int
    top_terms: list[str]
    domains: list[str]


@dataclass
class TypeClusterReport:
    assignment: ClusterAssignment
    eps: float
    min_pts: int
    degenerate: bool
    clusters: list[TypeCluster]
    k_distance_curve: list[float]
    model: TfidfModel = field(repr=False)

    @property
    def noise_count(self) -> int:
        return self.assignment.noise_count


def cluster_types(
    snapshots: Sequence[WebsiteSnapshot],
    stop_words: Iterable[str],
    min_pts: int = DEFAULT_MIN_PTS,
    eps: float | None = None,
    threads: int = 1,
) -> TypeClusterReport:
    n = len(snapshots)
    if n < min_pts:
        raise TooFewPoints(f"type clustering needs at least {min_pts} snapshots, got {n}")
    stop = frozenset(stop_words)
    docs = [preprocess(s.page_text, stop) for s in snapshots]
    model = fit_tfidf(docs)
    vectors = [transform(model, d) for d in docs]
    dist = cosine_distance_matrix(vectors)
    eps, degenerate = _choose_eps(n, dist, min_pts, eps, threads)
    assignment = dbscan(n, dist, DbscanParams(eps, min_pts), threads)
    k = _eps_k(n, min_pts)
    curve = sorted(k_distances(n, dist, k, threads).tolist()) if k >= 1 else []

    x = to_csr(vectors)
    terms = model.terms
    clusters = []
    for cid, members in sorted(assignment.members().items()):
        mean = np.asarray(x[members].mean(axis=0)).ravel()
        order = sorted(np.flatnonzero(mean > 0), key=lambda j: (-mean[j], terms[j]))
        clusters.append(
            TypeCluster(
                cluster_id=cid,
                size=len(members),
                top_terms=[terms[j] for j in order[:TOP_TERMS]],
                domains=sorted({snapshots[i].domain for i in members}),
            )
        )
    return TypeClusterReport(assignment, eps, min_pts, degenerate, clusters, curve, model)


# -- campaign clustering ----------------------------------------------------


@dataclass
class Campaign:
    campaign_id: int
    domains: list[str]
    ips: list[str]
    registrars: list[str]
    ga_overlap: bool
    scam_types: list[str]


@dataclass
class CampaignReport:
    domains: list[str]
    assignment: ClusterAssignment
    eps: float
    min_pts: int
    degenerate: bool
    campaigns: list[Campaign]
    features: CampaignFeatureMatrix = field(repr=False)

    @property
    def multi_type_fraction(self) -> float:
        if not self.campaigns:
            return 0.0
        return sum(len(c.scam_types) > 1 for c in self.campaigns) / len(self.campaigns)

    @property
    def ga_overlap_fraction(self) -> float:
        if not self.campaigns:
            return 0.0
        return sum(c.ga_overlap for c in self.campaigns) / len(self.campaigns)

    def campaign_of(self) -> dict[str, int]:
        return dict(zip(self.domains, self.assignment.labels))


def cluster_campaigns(
    records: Sequence[CampaignInput],
    min_pts: int = DEFAULT_MIN_PTS,
    eps: float | None = None,
    threads: int = 1,
    site_types: Mapping[str, str] | None = None,
) -> CampaignReport:
    """Cluster domains on registration and hosting features.

    ``records`` holds ``(domain, registration, analytics_ids, ip)`` with
    one entry per domain.
    """
    if not records:
        raise TooFewPoints("campaign clustering needs at least one domain")
    features = encode_campaign_features(records)
    n = len(records)
    dist = euclidean_distance_matrix(features.rows)
    eps, degenerate = _choose_eps(n, dist, min_pts, eps, threads)
    assignment = dbscan(n, dist, DbscanParams(eps, min_pts), threads)
    site_types = site_types or {}

    campaigns = []
    for cid, members in sorted(assignment.members().items()):
        ga_count: dict[str, int] = defaultdict(int)
        for i in members:
            for ga in set(records[i][2]):
                ga_count[ga] += 1
        campaigns.append(
            Campaign(
                campaign_id=cid,
                domains=sorted(records[i][0] for i in members),
                ips=sorted({records[i][3] for i in members if records[i][3]}),
                registrars=sorted(
                    {records[i][1].registrar for i in members if records[i][1] and records[i][1].registrar}
                ),
                ga_overlap=any(c >= 2 for c in ga_count.values()),
                scam_types=sorted({site_types[records[i][0]] for i in members if records[i][0] in site_types}),
            )
        )
    return CampaignReport([r[0] for r in records], assignment, eps, min_pts, degenerate, campaigns, features)


# -- blockchain overlap between campaigns -----------------------------------


@dataclass
class OverlapGraph:
    nodes: list[int]
    edges: list[tuple[int, int, list[int]]]
    components: list[list[int]]


def campaign_clusters(
    campaigns: CampaignReport | Sequence[Campaign],
    domain_addresses: Mapping[str, Iterable[CryptoAddress]],
    address_cluster: Mapping[CryptoAddress, int],
) -> dict[int, set[int]]:
    items = campaigns.campaigns if isinstance(campaigns, CampaignReport) else list(campaigns)
    out: dict[int, set[int]] = {c.campaign_id: set() for c in items}
    for c in items:
        for dom in c.domains:
            for addr in domain_addresses.get(dom, ()):
                if addr in address_cluster:
                    out[c.campaign_id].add(address_cluster[addr])
    return out


def campaign_overlap_graph(
    campaigns: CampaignReport | Sequence[Campaign],
    domain_addresses: Mapping[str, Iterable[CryptoAddress]],
    address_cluster: Mapping[CryptoAddress, int],
) -> OverlapGraph:
    per = campaign_clusters(campaigns, domain_addresses, address_cluster)
    nodes = sorted(per)
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for a, b in combinations(nodes, 2):
        shared = per[a] & per[b]
        if shared:
            edges.append((a, b, sorted(shared)))
            ra, rb = find(a), find(b)
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = defaultdict(list)
    for n in nodes:
        groups[find(n)].append(n)
    return OverlapGraph(nodes, edges, sorted(groups.values()))


# -- address reuse ----------------------------------------------------------


def type_cluster_map(
    site_types: Mapping[str, str],
    domain_addresses: Mapping[str, Iterable[CryptoAddress]],
    address_cluster: Mapping[CryptoAddress, int],
) -> tuple[dict[str, set[int]], dict[str, dict[int, int]]]:
    """Blockchain clusters used by each scam type, and how many sites of the
    type advertise into each cluster."""
    clusters: dict[str, set[int]] = defaultdict(set)
    counts: dict[str, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for dom, t in site_types.items():
        used = {address_cluster[a] for a in domain_addresses.get(dom, ()) if a in address_cluster}
        clusters[t] |= used
        for c in used:
            counts[t][c] += 1
    return dict(clusters), {t: dict(v) for t, v in counts.items()}


def reuse_stats(
    type_clusters: Mapping[str, set[int]],
    site_counts: Mapping[str, Mapping[int, int]],
) -> tuple[dict[str, float], dict[tuple[str, str], float]]:
    """Per-type reuse fraction and pairwise Jaccard overlap of cluster sets.

    Types without clusters are left out of both results.
    """
    reuse = {}
    for t, cl in sorted(type_clusters.items()):
        if not cl:
            continue
        counts = site_counts.get(t, {})
        reuse[t] = sum(1 for c in cl if counts.get(c, 0) >= 2) / len(cl)
    shared = {}
    for t1, t2 in combinations(sorted(type_clusters), 2):
        union = type_clusters[t1] | type_clusters[t2]
        if union:
            shared[(t1, t2)] = len(type_clusters[t1] & type_clusters[t2]) / len(union)
    return reuse, shared


# -- registration to payment lag --------------------------------------------


@dataclass
class Ecdf:
    lags: list[int]
    excluded: int

    def __call__(self, x: float) -> float:
        return bisect.bisect_right(self.lags, x) / len(self.lags)

    @property
    def probes(self) -> dict[int, float]:
        return {p: self(p) for p in ECDF_PROBES}

    def steps(self) -> list[tuple[int, float]]:
        """(lag, ECDF at lag) for every distinct lag."""
        return [(lag, self(lag)) for lag in sorted(set(self.lags))]


def _midnight(day: date) -> datetime:
    return datetime(day.year, day.month, day.day, tzinfo=timezone.utc)


def registration_payment_ecdf(
    registrations: Mapping[str, date | None],
    payments: Iterable[tuple[str, datetime, float]],
) -> Ecdf:
    """Whole days from registration (midnight UTC) to each payment.

    Payments made before registration, or to domains without a registration
    date, are left out.
    """
    lags, excluded = [], 0
    for domain, ts, _usd in payments:
        reg = registrations.get(domain)
        if reg is None:
            continue
        lag = (ts - _midnight(reg)) // timedelta(days=1)
        if lag < 0:
            excluded += 1
            continue
        lags.append(int(lag))
    if not lags:
        raise NoIncludedPayments("no payments on or after a known registration date")
    return Ecdf(sorted(lags), excluded)


def domain_payments(
    domain_addresses: Mapping[str, Iterable[CryptoAddress]],
    txs: Iterable[ChainTransaction],
    prices: PriceTable,
) -> list[tuple[str, datetime, float]]:
    """Incoming payments to the addresses each domain advertises."""
    owners: dict[CryptoAddress, list[str]] = defaultdict(list)
    for dom, addrs in domain_addresses.items():
        for a in addrs:
            owners[a].append(dom)
    out = []
    for tx in txs:
        senders = {a for a, _ in tx.inputs}
        per_dom: dict[str, int] = defaultdict(int)
        for addr, value in tx.outputs:
            if addr in owners and addr not in senders:
                for dom in owners[addr]:
                    per_dom[dom] += value
        for dom, value in sorted(per_dom.items()):
            out.append((dom, tx.timestamp, float(to_usd(value, tx.chain, tx.timestamp, prices))))
    return out


def keyword_trend(
    registrations: Mapping[str, date | None],
    window: tuple[date, date],
    keywords: Iterable[str],
) -> float:
    start, end = window
    if start > end:
        raise ValueError("window start is after its end")
    kws = [k.lower() for k in keywords]
    in_window = [d for d, reg in registrations.items() if reg is not None and start <= reg <= end]
    if not in_window:
        raise EmptyWindow(f"no registrations between {start} and {end}")
    return sum(any(k in d.lower() for k in kws) for d in in_window) / len(in_window)


# -- inflow time series -----------------------------------------------------


@dataclass(frozen=True)
class InflowBucket:
    start: datetime
    chain: str
    usd: Decimal
    count: int


_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def inflow_timeseries(
    type_clusters: Mapping[str, set[int]],
    clusters: Sequence[BlockchainCluster],
    txs: Iterable[ChainTransaction],
    prices: PriceTable,
    bucket: timedelta = timedelta(days=7),
) -> dict[str, list[InflowBucket]]:
    """Inflows per scam type, bucketed by time and chain.

    Clusters used by more than one type are dropped so every inflow is
    credited to a single type.
    """
    if bucket <= timedelta(0):
        raise ValueError("bucket must be positive")
    owners: dict[int, set[str]] = defaultdict(set)
    for t, cl in type_clusters.items():
        for c in cl:
            owners[c].add(t)
    exclusive = {c: next(iter(ts)) for c, ts in owners.items() if len(ts) == 1}
    where = cluster_index(clusters)

    acc: dict[tuple[str, datetime, str], list] = {}
    for tx in txs:
        senders = {where.get(a) for a, _ in tx.inputs}
        per_type: dict[str, int] = defaultdict(int)
        for addr, value in tx.outputs:
            c = where.get(addr)
            if c in exclusive and c not in senders:
                per_type[exclusive[c]] += value
        if not per_type:
            continue
        start = _EPOCH + ((tx.timestamp - _EPOCH) // bucket) * bucket
        for t, value in per_type.items():
            slot = acc.setdefault((t, start, tx.chain.value), [Decimal(0), 0])
            slot[0] += to_usd(value, tx.chain, tx.timestamp, prices)
            slot[1] += 1
    out: dict[str, list[InflowBucket]] = {t: [] for t in sorted(type_clusters)}
    for (t, start, chain), (usd, count) in sorted(acc.items()):
        out[t].append(InflowBucket(start, chain, usd, count))
    return out
