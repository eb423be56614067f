"""Glue between the studies: which addresses each site advertises, which
blockchain clusters count as scam clusters, and which sites go into the
campaign study."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .addresses import CryptoAddress
from .chain import (
    BlockchainCluster,
    ChainTransaction,
    CustodialThresholds,
    EntityLabel,
    PriceTable,
    apply_change_heuristic,
    attach_labels,
    build_clusters,
    cluster_index,
    filter_custodial,
)
from .clusterer import NOISE, CampaignInput
from .corpus import RegistrationRecord, WebsiteSnapshot


def domain_addresses(snapshots: Iterable[WebsiteSnapshot]) -> dict[str, frozenset[CryptoAddress]]:
    out: dict[str, set[CryptoAddress]] = {}
    for s in snapshots:
        out.setdefault(s.domain, set()).update(s.addresses)
    return {d: frozenset(a) for d, a in sorted(out.items())}


@dataclass
class ChainStage:
    clusters: list[BlockchainCluster]
    index: dict[CryptoAddress, int]
    scam_ids: list[int]
    custodial_ids: list[int]


def run_chain_stage(
    txs: Sequence[ChainTransaction],
    labels: Mapping[CryptoAddress, EntityLabel],
    prices: PriceTable,
    advertised: Mapping[str, Iterable[CryptoAddress]],
    thresholds: CustodialThresholds = CustodialThresholds(),
    change_heuristic: bool = False,
) -> ChainStage:
    """Cluster addresses, mark custodial clusters and pick out the scam set:
    every non-custodial cluster holding an advertised address."""
    clusters = attach_labels(build_clusters(txs), labels)
    clusters = apply_change_heuristic(txs, clusters, enabled=change_heuristic)
    kept, removed = filter_custodial(clusters, labels, thresholds, txs, prices)
    merged = sorted(kept + removed, key=lambda c: c.cluster_id)
    index = cluster_index(merged)
    kept_ids = {c.cluster_id for c in kept}
    used = {index[a] for addrs in advertised.values() for a in addrs if a in index}
    return ChainStage(merged, index, sorted(used & kept_ids), sorted(c.cluster_id for c in removed))


def type_labels(domains: Sequence[str], labels: Sequence[int]) -> dict[str, str]:
    """domain -> type name for clustered (non-noise) sites."""
    return {d: f"type-{l}" for d, l in zip(domains, labels) if l != NOISE}


def campaign_domains(domains: Sequence[str], labels: Sequence[int], top_types: int) -> list[str]:
    """Sites belonging to the ``top_types`` largest type clusters; 0 keeps
    every site, noise included."""
    if top_types <= 0:
        return sorted(set(domains))
    sizes = Counter(l for l in labels if l != NOISE)
    keep = {cid for cid, _ in sorted(sizes.items(), key=lambda kv: (-kv[1], kv[0]))[:top_types]}
    return sorted({d for d, l in zip(domains, labels) if l in keep})


def campaign_inputs(
    domains: Sequence[str],
    snapshots: Iterable[WebsiteSnapshot],
    registrations: Mapping[str, RegistrationRecord],
) -> list[CampaignInput]:
    """One record per domain; analytics IDs are pooled over a domain's
    snapshots and the IP comes from its latest snapshot."""
    ga: dict[str, set[str]] = {}
    latest: dict[str, WebsiteSnapshot] = {}
    for s in snapshots:
        ga.setdefault(s.domain, set()).update(s.analytics_ids)
        if s.domain not in latest or s.snapshot_time >= latest[s.domain].snapshot_time:
            latest[s.domain] = s
    out = []
    for d in domains:
        snap = latest.get(d)
        out.append((d, registrations.get(d), sorted(ga.get(d, ())), snap.ip if snap else None))
    return out
