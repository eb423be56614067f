"""Source- and destination-of-funds tracing with pro-rata (haircut) splitting.

Value arriving at a scam cluster is walked backwards: a transaction's value
is shared across its inputs in proportion to their amounts, and the value
held at an unlabelled address is shared across all earlier receipts of that
address. The walk stops at a labelled cluster, at another scam cluster, at
a coinbase (miner), or, once the hop cap or dust floor is hit, in the
unattributed bucket. Destinations mirror this going forwards.

Every branch is valued in USD at the date of the transaction that moved the
funds into (or out of) the scam, so per-cluster totals are conserved.
"""

from __future__ import annotations

import csv
import enum
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .addresses import CryptoAddress
from .chain import (
    EXCHANGE_CATEGORIES,
    BlockchainCluster,
    ChainTransaction,
    EntityCategory,
    EntityLabel,
    PriceTable,
    cluster_entity,
    cluster_index,
    to_usd,
)
from .corpus import UNKNOWN
from .errors import ValidationError


class Direction(str, enum.Enum):
    SOURCE = "Source"
    DESTINATION = "Destination"


@dataclass(frozen=True)
class TraceParams:
    max_hops: int = 20
    dust_threshold_usd: float = 0.01

    def __post_init__(self):
        if self.max_hops < 1:
            raise ValidationError("max_hops must be >= 1")
        if self.dust_threshold_usd < 0:
            raise ValidationError("dust_threshold_usd must be >= 0")


@dataclass(frozen=True)
class FlowRow:
    scam_cluster: int
    category: EntityCategory
    country: str
    usd: float


@dataclass
class FlowAttribution:
    direction: Direction
    rows: list[FlowRow]
    unattributed_usd: float
    totals: dict[int, float] = field(default_factory=dict)
    unattributed_by_cluster: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class TableRow:
    key: str
    usd: float
    percent: float


class _Graph:
    """Time-ordered transaction graph with per-address receipt/spend indexes."""

    def __init__(
        self,
        clusters: Sequence[BlockchainCluster],
        txs: Sequence[ChainTransaction],
        labels: Mapping[CryptoAddress, EntityLabel],
    ):
        order = sorted(range(len(txs)), key=lambda i: (txs[i].timestamp, i))
        self.txs = [txs[i] for i in order]
        self.where = cluster_index(clusters)
        self.entity = {
            cl.cluster_id: cl.entity or cluster_entity(cl, labels) for cl in clusters
        }
        self.members = {cl.cluster_id: cl.addresses for cl in clusters}
        self.receipts: dict[CryptoAddress, list[tuple[int, int]]] = defaultdict(list)
        self.spends: dict[CryptoAddress, list[tuple[int, int]]] = defaultdict(list)
        for pos, tx in enumerate(self.txs):
            for index, legs in ((self.receipts, tx.outputs), (self.spends, tx.inputs)):
                per_addr: dict[CryptoAddress, int] = {}
                for addr, value in legs:
                    per_addr[addr] = per_addr.get(addr, 0) + value
                for addr, value in per_addr.items():
                    index[addr].append((pos, value))


class _Walker:
    """Level-by-level haircut walk for one scam flow.

    Weights are fractions of the flow being traced. Branches that reach the
    same transaction (or the same address at the same position) on the same
    hop are merged, which keeps the work bounded by hops x graph size; on a
    tree nothing merges and the result is the plain path-product sum.
    """

    def __init__(self, graph: _Graph, target: int, scam_ids: set[int], params: TraceParams, usd: float):
        self.g = graph
        self.target = target
        self.scam_ids = scam_ids
        self.params = params
        self.usd = usd
        self.found: dict[tuple[EntityCategory, str], float] = defaultdict(float)
        self.unattributed = 0.0

    def _terminal(self, addr: CryptoAddress) -> tuple[EntityCategory, str] | None:
        cid = self.g.where.get(addr)
        if cid is None or cid == self.target:
            return None
        ent = self.g.entity.get(cid)
        country = (ent.country if ent else None) or UNKNOWN
        if cid in self.scam_ids:
            return EntityCategory.SCAM, country
        if ent is not None:
            return ent.category, country
        return None

    def _settle(self, addr: CryptoAddress, w: float, hop: int) -> bool:
        """Handle terminals and the hop/dust cut; True when the branch ends here."""
        term = self._terminal(addr)
        if term is not None:
            self.found[term] += w
            return True
        if hop >= self.params.max_hops or w * self.usd < self.params.dust_threshold_usd:
            self.unattributed += w
            return True
        return False

    def backward(self, pos: int) -> None:
        txs: dict[int, float] = {pos: 1.0}
        hop = 1
        while txs:
            addrs: dict[tuple[CryptoAddress, int], float] = defaultdict(float)
            for p, w in txs.items():
                tx = self.g.txs[p]
                if tx.coinbase:
                    self.found[(EntityCategory.MINER, UNKNOWN)] += w
                    continue
                total = tx.input_total
                if total == 0:
                    self.unattributed += w
                    continue
                for addr, value in tx.inputs:
                    if value:
                        addrs[(addr, p)] += w * value / total
            nxt: dict[int, float] = defaultdict(float)
            for (addr, p), w in addrs.items():
                if self._settle(addr, w, hop):
                    continue
                prior = [(q, v) for q, v in self.g.receipts.get(addr, ()) if q < p and v > 0]
                total = sum(v for _, v in prior)
                if not total:
                    self.unattributed += w
                    continue
                for q, v in prior:
                    nxt[q] += w * v / total
            txs = nxt
            hop += 1

    def forward(self, pos: int, legs: Sequence[tuple[CryptoAddress, int]]) -> None:
        value = sum(v for _, v in legs)
        addrs: dict[tuple[CryptoAddress, int], float] = defaultdict(float)
        for addr, v in legs:
            addrs[(addr, pos)] += v / value
        hop = 1
        while addrs:
            txs: dict[int, float] = defaultdict(float)
            for (addr, p), w in addrs.items():
                if self._settle(addr, w, hop):
                    continue
                later = [(q, v) for q, v in self.g.spends.get(addr, ()) if q > p and v > 0]
                total = sum(v for _, v in later)
                if not total:
                    self.unattributed += w
                    continue
                for q, v in later:
                    txs[q] += w * v / total
            addrs = defaultdict(float)
            for p, w in txs.items():
                tx = self.g.txs[p]
                total = tx.output_total
                if total == 0:
                    self.unattributed += w
                    continue
                for addr, v in tx.outputs:
                    if v:
                        addrs[(addr, p)] += w * v / total
            hop += 1


def _scam_ids(scam_clusters: Iterable[BlockchainCluster | int]) -> list[int]:
    return sorted({c.cluster_id if isinstance(c, BlockchainCluster) else int(c) for c in scam_clusters})


def _trace(direction, scam_clusters, clusters, txs, labels, prices, params) -> FlowAttribution:
    params = params or TraceParams()
    graph = _Graph(clusters, txs, labels)
    ids = _scam_ids(scam_clusters)
    scam_set = set(ids)
    rows: list[FlowRow] = []
    totals: dict[int, float] = {}
    unattributed: dict[int, float] = {}
    for cid in ids:
        own = graph.members.get(cid, frozenset())
        per_key: dict[tuple[EntityCategory, str], float] = defaultdict(float)
        total_usd = lost_usd = 0.0
        index = graph.receipts if direction is Direction.SOURCE else graph.spends
        positions = sorted({p for a in own for p, _ in index.get(a, ())})
        for pos in positions:
            tx = graph.txs[pos]
            ins = [a for a, _ in tx.inputs if a in own]
            if direction is Direction.SOURCE:
                if ins:
                    continue
                value = sum(v for a, v in tx.outputs if a in own)
            else:
                legs = [(a, v) for a, v in tx.outputs if a not in own and v > 0]
                value = sum(v for _, v in legs)
            if value <= 0:
                continue
            usd = float(to_usd(value, tx.chain, tx.timestamp, prices))
            walker = _Walker(graph, cid, scam_set, params, usd)
            if direction is Direction.SOURCE:
                walker.backward(pos)
            else:
                walker.forward(pos, legs)
            for key, w in walker.found.items():
                per_key[key] += w * usd
            total_usd += usd
            lost_usd += walker.unattributed * usd
        if total_usd == 0:
            continue
        totals[cid] = total_usd
        unattributed[cid] = lost_usd
        for (cat, country), usd in sorted(per_key.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
            if usd > 0:
                rows.append(FlowRow(cid, cat, country, usd))
    return FlowAttribution(direction, rows, sum(unattributed.values()), totals, unattributed)


def trace_sources(scam_clusters, clusters, txs, labels, prices, params: TraceParams | None = None) -> FlowAttribution:
    return _trace(Direction.SOURCE, scam_clusters, clusters, txs, labels, prices, params)


def trace_destinations(scam_clusters, clusters, txs, labels, prices, params: TraceParams | None = None) -> FlowAttribution:
    return _trace(Direction.DESTINATION, scam_clusters, clusters, txs, labels, prices, params)


# -- aggregation ------------------------------------------------------------


def _percent_rows(amounts: Mapping[str, float]) -> list[TableRow]:
    """Rows sorted by USD descending; percents use largest-remainder rounding
    to two decimals so that they sum to exactly 100."""
    total = sum(amounts.values())
    if total <= 0:
        return []
    keys = sorted(amounts, key=lambda k: (-amounts[k], k))
    exact = {k: amounts[k] * 10000 / total for k in keys}
    floors = {k: int(exact[k]) for k in keys}
    short = 10000 - sum(floors.values())
    for k in sorted(keys, key=lambda k: (-(exact[k] - floors[k]), k))[:short]:
        floors[k] += 1
    return [TableRow(k, amounts[k], floors[k] / 100) for k in keys]


def category_table(attr: FlowAttribution) -> list[TableRow]:
    """USD and share per category; unattributed value is counted as Other."""
    sums: dict[str, float] = defaultdict(float)
    for row in attr.rows:
        sums[row.category.display_name] += row.usd
    if attr.unattributed_usd > 0:
        sums[EntityCategory.OTHER.display_name] += attr.unattributed_usd
    return _percent_rows(sums)


def country_table(attr: FlowAttribution) -> list[TableRow]:
    """Exchange flows only, aggregated by the exchange's registered country."""
    sums: dict[str, float] = defaultdict(float)
    for row in attr.rows:
        if row.category in EXCHANGE_CATEGORIES:
            sums[row.country or UNKNOWN] += row.usd
    return _percent_rows(sums)


def detect_scam_to_scam(source_attr: FlowAttribution) -> list[tuple[int, float]]:
    if source_attr.direction is not Direction.SOURCE:
        raise ValidationError("scam-to-scam detection needs a source attribution")
    sums: dict[int, float] = defaultdict(float)
    for row in source_attr.rows:
        if row.category is EntityCategory.SCAM:
            sums[row.scam_cluster] += row.usd
    return sorted(sums.items(), key=lambda kv: (-kv[1], kv[0]))


# -- export -----------------------------------------------------------------


def write_attribution_csv(path: str | Path, attributions: Iterable[FlowAttribution]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["direction", "scam_cluster", "category", "country", "usd"])
        for attr in attributions:
            for row in attr.rows:
                w.writerow([attr.direction.value, row.scam_cluster, row.category.value, row.country, f"{row.usd:.2f}"])
            for cid, usd in sorted(attr.unattributed_by_cluster.items()):
                if usd > 0:
                    w.writerow([attr.direction.value, cid, "Unattributed", UNKNOWN, f"{usd:.2f}"])


def table_json(rows: Sequence[TableRow]) -> list[dict]:
    return [{"key": r.key, "usd": round(r.usd, 2), "percent": r.percent} for r in rows]


def attribution_summary(attr: FlowAttribution) -> dict:
    return {
        "direction": attr.direction.value,
        "total_usd": round(sum(attr.totals.values()), 2),
        "unattributed_usd": round(attr.unattributed_usd, 2),
        "scam_clusters": len(attr.totals),
        "categories": table_json(category_table(attr)),
        "exchange_countries": table_json(country_table(attr)),
    }
