"""Transactions, ownership clusters, custodial filtering and USD pricing.

Native amounts are integers: satoshi for Bitcoin, wei for Ether.
"""

from __future__ import annotations

import bisect
import csv
import enum
import json
import logging
import math
from dataclasses import dataclass, replace
from datetime import date, datetime
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .addresses import Chain, CryptoAddress, parse_address
from .corpus import UNKNOWN, format_timestamp, iter_jsonl, parse_timestamp
from .errors import EmptyInput, MalformedRecord, MissingPrice, ValidationError

log = logging.getLogger(__name__)

DECIMALS = {Chain.BITCOIN: 8, Chain.ETHEREUM: 18}
PRICE_LOOKBACK_DAYS = 7


class EntityCategory(str, enum.Enum):
    FIAT_EXCHANGE = "FiatExchange"
    CRYPTO_EXCHANGE = "CryptoExchange"
    DECENTRALISED_EXCHANGE = "DecentralisedExchange"
    SCAM = "Scam"
    PHISHING = "Phishing"
    MINER = "Miner"
    WALLET_SERVICE = "WalletService"
    PAYMENT_SERVICE_PROVIDER = "PaymentServiceProvider"
    GAMBLING = "Gambling"
    PONZI_SCHEME = "PonziScheme"
    DARK_MARKET = "DarkMarket"
    MIXER = "Mixer"
    OTHER = "Other"

    @property
    def display_name(self) -> str:
        return _DISPLAY[self]

    @classmethod
    def parse(cls, value: str) -> "EntityCategory":
        key = value.strip()
        for cat in cls:
            if key in (cat.value, cat.name, _DISPLAY[cat]):
                return cat
        raise ValueError(f"unknown entity category {value!r}")


_DISPLAY = {
    EntityCategory.FIAT_EXCHANGE: "Fiat-Accepting Exchange",
    EntityCategory.CRYPTO_EXCHANGE: "Cryptocurrency Exchange",
    EntityCategory.DECENTRALISED_EXCHANGE: "Decentralised Exchange",
    EntityCategory.SCAM: "Scam",
    EntityCategory.PHISHING: "Phishing",
    EntityCategory.MINER: "Miner",
    EntityCategory.WALLET_SERVICE: "Wallet Service",
    EntityCategory.PAYMENT_SERVICE_PROVIDER: "Payment Service Provider",
    EntityCategory.GAMBLING: "Gambling",
    EntityCategory.PONZI_SCHEME: "Ponzi Scheme",
    EntityCategory.DARK_MARKET: "Dark Market",
    EntityCategory.MIXER: "Mixer",
    EntityCategory.OTHER: "Other",
}

EXCHANGE_CATEGORIES = frozenset(
    {
        EntityCategory.FIAT_EXCHANGE,
        EntityCategory.CRYPTO_EXCHANGE,
        EntityCategory.DECENTRALISED_EXCHANGE,
    }
)
CUSTODIAL_CATEGORIES = EXCHANGE_CATEGORIES | {
    EntityCategory.WALLET_SERVICE,
    EntityCategory.GAMBLING,
    EntityCategory.MIXER,
    EntityCategory.PAYMENT_SERVICE_PROVIDER,
}


@dataclass(frozen=True)
class EntityLabel:
    name: str
    category: EntityCategory
    country: str | None = None


@dataclass(frozen=True)
class ChainTransaction:
    tx_id: str
    chain: Chain
    timestamp: datetime
    inputs: tuple[tuple[CryptoAddress, int], ...]
    outputs: tuple[tuple[CryptoAddress, int], ...]
    coinbase: bool = False

    def __post_init__(self):
        for _, value in self.inputs + self.outputs:
            if value < 0:
                raise ValidationError(f"{self.tx_id}: negative value")
        if self.coinbase:
            if self.inputs:
                raise ValidationError(f"{self.tx_id}: coinbase transaction with inputs")
        elif self.chain is Chain.BITCOIN and not self.inputs:
            raise ValidationError(f"{self.tx_id}: non-coinbase transaction without inputs")
        elif self.chain is Chain.ETHEREUM and (len(self.inputs) != 1 or len(self.outputs) != 1):
            raise ValidationError(f"{self.tx_id}: Ethereum transfers are 1-in/1-out")

    @property
    def input_total(self) -> int:
        return sum(v for _, v in self.inputs)

    @property
    def output_total(self) -> int:
        return sum(v for _, v in self.outputs)


@dataclass(frozen=True)
class BlockchainCluster:
    cluster_id: int
    addresses: frozenset[CryptoAddress]
    custodial: bool = False
    entity: EntityLabel | None = None

    @property
    def size(self) -> int:
        return len(self.addresses)


# -- prices -----------------------------------------------------------------


class PriceTable:
    """USD price per native coin, keyed by (chain, day)."""

    def __init__(self, prices: Mapping[tuple[Chain, date], Decimal | float | str] = ()):
        self._by_chain: dict[Chain, dict[date, Decimal]] = {}
        self._days: dict[Chain, list[date]] = {}
        for (chain, day), usd in dict(prices).items():
            self.set(chain, day, usd)

    def set(self, chain: Chain | str, day: date, usd) -> None:
        price = Decimal(str(usd))
        if price <= 0:
            raise ValidationError(f"non-positive price for {chain} on {day}")
        self._by_chain.setdefault(Chain(chain), {})[day] = price
        self._days.pop(Chain(chain), None)

    def items(self):
        for chain in sorted(self._by_chain):
            for day in sorted(self._by_chain[chain]):
                yield (chain, day), self._by_chain[chain][day]

    def lookup(self, chain: Chain, day: date) -> Decimal:
        table = self._by_chain.get(chain, {})
        if day in table:
            return table[day]
        days = self._days.get(chain)
        if days is None:
            days = self._days[chain] = sorted(table)
        i = bisect.bisect_right(days, day)
        if i and (day - days[i - 1]).days <= PRICE_LOOKBACK_DAYS:
            return table[days[i - 1]]
        raise MissingPrice(f"no {chain.value} price within {PRICE_LOOKBACK_DAYS} days before {day}")


def to_usd(value: int, chain: Chain, day: date | datetime, prices: PriceTable) -> Decimal:
    if value < 0:
        raise ValidationError("value must be non-negative")
    if isinstance(day, datetime):
        day = day.date()
    if value == 0:
        return Decimal(0)
    return Decimal(value) * prices.lookup(chain, day) / (Decimal(10) ** DECIMALS[chain])


# -- clustering -------------------------------------------------------------


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def add(self, x):
        self.parent.setdefault(x, x)

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra

    def groups(self) -> list[frozenset]:
        out: dict = {}
        for x in self.parent:
            out.setdefault(self.find(x), set()).add(x)
        return [frozenset(g) for g in out.values()]


def _number_clusters(groups: Iterable[frozenset[CryptoAddress]]) -> list[BlockchainCluster]:
    ordered = sorted(groups, key=min)
    return [BlockchainCluster(i, g) for i, g in enumerate(ordered)]


def build_clusters(txs: Iterable[ChainTransaction]) -> list[BlockchainCluster]:
    """Common-spend clustering: all inputs of a Bitcoin transaction share an owner."""
    uf = _UnionFind()
    for tx in txs:
        for addr, _ in tx.inputs + tx.outputs:
            uf.add(addr)
        if tx.chain is Chain.BITCOIN and not tx.coinbase and tx.inputs:
            first = tx.inputs[0][0]
            for addr, _ in tx.inputs[1:]:
                uf.union(first, addr)
    return _number_clusters(uf.groups())


def _time_order(txs: Sequence[ChainTransaction]) -> list[ChainTransaction]:
    return [tx for _, tx in sorted(enumerate(txs), key=lambda p: (p[1].timestamp, p[0]))]


def apply_change_heuristic(
    txs: Sequence[ChainTransaction],
    clusters: Sequence[BlockchainCluster],
    enabled: bool = False,
) -> list[BlockchainCluster]:
    """Merge a transaction's single one-time-use output into its input cluster.

    An output qualifies when its address first appears in this transaction
    and never receives again later. Transactions with zero or several
    qualifying outputs are left alone.
    """
    if not enabled:
        return list(clusters)
    ordered = _time_order(txs)
    first_seen: dict[CryptoAddress, int] = {}
    last_output: dict[CryptoAddress, int] = {}
    for pos, tx in enumerate(ordered):
        for addr, _ in tx.inputs + tx.outputs:
            first_seen.setdefault(addr, pos)
        for addr, _ in tx.outputs:
            last_output[addr] = pos

    uf = _UnionFind()
    for cl in clusters:
        members = sorted(cl.addresses)
        for addr in members:
            uf.add(addr)
        for addr in members[1:]:
            uf.union(members[0], addr)
    for pos, tx in enumerate(ordered):
        if tx.chain is not Chain.BITCOIN or tx.coinbase or len(tx.outputs) < 2:
            continue
        outs = {addr for addr, _ in tx.outputs}
        fresh = [a for a in outs if first_seen[a] == pos and last_output[a] == pos]
        if len(fresh) == 1:
            uf.add(fresh[0])
            uf.union(tx.inputs[0][0], fresh[0])
    entities = {a: cl.entity for cl in clusters if cl.entity for a in cl.addresses}
    merged = _number_clusters(uf.groups())
    out = []
    for cl in merged:
        ent = next((entities[a] for a in sorted(cl.addresses) if a in entities), None)
        out.append(replace(cl, entity=ent))
    return out


def cluster_index(clusters: Iterable[BlockchainCluster]) -> dict[CryptoAddress, int]:
    return {addr: cl.cluster_id for cl in clusters for addr in cl.addresses}


def cluster_entity(cluster: BlockchainCluster, labels: Mapping[CryptoAddress, EntityLabel]) -> EntityLabel | None:
    """Label of the smallest labelled member, if any."""
    for addr in sorted(cluster.addresses):
        if addr in labels:
            return labels[addr]
    return None


def attach_labels(
    clusters: Iterable[BlockchainCluster], labels: Mapping[CryptoAddress, EntityLabel]
) -> list[BlockchainCluster]:
    return [replace(cl, entity=cluster_entity(cl, labels)) for cl in clusters]


def received_usd(
    clusters: Sequence[BlockchainCluster], txs: Iterable[ChainTransaction], prices: PriceTable
) -> dict[int, Decimal]:
    """USD received by each cluster from outside itself."""
    where = cluster_index(clusters)
    totals = {cl.cluster_id: Decimal(0) for cl in clusters}
    for tx in txs:
        senders = {where.get(a) for a, _ in tx.inputs}
        per_cluster: dict[int, int] = {}
        for addr, value in tx.outputs:
            cid = where.get(addr)
            if cid is not None and cid not in senders:
                per_cluster[cid] = per_cluster.get(cid, 0) + value
        for cid, value in per_cluster.items():
            totals[cid] += to_usd(value, tx.chain, tx.timestamp, prices)
    return totals


@dataclass(frozen=True)
class CustodialThresholds:
    max_addresses: int = 10_000
    max_received_usd: float = 100_000_000

    def __post_init__(self):
        if self.max_addresses <= 0 or self.max_received_usd <= 0:
            raise ValidationError("custodial thresholds must be positive")


def filter_custodial(
    clusters: Sequence[BlockchainCluster],
    labels: Mapping[CryptoAddress, EntityLabel],
    thresholds: CustodialThresholds = CustodialThresholds(),
    txs: Sequence[ChainTransaction] = (),
    prices: PriceTable | None = None,
) -> tuple[list[BlockchainCluster], list[BlockchainCluster]]:
    """Split clusters into (kept, removed).

    A cluster is removed when any member carries a custodial-category
    label, when it has more than ``max_addresses`` members, or when it
    received more than ``max_received_usd``. Removed clusters come back with
    ``custodial=True``; both halves carry their entity label.
    """
    received = received_usd(clusters, txs, prices) if prices is not None else {}
    limit = Decimal(str(thresholds.max_received_usd))
    kept, removed = [], []
    for cl in clusters:
        custodial_label = any(
            labels[a].category in CUSTODIAL_CATEGORIES for a in cl.addresses if a in labels
        )
        too_big = cl.size > thresholds.max_addresses
        too_rich = received.get(cl.cluster_id, Decimal(0)) > limit
        ent = cluster_entity(cl, labels)
        if custodial_label or too_big or too_rich:
            removed.append(replace(cl, custodial=True, entity=ent))
        else:
            kept.append(replace(cl, custodial=False, entity=ent))
    return kept, removed


def cluster_size_stats(clusters: Sequence[BlockchainCluster]) -> tuple[int, int, int]:
    """Nearest-rank p50, p75 and p90 of cluster sizes."""
    if not clusters:
        raise EmptyInput("no clusters")
    sizes = sorted(cl.size for cl in clusters)

    def rank(p: int) -> int:
        return sizes[max(1, math.ceil(p * len(sizes) / 100)) - 1]

    return rank(50), rank(75), rank(90)


# -- file formats -----------------------------------------------------------


def _parse_legs(raw, chain: Chain, tx_id: str) -> tuple[tuple[CryptoAddress, int], ...]:
    if not isinstance(raw, list):
        raise MalformedRecord(f"{tx_id}: inputs/outputs must be arrays")
    legs = []
    for leg in raw:
        try:
            addr = parse_address(str(leg["address"]), chain)
            value = int(leg["value"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"{tx_id}: bad leg {leg!r} ({exc})") from exc
        legs.append((addr, value))
    return tuple(legs)


def parse_transaction(rec: Mapping) -> ChainTransaction:
    try:
        tx_id = str(rec["tx_id"])
        chain = Chain(rec["chain"])
        ts = parse_timestamp(rec["timestamp"])
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedRecord(f"bad transaction record ({exc})") from exc
    return ChainTransaction(
        tx_id=tx_id,
        chain=chain,
        timestamp=ts,
        inputs=_parse_legs(rec.get("inputs", []), chain, tx_id),
        outputs=_parse_legs(rec.get("outputs", []), chain, tx_id),
        coinbase=bool(rec.get("coinbase", False)),
    )


def transaction_record(tx: ChainTransaction) -> dict:
    return {
        "tx_id": tx.tx_id,
        "chain": tx.chain.value,
        "timestamp": format_timestamp(tx.timestamp),
        "coinbase": tx.coinbase,
        "inputs": [{"address": a.canonical, "value": v} for a, v in tx.inputs],
        "outputs": [{"address": a.canonical, "value": v} for a, v in tx.outputs],
    }


def load_transactions(path: str | Path) -> list[ChainTransaction]:
    out = []
    for lineno, rec in iter_jsonl(path):
        try:
            out.append(parse_transaction(rec))
        except ValidationError as exc:
            raise MalformedRecord(f"{path}:{lineno}: {exc}") from exc
    return out


def write_transactions(path: str | Path, txs: Iterable[ChainTransaction]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tx in txs:
            fh.write(json.dumps(transaction_record(tx), sort_keys=True) + "\n")


def load_labels(path: str | Path) -> dict[CryptoAddress, EntityLabel]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), 2):
            try:
                addr = parse_address(row["address"])
                cat = EntityCategory.parse(row["category"])
            except (KeyError, ValueError) as exc:
                raise MalformedRecord(f"{path}:{lineno}: {exc}") from exc
            country = (row.get("country") or "").strip().upper() or None
            out[addr] = EntityLabel(row.get("name", "").strip(), cat, country)
    return out


def write_labels(path: str | Path, labels: Mapping[CryptoAddress, EntityLabel]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["address", "name", "category", "country"])
        for addr in sorted(labels):
            lab = labels[addr]
            w.writerow([addr.canonical, lab.name, lab.category.value, lab.country or ""])


def load_prices(path: str | Path) -> PriceTable:
    table = PriceTable()
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), 2):
            try:
                table.set(Chain(row["chain"]), date.fromisoformat(row["date"]), row["usd"])
            except (KeyError, ValueError, ArithmeticError) as exc:
                raise MalformedRecord(f"{path}:{lineno}: {exc}") from exc
    return table


def write_prices(path: str | Path, prices: PriceTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "date", "usd"])
        for (chain, day), usd in prices.items():
            w.writerow([chain.value, day.isoformat(), str(usd)])


def entity_country(label: EntityLabel | None) -> str:
    return (label.country if label else None) or UNKNOWN
