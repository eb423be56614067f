"""Synthetic scam ecosystems with planted ground truth.

One seeded generator produces websites (grouped into types by page template
and into campaigns by shared registration/hosting details), the blockchain
activity around them, entity labels and a daily price table. Owners run one
or more campaigns and sweep every campaign address they hold in a single
common-spend transaction, so the blockchain clusters mirror ownership.
"""

from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from decimal import Decimal
from pathlib import Path
from typing import Mapping, Sequence

from .addresses import Chain, CryptoAddress, b58check_encode
from .chain import (
    ChainTransaction,
    EntityCategory,
    EntityLabel,
    PriceTable,
    write_labels,
    write_prices,
    write_transactions,
)
from .clusterer import NOISE, ClusterAssignment, adjusted_rand_index, pairwise_f1
from .corpus import (
    RegistrationRecord,
    WebsiteSnapshot,
    format_timestamp,
    parse_snapshot,
    write_geo_table,
    write_registrations,
    write_snapshots,
)
from .errors import InvalidConfig, LengthMismatch

__all__ = [
    "TYPE_NAMES",
    "TxRole",
    "SynthConfig",
    "GroundTruth",
    "Ecosystem",
    "Evaluation",
    "generate_ecosystem",
    "evaluate",
    "write_ecosystem",
    "load_truth",
]

# Type names follow the variants catalogued for the giveaway/phishing ecosystem.
TYPE_NAMES = (
    "Celebrity/Exchange Giveaway (Advance-Fee)",
    "MyEtherWallet Clone with pop-up (Phishing)",
    "Exchange Giveaway - Blog Post (Advance-Fee)",
    "IDEX Clone (Phishing)",
    "Celebrity Giveaway - Blog Post (Advance-Fee)",
    "Coinbase Clone (Phishing)",
    "Exchange Giveaway - Bespoke Format (Advance-Fee)",
    "MyEtherWallet Clone without pop-up (Phishing)",
    "Celebrity/Exchange Giveaway w/ Instructions (Advance-Fee)",
    "MyEtherWallet - Unclear Format (Phishing)",
)

DEFAULT_CASHOUT_MIX = {
    "FiatExchange": 0.55,
    "Gambling": 0.13,
    "CryptoExchange": 0.12,
    "Mixer": 0.08,
    "PaymentServiceProvider": 0.07,
    "DarkMarket": 0.05,
}

SOURCE_EXCHANGES = (
    ("Northgate Exchange", EntityCategory.FIAT_EXCHANGE, "US", 0.55),
    ("Hanriver Exchange", EntityCategory.FIAT_EXCHANGE, "KR", 0.25),
    ("Baltic Coin Market", EntityCategory.CRYPTO_EXCHANGE, "FI", 0.15),
    ("Swapline", EntityCategory.DECENTRALISED_EXCHANGE, None, 0.05),
)

EMAIL_PROVIDERS = ("mailbox.example", "postmail.example", "inbox.example")
COUNTRIES = ("RU", "MD", "US", "NL", "UA", "PA")
TEMPLATE_WORDS = 48
OUTLIER_WORDS = 40
SATOSHI = 10**8
WEI = 10**18


class TxRole(str, enum.Enum):
    VICTIM_PAYMENT = "VictimPayment"
    SEED_TRANSFER = "SeedTransfer"
    CASHOUT = "Cashout"
    BACKGROUND = "Background"


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 20180601
    n_types: int = 4
    n_campaigns: int = 6
    sites_per_campaign: tuple[int, int] = (8, 12)
    token_noise: float = 0.0
    outlier_sites: int = 8
    victims_per_site: tuple[int, int] = (1, 4)
    cashout_mix: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_CASHOUT_MIX))
    scam_to_scam_fraction: float = 0.1
    n_owners: int = 4
    multi_type_campaigns: int = 2
    lag_mean_days: float = 6.0
    start: date = date(2018, 6, 1)

    def validate(self) -> None:
        def bad(msg: str):
            raise InvalidConfig(msg)

        if not 0 <= self.seed < 2**64:
            bad("seed must be a 64-bit unsigned integer")
        if self.n_types < 1:
            bad("n_types must be >= 1")
        if self.n_campaigns < self.n_types:
            bad("n_campaigns must be >= n_types so every type has a campaign")
        lo, hi = self.sites_per_campaign
        if lo < 1 or hi < lo:
            bad("sites_per_campaign must be a range with 1 <= lo <= hi")
        vlo, vhi = self.victims_per_site
        if vlo < 0 or vhi < vlo:
            bad("victims_per_site must be a range with 0 <= lo <= hi")
        for name in ("token_noise", "scam_to_scam_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                bad(f"{name} must be in [0, 1]")
        if self.outlier_sites < 0:
            bad("outlier_sites must be >= 0")
        if not 1 <= self.n_owners <= self.n_campaigns:
            bad("n_owners must be between 1 and n_campaigns")
        if self.scam_to_scam_fraction > 0 and self.n_owners < 2:
            bad("seed transfers come from another owner's site; need n_owners >= 2")
        if not 0 <= self.multi_type_campaigns <= self.n_campaigns:
            bad("multi_type_campaigns must be between 0 and n_campaigns")
        if self.lag_mean_days < 0:
            bad("lag_mean_days must be >= 0")
        if not self.cashout_mix:
            bad("cashout_mix is empty")
        for key, w in self.cashout_mix.items():
            try:
                EntityCategory.parse(key)
            except ValueError as exc:
                raise InvalidConfig(str(exc)) from exc
            if w < 0:
                bad("cashout_mix weights must be nonnegative")
        if sum(self.cashout_mix.values()) <= 0:
            bad("cashout_mix weights must sum to a positive value")


@dataclass
class GroundTruth:
    type_names: list[str]
    site_type: dict[str, int]
    site_campaign: dict[str, int]
    campaign_owner: dict[int, str]
    address_owner: dict[str, str]
    tx_role: dict[str, str]

    def to_json(self) -> dict:
        d = asdict(self)
        d["campaign_owner"] = {str(k): v for k, v in sorted(self.campaign_owner.items())}
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "GroundTruth":
        return cls(
            type_names=list(d["type_names"]),
            site_type=dict(d["site_type"]),
            site_campaign=dict(d["site_campaign"]),
            campaign_owner={int(k): v for k, v in d["campaign_owner"].items()},
            address_owner=dict(d["address_owner"]),
            tx_role=dict(d["tx_role"]),
        )


@dataclass
class Ecosystem:
    snapshots: list[WebsiteSnapshot]
    registrations: list[RegistrationRecord]
    txs: list[ChainTransaction]
    labels: dict[CryptoAddress, EntityLabel]
    prices: PriceTable
    geo: dict[str, str]
    truth: GroundTruth


# -- building blocks ----------------------------------------------------------

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


class _Words:
    """Pseudo-words, each handed out once, so vocabularies never collide."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def take(self, syllables: int = 3) -> str:
        while True:
            w = "".join(self.rng.choice(_CONSONANTS) + self.rng.choice(_VOWELS) for _ in range(syllables))
            if w not in self.used:
                self.used.add(w)
                return w

    def reserve(self, words) -> None:
        self.used.update(words)


def _description_words(name: str) -> list[str]:
    return [w for w in "".join(c.lower() if c.isalpha() else " " for c in name).split() if len(w) > 2]


def _btc_address(rng: random.Random) -> CryptoAddress:
    return CryptoAddress(Chain.BITCOIN, b58check_encode(0, rng.randbytes(20)))


def _eth_address(rng: random.Random) -> CryptoAddress:
    return CryptoAddress(Chain.ETHEREUM, "0x" + rng.randbytes(20).hex())


def _geometric(rng: random.Random, mean: float) -> int:
    """Failures before the first success, with the given mean (support 0, 1, ...)."""
    if mean <= 0:
        return 0
    p = 1.0 / (1.0 + mean)
    u = rng.random()
    return int(math.floor(math.log(1.0 - u) / math.log(1.0 - p)))


def _midnight(day: date) -> datetime:
    return datetime.combine(day, time(0), tzinfo=timezone.utc)


def _is_eth_type(type_id: int) -> bool:
    return type_id % 2 == 1


@dataclass
class _Site:
    domain: str
    type_id: int
    campaign: int
    owner: str
    registered: date
    btc: CryptoAddress
    eth: CryptoAddress | None
    ip: str
    ga: str | None


class _Builder:
    def __init__(self, config: SynthConfig):
        self.cfg = config
        self.rng = random.Random(config.seed)
        self.words = _Words(self.rng)
        self.txs: list[tuple[datetime, int, ChainTransaction, TxRole]] = []
        self.labels: dict[CryptoAddress, EntityLabel] = {}
        self.owner_of: dict[CryptoAddress, str] = {}

    # transactions get ids after a final time sort
    def add_tx(self, ts, inputs, outputs, role: TxRole, chain=Chain.BITCOIN, coinbase=False):
        tx = ChainTransaction("", chain, ts, tuple(inputs), tuple(outputs), coinbase)
        self.txs.append((ts, len(self.txs), tx, role))

    def entity(self, name, category, country, n_btc=3) -> tuple[list[CryptoAddress], CryptoAddress]:
        lab = EntityLabel(name, category, country)
        btc = [_btc_address(self.rng) for _ in range(n_btc)]
        eth = _eth_address(self.rng)
        for a in btc + [eth]:
            self.labels[a] = lab
            self.owner_of[a] = f"entity:{name}"
        return btc, eth

    def build(self) -> Ecosystem:
        cfg, rng = self.cfg, self.rng
        type_names = [TYPE_NAMES[t % len(TYPE_NAMES)] + (f" #{t // len(TYPE_NAMES) + 1}" if t >= len(TYPE_NAMES) else "")
                      for t in range(cfg.n_types)]
        common = ["send", "btc", "eth", "participate"]
        self.words.reserve(common)
        for name in type_names:
            self.words.reserve(_description_words(name))
        templates = []
        for t, name in enumerate(type_names):
            body = _description_words(name) + [self.words.take() for _ in range(TEMPLATE_WORDS)]
            templates.append(body)

        # labelled entities
        sources = []
        for name, cat, country, weight in SOURCE_EXCHANGES:
            btc, eth = self.entity(name, cat, country)
            sources.append((btc, eth, weight))
        mix = sorted((EntityCategory.parse(k), w) for k, w in cfg.cashout_mix.items() if w > 0)
        sinks = {}
        for cat, _ in mix:
            country = rng.choice(["US", "FI", "KR", "SC"]) if cat.value.endswith("Exchange") else None
            sinks[cat] = self.entity(f"{cat.display_name} {rng.randint(100, 999)}", cat, country, n_btc=2)

        # owners and campaigns
        owners = [f"owner-{i}" for i in range(cfg.n_owners)]
        campaign_owner = [owners[i % cfg.n_owners] for i in range(cfg.n_campaigns)]
        rng.shuffle(campaign_owner)
        multi = set(range(cfg.n_campaigns - cfg.multi_type_campaigns, cfg.n_campaigns)) if cfg.n_types > 1 else set()

        sites: list[_Site] = []
        geo: dict[str, str] = {}
        registrations: list[RegistrationRecord] = []
        for c in range(cfg.n_campaigns):
            owner = campaign_owner[c]
            registrar = f"{self.words.take(2).title()} Registrar"
            account = self.words.take() + str(rng.randint(10, 99))
            provider = rng.choice(EMAIL_PROVIDERS)
            country = rng.choice(COUNTRIES)
            # one shared host per campaign; a second IP would split the campaign
            # once analytics IDs are also missing
            ip = f"10.{c + 1}.0.{rng.randint(2, 250)}"
            geo[f"10.{c + 1}.0.0/24"] = rng.choice(COUNTRIES)
            ga = f"UA-{rng.randint(10**6, 10**7 - 1)}-1"
            first_day = cfg.start + timedelta(days=rng.randint(0, 60))
            primary = c % cfg.n_types
            kinds = [primary] * rng.randint(*cfg.sites_per_campaign)
            if c in multi:
                kinds += [(primary + 1) % cfg.n_types] * 2
            for t in kinds:
                prefix = "eth" if _is_eth_type(t) else "btc"
                domain = f"{prefix}-{self.words.take(2)}{len(sites)}.example"
                reg_day = first_day + timedelta(days=rng.randint(0, 30))
                btc = _btc_address(rng)
                self.owner_of[btc] = owner
                eth = None
                if _is_eth_type(t):
                    eth = _eth_address(rng)
                    self.owner_of[eth] = owner
                site = _Site(
                    domain, t, c, owner, reg_day, btc, eth,
                    ip, ga if rng.random() < 0.5 else None,
                )
                sites.append(site)
                registrations.append(RegistrationRecord(domain, reg_day, account, provider, country, registrar))

        outliers: list[_Site] = []
        for i in range(cfg.outlier_sites):
            domain = f"{self.words.take(2)}-{self.words.take(2)}{i}.example"
            reg_day = cfg.start + timedelta(days=rng.randint(0, 90))
            btc = _btc_address(rng)
            self.owner_of[btc] = f"solo-{i}"
            outliers.append(_Site(domain, NOISE, NOISE, f"solo-{i}", reg_day, btc, None, f"172.16.{i // 250}.{i % 250 + 1}", None))
            registrations.append(
                RegistrationRecord(
                    domain, reg_day, self.words.take(), f"{self.words.take(2)}.example",
                    rng.choice(COUNTRIES), f"{self.words.take(2).title()} Domains {i}",
                )
            )

        # pages
        snapshots = []
        for s in sites + outliers:
            snapshots.append(self.page(s, templates))

        # money
        self.background(sources)
        self.victims(sites + outliers, sources)
        self.seeds(sites)
        self.sweeps(sites + outliers, mix, sinks)

        ordered = sorted(self.txs, key=lambda x: (x[0], x[1]))
        txs, roles = [], {}
        for i, (_, _, tx, role) in enumerate(ordered):
            tx_id = f"tx{i:06d}"
            txs.append(ChainTransaction(tx_id, tx.chain, tx.timestamp, tx.inputs, tx.outputs, tx.coinbase))
            roles[tx_id] = role.value

        prices = self.prices(txs)
        truth = GroundTruth(
            type_names=type_names,
            site_type={s.domain: s.type_id for s in sites + outliers},
            site_campaign={s.domain: s.campaign for s in sites + outliers},
            campaign_owner=dict(enumerate(campaign_owner)),
            address_owner={a.canonical: o for a, o in sorted(self.owner_of.items())},
            tx_role=roles,
        )
        return Ecosystem(snapshots, registrations, txs, dict(sorted(self.labels.items())), prices, geo, truth)

    def page(self, s: _Site, templates) -> WebsiteSnapshot:
        rng = self.rng
        if s.type_id == NOISE:
            tokens = [self.words.take() for _ in range(OUTLIER_WORDS)]
            coin, resources = "", []
        else:
            tokens = [self.words.take() if rng.random() < self.cfg.token_noise else w for w in templates[s.type_id]]
            coin = "ETH" if _is_eth_type(s.type_id) else "BTC"
            resources = [f"http://img-host.example/t{s.type_id}/spinner.gif"]
        shown = s.eth if s.eth is not None else s.btc
        text = " ".join(tokens)
        if coin:
            # digits and addresses vanish in preprocessing; the words stay constant per type
            text += f"\nSend {rng.randint(1, 50) / 10} {coin} to {shown.canonical}\nParticipate 0{rng.randint(1, 9)}:{rng.randint(10, 59)}"
        else:
            text += f"\n{shown.canonical}"
        extra = f"<p>{s.btc.canonical}</p>" if s.eth is not None else ""
        ga = f"<script>ga('create','{s.ga}','auto');</script>" if s.ga else ""
        imgs = "".join(f'<img src="{u}">' for u in resources)
        html = f"<html><head>{ga}</head><body>{imgs}<p>{text}</p>{extra}</body></html>"
        ts = _midnight(s.registered) + timedelta(days=rng.randint(1, 10), seconds=rng.randint(0, 86399))
        record = {
            "domain": s.domain,
            "snapshot_time": format_timestamp(ts),
            "page_text": text,
            "raw_html": html,
            "ip": s.ip,
            "resource_urls": resources,
        }
        return parse_snapshot(record)

    def background(self, sources) -> None:
        t = _midnight(self.cfg.start - timedelta(days=2))
        for btc, _, _ in sources:
            for a in btc:
                self.add_tx(t, [], [(a, 50 * SATOSHI)], TxRole.BACKGROUND, coinbase=True)

    def victims(self, sites: Sequence[_Site], sources) -> None:
        rng, cfg = self.rng, self.cfg
        weights = [w for _, _, w in sources]
        for s in sites:
            for _ in range(rng.randint(*cfg.victims_per_site)):
                lag = _geometric(rng, cfg.lag_mean_days)
                ts = _midnight(s.registered) + timedelta(days=lag, seconds=rng.randint(0, 86399))
                btc, eth, _ = rng.choices(sources, weights)[0]
                if s.eth is not None and rng.random() < 0.5:
                    v = rng.randint(1, 100) * WEI // 10
                    self.add_tx(ts, [(eth, v)], [(s.eth, v)], TxRole.VICTIM_PAYMENT, Chain.ETHEREUM)
                else:
                    src = rng.choice(btc)
                    v = rng.randint(1, 200) * SATOSHI // 100
                    change = rng.randint(1, 500) * SATOSHI // 100
                    self.add_tx(ts, [(src, v + change)], [(s.btc, v), (src, change)], TxRole.VICTIM_PAYMENT)

    def seeds(self, sites: Sequence[_Site]) -> None:
        rng = self.rng
        k = round(self.cfg.scam_to_scam_fraction * len(sites))
        for s in sorted(rng.sample(sites, k), key=lambda x: x.domain):
            siblings = [o for o in sites if o.owner != s.owner]
            sib = rng.choice(siblings)
            ts = _midnight(s.registered) + timedelta(seconds=rng.randint(0, 86399))
            v = rng.randint(1, 20) * SATOSHI // 100
            self.add_tx(ts, [(sib.btc, v)], [(s.btc, v)], TxRole.SEED_TRANSFER)

    def sweeps(self, sites: Sequence[_Site], mix, sinks) -> None:
        rng = self.rng
        received: dict[CryptoAddress, int] = {}
        last: dict[CryptoAddress, datetime] = {}
        for ts, _, tx, _ in self.txs:
            for a, v in tx.outputs:
                received[a] = received.get(a, 0) + v
                last[a] = max(last.get(a, ts), ts)
        total_w = sum(w for _, w in mix)

        by_owner: dict[str, list[CryptoAddress]] = {}
        for s in sites:
            by_owner.setdefault(s.owner, []).append(s.btc)
        for owner in sorted(by_owner):
            pool = sorted(by_owner[owner])
            when = max((last.get(a) for a in pool if a in last), default=None)
            if when is None:
                continue
            hub = _btc_address(rng)
            self.owner_of[hub] = owner
            legs = [(a, received.get(a, 0)) for a in pool]
            total = sum(v for _, v in legs)
            sweep_t = when + timedelta(days=1)
            self.add_tx(sweep_t, legs, [(hub, total)], TxRole.CASHOUT)
            outs = self._split(total, mix, total_w, lambda cat: rng.choice(sinks[cat][0]))
            self.add_tx(sweep_t + timedelta(hours=1), [(hub, total)], outs, TxRole.CASHOUT)

        # Ethereum has no common spend: each site address cashes out on its own
        for eth in sorted(s.eth for s in sites if s.eth is not None):
            if eth not in received:
                continue
            total = received[eth]
            t0 = last[eth] + timedelta(days=1)
            for i, (sink, v) in enumerate(self._split(total, mix, total_w, lambda cat: sinks[cat][1])):
                self.add_tx(t0 + timedelta(minutes=i), [(eth, v)], [(sink, v)], TxRole.CASHOUT, Chain.ETHEREUM)

    @staticmethod
    def _split(total, mix, total_w, pick) -> list[tuple[CryptoAddress, int]]:
        parts = [(pick(cat), int(total * w / total_w)) for cat, w in mix]
        parts[0] = (parts[0][0], parts[0][1] + total - sum(v for _, v in parts))
        merged: dict[CryptoAddress, int] = {}
        for a, v in parts:
            if v > 0:
                merged[a] = merged.get(a, 0) + v
        return sorted(merged.items())

    def prices(self, txs) -> PriceTable:
        rng = self.rng
        first = min(tx.timestamp for tx in txs).date() - timedelta(days=1)
        last = max(tx.timestamp for tx in txs).date() + timedelta(days=1)
        table = PriceTable()
        level = {Chain.BITCOIN: 6500.0, Chain.ETHEREUM: 450.0}
        day = first
        while day <= last:
            for chain in (Chain.BITCOIN, Chain.ETHEREUM):
                level[chain] *= math.exp(rng.gauss(0, 0.03))
                table.set(chain, day, Decimal(f"{level[chain]:.2f}"))
            day += timedelta(days=1)
        return table


def generate_ecosystem(config: SynthConfig | None = None) -> Ecosystem:
    config = config or SynthConfig()
    config.validate()
    return _Builder(config).build()


# -- evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class Evaluation:
    ari: float
    pairwise_f1: float
    noise_precision: float
    noise_recall: float


def evaluate(predicted: ClusterAssignment | Sequence[int], truth: Sequence[int]) -> Evaluation:
    """ARI, pairwise F1, and precision/recall of NOISE against planted outliers."""
    pred = list(predicted.labels if isinstance(predicted, ClusterAssignment) else predicted)
    truth = list(truth)
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions for {len(truth)} items")
    hit = sum(p == NOISE and t == NOISE for p, t in zip(pred, truth))
    flagged = sum(p == NOISE for p in pred)
    planted = sum(t == NOISE for t in truth)
    return Evaluation(
        ari=adjusted_rand_index(pred, truth),
        pairwise_f1=pairwise_f1(pred, truth),
        noise_precision=hit / flagged if flagged else 1.0,
        noise_recall=hit / planted if planted else 1.0,
    )


# -- files --------------------------------------------------------------------

FIXTURE_FILES = {
    "snapshots": "snapshots.jsonl",
    "registrations": "registrations.csv",
    "txs": "transactions.jsonl",
    "labels": "labels.csv",
    "prices": "prices.csv",
    "geo": "geo.csv",
    "truth": "truth.json",
}


def write_ecosystem(directory: str | Path, eco: Ecosystem) -> dict[str, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {k: d / v for k, v in FIXTURE_FILES.items()}
    write_snapshots(paths["snapshots"], eco.snapshots)
    write_registrations(paths["registrations"], eco.registrations)
    write_transactions(paths["txs"], eco.txs)
    write_labels(paths["labels"], eco.labels)
    write_prices(paths["prices"], eco.prices)
    write_geo_table(paths["geo"], eco.geo)
    paths["truth"].write_text(json.dumps(eco.truth.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def load_truth(path: str | Path) -> GroundTruth:
    return GroundTruth.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
