import random
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from scamtrace.addresses import Chain, CryptoAddress, b58check_encode
from scamtrace.chain import (
    BlockchainCluster,
    ChainTransaction,
    CustodialThresholds,
    EntityCategory,
    EntityLabel,
    PriceTable,
    apply_change_heuristic,
    build_clusters,
    cluster_size_stats,
    filter_custodial,
    load_labels,
    load_prices,
    load_transactions,
    to_usd,
    write_labels,
    write_prices,
    write_transactions,
)
from scamtrace.errors import EmptyInput, MalformedRecord, MissingPrice, ValidationError

import oracles

T0 = datetime(2019, 1, 1, tzinfo=timezone.utc)
POOL = [CryptoAddress(Chain.BITCOIN, b58check_encode(0, bytes([i % 256, i // 256]) * 10)) for i in range(400)]
ETH = [CryptoAddress(Chain.ETHEREUM, "0x" + f"{i:040x}") for i in range(20)]
A, B, C, D, F, P = POOL[:6]


def btx(i, ins, outs, t=None, coinbase=False):
    return ChainTransaction(
        f"t{i}",
        Chain.BITCOIN,
        t or T0 + timedelta(hours=i),
        tuple((a, 10) for a in ins),
        tuple((a, 10) for a in outs),
        coinbase,
    )


def partition(clusters):
    return {cl.addresses for cl in clusters}


class TestTransactionModel:
    def test_negative(self):
        with pytest.raises(ValidationError):
            ChainTransaction("x", Chain.BITCOIN, T0, ((A, -1),), ((B, 1),))

    def test_eth_one_to_one(self):
        with pytest.raises(ValidationError):
            ChainTransaction("x", Chain.ETHEREUM, T0, ((ETH[0], 1),), ((ETH[1], 1), (ETH[2], 1)))

    def test_coinbase_has_no_inputs(self):
        with pytest.raises(ValidationError):
            ChainTransaction("x", Chain.BITCOIN, T0, ((A, 1),), ((B, 1),), coinbase=True)
        assert btx(0, [], [A], coinbase=True).input_total == 0


class TestBuildClusters:
    def test_transitive(self):
        cl = build_clusters([btx(0, [A, B], [D]), btx(1, [B, C], [D])])
        assert frozenset({A, B, C}) in partition(cl)

    def test_disjoint(self):
        cl = build_clusters([btx(0, [A], [D]), btx(1, [B], [D])])
        assert partition(cl) == {frozenset({A}), frozenset({B}), frozenset({D})}

    def test_ethereum_singletons(self):
        txs = [ChainTransaction(f"e{i}", Chain.ETHEREUM, T0, ((ETH[0], 1),), ((ETH[i], 1),)) for i in range(1, 4)]
        assert all(c.size == 1 for c in build_clusters(txs))

    def test_ids_by_smallest_member(self):
        cl = build_clusters([btx(0, [POOL[9], POOL[3]], [POOL[7]])])
        mins = [min(c.addresses) for c in cl]
        assert mins == sorted(mins)
        assert [c.cluster_id for c in cl] == list(range(len(cl)))

    def test_coinbase_outputs_not_merged(self):
        cl = build_clusters([btx(0, [], [A, B], coinbase=True)])
        assert len(cl) == 2

    @pytest.mark.parametrize("seed", range(5))
    def test_hundred_random_vs_closure(self, seed):
        rng = random.Random(seed)
        txs = [btx(i, rng.sample(POOL[:150], rng.randint(1, 4)), rng.sample(POOL[:150], 2)) for i in range(100)]
        universe = {a for tx in txs for a, _ in tx.inputs + tx.outputs}
        expect = oracles.closure_partition([[a for a, _ in tx.inputs] for tx in txs], universe)
        assert partition(build_clusters(txs)) == expect

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32), st.randoms())
    def test_partition_and_input_order_invariance(self, seed, rnd):
        rng = random.Random(seed)
        txs = [btx(i, rng.sample(POOL[:60], rng.randint(1, 3)), rng.sample(POOL[:60], 1)) for i in range(30)]
        cl = build_clusters(txs)
        seen = [a for c in cl for a in c.addresses]
        assert len(seen) == len(set(seen))
        assert set(seen) == {a for tx in txs for a, _ in tx.inputs + tx.outputs}
        shuffled = []
        for tx in txs:
            ins = list(tx.inputs)
            rnd.shuffle(ins)
            shuffled.append(ChainTransaction(tx.tx_id, tx.chain, tx.timestamp, tuple(ins), tx.outputs))
        rnd.shuffle(shuffled)
        assert build_clusters(shuffled) == cl


class TestChangeHeuristic:
    def base(self):
        # P seen before; the spend from A pays fresh F and seen P
        return [btx(0, [C], [P]), btx(1, [A], [F, P])]

    def test_disabled_identity(self):
        txs = self.base()
        cl = build_clusters(txs)
        assert apply_change_heuristic(txs, cl) == cl

    def test_fresh_output_merged(self):
        txs = self.base()
        out = apply_change_heuristic(txs, build_clusters(txs), enabled=True)
        assert frozenset({A, F}) in partition(out)

    def test_two_fresh_no_merge(self):
        txs = [btx(0, [A], [F, D])]
        cl = build_clusters(txs)
        assert partition(apply_change_heuristic(txs, cl, enabled=True)) == partition(cl)

    def test_later_reuse_disqualifies(self):
        txs = self.base() + [btx(2, [B], [F])]
        cl = build_clusters(txs)
        assert partition(apply_change_heuristic(txs, cl, enabled=True)) == partition(cl)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32))
    def test_never_splits(self, seed):
        rng = random.Random(seed)
        txs = [btx(i, rng.sample(POOL[:40], rng.randint(1, 2)), rng.sample(POOL[:80], 2)) for i in range(25)]
        cl = build_clusters(txs)
        merged = apply_change_heuristic(txs, cl, enabled=True)
        for c in cl:
            assert any(c.addresses <= m.addresses for m in merged)


class TestCustodial:
    def test_labelled_removed(self):
        cl = build_clusters([btx(0, [A, B], [C])])
        labels = {A: EntityLabel("Ex", EntityCategory.FIAT_EXCHANGE, "US")}
        kept, removed = filter_custodial(cl, labels)
        assert [c.addresses for c in removed] == [frozenset({A, B})]
        assert removed[0].custodial and removed[0].entity.name == "Ex"
        assert all(not c.custodial for c in kept)

    def test_small_kept(self):
        txs = [btx(0, [A, B, C], [D])]
        prices = PriceTable({(Chain.BITCOIN, T0.date()): 1000})
        kept, removed = filter_custodial(build_clusters(txs), {}, CustodialThresholds(), txs, prices)
        assert removed == [] and len(kept) == 2

    def test_size_threshold(self):
        big = BlockchainCluster(0, frozenset(CryptoAddress(Chain.ETHEREUM, f"0x{i:040x}") for i in range(10_001)))
        ok = BlockchainCluster(1, frozenset(POOL[:10]))
        kept, removed = filter_custodial([big, ok], {})
        assert removed[0].cluster_id == 0 and kept[0].cluster_id == 1

    def test_received_threshold(self):
        txs = [ChainTransaction("big", Chain.BITCOIN, T0, ((A, 10**8),), ((B, 10**8),))]
        prices = PriceTable({(Chain.BITCOIN, T0.date()): 200})
        kept, removed = filter_custodial(build_clusters(txs), {}, CustodialThresholds(10, 150), txs, prices)
        assert [c.addresses for c in removed] == [frozenset({B})]

    def test_thresholds_positive(self):
        with pytest.raises(ValidationError):
            CustodialThresholds(0, 1)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32))
    def test_split_is_partition(self, seed):
        rng = random.Random(seed)
        txs = [btx(i, rng.sample(POOL[:50], rng.randint(1, 3)), rng.sample(POOL[:50], 1)) for i in range(20)]
        cats = list(EntityCategory)
        labels = {a: EntityLabel("x", rng.choice(cats)) for a in rng.sample(POOL[:50], 8)}
        cl = build_clusters(txs)
        kept, removed = filter_custodial(cl, labels, CustodialThresholds(max_addresses=5))
        ids = [c.cluster_id for c in kept + removed]
        assert sorted(ids) == [c.cluster_id for c in cl]
        for c in kept:
            assert c.size <= 5
            for a in c.addresses:
                assert a not in labels or labels[a].category not in {
                    EntityCategory.FIAT_EXCHANGE,
                    EntityCategory.CRYPTO_EXCHANGE,
                    EntityCategory.DECENTRALISED_EXCHANGE,
                    EntityCategory.WALLET_SERVICE,
                    EntityCategory.GAMBLING,
                    EntityCategory.MIXER,
                    EntityCategory.PAYMENT_SERVICE_PROVIDER,
                }


def sized(sizes):
    return [BlockchainCluster(i, frozenset(f"a{i}-{j}" for j in range(s))) for i, s in enumerate(sizes)]


class TestSizeStats:
    def test_four(self):
        assert cluster_size_stats(sized([1, 2, 3, 4]))[0] == 2

    def test_ones(self):
        assert cluster_size_stats(sized([1] * 7)) == (1, 1, 1)

    def test_hundred(self):
        assert cluster_size_stats(sized(list(range(1, 101)))) == (50, 75, 90)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            cluster_size_stats([])


class TestUsd:
    def test_two_eth(self):
        prices = PriceTable({(Chain.ETHEREUM, date(2019, 1, 1)): 150})
        assert to_usd(2 * 10**18, Chain.ETHEREUM, date(2019, 1, 1), prices) == Decimal(300)

    def test_zero(self):
        assert to_usd(0, Chain.BITCOIN, date(2000, 1, 1), PriceTable()) == 0

    def test_lookback(self):
        prices = PriceTable({(Chain.BITCOIN, date(2019, 1, 1)): 4000})
        assert to_usd(10**8, Chain.BITCOIN, date(2019, 1, 8), prices) == 4000
        with pytest.raises(MissingPrice):
            to_usd(10**8, Chain.BITCOIN, date(2019, 1, 11), prices)
        with pytest.raises(MissingPrice):
            to_usd(10**8, Chain.BITCOIN, date(2018, 12, 31), prices)

    def test_nonpositive_price(self):
        with pytest.raises(ValidationError):
            PriceTable({(Chain.BITCOIN, date(2019, 1, 1)): 0})


def test_file_roundtrips(tmp_path):
    txs = [btx(0, [A, B], [C]), ChainTransaction("e", Chain.ETHEREUM, T0, ((ETH[1], 5),), ((ETH[2], 5),)), btx(1, [], [D], coinbase=True)]
    write_transactions(tmp_path / "t.jsonl", txs)
    assert load_transactions(tmp_path / "t.jsonl") == txs
    labels = {A: EntityLabel("Ex", EntityCategory.CRYPTO_EXCHANGE, "GB"), ETH[1]: EntityLabel("S", EntityCategory.SCAM)}
    write_labels(tmp_path / "l.csv", labels)
    assert load_labels(tmp_path / "l.csv") == labels
    prices = PriceTable({(Chain.BITCOIN, date(2019, 1, 1)): "3800.5", (Chain.ETHEREUM, date(2019, 1, 2)): 140})
    write_prices(tmp_path / "p.csv", prices)
    assert list(load_prices(tmp_path / "p.csv").items()) == list(prices.items())


def test_label_category_display_names(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text(f"address,name,category,country\n{A.canonical},Ex,Fiat-Accepting Exchange,us\n")
    assert load_labels(p)[A] == EntityLabel("Ex", EntityCategory.FIAT_EXCHANGE, "US")
    p.write_text(f"address,name,category,country\n{A.canonical},Ex,Bank,us\n")
    with pytest.raises(MalformedRecord):
        load_labels(p)


def test_bad_tx_record(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text('{"tx_id": "x", "chain": "Bitcoin", "timestamp": "2019-01-01T00:00:00Z", "inputs": [{"address": "nope", "value": 1}], "outputs": []}\n')
    with pytest.raises(MalformedRecord):
        load_transactions(p)
