from datetime import date
from pathlib import Path

import pytest

from scamtrace.config import RunConfig, build_run_config, read_config_file
from scamtrace.errors import InvalidConfig
from scamtrace.synth import SynthConfig


def test_reads_flat_key_values(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# header\n\nmin_pts = 7\n  out=  /tmp/x  \nsynth.token-noise = 0.1\n")
    assert read_config_file(p) == {"min_pts": "7", "out": "/tmp/x", "synth.token_noise": "0.1"}


@pytest.mark.parametrize("line", ["just words", "= 3"])
def test_malformed_lines_are_rejected(tmp_path, line):
    p = tmp_path / "c.cfg"
    p.write_text(f"{line}\n")
    with pytest.raises(InvalidConfig, match=":1:"):
        read_config_file(p)


def test_defaults():
    cfg = build_run_config({})
    assert cfg.min_pts == 5 and cfg.threads == 1 and not cfg.change_heuristic
    assert cfg.trace.max_hops == 20 and cfg.trace.dust_threshold_usd == 0.01
    assert cfg.custodial.max_addresses == 10_000 and cfg.custodial.max_received_usd == 100_000_000
    assert cfg.eps_types is None and cfg.eps_campaigns is None
    assert cfg.synth == SynthConfig()


def test_every_field_converts():
    cfg = build_run_config(
        {
            "out": "o",
            "snapshots": "s.jsonl",
            "min_pts": "4",
            "eps": "0.3",
            "eps_campaigns": "1.5",
            "threads": "3",
            "seed": "9",
            "change_heuristic": "yes",
            "max_hops": "6",
            "dust_threshold_usd": "0.5",
            "custodial_max_addresses": "50",
            "custodial_max_usd": "1e6",
            "campaign_top_types": "2",
            "pivot_min_group": "3",
            "trend_keywords": "ETH, ether",
            "trend_start": "2018-06-01",
            "trend_end": "2018-12-31",
            "synth.sites_per_campaign": "6-9",
            "synth.victims_per_site": "2",
            "synth.cashout_mix": "Mixer:1, Fiat-Accepting Exchange:3",
            "synth.start": "2019-01-01",
            "synth.token_noise": "0.05",
        }
    )
    assert cfg.out == Path("o") and cfg.inputs == {"snapshots": Path("s.jsonl")}
    assert (cfg.min_pts, cfg.threads, cfg.change_heuristic) == (4, 3, True)
    # eps_campaigns sorts after eps, so the per-study value wins
    assert (cfg.eps_types, cfg.eps_campaigns) == (0.3, 1.5)
    assert (cfg.trace.max_hops, cfg.trace.dust_threshold_usd) == (6, 0.5)
    assert (cfg.custodial.max_addresses, cfg.custodial.max_received_usd) == (50, 1e6)
    assert (cfg.campaign_top_types, cfg.pivot_min_group) == (2, 3)
    assert cfg.trend_keywords == ("eth", "ether")
    assert (cfg.trend_start, cfg.trend_end) == (date(2018, 6, 1), date(2018, 12, 31))
    s = cfg.synth
    assert s.seed == 9 and s.sites_per_campaign == (6, 9) and s.victims_per_site == (2, 2)
    assert s.cashout_mix == {"Mixer": 1.0, "FiatExchange": 3.0}
    assert s.start == date(2019, 1, 1) and s.token_noise == 0.05


@pytest.mark.parametrize(
    "values",
    [
        {"bogus": "1"},
        {"synth.bogus": "1"},
        {"min_pts": "0"},
        {"min_pts": "five"},
        {"threads": "0"},
        {"eps": "0"},
        {"eps": "nan"},
        {"eps_types": "-2"},
        {"change_heuristic": "maybe"},
        {"max_hops": "0"},
        {"dust_threshold_usd": "-1"},
        {"custodial_max_addresses": "0"},
        {"pivot_min_group": "1"},
        {"trend_start": "June"},
        {"out": ""},
        {"labels": ""},
        {"synth.cashout_mix": "Mixer"},
        {"synth.cashout_mix": "Casino:1"},
        {"synth.token_noise": "2"},
        {"seed": "-1"},
    ],
)
def test_bad_values_are_rejected(values):
    with pytest.raises(InvalidConfig):
        build_run_config(values)


def test_none_values_are_ignored():
    assert build_run_config({"min_pts": None}).min_pts == RunConfig().min_pts
