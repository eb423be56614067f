"""Run configuration: a flat ``key = value`` file overridden by CLI flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Mapping

from .chain import CustodialThresholds, EntityCategory
from .synth import SynthConfig
from .trace import TraceParams
from .errors import InvalidConfig

INPUT_KEYS = ("snapshots", "registrations", "txs", "labels", "prices", "geo", "stop_words", "truth")


@dataclass
class RunConfig:
    out: Path = Path("scamtrace-out")
    inputs: dict[str, Path] = field(default_factory=dict)
    min_pts: int = 5
    eps_types: float | None = None
    eps_campaigns: float | None = None
    threads: int = 1
    change_heuristic: bool = False
    custodial: CustodialThresholds = field(default_factory=CustodialThresholds)
    trace: TraceParams = field(default_factory=TraceParams)
    campaign_top_types: int = 0
    pivot_min_group: int = 2
    trend_keywords: tuple[str, ...] = ("eth", "ethereum")
    trend_start: date | None = None
    trend_end: date | None = None
    synth: SynthConfig = field(default_factory=SynthConfig)


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment line."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise InvalidConfig(f"{path}:{lineno}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _int(key: str, v: str, lo: int | None = None) -> int:
    try:
        n = int(v)
    except ValueError as exc:
        raise InvalidConfig(f"{key}: not an integer: {v!r}") from exc
    if lo is not None and n < lo:
        raise InvalidConfig(f"{key}: must be >= {lo}")
    return n


def _float(key: str, v: str) -> float:
    try:
        x = float(v)
    except ValueError as exc:
        raise InvalidConfig(f"{key}: not a number: {v!r}") from exc
    if x != x or x in (float("inf"), float("-inf")):
        raise InvalidConfig(f"{key}: must be finite")
    return x


def _bool(key: str, v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InvalidConfig(f"{key}: not a boolean: {v!r}")


def _range(key: str, v: str) -> tuple[int, int]:
    lo, sep, hi = v.partition("-")
    if not sep:
        n = _int(key, v)
        return n, n
    return _int(key, lo), _int(key, hi)


def _date(key: str, v: str) -> date:
    try:
        return date.fromisoformat(v)
    except ValueError as exc:
        raise InvalidConfig(f"{key}: not an ISO date: {v!r}") from exc


def _mix(key: str, v: str) -> dict[str, float]:
    out = {}
    for part in filter(None, (p.strip() for p in v.split(","))):
        name, sep, weight = part.partition(":")
        if not sep:
            raise InvalidConfig(f"{key}: expected 'Category:weight' pairs")
        try:
            cat = EntityCategory.parse(name)
        except ValueError as exc:
            raise InvalidConfig(f"{key}: {exc}") from exc
        out[cat.value] = _float(key, weight)
    return out


_SYNTH_FIELDS = {
    "n_types": _int,
    "n_campaigns": _int,
    "sites_per_campaign": _range,
    "token_noise": _float,
    "outlier_sites": _int,
    "victims_per_site": _range,
    "cashout_mix": _mix,
    "scam_to_scam_fraction": _float,
    "n_owners": _int,
    "multi_type_campaigns": _int,
    "lag_mean_days": _float,
    "start": _date,
}


def build_run_config(values: Mapping[str, Any]) -> RunConfig:
    """Turn merged string settings (file values updated by flags) into a
    validated RunConfig. Unknown keys are rejected."""
    cfg = RunConfig()
    synth: dict[str, Any] = {}
    custodial: dict[str, Any] = {}
    trace: dict[str, Any] = {}
    for key, raw in sorted(values.items()):
        if raw is None:
            continue
        v = str(raw)
        if key in INPUT_KEYS:
            if not v:
                raise InvalidConfig(f"{key}: empty path")
            cfg.inputs[key] = Path(v)
        elif key == "out":
            if not v:
                raise InvalidConfig("out: empty path")
            cfg.out = Path(v)
        elif key == "min_pts":
            cfg.min_pts = _int(key, v, lo=1)
        elif key == "eps":
            cfg.eps_types = cfg.eps_campaigns = _float(key, v)
        elif key in ("eps_types", "eps_campaigns"):
            setattr(cfg, key, _float(key, v))
        elif key == "threads":
            cfg.threads = _int(key, v, lo=1)
        elif key == "seed":
            synth["seed"] = _int(key, v, lo=0)
        elif key in ("change_heuristic", "enable_change_heuristic"):
            cfg.change_heuristic = _bool(key, v)
        elif key == "max_hops":
            trace["max_hops"] = _int(key, v)
        elif key == "dust_threshold_usd":
            trace["dust_threshold_usd"] = _float(key, v)
        elif key == "custodial_max_addresses":
            custodial["max_addresses"] = _int(key, v)
        elif key == "custodial_max_usd":
            custodial["max_received_usd"] = _float(key, v)
        elif key == "campaign_top_types":
            cfg.campaign_top_types = _int(key, v, lo=0)
        elif key == "pivot_min_group":
            cfg.pivot_min_group = _int(key, v, lo=2)
        elif key == "trend_keywords":
            cfg.trend_keywords = tuple(k.strip().lower() for k in v.split(",") if k.strip())
        elif key in ("trend_start", "trend_end"):
            setattr(cfg, key, _date(key, v))
        elif key.startswith("synth.") and key[6:] in _SYNTH_FIELDS:
            synth[key[6:]] = _SYNTH_FIELDS[key[6:]](key, v)
        else:
            raise InvalidConfig(f"unknown configuration key {key!r}")

    for name in ("eps_types", "eps_campaigns"):
        if getattr(cfg, name) is not None and getattr(cfg, name) <= 0:
            raise InvalidConfig(f"{name} must be positive")
    try:
        cfg.custodial = CustodialThresholds(**custodial)
        cfg.trace = TraceParams(**trace)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from exc
    cfg.synth = dataclasses.replace(cfg.synth, **synth)
    cfg.synth.validate()
    return cfg
