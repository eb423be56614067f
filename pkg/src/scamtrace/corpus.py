"""Snapshot and registration ingestion, identifier extraction, hotlink pivoting."""

from __future__ import annotations

import csv
import ipaddress
import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping
from urllib.parse import urlsplit

from .addresses import CryptoAddress, extract_addresses
from .errors import InvalidEmail, MalformedIp, MalformedRecord

log = logging.getLogger(__name__)

UNKNOWN = "Unknown"

_GA_ID = re.compile(r"UA-\d+-\d+", re.IGNORECASE)


@dataclass(frozen=True)
class WebsiteSnapshot:
    domain: str
    snapshot_time: datetime
    page_text: str
    raw_html: str | None = None
    ip: str | None = None
    server_country: str | None = None
    resource_urls: frozenset[str] = frozenset()
    analytics_ids: frozenset[str] = frozenset()
    addresses: frozenset[CryptoAddress] = frozenset()
    type_label: str | None = None

    def to_record(self) -> dict[str, Any]:
        """JSON-ready dict; extracted identifiers are written out sorted."""
        rec: dict[str, Any] = {
            "domain": self.domain,
            "snapshot_time": format_timestamp(self.snapshot_time),
            "page_text": self.page_text,
        }
        for key in ("raw_html", "ip", "server_country", "type_label"):
            value = getattr(self, key)
            if value is not None:
                rec[key] = value
        rec["resource_urls"] = sorted(self.resource_urls)
        rec["analytics_ids"] = sorted(self.analytics_ids)
        rec["addresses"] = [
            {"chain": a.chain.value, "address": a.canonical} for a in sorted(self.addresses)
        ]
        return rec


@dataclass(frozen=True)
class RegistrationRecord:
    domain: str
    registration_date: date | None = None
    registrant_email_account: str | None = None
    registrant_email_provider: str | None = None
    registrant_country: str | None = None
    registrar: str | None = None


def normalize_domain(value: str) -> str:
    value = value.strip().lower()
    if "://" in value:
        value = urlsplit(value).hostname or ""
    return value.split("/", 1)[0].rstrip(".")


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _optional_str(record: Mapping[str, Any], key: str) -> str | None:
    value = record.get(key)
    if value is None:
        return None
    value = str(value).strip()
    return value or None


def extract_analytics_ids(html: str) -> set[str]:
    return {m.group().upper() for m in _GA_ID.finditer(html or "")}


def parse_snapshot(record: Mapping[str, Any]) -> WebsiteSnapshot:
    if not isinstance(record, Mapping):
        raise MalformedRecord("snapshot record must be a JSON object")
    for key in ("domain", "page_text"):
        if not isinstance(record.get(key), str):
            raise MalformedRecord(f"snapshot record missing {key!r}")
    domain = normalize_domain(record["domain"])
    if not domain:
        raise MalformedRecord("snapshot record has an empty domain")
    raw_ts = record.get("snapshot_time")
    if not isinstance(raw_ts, str):
        raise MalformedRecord(f"{domain}: missing snapshot_time")
    try:
        ts = parse_timestamp(raw_ts)
    except ValueError as exc:
        raise MalformedRecord(f"{domain}: unparseable snapshot_time {raw_ts!r}") from exc

    raw_html = record.get("raw_html")
    if raw_html is not None and not isinstance(raw_html, str):
        raise MalformedRecord(f"{domain}: raw_html must be a string")

    urls = record.get("resource_urls") or []
    if not isinstance(urls, list):
        raise MalformedRecord(f"{domain}: resource_urls must be an array")
    resources = set()
    for url in urls:
        if isinstance(url, str) and urlsplit(url.strip()).hostname:
            resources.add(url.strip())
        else:
            log.debug("%s: dropping non-absolute resource %r", domain, url)

    page_text = record["page_text"]
    country = _optional_str(record, "server_country")
    return WebsiteSnapshot(
        domain=domain,
        snapshot_time=ts,
        page_text=page_text,
        raw_html=raw_html,
        ip=_optional_str(record, "ip"),
        server_country=country.upper() if country else None,
        resource_urls=frozenset(resources),
        analytics_ids=frozenset(extract_analytics_ids(raw_html or "")),
        addresses=frozenset(extract_addresses(page_text + "\n" + (raw_html or ""))),
        type_label=_optional_str(record, "type_label"),
    )


def decompose_email(email: str) -> tuple[str, str]:
    account, sep, provider = email.strip().rpartition("@")
    if not sep or not account or not provider:
        raise InvalidEmail(f"cannot split {email!r} into account and provider")
    return account.lower(), provider.lower()


def _host(url: str) -> str:
    return (urlsplit(url).hostname or "").lower()


def shared_resource_pivot(
    snapshots: Iterable[WebsiteSnapshot], min_group: int = 2
) -> dict[str, set[str]]:
    """Map each hotlinked resource URL to the domains embedding it.

    Only resources served from a host other than the embedding page's own
    domain count, and only those shared by at least ``min_group`` domains
    are returned.
    """
    if min_group < 2:
        raise ValueError("min_group must be at least 2")
    groups: dict[str, set[str]] = defaultdict(set)
    for snap in snapshots:
        own = snap.domain.lower()
        for url in snap.resource_urls:
            if _host(url) != own:
                groups[url].add(snap.domain)
    return {url: doms for url, doms in sorted(groups.items()) if len(doms) >= min_group}


def geolocate(ip: str, table: Mapping[str, str]) -> str:
    """Country of the longest CIDR prefix in ``table`` containing ``ip``."""
    try:
        addr = ipaddress.ip_address(ip.strip())
    except ValueError as exc:
        raise MalformedIp(f"not an IP address: {ip!r}") from exc
    best_len, best = -1, UNKNOWN
    for cidr, country in table.items():
        net = ipaddress.ip_network(cidr, strict=False)
        if net.version == addr.version and addr in net and net.prefixlen > best_len:
            best_len, best = net.prefixlen, country
    return best


# -- file loaders -----------------------------------------------------------


def iter_jsonl(path: str | Path) -> Iterable[tuple[int, Any]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc


def load_snapshots(path: str | Path) -> list[WebsiteSnapshot]:
    out = []
    for lineno, rec in iter_jsonl(path):
        try:
            out.append(parse_snapshot(rec))
        except MalformedRecord as exc:
            raise MalformedRecord(f"{path}:{lineno}: {exc}") from exc
    return out


def parse_registration_row(row: Mapping[str, str]) -> RegistrationRecord:
    domain = normalize_domain(row.get("domain") or "")
    if not domain:
        raise MalformedRecord("registration row without a domain")
    reg_date = None
    raw_date = (row.get("registration_date") or "").strip()
    if raw_date:
        try:
            reg_date = date.fromisoformat(raw_date[:10])
        except ValueError as exc:
            raise MalformedRecord(f"{domain}: bad registration_date {raw_date!r}") from exc
    account = provider = None
    raw_email = (row.get("registrant_email") or "").strip()
    if raw_email:
        try:
            account, provider = decompose_email(raw_email)
        except InvalidEmail:
            log.warning("%s: ignoring unusable registrant email %r", domain, raw_email)
    country = (row.get("registrant_country") or "").strip().upper() or None
    registrar = (row.get("registrar") or "").strip() or None
    return RegistrationRecord(domain, reg_date, account, provider, country, registrar)


def load_registrations(path: str | Path) -> dict[str, RegistrationRecord]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = parse_registration_row(row)
            out[rec.domain] = rec
    return out


def load_geo_table(path: str | Path) -> dict[str, str]:
    table = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cidr = row["cidr"].strip()
            try:
                ipaddress.ip_network(cidr, strict=False)
            except ValueError as exc:
                raise MalformedRecord(f"{path}: bad CIDR {cidr!r}") from exc
            table[cidr] = row["country"].strip().upper()
    return table


def write_snapshots(path: str | Path, snapshots: Iterable[WebsiteSnapshot]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in snapshots:
            fh.write(json.dumps(s.to_record(), sort_keys=True) + "\n")


REGISTRATION_COLUMNS = ("domain", "registration_date", "registrant_email", "registrant_country", "registrar")


def write_registrations(path: str | Path, records: Iterable[RegistrationRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REGISTRATION_COLUMNS)
        for r in records:
            email = ""
            if r.registrant_email_account and r.registrant_email_provider:
                email = f"{r.registrant_email_account}@{r.registrant_email_provider}"
            w.writerow(
                [
                    r.domain,
                    r.registration_date.isoformat() if r.registration_date else "",
                    email,
                    r.registrant_country or "",
                    r.registrar or "",
                ]
            )


def write_geo_table(path: str | Path, table: Mapping[str, str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cidr", "country"])
        for cidr in sorted(table):
            w.writerow([cidr, table[cidr]])
