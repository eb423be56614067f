"""Minimal client for a URLScan-compatible search API.

Network use is opt-in: nothing in the pipeline calls this unless asked,
and tests drive it through an ``httpx.MockTransport``.
"""

from __future__ import annotations

import logging
from html.parser import HTMLParser
from typing import Any

import httpx

log = logging.getLogger(__name__)


class _TextExtractor(HTMLParser):
    _SKIP = {"script", "style", "noscript"}

    def __init__(self) -> None:
        super().__init__()
        self.parts: list[str] = []
        self._depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in self._SKIP:
            self._depth += 1

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._depth:
            self._depth -= 1

    def handle_data(self, data):
        if not self._depth and data.strip():
            self.parts.append(data.strip())


def visible_text(html: str) -> str:
    parser = _TextExtractor()
    parser.feed(html)
    return " ".join(parser.parts)


class URLScanClient:
    def __init__(self, base_url: str, api_key: str | None = None, client: httpx.Client | None = None):
        headers = {"API-Key": api_key} if api_key else {}
        self._client = client or httpx.Client(base_url=base_url, headers=headers, timeout=30.0)

    def search(self, domain: str) -> list[dict[str, Any]]:
        resp = self._client.get("/search", params={"q": f"domain:{domain}"})
        resp.raise_for_status()
        return list(resp.json().get("results", []))

    def snapshot_record(self, domain: str, hit: dict[str, Any]) -> dict[str, Any]:
        """Turn one search hit into a record in the snapshot JSONL schema."""
        page = hit.get("page", {})
        task = hit.get("task", {})
        record: dict[str, Any] = {"domain": domain, "snapshot_time": task.get("time")}
        if page.get("ip"):
            record["ip"] = page["ip"]
        if page.get("country"):
            record["server_country"] = page["country"]

        resp = self._client.get(hit["result"])
        resp.raise_for_status()
        if "json" in resp.headers.get("content-type", ""):
            body = resp.json()
            html = body.get("html") or ""
            text = body.get("text")
            if body.get("resource_urls"):
                record["resource_urls"] = list(body["resource_urls"])
        else:
            html, text = resp.text, None
        record["raw_html"] = html
        record["page_text"] = text if text is not None else visible_text(html)
        return record

    def fetch(self, domain: str) -> list[dict[str, Any]]:
        records = []
        for hit in self.search(domain):
            try:
                records.append(self.snapshot_record(domain, hit))
            except (httpx.HTTPError, KeyError) as exc:
                log.warning("skipping hit for %s: %s", domain, exc)
        return records

    def close(self) -> None:
        self._client.close()
