import httpx
import pytest

from scamtrace.corpus import parse_snapshot
from scamtrace.fetch import URLScanClient, visible_text

BTC = "1BvBMSEYstWetqTFn5Au4m4GFg7xJaNVN2"
PAGE = f"""<html><head><title>Giveaway</title><script>ga('create','UA-123456-1');</script>
<style>p {{ color: red }}</style></head><body><p>Send BTC to</p><p>{BTC}</p></body></html>"""


def handler(request: httpx.Request) -> httpx.Response:
    if request.url.path == "/search":
        assert request.url.params["q"] == "domain:give.example"
        return httpx.Response(
            200,
            json={
                "results": [
                    {"task": {"time": "2018-07-01T10:00:00Z"}, "page": {"ip": "10.0.0.1", "country": "nl"}, "result": "/result/a"},
                    {"task": {"time": "2018-07-02T10:00:00Z"}, "page": {}, "result": "/result/b"},
                    {"task": {"time": "2018-07-03T10:00:00Z"}, "page": {}, "result": "/result/missing"},
                    {"task": {"time": "2018-07-04T10:00:00Z"}, "page": {}},
                ]
            },
        )
    if request.url.path == "/result/a":
        return httpx.Response(200, text=PAGE, headers={"content-type": "text/html"})
    if request.url.path == "/result/b":
        return httpx.Response(
            200,
            json={"html": PAGE, "text": "custom text", "resource_urls": ["https://cdn.example/x.gif"]},
        )
    return httpx.Response(404)


@pytest.fixture
def client():
    http = httpx.Client(base_url="https://scan.example", transport=httpx.MockTransport(handler))
    c = URLScanClient("https://scan.example", client=http)
    yield c
    c.close()


def test_visible_text_skips_scripts_and_styles():
    assert visible_text(PAGE) == f"Giveaway Send BTC to {BTC}"


def test_fetch_builds_snapshot_records_and_skips_bad_hits(client):
    records = client.fetch("give.example")
    assert len(records) == 2
    a, b = records
    assert a["ip"] == "10.0.0.1" and a["server_country"] == "nl"
    assert a["page_text"] == visible_text(PAGE)
    assert b["page_text"] == "custom text" and b["resource_urls"] == ["https://cdn.example/x.gif"]
    snap = parse_snapshot(a)
    assert snap.server_country == "NL"
    assert snap.analytics_ids == {"UA-123456-1"}
    assert {x.canonical for x in snap.addresses} == {BTC}


def test_search_error_propagates():
    http = httpx.Client(base_url="https://scan.example", transport=httpx.MockTransport(lambda r: httpx.Response(500)))
    with pytest.raises(httpx.HTTPStatusError):
        URLScanClient("https://scan.example", client=http).search("x.example")


def test_api_key_header_is_sent():
    seen = {}

    def capture(request):
        seen["key"] = request.headers.get("API-Key")
        return httpx.Response(200, json={"results": []})

    c = URLScanClient("https://scan.example", api_key="secret")
    c._client._transport = httpx.MockTransport(capture)
    assert c.search("x.example") == []
    assert seen["key"] == "secret"
