"""Client for the BLS public data API (v2).

Requests are issued one series at a time, split into year chunks no longer
than ``max_years``. A transport is any callable taking the JSON payload dict
and returning the decoded response document, which lets the same code path
run against the live API, a local stub server, or committed fixture files.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import requests

from ..errors import ParseError, RemoteError, TransportError

logger = logging.getLogger(__name__)

API_URL = "https://api.bls.gov/publicAPI/v2/timeseries/data/"
API_KEY_ENV = "BLS_API_KEY"
DEFAULT_MAX_YEARS = 10

Transport = Callable[[Mapping[str, Any]], Mapping[str, Any]]


@dataclass(frozen=True)
class SeriesRequest:
    series_id: str
    start_year: int
    end_year: int
    api_key: str | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.series_id:
            raise ValueError("series_id must be non-empty")
        if self.start_year > self.end_year:
            raise ValueError(f"start_year {self.start_year} after end_year {self.end_year}")


@dataclass(frozen=True, order=True)
class Observation:
    year: int
    period: str          # "M01".."M12"
    value: float | None  # None where BLS publishes "-"

    @property
    def month(self) -> int:
        return int(self.period[1:])


def api_key_from_env() -> str | None:
    return os.environ.get(API_KEY_ENV) or None


def chunk_years(start_year: int, end_year: int, max_years: int = DEFAULT_MAX_YEARS) -> list[tuple[int, int]]:
    """Split an inclusive year range into consecutive chunks of ``max_years``."""
    if max_years < 1:
        raise ValueError("max_years must be >= 1")
    chunks = []
    year = start_year
    while year <= end_year:
        last = min(year + max_years - 1, end_year)
        chunks.append((year, last))
        year = last + 1
    return chunks


def build_payload(series_ids: Sequence[str], start_year: int, end_year: int,
                  api_key: str | None) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "seriesid": list(series_ids),
        "startyear": str(start_year),
        "endyear": str(end_year),
    }
    if api_key:
        payload["registrationkey"] = api_key
    return payload


def parse_response(doc: Mapping[str, Any], series_id: str) -> list[Observation]:
    """Extract monthly observations for ``series_id`` from a response document."""
    if not isinstance(doc, Mapping) or "status" not in doc:
        raise ParseError("response is not a BLS result document")
    if doc["status"] != "REQUEST_SUCCEEDED":
        messages = "; ".join(doc.get("message") or []) or "no message"
        raise RemoteError(f"BLS API status {doc['status']}: {messages}")
    try:
        series_list = doc["Results"]["series"]
    except (KeyError, TypeError) as exc:
        raise ParseError("response lacks Results.series") from exc

    out = []
    for series in series_list:
        if series.get("seriesID") != series_id:
            continue
        for row in series.get("data") or []:
            try:
                year = int(row["year"])
                period = str(row["period"])
                raw = str(row["value"]).strip()
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"malformed data row for {series_id}: {row!r}") from exc
            # M13 is the annual average
            if len(period) != 3 or not period.startswith("M") or period == "M13":
                continue
            if not 1 <= int(period[1:]) <= 12:
                raise ParseError(f"bad period {period!r} for {series_id}")
            if raw in ("-", ""):
                value = None
            else:
                try:
                    value = float(raw.replace(",", ""))
                except ValueError as exc:
                    raise ParseError(f"non-numeric value {raw!r} for {series_id}") from exc
            out.append(Observation(year, period, value))
    return sorted(out)


def fetch_series(req: SeriesRequest, transport: Transport | None = None,
                 max_years: int = DEFAULT_MAX_YEARS) -> list[Observation]:
    """Download one series, chunked by year, as ascending monthly observations."""
    transport = transport or HttpTransport()
    seen: set[tuple[int, str]] = set()
    result: list[Observation] = []
    for first, last in chunk_years(req.start_year, req.end_year, max_years):
        doc = transport(build_payload([req.series_id], first, last, req.api_key))
        for obs in parse_response(doc, req.series_id):
            key = (obs.year, obs.period)
            if key in seen or not first <= obs.year <= last:
                continue
            seen.add(key)
            result.append(obs)
    result.sort()
    logger.info("fetched %s: %d observations", req.series_id, len(result))
    return result


def fetch_many(reqs: Sequence[SeriesRequest], transport: Transport | None = None,
               max_years: int = DEFAULT_MAX_YEARS, max_workers: int = 4,
               min_interval: float = 0.0) -> dict[str, list[Observation]]:
    """Fetch several series with bounded parallelism and a request rate cap."""
    transport = transport or HttpTransport()
    if min_interval > 0:
        transport = _RateLimited(transport, min_interval)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {r.series_id: pool.submit(fetch_series, r, transport, max_years) for r in reqs}
        return {sid: fut.result() for sid, fut in futures.items()}


class _RateLimited:
    def __init__(self, inner: Transport, min_interval: float):
        self.inner = inner
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._last = 0.0

    def __call__(self, payload):
        with self._lock:
            wait = self._last + self.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last = time.monotonic()
        return self.inner(payload)


class HttpTransport:
    """POST payloads to the BLS endpoint, retrying transport failures."""

    def __init__(self, url: str = API_URL, timeout: float = 30.0, retries: int = 3,
                 backoff: float = 1.0, session: requests.Session | None = None):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()

    def __call__(self, payload: Mapping[str, Any]) -> Mapping[str, Any]:
        last_error = "no attempt made"
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.session.post(self.url, json=dict(payload), timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise TransportError(f"HTTP {resp.status_code} from {self.url}", attempt)
            try:
                return resp.json()
            except ValueError as exc:
                raise ParseError(f"invalid JSON from {self.url}") from exc
        raise TransportError(f"request to {self.url} failed: {last_error}", self.retries)


class FixtureTransport:
    """Serve requests from ``<root>/<series_id>.json`` response documents.

    Each fixture holds a full successful response for one series; requests
    are answered with the rows inside the requested year range, newest first
    as the live API does. Unknown series get the API's "does not exist"
    message and no data.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.calls: list[dict[str, Any]] = []

    def __call__(self, payload: Mapping[str, Any]) -> Mapping[str, Any]:
        self.calls.append({k: v for k, v in payload.items() if k != "registrationkey"})
        first, last = int(payload["startyear"]), int(payload["endyear"])
        series_out, messages = [], []
        for sid in payload["seriesid"]:
            path = self.root / f"{sid}.json"
            if not path.exists():
                messages.append(f"Series does not exist for Series {sid}")
                series_out.append({"seriesID": sid, "data": []})
                continue
            doc = json.loads(path.read_text())
            for series in doc["Results"]["series"]:
                if series["seriesID"] != sid:
                    continue
                rows = [r for r in series["data"] if first <= int(r["year"]) <= last]
                rows.sort(key=lambda r: (int(r["year"]), r["period"]), reverse=True)
                series_out.append({"seriesID": sid, "data": rows})
        return {
            "status": "REQUEST_SUCCEEDED",
            "responseTime": 0,
            "message": messages,
            "Results": {"series": series_out},
        }


def default_fixture_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "fixtures" / "bls"
