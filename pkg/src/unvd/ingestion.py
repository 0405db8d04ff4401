"""Provider clients for contract enumeration, per-contract NFT listing,
and media fetching, plus the provider benchmark harness.

The fixture provider is the authoritative test surface: it answers from a
local manifest file deterministically and supports injected latencies so
the provider benchmark is reproducible. Real subgraph (GraphQL-over-HTTP)
and NFT-API (REST) clients implement the same interface.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlparse
from urllib.request import url2pathname

import httpx
import numpy as np

from .embedding import DEFAULT_MEDIA_CAP, MediaBlob
from .errors import (
    BadCursor,
    FetchTimeout,
    HttpError,
    ProviderUnavailable,
    TooLarge,
    UnknownContract,
)
from .metadata_store import ContractRecord

TERMINAL_CURSOR = ""


@dataclass(frozen=True)
class NftEntry:
    contract_address: str
    token_id: str
    media_url: str
    metadata_url: str | None = None
    token_standard: str = "ERC-721"


@dataclass(frozen=True)
class ContractPage:
    contracts: list[ContractRecord]
    next_cursor: str  # TERMINAL_CURSOR when enumeration is done


@dataclass
class ProviderConfig:
    kind: str = "fixture"  # fixture | subgraph | nft_api
    endpoint: str = ""
    page_size: int = 50
    timeout: float = 10.0
    max_attempts: int = 3
    backoff_base: float = 0.5

    def __post_init__(self):
        if self.kind not in ("fixture", "subgraph", "nft_api"):
            raise ValueError(f"unknown provider kind: {self.kind!r}")
        if not 10 <= self.page_size <= 100:
            raise ValueError(f"page_size must be in [10, 100], got {self.page_size}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


class FixtureProvider:
    """Deterministic provider backed by a local fixture directory.

    The directory holds a manifest.ndjson of contract and token records and
    a media/ directory of PNG files. Optional synthetic latencies model a
    per-page subgraph cost and a per-token cached-API cost for benchmarks.
    """

    def __init__(
        self,
        fixture_dir: str | Path,
        config: ProviderConfig | None = None,
        page_latency: float = 0.0,
        token_latency: float = 0.0,
        fail_next: int = 0,
    ):
        self.dir = Path(fixture_dir)
        self.config = config or ProviderConfig(kind="fixture")
        self.page_latency = page_latency
        self.token_latency = token_latency
        self.fail_next = fail_next  # fault injection: fail this many calls
        self._contracts: list[ContractRecord] = []
        self._tokens: dict[str, list[NftEntry]] = {}
        self._load_manifest()

    def _load_manifest(self):
        manifest = self.dir / "manifest.ndjson"
        with open(manifest, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                kind = obj.pop("type")
                if kind == "contract":
                    self._contracts.append(ContractRecord(**obj))
                elif kind == "nft":
                    entry = NftEntry(**obj)
                    self._tokens.setdefault(entry.contract_address, []).append(entry)
        self._contracts.sort(key=lambda c: c.address)
        for entries in self._tokens.values():
            entries.sort(key=lambda e: int(e.token_id))

    def _maybe_fail(self):
        if self.fail_next > 0:
            self.fail_next -= 1
            raise ProviderUnavailable("injected provider failure")

    def list_contracts(self, cursor: str | None = None) -> ContractPage:
        self._maybe_fail()
        if self.page_latency:
            time.sleep(self.page_latency)
        offset = 0
        if cursor:
            if not cursor.startswith("offset:"):
                raise BadCursor(cursor)
            offset = int(cursor.split(":", 1)[1])
            if offset < 0 or offset > len(self._contracts):
                raise BadCursor(cursor)
        page = self._contracts[offset : offset + self.config.page_size]
        nxt = offset + len(page)
        next_cursor = f"offset:{nxt}" if nxt < len(self._contracts) else TERMINAL_CURSOR
        return ContractPage(contracts=page, next_cursor=next_cursor)

    def list_nfts(self, contract_address: str) -> list[NftEntry]:
        self._maybe_fail()
        if contract_address not in self._tokens:
            if not any(c.address == contract_address for c in self._contracts):
                raise UnknownContract(contract_address)
            return []
        entries = self._tokens[contract_address]
        if self.token_latency:
            time.sleep(self.token_latency * len(entries))
        return list(entries)

    def list_nfts_paged_like_subgraph(self, contract_address: str) -> list[NftEntry]:
        """Same data, but paying the per-page latency per page of tokens
        (models fetching tokens through the subgraph instead of the cache)."""
        entries = self.list_nfts_unmetered(contract_address)
        out = []
        for i in range(0, max(len(entries), 1), self.config.page_size):
            if self.page_latency:
                time.sleep(self.page_latency)
            out.extend(entries[i : i + self.config.page_size])
        return out

    def list_nfts_unmetered(self, contract_address: str) -> list[NftEntry]:
        if contract_address not in self._tokens:
            if not any(c.address == contract_address for c in self._contracts):
                raise UnknownContract(contract_address)
            return []
        return list(self._tokens[contract_address])


def fetch_media(url: str, cap: int = DEFAULT_MEDIA_CAP, timeout: float = 10.0) -> MediaBlob:
    """Fetch raw media bytes from an http(s) or file URL, untransformed."""
    parsed = urlparse(url)
    if parsed.scheme == "file" or parsed.scheme == "":
        path = Path(url2pathname(parsed.path)) if parsed.scheme == "file" else Path(url)
        try:
            size = path.stat().st_size
        except OSError as e:
            raise HttpError(404, f"file not found: {url}") from e
        if size > cap:
            raise TooLarge(f"{size} bytes exceeds cap {cap}")
        return MediaBlob(bytes=path.read_bytes(), mime="image/png", source_url=url)
    if parsed.scheme not in ("http", "https"):
        raise ValueError(f"unsupported URL scheme: {parsed.scheme!r}")
    try:
        with httpx.Client(timeout=timeout) as client:
            resp = client.get(url)
    except httpx.TimeoutException as e:
        raise FetchTimeout(str(e)) from e
    except httpx.HTTPError as e:
        raise HttpError(0, str(e)) from e
    if resp.status_code != 200:
        raise HttpError(resp.status_code)
    if len(resp.content) > cap:
        raise TooLarge(f"{len(resp.content)} bytes exceeds cap {cap}")
    mime = resp.headers.get("content-type", "application/octet-stream")
    return MediaBlob(bytes=resp.content, mime=mime, source_url=url)


def with_retries(fn, max_attempts: int = 3, backoff_base: float = 0.5):
    """Call fn() with exponential backoff on ProviderUnavailable."""
    delay = backoff_base
    for attempt in range(1, max_attempts + 1):
        try:
            return fn()
        except ProviderUnavailable:
            if attempt == max_attempts:
                raise
            time.sleep(delay)
            delay *= 2


# -- real provider clients (same interface, tested against recorded/mock
#    responses only; live endpoints are out of CI's reach) -----------------


class SubgraphProvider:
    """GraphQL-over-HTTP contract enumeration using first/skip pagination."""

    QUERY = """
    query Contracts($first: Int!, $skip: Int!) {
      erc721Contracts(first: $first, skip: $skip, orderBy: id) {
        id
        name
      }
    }
    """

    def __init__(self, config: ProviderConfig):
        self.config = config

    def list_contracts(self, cursor: str | None = None) -> ContractPage:
        skip = 0
        if cursor:
            if not cursor.startswith("offset:"):
                raise BadCursor(cursor)
            skip = int(cursor.split(":", 1)[1])

        def call():
            try:
                resp = httpx.post(
                    self.config.endpoint,
                    json={
                        "query": self.QUERY,
                        "variables": {"first": self.config.page_size, "skip": skip},
                    },
                    timeout=self.config.timeout,
                )
            except httpx.HTTPError as e:
                raise ProviderUnavailable(str(e)) from e
            if resp.status_code != 200:
                raise ProviderUnavailable(f"HTTP {resp.status_code}")
            return resp.json()

        data = with_retries(call, self.config.max_attempts, self.config.backoff_base)
        rows = data["data"]["erc721Contracts"]
        contracts = [
            ContractRecord(address=row["id"].lower(), name=row.get("name"))
            for row in rows
        ]
        nxt = skip + len(rows)
        more = len(rows) == self.config.page_size
        return ContractPage(contracts=contracts, next_cursor=f"offset:{nxt}" if more else TERMINAL_CURSOR)


class NftApiProvider:
    """REST client modeled on cached NFT-API pagination (pageKey style)."""

    def __init__(self, config: ProviderConfig):
        self.config = config

    def list_nfts(self, contract_address: str) -> list[NftEntry]:
        entries: list[NftEntry] = []
        page_key = None
        while True:
            params = {"contractAddress": contract_address}
            if page_key:
                params["pageKey"] = page_key

            def call():
                try:
                    resp = httpx.get(
                        self.config.endpoint, params=params, timeout=self.config.timeout
                    )
                except httpx.HTTPError as e:
                    raise ProviderUnavailable(str(e)) from e
                if resp.status_code == 404:
                    raise UnknownContract(contract_address)
                if resp.status_code != 200:
                    raise ProviderUnavailable(f"HTTP {resp.status_code}")
                return resp.json()

            data = with_retries(call, self.config.max_attempts, self.config.backoff_base)
            for row in data.get("nfts", []):
                entries.append(
                    NftEntry(
                        contract_address=contract_address,
                        token_id=str(row["tokenId"]),
                        media_url=row["media"],
                        metadata_url=row.get("tokenUri"),
                    )
                )
            page_key = data.get("pageKey")
            if not page_key:
                break
        return entries


# -- provider benchmark ----------------------------------------------------


@dataclass
class BenchCell:
    n: int
    subgraph_seconds: float | None
    api_seconds: float | None
    error: str | None = None


@dataclass
class BenchReport:
    cells: list[BenchCell]
    api_slope: float
    api_intercept: float
    api_r2: float

    def rows(self) -> list[dict]:
        out = [
            {
                "n": c.n,
                "subgraph_seconds": c.subgraph_seconds,
                "api_seconds": c.api_seconds,
                "error": c.error,
            }
            for c in self.cells
        ]
        return out


def bench_providers(fixture: FixtureProvider, sizes: list[int]) -> BenchReport:
    """Time per-contract NFT retrieval through both provider styles.

    Wall time per N for the subgraph-style (per-page latency) and the
    cached-API-style (per-token latency) paths; fits time vs N for the
    cached provider by least squares.
    """
    cells = []
    # pick contracts whose token counts match the requested sizes; the
    # benchmark fixture carries one contract per size
    by_count = {len(v): k for k, v in fixture._tokens.items()}
    for n in sizes:
        if n == 0:
            cells.append(BenchCell(n=0, subgraph_seconds=None, api_seconds=None))
            continue
        addr = by_count.get(n)
        if addr is None:
            cells.append(
                BenchCell(n=n, subgraph_seconds=None, api_seconds=None,
                          error=f"no fixture contract with {n} tokens")
            )
            continue
        t0 = time.perf_counter()
        fixture.list_nfts_paged_like_subgraph(addr)
        t_sub = time.perf_counter() - t0
        t0 = time.perf_counter()
        fixture.list_nfts(addr)
        t_api = time.perf_counter() - t0
        cells.append(BenchCell(n=n, subgraph_seconds=t_sub, api_seconds=t_api))

    pts = [(c.n, c.api_seconds) for c in cells if c.api_seconds is not None]
    if len(pts) >= 2:
        xs = np.array([p[0] for p in pts], dtype=float)
        ys = np.array([p[1] for p in pts], dtype=float)
        slope, intercept = np.polyfit(xs, ys, 1)
        pred = slope * xs + intercept
        ss_res = float(np.sum((ys - pred) ** 2))
        ss_tot = float(np.sum((ys - ys.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    else:
        slope = intercept = 0.0
        r2 = float("nan")
    return BenchReport(cells=cells, api_slope=float(slope),
                       api_intercept=float(intercept), api_r2=r2)
