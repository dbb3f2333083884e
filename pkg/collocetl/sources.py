"""
Extractors: enumerate and fetch granules from the configured sources.

A source is reached through a :class:`Transport`, anything with an async
``list(prefix)`` returning sorted names and an async ``get(name)`` returning
bytes. Transports never retry; failures surface as :class:`TransportError`.
"""

import asyncio
import hashlib
import json
import math
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import timedelta
from enum import Enum
from pathlib import Path
from typing import Optional
from urllib.parse import quote, urlencode, urlparse, urlunparse

from tornado.httpclient import AsyncHTTPClient, HTTPClientError, HTTPRequest
from tornado.log import app_log
from traitlets import Any, Bool, Dict, Float, Integer, List, Unicode, default, validate
from traitlets.config import LoggingConfigurable

from .errors import MalformedKey, NoTemporalMatch, TransportError, UnsupportedFormat
from .granule import (
    DEFAULT_ORBIT_DURATION_S,
    READERS,
    FormatTag,
    get_grammar,
    to_common,
    to_epoch_us,
)


class SourceKind(str, Enum):
    LOCAL_DIR = "LocalDir"
    OBJECT_STORE = "ObjectStore"
    REMOTE_DIR = "RemoteDir"


_DEFAULT_GRAMMAR = {
    SourceKind.LOCAL_DIR: "abi",
    SourceKind.OBJECT_STORE: "abi",
    SourceKind.REMOTE_DIR: "cpr",
}

_DEFAULT_PRODUCT = {"abi": "ABI-L1b-RadF", "cpr": "2B-CLDCLASS"}

# how far before a window a granule may start and still reach into it
_GRAMMAR_SLACK_S = {"abi": 3600.0}

_LOCAL_SCHEMES = ("", "file")


@dataclass(frozen=True)
class SourceSpec:
    id: str
    kind: SourceKind
    root: str
    name_grammar: Optional[str] = None
    product: Optional[str] = None
    orbit_duration_s: float = DEFAULT_ORBIT_DURATION_S

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if not self.id:
            raise ValueError("Source id must not be empty")
        scheme = urlparse(self.root).scheme
        if self.kind is SourceKind.LOCAL_DIR and scheme not in _LOCAL_SCHEMES:
            raise ValueError(f"LocalDir source {self.id!r} needs a local path, got {self.root!r}")
        if self.kind is SourceKind.OBJECT_STORE and scheme in _LOCAL_SCHEMES:
            raise ValueError(
                f"ObjectStore source {self.id!r} needs an endpoint URL, got {self.root!r}"
            )
        if self.name_grammar is None:
            object.__setattr__(self, "name_grammar", _DEFAULT_GRAMMAR[self.kind])
        get_grammar(self.name_grammar)
        if self.product is None:
            object.__setattr__(self, "product", _DEFAULT_PRODUCT.get(self.name_grammar, ""))
        if not self.orbit_duration_s > 0:
            raise ValueError(f"orbit_duration_s of source {self.id!r} must be positive")

    @property
    def listing_slack(self):
        """Longest time a granule of this source can start before a window"""
        return timedelta(
            seconds=_GRAMMAR_SLACK_S.get(self.name_grammar, self.orbit_duration_s)
        )

    def parse(self, name):
        kwargs = {"source_id": self.id}
        if self.name_grammar == "cpr":
            kwargs["orbit_duration_s"] = self.orbit_duration_s
        return get_grammar(self.name_grammar).parse(name, **kwargs)


# -- transports -------------------------------------------------------------


class Transport:
    """Capability interface of a granule store

    Set ``single_flight`` on transports that cannot serve concurrent gets.
    """

    single_flight = False

    async def list(self, prefix):
        raise NotImplementedError()

    async def get(self, name):
        raise NotImplementedError()


class LocalDirTransport(Transport):
    """A directory laid out like the object-store prefix scheme"""

    def __init__(self, root):
        self.root = Path(root)

    def _path(self, name):
        path = (self.root / name).resolve()
        if self.root.resolve() not in (path, *path.parents):
            raise TransportError(f"{name!r} escapes the source root {self.root}")
        return path

    async def list(self, prefix):
        base = self._path(prefix)
        if base.is_file():
            return [prefix]
        start = base if prefix.endswith("/") or base.is_dir() else base.parent
        if not start.is_dir():
            return []
        root = self.root.resolve()
        try:
            names = [
                p.relative_to(root).as_posix()
                for p in start.rglob("*")
                if p.is_file()
            ]
        except OSError as e:
            raise TransportError(f"Listing {prefix!r} under {self.root} failed: {e}") from e
        return sorted(n for n in names if n.startswith(prefix))

    async def get(self, name):
        try:
            return self._path(name).read_bytes()
        except OSError as e:
            raise TransportError(f"Reading {name!r} from {self.root} failed: {e}") from e


class MemoryTransport(Transport):
    """In-memory store that records every operation

    ``fail_next`` makes that many upcoming calls raise :class:`TransportError`.
    """

    def __init__(self, objects=None):
        self.objects = dict(objects or {})
        self.ops = []
        self.fail_next = 0

    def _check_failure(self, op, arg):
        self.ops.append((op, arg))
        if self.fail_next > 0:
            self.fail_next -= 1
            raise TransportError(f"Injected failure on {op} {arg!r}")

    async def list(self, prefix):
        self._check_failure("list", prefix)
        return sorted(name for name in self.objects if name.startswith(prefix))

    async def get(self, name):
        self._check_failure("get", name)
        try:
            return self.objects[name]
        except KeyError:
            raise TransportError(f"No object {name!r}") from None


S3_NS = {"s3": "http://s3.amazonaws.com/doc/2006-03-01/"}


class ObjectStoreTransport(Transport, LoggingConfigurable):
    """Anonymous S3-style object store reached over HTTP"""

    endpoint = Unicode(
        config=True,
        help="""
        Base URL of the bucket, e.g. ``https://noaa-goes16.s3.amazonaws.com``.
        """,
    )

    @validate("endpoint")
    def _validate_endpoint(self, proposal):
        scheme = urlparse(proposal.value).scheme
        if scheme not in {"http", "https"}:
            raise ValueError(f"Object store endpoint must be http(s), got {proposal.value!r}")
        return proposal.value.rstrip("/")

    max_keys = Integer(
        1000,
        config=True,
        help="Page size of listing requests.",
    )

    validate_server_cert_env = "COLLOC_ETL_TLS_VERIFY"
    validate_server_cert = Bool(
        config=True,
        help="""
        Determines if certificates are validated.

        Only set this to False if you feel confident it will not be a security
        concern.
        """,
    )

    @default("validate_server_cert")
    def _validate_server_cert_default(self):
        return os.getenv(self.validate_server_cert_env, "") != "0"

    http_request_kwargs = Dict(
        config=True,
        help="""
        Extra default kwargs passed to all HTTPRequests.

        .. code-block:: python

            # Example: send requests through a proxy
            c.ObjectStoreTransport.http_request_kwargs = {
                "proxy_host": "proxy.example.com",
                "proxy_port": 8080,
            }

        See :external:py:class:`tornado.httpclient.HTTPRequest` for all kwargs
        options you can pass.
        """,
    )

    http_client = Any()

    @default("http_client")
    def _default_http_client(self):
        return AsyncHTTPClient()

    async def httpfetch(self, url, label="fetching"):
        """Fetch a url, logging failed responses without their query"""
        request_kwargs = {"validate_cert": self.validate_server_cert}
        request_kwargs.update(self.http_request_kwargs)
        req = HTTPRequest(url, **request_kwargs)
        try:
            return await self.http_client.fetch(req)
        except HTTPClientError as e:
            if e.response is not None:
                message = e.response.body.decode("utf8", "replace")
            else:
                message = str(e)
            url = urlunparse(urlparse(req.url)._replace(query=""))
            self.log.error(f"Error {label} {e.code} {req.method} {url}: {message}")
            raise TransportError(f"Error {label} {url}: HTTP {e.code}") from e
        except OSError as e:
            raise TransportError(f"Error {label} {url}: {e}") from e

    async def list(self, prefix):
        names = []
        token = None
        while True:
            query = {"list-type": "2", "prefix": prefix, "max-keys": str(self.max_keys)}
            if token:
                query["continuation-token"] = token
            resp = await self.httpfetch(
                f"{self.endpoint}/?{urlencode(query)}", label=f"listing {prefix}"
            )
            try:
                root = ET.fromstring(resp.body)
            except ET.ParseError as e:
                raise TransportError(f"Unreadable listing of {prefix!r}: {e}") from e
            names.extend(key.text for key in root.iterfind("s3:Contents/s3:Key", S3_NS))
            truncated = root.findtext("s3:IsTruncated", default="false", namespaces=S3_NS)
            token = root.findtext("s3:NextContinuationToken", namespaces=S3_NS)
            if truncated != "true" or not token:
                break
        return sorted(names)

    async def get(self, name):
        resp = await self.httpfetch(f"{self.endpoint}/{quote(name)}", label=f"getting {name}")
        return resp.body


class CachingTransport(Transport):
    """Content-addressed cache in front of another transport

    Objects are stored once under ``objects/<sha256 of content>``, names map to
    them through ``refs/<sha256 of name>``. Listings are never cached.
    """

    def __init__(self, inner, cache_dir, namespace=""):
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.namespace = namespace
        self.single_flight = inner.single_flight

    def _ref_path(self, name):
        key = hashlib.sha256(f"{self.namespace}\0{name}".encode("utf-8")).hexdigest()
        return self.cache_dir / "refs" / key

    async def list(self, prefix):
        return await self.inner.list(prefix)

    async def get(self, name):
        ref = self._ref_path(name)
        try:
            digest = ref.read_text().strip()
            data = (self.cache_dir / "objects" / digest).read_bytes()
        except OSError:
            pass
        else:
            if hashlib.sha256(data).hexdigest() == digest:
                app_log.debug(f"Cache hit for {name}")
                return data
            app_log.warning(f"Discarding corrupt cache object for {name}")

        data = await self.inner.get(name)
        digest = hashlib.sha256(data).hexdigest()
        try:
            _atomic_write(self.cache_dir / "objects" / digest, data)
            _atomic_write(ref, digest.encode("ascii"))
        except OSError as e:
            app_log.warning(f"Could not cache {name} in {self.cache_dir}: {e}")
        return data


def _atomic_write(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _local_transport(extractor, src):
    root = urlparse(src.root)
    return LocalDirTransport(root.path if root.scheme == "file" else src.root)


def _object_store_transport(extractor, src):
    return ObjectStoreTransport(endpoint=src.root, parent=extractor)


TRANSPORT_FACTORIES = {
    "": _local_transport,
    "file": _local_transport,
    "http": _object_store_transport,
    "https": _object_store_transport,
}


def register_transport(scheme, factory):
    """Plug in a transport for sources whose root has the given URI scheme

    ``factory(extractor, source_spec)`` returns a :class:`Transport`.
    """
    TRANSPORT_FACTORIES[scheme] = factory


# -- temporal selection -----------------------------------------------------


def intersects(meta, t0, t1):
    return meta.t_start <= t1 and meta.t_end >= t0


def select_covering(candidates, track_window, dt_max_s):
    """The candidate whose midpoint is closest to the track window midpoint

    Ties go to the earlier start. Raises :class:`NoTemporalMatch` when the
    smallest gap exceeds ``dt_max_s``.
    """
    t0, t1 = track_window
    target = (to_epoch_us(t0) + to_epoch_us(t1)) // 2
    best = None
    best_key = None
    for meta in candidates:
        key = (abs(meta.midpoint_us - target), meta.t_start, meta.uri)
        if best_key is None or key < best_key:
            best, best_key = meta, key
    if best is None:
        raise NoTemporalMatch(math.inf)
    gap_s = best_key[0] / 1e6
    if gap_s > dt_max_s:
        raise NoTemporalMatch(gap_s)
    return best


# -- extractor --------------------------------------------------------------


class Extractor(LoggingConfigurable):
    """Lists and fetches granules of the configured sources"""

    sources = List(
        config=True,
        help="""
        Granule sources, as :class:`SourceSpec` objects or dicts with the same
        fields (id, kind, root, name_grammar, product, orbit_duration_s).
        """,
    )

    @validate("sources")
    def _validate_sources(self, proposal):
        specs = [s if isinstance(s, SourceSpec) else SourceSpec(**s) for s in proposal.value]
        ids = [s.id for s in specs]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise ValueError(f"Duplicate source ids: {', '.join(duplicates)}")
        return specs

    cache_dir = Unicode(
        config=True,
        help="""
        Directory of the content-addressed fetch cache.

        Defaults to $COLLOC_ETL_CACHE, no caching if empty. Local directory
        sources are never cached.
        """,
    )

    @default("cache_dir")
    def _cache_dir_default(self):
        return os.environ.get("COLLOC_ETL_CACHE", "")

    diagnostics_path = Unicode(
        "",
        config=True,
        help="""
        JSON-lines file receiving one object per skipped malformed name.
        """,
    )

    listing_concurrency = Integer(
        8,
        config=True,
        help="Maximum number of listing requests in flight per source.",
    )

    dt_max_s = Float(
        900.0,
        config=True,
        help="Default temporal threshold of :meth:`select`.",
    )

    transports = Dict(
        help="""
        Transports by source id, filled on first use.

        Assign entries to substitute a transport, e.g. a :class:`MemoryTransport`.
        """,
    )

    diagnostics = List(help="Skipped names of this extractor, newest last.")

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self._locks = {}

    def source(self, source_id):
        for src in self.sources:
            if src.id == source_id:
                return src
        raise KeyError(
            f"No source {source_id!r}, configured: {', '.join(s.id for s in self.sources)}"
        )

    def transport_for(self, src):
        transport = self.transports.get(src.id)
        if transport is None:
            scheme = urlparse(src.root).scheme
            factory = TRANSPORT_FACTORIES.get(scheme)
            if factory is None:
                raise TransportError(
                    f"No transport for {scheme!r} roots of source {src.id!r}"
                )
            transport = factory(self, src)
            self.transports[src.id] = transport
        if self.cache_dir and not isinstance(transport, (LocalDirTransport, CachingTransport)):
            transport = CachingTransport(transport, self.cache_dir, namespace=src.root)
            self.transports[src.id] = transport
        return transport

    def _diagnose(self, src, name, error):
        entry = {
            "source_id": src.id,
            "name": name,
            "position": error.position,
            "reason": error.reason,
        }
        self.log.warning(f"Skipping {name!r} of source {src.id}: {error}")
        self.diagnostics.append(entry)
        if self.diagnostics_path:
            with open(self.diagnostics_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry) + "\n")

    async def list_granules(self, src, window, product=None, band=None):
        """Metas of granules of src intersecting window, by t_start then uri

        Only the prefixes covering the window are listed.
        """
        t0, t1 = window
        if t0 > t1:
            raise ValueError(f"Window starts ({t0}) after it ends ({t1})")
        product = product or src.product
        grammar = get_grammar(src.name_grammar)
        prefixes = grammar.prefixes(product, t0 - src.listing_slack, t1)
        transport = self.transport_for(src)

        semaphore = asyncio.Semaphore(self.listing_concurrency)

        async def list_one(prefix):
            async with semaphore:
                self.log.debug(f"Listing {src.id}:{prefix}")
                return await transport.list(prefix)

        listings = await asyncio.gather(*(list_one(p) for p in prefixes))

        metas = {}
        for name in (n for names in listings for n in names):
            try:
                meta = src.parse(name)
            except MalformedKey as e:
                self._diagnose(src, name, e)
                continue
            if meta.product != product:
                continue
            if band is not None and meta.band != band:
                continue
            if intersects(meta, t0, t1):
                metas[meta.uri] = meta
        found = sorted(metas.values(), key=lambda m: (m.t_start, m.uri))
        self.log.info(f"Found {len(found)} {product} granules in {src.id}")
        return found

    def select(self, candidates, track_window, dt_max_s=None):
        return select_covering(
            candidates, track_window, self.dt_max_s if dt_max_s is None else dt_max_s
        )

    async def find_covering(self, src, track_window, band=None, dt_max_s=None):
        """The granule of src closest in time to track_window"""
        dt_max_s = self.dt_max_s if dt_max_s is None else dt_max_s
        slack = timedelta(seconds=dt_max_s)
        t0, t1 = track_window
        candidates = await self.list_granules(src, (t0 - slack, t1 + slack), band=band)
        return select_covering(candidates, track_window, dt_max_s)

    async def _get(self, src, name):
        transport = self.transport_for(src)
        if not transport.single_flight:
            return await transport.get(name)
        lock = self._locks.setdefault(src.id, asyncio.Lock())
        async with lock:
            return await transport.get(name)

    async def fetch_raw(self, src, meta):
        """Decoded granule of meta, in the format it was stored in"""
        reader = READERS.get(meta.format)
        if reader is None:
            raise UnsupportedFormat(f"No reader for {meta.format.value}")
        data = await self._get(src, meta.uri)
        self.log.debug(f"Fetched {len(data)} bytes of {src.id}:{meta.uri}")
        return reader(data)

    async def fetch(self, src, meta):
        """Fetch a granule and bring it into the common form"""
        granule = await self.fetch_raw(src, meta)
        if granule.meta.format is FormatTag.EXT_C:
            return granule
        return to_common(granule)
