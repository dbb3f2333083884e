"""
The common granule model.

A Granule is a Concept with the attributes Time, Geoloc and Parameters. Raw
granules come tagged with the format of their source (ExtA for fixed-grid
images, ExtB for track profiles) and :func:`to_common` turns them into the
ExtC common form every transformer downstream works with.

Granules travel between processes as ``.sgr`` interchange containers:

    b"SGR1" + UTF-8 JSON header + b"\\n\\0" + little-endian payload blocks

The header lists every array (name, element type, shape) in payload order.
"""

import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Callable, Dict, Mapping, NamedTuple, Optional, Union

import numpy as np
from tornado.log import app_log

from .errors import (
    CorruptContainer,
    MalformedKey,
    MissingBand,
    ShapeMismatch,
    UnsupportedFormat,
)
from .geodesy import EllipsoidConsts, GridParams, ImageWindow, grid_params_for_band

MAGIC = b"SGR1"
HEADER_END = b"\n\0"
SUFFIX = ".sgr"

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
J2000 = datetime(2000, 1, 1, 12, tzinfo=timezone.utc)
ONE_US = timedelta(microseconds=1)

# nominal duration of one CloudSat granule (one orbit)
DEFAULT_ORBIT_DURATION_S = 5933.0

RADIANCE_FILL = np.float32("nan")
CLOUD_CLASS_FILL = 255

# container element types
ELEMENT_TYPES = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "i32": np.dtype("<i4"),
    "i64": np.dtype("<i8"),
    "u8": np.dtype("u1"),
}
_ELEMENT_NAMES = {dtype.newbyteorder("<").str: name for name, dtype in ELEMENT_TYPES.items()}


class FormatTag(str, Enum):
    EXT_A = "ExtA_GeoImage"
    EXT_B = "ExtB_TrackProfile"
    EXT_C = "ExtC_Common"

    def __str__(self):
        return self.value


def to_epoch_us(instant):
    """Microseconds since 1970-01-01T00:00:00Z, leap seconds ignored"""
    if instant.tzinfo is None:
        raise ValueError(f"{instant!r} is a naive datetime, UTC is required")
    return (instant - EPOCH) // ONE_US


def from_epoch_us(us):
    return EPOCH + timedelta(microseconds=int(us))


def parse_instant(text):
    instant = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if instant.tzinfo is None:
        instant = instant.replace(tzinfo=timezone.utc)
    return instant.astimezone(timezone.utc)


def format_instant(instant):
    return instant.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class GranuleMeta:
    source_id: str
    product: str
    band: Optional[int]
    t_start: datetime
    t_end: datetime
    format: FormatTag
    uri: str
    # name fields that are not part of the common model but needed to
    # reproduce a source name exactly
    mode: Optional[int] = None
    platform: Optional[str] = None
    t_created: Optional[datetime] = None
    granule_id: Optional[int] = None
    release: Optional[int] = None
    epoch: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "format", FormatTag(self.format))
        if self.t_start > self.t_end:
            raise ValueError(
                f"Granule {self.uri!r} ends ({self.t_end}) before it starts ({self.t_start})"
            )
        if self.format is FormatTag.EXT_A and self.band is None:
            raise ValueError(f"Image granule {self.uri!r} has no band")
        if self.format is FormatTag.EXT_B and self.band is not None:
            raise ValueError(f"Track granule {self.uri!r} cannot have a band")

    @property
    def midpoint_us(self):
        return (to_epoch_us(self.t_start) + to_epoch_us(self.t_end)) // 2

    def to_dict(self):
        d = {
            "source_id": self.source_id,
            "product": self.product,
            "band": self.band,
            "t_start": format_instant(self.t_start),
            "t_end": format_instant(self.t_end),
            "format": self.format.value,
            "uri": self.uri,
        }
        for name in ("mode", "platform", "granule_id", "release", "epoch"):
            value = getattr(self, name)
            if value is not None:
                d[name] = value
        if self.t_created is not None:
            d["t_created"] = format_instant(self.t_created)
        return d

    @classmethod
    def from_dict(cls, d):
        kwargs = dict(d)
        for name in ("t_start", "t_end", "t_created"):
            if kwargs.get(name) is not None:
                kwargs[name] = parse_instant(kwargs[name])
        return cls(**kwargs)


@dataclass(frozen=True)
class GridGeoloc:
    """Geolocation of a fixed-grid image: the grid, its constants and window"""

    grid: GridParams
    consts: EllipsoidConsts
    window: ImageWindow


@dataclass(frozen=True, eq=False)
class TrackGeoloc:
    """Per-profile geodetic positions"""

    lat: np.ndarray
    lon: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, TrackGeoloc):
            return NotImplemented
        return arrays_identical(self.lat, other.lat) and arrays_identical(
            self.lon, other.lon
        )


def arrays_identical(a, b):
    """Bitwise equality of two arrays, including dtype and shape"""
    a = np.asarray(a)
    b = np.asarray(b)
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


@dataclass(frozen=True, eq=False)
class Granule:
    meta: GranuleMeta
    time: np.ndarray
    geoloc: Union[GridGeoloc, TrackGeoloc]
    parameters: Mapping[str, np.ndarray] = field(default_factory=dict)
    units: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "time", np.asarray(self.time))
        object.__setattr__(self, "parameters", dict(self.parameters))
        object.__setattr__(self, "units", dict(self.units))
        if self.is_image:
            if self.time.shape != ():
                raise ShapeMismatch(
                    f"Image {self.meta.uri!r} needs a scalar time, got shape {self.time.shape}"
                )
            window = self.geoloc.window
            if not window.fits(self.geoloc.grid):
                raise ShapeMismatch(
                    f"Window {window} exceeds the band {self.geoloc.grid.band} grid"
                )
            expected = (window.rows, window.cols)
            for name, array in self.parameters.items():
                if array.shape != expected:
                    raise ShapeMismatch(
                        f"Parameter {name!r} has shape {array.shape}, expected {expected}"
                    )
            radiance = self.parameters.get("radiance")
            if radiance is not None and np.isinf(radiance).any():
                raise ValueError(f"Radiance of {self.meta.uri!r} has infinite values")
        else:
            count = self.count
            if self.time.shape != (count,) or self.geoloc.lon.shape != (count,):
                raise ShapeMismatch(
                    f"Track {self.meta.uri!r} declares {count} profiles but time has "
                    f"shape {self.time.shape} and lon {self.geoloc.lon.shape}"
                )
            for name, array in self.parameters.items():
                if array.shape[:1] != (count,):
                    raise ShapeMismatch(
                        f"Parameter {name!r} has shape {array.shape}, expected {count} profiles"
                    )

    @property
    def is_image(self):
        return isinstance(self.geoloc, GridGeoloc)

    @property
    def count(self):
        """Number of geolocated elements: pixels of an image, profiles of a track"""
        if self.is_image:
            return self.geoloc.window.rows * self.geoloc.window.cols
        return self.geoloc.lat.shape[0]

    @property
    def time_us(self):
        """Image acquisition time, microseconds since the epoch (common form)"""
        return int(self.time)

    def __eq__(self, other):
        if not isinstance(other, Granule):
            return NotImplemented
        return (
            self.meta == other.meta
            and self.units == other.units
            and self.geoloc == other.geoloc
            and arrays_identical(self.time, other.time)
            and list(self.parameters) == list(other.parameters)
            and all(
                arrays_identical(self.parameters[k], other.parameters[k])
                for k in self.parameters
            )
        )


# -- name grammars ----------------------------------------------------------


class _Scanner:
    """Left-to-right reader over a name that reports the failing position"""

    def __init__(self, text, offset=0):
        self.text = text
        self.pos = offset

    def fail(self, reason, pos=None):
        raise MalformedKey(self.text, self.pos if pos is None else pos, reason)

    def literal(self, expected):
        if not self.text.startswith(expected, self.pos):
            self.fail(f"expected {expected!r}")
        self.pos += len(expected)

    def digits(self, count, what):
        chunk = self.text[self.pos : self.pos + count]
        if len(chunk) < count or not chunk.isdigit():
            self.fail(f"expected {count} digits for {what}")
        self.pos += count
        return chunk

    def until(self, stop, what):
        end = self.text.find(stop, self.pos)
        if end <= self.pos:
            self.fail(f"expected {what} followed by {stop!r}")
        token = self.text[self.pos : end]
        self.pos = end
        return token

    def one_of(self, choices, what):
        for choice in choices:
            if self.text.startswith(choice, self.pos):
                self.pos += len(choice)
                return choice
        self.fail(f"expected {what}, one of {', '.join(choices)}")

    def end(self):
        if self.pos != len(self.text):
            self.fail("unexpected trailing characters")


def _day_of_year(scanner, year, doy, pos):
    year, doy = int(year), int(doy)
    days = 366 if _is_leap(year) else 365
    if not 1 <= doy <= days:
        scanner.fail(f"day of year {doy} is not in 1..{days} for {year}", pos)
    return datetime(year, 1, 1, tzinfo=timezone.utc) + timedelta(days=doy - 1)


def _is_leap(year):
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def _clock(scanner, hh, mm, ss, pos):
    hh, mm, ss = int(hh), int(mm), int(ss)
    if hh > 23 or mm > 59 or ss > 59:
        scanner.fail(f"invalid time of day {hh:02d}:{mm:02d}:{ss:02d}", pos)
    return timedelta(hours=hh, minutes=mm, seconds=ss)


def _abi_stamp(scanner, prefix, what):
    scanner.literal(prefix)
    pos = scanner.pos
    stamp = scanner.digits(14, f"{what} timestamp YYYYDDDHHMMSSd")
    day = _day_of_year(scanner, stamp[0:4], stamp[4:7], pos)
    clock = _clock(scanner, stamp[7:9], stamp[9:11], stamp[11:13], pos)
    return day + clock + timedelta(microseconds=int(stamp[13]) * 100000)


def _format_abi_stamp(instant):
    instant = instant.astimezone(timezone.utc)
    tenth = instant.microsecond // 100000
    return f"{instant.strftime('%Y%j%H%M%S')}{tenth}"


def parse_abi_key(key, source_id=""):
    """Parse an ABI object key

    ``<prod>/<YYYY>/<DDD>/<HH>/OR_<prod>-M<m>C<cc>_<sat>_s<stamp>_e<stamp>_c<stamp>.nc``
    where each stamp is ``YYYYDDDHHMMSSd`` (d: tenths of seconds). ``.sgr``
    is accepted in place of ``.nc`` for interchange copies.
    """
    s = _Scanner(key)
    product = s.until("/", "product")
    s.literal("/")
    year = s.digits(4, "year directory")
    s.literal("/")
    doy = s.digits(3, "day-of-year directory")
    s.literal("/")
    hour = s.digits(2, "hour directory")
    s.literal("/OR_")
    s.literal(f"{product}-M")
    mode = int(s.digits(1, "scan mode"))
    s.literal("C")
    pos = s.pos
    band = int(s.digits(2, "channel"))
    if not 1 <= band <= 16:
        s.fail(f"channel {band} is not in 1..16", pos)
    s.literal("_")
    platform = s.until("_", "platform")
    s.literal("_")
    pos = s.pos
    t_start = _abi_stamp(s, "s", "start")
    s.literal("_")
    t_end = _abi_stamp(s, "e", "end")
    s.literal("_")
    t_created = _abi_stamp(s, "c", "creation")
    s.one_of([".nc", SUFFIX], "extension")
    s.end()
    if t_start.strftime("%Y/%j/%H") != f"{year}/{doy}/{hour}":
        s.fail("directory does not match the start timestamp", pos)
    if t_end < t_start:
        s.fail("end timestamp precedes start timestamp", pos)
    return GranuleMeta(
        source_id=source_id,
        product=product,
        band=band,
        t_start=t_start,
        t_end=t_end,
        format=FormatTag.EXT_A,
        uri=key,
        mode=mode,
        platform=platform,
        t_created=t_created,
    )


def abi_prefix(product, instant):
    """Listing prefix of the hour holding instant"""
    return f"{product}/{instant.astimezone(timezone.utc).strftime('%Y/%j/%H')}/"


def format_abi_key(meta, suffix=".nc"):
    if meta.format is not FormatTag.EXT_A:
        raise UnsupportedFormat(
            f"ABI keys name ExtA_GeoImage granules, not {meta.format.value}"
        )
    if meta.band is None:
        raise MissingBand(f"Granule {meta.uri!r} has no band")
    mode = 6 if meta.mode is None else meta.mode
    platform = meta.platform or "G16"
    created = meta.t_created or meta.t_end
    return (
        f"{abi_prefix(meta.product, meta.t_start)}OR_{meta.product}-M{mode}C{meta.band:02d}"
        f"_{platform}_s{_format_abi_stamp(meta.t_start)}_e{_format_abi_stamp(meta.t_end)}"
        f"_c{_format_abi_stamp(created)}{suffix}"
    )


def parse_cpr_name(name, source_id="", orbit_duration_s=DEFAULT_ORBIT_DURATION_S):
    """Parse a CloudSat granule name

    ``<YYYYDDDHHMMSS>_<NNNNN>_CS_<product>_GRANULE_P1_R<rr>_E<ee>.hdf``, with
    any leading directories ignored. The granule end is the start plus one
    nominal orbit.
    """
    offset = name.rfind("/") + 1
    s = _Scanner(name, offset)
    pos = s.pos
    stamp = s.digits(13, "start timestamp YYYYDDDHHMMSS")
    day = _day_of_year(s, stamp[0:4], stamp[4:7], pos)
    t_start = day + _clock(s, stamp[7:9], stamp[9:11], stamp[11:13], pos)
    s.literal("_")
    granule_id = int(s.digits(5, "granule number"))
    s.literal("_CS_")
    product_end = name.rfind("_GRANULE_", s.pos)
    if product_end <= s.pos:
        s.fail("expected product followed by '_GRANULE_'")
    product = name[s.pos : product_end]
    s.pos = product_end
    s.literal("_GRANULE_P1_R")
    release = int(s.digits(2, "release"))
    s.literal("_E")
    epoch = int(s.digits(2, "epoch"))
    s.one_of([".hdf", SUFFIX], "extension")
    s.end()
    return GranuleMeta(
        source_id=source_id,
        product=product,
        band=None,
        t_start=t_start,
        t_end=t_start + timedelta(seconds=orbit_duration_s),
        format=FormatTag.EXT_B,
        uri=name,
        granule_id=granule_id,
        release=release,
        epoch=epoch,
    )


def cpr_prefix(product, instant):
    """Listing prefix of the day holding instant"""
    return f"{product}/{instant.astimezone(timezone.utc).strftime('%Y/%j')}/"


def format_cpr_name(meta, suffix=".hdf", with_prefix=False):
    if meta.format is not FormatTag.EXT_B:
        raise UnsupportedFormat(
            f"CloudSat names name ExtB_TrackProfile granules, not {meta.format.value}"
        )
    name = (
        f"{meta.t_start.astimezone(timezone.utc).strftime('%Y%j%H%M%S')}"
        f"_{meta.granule_id or 0:05d}_CS_{meta.product}_GRANULE_P1"
        f"_R{meta.release or 0:02d}_E{meta.epoch or 0:02d}{suffix}"
    )
    if with_prefix:
        name = cpr_prefix(meta.product, meta.t_start) + name
    return name


class Grammar(NamedTuple):
    parse: Callable[..., GranuleMeta]
    format: Callable[..., str]
    prefixes: Callable[[str, datetime, datetime], list]


def _hourly_prefixes(product, t0, t1):
    step = timedelta(hours=1)
    current = t0.astimezone(timezone.utc).replace(minute=0, second=0, microsecond=0)
    prefixes = []
    while current <= t1:
        prefixes.append(abi_prefix(product, current))
        current += step
    return prefixes


def _daily_prefixes(product, t0, t1):
    step = timedelta(days=1)
    current = t0.astimezone(timezone.utc).replace(hour=0, minute=0, second=0, microsecond=0)
    prefixes = []
    while current <= t1:
        prefixes.append(cpr_prefix(product, current))
        current += step
    return prefixes


GRAMMARS: Dict[str, Grammar] = {
    "abi": Grammar(parse_abi_key, format_abi_key, _hourly_prefixes),
    "cpr": Grammar(parse_cpr_name, format_cpr_name, _daily_prefixes),
}


def register_grammar(name, parse, format, prefixes=None):
    """Register a name grammar for sources to use

    ``prefixes(product, t0, t1)`` returns the listing prefixes covering a
    window; without it a source lists everything under the product.
    """
    if prefixes is None:

        def prefixes(product, t0, t1):
            return [f"{product}/"]

    GRAMMARS[name] = Grammar(parse, format, prefixes)


def get_grammar(name):
    try:
        return GRAMMARS[name]
    except KeyError:
        raise ValueError(
            f"No name grammar {name!r}, registered: {', '.join(sorted(GRAMMARS))}"
        ) from None


def parse_name(grammar, name, **kwargs):
    """Parse a name with a registered grammar"""
    return get_grammar(grammar).parse(name, **kwargs)


def format_name(grammar, meta, **kwargs):
    return get_grammar(grammar).format(meta, **kwargs)


# -- common form ------------------------------------------------------------


def _time_to_epoch_us(granule):
    unit = granule.units.get("time", "epoch_us")
    time = granule.time
    if unit == "epoch_us":
        return time.astype(np.int64)
    if unit == "j2000_s":
        base = to_epoch_us(J2000)
    elif unit == "doy_s":
        start = granule.meta.t_start.astimezone(timezone.utc)
        base = to_epoch_us(start.replace(hour=0, minute=0, second=0, microsecond=0))
    elif unit == "epoch_s":
        base = 0
    else:
        raise UnsupportedFormat(f"Unknown time unit {unit!r} in {granule.meta.uri!r}")
    return (base + np.rint(time.astype(np.float64) * 1e6)).astype(np.int64)


def _fill_to_canonical(name, array, raw_fill):
    if raw_fill is None:
        return array
    if name == "cloud_class":
        canonical = CLOUD_CLASS_FILL
    elif array.dtype.kind == "f":
        canonical = RADIANCE_FILL
    else:
        return array
    fill = float(raw_fill)
    if array.dtype.kind in "iu":
        info = np.iinfo(array.dtype)
        if not (fill.is_integer() and info.min <= fill <= info.max):
            app_log.warning(f"Fill {raw_fill!r} of {name!r} is not a {array.dtype} value, ignored")
            return array
    mask = array == array.dtype.type(fill)
    if not mask.any():
        return array
    app_log.debug(f"Mapping {int(mask.sum())} fill values of {name!r} to {canonical}")
    out = array.copy()
    out[mask] = canonical
    return out


def to_common(raw):
    """Transformer c: normalize a raw granule into the ExtC common form

    Times become epoch microseconds, angles radians and fill values the
    canonical fill. Parameter values are otherwise left untouched.
    """
    if raw.meta.format is FormatTag.EXT_C:
        raise UnsupportedFormat(f"Granule {raw.meta.uri!r} is already in common form")
    time = _time_to_epoch_us(raw)
    geoloc = raw.geoloc
    if not raw.is_image and raw.units.get("angle", "rad") == "deg":
        geoloc = TrackGeoloc(
            lat=np.radians(geoloc.lat.astype(np.float64)),
            lon=np.radians(geoloc.lon.astype(np.float64)),
        )
    parameters = {
        name: _fill_to_canonical(name, array, raw.units.get(f"fill.{name}"))
        for name, array in raw.parameters.items()
    }
    return Granule(
        meta=replace(raw.meta, format=FormatTag.EXT_C),
        time=time,
        geoloc=geoloc,
        parameters=parameters,
        units={"time": "epoch_us", "angle": "rad"},
    )


def time_range(granule):
    """First and last instant of a granule's samples, from its metadata if it has none"""
    common = granule if granule.meta.format is FormatTag.EXT_C else to_common(granule)
    if common.time.size == 0:
        return granule.meta.t_start, granule.meta.t_end
    return from_epoch_us(int(common.time.min())), from_epoch_us(int(common.time.max()))


# -- interchange container --------------------------------------------------


def _element_name(array):
    name = _ELEMENT_NAMES.get(array.dtype.newbyteorder("<").str)
    if name is None:
        raise ValueError(f"Element type {array.dtype} cannot be stored in a container")
    return name


def _geoloc_header(geoloc):
    if isinstance(geoloc, GridGeoloc):
        w = geoloc.window
        return {
            "kind": "grid",
            "band": geoloc.grid.band,
            "n": geoloc.grid.n,
            "delta": geoloc.grid.delta,
            "consts": {
                "r_eq": geoloc.consts.r_eq,
                "r_pol": geoloc.consts.r_pol,
                "H": geoloc.consts.H,
                "lon0": geoloc.consts.lon0,
            },
            "window": [w.row0, w.col0, w.rows, w.cols],
        }
    return {"kind": "track"}


def write_granule(granule):
    """Serialize a granule to interchange container bytes"""
    arrays = [("time", granule.time)]
    if not granule.is_image:
        arrays += [("geoloc.lat", granule.geoloc.lat), ("geoloc.lon", granule.geoloc.lon)]
    arrays += list(granule.parameters.items())
    header = {
        "meta": granule.meta.to_dict(),
        "units": dict(granule.units),
        "geoloc": _geoloc_header(granule.geoloc),
        "count": granule.count,
        "arrays": [
            {"name": name, "type": _element_name(a), "shape": list(a.shape)}
            for name, a in arrays
        ],
    }
    blocks = [MAGIC, json.dumps(header, ensure_ascii=False).encode("utf-8"), HEADER_END]
    for name, a in arrays:
        blocks.append(np.ascontiguousarray(a, dtype=ELEMENT_TYPES[_element_name(a)]).tobytes())
    return b"".join(blocks)


def _read_geoloc(header, arrays):
    kind = header.get("kind")
    if kind == "grid":
        grid = grid_params_for_band(header["band"])
        if grid.n != header["n"] or not math.isclose(grid.delta, header["delta"]):
            raise ShapeMismatch(f"Grid header {header} disagrees with band {grid.band}")
        return GridGeoloc(
            grid=grid,
            consts=EllipsoidConsts(**header["consts"]),
            window=ImageWindow(*header["window"]),
        )
    if kind == "track":
        return TrackGeoloc(lat=arrays.pop("geoloc.lat"), lon=arrays.pop("geoloc.lon"))
    raise ValueError(f"unknown geoloc kind {kind!r}")


def read_granule(data):
    """Deserialize interchange container bytes into a Granule"""
    data = bytes(data)
    if not data.startswith(MAGIC):
        raise CorruptContainer(0, "missing SGR1 magic prefix")
    end = data.find(HEADER_END, len(MAGIC))
    if end < 0:
        raise CorruptContainer(len(data), "missing header terminator")
    try:
        header = json.loads(data[len(MAGIC) : end].decode("utf-8"))
        declared = [
            (a["name"], ELEMENT_TYPES[a["type"]], tuple(int(n) for n in a["shape"]))
            for a in header["arrays"]
        ]
    except (ValueError, KeyError, TypeError) as e:
        raise CorruptContainer(len(MAGIC), f"unreadable header: {e}") from e

    offset = end + len(HEADER_END)
    expected = offset + sum(
        dtype.itemsize * math.prod(shape) for _, dtype, shape in declared
    )
    if expected != len(data):
        raise ShapeMismatch(
            f"Header declares {expected - offset} payload bytes, container holds "
            f"{len(data) - offset}"
        )
    arrays = {}
    for name, dtype, shape in declared:
        count = math.prod(shape)
        arrays[name] = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(
            shape
        )
        offset += dtype.itemsize * count

    try:
        meta = GranuleMeta.from_dict(header["meta"])
        geoloc = _read_geoloc(header["geoloc"], arrays)
        time = arrays.pop("time")
    except (ValueError, KeyError, TypeError) as e:
        raise CorruptContainer(len(MAGIC), f"invalid header: {e}") from e
    try:
        granule = Granule(
            meta=meta,
            time=time,
            geoloc=geoloc,
            parameters=arrays,
            units=header.get("units", {}),
        )
    except ValueError as e:
        raise CorruptContainer(len(MAGIC), f"invalid payload: {e}") from e
    if header.get("count") != granule.count:
        raise ShapeMismatch(
            f"Header declares {header.get('count')} elements, payload holds {granule.count}"
        )
    return granule


READERS: Dict[FormatTag, Callable[[bytes], Granule]] = {
    FormatTag.EXT_A: read_granule,
    FormatTag.EXT_B: read_granule,
    FormatTag.EXT_C: read_granule,
}


def register_reader(format_tag, reader):
    """Plug in a decoder producing Granules for a source format"""
    READERS[FormatTag(format_tag)] = reader
