"""
Loader: write Pixel A&B products as flat files and keep a catalog of them.

Product files are bit-exact: identical records give identical bytes, and the
product id is the sha256 of the jsonl serialization of the records.
"""

import csv
import hashlib
import io
import json
import os
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Tuple

import numpy as np
from tornado.log import app_log
from traitlets import CaselessStrEnum, Unicode
from traitlets.config import LoggingConfigurable

from .colloc import CollocatedPixel
from .errors import EmptyProduct, IoError, MalformedProduct
from .granule import format_instant

FORMATS = ("jsonl", "csv")
COLUMNS = CollocatedPixel._fields
DIGEST = "sha256"
CATALOG_NAME = "catalog.jsonl"

_INT_COLUMNS = {"profile_id", "track_time_us", "band", "pixel_row", "pixel_col"}
_FLOAT_COLUMNS = {
    "track_lat_deg",
    "track_lon_deg",
    "pixel_lat_deg",
    "pixel_lon_deg",
    "dist_km",
    "dt_s",
}


@dataclass(frozen=True)
class ProductFile:
    format: str
    path: str
    product_id: str
    records: Tuple[CollocatedPixel, ...]

    @property
    def record_count(self):
        return len(self.records)


@dataclass(frozen=True)
class CatalogEntry:
    product_id: str
    created_at: str
    source_a: dict
    source_b: dict
    cfg: dict
    record_count: int
    path: str
    digest: str = DIGEST

    def to_dict(self):
        return asdict(self)


def _radiance_value(value):
    """Shortest decimal that reads back to the same float32, None for fill"""
    value = np.float32(value)
    if np.isnan(value):
        return None
    return float(str(value))


def _record_to_json(record):
    d = record._asdict()
    d["radiance"] = _radiance_value(record.radiance)
    d["heights_m"] = [float(h) for h in record.heights_m]
    d["cloud_class"] = [int(c) for c in record.cloud_class]
    return json.dumps(d, separators=(",", ":"), allow_nan=False)


def _check_sorted(records):
    ids = [r.profile_id for r in records]
    if any(b < a for a, b in zip(ids, ids[1:])):
        raise ValueError("Records must be sorted by profile_id")


def to_jsonl(records):
    return "".join(_record_to_json(r) + "\n" for r in records).encode("utf-8")


def to_csv(records):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        radiance = _radiance_value(r.radiance)
        row = list(r)
        row[COLUMNS.index("radiance")] = "" if radiance is None else repr(radiance)
        row[COLUMNS.index("heights_m")] = "|".join(repr(float(h)) for h in r.heights_m)
        row[COLUMNS.index("cloud_class")] = "|".join(str(int(c)) for c in r.cloud_class)
        for name in _FLOAT_COLUMNS:
            i = COLUMNS.index(name)
            row[i] = repr(float(row[i]))
        writer.writerow(row)
    return out.getvalue().encode("utf-8")


def product_id(records):
    """sha256 hex digest of the canonical (jsonl, sorted) serialization"""
    ordered = sorted(records, key=lambda r: r.profile_id)
    return hashlib.sha256(to_jsonl(ordered)).hexdigest()


def write_product(records, format, path):
    """Write records to path in the given format"""
    if format not in FORMATS:
        raise ValueError(f"Unknown product format {format!r}, expected one of {FORMATS}")
    records = tuple(records)
    _check_sorted(records)
    data = to_jsonl(records) if format == "jsonl" else to_csv(records)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as e:
        raise IoError(f"Could not write product {path}: {e}") from e
    return ProductFile(
        format=format, path=str(path), product_id=product_id(records), records=records
    )


# -- reading ----------------------------------------------------------------


def _radiance_from(value, line):
    if value is None:
        return np.float32("nan")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedProduct(line, f"radiance must be a number or null, got {value!r}")
    return np.float32(value)


def _record_from_json(d, line):
    if not isinstance(d, dict):
        raise MalformedProduct(line, "expected a JSON object")
    if tuple(d) != COLUMNS:
        raise MalformedProduct(line, f"keys {list(d)} differ from the product columns")
    try:
        values = dict(d)
        for name in _INT_COLUMNS:
            if isinstance(values[name], bool) or not isinstance(values[name], int):
                raise ValueError(f"{name} must be an integer")
        for name in _FLOAT_COLUMNS:
            values[name] = float(values[name])
        values["radiance"] = _radiance_from(values["radiance"], line)
        values["heights_m"] = tuple(float(h) for h in values["heights_m"])
        values["cloud_class"] = tuple(int(c) for c in values["cloud_class"])
    except (TypeError, ValueError) as e:
        raise MalformedProduct(line, str(e)) from e
    return CollocatedPixel(**values)


def _read_jsonl(text):
    records = []
    for line, raw in enumerate(text.splitlines(), 1):
        try:
            d = json.loads(raw)
        except ValueError as e:
            raise MalformedProduct(line, f"invalid JSON: {e}") from e
        records.append(_record_from_json(d, line))
    return records


def _split(value, convert):
    return tuple(convert(v) for v in value.split("|")) if value else ()


def _read_csv(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != COLUMNS:
        raise MalformedProduct(1, f"header {header} differs from the product columns")
    records = []
    for line, row in enumerate(reader, 2):
        if len(row) != len(COLUMNS):
            raise MalformedProduct(line, f"expected {len(COLUMNS)} fields, got {len(row)}")
        d = dict(zip(COLUMNS, row))
        try:
            values = {name: int(d[name]) for name in _INT_COLUMNS}
            values.update({name: float(d[name]) for name in _FLOAT_COLUMNS})
            values["radiance"] = np.float32("nan" if d["radiance"] == "" else d["radiance"])
            values["heights_m"] = _split(d["heights_m"], float)
            values["cloud_class"] = _split(d["cloud_class"], int)
        except ValueError as e:
            raise MalformedProduct(line, str(e)) from e
        records.append(CollocatedPixel(**values))
    return records


def read_product(path, format=None):
    """Records of a product file, the format is taken from the suffix by default"""
    path = Path(path)
    format = format or path.suffix.lstrip(".")
    if format not in FORMATS:
        raise MalformedProduct(0, f"unknown product format {format!r}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"Could not read product {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise MalformedProduct(0, f"not UTF-8: {e}") from e
    return _read_jsonl(text) if format == "jsonl" else _read_csv(text)


# -- catalog ----------------------------------------------------------------


def _catalog_ids(path):
    ids = set()
    for line, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        try:
            ids.add(json.loads(raw)["product_id"])
        except (ValueError, KeyError, TypeError):
            app_log.warning(f"Ignoring corrupt catalog line {line} of {path}")
    return ids


def catalog_append(path, entry):
    """Append entry unless its product id is already cataloged

    Returns whether a line was written. Single writer per catalog file.
    """
    path = Path(path)
    try:
        if path.exists():
            if entry.product_id in _catalog_ids(path):
                app_log.debug(f"Product {entry.product_id} already cataloged")
                return False
            with path.open("rb") as f:
                f.seek(0, os.SEEK_END)
                size = f.tell()
                if size:
                    f.seek(-1, os.SEEK_END)
                    needs_newline = f.read(1) != b"\n"
                else:
                    needs_newline = False
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            needs_newline = False
        line = json.dumps(entry.to_dict(), separators=(",", ":")) + "\n"
        with path.open("a", encoding="utf-8") as f:
            f.write(("\n" if needs_newline else "") + line)
    except OSError as e:
        raise IoError(f"Could not append to catalog {path}: {e}") from e
    return True


def read_catalog(path):
    path = Path(path)
    if not path.exists():
        return []
    entries = []
    for line, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        try:
            entries.append(CatalogEntry(**json.loads(raw)))
        except (ValueError, TypeError) as e:
            raise MalformedProduct(line, f"invalid catalog entry: {e}") from e
    return entries


class Loader(LoggingConfigurable):
    """Writes products into a store directory and catalogs them"""

    store_dir = Unicode(
        "products",
        config=True,
        help="""
        Directory receiving product files and the catalog.
        """,
    )

    format = CaselessStrEnum(
        FORMATS,
        default_value="jsonl",
        config=True,
        help="Product file format.",
    )

    @property
    def catalog_path(self):
        return Path(self.store_dir) / CATALOG_NAME

    def product_path(self, pid):
        return Path(self.store_dir) / f"pixels-{pid[:16]}.{self.format}"

    def load(self, records, source_a, source_b, cfg, allow_empty=False):
        """Write a product and catalog it, returns ``(ProductFile, appended)``

        source_a and source_b are the GranuleMeta of the inputs, cfg a dict
        snapshot of the collocation settings.
        """
        records = sorted(records, key=lambda r: r.profile_id)
        if not records and not allow_empty:
            raise EmptyProduct(f"No records to load from {source_a.uri} and {source_b.uri}")
        pid = product_id(records)
        path = self.product_path(pid)
        product = write_product(records, self.format, path)
        entry = CatalogEntry(
            product_id=pid,
            created_at=format_instant(datetime.now(timezone.utc)),
            source_a=source_a.to_dict(),
            source_b=source_b.to_dict(),
            cfg=dict(cfg),
            record_count=len(records),
            path=path.name,
        )
        appended = catalog_append(self.catalog_path, entry)
        self.log.info(
            f"Loaded {len(records)} records into {path}"
            + ("" if appended else " (already cataloged)")
        )
        return product, appended
