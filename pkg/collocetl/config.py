"""
The operator configuration file.

A single JSON document, validated against ``schemas/config-schema.yaml``
before anything runs, then turned into an :class:`EtlConfig` value and a
traitlets :class:`~traitlets.config.Config` for the services.
"""

import json
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import jsonschema
from ruamel.yaml import YAML
from traitlets.config import Config

from .errors import ConfigError
from .geodesy import EllipsoidConsts
from .sources import SourceSpec

yaml = YAML(typ="safe", pure=True)

SCHEMA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "schemas")


@lru_cache()
def load_schema(name):
    with open(os.path.join(SCHEMA_DIR, name)) as schema_fd:
        return yaml.load(schema_fd)


@dataclass(frozen=True)
class EtlConfig:
    band: int
    d_max_km: float = 1.1
    dt_max_s: float = 900.0
    # None when the config has no consts section
    consts: Optional[EllipsoidConsts] = None
    sources: Tuple[SourceSpec, ...] = ()
    image_source: Optional[str] = None
    track_source: Optional[str] = None
    output_dir: str = "products"
    output_format: str = "jsonl"
    synth: dict = field(default_factory=dict)

    def source(self, source_id):
        for src in self.sources:
            if src.id == source_id:
                return src
        raise ConfigError(f"No source {source_id!r} configured")

    def to_traitlets_config(self):
        c = Config()
        c.CollocConfig.band = self.band
        c.CollocConfig.d_max_km = self.d_max_km
        c.CollocConfig.dt_max_s = self.dt_max_s
        c.Extractor.sources = list(self.sources)
        c.Extractor.dt_max_s = self.dt_max_s
        c.Loader.store_dir = self.output_dir
        c.Loader.format = self.output_format
        return c


def validate_config(doc):
    """Check a parsed config document against the schema"""
    try:
        jsonschema.validate(doc, load_schema("config-schema.yaml"))
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"Invalid config at {where}: {e.message}") from e


def config_from_dict(doc):
    validate_config(doc)
    colloc = doc["colloc"]
    output = doc.get("output", {})
    try:
        consts = EllipsoidConsts.from_config(**doc["consts"]) if "consts" in doc else None
        sources = tuple(SourceSpec(**s) for s in doc.get("sources", []))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid config: {e}") from e
    ids = [s.id for s in sources]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"Duplicate source ids in {ids}")
    for role in ("image_source", "track_source"):
        ref = colloc.get(role)
        if ref is not None and ref not in ids:
            raise ConfigError(f"colloc.{role} names unknown source {ref!r}")
    return EtlConfig(
        band=colloc["band"],
        d_max_km=colloc.get("d_max_km", 1.1),
        dt_max_s=colloc.get("dt_max_s", 900.0),
        consts=consts,
        sources=sources,
        image_source=colloc.get("image_source"),
        track_source=colloc.get("track_source"),
        output_dir=output.get("dir", "products"),
        output_format=output.get("format", "jsonl"),
        synth=dict(doc.get("synth", {})),
    )


def load_config(path):
    """Read, validate and convert the config file at path"""
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except ValueError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
    return config_from_dict(doc)
