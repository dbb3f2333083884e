"""
Deterministic synthetic tracks and fixed-grid scenes with known ground truth.

Tracks follow a great circle of the mean Earth sphere, the same metric the
matcher measures distances with.
"""

import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .colloc import MEAN_EARTH_RADIUS_KM, TrackProfile, track_to_granule
from .errors import IoError
from .geodesy import DEFAULT_CONSTS, GeodeticPoint, ImageWindow, grid_params_for_band
from .granule import (
    J2000,
    SUFFIX,
    FormatTag,
    Granule,
    GranuleMeta,
    GridGeoloc,
    format_abi_key,
    format_cpr_name,
    from_epoch_us,
    parse_instant,
    to_epoch_us,
    write_granule,
)

HEIGHT_LADDER_M = (1000.0, 2000.0, 3000.0, 4000.0, 5000.0)
CLOUD_CLASSES = 9

RULES = ("ramp", "constant", "checker")


@dataclass(frozen=True)
class TrackSpec:
    start: GeodeticPoint
    azimuth: float
    count: int
    t0: datetime
    ground_speed: float = 7.0
    spacing: float = 1.1

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError(f"Track spacing must be positive, got {self.spacing}")
        if not self.ground_speed > 0:
            raise ValueError(f"Ground speed must be positive, got {self.ground_speed}")
        if self.count < 0:
            raise ValueError(f"Track count must not be negative, got {self.count}")

    @classmethod
    def from_dict(cls, d):
        return cls(
            start=GeodeticPoint.from_deg(d["start_lat_deg"], d["start_lon_deg"]),
            azimuth=math.radians(d.get("azimuth_deg", 0.0)),
            count=d["count"],
            t0=parse_instant(d["t0"]),
            ground_speed=d.get("ground_speed_km_s", 7.0),
            spacing=d.get("spacing_km", 1.1),
        )


@dataclass(frozen=True)
class SceneSpec:
    """An analytic image

    rule is one of ``ramp`` (local_row * width + local_col), ``constant``
    (value everywhere) or ``checker`` (0/1 squares of k pixels).
    """

    band: int
    rule: str
    t_start: datetime
    value: float = 0.0
    k: int = 1
    window: Optional[ImageWindow] = None
    duration_s: float = 600.0
    product: str = "ABI-L1b-RadF"
    platform: str = "G16"

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"Unknown value rule {self.rule!r}, expected one of {RULES}")
        if self.k < 1:
            raise ValueError(f"Checker size must be positive, got {self.k}")
        grid = grid_params_for_band(self.band)
        if self.window is not None and not self.window.fits(grid):
            raise ValueError(f"Window {self.window} exceeds the band {self.band} grid")

    @classmethod
    def from_dict(cls, d):
        window = d.get("window")
        return cls(
            band=d["band"],
            rule=d["rule"],
            t_start=parse_instant(d["t_start"]),
            value=d.get("value", 0.0),
            k=d.get("k", 1),
            window=None if window is None else ImageWindow(*window),
            duration_s=d.get("duration_s", 600.0),
        )


def _destination(start, azimuth, dist_km):
    """Points dist_km along the great circle leaving start at azimuth"""
    delta = np.asarray(dist_km, dtype=np.float64) / MEAN_EARTH_RADIUS_KM
    sin_lat1, cos_lat1 = math.sin(start.lat), math.cos(start.lat)
    sin_lat2 = sin_lat1 * np.cos(delta) + cos_lat1 * np.sin(delta) * math.cos(azimuth)
    lat = np.arcsin(np.clip(sin_lat2, -1.0, 1.0))
    lon = start.lon + np.arctan2(
        math.sin(azimuth) * np.sin(delta) * cos_lat1,
        np.cos(delta) - sin_lat1 * sin_lat2,
    )
    return lat, lon


def gen_track(spec):
    """Profiles every ``spacing`` km along the great circle of spec"""
    k = np.arange(spec.count)
    lat, lon = _destination(spec.start, spec.azimuth, k * spec.spacing)
    t0 = to_epoch_us(spec.t0)
    step_us = spec.spacing / spec.ground_speed * 1e6
    times = t0 + np.rint(k * step_us).astype(np.int64)
    return [
        TrackProfile(
            pid,
            t,
            GeodeticPoint(la, lo),
            HEIGHT_LADDER_M,
            (pid % CLOUD_CLASSES,) * len(HEIGHT_LADDER_M),
        )
        for pid, t, la, lo in zip(k.tolist(), times.tolist(), lat.tolist(), lon.tolist())
    ]


def _values(spec, rows, cols):
    r, c = np.indices((rows, cols))
    if spec.rule == "ramp":
        return (r * cols + c).astype(np.float32)
    if spec.rule == "constant":
        return np.full((rows, cols), spec.value, dtype=np.float32)
    return ((r // spec.k + c // spec.k) % 2).astype(np.float32)


def gen_image(spec, consts=DEFAULT_CONSTS, source_id="synth-a"):
    """Raw (ExtA) image granule of spec

    The time is stored as seconds since J2000, like the imager's own files.
    """
    grid = grid_params_for_band(spec.band)
    window = spec.window or ImageWindow.full(grid)
    # image names resolve tenths of seconds
    start_us = to_epoch_us(spec.t_start)
    t_start = from_epoch_us(start_us - start_us % 100000)
    t_end = t_start + timedelta(seconds=spec.duration_s)
    meta = GranuleMeta(
        source_id=source_id,
        product=spec.product,
        band=spec.band,
        t_start=t_start,
        t_end=t_end,
        format=FormatTag.EXT_A,
        uri="",
        mode=6,
        platform=spec.platform,
        t_created=t_end,
    )
    meta = replace(meta, uri=format_abi_key(meta, suffix=SUFFIX))
    j2000_s = (to_epoch_us(t_start) - to_epoch_us(J2000)) / 1e6
    return Granule(
        meta=meta,
        time=np.float64(j2000_s),
        geoloc=GridGeoloc(grid=grid, consts=consts, window=window),
        parameters={"radiance": _values(spec, window.rows, window.cols)},
        units={"time": "j2000_s", "fill.radiance": "nan"},
    )


def gen_track_granule(spec, source_id="synth-b", product="2B-CLDCLASS", granule_id=1):
    """Raw (ExtB) track granule of spec, named like a CloudSat file"""
    track = gen_track(spec)
    t_start = spec.t0.astimezone(timezone.utc).replace(microsecond=0)
    t_end = from_epoch_us(track[-1].time) if track else t_start
    meta = GranuleMeta(
        source_id=source_id,
        product=product,
        band=None,
        t_start=t_start,
        t_end=max(t_end, t_start),
        format=FormatTag.EXT_B,
        uri="",
        granule_id=granule_id,
        release=5,
        epoch=0,
    )
    meta = replace(meta, uri=format_cpr_name(meta, suffix=SUFFIX, with_prefix=True))
    return track_to_granule(track, meta, raw=True)


def write_fixture(granule, root):
    """Write granule as ``<root>/<uri>``, returns the path"""
    path = Path(root) / granule.meta.uri
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(write_granule(granule))
    except OSError as e:
        raise IoError(f"Could not write fixture {path}: {e}") from e
    return path
