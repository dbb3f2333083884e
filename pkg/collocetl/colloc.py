"""
Transformers f and t: project a track onto the fixed grid and match its
profiles with image pixels in time and space.

Matching is O(1) per profile: the scan angle of a profile is rounded to the
nearest pixel center and the 3x3 block around it is refined by great-circle
distance, which makes the result agree with an exhaustive search. A profile
whose rounded pixel falls outside the image window is not matched.
"""

from dataclasses import dataclass, replace
from datetime import timezone
from typing import NamedTuple, Tuple

import numpy as np
from tornado.log import app_log
from traitlets import Float, Integer, validate
from traitlets.config import Configurable

from .errors import BandMismatch, FormatMismatch, SceneTooLarge
from .geodesy import (
    DEFAULT_CONSTS,
    GeodeticPoint,
    ScanAngle,
    forward_many,
    grid_params_for_band,
    inverse_many,
    pixel_to_scan_many,
    round_half_away_many,
)
from .granule import (
    CLOUD_CLASS_FILL,
    FormatTag,
    Granule,
    TrackGeoloc,
    to_epoch_us,
)

MEAN_EARTH_RADIUS_KM = 6371.0088
BRUTEFORCE_MAX_SIDE = 512


class TrackProfile(NamedTuple):
    """One vertical profile of the track

    time is in epoch microseconds, heights in meters (ascending) with one
    cloud class byte per height bin.
    """

    profile_id: int
    time: int
    point: GeodeticPoint
    heights: Tuple[float, ...]
    cloud_class: Tuple[int, ...]


def check_profile(profile):
    """Raise ValueError if a profile breaks its invariants"""
    heights = profile.heights
    if len(profile.cloud_class) != len(heights):
        raise ValueError(
            f"Profile {profile.profile_id} has {len(heights)} heights but "
            f"{len(profile.cloud_class)} cloud classes"
        )
    if any(b <= a for a, b in zip(heights, heights[1:])):
        raise ValueError(f"Heights of profile {profile.profile_id} are not ascending")
    if any(not 0 <= c <= 255 for c in profile.cloud_class):
        raise ValueError(f"Cloud class of profile {profile.profile_id} is not a byte")


class CollocatedPixel(NamedTuple):
    """A Pixel A&B record, in product column order"""

    profile_id: int
    track_time_us: int
    track_lat_deg: float
    track_lon_deg: float
    band: int
    pixel_row: int
    pixel_col: int
    pixel_lat_deg: float
    pixel_lon_deg: float
    radiance: np.float32
    dist_km: float
    dt_s: float
    heights_m: Tuple[float, ...]
    cloud_class: Tuple[int, ...]


@dataclass
class CollocStats:
    """Drop counters of a collocation run"""

    profiles: int = 0
    records: int = 0
    dropped_invisible: int = 0
    dropped_dt: int = 0
    dropped_dist: int = 0

    def summary(self):
        return (
            f"records={self.records} dropped_invisible={self.dropped_invisible} "
            f"dropped_dt={self.dropped_dt} dropped_dist={self.dropped_dist}"
        )


class CollocConfig(Configurable):
    """Thresholds of the spatial and temporal matching criteria"""

    band = Integer(
        13,
        config=True,
        help="""
        Imager band (1..16) whose pixels are matched with the track.

        The band fixes the pixel grid, see :func:`collocetl.geodesy.grid_params_for_band`.
        """,
    )

    d_max_km = Float(
        1.1,
        config=True,
        help="""
        Spatial threshold in km: the largest great-circle distance between a
        profile and the center of its matched pixel.

        The default is the along-track profile spacing of the radar.
        """,
    )

    dt_max_s = Float(
        900.0,
        config=True,
        help="""
        Temporal threshold in seconds between a profile and the image start.

        The default is the longest full-disk cadence of the imager.
        """,
    )

    @validate("band")
    def _validate_band(self, proposal):
        grid_params_for_band(proposal.value)
        return proposal.value

    @validate("d_max_km")
    def _validate_d_max_km(self, proposal):
        if not proposal.value > 0:
            raise ValueError(f"d_max_km must be positive, got {proposal.value}")
        return proposal.value

    @validate("dt_max_s")
    def _validate_dt_max_s(self, proposal):
        if not proposal.value >= 0:
            raise ValueError(f"dt_max_s must not be negative, got {proposal.value}")
        return proposal.value

    def to_dict(self):
        return {"band": self.band, "d_max_km": self.d_max_km, "dt_max_s": self.dt_max_s}


def great_circle_km(p, q):
    """Haversine distance on the mean Earth sphere"""
    return float(_haversine_km(p.lat, p.lon, q.lat, q.lon))


def _haversine_km(lat1, lon1, lat2, lon2):
    sin_dlat = np.sin((lat2 - lat1) / 2)
    sin_dlon = np.sin((lon2 - lon1) / 2)
    a = sin_dlat * sin_dlat + np.cos(lat1) * np.cos(lat2) * sin_dlon * sin_dlon
    return 2 * MEAN_EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(a, 1.0)))


# -- track conversions ------------------------------------------------------


def _track_arrays(track):
    count = len(track)
    ids = np.fromiter((p.profile_id for p in track), np.int64, count)
    times = np.fromiter((p.time for p in track), np.int64, count)
    lat = np.fromiter((p.point.lat for p in track), np.float64, count)
    lon = np.fromiter((p.point.lon for p in track), np.float64, count)
    return ids, times, lat, lon


def granule_to_track(granule):
    """Profiles of a common-form track granule"""
    if granule.meta.format is not FormatTag.EXT_C or granule.is_image:
        raise FormatMismatch(f"{granule.meta.uri!r} is not a common-form track")
    count = granule.count
    ids = granule.parameters.get("profile_id")
    ids = range(count) if ids is None else ids.tolist()
    heights = granule.parameters["heights"].tolist()
    classes = granule.parameters["cloud_class"].tolist()
    return [
        TrackProfile(pid, t, GeodeticPoint(lat, lon), tuple(h), tuple(c))
        for pid, t, lat, lon, h, c in zip(
            ids,
            granule.time.tolist(),
            granule.geoloc.lat.tolist(),
            granule.geoloc.lon.tolist(),
            heights,
            classes,
        )
    ]


def track_to_granule(track, meta, raw=False):
    """Pack profiles into a track granule

    With ``raw=True`` the granule is laid out like a source file: ExtB,
    seconds since the start of the day and degrees.
    """
    ids, times, lat, lon = _track_arrays(track)
    bins = {len(p.heights) for p in track}
    if len(bins) > 1:
        raise ValueError(f"Profiles have differing numbers of height bins: {sorted(bins)}")
    nbins = bins.pop() if bins else 0
    heights = np.array([p.heights for p in track], dtype=np.float32).reshape(len(track), nbins)
    classes = np.array([p.cloud_class for p in track], dtype=np.uint8).reshape(len(track), nbins)
    parameters = {"profile_id": ids.astype(np.int32), "heights": heights, "cloud_class": classes}
    if raw:
        day = meta.t_start.astimezone(timezone.utc).replace(
            hour=0, minute=0, second=0, microsecond=0
        )
        time = (times - to_epoch_us(day)) / 1e6
        return Granule(
            meta=replace(meta, format=FormatTag.EXT_B, band=None),
            time=time,
            geoloc=TrackGeoloc(lat=np.degrees(lat), lon=np.degrees(lon)),
            parameters=parameters,
            units={"time": "doy_s", "angle": "deg", "fill.cloud_class": str(CLOUD_CLASS_FILL)},
        )
    return Granule(
        meta=replace(meta, format=FormatTag.EXT_C, band=None),
        time=times,
        geoloc=TrackGeoloc(lat=lat, lon=lon),
        parameters=parameters,
        units={"time": "epoch_us", "angle": "rad"},
    )


# -- transformers -----------------------------------------------------------


def transform_track(track, consts=DEFAULT_CONSTS, stats=None):
    """Transformer f: scan angles of the visible profiles

    Profiles behind the limb are dropped and counted in ``stats``.
    """
    ids, _, lat, lon = _track_arrays(track)
    x, y, visible = forward_many(lat, lon, consts)
    dropped = int(len(track) - np.count_nonzero(visible))
    if dropped:
        app_log.warning(f"Dropped {dropped} of {len(track)} profiles behind the limb")
    if stats is not None:
        stats.dropped_invisible += dropped
    keep = np.flatnonzero(visible)
    return [
        (pid, ScanAngle(sx, sy))
        for pid, sx, sy in zip(ids[keep].tolist(), x[keep].tolist(), y[keep].tolist())
    ]


def _check_image(image, cfg):
    if image.meta.format is not FormatTag.EXT_C or not image.is_image:
        raise FormatMismatch(
            f"{image.meta.uri!r} is {image.meta.format.value}, a common-form image is required"
        )
    if image.geoloc.grid.band != cfg.band:
        raise BandMismatch(
            f"Image band {image.geoloc.grid.band} does not match configured band {cfg.band}"
        )
    if "radiance" not in image.parameters:
        raise FormatMismatch(f"{image.meta.uri!r} has no radiance parameter")


def _prefilter(track, image, cfg, stats):
    """Visible, in-time profiles: their indices and radian positions"""
    ids, times, lat, lon = _track_arrays(track)
    x, y, visible = forward_many(lat, lon, image.geoloc.consts)
    dt_us = np.abs(times - image.time_us)
    in_time = visible & (dt_us <= cfg.dt_max_s * 1e6)
    stats.profiles += len(track)
    stats.dropped_invisible += int(len(track) - np.count_nonzero(visible))
    stats.dropped_dt += int(np.count_nonzero(visible & ~in_time))
    keep = np.flatnonzero(in_time)
    return keep, ids, times, lat, lon, x, y, dt_us


def _rounded_pixels(x, y, grid):
    row = round_half_away_many(grid.center - y / grid.delta).astype(np.int64)
    col = round_half_away_many(x / grid.delta + grid.center).astype(np.int64)
    return row, col


def _in_window(row, col, window):
    return (
        (row >= window.row0)
        & (row < window.row0 + window.rows)
        & (col >= window.col0)
        & (col < window.col0 + window.cols)
    )


def _on_image(keep, x, y, image, stats):
    """Profiles of keep whose rounded pixel lies in the image window

    The others are beyond the image footprint and count as distance drops.
    """
    row, col = _rounded_pixels(x[keep], y[keep], image.geoloc.grid)
    inside = _in_window(row, col, image.geoloc.window)
    stats.dropped_dist += int(np.count_nonzero(~inside))
    return keep[inside], row[inside], col[inside]


def _emit(track, image, keep, rows, cols, pixel_lat, pixel_lon, dist, ids, times, lat, lon, dt_us):
    """Build records for the matched profiles, ordered by profile_id"""
    window = image.geoloc.window
    radiance = image.parameters["radiance"][rows - window.row0, cols - window.col0]
    order = np.argsort(ids[keep], kind="stable")
    keep = keep[order]
    band = image.geoloc.grid.band
    columns = zip(
        ids[keep].tolist(),
        times[keep].tolist(),
        np.degrees(lat[keep]).tolist(),
        np.degrees(lon[keep]).tolist(),
        rows[order].tolist(),
        cols[order].tolist(),
        np.degrees(pixel_lat[order]).tolist(),
        np.degrees(pixel_lon[order]).tolist(),
        radiance[order],
        dist[order].tolist(),
        (dt_us[keep] / 1e6).tolist(),
        keep.tolist(),
    )
    return [
        CollocatedPixel(
            pid, t, tlat, tlon, band, r, c, plat, plon, rad, d, dt,
            tuple(track[i].heights), tuple(track[i].cloud_class),
        )
        for pid, t, tlat, tlon, r, c, plat, plon, rad, d, dt, i in columns
    ]


def collocate_detailed(track, image, cfg):
    """Transformer t with drop counters, returns ``(records, stats)``"""
    _check_image(image, cfg)
    stats = CollocStats()
    keep, ids, times, lat, lon, x, y, dt_us = _prefilter(track, image, cfg, stats)
    grid = image.geoloc.grid
    window = image.geoloc.window
    keep, row, col = _on_image(keep, x, y, image, stats)
    if keep.size == 0:
        return [], stats

    # 3x3 candidates in row-major order, argmin keeps the lowest (row, col) on ties
    d_row, d_col = np.divmod(np.arange(9), 3)
    cand_r = row[:, None] + (d_row - 1)
    cand_c = col[:, None] + (d_col - 1)
    inside = _in_window(cand_r, cand_c, window)
    cx, cy = pixel_to_scan_many(cand_r, cand_c, grid)
    clat, clon = inverse_many(cx, cy, image.geoloc.consts)
    dist = _haversine_km(lat[keep][:, None], lon[keep][:, None], clat, clon)
    dist = np.where(inside & np.isfinite(dist), dist, np.inf)
    best = np.argmin(dist, axis=1)
    pick = np.arange(keep.size)
    best_dist = dist[pick, best]

    near = best_dist <= cfg.d_max_km
    stats.dropped_dist += int(np.count_nonzero(~near))
    sel = pick[near]
    records = _emit(
        track,
        image,
        keep[near],
        cand_r[sel, best[sel]],
        cand_c[sel, best[sel]],
        clat[sel, best[sel]],
        clon[sel, best[sel]],
        best_dist[near],
        ids,
        times,
        lat,
        lon,
        dt_us,
    )
    stats.records = len(records)
    app_log.debug(f"Collocated {image.meta.uri}: {stats.summary()}")
    return records, stats


def collocate(track, image, cfg):
    """Transformer t: Pixel A&B records of the profiles matching image pixels"""
    records, _ = collocate_detailed(track, image, cfg)
    return records


def collocate_bruteforce(track, image, cfg):
    """Exhaustive reference for :func:`collocate` on small scenes

    Profiles beyond the window footprint are dropped as :func:`collocate` drops
    them, every other profile is compared with every pixel of the window.
    """
    _check_image(image, cfg)
    window = image.geoloc.window
    if window.rows > BRUTEFORCE_MAX_SIDE or window.cols > BRUTEFORCE_MAX_SIDE:
        raise SceneTooLarge(
            f"Scene {window.rows}x{window.cols} exceeds {BRUTEFORCE_MAX_SIDE} pixels a side"
        )
    stats = CollocStats()
    keep, ids, times, lat, lon, x, y, dt_us = _prefilter(track, image, cfg, stats)
    keep, _, _ = _on_image(keep, x, y, image, stats)
    grid_r, grid_c = np.meshgrid(
        np.arange(window.row0, window.row0 + window.rows),
        np.arange(window.col0, window.col0 + window.cols),
        indexing="ij",
    )
    px, py = pixel_to_scan_many(grid_r.ravel(), grid_c.ravel(), image.geoloc.grid)
    plat, plon = inverse_many(px, py, image.geoloc.consts)

    matched = []
    for i in keep.tolist():
        dist = _haversine_km(lat[i], lon[i], plat, plon)
        dist = np.where(np.isfinite(dist), dist, np.inf)
        if dist.size == 0:
            continue
        k = int(np.argmin(dist))
        if dist[k] <= cfg.d_max_km:
            matched.append((i, k, dist[k]))

    if not matched:
        return []
    idx = np.array([m[0] for m in matched], dtype=np.int64)
    flat = np.array([m[1] for m in matched], dtype=np.int64)
    return _emit(
        track,
        image,
        idx,
        grid_r.ravel()[flat],
        grid_c.ravel()[flat],
        plat[flat],
        plon[flat],
        np.array([m[2] for m in matched]),
        ids,
        times,
        lat,
        lon,
        dt_us,
    )


def neighborhood(image, record, k=3):
    """k x k radiance block centered on a record's pixel, NaN outside the image"""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"Neighborhood size must be a positive odd number, got {k}")
    window = image.geoloc.window
    radiance = image.parameters["radiance"]
    half = k // 2
    block = np.full((k, k), np.nan, dtype=radiance.dtype)
    for i in range(k):
        for j in range(k):
            r = record.pixel_row - half + i
            c = record.pixel_col - half + j
            if window.contains(r, c):
                block[i, j] = radiance[r - window.row0, c - window.col0]
    return block

