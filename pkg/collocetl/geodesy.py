"""
Geostationary fixed-grid geometry.

Converts geodetic coordinates to the scan angles seen from a geostationary
perspective point and back, and maps scan angles onto the regular pixel grid
of each imager band. The formulas follow the GOES-R fixed grid navigation
(L1b PUG volume 3, section 5.1.2.2).

All angles are radians; degrees only appear in the ``*_deg`` helpers.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NotVisible, OffDisk, OutOfGrid, UnknownBand

# GRS80 ellipsoid and the GOES-R perspective point, measured from the Earth center
R_EQ = 6378137.0
R_POL = 6356752.31414
H_CENTER = 42164160.0
LON0_DEG = -76.0

# scan-angle increment per km of nadir resolution
DELTA_PER_KM = 28e-6

# (resolution_km, image side in pixels) per band
_BAND_TABLE = {
    2: (0.5, 16272),
    **{band: (1.0, 10848) for band in (1, 3, 5)},
    **{band: (2.0, 5424) for band in (4, *range(6, 17))},
}


def wrap_lon(lon):
    """Wrap a longitude in radians into (-pi, pi]"""
    wrapped = math.remainder(lon, 2 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2 * math.pi
    return wrapped


def _wrap_lon_array(lon):
    wrapped = np.remainder(lon + np.pi, 2 * np.pi) - np.pi
    return np.where(wrapped <= -np.pi, wrapped + 2 * np.pi, wrapped)


@dataclass(frozen=True)
class EllipsoidConsts:
    """The geos(h, lon_c, Re, Rp) constants

    ``H`` is the distance of the perspective point from the Earth center, the
    height above the equator is available as :func:`perspective_height`.
    """

    r_eq: float = R_EQ
    r_pol: float = R_POL
    H: float = H_CENTER
    lon0: float = math.radians(LON0_DEG)

    def __post_init__(self):
        if not 0 < self.r_pol < self.r_eq < self.H:
            raise ValueError(
                f"Ellipsoid constants must satisfy 0 < r_pol < r_eq < H, got "
                f"r_pol={self.r_pol} r_eq={self.r_eq} H={self.H}"
            )
        object.__setattr__(self, "lon0", wrap_lon(self.lon0))

    @classmethod
    def from_config(cls, r_eq=R_EQ, r_pol=R_POL, H=H_CENTER, lon0_deg=LON0_DEG):
        return cls(r_eq=r_eq, r_pol=r_pol, H=H, lon0=math.radians(lon0_deg))

    def to_dict(self):
        return {
            "r_eq": self.r_eq,
            "r_pol": self.r_pol,
            "H": self.H,
            "lon0_deg": math.degrees(self.lon0),
        }

    @property
    def e2(self):
        return 1.0 - (self.r_pol * self.r_pol) / (self.r_eq * self.r_eq)


DEFAULT_CONSTS = EllipsoidConsts()


def perspective_height(consts=DEFAULT_CONSTS):
    """Height of the perspective point above the equator, in meters"""
    return consts.H - consts.r_eq


@dataclass(frozen=True)
class GeodeticPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not math.isfinite(self.lat) or abs(self.lat) > math.pi / 2:
            raise ValueError(f"Latitude {self.lat} rad is outside [-pi/2, pi/2]")
        if not math.isfinite(self.lon):
            raise ValueError(f"Longitude {self.lon} is not finite")
        object.__setattr__(self, "lon", wrap_lon(self.lon))

    @classmethod
    def from_deg(cls, lat_deg, lon_deg):
        return cls(math.radians(lat_deg), math.radians(lon_deg))

    @property
    def lat_deg(self):
        return math.degrees(self.lat)

    @property
    def lon_deg(self):
        return math.degrees(self.lon)


class ScanAngle(NamedTuple):
    x: float
    y: float


class PixelIndex(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class GridParams:
    band: int
    resolution_km: float
    n: int
    delta: float

    @property
    def center(self):
        """Fractional index of the grid center, (n - 1) / 2"""
        return (self.n - 1) / 2

    @property
    def x0(self):
        return -self.center * self.delta

    @property
    def y0(self):
        return self.center * self.delta

    @property
    def half_width(self):
        """Half the scan-angle extent covered by the full grid"""
        return self.n / 2 * self.delta


@dataclass(frozen=True)
class ImageWindow:
    """A rectangular block of the fixed grid, in global pixel indices"""

    row0: int
    col0: int
    rows: int
    cols: int

    def __post_init__(self):
        if self.row0 < 0 or self.col0 < 0 or self.rows < 0 or self.cols < 0:
            raise ValueError(f"Invalid image window {self}")

    @classmethod
    def full(cls, grid):
        return cls(0, 0, grid.n, grid.n)

    def fits(self, grid):
        return self.row0 + self.rows <= grid.n and self.col0 + self.cols <= grid.n

    def contains(self, row, col):
        return (
            self.row0 <= row < self.row0 + self.rows
            and self.col0 <= col < self.col0 + self.cols
        )


def grid_params_for_band(band):
    """Fixed-grid parameters of an imager band

    delta is derived from the band resolution so that one pixel spans about
    the nominal resolution at nadir.
    """
    if isinstance(band, bool) or band not in _BAND_TABLE:
        raise UnknownBand(f"Unknown band {band!r}, expected an integer in 1..16")
    resolution_km, n = _BAND_TABLE[band]
    return GridParams(
        band=band, resolution_km=resolution_km, n=n, delta=resolution_km * DELTA_PER_KM
    )


def geocentric_lat(lat, consts=DEFAULT_CONSTS):
    """Geocentric latitude of a geodetic latitude"""
    if abs(lat) > math.pi / 2:
        raise ValueError(f"Latitude {lat} rad is outside [-pi/2, pi/2]")
    if abs(lat) == math.pi / 2:
        return lat
    ratio = (consts.r_pol * consts.r_pol) / (consts.r_eq * consts.r_eq)
    return math.atan(ratio * math.tan(lat))


def _satellite_vector(lat, lon, consts):
    phi_c = geocentric_lat(lat, consts)
    cos_phi = math.cos(phi_c)
    r_c = consts.r_pol / math.sqrt(1.0 - consts.e2 * cos_phi * cos_phi)
    dlon = lon - consts.lon0
    s_x = consts.H - r_c * cos_phi * math.cos(dlon)
    s_y = -r_c * cos_phi * math.sin(dlon)
    s_z = r_c * math.sin(phi_c)
    return s_x, s_y, s_z


def _visible(s_x, s_y, s_z, consts):
    # the point lies on the ellipsoid, so H * (H - s_x) >= r_eq**2 is the
    # tangent-plane test written in satellite-frame components
    p_x = consts.H - s_x
    ratio = (consts.r_eq * consts.r_eq) / (consts.r_pol * consts.r_pol)
    return consts.H * p_x >= p_x * p_x + s_y * s_y + ratio * s_z * s_z


def is_visible(p, consts=DEFAULT_CONSTS):
    """Whether the line of sight from the perspective point reaches p"""
    return _visible(*_satellite_vector(p.lat, p.lon, consts), consts)


def forward(p, consts=DEFAULT_CONSTS):
    """Geodetic point to scan angle"""
    s_x, s_y, s_z = _satellite_vector(p.lat, p.lon, consts)
    if not _visible(s_x, s_y, s_z, consts):
        raise NotVisible(
            f"Point ({p.lat_deg:.6f}, {p.lon_deg:.6f}) deg is behind the limb"
        )
    norm = math.sqrt(s_x * s_x + s_y * s_y + s_z * s_z)
    return ScanAngle(math.asin(-s_y / norm), math.atan(s_z / s_x))


def inverse(a, consts=DEFAULT_CONSTS):
    """Scan angle to geodetic point, taking the near intersection"""
    x, y = a
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"Scan angle {a} is not finite")
    ratio = (consts.r_eq * consts.r_eq) / (consts.r_pol * consts.r_pol)
    sin_x, cos_x = math.sin(x), math.cos(x)
    sin_y, cos_y = math.sin(y), math.cos(y)
    qa = sin_x * sin_x + cos_x * cos_x * (cos_y * cos_y + ratio * sin_y * sin_y)
    qb = -2.0 * consts.H * cos_x * cos_y
    qc = consts.H * consts.H - consts.r_eq * consts.r_eq
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        raise OffDisk(f"Scan angle ({x}, {y}) rad does not intersect the Earth")
    r_s = (-qb - math.sqrt(disc)) / (2.0 * qa)
    s_x = r_s * cos_x * cos_y
    s_y = -r_s * sin_x
    s_z = r_s * cos_x * sin_y
    lat = math.atan(ratio * s_z / math.sqrt((consts.H - s_x) ** 2 + s_y * s_y))
    lon = consts.lon0 - math.atan(s_y / (consts.H - s_x))
    return GeodeticPoint(lat, lon)


def forward_many(lat, lon, consts=DEFAULT_CONSTS):
    """Vectorised :func:`forward`

    Returns ``(x, y, visible)``; x and y are NaN where the point is not visible.
    """
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    ratio = (consts.r_pol * consts.r_pol) / (consts.r_eq * consts.r_eq)
    pole = np.abs(lat) == np.pi / 2
    phi_c = np.where(pole, lat, np.arctan(ratio * np.tan(np.where(pole, 0.0, lat))))
    cos_phi = np.cos(phi_c)
    r_c = consts.r_pol / np.sqrt(1.0 - consts.e2 * cos_phi * cos_phi)
    dlon = lon - consts.lon0
    s_x = consts.H - r_c * cos_phi * np.cos(dlon)
    s_y = -r_c * cos_phi * np.sin(dlon)
    s_z = r_c * np.sin(phi_c)
    visible = _visible(s_x, s_y, s_z, consts)
    norm = np.sqrt(s_x * s_x + s_y * s_y + s_z * s_z)
    with np.errstate(invalid="ignore"):
        x = np.where(visible, np.arcsin(-s_y / norm), np.nan)
        y = np.where(visible, np.arctan(s_z / s_x), np.nan)
    return x, y, visible


def inverse_many(x, y, consts=DEFAULT_CONSTS):
    """Vectorised :func:`inverse`, NaN where the scan angle is off the disk"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ratio = (consts.r_eq * consts.r_eq) / (consts.r_pol * consts.r_pol)
    sin_x, cos_x = np.sin(x), np.cos(x)
    sin_y, cos_y = np.sin(y), np.cos(y)
    qa = sin_x * sin_x + cos_x * cos_x * (cos_y * cos_y + ratio * sin_y * sin_y)
    qb = -2.0 * consts.H * cos_x * cos_y
    qc = consts.H * consts.H - consts.r_eq * consts.r_eq
    disc = qb * qb - 4.0 * qa * qc
    with np.errstate(invalid="ignore"):
        r_s = np.where(disc >= 0, (-qb - np.sqrt(disc)) / (2.0 * qa), np.nan)
    s_x = r_s * cos_x * cos_y
    s_y = -r_s * sin_x
    s_z = r_s * cos_x * sin_y
    lat = np.arctan(ratio * s_z / np.sqrt((consts.H - s_x) ** 2 + s_y * s_y))
    lon = _wrap_lon_array(consts.lon0 - np.arctan(s_y / (consts.H - s_x)))
    return lat, lon


def _round_half_away(value):
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def round_half_away_many(values):
    return np.copysign(np.floor(np.abs(values) + 0.5), values)


def fractional_index(a, g):
    """Fractional (row, col) of a scan angle on the grid"""
    return g.center - a[1] / g.delta, a[0] / g.delta + g.center


def scan_to_pixel(a, g):
    """Nearest pixel center of a scan angle"""
    if not (math.isfinite(a[0]) and math.isfinite(a[1])):
        raise ValueError(f"Scan angle {a} is not finite")
    row_f, col_f = fractional_index(a, g)
    row, col = _round_half_away(row_f), _round_half_away(col_f)
    if not (0 <= row < g.n and 0 <= col < g.n):
        raise OutOfGrid(f"Scan angle {tuple(a)} falls outside the band {g.band} grid")
    return PixelIndex(row, col)


def pixel_to_scan(p, g):
    """Scan angle of a pixel center"""
    row, col = p
    if not (0 <= row < g.n and 0 <= col < g.n):
        raise OutOfGrid(f"Pixel {tuple(p)} is outside the band {g.band} grid")
    return ScanAngle((col - g.center) * g.delta, (g.center - row) * g.delta)


def pixel_to_scan_many(rows, cols, g):
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    return (cols - g.center) * g.delta, (g.center - rows) * g.delta
