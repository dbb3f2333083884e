import math

import numpy as np
from pytest import approx, mark, raises

from ..errors import NotVisible, OffDisk, OutOfGrid, UnknownBand
from ..geodesy import (
    DEFAULT_CONSTS,
    EllipsoidConsts,
    GeodeticPoint,
    PixelIndex,
    ScanAngle,
    _satellite_vector,
    forward,
    forward_many,
    grid_params_for_band,
    inverse,
    inverse_many,
    is_visible,
    perspective_height,
    pixel_to_scan,
    scan_to_pixel,
    wrap_lon,
)

LON0 = DEFAULT_CONSTS.lon0


def at(lat_deg, dlon_deg):
    """Geodetic point dlon_deg east of the sub-satellite meridian"""
    return GeodeticPoint(math.radians(lat_deg), LON0 + math.radians(dlon_deg))


@mark.parametrize(
    "test_variation_id,band,resolution_km,n,delta",
    [
        ("00", 2, 0.5, 16272, 14e-6),
        ("01", 1, 1.0, 10848, 28e-6),
        ("02", 3, 1.0, 10848, 28e-6),
        ("03", 5, 1.0, 10848, 28e-6),
        ("04", 4, 2.0, 5424, 56e-6),
        ("05", 6, 2.0, 5424, 56e-6),
        ("06", 13, 2.0, 5424, 56e-6),
        ("07", 16, 2.0, 5424, 56e-6),
    ],
)
def test_grid_params_for_band(test_variation_id, band, resolution_km, n, delta):
    g = grid_params_for_band(band)
    assert g.band == band
    assert g.resolution_km == resolution_km
    assert g.n == n
    assert g.delta == approx(delta, rel=1e-12)
    assert g.center == (n - 1) / 2


@mark.parametrize("band", [0, 17, -1, True, "13", None])
def test_grid_params_unknown_band(band):
    with raises(UnknownBand):
        grid_params_for_band(band)


def test_grid_table_ratios():
    n = {band: grid_params_for_band(band).n for band in range(1, 17)}
    assert n[2] == 3 * n[13]
    assert n[1] == n[3] == n[5] == 2 * n[13]
    assert {n[b] for b in (4, *range(6, 17))} == {5424}


@mark.parametrize("band", [1, 3, 4, 5, *range(6, 17)])
def test_grid_matches_disk(band):
    g = grid_params_for_band(band)
    angular_radius = math.asin(DEFAULT_CONSTS.r_eq / DEFAULT_CONSTS.H)
    assert abs(g.half_width - angular_radius) < 5e-5


def test_band_2_grid_is_narrower_than_disk():
    g = grid_params_for_band(2)
    angular_radius = math.asin(DEFAULT_CONSTS.r_eq / DEFAULT_CONSTS.H)
    assert g.half_width < angular_radius - 5e-5


def test_perspective_height():
    assert perspective_height() == approx(35786023.0)


def test_equatorial_reduction():
    s_x, s_y, s_z = _satellite_vector(0.0, LON0, DEFAULT_CONSTS)
    assert abs((DEFAULT_CONSTS.H - s_x) - DEFAULT_CONSTS.r_eq) < 1e-6
    assert s_y == 0
    assert s_z == 0


def test_forward_sub_satellite():
    a = forward(GeodeticPoint(0.0, LON0))
    assert abs(a.x) < 1e-12
    assert abs(a.y) < 1e-12


def test_forward_one_degree_east():
    a = forward(at(0, 1))
    # oracle: slant vector of an equatorial point on a sphere of radius r_eq
    dlon = math.radians(1)
    c = DEFAULT_CONSTS
    s_x = c.H - c.r_eq * math.cos(dlon)
    s_y = -c.r_eq * math.sin(dlon)
    expected = math.asin(-s_y / math.hypot(s_x, s_y))
    assert a.x == approx(expected, abs=1e-12)
    assert a.x == approx(3.110e-3, abs=1e-6)
    assert a.y == approx(0, abs=1e-15)


def test_forward_antipode():
    with raises(NotVisible):
        forward(at(0, 180))


@mark.parametrize(
    "test_variation_id,lat_deg,dlon_deg,expect_visible",
    [
        ("00", 0, 0, True),
        ("01", 0, 180, False),
        ("02", 0, 81.3, False),
        ("03", 0, 81.2, True),
        ("04", 0, -81.3, False),
        ("05", 0, -81.2, True),
        ("06", 81.0, 0, True),
        ("07", 82.0, 0, False),
        ("08", 90.0, 0, False),
    ],
)
def test_is_visible(test_variation_id, lat_deg, dlon_deg, expect_visible):
    assert is_visible(at(lat_deg, dlon_deg)) is expect_visible


def test_limb_longitude():
    limb = math.acos(DEFAULT_CONSTS.r_eq / DEFAULT_CONSTS.H)
    assert is_visible(GeodeticPoint(0.0, LON0 + limb - 1e-9))
    assert not is_visible(GeodeticPoint(0.0, LON0 + limb + 1e-9))


def test_visible_iff_forward():
    rng = np.random.default_rng(42)
    for lat, lon in zip(rng.uniform(-90, 90, 2000), rng.uniform(-180, 180, 2000)):
        p = GeodeticPoint.from_deg(lat, lon)
        try:
            forward(p)
        except NotVisible:
            assert not is_visible(p)
        else:
            assert is_visible(p)


def test_inverse_nadir():
    p = inverse(ScanAngle(0.0, 0.0))
    assert p.lat == approx(0, abs=1e-15)
    assert p.lon == approx(LON0, abs=1e-15)


def test_inverse_off_disk():
    with raises(OffDisk):
        inverse(ScanAngle(0.2, 0.2))


def test_inverse_not_finite():
    with raises(ValueError):
        inverse(ScanAngle(math.nan, 0.0))


def test_round_trip():
    rng = np.random.default_rng(7)
    worst = 0.0
    for lat, dlon in zip(rng.uniform(-55, 55, 2000), rng.uniform(-55, 55, 2000)):
        p = at(lat, dlon)
        q = inverse(forward(p))
        worst = max(worst, abs(q.lat - p.lat), abs(wrap_lon(q.lon - p.lon)))
    assert worst < 1e-9


def test_round_trip_many():
    rng = np.random.default_rng(11)
    lat = np.radians(rng.uniform(-60, 60, 10_000))
    lon = LON0 + np.radians(rng.uniform(-60, 60, 10_000))
    x, y, visible = forward_many(lat, lon)
    assert visible.any()
    lat2, lon2 = inverse_many(x[visible], y[visible])
    dlon = np.remainder(lon2 - lon[visible] + np.pi, 2 * np.pi) - np.pi
    assert np.max(np.abs(lat2 - lat[visible])) < 1e-9
    assert np.max(np.abs(dlon)) < 1e-9


def test_forward_many_matches_forward():
    rng = np.random.default_rng(3)
    lat = np.radians(rng.uniform(-90, 90, 500))
    lon = np.radians(rng.uniform(-180, 180, 500))
    x, y, visible = forward_many(lat, lon)
    for i in range(lat.size):
        p = GeodeticPoint(float(lat[i]), float(lon[i]))
        assert bool(visible[i]) == is_visible(p)
        if visible[i]:
            a = forward(p)
            assert x[i] == approx(a.x, abs=1e-15)
            assert y[i] == approx(a.y, abs=1e-15)
        else:
            assert np.isnan(x[i]) and np.isnan(y[i])


def test_inverse_many_off_disk_is_nan():
    lat, lon = inverse_many([0.0, 0.2], [0.0, 0.2])
    assert lat[0] == approx(0, abs=1e-15)
    assert np.isnan(lat[1]) and np.isnan(lon[1])


def test_forward_monotone_in_longitude():
    xs = [forward(at(0, d)).x for d in np.linspace(-0.999, 0.999, 201)]
    assert all(b > a for a, b in zip(xs, xs[1:]))


def test_scan_to_pixel_center():
    assert scan_to_pixel(ScanAngle(0.0, 0.0), grid_params_for_band(13)) == PixelIndex(2712, 2712)


def test_scan_to_pixel_out_of_grid():
    g = grid_params_for_band(13)
    with raises(OutOfGrid):
        scan_to_pixel(ScanAngle(g.half_width + g.delta, 0.0), g)
    with raises(OutOfGrid):
        scan_to_pixel(ScanAngle(0.0, -g.half_width - g.delta), g)


def test_pixel_to_scan_corner():
    g = grid_params_for_band(13)
    a = pixel_to_scan(PixelIndex(0, 0), g)
    assert a.x == approx(-2711.5 * 56e-6, rel=1e-12)
    assert a.y == approx(2711.5 * 56e-6, rel=1e-12)


@mark.parametrize("pixel", [(5424, 0), (0, 5424), (-1, 0)])
def test_pixel_to_scan_out_of_grid(pixel):
    with raises(OutOfGrid):
        pixel_to_scan(PixelIndex(*pixel), grid_params_for_band(13))


@mark.parametrize("band", [2, 3, 13])
def test_pixel_round_trip(band):
    g = grid_params_for_band(band)
    rng = np.random.default_rng(band)
    limit = g.half_width - g.delta
    for x, y in rng.uniform(-limit, limit, (1000, 2)):
        a = ScanAngle(float(x), float(y))
        p = scan_to_pixel(a, g)
        b = pixel_to_scan(p, g)
        assert abs(b.x - a.x) <= g.delta / 2 + 1e-15
        assert abs(b.y - a.y) <= g.delta / 2 + 1e-15
        assert scan_to_pixel(b, g) == p


def test_geodetic_point_validation():
    with raises(ValueError):
        GeodeticPoint(2.0, 0.0)
    with raises(ValueError):
        GeodeticPoint(0.0, math.inf)
    assert GeodeticPoint(0.0, 3 * math.pi).lon == approx(math.pi)
    assert GeodeticPoint(0.0, -math.pi).lon == approx(math.pi)


def test_consts_validation():
    with raises(ValueError):
        EllipsoidConsts(r_eq=1.0, r_pol=2.0)
    consts = EllipsoidConsts.from_config(lon0_deg=-137.0)
    assert consts.to_dict()["lon0_deg"] == approx(-137.0)
    assert forward(GeodeticPoint.from_deg(0, -137), consts) == approx((0, 0), abs=1e-12)
