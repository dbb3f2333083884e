import math
from datetime import datetime, timedelta, timezone

import numpy as np
from pytest import approx, mark, raises

from ..colloc import MEAN_EARTH_RADIUS_KM, great_circle_km
from ..geodesy import GeodeticPoint, ImageWindow
from ..granule import (
    FormatTag,
    parse_abi_key,
    parse_cpr_name,
    read_granule,
    time_range,
    to_common,
    write_granule,
)
from ..synthgen import (
    HEIGHT_LADDER_M,
    SceneSpec,
    TrackSpec,
    gen_image,
    gen_track,
    gen_track_granule,
    write_fixture,
)

T0 = datetime(2019, 4, 10, 12, 3, tzinfo=timezone.utc)


def track_spec(count=200, azimuth_deg=0.0, lat=0.01, lon=-75.99, **kwargs):
    return TrackSpec(
        start=GeodeticPoint.from_deg(lat, lon),
        azimuth=math.radians(azimuth_deg),
        count=count,
        t0=T0,
        **kwargs,
    )


def scene(rule="ramp", window=ImageWindow(100, 200, 8, 8), t_start=T0, **kwargs):
    return SceneSpec(band=13, rule=rule, t_start=t_start, window=window, **kwargs)


def test_empty_track():
    assert gen_track(track_spec(count=0)) == []
    granule = gen_track_granule(track_spec(count=0))
    assert granule.count == 0
    assert time_range(granule) == (T0, T0)


def test_north_step():
    first, second = gen_track(track_spec(count=2, lat=0.0, lon=-76.0))
    assert first.point == GeodeticPoint.from_deg(0.0, -76.0)
    assert second.point.lat == approx(1.1 / MEAN_EARTH_RADIUS_KM, rel=1e-12)
    assert math.degrees(second.point.lat) == approx(1.1 / 111.195, rel=1e-5)
    assert second.point.lon == approx(first.point.lon, abs=1e-15)
    assert second.time - first.time == 157143


@mark.parametrize("azimuth_deg", [0.0, 37.0, 90.0, 180.0, 251.5])
def test_spacing(azimuth_deg):
    track = gen_track(track_spec(count=50, azimuth_deg=azimuth_deg, lat=40.0, lon=10.0))
    steps = [great_circle_km(p.point, q.point) for p, q in zip(track, track[1:])]
    assert steps == approx([1.1] * 49, abs=1e-9)


def test_track_profiles():
    track = gen_track(track_spec(count=20))
    assert [p.profile_id for p in track] == list(range(20))
    assert all(p.heights == HEIGHT_LADDER_M for p in track)
    assert [p.cloud_class[0] for p in track] == [i % 9 for i in range(20)]
    times = [p.time for p in track]
    assert times == sorted(times)


def test_track_spec_validation():
    with raises(ValueError):
        track_spec(count=-1)
    with raises(ValueError):
        track_spec(spacing=0)
    with raises(ValueError):
        track_spec(ground_speed=-7.0)


def test_track_spec_from_dict():
    spec = TrackSpec.from_dict(
        {"start_lat_deg": 1, "start_lon_deg": 2, "count": 3, "t0": "2019-04-10T12:03:00Z"}
    )
    assert spec.start == GeodeticPoint.from_deg(1, 2)
    assert spec.azimuth == 0.0
    assert spec.spacing == 1.1
    assert spec.t0 == T0


def test_ramp():
    image = gen_image(scene())
    radiance = image.parameters["radiance"]
    assert radiance.dtype == np.float32
    assert radiance.shape == (8, 8)
    assert radiance[3, 5] == 29
    assert radiance[7, 7] == 63


def test_constant():
    image = gen_image(scene("constant", value=1.0))
    assert (image.parameters["radiance"] == 1.0).all()


def test_checker():
    radiance = gen_image(scene("checker", k=2)).parameters["radiance"]
    assert radiance[:2, :2].tolist() == [[0, 0], [0, 0]]
    assert radiance[:2, 2:4].tolist() == [[1, 1], [1, 1]]
    assert radiance[2, 0] == 1
    assert radiance[2, 2] == 0


def test_scene_spec_validation():
    with raises(ValueError):
        scene("gradient")
    with raises(ValueError):
        scene(k=0)
    with raises(ValueError):
        scene(window=ImageWindow(5420, 0, 8, 8))


def test_image_meta():
    image = gen_image(scene(), source_id="A")
    assert image.meta.format is FormatTag.EXT_A
    assert image.meta.source_id == "A"
    assert image.meta.t_end - image.meta.t_start == timedelta(minutes=10)
    parsed = parse_abi_key(image.meta.uri, source_id="A")
    assert parsed == image.meta
    assert to_common(image).time_us == int(T0.timestamp()) * 1_000_000


def test_image_start_is_truncated_to_tenths():
    image = gen_image(scene(t_start=T0 + timedelta(microseconds=123456)))
    assert image.meta.t_start == T0 + timedelta(microseconds=100000)
    assert parse_abi_key(image.meta.uri).t_start == image.meta.t_start


def test_track_granule_meta():
    granule = gen_track_granule(track_spec(), source_id="B")
    assert granule.meta.format is FormatTag.EXT_B
    assert granule.units["time"] == "doy_s"
    parsed = parse_cpr_name(granule.meta.uri, source_id="B")
    assert parsed.t_start == T0
    assert parsed.granule_id == 1
    assert parsed.product == "2B-CLDCLASS"
    t0, t1 = time_range(granule)
    assert t0 == T0
    assert (t1 - t0).total_seconds() == approx(199 * 1.1 / 7.0, abs=1e-6)


def test_deterministic():
    assert write_granule(gen_image(scene())) == write_granule(gen_image(scene()))
    assert write_granule(gen_track_granule(track_spec())) == write_granule(
        gen_track_granule(track_spec())
    )


def test_write_fixture(tmp_path):
    granule = gen_track_granule(track_spec(count=5))
    path = write_fixture(granule, tmp_path)
    assert path == tmp_path / granule.meta.uri
    assert read_granule(path.read_bytes()) == granule
