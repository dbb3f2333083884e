import logging
from dataclasses import replace
from datetime import datetime, timedelta, timezone

import numpy as np
from pytest import fixture, mark, raises

from ..errors import CorruptContainer, MalformedKey, MissingBand, ShapeMismatch, UnsupportedFormat
from ..geodesy import DEFAULT_CONSTS, ImageWindow, grid_params_for_band
from ..granule import (
    DEFAULT_ORBIT_DURATION_S,
    GRAMMARS,
    FormatTag,
    Granule,
    GranuleMeta,
    GridGeoloc,
    TrackGeoloc,
    format_abi_key,
    format_cpr_name,
    format_name,
    from_epoch_us,
    parse_abi_key,
    parse_cpr_name,
    parse_name,
    read_granule,
    register_grammar,
    time_range,
    to_common,
    to_epoch_us,
    write_granule,
)
from ..synthgen import SceneSpec, gen_image

UTC = timezone.utc

ABI_KEY = (
    "ABI-L1b-RadF/2019/036/10/OR_ABI-L1b-RadF-M3C02_G16"
    "_s20190361000000_e20190361010000_c20190361010301.nc"
)
CPR_NAME = "2019100120300_00001_CS_2B-CLDCLASS_GRANULE_P1_R05_E00.hdf"


def image_meta(band, t_start, **kwargs):
    fields = dict(
        source_id="",
        product="ABI-L1b-RadF",
        band=band,
        t_start=t_start,
        t_end=t_start + timedelta(minutes=10),
        format=FormatTag.EXT_A,
        uri="",
        mode=6,
        platform="G16",
        t_created=t_start + timedelta(minutes=10, seconds=21.7),
    )
    fields.update(kwargs)
    return GranuleMeta(**fields)


def track_meta(**kwargs):
    fields = dict(
        source_id="B",
        product="2B-CLDCLASS",
        band=None,
        t_start=datetime(2019, 4, 10, 12, tzinfo=UTC),
        t_end=datetime(2019, 4, 10, 13, tzinfo=UTC),
        format=FormatTag.EXT_B,
        uri="track.sgr",
    )
    fields.update(kwargs)
    return GranuleMeta(**fields)


def track_granule(count, **units):
    rng = np.random.default_rng(count)
    return Granule(
        meta=track_meta(),
        time=np.linspace(43200.0, 43200.0 + count, count),
        geoloc=TrackGeoloc(lat=rng.uniform(-60, 60, count), lon=rng.uniform(-120, -30, count)),
        parameters={
            "profile_id": np.arange(count, dtype=np.int32),
            "heights": np.tile(np.float32([1000, 2000, 3000]), (count, 1)),
            "cloud_class": rng.integers(0, 9, (count, 3)).astype(np.uint8),
        },
        units={"time": "doy_s", "angle": "deg", **units},
    )


@fixture
def image8():
    spec = SceneSpec(
        band=13,
        rule="ramp",
        t_start=datetime(2019, 4, 10, 12, tzinfo=UTC),
        window=ImageWindow(2700, 2700, 8, 8),
    )
    return gen_image(spec)


def test_parse_abi_key():
    meta = parse_abi_key(ABI_KEY, source_id="A")
    assert meta.source_id == "A"
    assert meta.product == "ABI-L1b-RadF"
    assert meta.band == 2
    assert meta.format is FormatTag.EXT_A
    assert meta.mode == 3
    assert meta.platform == "G16"
    assert meta.t_start == datetime(2019, 2, 5, 10, 0, 0, tzinfo=UTC)
    assert meta.t_end == datetime(2019, 2, 5, 10, 10, 0, tzinfo=UTC)
    assert meta.t_created == datetime(2019, 2, 5, 10, 10, 30, 100000, tzinfo=UTC)
    assert meta.uri == ABI_KEY


@mark.parametrize(
    "test_variation_id,band,t_start",
    [
        ("00", 2, datetime(2019, 2, 5, 10, 0, 0, 300000, tzinfo=UTC)),
        ("01", 13, datetime(2019, 4, 10, 23, 50, 21, 900000, tzinfo=UTC)),
        ("02", 3, datetime(2020, 1, 1, 0, 0, 12, 300000, tzinfo=UTC)),
    ],
)
def test_abi_key_round_trip(test_variation_id, band, t_start):
    meta = image_meta(band, t_start)
    key = format_abi_key(meta)
    assert key.startswith(f"ABI-L1b-RadF/{t_start:%Y/%j/%H}/")
    assert parse_abi_key(key) == replace(meta, uri=key)
    assert format_abi_key(parse_abi_key(key)) == key


def test_abi_key_randomized_round_trip():
    rng = np.random.default_rng(2019)
    base = datetime(2017, 1, 1, tzinfo=UTC)
    for _ in range(1000):
        tenths = int(rng.integers(0, 4 * 365 * 24 * 36000))
        t_start = base + timedelta(microseconds=tenths * 100000)
        meta = image_meta(int(rng.integers(1, 17)), t_start, mode=int(rng.integers(1, 7)))
        key = format_abi_key(meta, suffix=".sgr")
        assert parse_abi_key(key) == replace(meta, uri=key)


@mark.parametrize(
    "test_variation_id,key,position",
    [
        # 13-digit start stamp
        ("00", ABI_KEY.replace("_s20190361000000", "_s2019036100000"), ABI_KEY.index("_s2") + 2),
        ("01", ABI_KEY.replace("C02", "C17"), ABI_KEY.index("C02") + 1),
        ("02", ABI_KEY.replace(".nc", ".hdf"), len(ABI_KEY) - 3),
        ("03", ABI_KEY.replace("/10/", "/11/"), ABI_KEY.index("_s2") + 1),
        ("04", ABI_KEY.replace("s20190361000000", "s20193661000000"), ABI_KEY.index("_s2") + 2),
        ("05", ABI_KEY + "x", len(ABI_KEY)),
        ("06", "", 0),
    ],
)
def test_parse_abi_key_malformed(test_variation_id, key, position):
    with raises(MalformedKey) as exc:
        parse_abi_key(key)
    assert exc.value.position == position
    assert exc.value.key == key
    assert exc.value.exit_code == 1
    assert exc.value.reason


def test_format_abi_key_needs_band():
    meta = replace(track_meta(), format=FormatTag.EXT_C)
    with raises(UnsupportedFormat):
        format_abi_key(meta)
    meta = replace(image_meta(13, datetime(2019, 1, 1, tzinfo=UTC)), format=FormatTag.EXT_C)
    with raises(MissingBand):
        format_abi_key(meta)


def test_parse_cpr_name():
    meta = parse_cpr_name("2B-CLDCLASS/2019/100/" + CPR_NAME, source_id="B", orbit_duration_s=60)
    assert meta.product == "2B-CLDCLASS"
    assert meta.band is None
    assert meta.format is FormatTag.EXT_B
    assert meta.granule_id == 1
    assert meta.release == 5
    assert meta.epoch == 0
    assert meta.t_start == datetime(2019, 4, 10, 12, 3, tzinfo=UTC)
    assert meta.t_end == datetime(2019, 4, 10, 12, 4, tzinfo=UTC)
    assert meta.uri == "2B-CLDCLASS/2019/100/" + CPR_NAME


def test_cpr_name_round_trip():
    meta = parse_cpr_name(CPR_NAME)
    assert format_cpr_name(meta) == CPR_NAME
    assert format_cpr_name(meta, with_prefix=True) == "2B-CLDCLASS/2019/100/" + CPR_NAME
    assert parse_cpr_name(format_cpr_name(meta)) == meta


def test_cpr_name_randomized_round_trip():
    rng = np.random.default_rng(2006)
    base = datetime(2006, 6, 1, tzinfo=UTC)
    products = ["2B-CLDCLASS", "2B-GEOPROF", "2B-CWC-RO", "1B-CPR"]
    for _ in range(1000):
        t_start = base + timedelta(seconds=int(rng.integers(0, 15 * 365 * 86400)))
        expected = track_meta(
            source_id="",
            product=products[int(rng.integers(len(products)))],
            t_start=t_start,
            t_end=t_start + timedelta(seconds=DEFAULT_ORBIT_DURATION_S),
            uri="",
            granule_id=int(rng.integers(1, 100000)),
            release=int(rng.integers(1, 100)),
            epoch=int(rng.integers(0, 100)),
        )
        name = format_cpr_name(expected)
        meta = parse_cpr_name(name)
        assert meta == replace(expected, uri=name)
        assert format_cpr_name(meta) == name
        assert parse_cpr_name(format_cpr_name(meta, with_prefix=True)) == replace(
            meta, uri=format_cpr_name(meta, with_prefix=True)
        )


@mark.parametrize(
    "test_variation_id,name,position",
    [
        ("00", CPR_NAME.replace("_CS_", "_"), 19),
        ("01", CPR_NAME.replace("2019100", "2019366"), 0),
        ("02", CPR_NAME.replace("120300", "250300"), 0),
        ("03", CPR_NAME.replace("_00001_", "_0001_"), 14),
        ("04", CPR_NAME.replace("_GRANULE_", "_"), 23),
        ("05", CPR_NAME.replace(".hdf", ".nc"), len(CPR_NAME) - 4),
    ],
)
def test_parse_cpr_name_malformed(test_variation_id, name, position):
    with raises(MalformedKey) as exc:
        parse_cpr_name(name)
    assert exc.value.position == position


def test_cpr_leap_day():
    meta = parse_cpr_name(CPR_NAME.replace("2019100", "2020366"))
    assert meta.t_start == datetime(2020, 12, 31, 12, 3, tzinfo=UTC)


def test_grammar_registry():
    assert parse_name("cpr", CPR_NAME) == parse_cpr_name(CPR_NAME)
    meta = parse_abi_key(ABI_KEY)
    assert format_name("abi", meta) == ABI_KEY

    def parse_flat(name, source_id=""):
        return replace(track_meta(), source_id=source_id, uri=name)

    register_grammar("flat", parse_flat, lambda meta: meta.uri)
    try:
        assert parse_name("flat", "x.sgr", source_id="S").source_id == "S"
        assert GRAMMARS["flat"].prefixes("P", None, None) == ["P/"]
    finally:
        del GRAMMARS["flat"]
    with raises(ValueError):
        parse_name("flat", "x.sgr")


def test_meta_invariants():
    t = datetime(2019, 1, 1, tzinfo=UTC)
    with raises(ValueError):
        track_meta(t_start=t, t_end=t - timedelta(microseconds=1))
    with raises(ValueError):
        image_meta(None, t)
    with raises(ValueError):
        track_meta(band=13)
    meta = image_meta(13, t)
    assert GranuleMeta.from_dict(meta.to_dict()) == meta


def test_epoch_us():
    t = datetime(2019, 4, 10, 12, 0, 0, 250000, tzinfo=UTC)
    assert to_epoch_us(t) == 1554897600250000
    assert from_epoch_us(1554897600250000) == t
    with raises(ValueError):
        to_epoch_us(datetime(2019, 4, 10))


def test_to_common_rejects_common():
    common = to_common(track_granule(4))
    with raises(UnsupportedFormat):
        to_common(common)


def test_to_common_image_radiance_unchanged(image8):
    common = to_common(image8)
    assert common.meta.format is FormatTag.EXT_C
    assert common.parameters["radiance"].tobytes() == image8.parameters["radiance"].tobytes()
    assert common.time_us == to_epoch_us(image8.meta.t_start)
    assert common.geoloc == image8.geoloc


def test_to_common_track_times_and_angles():
    raw = track_granule(5)
    common = to_common(raw)
    day = datetime(2019, 4, 10, tzinfo=UTC)
    for seconds, us in zip(raw.time.tolist(), common.time.tolist()):
        expected = day + timedelta(seconds=seconds)
        assert us == (expected - datetime(1970, 1, 1, tzinfo=UTC)) // timedelta(microseconds=1)
    assert common.time[0] == 1554897600000000
    np.testing.assert_allclose(np.degrees(common.geoloc.lat), raw.geoloc.lat, rtol=1e-15)
    for name in raw.parameters:
        assert common.parameters[name].tobytes() == raw.parameters[name].tobytes()


def test_to_common_fill_values():
    raw = track_granule(6, **{"fill.cloud_class": "7"})
    raw.parameters["cloud_class"][0, 0] = 7
    common = to_common(raw)
    assert common.parameters["cloud_class"][0, 0] == 255
    assert (common.parameters["cloud_class"] != 7).all()
    assert raw.parameters["cloud_class"][0, 0] == 7


@mark.parametrize(
    "test_variation_id,fill",
    [
        ("00", "-1"),
        ("01", "256"),
        ("02", "7.5"),
        ("03", "inf"),
    ],
)
def test_to_common_fill_outside_type(test_variation_id, fill, caplog):
    raw = track_granule(6, **{"fill.cloud_class": fill})
    raw.parameters["cloud_class"][0] = [255, 0, 7]
    with caplog.at_level(logging.WARNING):
        common = to_common(raw)
    np.testing.assert_array_equal(common.parameters["cloud_class"], raw.parameters["cloud_class"])
    assert repr(fill) in caplog.text


def test_to_common_radiance_fill(image8):
    radiance = image8.parameters["radiance"].copy()
    radiance[1, 2] = -999.0
    units = {**image8.units, "fill.radiance": "-999"}
    raw = replace(image8, parameters={"radiance": radiance}, units=units)
    common = to_common(raw)
    assert np.isnan(common.parameters["radiance"][1, 2])
    assert np.isnan(common.parameters["radiance"]).sum() == 1


def test_time_range():
    common = to_common(track_granule(10))
    t0, t1 = time_range(common)
    assert t0 == datetime(2019, 4, 10, 12, tzinfo=UTC)
    assert t1 == datetime(2019, 4, 10, 12, 0, 10, tzinfo=UTC)
    assert time_range(track_granule(10)) == (t0, t1)
    empty = track_granule(0)
    assert time_range(empty) == (empty.meta.t_start, empty.meta.t_end)


def test_container_round_trip_image(image8):
    data = write_granule(image8)
    assert data.startswith(b"SGR1{")
    assert read_granule(data) == image8


def test_container_round_trip_track():
    g = track_granule(100)
    assert read_granule(write_granule(g)) == g


def test_container_round_trip_empty_parameters():
    grid = grid_params_for_band(13)
    g = Granule(
        meta=replace(image_meta(13, datetime(2019, 1, 1, tzinfo=UTC)), uri="x.sgr"),
        time=np.int64(1546300800000000),
        geoloc=GridGeoloc(grid, DEFAULT_CONSTS, ImageWindow(0, 0, 0, 0)),
    )
    back = read_granule(write_granule(g))
    assert back == g
    assert back.parameters == {}


def test_container_round_trip_million():
    rng = np.random.default_rng(1)
    spec = SceneSpec(
        band=13,
        rule="constant",
        t_start=datetime(2019, 4, 10, 12, tzinfo=UTC),
        window=ImageWindow(2000, 2000, 1000, 1000),
    )
    g = gen_image(spec)
    radiance = rng.normal(size=(1000, 1000)).astype(np.float32)
    radiance[rng.integers(0, 1000, 50), rng.integers(0, 1000, 50)] = np.nan
    mask = rng.integers(0, 2, (1000, 1000)).astype(np.uint8)
    g = replace(g, parameters={"radiance": radiance, "mask": mask})
    back = read_granule(write_granule(g))
    assert back == g


def test_container_truncated_payload():
    data = write_granule(track_granule(100))
    # one profile short of the declared 100
    with raises(ShapeMismatch):
        read_granule(data[:-3])


@mark.parametrize(
    "test_variation_id,mutate,offset",
    [
        ("00", lambda d: b"SGR2" + d[4:], 0),
        ("01", lambda d: d[: d.index(b"\n\0")], None),
        ("02", lambda d: d[:4] + b"[" + d[5:], 4),
        ("03", lambda d: d.replace(b'"type": "f64"', b'"type": "f16"', 1), 4),
        ("04", lambda d: d.replace(b'"kind": "track"', b'"kind": "swath"', 1), 4),
    ],
)
def test_container_corrupt(test_variation_id, mutate, offset):
    data = mutate(write_granule(track_granule(3)))
    with raises(CorruptContainer) as exc:
        read_granule(data)
    assert exc.value.offset == (len(data) if offset is None else offset)


def test_container_infinite_radiance(image8):
    data = write_granule(image8)
    start = data.index(image8.parameters["radiance"].tobytes())
    data = data[:start] + np.float32(np.inf).tobytes() + data[start + 4 :]
    with raises(CorruptContainer) as exc:
        read_granule(data)
    assert exc.value.offset == 4
    assert "infinite" in exc.value.reason


def test_granule_shape_checks(image8):
    with raises(ShapeMismatch):
        replace(image8, parameters={"radiance": np.zeros((8, 7), np.float32)})
    with raises(ShapeMismatch):
        replace(image8, time=np.zeros(3))
    with raises(ValueError):
        replace(image8, parameters={"radiance": np.full((8, 8), np.inf, np.float32)})
    g = track_granule(4)
    with raises(ShapeMismatch):
        replace(g, time=g.time[:3])
