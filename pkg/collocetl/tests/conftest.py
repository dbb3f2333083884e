"""Py.Test fixtures"""

import json
from types import SimpleNamespace

from pytest import fixture
from tornado.httpclient import AsyncHTTPClient

from ..synthgen import SceneSpec, TrackSpec, gen_image, gen_track_granule, write_fixture
from .mocks import MockAsyncHTTPClient

# 1 km band: every profile of the scenario lies within 0.71 km of a pixel center
SCENARIO_BAND = 3
SCENARIO_WINDOW = [5180, 5400, 260, 48]

SYNTH = {
    "track": {
        "start_lat_deg": 0.01,
        "start_lon_deg": -75.99,
        "azimuth_deg": 0.0,
        "count": 200,
        "t0": "2019-04-10T12:03:00Z",
    },
    "scene": {
        "band": SCENARIO_BAND,
        "rule": "ramp",
        "t_start": "2019-04-10T12:00:00Z",
        "window": SCENARIO_WINDOW,
    },
}


@fixture
def client(request):
    """Return mocked AsyncHTTPClient"""
    before = AsyncHTTPClient.configured_class()
    AsyncHTTPClient.configure(MockAsyncHTTPClient)
    request.addfinalizer(lambda: AsyncHTTPClient.configure(before))
    c = AsyncHTTPClient()
    assert isinstance(c, MockAsyncHTTPClient)
    return c


@fixture
def cache_env(monkeypatch):
    """No fetch cache unless a test asks for one"""
    monkeypatch.delenv("COLLOC_ETL_CACHE", raising=False)


def write_config(path, doc):
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


def scenario_config(tmp_path, synth=None):
    return {
        "sources": [
            {"id": "A", "kind": "LocalDir", "root": str(tmp_path / "a")},
            {"id": "B", "kind": "RemoteDir", "root": str(tmp_path / "b")},
        ],
        "colloc": {"band": SCENARIO_BAND, "image_source": "A", "track_source": "B"},
        "output": {"dir": str(tmp_path / "products"), "format": "jsonl"},
        "synth": synth or SYNTH,
    }


@fixture
def scenario(tmp_path, cache_env):
    """Synthetic image and track fixtures in two local sources, plus their config"""
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    doc = scenario_config(tmp_path)
    image = gen_image(SceneSpec.from_dict(SYNTH["scene"]), source_id="A")
    track = gen_track_granule(TrackSpec.from_dict(SYNTH["track"]), source_id="B")
    write_fixture(image, tmp_path / "a")
    write_fixture(track, tmp_path / "b")
    return SimpleNamespace(
        root=tmp_path,
        doc=doc,
        config=write_config(tmp_path / "etl.json", doc),
        image=image,
        track=track,
        products=tmp_path / "products",
    )
