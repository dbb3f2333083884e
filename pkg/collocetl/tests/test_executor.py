import logging

from pytest import fixture, raises

from ..colloc import CollocConfig, collocate, granule_to_track
from ..config import config_from_dict
from ..errors import ConfigError, ConstraintViolation, CyclicGraph, InvalidGraph, NoTemporalMatch
from ..executor import (
    OPERATIONS,
    Common,
    Loaded,
    Matched,
    PipelineExecutor,
    Projected,
    register_operation,
    stats_of,
)
from ..granule import to_common
from ..loader import read_catalog, read_product
from ..pipeline_graph import (
    PipelineGraph,
    add_node,
    collocation_graph,
    concept,
    connect,
    etl_constraint,
    transformation,
)
from .conftest import SCENARIO_BAND


@fixture
def executor(scenario):
    config = config_from_dict(scenario.doc).to_traitlets_config()
    return PipelineExecutor(config=config, jobs=2, inputs={"imgB": scenario.track.meta.uri})


def replace_node(graph, node):
    return PipelineGraph(
        tuple(node if n.id == node.id else n for n in graph.nodes), graph.edges
    )


async def test_run_collocation_graph(executor, scenario):
    report = await executor.run(collocation_graph())
    assert executor.last_report is report

    matched = report.artifacts["pixelAB"]
    assert isinstance(matched, Matched)
    assert len(matched.records) == 200
    assert matched.stats.summary() == "records=200 dropped_invisible=0 dropped_dt=0 dropped_dist=0"
    assert matched.image_meta.uri == scenario.image.meta.uri
    assert matched.track_meta.uri == scenario.track.meta.uri
    assert stats_of(report) is matched.stats

    assert isinstance(report.artifacts["common"], Common)
    projected = report.artifacts["projected"]
    assert isinstance(projected, Projected)
    assert projected.profile_ids == frozenset(range(200))

    loaded = report.artifacts["store"]
    assert isinstance(loaded, Loaded)
    assert loaded.appended
    assert read_product(loaded.product.path) == matched.records
    (entry,) = read_catalog(scenario.products / "catalog.jsonl")
    assert entry.product_id == loaded.product.product_id
    assert entry.cfg == {"band": SCENARIO_BAND, "d_max_km": 1.1, "dt_max_s": 900.0}

    statuses = dict(report.statuses)
    assert all(status == "ok" for status in statuses.values())
    assert statuses["k_dt_le_dt_max"] == "ok"
    assert statuses["k_dist_le_d_max"] == "ok"
    assert report.stages[0] == ["imgA", "imgB"]


async def test_pipeline_matches_collocate(executor, scenario):
    report = await executor.run(collocation_graph())
    track = granule_to_track(to_common(scenario.track))
    expected = collocate(track, to_common(scenario.image), CollocConfig(band=SCENARIO_BAND))
    assert report.artifacts["pixelAB"].records == expected


async def test_inputs_override_payload(executor, scenario):
    executor.inputs = {"imgA": scenario.image.meta.uri}
    report = await executor.run(collocation_graph(track_uri=scenario.track.meta.uri))
    assert report.artifacts["imgA"].meta.uri == scenario.image.meta.uri
    assert len(report.artifacts["pixelAB"].records) == 200


async def test_constraint_violation(executor, scenario, caplog):
    graph = replace_node(
        collocation_graph(),
        etl_constraint("k_dist_le_d_max", "dist_le_d_max", ["AB.dist"], params={"d_max_km": 0.001}),
    )
    with raises(ConstraintViolation) as e:
        await executor.run(graph)
    assert e.value.constraint_id == "k_dist_le_d_max"
    assert e.value.exit_code == 5
    assert ("k_dist_le_d_max", "violated") in executor.last_report.statuses
    assert "Constraint k_dist_le_d_max violated" in caplog.text
    # the loader never ran
    assert "load" not in executor.last_report.artifacts
    assert not scenario.products.exists()


async def test_records_nonempty_holds(executor):
    report = await executor.run(collocation_graph(constraints=("records_nonempty",)))
    assert ("k_records_nonempty", "ok") in report.statuses


async def test_cyclic_graph(executor, scenario):
    graph = PipelineGraph()
    for n in (
        concept("x", "ExtC_Common", source="A"),
        transformation("f", "f", "ExtC_Common", "ExtC_Common"),
    ):
        graph = add_node(graph, n)
    graph = connect(connect(graph, "x", "f"), "f", "x")
    with raises(CyclicGraph) as e:
        await executor.run(graph)
    assert e.value.path == ["f", "x", "f"]
    assert executor.last_report is None
    assert not scenario.products.exists()


async def test_unknown_operation(executor):
    graph = replace_node(
        collocation_graph(),
        transformation("f", "reproject", "ExtC_Common", "ExtC_Common"),
    )
    with raises(InvalidGraph) as e:
        await executor.run(graph)
    assert any("unknown operation 'reproject'" in str(v) for v in e.value.violations)


async def test_unknown_predicate(executor):
    graph = replace_node(
        collocation_graph(),
        etl_constraint("k_dt_le_dt_max", "dt_is_small", ["AB.dt"]),
    )
    with raises(InvalidGraph):
        await executor.run(graph)


async def test_source_concept_without_source(executor):
    graph = replace_node(
        collocation_graph(),
        concept("imgB", "ExtB_TrackProfile", ["B.time", "B.geoloc", "B.profiles"]),
    )
    with raises(InvalidGraph) as e:
        await executor.run(graph)
    assert any("imgB: source Concept without a source" in str(v) for v in e.value.violations)


async def test_unknown_source(executor):
    graph = collocation_graph(image_source="Z")
    with raises(ConfigError):
        await executor.run(graph)
    assert ("imgA", "failed") in executor.last_report.statuses


async def test_no_image_in_time(scenario):
    doc = dict(scenario.doc, colloc=dict(scenario.doc["colloc"], dt_max_s=60))
    executor = PipelineExecutor(
        config=config_from_dict(doc).to_traitlets_config(),
        inputs={"imgB": scenario.track.meta.uri},
    )
    with raises(NoTemporalMatch):
        await executor.run(collocation_graph())


async def test_registered_operation(executor, caplog):
    seen = []

    def count(executor, node, inputs):
        seen.append(sorted(inputs))
        return inputs["pixelAB"]

    register_operation("count", count)
    try:
        graph = replace_node(
            collocation_graph(),
            transformation("load", "count", "ExtC_Common", "ProductFile"),
        )
        with caplog.at_level(logging.INFO):
            report = await executor.run(graph)
    finally:
        del OPERATIONS["count"]
    assert seen == [["pixelAB"]]
    assert report.artifacts["store"] is report.artifacts["pixelAB"]
    assert "load ok" in caplog.text


def test_jobs_validation():
    with raises(ValueError):
        PipelineExecutor(jobs=0)
    assert PipelineExecutor().jobs >= 1
