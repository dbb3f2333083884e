"""
Run a pipeline graph stage by stage.

Members of a stage run concurrently, compute-heavy operations on a thread
pool bounded by ``PipelineExecutor.jobs``. Each Concept holds the artifact
produced for it; ETL constraints are checked right after the stage that
produces a Concept owning one of their attributes.
"""

import asyncio
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any as AnyType
from typing import Dict as DictType
from typing import List as ListType
from typing import Optional, Tuple

from traitlets import Any, Dict, Instance, Integer, default, validate
from traitlets.config import LoggingConfigurable

from .colloc import CollocConfig, CollocStats, collocate_detailed, granule_to_track, transform_track
from .errors import CollocError, ConfigError, ConstraintViolation, CyclicGraph, InvalidGraph
from .geodesy import DEFAULT_CONSTS
from .granule import FormatTag, Granule, GranuleMeta, parse_instant, time_range, to_common
from .loader import Loader
from .pipeline_graph import Cycle, NodeKind, topo_schedule, validate as validate_graph
from .sources import Extractor


# -- artifacts --------------------------------------------------------------


@dataclass(frozen=True)
class Extracted:
    meta: GranuleMeta
    granule: Granule


@dataclass(frozen=True)
class Common:
    """Common-form granules with the listing metadata they came from"""

    items: Tuple[Extracted, ...]

    def _pick(self, is_image):
        for item in self.items:
            if item.granule.is_image == is_image:
                return item
        raise ConfigError(f"No {'image' if is_image else 'track'} among the common granules")

    @property
    def image(self):
        return self._pick(True)

    @property
    def track(self):
        return self._pick(False)


@dataclass(frozen=True)
class Projected:
    profile_ids: frozenset
    scan_angles: tuple
    dropped_invisible: int


@dataclass(frozen=True)
class Matched:
    records: list
    stats: CollocStats
    image_meta: GranuleMeta
    track_meta: GranuleMeta


@dataclass(frozen=True)
class Loaded:
    product: AnyType
    appended: bool


@dataclass
class RunReport:
    stages: ListType[ListType[str]] = field(default_factory=list)
    statuses: ListType[Tuple[str, str]] = field(default_factory=list)
    artifacts: DictType[str, AnyType] = field(default_factory=dict)

    def status_lines(self):
        return [f"{node_id}\t{status}" for node_id, status in self.statuses]


def _inputs_of(inputs, cls):
    found = [v for v in inputs.values() if isinstance(v, cls)]
    if not found:
        raise ConfigError(f"Operation expects a {cls.__name__} input")
    return found


# -- operations -------------------------------------------------------------


def op_common(executor, node, inputs):
    items = []
    for value in inputs.values():
        for item in value.items if isinstance(value, Common) else [value]:
            granule = item.granule
            if granule.meta.format is not FormatTag.EXT_C:
                granule = to_common(granule)
            items.append(Extracted(item.meta, granule))
    return Common(tuple(items))


def op_project(executor, node, inputs):
    common = _inputs_of(inputs, Common)[0]
    track = granule_to_track(common.track.granule)
    try:
        consts = common.image.granule.geoloc.consts
    except ConfigError:
        consts = DEFAULT_CONSTS
    stats = CollocStats()
    pairs = transform_track(track, consts, stats=stats)
    return Projected(
        profile_ids=frozenset(pid for pid, _ in pairs),
        scan_angles=tuple(pairs),
        dropped_invisible=stats.dropped_invisible,
    )


def op_match(executor, node, inputs):
    common = _inputs_of(inputs, Common)[0]
    projected = [v for v in inputs.values() if isinstance(v, Projected)]
    track = granule_to_track(common.track.granule)
    dropped = 0
    if projected:
        visible = projected[0].profile_ids
        dropped = projected[0].dropped_invisible
        track = [p for p in track if p.profile_id in visible]
    records, stats = collocate_detailed(track, common.image.granule, executor.colloc)
    stats.profiles += dropped
    stats.dropped_invisible += dropped
    return Matched(records, stats, common.image.meta, common.track.meta)


def op_load(executor, node, inputs):
    matched = _inputs_of(inputs, Matched)[0]
    product, appended = executor.loader.load(
        matched.records, matched.image_meta, matched.track_meta, executor.colloc.to_dict()
    )
    return Loaded(product, appended)


OPERATIONS = {
    "c": op_common,
    "f": op_project,
    "t": op_match,
    "load": op_load,
}


def register_operation(operation_id, func):
    """Add an operation ``func(executor, node, inputs) -> artifact``"""
    OPERATIONS[operation_id] = func


# -- constraint predicates ----------------------------------------------------


def _records(value):
    records = getattr(value, "records", None)
    if records is None:
        raise ConfigError(f"Constraint needs records, the Concept holds {type(value).__name__}")
    return records


def dt_le_dt_max(executor, value, params):
    limit = params.get("dt_max_s", executor.colloc.dt_max_s)
    worst = max((r.dt_s for r in _records(value)), default=0.0)
    if worst > limit:
        return f"time difference {worst} s exceeds {limit} s"


def dist_le_d_max(executor, value, params):
    limit = params.get("d_max_km", executor.colloc.d_max_km)
    worst = max((r.dist_km for r in _records(value)), default=0.0)
    if worst > limit:
        return f"distance {worst} km exceeds {limit} km"


def records_nonempty(executor, value, params):
    if not _records(value):
        return "no records"


PREDICATES = {
    "dt_le_dt_max": dt_le_dt_max,
    "dist_le_d_max": dist_le_d_max,
    "records_nonempty": records_nonempty,
}


def register_predicate(predicate_id, func):
    """Add a predicate ``func(executor, value, params) -> failure reason or None``"""
    PREDICATES[predicate_id] = func


# -- executor ---------------------------------------------------------------


class PipelineExecutor(LoggingConfigurable):
    """Executes validated pipeline graphs"""

    jobs = Integer(
        config=True,
        help="""
        Maximum number of nodes running at once, and threads of the pool that
        runs compute-heavy operations. Defaults to the number of processors.
        """,
    )

    @default("jobs")
    def _jobs_default(self):
        return os.cpu_count() or 1

    @validate("jobs")
    def _validate_jobs(self, proposal):
        if proposal.value < 1:
            raise ValueError(f"jobs must be at least 1, got {proposal.value}")
        return proposal.value

    inputs = Dict(
        help="""
        Granule names by source Concept id, overriding the Concept payload.
        """,
    )

    extractor = Instance(Extractor)

    @default("extractor")
    def _extractor_default(self):
        return Extractor(parent=self)

    colloc = Instance(CollocConfig)

    @default("colloc")
    def _colloc_default(self):
        return CollocConfig(parent=self)

    loader = Instance(Loader)

    @default("loader")
    def _loader_default(self):
        return Loader(parent=self)

    pool = Any()

    last_report = Instance(RunReport, allow_none=True)

    def check(self, graph):
        """Raise unless graph can run: cycles first, then other violations"""
        report = validate_graph(graph)
        for violation in report.of_type(Cycle):
            raise CyclicGraph(violation.path)
        problems = list(report)
        for n in graph.of_kind(NodeKind.TRANSFORMATION):
            if n.payload.get("operation") not in OPERATIONS:
                problems.append(f"{n.id}: unknown operation {n.payload.get('operation')!r}")
        for n in graph.of_kind(NodeKind.ETL_CONSTRAINT):
            if n.payload.get("predicate") not in PREDICATES:
                problems.append(f"{n.id}: unknown predicate {n.payload.get('predicate')!r}")
        for n in graph.of_kind(NodeKind.CONCEPT):
            if not graph.predecessors(n.id) and "source" not in n.payload:
                problems.append(f"{n.id}: source Concept without a source")
        if problems:
            raise InvalidGraph(problems)

    async def run(self, graph):
        """Execute graph, returns a :class:`RunReport`"""
        self.check(graph)
        stages = topo_schedule(graph)
        report = RunReport(stages=stages)
        self.last_report = report
        owners = {}
        for k in graph.of_kind(NodeKind.ETL_CONSTRAINT):
            attached = k.attribute_ids or tuple(v for u, v in graph.edges if u == k.id)
            for attr in attached:
                owners.setdefault(graph.owner_of(attr), []).append(k)

        semaphore = asyncio.Semaphore(self.jobs)
        own_pool = self.pool is None
        pool = ThreadPoolExecutor(max_workers=self.jobs) if own_pool else self.pool
        try:
            for number, stage in enumerate(stages):
                self.log.info(f"Stage {number}: {', '.join(stage)}")
                nodes = [graph.node(i) for i in stage]
                deferred = [n for n in nodes if n.payload.get("covers") in stage]
                first = [n for n in nodes if n not in deferred]
                for batch in (first, deferred):
                    await asyncio.gather(
                        *(self._run_node(graph, n, report, semaphore, pool) for n in batch)
                    )
                for node_id in stage:
                    for k in owners.get(node_id, []):
                        self._check_constraint(k, report.artifacts[node_id], report)
        finally:
            if own_pool:
                pool.shutdown(wait=False)
        return report

    async def _run_node(self, graph, node, report, semaphore, pool):
        async with semaphore:
            started = time.monotonic()
            try:
                if node.kind is NodeKind.CONCEPT:
                    value = await self._stage_concept(graph, node, report)
                else:
                    inputs = {c: report.artifacts[c] for c in graph.predecessors(node.id)}
                    operation = OPERATIONS[node.payload["operation"]]
                    loop = asyncio.get_running_loop()
                    value = await loop.run_in_executor(pool, operation, self, node, inputs)
            except CollocError:
                report.statuses.append((node.id, "failed"))
                self.log.error(f"{node.id} failed")
                raise
            report.artifacts[node.id] = value
            report.statuses.append((node.id, "ok"))
            self.log.info(f"{node.id} ok ({time.monotonic() - started:.3f}s)")

    async def _stage_concept(self, graph, node, report):
        producers = graph.predecessors(node.id)
        if producers:
            # a Concept holds what its (single) producer made
            return report.artifacts[producers[0]]
        return await self._extract(node, report)

    async def _extract(self, node, report):
        payload = node.payload
        try:
            src = self.extractor.source(payload["source"])
        except KeyError as e:
            raise ConfigError(str(e)) from e
        uri = self.inputs.get(node.id) or payload.get("uri")
        band = self.colloc.band if payload.get("format") == FormatTag.EXT_A.value else None
        if uri:
            meta = src.parse(uri)
        elif "window" in payload:
            window = tuple(parse_instant(t) for t in payload["window"])
            candidates = await self.extractor.list_granules(src, window, band=band)
            meta = self.extractor.select(candidates, window, self.colloc.dt_max_s)
        elif "covers" in payload:
            target = report.artifacts[payload["covers"]]
            window = time_range(target.granule)
            meta = await self.extractor.find_covering(
                src, window, band=band, dt_max_s=self.colloc.dt_max_s
            )
        else:
            raise ConfigError(f"Source Concept {node.id!r} has no uri, window or covers")
        self.log.debug(f"{node.id}: extracting {src.id}:{meta.uri}")
        return Extracted(meta, await self.extractor.fetch_raw(src, meta))

    def _check_constraint(self, constraint, value, report):
        predicate = PREDICATES[constraint.payload["predicate"]]
        reason = predicate(self, value, constraint.payload.get("params", {}))
        if reason is not None:
            report.statuses.append((constraint.id, "violated"))
            self.log.error(f"Constraint {constraint.id} violated: {reason}")
            raise ConstraintViolation(constraint.id, reason)
        report.statuses.append((constraint.id, "ok"))
        self.log.debug(f"Constraint {constraint.id} holds")


def stats_of(report: RunReport) -> Optional[CollocStats]:
    for value in report.artifacts.values():
        if isinstance(value, Matched):
            return value.stats
    return None
