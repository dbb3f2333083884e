"""
ETL pipelines as typed graphs.

Nodes are Concepts (data sets), Attributes (their fields), Transformations,
EtlConstraints and Notes. Data flows along Concept -> Transformation ->
Concept edges; the other edge classes attach Attributes to Concepts,
constraints to Attributes and Notes to anything.

Graphs are values: :func:`add_node` and :func:`connect` return new graphs.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, NamedTuple, Optional, Tuple

import jsonschema

from .config import load_schema
from .errors import (
    CompositionTypeError,
    CyclicGraph,
    DuplicateId,
    InvalidGraph,
    KindMismatch,
    UnknownNode,
)


class NodeKind(str, Enum):
    CONCEPT = "Concept"
    ATTRIBUTE = "Attribute"
    TRANSFORMATION = "Transformation"
    ETL_CONSTRAINT = "EtlConstraint"
    NOTE = "Note"


class EdgeClass(str, Enum):
    DATA = "data"
    PART_OF = "part_of"
    CONSTRAINT = "constraint"
    NOTE = "note"


@dataclass(frozen=True)
class Node:
    """A graph node

    payload by kind:

    - Concept: ``format`` tag and ``attributes`` ids; source Concepts name a
      ``source`` and one of ``uri``, ``window`` (two instants) or ``covers``
      (the Concept whose time range selects the granule)
    - Transformation: ``operation`` id, ``in_format`` (tag or list of tags),
      ``out_format``
    - EtlConstraint: ``predicate`` id, ``attributes`` ids, optional ``params``
    - Note: ``text``
    """

    id: str
    kind: NodeKind
    label: str = ""
    payload: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", NodeKind(self.kind))
        if not isinstance(self.id, str) or not self.id:
            raise ValueError(f"Node id must be a non-empty string, got {self.id!r}")

    @property
    def in_formats(self):
        tags = self.payload.get("in_format")
        if tags is None:
            return ()
        return (tags,) if isinstance(tags, str) else tuple(tags)

    @property
    def out_format(self):
        return self.payload.get("out_format")

    @property
    def attribute_ids(self):
        return tuple(self.payload.get("attributes", ()))


def concept(id, format, attributes=(), label="", **extra):
    return Node(
        id, NodeKind.CONCEPT, label, {"format": format, "attributes": list(attributes), **extra}
    )


def attribute(id, label=""):
    return Node(id, NodeKind.ATTRIBUTE, label, {})


def transformation(id, operation, in_format, out_format, label="", **extra):
    return Node(
        id,
        NodeKind.TRANSFORMATION,
        label,
        {"operation": operation, "in_format": in_format, "out_format": out_format, **extra},
    )


def etl_constraint(id, predicate, attributes, label="", params=None):
    payload = {"predicate": predicate, "attributes": list(attributes)}
    if params:
        payload["params"] = dict(params)
    return Node(id, NodeKind.ETL_CONSTRAINT, label, payload)


def note(id, text, label=""):
    return Node(id, NodeKind.NOTE, label, {"text": text})


def edge_class(from_kind, to_kind):
    """Class of an edge between two node kinds, KindMismatch if none"""
    C, T = NodeKind.CONCEPT, NodeKind.TRANSFORMATION
    if (from_kind, to_kind) in {(C, T), (T, C)}:
        return EdgeClass.DATA
    if (from_kind, to_kind) == (C, NodeKind.ATTRIBUTE):
        return EdgeClass.PART_OF
    if (from_kind, to_kind) == (NodeKind.ETL_CONSTRAINT, NodeKind.ATTRIBUTE):
        return EdgeClass.CONSTRAINT
    if from_kind is NodeKind.NOTE and to_kind is not NodeKind.NOTE:
        return EdgeClass.NOTE
    raise KindMismatch(from_kind.value, to_kind.value)


@dataclass(frozen=True)
class PipelineGraph:
    nodes: Tuple[Node, ...] = ()
    edges: Tuple[Tuple[str, str], ...] = ()

    def __contains__(self, node_id):
        return any(n.id == node_id for n in self.nodes)

    def node(self, node_id):
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise UnknownNode(node_id)

    @property
    def by_id(self):
        return {n.id: n for n in self.nodes}

    def of_kind(self, kind):
        return [n for n in self.nodes if n.kind is kind]

    def data_edges(self):
        by_id = self.by_id
        return [
            (u, v)
            for u, v in self.edges
            if edge_class(by_id[u].kind, by_id[v].kind) is EdgeClass.DATA
        ]

    def successors(self, node_id):
        return sorted(v for u, v in self.data_edges() if u == node_id)

    def predecessors(self, node_id):
        return sorted(u for u, v in self.data_edges() if v == node_id)

    def owned_attributes(self, concept_id):
        """Attribute ids of a Concept, from its payload and part-of edges"""
        owned = list(self.node(concept_id).attribute_ids)
        by_id = self.by_id
        for u, v in self.edges:
            if u == concept_id and by_id[v].kind is NodeKind.ATTRIBUTE and v not in owned:
                owned.append(v)
        return owned

    def owner_of(self, attribute_id):
        for n in self.of_kind(NodeKind.CONCEPT):
            if attribute_id in self.owned_attributes(n.id):
                return n.id
        return None


def add_node(graph, node):
    if node.id in graph:
        raise DuplicateId(node.id)
    return PipelineGraph(graph.nodes + (node,), graph.edges)


def connect(graph, from_id, to_id):
    by_id = graph.by_id
    for node_id in (from_id, to_id):
        if node_id not in by_id:
            raise UnknownNode(node_id)
    edge_class(by_id[from_id].kind, by_id[to_id].kind)
    if (from_id, to_id) in graph.edges:
        return graph
    return PipelineGraph(graph.nodes, graph.edges + ((from_id, to_id),))


# -- validation -------------------------------------------------------------


class Cycle(NamedTuple):
    path: Tuple[str, ...]


class DanglingTransformer(NamedTuple):
    node_id: str
    reason: str


class FormatMismatch(NamedTuple):
    transformer: str
    concept: str
    expected: Tuple[str, ...]
    actual: Optional[str]


class OrphanAttribute(NamedTuple):
    node_id: str


class UnknownReference(NamedTuple):
    node_id: str
    reference: str


class MalformedPayload(NamedTuple):
    node_id: str
    reason: str


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[NamedTuple, ...] = ()

    @property
    def ok(self):
        return not self.violations

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)

    def of_type(self, cls):
        return [v for v in self.violations if isinstance(v, cls)]


def find_cycle(graph):
    """First cycle found by a depth-first search in id order, or None"""
    succ = {n.id: [] for n in graph.nodes}
    for u, v in graph.edges:
        succ[u].append(v)
    for u in succ:
        succ[u].sort()

    state = {}
    stack = []

    def visit(u):
        state[u] = "open"
        stack.append(u)
        for v in succ[u]:
            if state.get(v) == "open":
                return stack[stack.index(v) :] + [v]
            if v not in state:
                found = visit(v)
                if found:
                    return found
        stack.pop()
        state[u] = "done"
        return None

    for u in sorted(succ):
        if u not in state:
            found = visit(u)
            if found:
                return found
    return None


def validate(graph):
    """Violations of graph, as data"""
    violations = []
    by_id = graph.by_id

    path = find_cycle(graph)
    if path:
        violations.append(Cycle(tuple(path)))

    for n in graph.of_kind(NodeKind.TRANSFORMATION):
        inputs = graph.predecessors(n.id)
        outputs = graph.successors(n.id)
        if not inputs:
            violations.append(DanglingTransformer(n.id, "no input Concept"))
        if not outputs:
            violations.append(DanglingTransformer(n.id, "no output Concept"))
        if "operation" not in n.payload:
            violations.append(MalformedPayload(n.id, "no operation"))
        if n.in_formats:
            for c in inputs:
                actual = by_id[c].payload.get("format")
                if actual not in n.in_formats:
                    violations.append(FormatMismatch(n.id, c, n.in_formats, actual))
        if n.out_format is not None:
            for c in outputs:
                actual = by_id[c].payload.get("format")
                if actual != n.out_format:
                    violations.append(FormatMismatch(n.id, c, (n.out_format,), actual))

    for n in graph.nodes:
        if n.kind in (NodeKind.CONCEPT, NodeKind.ETL_CONSTRAINT):
            for ref in n.attribute_ids:
                target = by_id.get(ref)
                if target is None or target.kind is not NodeKind.ATTRIBUTE:
                    violations.append(UnknownReference(n.id, ref))
        if n.kind is NodeKind.ETL_CONSTRAINT:
            if not n.payload.get("predicate"):
                violations.append(MalformedPayload(n.id, "no predicate"))
            attached = n.attribute_ids or tuple(v for u, v in graph.edges if u == n.id)
            if not attached:
                violations.append(MalformedPayload(n.id, "constrains no attribute"))

    for n in graph.of_kind(NodeKind.ATTRIBUTE):
        if graph.owner_of(n.id) is None:
            violations.append(OrphanAttribute(n.id))

    return ValidationReport(tuple(violations))


def topo_schedule(graph):
    """Stages of Concept and Transformation nodes by Kahn layering

    Nodes of a stage only depend on earlier stages; each stage is sorted by id.
    """
    path = find_cycle(graph)
    if path:
        raise CyclicGraph(path)
    members = {
        n.id for n in graph.nodes if n.kind in (NodeKind.CONCEPT, NodeKind.TRANSFORMATION)
    }
    edges = graph.data_edges()
    indegree = {m: 0 for m in members}
    succ = {m: [] for m in members}
    for u, v in edges:
        indegree[v] += 1
        succ[u].append(v)

    stages = []
    ready = sorted(m for m, d in indegree.items() if d == 0)
    while ready:
        stages.append(ready)
        following = []
        for u in ready:
            for v in succ[u]:
                indegree[v] -= 1
                if indegree[v] == 0:
                    following.append(v)
        ready = sorted(following)
    return stages


def check_composition(graph, chain):
    """Output format of a chain of transformers whose formats line up"""
    if not chain:
        raise CompositionTypeError(0, "empty chain")
    previous = None
    for position, node_id in enumerate(chain):
        n = graph.node(node_id)
        if n.kind is not NodeKind.TRANSFORMATION:
            raise CompositionTypeError(position, f"{node_id!r} is a {n.kind.value}")
        if previous is not None and previous.out_format not in n.in_formats:
            raise CompositionTypeError(
                position,
                f"{previous.id!r} produces {previous.out_format!r}, "
                f"{node_id!r} expects {' or '.join(n.in_formats)}",
            )
        previous = n
    return previous.out_format


# -- serialization ----------------------------------------------------------


def graph_to_json(graph):
    doc = {
        "nodes": [
            {"id": n.id, "kind": n.kind.value, "label": n.label, "payload": dict(n.payload)}
            for n in graph.nodes
        ],
        "edges": [[u, v] for u, v in graph.edges],
    }
    return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"


def graph_from_json(text):
    """Build a graph from its JSON form, checked against the graph schema"""
    try:
        doc = json.loads(text)
    except ValueError as e:
        raise InvalidGraph([f"invalid JSON: {e}"]) from e
    try:
        jsonschema.validate(doc, load_schema("graph-schema.yaml"))
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise InvalidGraph([f"{where}: {e.message}"]) from e
    graph = PipelineGraph()
    for n in doc["nodes"]:
        graph = add_node(graph, Node(n["id"], n["kind"], n.get("label", ""), n.get("payload", {})))
    for u, v in doc["edges"]:
        graph = connect(graph, u, v)
    return graph


# -- the standard two-source pipeline -----------------------------------------


def collocation_graph(
    image_source="A",
    track_source="B",
    image_uri=None,
    track_uri=None,
    constraints=("dt_le_dt_max", "dist_le_d_max"),
):
    """Extract both sources, bring them into the common form, project the
    track onto the image grid, match, and load the Pixel A&B product.

    Intermediate common-form Concepts sit between the transformers. Without
    image_uri the image is the one closest in time to the track.
    """
    ext_a, ext_b, ext_c = "ExtA_GeoImage", "ExtB_TrackProfile", "ExtC_Common"
    image_extra = {"source": image_source}
    if image_uri:
        image_extra["uri"] = image_uri
    else:
        image_extra["covers"] = "imgB"
    track_extra = {"source": track_source}
    if track_uri:
        track_extra["uri"] = track_uri
    nodes = [
        attribute("A.time", "Time"),
        attribute("A.geoloc", "Geoloc"),
        attribute("A.radiance", "Radiance"),
        attribute("B.time", "Time"),
        attribute("B.geoloc", "Geoloc"),
        attribute("B.profiles", "Heights and cloud class"),
        attribute("AB.dt", "Time difference"),
        attribute("AB.dist", "Distance"),
        attribute("AB.records", "Records"),
        concept("imgA", ext_a, ["A.time", "A.geoloc", "A.radiance"], "Image A", **image_extra),
        concept("imgB", ext_b, ["B.time", "B.geoloc", "B.profiles"], "Track B", **track_extra),
        concept("common", ext_c, label="Common format granules"),
        concept("projected", ext_c, label="Track scan angles"),
        concept("pixelAB", ext_c, ["AB.dt", "AB.dist", "AB.records"], "Pixel A&B"),
        concept("store", "ProductFile", label="Product store"),
        transformation("c", "c", [ext_a, ext_b], ext_c, "Common format"),
        transformation("f", "f", ext_c, ext_c, "Track-wise projection"),
        transformation("t", "t", ext_c, ext_c, "Spatio-temporal match"),
        transformation("load", "load", ext_c, "ProductFile", "Loader"),
        note("n1", "Products are flat files with a JSON-lines catalog"),
    ]
    attrs = {
        "dt_le_dt_max": ["AB.dt"],
        "dist_le_d_max": ["AB.dist"],
        "records_nonempty": ["AB.records"],
    }
    for predicate in constraints:
        nodes.append(etl_constraint(f"k_{predicate}", predicate, attrs[predicate]))

    graph = PipelineGraph()
    for n in nodes:
        graph = add_node(graph, n)
    edges = [
        ("imgA", "c"),
        ("imgB", "c"),
        ("c", "common"),
        ("common", "f"),
        ("f", "projected"),
        ("common", "t"),
        ("projected", "t"),
        ("t", "pixelAB"),
        ("pixelAB", "load"),
        ("load", "store"),
        ("n1", "load"),
    ]
    for predicate in constraints:
        edges += [(f"k_{predicate}", a) for a in attrs[predicate]]
    for u, v in edges:
        graph = connect(graph, u, v)
    return graph
