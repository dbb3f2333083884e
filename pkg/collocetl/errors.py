"""
Exceptions raised by collocetl.

Every domain failure derives from CollocError and carries the exit code the
command line reports for it.
"""


class CollocError(Exception):
    """Base class for collocetl failures"""

    exit_code = 2


class ConfigError(CollocError):
    exit_code = 1


# -- graph ------------------------------------------------------------------


class GraphError(CollocError):
    exit_code = 1


class DuplicateId(GraphError):
    def __init__(self, node_id):
        self.node_id = node_id
        super().__init__(f"Node id {node_id!r} already present in the graph")


class UnknownNode(GraphError):
    def __init__(self, node_id):
        self.node_id = node_id
        super().__init__(f"No node with id {node_id!r}")


class KindMismatch(GraphError):
    def __init__(self, from_kind, to_kind):
        self.from_kind = from_kind
        self.to_kind = to_kind
        super().__init__(f"Edges from {from_kind} to {to_kind} are not allowed")


class CyclicGraph(GraphError):
    exit_code = 6

    def __init__(self, path):
        self.path = list(path)
        super().__init__(f"Graph has a cycle: {' -> '.join(self.path)}")


class CompositionTypeError(GraphError):
    def __init__(self, position, reason):
        self.position = position
        self.reason = reason
        super().__init__(f"Composition breaks at position {position}: {reason}")


class InvalidGraph(GraphError):
    def __init__(self, violations):
        self.violations = list(violations)
        summary = "; ".join(str(v) for v in self.violations)
        super().__init__(f"Graph does not validate: {summary}")


class ConstraintViolation(CollocError):
    exit_code = 5

    def __init__(self, constraint_id, reason):
        self.constraint_id = constraint_id
        self.reason = reason
        super().__init__(f"ETL constraint {constraint_id!r} failed: {reason}")


# -- geodesy ----------------------------------------------------------------


class GeodesyError(CollocError, ValueError):
    exit_code = 1


class NotVisible(GeodesyError):
    pass


class OffDisk(GeodesyError):
    pass


class UnknownBand(GeodesyError):
    pass


class OutOfGrid(GeodesyError):
    pass


# -- granules ---------------------------------------------------------------


class MalformedKey(CollocError, ValueError):
    exit_code = 1

    def __init__(self, key, position, reason):
        self.key = key
        self.position = position
        self.reason = reason
        super().__init__(f"Malformed name {key!r} at position {position}: {reason}")


class MissingBand(CollocError, ValueError):
    pass


class UnsupportedFormat(CollocError, ValueError):
    pass


class CorruptContainer(CollocError):
    def __init__(self, offset, reason):
        self.offset = offset
        self.reason = reason
        super().__init__(f"Corrupt container at byte {offset}: {reason}")


class ShapeMismatch(CollocError):
    pass


# -- sources ----------------------------------------------------------------


class TransportError(CollocError):
    pass


class NoTemporalMatch(CollocError):
    exit_code = 3

    def __init__(self, best_gap):
        self.best_gap = best_gap
        super().__init__(f"No granule within the temporal threshold, best gap {best_gap} s")


# -- colloc -----------------------------------------------------------------


class BandMismatch(CollocError, ValueError):
    exit_code = 1


class FormatMismatch(CollocError, ValueError):
    exit_code = 1


class SceneTooLarge(CollocError, ValueError):
    exit_code = 1


class EmptyProduct(CollocError):
    exit_code = 4


# -- loader -----------------------------------------------------------------


class IoError(CollocError):
    pass


class MalformedProduct(CollocError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"Malformed product at line {line}: {reason}")
