"""Exception vocabulary shared across the toolkit.

Batch drivers catch the per-question base classes (ProgramError,
InterpreterError, ExplainError) and report skip counts keyed by the
concrete class name, so subclass names are part of the public surface.
"""

from __future__ import annotations


class RexforgeError(Exception):
    """Base class for all toolkit errors."""


# --- scene model ---

class SceneGraphError(RexforgeError):
    """A scene-graph or region-set document violates its invariants."""


class AlignmentBelowThreshold(RexforgeError):
    """No input region reaches the minimum IoU with an object's box."""

    def __init__(self, object_id: str, best_index: int, best_iou: float,
                 min_iou: float):
        super().__init__(
            f"object {object_id!r}: best region {best_index} has IoU "
            f"{best_iou:.4f} < min_iou {min_iou}")
        self.object_id = object_id
        self.best_index = best_index
        self.best_iou = best_iou
        self.min_iou = min_iou


# --- program IR ---

class ProgramError(RexforgeError):
    """Base class for reasoning-program load failures."""


class ParseError(ProgramError):
    """Malformed program document."""


class CycleError(ParseError):
    def __init__(self, node_ids):
        super().__init__(f"dependency cycle involving nodes {sorted(node_ids)}")
        self.node_ids = tuple(sorted(node_ids))


class ArityError(ParseError):
    def __init__(self, node_id: str, message: str):
        super().__init__(f"node {node_id!r}: {message}")
        self.node_id = node_id


class UnmappedOperation(ProgramError):
    def __init__(self, name: str):
        super().__init__(f"source operation {name!r} is not in the mapping table")
        self.name = name


# --- interpreter ---

class InterpreterError(RexforgeError):
    """Base class for per-node execution failures.

    node_id is filled in by execute() when the failing node is known.
    """

    def __init__(self, message: str, node_id: str | None = None):
        super().__init__(message)
        self.node_id = node_id

    def __str__(self):
        base = super().__str__()
        if self.node_id is not None:
            return f"node {self.node_id!r}: {base}"
        return base


class KindMismatch(InterpreterError):
    pass


class NonSingletonSelection(InterpreterError):
    pass


class MissingAttribute(InterpreterError):
    pass


class EmptySelection(InterpreterError):
    pass


class UnorderedValue(InterpreterError):
    pass


# --- explainer ---

class ExplainError(RexforgeError):
    """Base class for explanation compilation failures."""


class TemplateSlotError(ExplainError):
    def __init__(self, node_id: str, slot: str, message: str):
        super().__init__(f"node {node_id!r}, slot {slot}: {message}")
        self.node_id = node_id
        self.slot = slot


class RegionIndexOutOfRange(ExplainError):
    def __init__(self, index: int, n_regions: int):
        super().__init__(f"region token #{index} out of range for {n_regions} regions")
        self.index = index
        self.n_regions = n_regions


# --- decoder math ---

class DimMismatch(RexforgeError):
    pass


class NonFinite(RexforgeError):
    pass


# --- metrics / CLI ---

class EmptyEvalSet(RexforgeError):
    pass


class FractionOutOfRange(RexforgeError):
    def __init__(self, fraction: float):
        super().__init__(f"fraction must be in (0, 1], got {fraction}")
        self.fraction = fraction
