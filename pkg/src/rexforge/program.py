"""Reasoning-program IR: the 12 atomic operations, dependency DAG,
parser/serializer, and the source-operation mapping table.

Programs are immutable after parse. A program document looks like:

    {"question_id": "q1", "question": "...", "reasoning_type": "verify",
     "image_id": "img1", "root": "n2",
     "nodes": {"n0": {"op": "select", "category": "dog", "deps": []},
               "n1": {"op": "filter", "attribute": "brown", "deps": ["n0"]},
               "n2": {"op": "exist", "deps": ["n1"]}}}

Foreign (source-dataset) programs are flat operation lists mapped onto
the atomic vocabulary through an OpMappingTable; see map_source_program.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Mapping

from .errors import ArityError, CycleError, ParseError, UnmappedOperation


class AtomicOp(str, Enum):
    SELECT = "select"
    EXIST = "exist"
    FILTER = "filter"
    QUERY = "query"
    VERIFY = "verify"
    COMMON = "common"
    SAME = "same"
    DIFFERENT = "different"
    COMPARE = "compare"
    RELATE = "relate"
    AND = "and"
    OR = "or"


# (required dep count, fields that must be present)
_ARITY: dict[AtomicOp, tuple[int, tuple[str, ...]]] = {
    AtomicOp.SELECT: (0, ("category",)),
    AtomicOp.EXIST: (1, ()),
    AtomicOp.FILTER: (1, ("attribute",)),
    AtomicOp.QUERY: (1, ("attribute",)),
    AtomicOp.VERIFY: (1, ("attribute",)),
    AtomicOp.RELATE: (1, ("category", "relation")),
    AtomicOp.COMMON: (2, ()),
    AtomicOp.SAME: (2, ()),
    AtomicOp.DIFFERENT: (2, ()),
    AtomicOp.COMPARE: (2, ("attribute", "comparator")),
    AtomicOp.AND: (2, ()),
    AtomicOp.OR: (2, ()),
}

DIRECTIONS = ("subject", "object")


@dataclass(frozen=True)
class OpNode:
    """One reasoning step: an operation triplet plus its dependencies.

    attribute holds an attribute value or family depending on the op;
    relation is (predicate, direction) and is used only by relate;
    comparator is used only by compare.
    """

    node_id: str
    op: AtomicOp
    attribute: str | None = None
    category: str | None = None
    relation: tuple[str, str] | None = None
    comparator: str | None = None
    deps: tuple[str, ...] = ()


@dataclass(frozen=True)
class ReasoningProgram:
    question_id: str
    question: str
    nodes: Mapping[str, OpNode]
    root: str
    reasoning_type: str = ""
    image_id: str | None = None
    _order: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_order", _topo_sort(self.nodes))

    def node(self, node_id: str) -> OpNode:
        return self.nodes[node_id]


def _topo_sort(nodes: Mapping[str, OpNode]) -> tuple[str, ...]:
    """Kahn's algorithm, taking the smallest ready node_id first."""
    pending = {nid: len(n.deps) for nid, n in nodes.items()}
    dependents: dict[str, list[str]] = {nid: [] for nid in nodes}
    for nid, node in nodes.items():
        for dep in node.deps:
            dependents[dep].append(nid)
    ready = [nid for nid, count in pending.items() if count == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for child in dependents[nid]:
            pending[child] -= 1
            if pending[child] == 0:
                heapq.heappush(ready, child)
    if len(order) != len(nodes):
        raise CycleError([nid for nid in nodes if nid not in set(order)])
    return tuple(order)


def topo_order(program: ReasoningProgram) -> tuple[str, ...]:
    """Dependency-respecting node order, stable by node_id among ready nodes."""
    return program._order


def _validate_node(node: OpNode) -> None:
    dep_count, required = _ARITY[node.op]
    if len(node.deps) != dep_count:
        raise ArityError(node.node_id,
                         f"{node.op.value} takes {dep_count} deps, got {len(node.deps)}")
    for name in required:
        if getattr(node, name) is None:
            raise ArityError(node.node_id, f"{node.op.value} requires {name}")
    if node.relation is not None and node.relation[1] not in DIRECTIONS:
        raise ParseError(f"node {node.node_id!r}: relation direction must be one of "
                         f"{DIRECTIONS}, got {node.relation[1]!r}")


def _validate_graph(nodes: Mapping[str, OpNode], root: str) -> None:
    for node in nodes.values():
        for dep in node.deps:
            if dep not in nodes:
                raise ParseError(f"node {node.node_id!r} depends on unknown node {dep!r}")
    _topo_sort(nodes)  # cycles outrank the root/connectivity diagnoses
    if root not in nodes:
        raise ParseError(f"root {root!r} is not a node")
    for node in nodes.values():
        if root in node.deps:
            raise ParseError(f"root {root!r} must not be a dependency of {node.node_id!r}")
    reached = set()
    stack = [root]
    while stack:
        nid = stack.pop()
        if nid in reached:
            continue
        reached.add(nid)
        stack.extend(nodes[nid].deps)
    if reached != set(nodes):
        missing = sorted(set(nodes) - reached)
        raise ParseError(f"nodes unreachable from root: {missing}")


def _node_from_dict(node_id: str, raw: dict) -> OpNode:
    try:
        op = AtomicOp(str(raw["op"]).lower())
    except KeyError:
        raise ParseError(f"node {node_id!r}: missing op") from None
    except ValueError:
        raise ParseError(f"node {node_id!r}: unknown operation {raw['op']!r}") from None
    relation = None
    if raw.get("relation") is not None:
        rel = raw["relation"]
        try:
            relation = (str(rel["predicate"]).lower(), str(rel["direction"]).lower())
        except (KeyError, TypeError):
            raise ParseError(f"node {node_id!r}: relation needs predicate and direction") from None
    return OpNode(
        node_id=node_id,
        op=op,
        attribute=None if raw.get("attribute") is None else str(raw["attribute"]).lower(),
        category=None if raw.get("category") is None else str(raw["category"]).lower(),
        relation=relation,
        comparator=None if raw.get("comparator") is None else str(raw["comparator"]).lower(),
        deps=tuple(str(d) for d in raw.get("deps", ())),
    )


def parse_program(doc) -> ReasoningProgram:
    """Parse and validate a program document (JSON string or dict).

    Raises ParseError on malformed input, ArityError when a node's
    fields or dependency count do not match its operation, and
    CycleError when the dependency graph is not acyclic.
    """
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid program JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"program document must be an object, got {type(doc).__name__}")
    if "nodes" not in doc or not doc["nodes"]:
        raise ParseError("program has no nodes")
    if "root" not in doc:
        raise ParseError("program has no root")
    nodes = {str(nid): _node_from_dict(str(nid), raw)
             for nid, raw in doc["nodes"].items()}
    for node in nodes.values():
        _validate_node(node)
    root = str(doc["root"])
    _validate_graph(nodes, root)
    return ReasoningProgram(
        question_id=str(doc.get("question_id", "")),
        question=str(doc.get("question", "")),
        nodes=nodes,
        root=root,
        reasoning_type=str(doc.get("reasoning_type", "")),
        image_id=None if doc.get("image_id") is None else str(doc["image_id"]),
    )


def serialize_program(program: ReasoningProgram) -> str:
    """Canonical JSON form; parse(serialize(p)) == p."""
    nodes = {}
    for nid in sorted(program.nodes):
        node = program.nodes[nid]
        raw: dict = {"op": node.op.value}
        if node.attribute is not None:
            raw["attribute"] = node.attribute
        if node.category is not None:
            raw["category"] = node.category
        if node.relation is not None:
            raw["relation"] = {"predicate": node.relation[0],
                               "direction": node.relation[1]}
        if node.comparator is not None:
            raw["comparator"] = node.comparator
        raw["deps"] = list(node.deps)
        nodes[nid] = raw
    doc = {"question_id": program.question_id, "question": program.question,
           "reasoning_type": program.reasoning_type}
    if program.image_id is not None:
        doc["image_id"] = program.image_id
    doc["root"] = program.root
    doc["nodes"] = nodes
    return json.dumps(doc, separators=(",", ":"))


# --- mapping from source-dataset operation vocabularies ---

_STRIPPABLE_FIELDS = ("attribute", "category", "predicate", "comparator")


@dataclass(frozen=True)
class MappingEntry:
    source: str
    op: AtomicOp
    extract: Mapping[str, Mapping]


@dataclass(frozen=True)
class OpMappingTable:
    """source operation name -> (atomic op, field-extraction rules).

    Extraction rules per target field (attribute, category, predicate,
    direction, comparator): {"from": "argument"} takes the whole
    argument, {"split": i} the i-th comma-separated part, {"const": v} a
    constant; "map" post-translates the value and "optional": true
    silences missing-part errors. Trailing "(id)" annotations are
    stripped from extracted values.
    """

    entries: Mapping[str, MappingEntry]

    def lookup(self, source_name: str) -> MappingEntry:
        key = source_name.strip().lower()
        if key not in self.entries:
            raise UnmappedOperation(source_name)
        return self.entries[key]


def parse_mapping_table(doc) -> OpMappingTable:
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid mapping JSON: {exc}") from None
    entries = {}
    for raw in doc:
        try:
            source = str(raw["source"]).strip().lower()
            op = AtomicOp(str(raw["op"]).lower())
        except KeyError as exc:
            raise ParseError(f"mapping entry missing key {exc}") from None
        except ValueError:
            raise ParseError(f"mapping entry {raw.get('source')!r}: "
                             f"unknown op {raw.get('op')!r}") from None
        entries[source] = MappingEntry(source=source, op=op,
                                       extract=dict(raw.get("extract", {})))
    return OpMappingTable(entries=entries)


def load_default_mapping() -> OpMappingTable:
    text = resources.files("rexforge.data").joinpath("op_mapping.json").read_text("utf-8")
    return parse_mapping_table(text)


def _strip_annotation(value: str) -> str:
    # GQA-style arguments carry "name (object id)" annotations
    if value.endswith(")") and "(" in value:
        value = value[:value.rindex("(")]
    return value.strip()


def _extract_field(rule: Mapping, argument: str, source: str, where: str):
    if "const" in rule:
        value = str(rule["const"])
    elif "split" in rule:
        parts = [p.strip() for p in argument.split(",")]
        idx = int(rule["split"])
        if idx >= len(parts) or not parts[idx]:
            if rule.get("optional"):
                return None
            raise ParseError(f"{where}: operation {source!r} expected part {idx} "
                             f"in argument {argument!r}")
        value = parts[idx]
    else:  # {"from": "argument"}
        value = argument.strip()
        if not value:
            if rule.get("optional"):
                return None
            raise ParseError(f"{where}: operation {source!r} needs an argument")
    value = _strip_annotation(value).lower()
    if "map" in rule:
        mapped = rule["map"].get(value)
        if mapped is None:
            raise ParseError(f"{where}: value {value!r} not covered by map for {source!r}")
        value = mapped
    return value


def map_source_program(doc, table: OpMappingTable) -> ReasoningProgram:
    """Rewrite a foreign program into the atomic-operation vocabulary.

    The foreign document is {"question_id", "question", "reasoning_type",
    "image_id", "semantic": [{"operation", "argument", "dependencies"}]},
    with the final list entry as the root. Node count and dependency
    structure are preserved; each step is rewritten through the table.
    """
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid source program JSON: {exc}") from None
    steps = doc.get("semantic")
    if not steps:
        raise ParseError("source program has no operations")
    nodes = {}
    for i, step in enumerate(steps):
        node_id = f"n{i}"
        where = f"step {i}"
        entry = table.lookup(str(step.get("operation", "")))
        argument = str(step.get("argument", "") or "")
        fields = {}
        for target, rule in entry.extract.items():
            fields[target] = _extract_field(rule, argument, entry.source, where)
        relation = None
        if entry.op is AtomicOp.RELATE:
            relation = (fields.get("predicate") or "", fields.get("direction") or "")
        deps = tuple(f"n{int(d)}" for d in step.get("dependencies", ()))
        nodes[node_id] = OpNode(node_id=node_id, op=entry.op,
                                attribute=fields.get("attribute"),
                                category=fields.get("category"),
                                relation=relation,
                                comparator=fields.get("comparator"),
                                deps=deps)
    for node in nodes.values():
        _validate_node(node)
    root = f"n{len(steps) - 1}"
    _validate_graph(nodes, root)
    return ReasoningProgram(
        question_id=str(doc.get("question_id", "")),
        question=str(doc.get("question", "")),
        nodes=nodes,
        root=root,
        reasoning_type=str(doc.get("reasoning_type", "")),
        image_id=None if doc.get("image_id") is None else str(doc["image_id"]),
    )
