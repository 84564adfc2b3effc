"""Execute a reasoning program against a scene graph.

Every operation is a pure function of immutable inputs; execute() walks
the program in topological order and records one NodeResult per node.
Semantics knobs (synonym table, comparator order tables, quantifier
mode) live in ExecConfig; the shipped defaults come from the package
data files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Mapping

from .errors import (EmptySelection, InterpreterError, KindMismatch,
                     MissingAttribute, NonSingletonSelection, UnorderedValue)
from .program import AtomicOp, ReasoningProgram, topo_order
from .scene import SceneGraph, SceneObject


class Quantifier(str, Enum):
    UNIVERSAL = "universal"
    EXISTENTIAL = "existential"


@dataclass(frozen=True)
class ExecConfig:
    quantifier: Quantifier = Quantifier.UNIVERSAL
    synonyms: Mapping[str, str] = field(default_factory=dict)
    comparator_orders: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    comparators: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    def canonical(self, name: str) -> str:
        return self.synonyms.get(name, name)


def default_config(quantifier: Quantifier = Quantifier.UNIVERSAL) -> ExecConfig:
    data = resources.files("rexforge.data")
    synonyms = json.loads(data.joinpath("synonyms.json").read_text("utf-8"))
    comp = json.loads(data.joinpath("comparators.json").read_text("utf-8"))
    return ExecConfig(
        quantifier=quantifier,
        synonyms=synonyms,
        comparator_orders={k: tuple(v) for k, v in comp["orders"].items()},
        comparators=comp["comparators"],
    )


@dataclass(frozen=True)
class NodeResult:
    """Result of one reasoning step; exactly one payload matches kind."""

    node_id: str
    kind: str  # objects | boolean | value | value_list
    objects: tuple[str, ...] | None = None
    boolean: bool | None = None
    value: str | None = None
    values: tuple[tuple[str, str], ...] | None = None

    def __post_init__(self):
        payloads = {"objects": self.objects, "boolean": self.boolean,
                    "value": self.value, "value_list": self.values}
        populated = [k for k, v in payloads.items() if v is not None]
        if populated != [self.kind]:
            raise ValueError(f"NodeResult kind {self.kind!r} with payloads {populated}")

    @classmethod
    def of_objects(cls, node_id: str, objects) -> "NodeResult":
        return cls(node_id, "objects", objects=tuple(objects))

    @classmethod
    def of_boolean(cls, node_id: str, boolean: bool) -> "NodeResult":
        return cls(node_id, "boolean", boolean=bool(boolean))

    @classmethod
    def of_value(cls, node_id: str, value: str) -> "NodeResult":
        return cls(node_id, "value", value=value)

    @classmethod
    def of_values(cls, node_id: str, values) -> "NodeResult":
        return cls(node_id, "value_list", values=tuple(values))


@dataclass(frozen=True)
class ExecutionTrace:
    results: tuple[NodeResult, ...]  # in topological order
    answer: str
    answer_kind: str  # "yes/no" | "value"

    def by_id(self, node_id: str) -> NodeResult:
        for result in self.results:
            if result.node_id == node_id:
                return result
        raise KeyError(node_id)


def _require_objects(dep: NodeResult) -> tuple[str, ...]:
    if dep.kind != "objects":
        raise KindMismatch(f"expected an object set from {dep.node_id!r}, "
                           f"got {dep.kind}")
    return dep.objects


def _require_boolean(dep: NodeResult) -> bool:
    if dep.kind != "boolean":
        raise KindMismatch(f"expected a boolean from {dep.node_id!r}, got {dep.kind}")
    return dep.boolean


def exec_select(g: SceneGraph, category: str, config: ExecConfig) -> tuple[str, ...]:
    """All objects whose (synonym-normalized) name matches, ordered by id."""
    wanted = config.canonical(category)
    return tuple(sorted(oid for oid, obj in g.objects.items()
                        if config.canonical(obj.name) == wanted))


def exec_exist(dep: NodeResult) -> bool:
    return len(_require_objects(dep)) > 0


def exec_filter(g: SceneGraph, dep: NodeResult, attribute: str) -> tuple[str, ...]:
    """Subset of the dep objects holding the value in any attribute family."""
    return tuple(oid for oid in _require_objects(dep)
                 if g.get(oid).has_value(attribute))


def exec_query(g: SceneGraph, dep: NodeResult, family: str) -> str:
    objects = _require_objects(dep)
    if len(objects) != 1:
        raise NonSingletonSelection(f"query needs exactly one object, got {len(objects)}")
    obj = g.get(objects[0])
    if family not in obj.attributes:
        raise MissingAttribute(f"object {obj.id!r} has no {family!r} attribute")
    return obj.attributes[family]


def exec_verify(g: SceneGraph, dep: NodeResult, attribute: str,
                config: ExecConfig) -> bool:
    objects = _require_objects(dep)
    if not objects:
        raise EmptySelection("verify over an empty selection")
    holds = [g.get(oid).has_value(attribute) for oid in objects]
    if config.quantifier is Quantifier.UNIVERSAL:
        return all(holds)
    return any(holds)


def exec_relate(g: SceneGraph, dep: NodeResult, predicate: str, direction: str,
                category: str, config: ExecConfig) -> tuple[str, ...]:
    """Objects of `category` related to any dep object through `predicate`.

    direction "subject": results are subjects of edges pointing at dep
    objects; "object": results are targets of edges leaving dep objects.
    """
    anchors = set(_require_objects(dep))
    wanted = config.canonical(category)
    found = set()
    if direction == "subject":
        for oid, obj in g.objects.items():
            if config.canonical(obj.name) != wanted:
                continue
            if any(p == predicate and t in anchors for p, t in obj.relations):
                found.add(oid)
    else:
        for aid in anchors:
            for p, t in g.get(aid).relations:
                if p == predicate and config.canonical(g.get(t).name) == wanted:
                    found.add(t)
    return tuple(sorted(found))


def exec_common(g: SceneGraph, dep_a: NodeResult,
                dep_b: NodeResult) -> tuple[tuple[str, str], ...]:
    """(family, value) pairs held by every object across both groups."""
    group_a, group_b = _require_objects(dep_a), _require_objects(dep_b)
    if not group_a or not group_b:
        raise EmptySelection("common over an empty selection")
    everyone = [g.get(oid) for oid in dict.fromkeys(group_a + group_b)]
    shared = set(everyone[0].attributes.items())
    for obj in everyone[1:]:
        shared &= set(obj.attributes.items())
    return tuple(sorted(shared))


def _family_values(g: SceneGraph, objects, family: str) -> list[str]:
    values = []
    for oid in objects:
        obj = g.get(oid)
        if family not in obj.attributes:
            raise MissingAttribute(f"object {oid!r} has no {family!r} attribute")
        values.append(obj.attributes[family])
    return values


def exec_same(g: SceneGraph, dep_a: NodeResult, dep_b: NodeResult,
              family: str | None, config: ExecConfig) -> bool:
    """With a family: do the two groups carry the same value in it?

    Universal mode requires one value shared by every object in both
    groups; existential mode asks for any cross-group value match.
    Without a family: true iff the groups have any common attribute pair.
    """
    group_a, group_b = _require_objects(dep_a), _require_objects(dep_b)
    if not group_a or not group_b:
        raise EmptySelection("same/different over an empty selection")
    if family is None:
        return len(exec_common(g, dep_a, dep_b)) > 0
    values_a = _family_values(g, group_a, family)
    values_b = _family_values(g, group_b, family)
    if config.quantifier is Quantifier.UNIVERSAL:
        return len(set(values_a) | set(values_b)) == 1
    return len(set(values_a) & set(values_b)) > 0


def exec_different(g: SceneGraph, dep_a: NodeResult, dep_b: NodeResult,
                   family: str | None, config: ExecConfig) -> bool:
    """Negation of exec_same with the identical error contract."""
    return not exec_same(g, dep_a, dep_b, family, config)


def _ordinal(value: str, family: str, config: ExecConfig) -> int:
    order = config.comparator_orders.get(family)
    if order is None or value not in order:
        raise UnorderedValue(f"value {value!r} has no rank in the {family!r} order table")
    return order.index(value)


def exec_compare(g: SceneGraph, dep_a: NodeResult, dep_b: NodeResult,
                 family: str, comparator: str,
                 config: ExecConfig) -> bool | str:
    """Compare singleton groups on an ordered attribute family.

    Boolean comparators ("larger") test the first object strictly
    against the second; choice comparators ("which_larger") return the
    winning object's category, the first object on ties.
    """
    rule = config.comparators.get(comparator)
    if rule is None:
        raise UnorderedValue(f"unknown comparator {comparator!r}")
    group_a, group_b = _require_objects(dep_a), _require_objects(dep_b)
    if len(group_a) != 1 or len(group_b) != 1:
        raise NonSingletonSelection(
            f"compare needs singletons, got {len(group_a)} and {len(group_b)}")
    obj_a, obj_b = g.get(group_a[0]), g.get(group_b[0])
    rank_a = _ordinal(_family_values(g, group_a, family)[0], family, config)
    rank_b = _ordinal(_family_values(g, group_b, family)[0], family, config)
    greater = rule["direction"] == "greater"
    if rule["kind"] == "boolean":
        return rank_a > rank_b if greater else rank_a < rank_b
    if rank_a == rank_b:
        return obj_a.name
    a_wins = rank_a > rank_b if greater else rank_a < rank_b
    return obj_a.name if a_wins else obj_b.name


def exec_logical(op: AtomicOp, dep_a: NodeResult, dep_b: NodeResult) -> bool:
    a, b = _require_boolean(dep_a), _require_boolean(dep_b)
    return (a and b) if op is AtomicOp.AND else (a or b)


def _answer(result: NodeResult, g: SceneGraph) -> tuple[str, str]:
    if result.kind == "boolean":
        return ("yes" if result.boolean else "no"), "yes/no"
    if result.kind == "value":
        return result.value, "value"
    if result.kind == "value_list":
        values = [v for _, v in result.values]
        return (" and ".join(values) if values else "nothing"), "value"
    names = sorted({g.get(oid).name for oid in result.objects})
    return (" and ".join(names) if names else "nothing"), "value"


def execute(program: ReasoningProgram, g: SceneGraph,
            config: ExecConfig | None = None) -> ExecutionTrace:
    """Run every node in topological order and derive the final answer.

    Node failures propagate as InterpreterError subclasses annotated
    with the failing node_id.
    """
    if config is None:
        config = default_config()
    results: dict[str, NodeResult] = {}
    order = topo_order(program)
    for nid in order:
        node = program.node(nid)
        deps = [results[d] for d in node.deps]
        try:
            results[nid] = _dispatch(node, deps, g, config)
        except InterpreterError as exc:
            if exc.node_id is None:
                exc.node_id = nid
            raise
    ordered = tuple(results[nid] for nid in order)
    answer, answer_kind = _answer(results[program.root], g)
    return ExecutionTrace(results=ordered, answer=answer, answer_kind=answer_kind)


def _dispatch(node, deps, g: SceneGraph, config: ExecConfig) -> NodeResult:
    op = node.op
    nid = node.node_id
    if op is AtomicOp.SELECT:
        return NodeResult.of_objects(nid, exec_select(g, node.category, config))
    if op is AtomicOp.EXIST:
        return NodeResult.of_boolean(nid, exec_exist(deps[0]))
    if op is AtomicOp.FILTER:
        return NodeResult.of_objects(nid, exec_filter(g, deps[0], node.attribute))
    if op is AtomicOp.QUERY:
        return NodeResult.of_value(nid, exec_query(g, deps[0], node.attribute))
    if op is AtomicOp.VERIFY:
        return NodeResult.of_boolean(nid, exec_verify(g, deps[0], node.attribute, config))
    if op is AtomicOp.RELATE:
        predicate, direction = node.relation
        return NodeResult.of_objects(
            nid, exec_relate(g, deps[0], predicate, direction, node.category, config))
    if op is AtomicOp.COMMON:
        return NodeResult.of_values(nid, exec_common(g, deps[0], deps[1]))
    if op is AtomicOp.SAME:
        return NodeResult.of_boolean(
            nid, exec_same(g, deps[0], deps[1], node.attribute, config))
    if op is AtomicOp.DIFFERENT:
        return NodeResult.of_boolean(
            nid, exec_different(g, deps[0], deps[1], node.attribute, config))
    if op is AtomicOp.COMPARE:
        outcome = exec_compare(g, deps[0], deps[1], node.attribute,
                               node.comparator, config)
        if isinstance(outcome, bool):
            return NodeResult.of_boolean(nid, outcome)
        return NodeResult.of_value(nid, outcome)
    return NodeResult.of_boolean(nid, exec_logical(op, deps[0], deps[1]))
