"""Compile execution traces into visually grounded explanations.

Each reasoning step renders a partial explanation through its
operation's template; dependents splice those partials verbatim, so the
root's text accumulates the whole reasoning chain, and the final
explanation appends the answer clause. Object mentions are grounded as
`#i` region tokens through highest-IoU alignment.

Surface-form conventions (locked by the golden-file tests):
  - grounded mention: "the <name> #i"; enumerations join with "and" and
    cap at 5 mentions followed by "and others";
  - empty selections render the intended description without region
    tokens ("there is no red apple"), except that a relate step keeps
    its dependency's grounded text ("no plate on the table #0");
  - negated verify inserts "not" before the attribute.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

from .errors import (AlignmentBelowThreshold, ExplainError,
                     RegionIndexOutOfRange, TemplateSlotError)
from .interpreter import ExecConfig, ExecutionTrace, NodeResult, default_config
from .program import AtomicOp, OpNode, ReasoningProgram, topo_order
from .scene import (DEFAULT_MIN_IOU, ATTRIBUTE_FAMILIES, RegionSet, SceneGraph,
                    align_object)

SLOTS = ("OBJ", "ATTR", "ATTR1", "ATTR2", "DEP", "DEP1", "DEP2",
         "CHECK_EXISTENCE", "QUERY_ATTR", "VERIFY_ATTR", "FIND_COMMON",
         "COMPARE_ATTR", "RELATION", "LOGICAL")

_SLOT_RE = re.compile(r"^\{([A-Z_0-9]+)\}$")
_REGION_RE = re.compile(r"^#(\d+)$")

MENTION_CAP = 5


@dataclass(frozen=True)
class RegionToken:
    """A #i token in an explanation, optionally remembering its object."""

    index: int
    object_id: str | None = None

    def surface(self) -> str:
        return f"#{self.index}"


@dataclass(frozen=True)
class PartialExplanation:
    node_id: str
    tokens: tuple


@dataclass(frozen=True)
class GroundedExplanation:
    """Final token sequence with `#i` surface forms plus alignment maps.

    grounding maps token position -> region index for exactly the
    positions holding region tokens; grounded_objects maps object id ->
    region index; attributes lists the (family, value) pairs the
    reasoning relied on (used by the attribute-recall metric).
    """

    question_id: str
    tokens: tuple[str, ...]
    answer: str
    grounding: Mapping[int, int]
    grounded_objects: Mapping[str, int]
    attributes: tuple[tuple[str, str], ...] = ()

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class Template:
    op: AtomicOp
    branches: Mapping[str, tuple[str, ...]]  # branch label -> pattern


@dataclass(frozen=True)
class TemplateTable:
    templates: Mapping[AtomicOp, Template]

    def for_op(self, op: AtomicOp) -> Template:
        return self.templates[op]


def parse_templates(doc) -> TemplateTable:
    if isinstance(doc, str):
        doc = json.loads(doc)
    templates = {}
    for op in AtomicOp:
        if op.value not in doc:
            raise ExplainError(f"template table has no entry for {op.value!r}")
        raw = doc[op.value]
        if "pattern" in raw:
            branches = {"default": tuple(raw["pattern"])}
        else:
            branches = {label: tuple(pat) for label, pat in raw["branches"].items()}
        for pattern in branches.values():
            for item in pattern:
                m = _SLOT_RE.match(item)
                if m and m.group(1) not in SLOTS:
                    raise ExplainError(f"unknown slot {item} in template for {op.value!r}")
        templates[op] = Template(op=op, branches=branches)
    return TemplateTable(templates=templates)


def load_default_templates() -> TemplateTable:
    text = resources.files("rexforge.data").joinpath("templates.json").read_text("utf-8")
    return parse_templates(text)


def _load_vocab() -> dict[str, str]:
    text = resources.files("rexforge.data").joinpath("attribute_vocab.json").read_text("utf-8")
    table = json.loads(text)
    value_to_family: dict[str, str] = {}
    for family in ATTRIBUTE_FAMILIES:
        for value in table.get(family, ()):
            value_to_family.setdefault(value, family)
    return value_to_family

_VALUE_FAMILY: dict[str, str] | None = None


def _value_family() -> dict[str, str]:
    global _VALUE_FAMILY
    if _VALUE_FAMILY is None:
        _VALUE_FAMILY = _load_vocab()
    return _VALUE_FAMILY


@dataclass(frozen=True)
class ExplainOptions:
    min_iou: float = DEFAULT_MIN_IOU
    on_miss: str = "drop-token"  # drop-token | fail


class Grounder:
    """Per-question alignment cache; guarantees mention consistency."""

    def __init__(self, g: SceneGraph, regions: RegionSet, options: ExplainOptions):
        self.graph = g
        self.regions = regions
        self.options = options
        self._cache: dict[str, RegionToken | None] = {}

    def token_for(self, object_id: str) -> RegionToken | None:
        if object_id not in self._cache:
            try:
                index, _ = align_object(self.graph.get(object_id), self.regions,
                                        self.options.min_iou)
                self._cache[object_id] = RegionToken(index, object_id)
            except AlignmentBelowThreshold:
                if self.options.on_miss == "fail":
                    raise
                self._cache[object_id] = None
        return self._cache[object_id]


@dataclass
class _RenderContext:
    node: OpNode
    result: NodeResult
    dep_results: tuple[NodeResult, ...]
    dep_partials: tuple[PartialExplanation, ...]
    graph: SceneGraph
    grounder: Grounder
    config: ExecConfig
    program: ReasoningProgram


def _copula(count: int) -> str:
    return "is" if count <= 1 else "are"


def _words(value: str) -> list:
    return value.split()


def _join_with_and(chunks: Sequence[Sequence]) -> list:
    out: list = []
    for i, chunk in enumerate(chunks):
        if i:
            out.append("and")
        out.extend(chunk)
    return out


def _strip_leading_article(tokens: Sequence) -> list:
    return list(tokens[1:]) if tokens and tokens[0] == "the" else list(tokens)


def _head_description(program: ReasoningProgram, node_id: str) -> list:
    """Ungrounded noun phrase for a selection chain ("purple dog")."""
    node = program.node(node_id)
    if node.op in (AtomicOp.SELECT, AtomicOp.RELATE):
        return _words(node.category)
    if node.op is AtomicOp.FILTER:
        return _words(node.attribute) + _head_description(program, node.deps[0])
    return []


def _mention(ctx: _RenderContext, object_ids: Sequence[str],
             modifier: str | None = None) -> list:
    """Grounded enumeration: "the <mod> <name> #i and ...", capped."""
    chunks = []
    for oid in object_ids[:MENTION_CAP]:
        obj = ctx.graph.get(oid)
        chunk: list = ["the"]
        if modifier:
            chunk.extend(_words(modifier))
        chunk.extend(_words(obj.name))
        token = ctx.grounder.token_for(oid)
        if token is not None:
            chunk.append(token)
        chunks.append(chunk)
    out = _join_with_and(chunks)
    if len(object_ids) > MENTION_CAP:
        out.extend(["and", "others"])
    return out


def _dep_partial(ctx: _RenderContext, slot: str, index: int) -> PartialExplanation:
    if index >= len(ctx.dep_partials):
        raise TemplateSlotError(ctx.node.node_id, slot,
                                f"needs dependency {index + 1}, node has "
                                f"{len(ctx.dep_partials)}")
    return ctx.dep_partials[index]


def _group_values(ctx: _RenderContext, result: NodeResult, family: str) -> list[str]:
    return sorted({ctx.graph.get(oid).attributes[family] for oid in result.objects})


def _fill_obj(ctx: _RenderContext, slot: str) -> list:
    node = ctx.node
    if node.op is AtomicOp.SELECT:
        if ctx.result.objects:
            return _mention(ctx, ctx.result.objects)
        return ["the"] + _words(node.category)
    if node.op is AtomicOp.FILTER:
        if ctx.result.objects:
            return _mention(ctx, ctx.result.objects, modifier=node.attribute)
        return (["the"] + _words(node.attribute)
                + _head_description(ctx.program, node.deps[0]))
    if node.op is AtomicOp.RELATE:
        if ctx.result.objects:
            return _mention(ctx, ctx.result.objects)
        return ["the"] + _words(node.category)
    raise TemplateSlotError(node.node_id, slot,
                            f"OBJ is not defined for {node.op.value}")


def _shared_values(ctx: _RenderContext) -> list[str]:
    node = ctx.node
    family = node.attribute
    a, b = ctx.dep_results
    if family is not None:
        vals_a = {ctx.graph.get(oid).attributes[family] for oid in a.objects}
        vals_b = {ctx.graph.get(oid).attributes[family] for oid in b.objects}
        return sorted(vals_a & vals_b)
    shared: set | None = None
    for oid in a.objects + b.objects:
        pairs = set(ctx.graph.get(oid).attribute_pairs())
        shared = pairs if shared is None else (shared & pairs)
    seen: dict[str, None] = {}
    for _, value in sorted(shared or ()):
        seen.setdefault(value, None)
    return list(seen)


def _fill_attr(ctx: _RenderContext, slot: str) -> list:
    values = _shared_values(ctx)
    if not values:
        raise TemplateSlotError(ctx.node.node_id, slot, "no shared value to render")
    return _join_with_and([_words(v) for v in values])


def _fill_attr_n(ctx: _RenderContext, slot: str) -> list:
    index = 0 if slot == "ATTR1" else 1
    family = ctx.node.attribute
    if family is None:
        raise TemplateSlotError(ctx.node.node_id, slot,
                                "contrast rendering needs an attribute family")
    result = ctx.dep_results[index]
    values = _group_values(ctx, result, family)
    return [_copula(len(result.objects))] + _join_with_and([_words(v) for v in values])


def _fill_check_existence(ctx: _RenderContext, slot: str) -> list:
    dep = _dep_partial(ctx, slot, 0)
    dep_objects = ctx.dep_results[0].objects
    if ctx.result.boolean:
        return [_copula(len(dep_objects))] + list(dep.tokens)
    return ["is", "no"] + _strip_leading_article(dep.tokens)


def _fill_query_attr(ctx: _RenderContext, slot: str) -> list:
    if ctx.result.kind != "value":
        raise TemplateSlotError(ctx.node.node_id, slot, "needs a value result")
    return [_copula(len(ctx.dep_results[0].objects))] + _words(ctx.result.value)


def _fill_verify_attr(ctx: _RenderContext, slot: str) -> list:
    out = [_copula(len(ctx.dep_results[0].objects))]
    if not ctx.result.boolean:
        out.append("not")
    out.extend(_words(ctx.node.attribute))
    return out


def _fill_find_common(ctx: _RenderContext, slot: str) -> list:
    values = ctx.result.values
    if values:
        seen: dict[str, None] = {}
        for _, value in values:
            seen.setdefault(value, None)
        return ["are"] + _join_with_and([_words(v) for v in seen])
    return ["have", "nothing", "in", "common"]


def _fill_compare_attr(ctx: _RenderContext, slot: str) -> list:
    rule = ctx.config.comparators.get(ctx.node.comparator or "")
    if rule is None:
        raise TemplateSlotError(ctx.node.node_id, slot,
                                f"unknown comparator {ctx.node.comparator!r}")
    surface = _words(rule["surface"])
    if ctx.result.kind == "boolean" and not ctx.result.boolean:
        return ["is", "not"] + surface
    return ["is"] + surface


def _fill_relation(ctx: _RenderContext, slot: str) -> list:
    if ctx.node.relation is None:
        raise TemplateSlotError(ctx.node.node_id, slot, "node carries no relation")
    predicate, direction = ctx.node.relation
    if direction == "object":
        return [_copula(len(ctx.dep_results[0].objects))] + _words(predicate)
    return _words(predicate)


def _fill_logical(ctx: _RenderContext, slot: str) -> list:
    return [ctx.node.op.value]


_FILLERS = {
    "OBJ": _fill_obj,
    "ATTR": _fill_attr,
    "ATTR1": _fill_attr_n,
    "ATTR2": _fill_attr_n,
    "DEP": lambda ctx, slot: list(_dep_partial(ctx, slot, 0).tokens),
    "DEP1": lambda ctx, slot: list(_dep_partial(ctx, slot, 0).tokens),
    "DEP2": lambda ctx, slot: list(_dep_partial(ctx, slot, 1).tokens),
    "CHECK_EXISTENCE": _fill_check_existence,
    "QUERY_ATTR": _fill_query_attr,
    "VERIFY_ATTR": _fill_verify_attr,
    "FIND_COMMON": _fill_find_common,
    "COMPARE_ATTR": _fill_compare_attr,
    "RELATION": _fill_relation,
    "LOGICAL": _fill_logical,
}


def _choose_branch(template: Template, ctx: _RenderContext) -> tuple[str, ...]:
    branches = template.branches
    if "default" in branches:
        return branches["default"]
    node, result = ctx.node, ctx.result
    if node.op is AtomicOp.RELATE:
        return branches[node.relation[1]]
    if node.op is AtomicOp.COMMON:
        return branches["shared" if result.values else "disjoint"]
    if node.op in (AtomicOp.SAME, AtomicOp.DIFFERENT):
        share = result.boolean if node.op is AtomicOp.SAME else not result.boolean
        if share:
            return branches["shared"]
        return branches["contrast" if node.attribute is not None else "disjoint"]
    if node.op is AtomicOp.COMPARE:
        if result.kind == "boolean":
            return branches["affirmative" if result.boolean else "negated"]
        # choice comparator: order the clause around the winning side
        family = node.attribute
        order = ctx.config.comparator_orders.get(family, ())
        obj_a = ctx.graph.get(ctx.dep_results[0].objects[0])
        obj_b = ctx.graph.get(ctx.dep_results[1].objects[0])
        rank_a = order.index(obj_a.attributes[family])
        rank_b = order.index(obj_b.attributes[family])
        greater = ctx.config.comparators[node.comparator]["direction"] == "greater"
        a_wins = rank_a >= rank_b if greater else rank_a <= rank_b
        return branches["choice_first" if a_wins else "choice_second"]
    raise ExplainError(f"template for {node.op.value!r} has unrecognized branches")


def render_node(node: OpNode, result: NodeResult,
                dep_results: Sequence[NodeResult],
                dep_partials: Sequence[PartialExplanation],
                g: SceneGraph, grounder: Grounder, templates: TemplateTable,
                config: ExecConfig, program: ReasoningProgram) -> PartialExplanation:
    """Apply the operation's template to produce this node's partial."""
    ctx = _RenderContext(node=node, result=result,
                         dep_results=tuple(dep_results),
                         dep_partials=tuple(dep_partials), graph=g,
                         grounder=grounder, config=config, program=program)
    pattern = _choose_branch(templates.for_op(node.op), ctx)
    tokens: list = []
    for item in pattern:
        m = _SLOT_RE.match(item)
        if m is None:
            tokens.extend(_words(item))
            continue
        slot = m.group(1)
        filler = _FILLERS.get(slot)
        if filler is None:
            raise TemplateSlotError(node.node_id, slot, "no filler for slot")
        tokens.extend(filler(ctx, slot))
    return PartialExplanation(node_id=node.node_id, tokens=tuple(tokens))


def _resolve_family(g: SceneGraph, object_ids: Sequence[str], value: str) -> str:
    for oid in object_ids:
        for family, held in g.get(oid).attributes.items():
            if held == value:
                return family
    return _value_family().get(value, "other")


def _contains_span(tokens: Sequence[str], span: Sequence[str]) -> bool:
    n = len(span)
    if n == 0:
        return False
    return any(list(tokens[i:i + n]) == list(span)
               for i in range(len(tokens) - n + 1))


def collect_key_attributes(program: ReasoningProgram, trace: ExecutionTrace,
                           g: SceneGraph) -> tuple[tuple[str, str], ...]:
    """(family, value) pairs the reasoning touched, for attribute recall."""
    results = {r.node_id: r for r in trace.results}
    pairs: set[tuple[str, str]] = set()
    for nid, node in program.nodes.items():
        result = results[nid]
        if node.op is AtomicOp.QUERY:
            pairs.add((node.attribute, result.value))
        elif node.op is AtomicOp.FILTER:
            anchor = result.objects or results[node.deps[0]].objects
            pairs.add((_resolve_family(g, anchor, node.attribute), node.attribute))
        elif node.op is AtomicOp.VERIFY:
            anchor = results[node.deps[0]].objects
            pairs.add((_resolve_family(g, anchor, node.attribute), node.attribute))
        elif node.op is AtomicOp.COMMON:
            pairs.update(result.values)
        elif node.op in (AtomicOp.SAME, AtomicOp.DIFFERENT) and node.attribute:
            for dep in node.deps:
                for oid in results[dep].objects:
                    value = g.get(oid).attributes.get(node.attribute)
                    if value is not None:
                        pairs.add((node.attribute, value))
        elif node.op is AtomicOp.COMPARE:
            for dep in node.deps:
                for oid in results[dep].objects:
                    value = g.get(oid).attributes.get(node.attribute)
                    if value is not None:
                        pairs.add((node.attribute, value))
    return tuple(sorted(pairs))


def compile_explanation(trace: ExecutionTrace, program: ReasoningProgram,
                        g: SceneGraph, regions: RegionSet,
                        templates: TemplateTable | None = None,
                        config: ExecConfig | None = None,
                        options: ExplainOptions | None = None) -> GroundedExplanation:
    """Render the whole program and finish with the answer clause."""
    if templates is None:
        templates = load_default_templates()
    if config is None:
        config = default_config()
    if options is None:
        options = ExplainOptions()
    grounder = Grounder(g, regions, options)
    results = {r.node_id: r for r in trace.results}
    partials: dict[str, PartialExplanation] = {}
    for nid in topo_order(program):
        node = program.node(nid)
        partials[nid] = render_node(
            node, results[nid],
            [results[d] for d in node.deps],
            [partials[d] for d in node.deps],
            g, grounder, templates, config, program)
    tokens = list(partials[program.root].tokens)
    tokens.extend(["so", "the", "answer", "is"])
    tokens.extend(_words(trace.answer) or ["nothing"])

    flat: list[str] = []
    grounding: dict[int, int] = {}
    grounded_objects: dict[str, int] = {}
    for pos, token in enumerate(tokens):
        if isinstance(token, RegionToken):
            if token.index >= len(regions):
                raise RegionIndexOutOfRange(token.index, len(regions))
            grounding[pos] = token.index
            if token.object_id is not None:
                grounded_objects[token.object_id] = token.index
            flat.append(token.surface())
        else:
            flat.append(str(token))
    # only annotate attribute values the explanation actually carries, so
    # the recall metric's denominator stays attainable
    lowered = [t.lower() for t in flat]
    attributes = tuple(pair for pair in collect_key_attributes(program, trace, g)
                       if _contains_span(lowered, pair[1].split()))
    return GroundedExplanation(
        question_id=program.question_id,
        tokens=tuple(flat),
        answer=trace.answer,
        grounding=grounding,
        grounded_objects=grounded_objects,
        attributes=attributes,
    )


def parse_explanation(text: str, n_regions: int) -> GroundedExplanation:
    """Tokenize an explanation string, recovering its region tokens.

    Any whitespace token of the form #<digits> becomes a region token;
    indices at or beyond n_regions raise RegionIndexOutOfRange.
    """
    tokens = tuple(text.split())
    grounding: dict[int, int] = {}
    for pos, token in enumerate(tokens):
        m = _REGION_RE.match(token)
        if m is None:
            continue
        index = int(m.group(1))
        if index >= n_regions:
            raise RegionIndexOutOfRange(index, n_regions)
        grounding[pos] = index
    return GroundedExplanation(question_id="", tokens=tokens, answer="",
                               grounding=grounding, grounded_objects={})
