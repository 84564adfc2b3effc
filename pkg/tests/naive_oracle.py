"""Independent naive recursive evaluator used as the interpreter oracle.

Deliberately written against the documented operation contracts with
plain recursion and set comprehensions, sharing nothing with the
package's execution path beyond the parsed input model. Errors are
reported as OracleError with a kind string equal to the engine's
exception class name, so outcomes compare one-to-one.
"""

from __future__ import annotations


class OracleError(Exception):
    def __init__(self, kind: str):
        super().__init__(kind)
        self.kind = kind


def evaluate(program, scene, quantifier="universal", synonyms=None,
             orders=None, comparators=None):
    """Return (answer, answer_kind) or raise OracleError."""
    syn = synonyms or {}
    orders = orders or {}
    comparators = comparators or {}

    def canon(name):
        return syn.get(name, name)

    def matches(obj, category):
        return canon(obj.name) == canon(category)

    def need_objects(value):
        if not isinstance(value, frozenset):
            raise OracleError("KindMismatch")
        return value

    def need_bool(value):
        if not isinstance(value, bool):
            raise OracleError("KindMismatch")
        return value

    def family_value(oid, family):
        attrs = scene.objects[oid].attributes
        if family not in attrs:
            raise OracleError("MissingAttribute")
        return attrs[family]

    def rank(value, family):
        order = orders.get(family, ())
        if value not in order:
            raise OracleError("UnorderedValue")
        return list(order).index(value)

    def common_pairs(ids):
        sets = [set(scene.objects[oid].attributes.items()) for oid in ids]
        shared = sets[0]
        for s in sets[1:]:
            shared = shared & s
        return tuple(sorted(shared))

    memo = {}

    def ev(nid):
        if nid in memo:
            return memo[nid]
        node = program.nodes[nid]
        op = node.op.value
        if op == "select":
            out = frozenset(o.id for o in scene.objects.values()
                            if matches(o, node.category))
        elif op == "exist":
            out = len(need_objects(ev(node.deps[0]))) > 0
        elif op == "filter":
            dep = need_objects(ev(node.deps[0]))
            out = frozenset(oid for oid in dep
                            if node.attribute in scene.objects[oid].attributes.values())
        elif op == "query":
            dep = need_objects(ev(node.deps[0]))
            if len(dep) != 1:
                raise OracleError("NonSingletonSelection")
            out = family_value(next(iter(dep)), node.attribute)
        elif op == "verify":
            dep = need_objects(ev(node.deps[0]))
            if not dep:
                raise OracleError("EmptySelection")
            holds = [node.attribute in scene.objects[oid].attributes.values()
                     for oid in dep]
            out = all(holds) if quantifier == "universal" else any(holds)
        elif op == "relate":
            dep = need_objects(ev(node.deps[0]))
            predicate, direction = node.relation
            if direction == "subject":
                out = frozenset(
                    o.id for o in scene.objects.values()
                    if matches(o, node.category)
                    and any(p == predicate and t in dep for p, t in o.relations))
            else:
                out = frozenset(
                    t for oid in dep for p, t in scene.objects[oid].relations
                    if p == predicate and matches(scene.objects[t], node.category))
        elif op == "common":
            a = need_objects(ev(node.deps[0]))
            b = need_objects(ev(node.deps[1]))
            if not a or not b:
                raise OracleError("EmptySelection")
            out = common_pairs(sorted(a | b))
        elif op in ("same", "different"):
            a = need_objects(ev(node.deps[0]))
            b = need_objects(ev(node.deps[1]))
            if not a or not b:
                raise OracleError("EmptySelection")
            if node.attribute is None:
                same = len(common_pairs(sorted(a | b))) > 0
            else:
                vals_a = {family_value(oid, node.attribute) for oid in sorted(a)}
                vals_b = {family_value(oid, node.attribute) for oid in sorted(b)}
                if quantifier == "universal":
                    same = len(vals_a | vals_b) == 1
                else:
                    same = len(vals_a & vals_b) > 0
            out = same if op == "same" else not same
        elif op == "compare":
            rule = comparators.get(node.comparator)
            if rule is None:
                raise OracleError("UnorderedValue")
            a = need_objects(ev(node.deps[0]))
            b = need_objects(ev(node.deps[1]))
            if len(a) != 1 or len(b) != 1:
                raise OracleError("NonSingletonSelection")
            oa, ob = next(iter(a)), next(iter(b))
            ra = rank(family_value(oa, node.attribute), node.attribute)
            rb = rank(family_value(ob, node.attribute), node.attribute)
            greater = rule["direction"] == "greater"
            if rule["kind"] == "boolean":
                out = (ra > rb) if greater else (ra < rb)
            elif ra == rb:
                out = scene.objects[oa].name
            else:
                a_wins = (ra > rb) if greater else (ra < rb)
                out = scene.objects[oa].name if a_wins else scene.objects[ob].name
        elif op in ("and", "or"):
            a = need_bool(ev(node.deps[0]))
            b = need_bool(ev(node.deps[1]))
            out = (a and b) if op == "and" else (a or b)
        else:
            raise AssertionError(f"unhandled op {op}")
        memo[nid] = out
        return out

    result = ev(program.root)
    if isinstance(result, bool):
        return ("yes" if result else "no"), "yes/no"
    if isinstance(result, str):
        return result, "value"
    if isinstance(result, tuple):
        values = [v for _, v in result]
        return (" and ".join(values) if values else "nothing"), "value"
    names = sorted({scene.objects[oid].name for oid in result})
    return (" and ".join(names) if names else "nothing"), "value"
