"""Seeded random scene/program/region generators shared across tests.

Documents are produced in the JSON wire shape so tests exercise the real
parsers. Programs are well-typed by construction but frequently probe
edge paths (absent categories, empty filters, non-singleton queries), so
legitimate per-question interpreter errors are part of the output space.
"""

from __future__ import annotations

import json
import random

CATEGORIES = ["apple", "table", "chair", "dog", "plate", "sofa", "car",
              "ball", "cup", "book"]
PREDICATES = ["on", "under", "behind", "holding", "near"]
FAMILY_POOLS = {
    "color": ["red", "green", "blue", "white", "black"],
    "material": ["wood", "metal", "plastic", "glass"],
    "size": ["small", "medium", "large"],
    "shape": ["round", "square"],
    "other": ["dirty", "clean", "new", "old"],
}


def random_box(rng: random.Random, width=640, height=480):
    x1 = rng.uniform(0, width - 20)
    y1 = rng.uniform(0, height - 20)
    x2 = x1 + rng.uniform(5, width - x1)
    y2 = y1 + rng.uniform(5, height - y1)
    return [round(x1, 2), round(y1, 2), round(min(x2, width), 2),
            round(min(y2, height), 2)]


def random_scene_doc(rng: random.Random, image_id: str, max_objects: int = 8) -> dict:
    n = rng.randint(1, max_objects)
    objects = {}
    ids = [f"o{i}" for i in range(n)]
    for oid in ids:
        attributes = []
        for family, pool in FAMILY_POOLS.items():
            if rng.random() < 0.6:
                attributes.append({"family": family, "value": rng.choice(pool)})
        objects[oid] = {
            "name": rng.choice(CATEGORIES),
            "box": random_box(rng),
            "attributes": attributes,
            "relations": [],
        }
    for oid in ids:
        for _ in range(rng.randint(0, 2)):
            target = rng.choice(ids)
            if target != oid:
                objects[oid]["relations"].append(
                    {"predicate": rng.choice(PREDICATES), "target": target})
    return {"image_id": image_id, "width": 640, "height": 480, "objects": objects}


def regions_for_scene(rng: random.Random, scene_doc: dict,
                      extra: int = 2, jitter: float = 6.0) -> dict:
    """Input regions: jittered copies of the object boxes plus distractors."""
    regions = []
    width, height = scene_doc["width"], scene_doc["height"]
    for obj in scene_doc["objects"].values():
        x1, y1, x2, y2 = obj["box"]
        regions.append([
            round(min(max(x1 + rng.uniform(-jitter, jitter), 0), width), 2),
            round(min(max(y1 + rng.uniform(-jitter, jitter), 0), height), 2),
            round(min(max(x2 + rng.uniform(-jitter, jitter), 0), width), 2),
            round(min(max(y2 + rng.uniform(-jitter, jitter), 0), height), 2),
        ])
    for _ in range(extra):
        regions.append(random_box(rng, width, height))
    for box in regions:
        box[0], box[2] = min(box[0], box[2]), max(box[0], box[2])
        box[1], box[3] = min(box[1], box[3]), max(box[1], box[3])
    order = list(range(len(regions)))
    rng.shuffle(order)
    return {"image_id": scene_doc["image_id"],
            "regions": [regions[i] for i in order]}


def _scene_names(scene_doc: dict) -> list[str]:
    return sorted({o["name"] for o in scene_doc["objects"].values()})


def _scene_values(scene_doc: dict) -> list[str]:
    values = set()
    for obj in scene_doc["objects"].values():
        for attr in obj["attributes"]:
            values.add(attr["value"])
    return sorted(values)


def _pick_category(rng: random.Random, scene_doc: dict) -> str:
    names = _scene_names(scene_doc)
    if names and rng.random() < 0.8:
        return rng.choice(names)
    return rng.choice(CATEGORIES)


def _pick_value(rng: random.Random, scene_doc: dict) -> str:
    values = _scene_values(scene_doc)
    if values and rng.random() < 0.8:
        return rng.choice(values)
    return rng.choice([v for pool in FAMILY_POOLS.values() for v in pool])


def _object_chain(rng: random.Random, scene_doc: dict, nodes: dict,
                  prefix: str) -> str:
    """Select [-> filter] [-> relate]; returns the chain's head node id."""
    nid = f"{prefix}0"
    nodes[nid] = {"op": "select", "category": _pick_category(rng, scene_doc),
                  "deps": []}
    if rng.random() < 0.35:
        fid = f"{prefix}1"
        nodes[fid] = {"op": "filter", "attribute": _pick_value(rng, scene_doc),
                      "deps": [nid]}
        nid = fid
    if rng.random() < 0.35:
        rid = f"{prefix}2"
        nodes[rid] = {"op": "relate",
                      "category": _pick_category(rng, scene_doc),
                      "relation": {"predicate": rng.choice(PREDICATES),
                                   "direction": rng.choice(["subject", "object"])},
                      "deps": [nid]}
        nid = rid
    return nid


def _boolean_terminal(rng: random.Random, scene_doc: dict, nodes: dict,
                      dep: str, prefix: str) -> str:
    nid = f"{prefix}9"
    if rng.random() < 0.5:
        nodes[nid] = {"op": "exist", "deps": [dep]}
    else:
        nodes[nid] = {"op": "verify", "attribute": _pick_value(rng, scene_doc),
                      "deps": [dep]}
    return nid


def random_program_doc(rng: random.Random, scene_doc: dict, qid: str) -> dict:
    """A valid program document of at most 6 nodes over the given scene."""
    nodes: dict = {}
    kind = rng.choice(["exist", "verify", "query", "filter-exist",
                       "pair", "logical"])
    if kind in ("exist", "verify", "filter-exist"):
        head = _object_chain(rng, scene_doc, nodes, "a")
        root = _boolean_terminal(rng, scene_doc, nodes, head, "a")
        reasoning_type = "verify" if nodes[root]["op"] == "verify" else "exist"
    elif kind == "query":
        head = _object_chain(rng, scene_doc, nodes, "a")
        root = "a9"
        nodes[root] = {"op": "query",
                       "attribute": rng.choice(list(FAMILY_POOLS)),
                       "deps": [head]}
        reasoning_type = "query"
    elif kind == "pair":
        head_a = _object_chain(rng, scene_doc, nodes, "a")
        head_b = _object_chain(rng, scene_doc, nodes, "b")
        root = "c9"
        choice = rng.choice(["common", "same", "different", "compare"])
        if choice == "common":
            nodes[root] = {"op": "common", "deps": [head_a, head_b]}
        elif choice in ("same", "different"):
            family = rng.choice([None, "color", "size", "material"])
            nodes[root] = {"op": choice, "attribute": family,
                           "deps": [head_a, head_b]}
        else:
            nodes[root] = {"op": "compare", "attribute": "size",
                           "comparator": rng.choice(["larger", "smaller",
                                                     "which_larger",
                                                     "which_smaller"]),
                           "deps": [head_a, head_b]}
        reasoning_type = choice
    else:
        for prefix in ("a", "b"):
            head = _object_chain(rng, scene_doc, nodes, prefix)
            _boolean_terminal(rng, scene_doc, nodes, head, prefix)
        root = "c9"
        nodes[root] = {"op": rng.choice(["and", "or"]), "deps": ["a9", "b9"]}
        reasoning_type = "logical"
    # keep within the size budget: chains may have grown to 3 nodes each
    if len(nodes) > 6:
        return random_program_doc(rng, scene_doc, qid)
    return {
        "question_id": qid,
        "question": f"synthetic question {qid}",
        "reasoning_type": reasoning_type,
        "image_id": scene_doc["image_id"],
        "root": root,
        "nodes": nodes,
    }


def write_corpus(rng: random.Random, base_dir, n_scenes: int, n_questions: int):
    """Scene/region files plus a programs JSONL under base_dir; returns paths."""
    scenes_dir = base_dir / "scenes"
    regions_dir = base_dir / "regions"
    scenes_dir.mkdir(parents=True, exist_ok=True)
    regions_dir.mkdir(parents=True, exist_ok=True)
    scene_docs = []
    for i in range(n_scenes):
        doc = random_scene_doc(rng, f"img{i:05d}")
        scene_docs.append(doc)
        (scenes_dir / f"{doc['image_id']}.json").write_text(json.dumps(doc))
        regions = regions_for_scene(rng, doc)
        (regions_dir / f"{doc['image_id']}.json").write_text(json.dumps(regions))
    programs_path = base_dir / "programs.jsonl"
    with open(programs_path, "w", encoding="utf-8") as fh:
        for q in range(n_questions):
            scene_doc = scene_docs[rng.randrange(n_scenes)]
            program = random_program_doc(rng, scene_doc, f"q{q:06d}")
            fh.write(json.dumps(program) + "\n")
    return scenes_dir, regions_dir, programs_path
