"""Scene-graph data model: boxes, objects, input regions, and IoU alignment.

All types are immutable after load and safe to share across workers.
Scene documents and region sets are one JSON document per image; see
parse_scene / parse_regions for the accepted schema.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import _kernels
from .errors import AlignmentBelowThreshold, SceneGraphError

logger = logging.getLogger(__name__)

ATTRIBUTE_FAMILIES = ("color", "material", "sport", "shape", "pose", "size",
                      "activity", "relation", "other")

DEFAULT_MIN_IOU = 0.5


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in corner form (x1, y1, x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"inverted box: {(self.x1, self.y1, self.x2, self.y2)}")

    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class SceneObject:
    """One annotated object: category name, box, attributes, outgoing relations.

    attributes maps attribute family -> value (at most one value per
    family); relations is a list of (predicate, target object id) with
    this object as the subject.
    """

    id: str
    name: str
    box: BBox
    attributes: Mapping[str, str]
    relations: tuple[tuple[str, str], ...]

    def attribute_pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple(sorted(self.attributes.items()))

    def has_value(self, value: str) -> bool:
        """True when any attribute family carries this value."""
        return value in self.attributes.values()


@dataclass(frozen=True)
class RegionSet:
    """Ordered model-input regions; token #i always names regions[i]."""

    image_id: str
    regions: tuple[BBox, ...]
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arr = np.array([b.as_tuple() for b in self.regions], dtype=np.float64)
        arr = arr.reshape(len(self.regions), 4)
        object.__setattr__(self, "_array", np.ascontiguousarray(arr))

    def __len__(self) -> int:
        return len(self.regions)

    def as_array(self) -> np.ndarray:
        return self._array


@dataclass(frozen=True)
class SceneGraph:
    image_id: str
    width: float
    height: float
    objects: Mapping[str, SceneObject]

    def get(self, object_id: str) -> SceneObject:
        return self.objects[object_id]


def iou(a: BBox, b: BBox) -> float:
    """IoU of two boxes; 0.0 when the union has zero area."""
    return _kernels.iou(a.x1, a.y1, a.x2, a.y2, b.x1, b.y1, b.x2, b.y2)


def align_object(obj: SceneObject, regions: RegionSet,
                 min_iou: float = DEFAULT_MIN_IOU) -> tuple[int, float]:
    """Region index with the highest IoU against the object's box.

    Ties break toward the lowest index. Raises AlignmentBelowThreshold
    when even the best region falls below min_iou.
    """
    if len(regions) == 0:
        raise ValueError("cannot align against an empty region set")
    b = obj.box
    idx, score = _kernels.best_iou(b.x1, b.y1, b.x2, b.y2, regions.as_array())
    if score < min_iou:
        raise AlignmentBelowThreshold(obj.id, idx, score, min_iou)
    return idx, score


def _as_box(raw, where: str, box_format: str) -> BBox:
    if (not isinstance(raw, (list, tuple))) or len(raw) != 4:
        raise SceneGraphError(f"{where}: box must be a 4-element array, got {raw!r}")
    try:
        vals = [float(v) for v in raw]
    except (TypeError, ValueError):
        raise SceneGraphError(f"{where}: non-numeric box {raw!r}") from None
    if box_format == "xywh":
        x, y, w, h = vals
        vals = [x, y, x + w, y + h]
    try:
        return BBox(*vals)
    except ValueError as exc:
        raise SceneGraphError(f"{where}: {exc}") from None


def _clamp_box(box: BBox, width: float, height: float, where: str) -> BBox:
    clamped = BBox(min(max(box.x1, 0.0), width), min(max(box.y1, 0.0), height),
                   min(max(box.x2, 0.0), width), min(max(box.y2, 0.0), height))
    if clamped != box:
        logger.warning("%s: box %s clamped to image bounds %sx%s",
                       where, box.as_tuple(), width, height)
    return clamped


def parse_scene(doc) -> SceneGraph:
    """Parse a scene-graph document (JSON string or already-loaded dict).

    Schema: {"image_id", "width", "height", "objects": {id: {"name",
    "box": [x1,y1,x2,y2], "attributes": [{"family", "value"}],
    "relations": [{"predicate", "target"}]}}}. An optional top-level
    "box_format": "xywh" switches box parsing to (x, y, w, h) inputs.
    Boxes are clamped to the image bounds with a warning; unknown
    attribute families fall into "other"; a second value for the same
    family or a relation target that does not exist is rejected.
    """
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise SceneGraphError(f"invalid scene JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SceneGraphError(f"scene document must be an object, got {type(doc).__name__}")
    try:
        image_id = str(doc["image_id"])
        width = float(doc["width"])
        height = float(doc["height"])
        raw_objects = doc["objects"]
    except KeyError as exc:
        raise SceneGraphError(f"scene document missing key {exc}") from None
    box_format = doc.get("box_format", "xyxy")
    if box_format not in ("xyxy", "xywh"):
        raise SceneGraphError(f"unknown box_format {box_format!r}")

    objects: dict[str, SceneObject] = {}
    for oid, raw in raw_objects.items():
        where = f"scene {image_id}, object {oid}"
        box = _clamp_box(_as_box(raw.get("box"), where, box_format), width, height, where)
        attributes: dict[str, str] = {}
        for attr in raw.get("attributes", ()):
            family = str(attr.get("family", "other")).lower()
            if family not in ATTRIBUTE_FAMILIES:
                family = "other"
            value = str(attr["value"]).lower()
            if family in attributes:
                raise SceneGraphError(
                    f"{where}: duplicate value for attribute family {family!r}")
            attributes[family] = value
        relations = tuple((str(r["predicate"]).lower(), str(r["target"]))
                          for r in raw.get("relations", ()))
        objects[str(oid)] = SceneObject(id=str(oid), name=str(raw["name"]).lower(),
                                        box=box, attributes=attributes,
                                        relations=relations)
    for obj in objects.values():
        for predicate, target in obj.relations:
            if target not in objects:
                raise SceneGraphError(
                    f"scene {image_id}: relation ({obj.id} {predicate} {target}) "
                    f"targets an unknown object")
    return SceneGraph(image_id=image_id, width=width, height=height, objects=objects)


def parse_regions(doc) -> RegionSet:
    """Parse a region-set document: {"image_id", "regions": [[x1,y1,x2,y2], ...]}."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise SceneGraphError(f"invalid region JSON: {exc}") from None
    try:
        image_id = str(doc["image_id"])
        raw = doc["regions"]
    except KeyError as exc:
        raise SceneGraphError(f"region document missing key {exc}") from None
    regions = tuple(_as_box(r, f"regions[{i}] of {image_id}", "xyxy")
                    for i, r in enumerate(raw))
    return RegionSet(image_id=image_id, regions=regions)


def serialize_scene(g: SceneGraph) -> str:
    """Canonical JSON form; loading then re-serializing is byte-identical."""
    objects = {}
    for oid in sorted(g.objects):
        obj = g.objects[oid]
        objects[oid] = {
            "name": obj.name,
            "box": list(obj.box.as_tuple()),
            "attributes": [{"family": f, "value": v} for f, v in obj.attribute_pairs()],
            "relations": [{"predicate": p, "target": t}
                          for p, t in sorted(obj.relations)],
        }
    doc = {"image_id": g.image_id, "width": g.width, "height": g.height,
           "objects": objects}
    return json.dumps(doc, separators=(",", ":"))


def serialize_regions(r: RegionSet) -> str:
    doc = {"image_id": r.image_id,
           "regions": [list(b.as_tuple()) for b in r.regions]}
    return json.dumps(doc, separators=(",", ":"))


def load_scene(path) -> SceneGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_scene(fh.read())


def load_regions(path) -> RegionSet:
    with open(path, encoding="utf-8") as fh:
        return parse_regions(fh.read())
