"""Layout JSON documents and SVG rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple
from xml.sax.saxutils import escape, quoteattr

from .geometry import KINDS, BoundingBox

SCHEMA_VERSION = 1
IMAGE_SIZE = {"w": 1000, "h": 1000}


@dataclass(frozen=True)
class PlacedObject:
    id: int
    type: Optional[str]
    properties: Tuple[str, ...]
    bbox: BoundingBox


@dataclass(frozen=True)
class LayoutDocument:
    """Serializable layout: boxes in per-mille units plus object metadata."""

    objects: Tuple[PlacedObject, ...]

    @classmethod
    def from_layout(cls, layout: Mapping[int, BoundingBox], spec=None) -> "LayoutDocument":
        meta = {o.id: (o.type_name, tuple(o.properties)) for o in spec.objects} if spec else {}
        return cls(tuple(PlacedObject(i, *meta.get(i, (None, ())), layout[i])
                         for i in sorted(layout)))

    def boxes(self) -> Dict[int, BoundingBox]:
        return {o.id: o.bbox for o in self.objects}

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "image_size": dict(IMAGE_SIZE),
            "objects": [{"id": o.id, "type": o.type, "properties": list(o.properties),
                         "bbox": o.bbox.as_dict()} for o in self.objects],
        }

    def to_json(self, indent: Optional[int] = None) -> str:
        return json.dumps(self.to_dict(), indent=indent, ensure_ascii=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "LayoutDocument":
        if not isinstance(doc, dict):
            raise ValueError("layout document must be a JSON object")
        if doc.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported layout schema {doc.get('schema')!r}")
        objs = []
        for entry in doc.get("objects", []):
            bb = entry["bbox"]
            values = [bb[k] for k in KINDS]
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in values):
                raise ValueError(f"object {entry.get('id')}: bbox values must be integers")
            objs.append(PlacedObject(int(entry["id"]), entry.get("type"),
                                     tuple(entry.get("properties", ())), BoundingBox(*values)))
        ids = [o.id for o in objs]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate object ids in layout document")
        return cls(tuple(sorted(objs, key=lambda o: o.id)))

    @classmethod
    def from_json(cls, text: str) -> "LayoutDocument":
        return cls.from_dict(json.loads(text))


def render_svg(layout, spec=None) -> str:
    """One labeled rectangle per object on a 1000x1000 canvas, ordered by id.

    ``layout`` is a :class:`LayoutDocument` or a mapping of id to box.
    """
    doc = layout if isinstance(layout, LayoutDocument) else LayoutDocument.from_layout(layout, spec)
    w, h = IMAGE_SIZE["w"], IMAGE_SIZE["h"]
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white" stroke="black"/>',
    ]
    for o in doc.objects:
        b = o.bbox
        label = f"{o.id}:{o.type if o.type is not None else 'object'}"
        lines.append(
            f'<g id={quoteattr(f"o{o.id}")}>'
            f'<rect x="{b.x}" y="{b.y}" width="{b.w}" height="{b.h}" '
            f'fill="none" stroke="steelblue" stroke-width="3"/>'
            f'<text x="{b.x + 4}" y="{b.y + 20}" font-size="18" '
            f'font-family="sans-serif">{escape(label)}</text></g>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
