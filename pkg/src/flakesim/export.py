"""COCO detection annotations and instruction-style QA records."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import jsonschema
import numpy as np

from .colorimetry import to_uint8

CATEGORIES = [
    {"id": 1, "name": "Mono", "supercategory": "flake"},
    {"id": 2, "name": "Few", "supercategory": "flake"},
    {"id": 3, "name": "Thick", "supercategory": "flake"},
]
CATEGORY_ID = {c["name"]: c["id"] for c in CATEGORIES}
TASKS = ("counting", "localization", "verification")

COCO_SCHEMA = {
    "type": "object",
    "required": ["images", "annotations", "categories"],
    "properties": {
        "images": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "file_name", "width", "height"],
                "properties": {
                    "id": {"type": "integer", "minimum": 1},
                    "file_name": {"type": "string", "minLength": 1},
                    "width": {"type": "integer", "minimum": 1},
                    "height": {"type": "integer", "minimum": 1},
                },
            },
        },
        "annotations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "image_id", "category_id", "bbox", "area", "iscrowd"],
                "properties": {
                    "id": {"type": "integer", "minimum": 1},
                    "image_id": {"type": "integer"},
                    "category_id": {"type": "integer"},
                    "bbox": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 4, "maxItems": 4},
                    "area": {"type": "number", "exclusiveMinimum": 0},
                    "iscrowd": {"const": 0},
                },
            },
        },
        "categories": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "name", "supercategory"],
                "properties": {
                    "id": {"type": "integer"},
                    "name": {"enum": ["Mono", "Few", "Thick"]},
                    "supercategory": {"const": "flake"},
                },
            },
        },
    },
}


class ExportValidationError(ValueError):
    pass


def bbox_from_mask(mask, position) -> list[int]:
    """Tight ``[x, y, w, h]`` of a local mask placed with its top-left at ``position = (x, y)``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask has no bounding box")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    u, v = position
    return [int(u + cols[0]), int(v + rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1)]


@dataclass
class SceneRecord:
    """What export needs from one rendered scene."""

    file_name: str
    width: int
    height: int
    flakes: Sequence  # FlakeInstance-like: mask, position, layer_count, layer_class, area, ...
    background: np.ndarray | None = None


def to_coco(scenes: Sequence[SceneRecord]) -> dict:
    names = [s.file_name for s in scenes]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise ExportValidationError(f"duplicate file names: {dup}")
    images, anns = [], []
    for img_id, scene in enumerate(scenes, start=1):
        images.append({"id": img_id, "file_name": scene.file_name, "width": int(scene.width), "height": int(scene.height)})
        for fl in scene.flakes:
            anns.append({
                "id": len(anns) + 1,
                "image_id": img_id,
                "category_id": CATEGORY_ID[fl.layer_class.value],
                "bbox": bbox_from_mask(fl.mask, fl.position),
                "area": int(np.count_nonzero(fl.mask)),
                "iscrowd": 0,
            })
    return {"images": images, "annotations": anns, "categories": [dict(c) for c in CATEGORIES]}


def validate_coco(data: dict) -> None:
    """Schema plus referential-integrity checks; raises ExportValidationError."""
    try:
        jsonschema.validate(data, COCO_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ExportValidationError(f"schema: {exc.message}") from None
    images = {im["id"]: im for im in data["images"]}
    cats = {c["id"]: c for c in data["categories"]}
    for key, items in (("image", data["images"]), ("annotation", data["annotations"]), ("category", data["categories"])):
        ids = [it["id"] for it in items]
        if len(set(ids)) != len(ids):
            raise ExportValidationError(f"duplicate {key} ids")
    if len({im["file_name"] for im in data["images"]}) != len(images):
        raise ExportValidationError("duplicate image file names")
    for ann in data["annotations"]:
        im = images.get(ann["image_id"])
        if im is None:
            raise ExportValidationError(f"annotation {ann['id']} references missing image {ann['image_id']}")
        if ann["category_id"] not in cats:
            raise ExportValidationError(f"annotation {ann['id']} references missing category {ann['category_id']}")
        x, y, w, h = ann["bbox"]
        if w <= 0 or h <= 0 or x + w > im["width"] or y + h > im["height"]:
            raise ExportValidationError(f"annotation {ann['id']} bbox {ann['bbox']} outside image")
        if ann["area"] > w * h:
            raise ExportValidationError(f"annotation {ann['id']} area exceeds its bbox")


def dumps_coco(data: dict) -> str:
    return json.dumps(data, indent=1, sort_keys=False) + "\n"


# --- QA records -----------------------------------------------------------------

QUESTION_TEMPLATES = {
    "counting": (
        "How many monolayer flakes are in the image?",
        "Count the monolayer flakes in this optical micrograph.",
        "What is the number of monolayer flakes visible on the substrate?",
    ),
    "localization": (
        "Locate the monolayer flakes.",
        "Where are the monolayer flakes in this image? Give their bounding boxes.",
        "Find every monolayer flake and report its bounding box.",
    ),
    "verification": (
        "Does this sample contain a monolayer flake?",
        "Is there at least one monolayer flake in the image?",
        "Can you find a monolayer flake on this substrate?",
    ),
}

_BOX_RE = re.compile(r"\[(\d+), (\d+), (\d+), (\d+)\]")
_COUNT_RE = re.compile(r"\b(\d+) monolayer flake")


def _hex(color) -> str:
    return "#" + "".join(f"{int(c):02x}" for c in to_uint8(color))


def _candidate(idx: int, fl) -> dict:
    return {
        "index": idx,
        "bbox": bbox_from_mask(fl.mask, fl.position),
        "layer_class": fl.layer_class.value,
        "layer_count": int(fl.layer_count),
        "material": fl.material_id,
        "thickness_nm": round(float(fl.thickness), 4),
        "color": _hex(fl.color),
        "delta_e": round(float(fl.delta_e), 3),
    }


def _reasoning(cands: list[dict]) -> str:
    if not cands:
        return "No flake candidates differ from the substrate color; the field of view is bare substrate."
    lines = []
    for c in cands:
        lines.append(
            f"Flake {c['index']} at {c['bbox']} has color {c['color']} and contrast dE={c['delta_e']:.2f} "
            f"against the substrate, consistent with {c['layer_count']} layer(s) of {c['material']} "
            f"({c['thickness_nm']:g} nm), i.e. {c['layer_class']}."
        )
    mono = [c["delta_e"] for c in cands if c["layer_class"] == "Mono"]
    if mono:
        lines.append(
            f"Monolayers show the weakest thin-film contrast (dE {min(mono):.2f}-{max(mono):.2f}); "
            "thicker flakes shift the interference color further from the substrate."
        )
    else:
        lines.append("Every candidate shows contrast typical of multilayer interference, so none is a monolayer.")
    return " ".join(lines)


def gen_qa(scene: SceneRecord, rng: np.random.Generator, templates=QUESTION_TEMPLATES) -> list[dict]:
    """One counting, localization and verification record for the scene."""
    cands = [_candidate(i, fl) for i, fl in enumerate(scene.flakes, start=1)]
    mono = [c for c in cands if c["layer_class"] == "Mono"]
    reasoning = _reasoning(cands)
    n = len(mono)
    boxes = "; ".join(str(c["bbox"]) for c in mono)
    conclusions = {
        "counting": f"There {'is' if n == 1 else 'are'} {n} monolayer flake{'' if n == 1 else 's'} in the image.",
        "localization": (f"Monolayer flakes at: {boxes}." if n else "There are no monolayer flakes to locate."),
        "verification": ("Yes, the sample contains a monolayer flake." if n else "No, the sample does not contain a monolayer flake."),
    }
    out = []
    for task in TASKS:
        choices = templates[task]
        q = choices[int(rng.integers(len(choices)))]
        out.append({
            "image": scene.file_name,
            "task": task,
            "question": q,
            "answer": {"candidates": cands, "reasoning": reasoning, "conclusion": conclusions[task]},
        })
    return out


def check_qa_consistency(record: dict, coco: dict) -> None:
    """Raise ExportValidationError unless the record's conclusion matches the COCO ground truth."""
    img = next((im for im in coco["images"] if im["file_name"] == record["image"]), None)
    if img is None:
        raise ExportValidationError(f"QA record for unknown image {record['image']!r}")
    mono_id = CATEGORY_ID["Mono"]
    truth = sorted(tuple(a["bbox"]) for a in coco["annotations"]
                   if a["image_id"] == img["id"] and a["category_id"] == mono_id)
    concl = record["answer"]["conclusion"]
    task = record["task"]
    if task == "counting":
        m = _COUNT_RE.search(concl)
        if not m or int(m.group(1)) != len(truth):
            raise ExportValidationError(f"{record['image']}: counting conclusion {concl!r} vs {len(truth)} monolayers")
    elif task == "localization":
        got = sorted(tuple(int(g) for g in m) for m in _BOX_RE.findall(concl))
        if got != truth:
            raise ExportValidationError(f"{record['image']}: localization boxes {got} vs {truth}")
    elif task == "verification":
        yes = concl.startswith("Yes")
        if yes != bool(truth) or (not yes and not concl.startswith("No")):
            raise ExportValidationError(f"{record['image']}: verification {concl!r} vs {len(truth)} monolayers")
    else:
        raise ExportValidationError(f"unknown task {task!r}")
    cand_boxes = sorted(tuple(c["bbox"]) for c in record["answer"]["candidates"] if c["layer_class"] == "Mono")
    if cand_boxes != truth:
        raise ExportValidationError(f"{record['image']}: candidate monolayers disagree with annotations")


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=False) + "\n" for r in records)


def flake_index_mask(shape, flakes) -> np.ndarray:
    """uint8 label image: 0 = background, i = i-th placed flake."""
    if len(flakes) > 255:
        raise ValueError("mask sidecars hold at most 255 flakes")
    out = np.zeros(shape[:2], dtype=np.uint8)
    for i, fl in enumerate(flakes, start=1):
        u, v = fl.position
        h, w = fl.mask.shape
        out[v:v + h, u:u + w][fl.mask] = i
    return out
