"""Scene file schema, dataset converters, and result-record readers.

A scenes file is line-delimited JSON, one scene per line:

    {"scene_id": "s0", "image": "imgs/s0.png", "width": 61, "height": 26,
     "regions": [{"id": "r0", "bbox": [8, 8, 10, 10], "attributes": ["red"]}],
     "target_id": "r0", "ground_truth": ["the red one"]}

`scene_id` and `ground_truth` are optional (ids default to the line index);
`attributes` exists solely for the toy backend. Image paths resolve
relative to the scenes file. The converters map two documented upstream
shapes onto this schema, one scene per annotated target, with "group"
references excluded.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Optional

from PIL import Image as PILImage

from disclip.core import BBox, DisclipError, Region, Scene, validate_scene
from disclip.imaging import Image


class SceneFileError(DisclipError, ValueError):
    """Schema violation; the message carries the path to the offending field."""


def load_image(path: str | Path) -> Image:
    """Decode a raster file to 8-bit RGB."""
    with PILImage.open(path) as img:
        rgb = img.convert("RGB")
        return Image(width=rgb.width, height=rgb.height, pixels=rgb.tobytes())


def save_image_png(image: Image, path: str | Path):
    PILImage.frombytes("RGB", (image.width, image.height), image.pixels).save(path)


def _require(record: dict, key: str, where: str):
    if key not in record:
        raise SceneFileError(f"{where}.{key}: missing field")
    return record[key]


def _bbox_from(values, where: str) -> BBox:
    if not isinstance(values, (list, tuple)) or len(values) != 4:
        raise SceneFileError(f"{where}: bbox must be [x, y, w, h], got {values!r}")
    try:
        return BBox(x=float(values[0]), y=float(values[1]), w=float(values[2]), h=float(values[3]))
    except (TypeError, ValueError, DisclipError) as exc:
        raise SceneFileError(f"{where}: {exc}") from exc


def scene_from_record(
    record: dict, base_dir: Optional[Path] = None, load_pixels: bool = True
) -> tuple[str, Scene]:
    """Parse one scene record; returns (scene_id, validated Scene)."""
    where = f"scene {record.get('scene_id', '?')}"
    width = int(_require(record, "width", where))
    height = int(_require(record, "height", where))
    regions = []
    for i, reg in enumerate(_require(record, "regions", where)):
        rwhere = f"{where}.regions[{i}]"
        attrs = reg.get("attributes")
        regions.append(
            Region(
                id=str(_require(reg, "id", rwhere)),
                bbox=_bbox_from(_require(reg, "bbox", rwhere), f"{rwhere}.bbox"),
                attributes=frozenset(attrs) if attrs is not None else None,
            )
        )
    image = None
    if load_pixels:
        path = Path(_require(record, "image", where))
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        image = load_image(path)
        if image.width != width or image.height != height:
            raise SceneFileError(
                f"{where}.width/height: declared {width}x{height} but decoded "
                f"{image.width}x{image.height}"
            )
    ground_truth = record.get("ground_truth")
    scene = Scene(
        image=image,
        regions=tuple(regions),
        target_id=str(_require(record, "target_id", where)),
        ground_truth_expressions=tuple(ground_truth) if ground_truth else None,
    )
    scene_id = str(record.get("scene_id", ""))
    return scene_id, validate_scene(scene, width, height)


def read_jsonl(path: str | Path) -> list[dict]:
    """Parse a line-delimited JSON file, reporting the offending line on error."""
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SceneFileError(f"{path}:{lineno}: {exc}") from exc
    return records


def write_jsonl(path: str | Path, records: Iterable[dict]):
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, separators=(",", ":")) + "\n")


def load_scenes(path: str | Path) -> list[tuple[str, dict]]:
    """Raw scene records with assigned ids, in file order."""
    path = Path(path)
    out = []
    for index, record in enumerate(read_jsonl(path)):
        scene_id = str(record.get("scene_id") or f"scene-{index:05d}")
        record = dict(record, scene_id=scene_id)
        out.append((scene_id, record))
    return out


SWEEP_HEADER = ("delta", "lambda", "accuracy", "n")


def write_sweep_csv(path: str | Path, rows: Iterable[dict]):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(SWEEP_HEADER)
        for row in rows:
            writer.writerow(
                [row["delta"], row["lambda"], row["accuracy"], row["n"]]
            )


def read_sweep_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != SWEEP_HEADER:
            raise SceneFileError(f"{path}: expected header {','.join(SWEEP_HEADER)}")
        return [
            {
                "delta": float(row["delta"]),
                "lambda": float(row["lambda"]),
                "accuracy": float(row["accuracy"]),
                "n": int(row["n"]),
            }
            for row in reader
        ]


def convert_refcoco_like(doc: dict) -> tuple[list[dict], int]:
    """COCO-style referring annotations -> scene records.

    Expected shape: {"images": [{"id", "file_name", "width", "height"}],
    "annotations": [{"id", "image_id", "bbox"}], "refs": [{"ref_id",
    "ann_id", "image_id", "sentences": [{"sent"}], "is_group"?}]}.
    Returns (records, skipped_group_count).
    """
    images = {}
    for i, img in enumerate(_require(doc, "images", "document")):
        where = f"images[{i}]"
        images[_require(img, "id", where)] = {
            "file_name": str(_require(img, "file_name", where)),
            "width": int(_require(img, "width", where)),
            "height": int(_require(img, "height", where)),
        }
    annotations = {}
    by_image: dict = {}
    for i, ann in enumerate(_require(doc, "annotations", "document")):
        where = f"annotations[{i}]"
        ann_id = _require(ann, "id", where)
        image_id = _require(ann, "image_id", where)
        _bbox_from(_require(ann, "bbox", where), f"{where}.bbox")
        annotations[ann_id] = ann
        by_image.setdefault(image_id, []).append(ann)

    records = []
    skipped = 0
    for i, ref in enumerate(_require(doc, "refs", "document")):
        where = f"refs[{i}]"
        if ref.get("is_group"):
            skipped += 1
            continue
        ann_id = _require(ref, "ann_id", where)
        image_id = _require(ref, "image_id", where)
        if ann_id not in annotations:
            raise SceneFileError(f"{where}.ann_id: unknown annotation {ann_id!r}")
        if image_id not in images:
            raise SceneFileError(f"{where}.image_id: unknown image {image_id!r}")
        sentences = [
            str(_require(s, "sent", f"{where}.sentences[{j}]"))
            for j, s in enumerate(_require(ref, "sentences", where))
        ]
        image = images[image_id]
        regions = [
            {"id": f"ann{ann['id']}", "bbox": list(ann["bbox"])}
            for ann in by_image.get(image_id, [])
        ]
        records.append(
            {
                "scene_id": f"ref{_require(ref, 'ref_id', where)}",
                "image": image["file_name"],
                "width": image["width"],
                "height": image["height"],
                "regions": regions,
                "target_id": f"ann{ann_id}",
                "ground_truth": sentences,
            }
        )
    return records, skipped


def convert_flickr_like(doc: dict) -> tuple[list[dict], int]:
    """Phrase-grounding annotations -> scene records.

    Expected shape: {"images": [{"id", "file_name", "width", "height",
    "phrases": [{"phrase_id", "phrase", "bbox", "is_group"?}]}]}.
    Returns (records, skipped_group_count).
    """
    records = []
    skipped = 0
    for i, img in enumerate(_require(doc, "images", "document")):
        where = f"images[{i}]"
        image_id = _require(img, "id", where)
        file_name = str(_require(img, "file_name", where))
        width = int(_require(img, "width", where))
        height = int(_require(img, "height", where))
        phrases = _require(img, "phrases", where)
        for j, phrase in enumerate(phrases):
            pwhere = f"{where}.phrases[{j}]"
            _bbox_from(_require(phrase, "bbox", pwhere), f"{pwhere}.bbox")
            _require(phrase, "phrase_id", pwhere)
        for j, phrase in enumerate(phrases):
            if phrase.get("is_group"):
                skipped += 1
                continue
            regions = [
                {"id": f"p{p['phrase_id']}", "bbox": list(p["bbox"])} for p in phrases
            ]
            records.append(
                {
                    "scene_id": f"{image_id}-{phrase['phrase_id']}",
                    "image": file_name,
                    "width": width,
                    "height": height,
                    "regions": regions,
                    "target_id": f"p{phrase['phrase_id']}",
                    "ground_truth": [str(phrase["phrase"])],
                }
            )
    return records, skipped
