"""Shared builders for CLI and acceptance tests: toy scene files on disk."""

from __future__ import annotations

from pathlib import Path

from disclip.backends import ToyWorld, build_toy_scene
from disclip.sceneio import save_image_png, write_jsonl

# Shared attributes sort before the unique ones, which pins tie-breaking:
# with the distractor penalty disabled the decoder picks shared words first.
ADVERSARIAL_WORLD_ATTRS = ("aqua", "azure", "violet", "white")


def write_toy_scene_files(directory: Path, world: ToyWorld, specs, ground_truths=None) -> Path:
    """Write PNGs plus a scenes.jsonl for (attribute_sets, target_index) specs."""
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "images").mkdir(exist_ok=True)
    records = []
    for i, (attr_sets, target_index) in enumerate(specs):
        gt = ground_truths[i] if ground_truths else None
        scene = build_toy_scene(world, attr_sets, target_index, ground_truth=gt)
        image_rel = f"images/scene{i:04d}.png"
        save_image_png(scene.image, directory / image_rel)
        record = {
            "scene_id": f"scene-{i:04d}",
            "image": image_rel,
            "width": scene.image.width,
            "height": scene.image.height,
            "regions": [
                {
                    "id": r.id,
                    "bbox": [r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h],
                    "attributes": sorted(r.attributes),
                }
                for r in scene.regions
            ],
            "target_id": scene.target_id,
        }
        if gt:
            record["ground_truth"] = list(gt)
        records.append(record)
    path = directory / "scenes.jsonl"
    write_jsonl(path, records)
    return path


def adversarial_specs(count: int):
    """Scenes where target and distractor share all attributes but one.

    The target is deliberately second in scene order, so a listener tie
    (which resolves to the first region) counts as a miss.
    """
    shared = {"aqua", "azure"}
    specs = []
    for i in range(count):
        if i % 2 == 0:
            target_unique, distractor_unique = "violet", "white"
        else:
            target_unique, distractor_unique = "white", "violet"
        specs.append(
            ([shared | {distractor_unique}, shared | {target_unique}], 1)
        )
    return specs
