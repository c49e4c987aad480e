"""Dataset runs: many scenes -> images, masks, COCO, QA, manifest."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .colorimetry import ColorSystem, default_color_system
from .export import (
    SceneRecord,
    dumps_coco,
    dumps_jsonl,
    flake_index_mask,
    gen_qa,
    to_coco,
    validate_coco,
)
from .imageio import atomic_write_text, read_rgb8, write_png
from .materials import MaterialLibrary, default_library
from .synthesis import ConfigError, SynthesisConfig, monolayer_nm, scene_seed, synthesize_scene

log = logging.getLogger(__name__)


@dataclass
class DatasetPlan:
    config: SynthesisConfig
    references: list[Path]
    output_dir: Path
    system: ColorSystem
    library: MaterialLibrary


def plan_dataset(config: SynthesisConfig, base_dir=".", output_dir=None) -> DatasetPlan:
    """Validate every input before any output is written."""
    base = Path(base_dir)
    out = output_dir or config.output_dir
    if not out:
        raise ConfigError("no output_dir given")
    if not config.reference_dir:
        raise ConfigError("config has no reference_dir")
    ref_dir = base / config.reference_dir
    if not ref_dir.is_dir():
        raise ConfigError(f"reference_dir {ref_dir} is not a directory")
    refs = sorted(ref_dir.glob("*.png"))
    if not refs:
        raise ConfigError(f"no PNG references in {ref_dir}")
    library = MaterialLibrary(base / config.materials_dir) if config.materials_dir else default_library()
    try:
        for m in config.materials:
            library[m.id]
            monolayer_nm(m, library)
        for extra in ("air", "sio2", "si"):
            library[extra]
        system = (ColorSystem.from_json(base / config.color_system, config.grid)
                  if config.color_system else default_color_system(config.grid))
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError(str(exc).strip("'\"")) from exc
    if config.n_flakes > 255:
        raise ConfigError("n_flakes > 255 does not fit 8-bit mask sidecars")
    for p in refs:
        img = read_rgb8(p)
        if config.flake_px[1] > min(img.shape[:2]):
            raise ConfigError(f"flake_px max exceeds reference {p.name} ({img.shape[1]}x{img.shape[0]})")
    return DatasetPlan(config, refs, Path(out), system, library)


def _render(args):
    plan, index = args
    ref = plan.references[index % len(plan.references)]
    res = synthesize_scene(read_rgb8(ref), plan.config, plan.system, plan.library,
                           seed=scene_seed(plan.config.seed, index))
    return index, ref.name, res.image, res.flakes, res.background, res.skipped


def run_dataset(plan: DatasetPlan, workers: int | None = None) -> dict:
    cfg = plan.config
    workers = workers or cfg.workers
    jobs = [(plan, i) for i in range(cfg.n_images)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_render, jobs))
    else:
        results = [_render(j) for j in jobs]

    out = plan.output_dir
    scenes, manifest_scenes, qa = [], [], []
    for index, ref_name, image, flakes, background, skipped in results:
        name = f"scene_{index:05d}.png"
        write_png(out / "images" / name, image)
        write_png(out / "masks" / name, flake_index_mask(image.shape, flakes))
        rec = SceneRecord(name, image.shape[1], image.shape[0], flakes, background)
        scenes.append(rec)
        qa.extend(gen_qa(rec, np.random.default_rng(np.random.SeedSequence([cfg.seed, index, 1]))))
        manifest_scenes.append({
            "file_name": name,
            "reference": ref_name,
            "flakes": len(flakes),
            "skipped": skipped,
            "classes": {c: sum(f.layer_class.value == c for f in flakes) for c in ("Mono", "Few", "Thick")},
        })
    coco = to_coco(scenes)
    validate_coco(coco)
    atomic_write_text(out / "annotations.json", dumps_coco(coco))
    atomic_write_text(out / "instructions.jsonl", dumps_jsonl(qa))
    manifest = {
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "n_images": cfg.n_images,
        "total_flakes": sum(s["flakes"] for s in manifest_scenes),
        "total_skipped": sum(s["skipped"] for s in manifest_scenes),
        "scenes": manifest_scenes,
    }
    atomic_write_text(out / "run_manifest.json", json.dumps(manifest, indent=1) + "\n")
    return manifest
