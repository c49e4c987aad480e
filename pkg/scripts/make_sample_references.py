"""Render the sample reference micrographs shipped in ``src/flakesim/data/references``.

No real microscope images ship with the package; these stand-ins are a
white-balanced bare substrate with vignetting, sensor noise and a handful of
thick "pre-existing" flakes, so the substrate-aware placement has something
to avoid.

    python scripts/make_sample_references.py
"""
from pathlib import Path

import numpy as np

from flakesim.colorimetry import apply_wb, default_color_system, to_uint8
from flakesim.imageio import write_png
from flakesim.synthesis import SynthesisConfig, composite, flake_color, random_flake_mask, substrate_color

OUT = Path(__file__).resolve().parents[1] / "src" / "flakesim" / "data" / "references"
SIZE = 448
USER_GAINS = [(1.6, 1.15, 1.0), (1.25, 1.0, 1.45), (1.9, 1.35, 1.05), (1.4, 1.25, 1.6)]


def render(index: int, gain, rng) -> np.ndarray:
    system = default_color_system()
    cfg = SynthesisConfig(oxide_nm=180.0)
    sub = apply_wb(substrate_color(cfg, system), gain)
    yy, xx = np.mgrid[0:SIZE, 0:SIZE] / (SIZE - 1) - 0.5
    cy, cx = rng.uniform(-0.15, 0.15, 2)
    vignette = 1.0 - 0.35 * ((xx - cx) ** 2 + (yy - cy) ** 2)
    img = sub[None, None, :] * vignette[..., None]
    for _ in range(int(rng.integers(3, 7))):
        mask = random_flake_mask(rng, (30, 90))
        mat = ["mos2", "graphene", "hbn", "wse2"][int(rng.integers(4))]
        layers = int(rng.integers(15, 80))
        color = flake_color(mat, layers * 0.65, cfg, system, gain)
        h, w = mask.shape
        pos = (int(rng.integers(0, SIZE - w)), int(rng.integers(0, SIZE - h)))
        composite(img, mask, pos, color)
    img = img + rng.normal(0.0, 0.006, img.shape)
    return to_uint8(np.clip(img, 0.0, 1.0))


def main():
    rng = np.random.default_rng(20240611)
    for i, g in enumerate(USER_GAINS):
        write_png(OUT / f"reference_{i:02d}.png", render(i, g, rng))


if __name__ == "__main__":
    main()
