"""Physically rendered synthetic flakes composited onto substrate images.

One scene runs: white-balance gain from the reference -> attention map ->
substrate mask -> for each flake {mask, thickness, placement, TMM color,
composite}.  All randomness comes from one ``numpy.random.Generator``.
"""
from __future__ import annotations

import enum
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .colorimetry import (
    ColorSystem,
    apply_wb,
    delta_e,
    estimate_background,
    from_uint8,
    rgb_to_lab,
    spectrum_to_rgb,
    to_uint8,
    wb_gain,
)
from .materials import MaterialLibrary, SpectralGrid, default_library
from .optics import flake_on_substrate, reflectance_spectrum, substrate_stack
from .pia import PiaMap, SubstrateMask, pia_map, substrate_mask

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class LayerClass(str, enum.Enum):
    MONO = "Mono"
    FEW = "Few"
    THICK = "Thick"

    @classmethod
    def of(cls, layer_count: int) -> "LayerClass":
        if layer_count < 1:
            raise ValueError(f"layer count must be >= 1, got {layer_count}")
        if layer_count == 1:
            return cls.MONO
        return cls.FEW if layer_count <= 5 else cls.THICK


# --- configuration ---------------------------------------------------------------

DEFAULT_LAYERS = {n: 0.1 for n in range(1, 11)}


@dataclass(frozen=True)
class MaterialSpec:
    id: str
    weight: float = 1.0
    monolayer_nm: float | None = None
    layer_distribution: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_LAYERS))

    def __post_init__(self):
        if not self.weight > 0:
            raise ConfigError(f"material {self.id!r}: weight must be positive")
        if self.monolayer_nm is not None and not self.monolayer_nm > 0:
            raise ConfigError(f"material {self.id!r}: monolayer_nm must be positive")
        dist = {int(k): float(v) for k, v in self.layer_distribution.items()}
        if not dist or any(k < 1 for k in dist) or any(v < 0 for v in dist.values()) or sum(dist.values()) <= 0:
            raise ConfigError(f"material {self.id!r}: bad layer_distribution {self.layer_distribution}")
        object.__setattr__(self, "layer_distribution", dict(sorted(dist.items())))


@dataclass(frozen=True)
class SynthesisConfig:
    materials: tuple[MaterialSpec, ...] = (MaterialSpec("mos2"),)
    oxide_nm: float = 180.0
    n_flakes: int = 30
    flake_px: tuple[int, int] = (16, 64)
    grid: SpectralGrid = SpectralGrid()
    substrate_percentile: float = 90.0
    max_retries: int = 100
    wb_mode: str | tuple[float, float, float] = "from_reference"
    seed: int = 0
    patch: tuple[int, int] = (14, 14)
    material_per: str = "scene"  # or "flake"
    # dataset-level keys (ignored by synthesize_scene)
    reference_dir: str | None = None
    output_dir: str | None = None
    n_images: int = 1
    color_system: str | None = None
    materials_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "materials", tuple(self.materials))
        if not self.materials:
            raise ConfigError("config needs at least one material")
        ids = [m.id for m in self.materials]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate material ids: {ids}")
        if not self.oxide_nm >= 0:
            raise ConfigError("oxide_nm must be >= 0")
        if int(self.n_flakes) != self.n_flakes or self.n_flakes < 0:
            raise ConfigError("n_flakes must be a non-negative integer")
        lo, hi = self.flake_px
        if not (1 <= lo <= hi):
            raise ConfigError(f"flake_px must satisfy 1 <= min <= max, got {self.flake_px}")
        object.__setattr__(self, "flake_px", (int(lo), int(hi)))
        if not 0 < self.substrate_percentile < 100:
            raise ConfigError("substrate_percentile must be in (0, 100)")
        if int(self.max_retries) != self.max_retries or self.max_retries < 1:
            raise ConfigError("max_retries must be an integer >= 1")
        if isinstance(self.wb_mode, str):
            if self.wb_mode not in ("from_reference", "none"):
                raise ConfigError(f"wb_mode must be 'from_reference', 'none' or a gain triple, got {self.wb_mode!r}")
        else:
            g = tuple(float(x) for x in self.wb_mode)
            if len(g) != 3 or not all(x > 0 for x in g):
                raise ConfigError(f"explicit wb gain must be 3 positive numbers, got {self.wb_mode}")
            object.__setattr__(self, "wb_mode", g)
        if self.material_per not in ("scene", "flake"):
            raise ConfigError("material_per must be 'scene' or 'flake'")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if int(self.n_images) != self.n_images or self.n_images < 0:
            raise ConfigError("n_images must be a non-negative integer")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError("workers must be an integer >= 1")
        p = (self.patch, self.patch) if np.ndim(self.patch) == 0 else tuple(self.patch)
        if len(p) != 2 or min(p) < 1:
            raise ConfigError(f"patch must be a positive size, got {self.patch}")
        object.__setattr__(self, "patch", (int(p[0]), int(p[1])))

    def material(self, material_id: str) -> MaterialSpec:
        for m in self.materials:
            if m.id == material_id:
                return m
        raise ConfigError(f"material {material_id!r} not in config")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "materials" in d:
                d["materials"] = tuple(MaterialSpec(**m) for m in d["materials"])
            if "grid" in d:
                g = d["grid"]
                d["grid"] = SpectralGrid(float(g["min_nm"]), float(g["max_nm"]), int(g["samples"]))
            if "flake_px" in d:
                d["flake_px"] = tuple(d["flake_px"])
            if isinstance(d.get("wb_mode"), list):
                d["wb_mode"] = tuple(d["wb_mode"])
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "SynthesisConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = {"min_nm": self.grid.lambda_min, "max_nm": self.grid.lambda_max, "samples": self.grid.count}
        d["flake_px"] = list(self.flake_px)
        d["patch"] = list(self.patch)
        d["wb_mode"] = self.wb_mode if isinstance(self.wb_mode, str) else list(self.wb_mode)
        for m in d["materials"]:
            m["layer_distribution"] = {str(k): v for k, v in m["layer_distribution"].items()}
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# --- scene state ------------------------------------------------------------------

@dataclass
class FlakeInstance:
    mask: np.ndarray  # (h, w) bool
    position: tuple[int, int]  # (u, v) = (x, y) of the top-left pixel
    material_id: str
    layer_count: int
    thickness: float  # nm
    color: np.ndarray  # linear RGB after white balance
    delta_e: float = 0.0  # vs. image background

    def __post_init__(self):
        if not self.mask.any():
            raise ValueError("flake mask is empty")

    @property
    def layer_class(self) -> LayerClass:
        return LayerClass.of(self.layer_count)

    @property
    def area(self) -> int:
        return int(self.mask.sum())

    def full_mask(self, shape) -> np.ndarray:
        out = np.zeros(shape[:2], dtype=bool)
        u, v = self.position
        h, w = self.mask.shape
        out[v:v + h, u:u + w] = self.mask
        return out


@dataclass
class SceneDraft:
    canvas: np.ndarray  # linear RGB, (H, W, 3)
    occupied: np.ndarray  # (H, W) bool
    rng: np.random.Generator
    placed: list[FlakeInstance] = field(default_factory=list)

    @classmethod
    def from_image(cls, image, rng) -> "SceneDraft":
        canvas = np.array(image, dtype=float)
        return cls(canvas, np.zeros(canvas.shape[:2], dtype=bool), rng)


# --- scene steps ---------------------------------------------------------------

def random_flake_mask(rng: np.random.Generator, size_range, vertices=(8, 16), jitter=0.35,
                      max_tries: int = 64) -> np.ndarray:
    """Filled random polygon: vertices on a perturbed, rotated ellipse.

    The returned mask is cropped to its bounding box, whose height and width
    both lie in ``size_range`` and which holds one 4-connected component.
    """
    lo, hi = int(size_range[0]), int(size_range[1])
    if not 1 <= lo <= hi:
        raise ValueError(f"degenerate flake size range {size_range}")
    for _ in range(max_tries):
        n = int(rng.integers(vertices[0], vertices[1] + 1))
        ang = 2 * np.pi * (np.arange(n) + rng.uniform(-0.4, 0.4, n)) / n
        rad = 1.0 + rng.uniform(-jitter, jitter, n)
        aspect = rng.uniform(0.45, 1.0)
        rot = rng.uniform(0, 2 * np.pi)
        x, y = rad * np.cos(ang), aspect * rad * np.sin(ang)
        x, y = x * np.cos(rot) - y * np.sin(rot), x * np.sin(rot) + y * np.cos(rot)
        h, w = (int(s) for s in rng.integers(lo, hi + 1, size=2))
        x = (x - x.min()) / (x.max() - x.min()) * (w - 1)
        y = (y - y.min()) / (y.max() - y.min()) * (h - 1)
        img = Image.new("1", (w, h), 0)
        ImageDraw.Draw(img).polygon(list(zip(x.tolist(), y.tolist())), fill=1, outline=1)
        mask = np.array(img, dtype=bool)
        labels, count = ndimage.label(mask)
        if count > 1:
            sizes = np.bincount(labels.ravel())[1:]
            mask = labels == (1 + int(np.argmax(sizes)))
        rows, cols = np.flatnonzero(mask.any(1)), np.flatnonzero(mask.any(0))
        mask = mask[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
        if lo <= mask.shape[0] <= hi and lo <= mask.shape[1] <= hi:
            return mask
    raise RuntimeError(f"could not draw a flake within {size_range} in {max_tries} tries")


def sample_thickness(material_id: str, config: SynthesisConfig, rng: np.random.Generator,
                     library: MaterialLibrary | None = None) -> tuple[int, float]:
    spec = config.material(material_id)
    counts = np.array(list(spec.layer_distribution), dtype=int)
    p = np.array(list(spec.layer_distribution.values()), dtype=float)
    n = int(rng.choice(counts, p=p / p.sum()))
    return n, n * monolayer_nm(spec, library)


def monolayer_nm(spec: MaterialSpec, library: MaterialLibrary | None = None) -> float:
    if spec.monolayer_nm is not None:
        return float(spec.monolayer_nm)
    try:
        return (library or default_library()).monolayer_nm(spec.id)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None


def substrate_color(config: SynthesisConfig, system: ColorSystem,
                    library: MaterialLibrary | None = None) -> np.ndarray:
    """Modelled bare air/SiO2/Si color, before white balance."""
    return spectrum_to_rgb(reflectance_spectrum(substrate_stack(config.oxide_nm, library), system.grid), system)


def flake_color(material_id: str, thickness: float, config: SynthesisConfig, system: ColorSystem,
                gain=None, library: MaterialLibrary | None = None) -> np.ndarray:
    """TMM color of ``air / material(thickness) / SiO2 / Si``, white balanced by ``gain``."""
    if not thickness > 0:
        raise ValueError(f"flake thickness must be > 0, got {thickness}")
    stack = flake_on_substrate(material_id, thickness, config.oxide_nm, library)
    rgb = spectrum_to_rgb(reflectance_spectrum(stack, system.grid), system)
    return apply_wb(rgb, (1.0, 1.0, 1.0) if gain is None else gain)


def wb_from_reference(reference, config: SynthesisConfig, system: ColorSystem,
                      library: MaterialLibrary | None = None, normalize: bool = False) -> np.ndarray:
    """Gain mapping the modelled substrate color onto the reference's median color.

    ``reference`` is a linear-RGB float image.
    """
    c_ref = estimate_background(reference)
    return wb_gain(c_ref, substrate_color(config, system, library), normalize=normalize)


def place_flake(draft: SceneDraft, mask: np.ndarray, substrate: SubstrateMask,
                rng: np.random.Generator, max_retries: int) -> tuple[int, int] | None:
    """Rejection-sample a top-left ``(u, v)`` where the flake lies on free substrate.

    Marks the flake as occupied on success; returns None after ``max_retries``
    rejected candidates.
    """
    H, W = draft.occupied.shape
    h, w = mask.shape
    if h > H or w > W:
        raise ValueError(f"flake {h}x{w} larger than canvas {H}x{W}")
    free = substrate.bits & ~draft.occupied
    for _ in range(max_retries):
        v = int(rng.integers(0, H - h + 1))
        u = int(rng.integers(0, W - w + 1))
        if free[v:v + h, u:u + w][mask].all():
            draft.occupied[v:v + h, u:u + w] |= mask
            return u, v
    return None


def composite(canvas: np.ndarray, mask: np.ndarray, position, color) -> np.ndarray:
    """Hard-replace ``canvas`` pixels under ``mask`` with ``color`` (in place)."""
    u, v = position
    h, w = mask.shape
    H, W = canvas.shape[:2]
    if u < 0 or v < 0 or u + w > W or v + h > H:
        raise ValueError(f"mask window {(u, v, w, h)} outside {W}x{H} canvas")
    canvas[v:v + h, u:u + w][mask] = color
    return canvas


# --- full scene -------------------------------------------------------------------

@dataclass
class SceneResult:
    image: np.ndarray  # uint8 sRGB
    flakes: list[FlakeInstance]
    pia: PiaMap
    substrate: SubstrateMask
    gain: np.ndarray
    background: np.ndarray  # linear RGB median of the reference
    skipped: int = 0
    linear: np.ndarray | None = None  # composited canvas before quantisation


def _resolve_gain(config, reference, system, library):
    if config.wb_mode == "from_reference":
        return wb_from_reference(reference, config, system, library)
    if config.wb_mode == "none":
        return np.ones(3)
    return np.asarray(config.wb_mode, dtype=float)


def synthesize_scene(reference, config: SynthesisConfig, system: ColorSystem,
                     library: MaterialLibrary | None = None, seed=None) -> SceneResult:
    """Render ``config.n_flakes`` flakes onto ``reference``.

    ``reference`` is either an 8-bit sRGB image (uint8) or a linear float
    image.  ``seed`` (int, sequence, or SeedSequence) defaults to
    ``config.seed``.  Flakes that cannot be placed are skipped and counted.
    """
    library = library or default_library()
    ref = np.asarray(reference)
    linear = from_uint8(ref) if ref.dtype == np.uint8 else np.asarray(ref, dtype=float)
    if linear.ndim != 3 or linear.shape[2] != 3 or linear.size == 0:
        raise ValueError(f"reference must be a non-empty (H, W, 3) image, got {linear.shape}")
    H, W = linear.shape[:2]
    if config.flake_px[1] > min(H, W):
        raise ConfigError(f"flake_px max {config.flake_px[1]} exceeds the {W}x{H} reference")
    for m in config.materials:
        monolayer_nm(m, library)
        library[m.id]

    rng = np.random.default_rng(config.seed if seed is None else seed)
    gain = _resolve_gain(config, linear, system, library)
    attention = pia_map(linear, config.patch, system)
    sub = substrate_mask(attention, config.substrate_percentile)
    background = attention.scores.background
    bg_lab = rgb_to_lab(background, system)

    draft = SceneDraft.from_image(linear, rng)
    ids = [m.id for m in config.materials]
    weights = np.array([m.weight for m in config.materials], dtype=float)
    weights /= weights.sum()
    scene_material = ids[int(rng.choice(len(ids), p=weights))]
    colors: dict[tuple[str, int], np.ndarray] = {}
    skipped = 0
    for _ in range(config.n_flakes):
        mat = scene_material if config.material_per == "scene" else ids[int(rng.choice(len(ids), p=weights))]
        mask = random_flake_mask(rng, config.flake_px)
        layers, thickness = sample_thickness(mat, config, rng, library)
        pos = place_flake(draft, mask, sub, rng, config.max_retries)
        if pos is None:
            skipped += 1
            continue
        key = (mat, layers)
        if key not in colors:
            colors[key] = flake_color(mat, thickness, config, system, gain, library)
        color = colors[key]
        composite(draft.canvas, mask, pos, color)
        draft.placed.append(
            FlakeInstance(mask, pos, mat, layers, thickness, color,
                          float(delta_e(rgb_to_lab(color, system), bg_lab)))
        )
    if skipped:
        log.info("skipped %d of %d flakes (no free substrate found)", skipped, config.n_flakes)
    return SceneResult(to_uint8(draft.canvas), draft.placed, attention, sub, gain, background,
                       skipped, draft.canvas)


def scene_seed(master_seed: int, scene_index: int) -> np.random.SeedSequence:
    """Per-scene seed derived from (master seed, index); independent of scheduling."""
    return np.random.SeedSequence([int(master_seed), int(scene_index)])
