"""Spectrum -> XYZ -> linear RGB -> sRGB / CIELAB, plus diagonal white balance.

Colors are plain numpy arrays with a trailing axis of length 3, so every
function works on a single color or a whole ``(H, W, 3)`` image.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .materials import (
    SpectralCurve,
    SpectralGrid,
    DEFAULT_GRID,
    data_dir,
    load_cmf,
    load_illuminant,
    sample_curve,
)

# CIELAB constants
_EPS = (6.0 / 29.0) ** 3
_SLOPE = 1.0 / (3.0 * (6.0 / 29.0) ** 2)
_OFFSET = 4.0 / 29.0


class ColorDomainError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ColorSystem:
    """CMFs and illuminant sampled on one grid, plus the XYZ->RGB matrix.

    ``xyz_to_rgb`` is stored row-balanced: each row is rescaled so that the
    white point maps to RGB (1, 1, 1).
    """

    cmf: tuple[SpectralCurve, SpectralCurve, SpectralCurve]
    illuminant: SpectralCurve
    xyz_to_rgb: np.ndarray
    white_point: np.ndarray

    def __post_init__(self):
        grid = self.illuminant.grid
        if any(c.grid != grid for c in self.cmf):
            raise ValueError("CMFs and illuminant must share one grid")
        m = np.array(self.xyz_to_rgb, dtype=float).reshape(3, 3)
        wp = np.array(self.white_point, dtype=float).reshape(3)
        if not np.all(wp > 0):
            raise ValueError(f"white point must be strictly positive, got {wp}")
        if abs(np.linalg.det(m)) < 1e-12:
            raise ValueError("xyz_to_rgb matrix is singular")
        row_gain = m @ wp
        if np.any(row_gain <= 0):
            raise ValueError("xyz_to_rgb maps the white point outside the positive octant")
        m = m / row_gain[:, None]
        inv = np.linalg.inv(m)
        for name, arr in (("xyz_to_rgb", m), ("white_point", wp), ("rgb_to_xyz", inv)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        ybar_i = self.cmf[1].values * self.illuminant.values
        norm = ybar_i.sum()
        if norm <= 0:
            raise ValueError("illuminant x ybar has zero weight on the grid")
        w = np.stack([c.values * self.illuminant.values for c in self.cmf]) / norm
        w.setflags(write=False)
        object.__setattr__(self, "_weights", w)

    @property
    def grid(self) -> SpectralGrid:
        return self.illuminant.grid

    @classmethod
    def build(cls, cmf_path, illuminant_path, xyz_to_rgb, white_point=None,
              grid: SpectralGrid = DEFAULT_GRID, equal_area: bool = True) -> "ColorSystem":
        """Sample tables onto ``grid``.

        With ``equal_area`` the x and z CMFs are rescaled so all three sum to
        the same value on the grid; the equal-energy stimulus is then exactly
        achromatic despite table truncation.  ``white_point=None`` takes the
        XYZ of a perfect reflector under the illuminant.
        """
        xbar, ybar, zbar = (sample_curve(t, grid) for t in load_cmf(cmf_path))
        if equal_area:
            sy = ybar.values.sum()
            xbar = SpectralCurve(grid, xbar.values * (sy / xbar.values.sum()))
            zbar = SpectralCurve(grid, zbar.values * (sy / zbar.values.sum()))
        ill = sample_curve(load_illuminant(illuminant_path), grid)
        if white_point is None:
            w = np.stack([c.values * ill.values for c in (xbar, ybar, zbar)]).sum(axis=1)
            white_point = w / w[1]
        return cls((xbar, ybar, zbar), ill, np.asarray(xyz_to_rgb, dtype=float), white_point)

    @classmethod
    def from_json(cls, path, grid: SpectralGrid = DEFAULT_GRID) -> "ColorSystem":
        path = Path(path)
        spec = json.loads(path.read_text())
        missing = {"cmf_path", "illuminant_path", "xyz_to_rgb"} - spec.keys()
        if missing:
            raise ValueError(f"{path}: missing keys {sorted(missing)}")
        if len(spec["xyz_to_rgb"]) != 9:
            raise ValueError(f"{path}: xyz_to_rgb needs 9 numbers (row-major)")
        wp = spec.get("white_point")
        if wp is not None and len(wp) != 3:
            raise ValueError(f"{path}: white_point needs 3 numbers")
        return cls.build(
            path.parent / spec["cmf_path"],
            path.parent / spec["illuminant_path"],
            spec["xyz_to_rgb"],
            wp,
            grid=grid,
            equal_area=spec.get("equal_area_cmf", True),
        )


def default_color_system(grid: SpectralGrid = DEFAULT_GRID, illuminant: str = "d65") -> ColorSystem:
    return ColorSystem.from_json(data_dir() / f"colorsystem_{illuminant}.json", grid)


def spectrum_to_xyz(R: SpectralCurve, system: ColorSystem) -> np.ndarray:
    """Riemann sum of CMF x illuminant x R, normalised so a perfect reflector has Y = 1."""
    if R.grid != system.grid:
        raise ColorDomainError(f"spectrum grid {R.grid} does not match color system grid {system.grid}")
    return system._weights @ R.values


def xyz_to_linear_rgb(xyz, system: ColorSystem, return_clipped: bool = False):
    xyz = np.asarray(xyz, dtype=float)
    rgb = xyz @ system.xyz_to_rgb.T
    clipped = int(np.count_nonzero((rgb < 0) | (rgb > 1)))
    rgb = np.clip(rgb, 0.0, 1.0)
    return (rgb, clipped) if return_clipped else rgb


def spectrum_to_rgb(R: SpectralCurve, system: ColorSystem) -> np.ndarray:
    return xyz_to_linear_rgb(spectrum_to_xyz(R, system), system)


def srgb_encode(rgb) -> np.ndarray:
    """Linear [0, 1] -> display [0, 255] (float, unrounded)."""
    c = np.clip(np.asarray(rgb, dtype=float), 0.0, 1.0)
    p = np.power(c, 1 / 2.4)
    # 1.055 p - 0.055, arranged so that c = 1 maps to exactly 1
    v = np.where(c <= 0.0031308, 12.92 * c, p + 0.055 * (p - 1.0))
    return 255.0 * v


def srgb_decode(display) -> np.ndarray:
    """Display [0, 255] -> linear [0, 1]."""
    v = np.asarray(display, dtype=float) / 255.0
    return np.where(v <= 0.04045, v / 12.92, np.power((v + 0.055) / 1.055, 2.4))


def to_uint8(rgb) -> np.ndarray:
    return np.round(srgb_encode(rgb)).astype(np.uint8)


def from_uint8(img) -> np.ndarray:
    return srgb_decode(np.asarray(img))


def _f(t):
    return np.where(t > _EPS, np.cbrt(t), t * _SLOPE + _OFFSET)


def rgb_to_lab(rgb, system: ColorSystem) -> np.ndarray:
    """Linear RGB -> CIE L*a*b* relative to the system white point.

    The matrix product is spelled out elementwise so that a single color and
    the same color inside a large array give bit-identical results.
    """
    rgb = np.asarray(rgb, dtype=float)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    m, wp = system.rgb_to_xyz, system.white_point
    x = (m[0, 0] * r + m[0, 1] * g + m[0, 2] * b) / wp[0]
    y = (m[1, 0] * r + m[1, 1] * g + m[1, 2] * b) / wp[1]
    z = (m[2, 0] * r + m[2, 1] * g + m[2, 2] * b) / wp[2]
    fx, fy, fz = _f(x), _f(y), _f(z)
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def delta_e(c1, c2):
    """CIE76 color difference (Euclidean distance in L*a*b*)."""
    d = np.asarray(c1, dtype=float) - np.asarray(c2, dtype=float)
    out = np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2 + d[..., 2] ** 2)
    return float(out) if out.ndim == 0 else out


def wb_gain(c_ref, c_0, normalize: bool = False) -> np.ndarray:
    """Diagonal white-balance gain ``c_ref / c_0``.

    With ``normalize`` the gain is rescaled to unit mean (fixes global exposure).
    """
    c_ref = np.asarray(c_ref, dtype=float).reshape(3)
    c_0 = np.asarray(c_0, dtype=float).reshape(3)
    if np.any(c_0 <= 0):
        raise ColorDomainError(f"modelled color has a non-positive channel: {c_0}")
    g = c_ref / c_0
    if normalize:
        g = g / g.mean()
    if not np.all(g > 0):
        raise ColorDomainError(f"gain must be strictly positive, got {g}")
    return g


def apply_wb(x, g) -> np.ndarray:
    """Per-channel multiply by ``g`` and clip to [0, 1]."""
    return np.clip(np.asarray(x, dtype=float) * np.asarray(g, dtype=float), 0.0, 1.0)


def estimate_background(image, roi=None) -> np.ndarray:
    """Per-channel (lower) median color of ``image`` or of an ``(x, y, w, h)`` ROI."""
    img = np.asarray(image)
    if roi is not None:
        x, y, w, h = roi
        img = img[y:y + h, x:x + w]
    px = img.reshape(-1, img.shape[-1])
    if px.shape[0] == 0:
        raise ColorDomainError("cannot estimate background of an empty image")
    k = (px.shape[0] - 1) // 2
    return np.partition(px, k, axis=0)[k].astype(float)
