"""Normal-incidence transfer-matrix reflectance of thin-film stacks.

Conventions
-----------
* Complex index ``N = n + ik`` with ``k >= 0`` meaning absorption.
* Forward fields in layer ``l`` carry ``exp(+i*delta_l)`` across the layer,
  with ``delta_l = 2*pi*N_l*d_l/lambda``; the propagation matrix relating
  amplitudes at the top of a layer to those at its bottom is
  ``P_l = diag(exp(-i*delta_l), exp(+i*delta_l))``.
* Interface matrices are ``M_ab = (1/t_ab) [[1, r_ab], [r_ab, 1]]``.
* ``(u0, v)^T = M_01 . prod_l (P_l . M_l,l+1) . (u, 0)^T`` with ``u0 = 1``;
  ``v`` is the reflected and ``u`` the transmitted amplitude.

Every function accepts a scalar wavelength or a 1-D array of wavelengths.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .materials import DispersionTable, MaterialLibrary, SpectralCurve, SpectralGrid, default_library

PASSIVE_TOL = 1e-9


class OpticsDomainError(ValueError):
    pass


def fresnel(n_a, n_b):
    """Normal-incidence amplitude coefficients ``(r, t)`` going from ``n_a`` into ``n_b``."""
    n_a = np.asarray(n_a, dtype=complex)
    n_b = np.asarray(n_b, dtype=complex)
    s = n_a + n_b
    if np.any(s == 0):
        raise OpticsDomainError("degenerate interface: n_a + n_b == 0")
    r = (n_a - n_b) / s
    t = 2.0 * n_a / s
    if r.ndim == 0:
        return complex(r), complex(t)
    return r, t


def phase_delta(n, d, lam):
    """Complex phase ``2*pi*n*d/lambda``; ``Im(n) > 0`` gives attenuation."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise OpticsDomainError(f"wavelength must be positive, got {lam}")
    if np.any(np.asarray(d) < 0):
        raise OpticsDomainError(f"thickness must be non-negative, got {d}")
    out = 2.0 * np.pi * np.asarray(n, dtype=complex) * d / lam
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Layer:
    material: DispersionTable
    thickness: float  # nm

    def __post_init__(self):
        if not (np.isfinite(self.thickness) and self.thickness > 0):
            raise ValueError(
                f"layer thickness must be finite and > 0, got {self.thickness} (omit zero-thickness layers)"
            )


@dataclass(frozen=True)
class LayerStack:
    """Semi-infinite incident medium / thin layers (top to bottom) / semi-infinite substrate."""

    incident: DispersionTable
    layers: tuple[Layer, ...] = field(default_factory=tuple)
    substrate: DispersionTable | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.substrate is None:
            raise ValueError("stack needs a substrate medium")

    @property
    def media(self) -> list[DispersionTable]:
        return [self.incident, *(ly.material for ly in self.layers), self.substrate]


@dataclass(frozen=True)
class FieldSolution:
    reflected: complex | np.ndarray  # v
    transmitted: complex | np.ndarray  # u
    incident: complex = 1.0  # u0


def _indices(stack: LayerStack, lam) -> list[np.ndarray]:
    idx = [np.asarray(m(lam), dtype=complex) for m in stack.media]
    if np.any(idx[0].imag != 0):
        raise OpticsDomainError(f"incident medium {stack.incident.material_id!r} must be lossless (k = 0)")
    return idx


def _transfer(idx: Sequence[np.ndarray], thicknesses: Sequence[float], lam):
    # running 2x2 product kept as four arrays (a b; c d)
    r, t = fresnel(idx[0], idx[1])
    a, b, c, d = 1 / t, r / t, r / t, 1 / t
    for layer_no, thick in enumerate(thicknesses, start=1):
        delta = phase_delta(idx[layer_no], thick, lam)
        em, ep = np.exp(-1j * delta), np.exp(1j * delta)
        a, b, c, d = a * em, b * ep, c * em, d * ep
        r, t = fresnel(idx[layer_no], idx[layer_no + 1])
        a, b, c, d = (a + b * r) / t, (a * r + b) / t, (c + d * r) / t, (c * r + d) / t
    u = 1.0 / a
    v = c * u
    return v, u


def stack_transfer(stack: LayerStack, lam) -> FieldSolution:
    idx = _indices(stack, lam)
    v, u = _transfer(idx, [ly.thickness for ly in stack.layers], lam)
    if np.ndim(v) == 0:
        v, u = complex(v), complex(u)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(u))):
        raise OpticsDomainError("non-finite field amplitude (layer too thick / absorbing?)")
    return FieldSolution(v, u)


def reflectance(stack: LayerStack, lam):
    """Power reflectance ``|v/u0|^2``."""
    v = stack_transfer(stack, lam).reflected
    R = np.abs(v) ** 2
    if np.any(R > 1.0 + PASSIVE_TOL):
        raise OpticsDomainError(f"reflectance {np.max(R)} exceeds 1 for a passive stack")
    return float(R) if np.ndim(R) == 0 else R


def reflectance_spectrum(stack: LayerStack, grid: SpectralGrid) -> SpectralCurve:
    return SpectralCurve(grid, reflectance(stack, grid.wavelengths))


def contrast_spectrum(flake_stack: LayerStack, bare_stack: LayerStack, grid: SpectralGrid) -> SpectralCurve:
    """``R_flake(lambda) - R_bare(lambda)`` on the grid."""
    return reflectance_spectrum(flake_stack, grid) - reflectance_spectrum(bare_stack, grid)


# --- the microscopy stacks ----------------------------------------------------

def substrate_stack(oxide_nm: float, library: MaterialLibrary | None = None,
                    oxide: str = "sio2", substrate: str = "si", ambient: str = "air") -> LayerStack:
    """``ambient / oxide(oxide_nm) / substrate``; a zero oxide thickness drops the layer."""
    lib = library or default_library()
    layers = (Layer(lib[oxide], oxide_nm),) if oxide_nm > 0 else ()
    return LayerStack(lib[ambient], layers, lib[substrate])


def flake_on_substrate(material_id: str, thickness_nm: float, oxide_nm: float,
                       library: MaterialLibrary | None = None, **kw) -> LayerStack:
    """``air / flake(thickness) / SiO2(oxide_nm) / Si``."""
    lib = library or default_library()
    bare = substrate_stack(oxide_nm, lib, **kw)
    return LayerStack(bare.incident, (Layer(lib[material_id], thickness_nm), *bare.layers), bare.substrate)
