"""Spectral data ingestion: dispersion tables, CMF/illuminant tables, grids.

All tables are immutable once loaded.  Interpolation is piecewise linear in
wavelength and never extrapolates.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

DISPERSION_HEADER = ["wavelength_nm", "n", "k"]
CMF_HEADER = ["wavelength_nm", "xbar", "ybar", "zbar"]
ILLUMINANT_HEADER = ["wavelength_nm", "power"]


class SpectralDataError(ValueError):
    """Malformed or invalid spectral data file (parse or validation)."""


class WavelengthRangeError(ValueError):
    """Wavelength outside a table's tabulated range."""


def data_dir() -> Path:
    return Path(str(resources.files("flakesim") / "data"))


def _freeze(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_wavelengths(wl: np.ndarray, what: str) -> None:
    if wl.size < 2:
        raise SpectralDataError(f"{what}: need at least 2 samples, got {wl.size}")
    if not np.all(np.isfinite(wl)):
        raise SpectralDataError(f"{what}: non-finite wavelength")
    d = np.diff(wl)
    if np.any(d == 0):
        raise SpectralDataError(f"{what}: duplicate wavelength {wl[1:][d == 0][0]:g} nm")
    if np.any(d < 0):
        raise SpectralDataError(f"{what}: wavelengths not strictly increasing")


def _check_range(wl_table: np.ndarray, lam, what: str) -> None:
    lam = np.asarray(lam, dtype=float)
    lo, hi = wl_table[0], wl_table[-1]
    if np.any(~np.isfinite(lam)) or np.any(lam < lo) or np.any(lam > hi):
        bad = lam[(lam < lo) | (lam > hi) | ~np.isfinite(lam)]
        raise WavelengthRangeError(
            f"{what}: wavelength {float(np.ravel(bad)[0]):g} nm outside [{lo:g}, {hi:g}] nm"
        )


@dataclass(frozen=True, eq=False)
class DispersionTable:
    """Complex refractive index n + ik sampled on increasing wavelengths (nm)."""

    material_id: str
    wavelengths: np.ndarray
    n: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        wl, n, k = _freeze(self.wavelengths), _freeze(self.n), _freeze(self.k)
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "k", k)
        if not (wl.shape == n.shape == k.shape) or wl.ndim != 1:
            raise SpectralDataError(f"{self.material_id}: column lengths differ")
        _check_wavelengths(wl, self.material_id)
        if not (np.all(np.isfinite(n)) and np.all(np.isfinite(k))):
            raise SpectralDataError(f"{self.material_id}: non-finite n or k")
        if np.any(n <= 0):
            raise SpectralDataError(f"{self.material_id}: n must be > 0")
        if np.any(k < 0):
            raise SpectralDataError(f"{self.material_id}: k must be >= 0")

    @classmethod
    def constant(cls, material_id: str, index: complex, span=(300.0, 1000.0)) -> "DispersionTable":
        index = complex(index)
        return cls(material_id, list(span), [index.real] * 2, [index.imag] * 2)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.wavelengths[0]), float(self.wavelengths[-1])

    def __call__(self, lam):
        return interp_index(self, lam)


def interp_index(table: DispersionTable, lam):
    """Complex index at ``lam`` (scalar or array), linear in n and k separately."""
    _check_range(table.wavelengths, lam, table.material_id)
    n = np.interp(lam, table.wavelengths, table.n)
    k = np.interp(lam, table.wavelengths, table.k)
    out = n + 1j * k
    return complex(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class TabulatedSpectrum:
    """A real-valued tabulated function of wavelength (one CMF column, an SPD...)."""

    name: str
    wavelengths: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        wl, v = _freeze(self.wavelengths), _freeze(self.values)
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "values", v)
        if wl.shape != v.shape or wl.ndim != 1:
            raise SpectralDataError(f"{self.name}: column lengths differ")
        _check_wavelengths(wl, self.name)
        if not np.all(np.isfinite(v)):
            raise SpectralDataError(f"{self.name}: non-finite value")

    def __call__(self, lam):
        _check_range(self.wavelengths, lam, self.name)
        return np.interp(lam, self.wavelengths, self.values)


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform wavelength grid, endpoints inclusive."""

    lambda_min: float = 400.0
    lambda_max: float = 700.0
    count: int = 31

    def __post_init__(self):
        if not (np.isfinite(self.lambda_min) and np.isfinite(self.lambda_max)):
            raise ValueError("grid bounds must be finite")
        if not self.lambda_min < self.lambda_max:
            raise ValueError(f"grid needs lambda_min < lambda_max, got {self.lambda_min}, {self.lambda_max}")
        if int(self.count) != self.count or self.count < 2:
            raise ValueError(f"grid needs at least 2 samples, got {self.count}")

    @property
    def wavelengths(self) -> np.ndarray:
        i = np.arange(self.count, dtype=float)
        # scale-then-divide keeps shared nodes bit-identical under refinement
        wl = self.lambda_min + ((self.lambda_max - self.lambda_min) * i) / (self.count - 1)
        wl[-1] = self.lambda_max
        return wl

    def refined(self) -> "SpectralGrid":
        return SpectralGrid(self.lambda_min, self.lambda_max, 2 * self.count - 1)


DEFAULT_GRID = SpectralGrid(400.0, 700.0, 31)


@dataclass(frozen=True, eq=False)
class SpectralCurve:
    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        v = _freeze(self.values)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.count,):
            raise ValueError(f"curve has {v.size} values for a {self.grid.count}-point grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")

    @property
    def wavelengths(self) -> np.ndarray:
        return self.grid.wavelengths

    def __sub__(self, other: "SpectralCurve") -> "SpectralCurve":
        if other.grid != self.grid:
            raise ValueError("curves live on different grids")
        return SpectralCurve(self.grid, self.values - other.values)


Source = Union[TabulatedSpectrum, Callable[[np.ndarray], np.ndarray], float]


def sample_curve(source: Source, grid: SpectralGrid) -> SpectralCurve:
    """Evaluate a tabulated spectrum, callable, or constant at every grid point."""
    wl = grid.wavelengths
    if isinstance(source, DispersionTable):
        raise TypeError("sample_curve needs a real-valued source; use interp_index for indices")
    if callable(source):
        vals = np.broadcast_to(np.asarray(source(wl), dtype=float), wl.shape)
    else:
        vals = np.full(wl.shape, float(source))
    return SpectralCurve(grid, np.array(vals))


# --- file loading -----------------------------------------------------------

def _read_rows(path, header: Sequence[str]) -> np.ndarray:
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise SpectralDataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            got = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SpectralDataError(f"{path}: empty file") from None
        if got != list(header):
            raise SpectralDataError(f"{path}: expected header {','.join(header)}, got {','.join(got)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SpectralDataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise SpectralDataError(f"{path}:{lineno}: malformed number in {row!r}") from None
    if not rows:
        raise SpectralDataError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def load_dispersion(path, material_id: str | None = None) -> DispersionTable:
    path = Path(path)
    rows = _read_rows(path, DISPERSION_HEADER)
    return DispersionTable(material_id or path.stem, rows[:, 0], rows[:, 1], rows[:, 2])


def load_cmf(path) -> tuple[TabulatedSpectrum, TabulatedSpectrum, TabulatedSpectrum]:
    rows = _read_rows(path, CMF_HEADER)
    if np.any(rows[:, 1:] < 0):
        raise SpectralDataError(f"{path}: negative colour-matching value")
    return tuple(TabulatedSpectrum(name, rows[:, 0], rows[:, i + 1]) for i, name in enumerate("xyz"))


def load_illuminant(path) -> TabulatedSpectrum:
    path = Path(path)
    rows = _read_rows(path, ILLUMINANT_HEADER)
    if np.any(rows[:, 1] < 0):
        raise SpectralDataError(f"{path}: negative spectral power")
    return TabulatedSpectrum(path.stem, rows[:, 0], rows[:, 1])


# --- material library -------------------------------------------------------

class MaterialLibrary:
    """Lazy loader for ``<id>.csv`` dispersion tables in a directory.

    ``catalog.json`` alongside the tables (optional) supplies per-material
    metadata such as default monolayer thickness.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory else data_dir() / "materials"
        self._cache: dict[str, DispersionTable] = {}
        cat = self.directory / "catalog.json"
        self.catalog = json.loads(cat.read_text()) if cat.exists() else {}

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.csv"))

    def __contains__(self, material_id: str) -> bool:
        return (self.directory / f"{material_id}.csv").exists()

    def __getitem__(self, material_id: str) -> DispersionTable:
        if material_id not in self._cache:
            path = self.directory / f"{material_id}.csv"
            if not path.exists():
                raise KeyError(f"unknown material {material_id!r} (no {path.name} in {self.directory})")
            self._cache[material_id] = load_dispersion(path, material_id)
        return self._cache[material_id]

    def monolayer_nm(self, material_id: str) -> float:
        try:
            return float(self.catalog[material_id]["monolayer_nm"])
        except KeyError:
            raise KeyError(f"no monolayer thickness for {material_id!r} in catalog") from None


@lru_cache(maxsize=None)
def default_library() -> MaterialLibrary:
    return MaterialLibrary()
