"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data / validation error.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import colorimetry as cm
from .colorimetry import ColorSystem, default_color_system
from .imageio import ImageReadError, atomic_write_text, read_linear, write_png
from .materials import MaterialLibrary, SpectralGrid, default_library
from .optics import flake_on_substrate, reflectance_spectrum, substrate_stack
from .pia import pia_map, substrate_mask
from .synthesis import ConfigError, SynthesisConfig, substrate_color

BARE_ALIASES = {"sio2_only", "bare", "none"}


class DataError(Exception):
    """Maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _grid(args) -> SpectralGrid:
    try:
        return SpectralGrid(args.min_nm, args.max_nm, args.samples)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _library(args) -> MaterialLibrary:
    return MaterialLibrary(args.materials_dir) if args.materials_dir else default_library()


def _system(args, grid) -> ColorSystem:
    try:
        if args.color_system:
            return ColorSystem.from_json(args.color_system, grid)
        return default_color_system(grid)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"color system: {exc}") from None


def _stacks(args, lib):
    """(flake stack or None, bare stack, thickness)."""
    bare = substrate_stack(args.oxide_nm, lib)
    if args.material in BARE_ALIASES:
        return None, bare, 0.0
    if args.material not in lib:
        raise DataError(f"unknown material {args.material!r}; available: {', '.join(lib.ids())}")
    if args.thickness_nm is not None:
        thickness = args.thickness_nm
    else:
        try:
            thickness = args.layers * lib.monolayer_nm(args.material)
        except KeyError as exc:
            raise DataError(f"{exc.args[0]}; pass --thickness-nm") from None
    if not thickness > 0:
        raise DataError(f"flake thickness must be > 0, got {thickness}")
    return flake_on_substrate(args.material, thickness, args.oxide_nm, lib), bare, thickness


def spectrum_csv(curve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["wavelength_nm", "R"])
    for lam, r in zip(curve.wavelengths, curve.values):
        w.writerow([f"{lam:.10g}", f"{r:.12g}"])
    return buf.getvalue()


def cmd_spectrum(args) -> int:
    grid = _grid(args)
    lib = _library(args)
    flake, bare, _ = _stacks(args, lib)
    curve = reflectance_spectrum(flake or bare, grid)
    text = spectrum_csv(curve)
    if args.out:
        atomic_write_text(args.out, text)
        summary = sys.stdout
    else:
        sys.stdout.write(text)
        summary = sys.stderr
    print(f"R min={curve.values.min():.6f} max={curve.values.max():.6f} over {grid.count} samples "
          f"[{grid.lambda_min:g}, {grid.lambda_max:g}] nm", file=summary)
    return 0


def _gain_from_args(args, system, lib):
    if args.gain is not None:
        if any(g <= 0 for g in args.gain):
            raise DataError("--gain components must be positive")
        return np.array(args.gain, dtype=float)
    if args.reference:
        ref = read_linear(args.reference)
        c0 = substrate_color(SynthesisConfig(oxide_nm=args.oxide_nm), system, lib)
        return cm.wb_gain(cm.estimate_background(ref), c0, normalize=args.normalize)
    return np.ones(3)


def _fmt(v, nd=6):
    return "(" + ", ".join(f"{x:.{nd}f}" for x in v) + ")"


def color_report(args) -> str:
    grid = _grid(args)
    lib = _library(args)
    system = _system(args, grid)
    flake, bare, thickness = _stacks(args, lib)
    if flake is None:
        raise DataError("color needs a flake material")
    gain = _gain_from_args(args, system, lib)
    rows = []
    labs = []
    for label, stack in (("flake", flake), ("substrate", bare)):
        rgb = cm.apply_wb(cm.spectrum_to_rgb(reflectance_spectrum(stack, grid), system), gain)
        lab = cm.rgb_to_lab(rgb, system)
        labs.append(lab)
        hexcode = "#" + "".join(f"{int(c):02x}" for c in cm.to_uint8(rgb))
        rows.append(f"{label:<10} linear_rgb={_fmt(rgb)} srgb={hexcode} lab={_fmt(lab, 4)}")
    head = (f"material={args.material} thickness_nm={thickness:.6g} oxide_nm={args.oxide_nm:g} "
            f"gain={_fmt(gain)}")
    return "\n".join([head, *rows, f"delta_e={cm.delta_e(*labs):.6f}"]) + "\n"


def cmd_color(args) -> int:
    sys.stdout.write(color_report(args))
    return 0


def cmd_pia(args) -> int:
    img = read_linear(args.input)
    H, W = img.shape[:2]
    patch = tuple(args.patch) if len(args.patch) == 2 else (args.patch[0], args.patch[0])
    if not (1 <= patch[0] <= H and 1 <= patch[1] <= W):
        raise DataError(f"patch {patch} does not fit a {W}x{H} image")
    grid = SpectralGrid()
    system = _system(args, grid)
    pm = pia_map(img, patch, system, roi=args.roi)
    write_png(args.out, np.round(255.0 * pm.values).astype(np.uint8))
    if args.mask_out:
        sub = substrate_mask(pm, args.percentile)
        write_png(args.mask_out, sub.bits.astype(np.uint8) * 255)
    if args.csv_out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["patch_row", "patch_col", "delta_e", "normalized"])
        norm = pm.normalized_scores
        for (r, c), s in np.ndenumerate(pm.scores.scores):
            w.writerow([r, c, f"{s:.10g}", f"{norm[r, c]:.10g}"])
        atomic_write_text(args.csv_out, buf.getvalue())
    print(f"pia map {W}x{H}, {pm.scores.scores.size} patches of {patch[0]}x{patch[1]}, "
          f"max delta_e={pm.scores.scores.max():.4f}")
    return 0


def cmd_calibrate(args) -> int:
    ref = read_linear(args.reference)
    grid = SpectralGrid()
    system = _system(args, grid)
    lib = _library(args)
    c_ref = cm.estimate_background(ref)
    c0 = substrate_color(SynthesisConfig(oxide_nm=args.oxide_nm), system, lib)
    try:
        g = cm.wb_gain(c_ref, c0, normalize=args.normalize)
    except cm.ColorDomainError as exc:
        raise DataError(str(exc)) from None
    print(f"gain {g[0]:.3f} {g[1]:.3f} {g[2]:.3f}")
    print(f"reference_substrate {_fmt(c_ref)}")
    print(f"modelled_substrate {_fmt(c0)}")
    return 0


def cmd_dataset(args) -> int:
    from .pipeline import plan_dataset, run_dataset

    cfg_path = Path(args.config)
    cfg = SynthesisConfig.from_json(cfg_path)
    plan = plan_dataset(cfg, cfg_path.parent, args.output_dir)
    manifest = run_dataset(plan, args.workers)
    print(f"wrote {manifest['n_images']} scenes, {manifest['total_flakes']} flakes "
          f"({manifest['total_skipped']} skipped) to {plan.output_dir}")
    return 0


def _add_stack_flags(p):
    p.add_argument("--material", required=True, help="material id, or 'sio2_only' for the bare substrate")
    p.add_argument("--layers", type=int, default=1, help="layer count (thickness = layers x monolayer)")
    p.add_argument("--thickness-nm", type=float, help="explicit flake thickness, overrides --layers")
    p.add_argument("--oxide-nm", type=float, default=180.0)
    p.add_argument("--materials-dir", help="directory of <id>.csv dispersion tables")


def _add_grid_flags(p):
    p.add_argument("--min-nm", type=float, default=400.0)
    p.add_argument("--max-nm", type=float, default=700.0)
    p.add_argument("--samples", type=int, default=31)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flakesim", description="Thin-film flake rendering and dataset synthesis")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrum", help="reflectance spectrum of air/flake/SiO2/Si as CSV")
    _add_stack_flags(p)
    _add_grid_flags(p)
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("color", help="rendered flake and substrate colors")
    _add_stack_flags(p)
    _add_grid_flags(p)
    p.add_argument("--color-system", help="ColorSystem JSON (default: CIE 1931 / D65 / sRGB)")
    wb = p.add_mutually_exclusive_group()
    wb.add_argument("--gain", type=float, nargs=3, metavar=("R", "G", "B"))
    wb.add_argument("--reference", help="reference image for white-balance calibration")
    p.add_argument("--normalize", action="store_true", help="normalise the gain to unit mean")
    p.set_defaults(func=cmd_color)

    p = sub.add_parser("pia", help="attention map of an 8-bit image")
    p.add_argument("input")
    p.add_argument("--patch", type=int, nargs="+", default=[14], metavar="N", help="patch size: N or H W")
    p.add_argument("--percentile", type=float, default=90.0)
    p.add_argument("--roi", type=int, nargs=4, metavar=("X", "Y", "W", "H"), help="background ROI")
    p.add_argument("--out", required=True, help="grayscale map PNG")
    p.add_argument("--mask-out", help="substrate mask PNG")
    p.add_argument("--csv-out", help="per-patch scores CSV")
    p.add_argument("--color-system")
    p.set_defaults(func=cmd_pia)

    p = sub.add_parser("calibrate", help="white-balance gain from a reference image")
    p.add_argument("reference", help="8-bit PNG or linear-RGB .npy")
    p.add_argument("--oxide-nm", type=float, default=180.0)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--color-system")
    p.add_argument("--materials-dir")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("dataset", help="synthesize an annotated dataset from a config JSON")
    p.add_argument("config")
    p.add_argument("--output-dir", help="override the config's output_dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_dataset)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "patch", None) is not None and len(args.patch) not in (1, 2):
        parser.error("--patch takes one or two integers")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        parser.error("--workers must be >= 1")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, ConfigError, ImageReadError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"flakesim {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
