"""Regenerate the spectral data files shipped in ``src/flakesim/data``.

CMF and D65 tables are taken from ``colour-science`` (only needed to rerun
this script, never at runtime).  Dispersion tables are placeholders built
from common closed-form approximations or rough anchor points; replace
them with measured data for quantitative work.

    python scripts/make_spectral_data.py
"""
import csv
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parents[1] / "src" / "flakesim" / "data"
WL = np.arange(380, 801, 10, dtype=float)

# rough n, k anchor points (nm -> (n, k)); placeholder values
ANCHORS = {
    "si": {
        380: (6.40, 1.00), 400: (5.57, 0.387), 420: (4.99, 0.21), 450: (4.67, 0.135),
        500: (4.30, 0.073), 550: (4.08, 0.041), 600: (3.94, 0.025), 650: (3.85, 0.016),
        700: (3.78, 0.012), 750: (3.73, 0.009), 800: (3.69, 0.006),
    },
    "mos2": {
        380: (3.0, 2.4), 420: (3.9, 2.6), 450: (4.8, 1.9), 500: (4.4, 1.1), 550: (4.3, 0.95),
        600: (4.7, 1.2), 620: (4.9, 1.0), 660: (5.1, 1.0), 700: (4.7, 0.3), 800: (4.4, 0.1),
    },
    "mose2": {
        380: (3.4, 2.3), 440: (4.2, 2.4), 500: (4.5, 1.6), 550: (4.4, 1.3), 600: (4.6, 1.2),
        700: (5.0, 1.1), 750: (5.2, 0.9), 800: (4.9, 0.3),
    },
    "mowse2": {
        380: (3.3, 2.3), 440: (4.1, 2.3), 500: (4.4, 1.5), 550: (4.3, 1.2), 600: (4.5, 1.1),
        680: (4.9, 1.0), 740: (5.0, 0.7), 800: (4.7, 0.3),
    },
    "ws2": {
        380: (2.9, 1.9), 440: (3.8, 1.7), 500: (3.9, 0.8), 550: (3.9, 0.6), 600: (4.3, 0.9),
        620: (4.9, 1.3), 640: (4.5, 0.4), 700: (4.1, 0.08), 800: (3.9, 0.02),
    },
    "wse2": {
        380: (3.3, 2.1), 440: (4.3, 2.0), 500: (4.2, 1.0), 550: (4.2, 0.8), 600: (4.4, 0.8),
        700: (4.6, 1.0), 740: (4.8, 0.8), 800: (4.4, 0.15),
    },
    "wte2": {
        380: (2.9, 2.2), 500: (3.4, 2.3), 600: (3.7, 2.3), 700: (4.0, 2.2), 800: (4.2, 2.1),
    },
}


def write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.6g}" if i else f"{v:g}" for i, v in enumerate(row)])


def sellmeier(wl_nm, terms):
    x2 = (wl_nm / 1000.0) ** 2
    n2 = 1.0 + sum(b * x2 / (x2 - c) for b, c in terms)
    return np.sqrt(n2)


def dispersion_tables():
    tables = {"air": (np.ones_like(WL), np.zeros_like(WL))}
    # Malitson fused silica
    tables["sio2"] = (
        sellmeier(WL, [(0.6961663, 0.0684043**2), (0.4079426, 0.1162414**2), (0.8974794, 9.896161**2)]),
        np.zeros_like(WL),
    )
    # single-term in-plane hBN
    tables["hbn"] = (sellmeier(WL, [(3.263, 0.1644**2)]), np.zeros_like(WL))
    # graphene, n = 3.0 + i*C*lambda/3 with C = 5.446 um^-1
    tables["graphene"] = (np.full_like(WL, 3.0), 5.446 * (WL / 1000.0) / 3.0)
    for name, pts in ANCHORS.items():
        nodes = np.array(sorted(pts))
        n = np.interp(WL, nodes, [pts[k][0] for k in nodes])
        k = np.interp(WL, nodes, [pts[k][1] for k in nodes])
        tables[name] = (n, k)
    return tables


def main():
    for name, (n, k) in dispersion_tables().items():
        write_csv(DATA / "materials" / f"{name}.csv", ["wavelength_nm", "n", "k"], zip(WL, n, k))

    import colour

    cmfs = colour.MSDS_CMFS["CIE 1931 2 Degree Standard Observer"]
    grid = np.arange(380, 781, 5, dtype=float)
    write_csv(
        DATA / "cie1931_2deg.csv",
        ["wavelength_nm", "xbar", "ybar", "zbar"],
        ([w, *np.clip(cmfs[w], 0, None)] for w in grid),
    )
    d65 = colour.SDS_ILLUMINANTS["D65"]
    write_csv(DATA / "illuminant_d65.csv", ["wavelength_nm", "power"], ([w, d65[w]] for w in grid))
    write_csv(DATA / "illuminant_e.csv", ["wavelength_nm", "power"], ([w, 100.0] for w in grid))


if __name__ == "__main__":
    main()
