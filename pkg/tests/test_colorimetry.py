import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from flakesim import colorimetry as cm
from flakesim.colorimetry import ColorSystem
from flakesim.materials import DEFAULT_GRID, SpectralCurve, SpectralGrid, data_dir, sample_curve
from flakesim.optics import reflectance_spectrum, substrate_stack
from oracles import cie_L, lower_median_sorted, read_table, riemann_xyz, srgb_oetf

unit = st.floats(0.0, 1.0)
lab_triple = st.tuples(st.floats(0, 100), st.floats(-128, 128), st.floats(-128, 128))


def test_black_spectrum(d65):
    assert cm.spectrum_to_xyz(sample_curve(0.0, DEFAULT_GRID), d65).tolist() == [0, 0, 0]


def test_equal_energy_white(illum_e):
    xyz = cm.spectrum_to_xyz(sample_curve(1.0, DEFAULT_GRID), illum_e)
    np.testing.assert_allclose(xyz, illum_e.white_point, rtol=0, atol=1e-12)
    x, y = xyz[:2] / xyz.sum()
    assert abs(x - 1 / 3) < 1e-6 and abs(y - 1 / 3) < 1e-6


def test_substrate_xyz_matches_riemann_sum(d65, lib):
    R = reflectance_spectrum(substrate_stack(180.0, lib), DEFAULT_GRID)
    _, cmf = read_table(data_dir() / "cie1931_2deg.csv")
    _, ill = read_table(data_dir() / "illuminant_d65.csv")
    expect = riemann_xyz(list(DEFAULT_GRID.wavelengths), list(R.values), cmf, ill)
    np.testing.assert_allclose(cm.spectrum_to_xyz(R, d65), expect, rtol=0, atol=1e-9)


def test_grid_mismatch(d65):
    with pytest.raises(cm.ColorDomainError):
        cm.spectrum_to_xyz(sample_curve(1.0, SpectralGrid(400, 700, 16)), d65)


@given(arrays(float, 31, elements=unit), arrays(float, 31, elements=unit), st.floats(0, 5), st.floats(0, 5))
def test_xyz_linear(d65, r1, r2, a, b):
    g = DEFAULT_GRID
    lhs = cm.spectrum_to_xyz(SpectralCurve(g, a * r1 + b * r2), d65)
    rhs = a * cm.spectrum_to_xyz(SpectralCurve(g, r1), d65) + b * cm.spectrum_to_xyz(SpectralCurve(g, r2), d65)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-9)


def test_white_point_to_unit_rgb(d65):
    np.testing.assert_allclose(cm.xyz_to_linear_rgb(d65.white_point, d65), 1.0, atol=1e-6)
    assert cm.xyz_to_linear_rgb([0, 0, 0], d65).tolist() == [0, 0, 0]


def test_out_of_gamut_clipped(d65):
    rgb, n = cm.xyz_to_linear_rgb([0.1, 0.05, 2.0], d65, return_clipped=True)
    assert n >= 1
    assert set(rgb[(rgb == 0) | (rgb == 1)]) <= {0.0, 1.0}
    assert np.all((rgb >= 0) & (rgb <= 1))
    assert rgb[0] == 0.0 and rgb[2] == 1.0


def test_srgb_endpoints_and_oracle():
    assert cm.srgb_encode([0.0, 1.0, 0.18]).tolist()[:2] == [0.0, 255.0]
    assert cm.srgb_encode(0.18) == pytest.approx(255 * srgb_oetf(0.18), abs=1e-12)
    assert cm.srgb_decode(255.0) == pytest.approx(1.0, abs=1e-15)


def test_srgb_roundtrip_random():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, (1000, 3))
    assert np.max(np.abs(cm.srgb_decode(cm.srgb_encode(x)) - x)) < 1 / 510


def test_uint8_roundtrip_exact():
    levels = np.arange(256, dtype=np.uint8)
    assert np.array_equal(cm.to_uint8(cm.from_uint8(levels)), levels)


def test_lab_white_black_gray(d65):
    np.testing.assert_allclose(cm.rgb_to_lab([1, 1, 1], d65), [100, 0, 0], atol=1e-6)
    np.testing.assert_allclose(cm.rgb_to_lab([0, 0, 0], d65), [0, 0, 0], atol=1e-12)
    gray = cm.xyz_to_linear_rgb(0.18 * d65.white_point, d65)
    assert cm.rgb_to_lab(gray, d65)[0] == pytest.approx(cie_L(0.18), abs=1e-9)


@given(st.tuples(unit, unit, unit))
def test_lab_scalar_equals_batched(d65, rgb):
    batch = np.array([[0.3, 0.2, 0.1], rgb, [0.9, 0.9, 0.9]])
    assert np.array_equal(cm.rgb_to_lab(batch, d65)[1], cm.rgb_to_lab(np.array(rgb), d65))


def test_delta_e_examples():
    assert cm.delta_e([50, 1, 2], [50, 1, 2]) == 0
    assert cm.delta_e([50, 0, 0], [60, 0, 0]) == 10
    assert cm.delta_e([50, 3, 4], [50, 0, 0]) == 5


@given(lab_triple, lab_triple, lab_triple)
def test_delta_e_metric(a, b, c):
    assert cm.delta_e(a, b) == cm.delta_e(b, a)
    assert cm.delta_e(a, a) == 0
    assert cm.delta_e(a, c) <= cm.delta_e(a, b) + cm.delta_e(b, c) + 1e-9


def test_wb_gain_examples():
    assert cm.wb_gain([0.3, 0.4, 0.5], [0.3, 0.4, 0.5]).tolist() == [1, 1, 1]
    np.testing.assert_allclose(cm.wb_gain([0.5, 0.4, 0.3], [0.25, 0.2, 0.1]), [2, 2, 3], rtol=1e-15)
    g = cm.wb_gain([0.5, 0.4, 0.3], [0.25, 0.2, 0.1], normalize=True)
    assert g.mean() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(cm.ColorDomainError):
        cm.wb_gain([0.5, 0.4, 0.3], [0.25, 0.0, 0.1])


@given(st.tuples(*[st.floats(0.01, 1)] * 3), st.tuples(*[st.floats(0.01, 1)] * 3))
def test_wb_roundtrip(c_ref, c_0):
    g = cm.wb_gain(c_ref, c_0)
    # one rounding in the division, one in the product
    np.testing.assert_allclose(cm.apply_wb(c_0, g), c_ref, rtol=4.5e-16, atol=0)


def test_apply_wb_examples():
    x = np.array([0.2, 0.6, 0.9])
    assert np.array_equal(cm.apply_wb(x, [1, 1, 1]), x)
    assert cm.apply_wb([0.6, 0.6, 0.6], [2, 2, 2]).tolist() == [1.0, 1.0, 1.0]
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 1, (7, 5, 3))
    g = np.array([1.3, 0.7, 1.1])
    per_pixel = np.array([[cm.apply_wb(img[i, j], g) for j in range(5)] for i in range(7)])
    assert np.array_equal(cm.apply_wb(img, g), per_pixel)


def test_background_examples():
    const = np.full((6, 8, 3), 0.25)
    assert cm.estimate_background(const).tolist() == [0.25] * 3
    img = np.zeros((10, 10, 3))
    img[:] = [0.3, 0.5, 0.7]
    img[:1] = [0.9, 0.1, 0.2]
    assert cm.estimate_background(img).tolist() == [0.3, 0.5, 0.7]
    with pytest.raises(cm.ColorDomainError):
        cm.estimate_background(np.zeros((0, 4, 3)))


@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 12))
def test_background_matches_sort_oracle(seed, h, w):
    img = np.random.default_rng(seed).integers(0, 256, (h, w, 3)).astype(float)
    pixels = img.reshape(-1, 3).tolist()
    expect = [lower_median_sorted([p[c] for p in pixels]) for c in range(3)]
    assert cm.estimate_background(img).tolist() == expect


def test_colorsystem_json_schema(tmp_path):
    spec = json.loads((data_dir() / "colorsystem_d65.json").read_text())
    assert set(spec) == {"cmf_path", "illuminant_path", "xyz_to_rgb", "white_point"}
    spec.update(cmf_path=str(data_dir() / "cie1931_2deg.csv"), illuminant_path=str(data_dir() / "illuminant_d65.csv"),
                white_point=[0.95047, 1.0, 1.08883])
    p = tmp_path / "cs.json"
    p.write_text(json.dumps(spec))
    cs = ColorSystem.from_json(p)
    assert cs.white_point.tolist() == [0.95047, 1.0, 1.08883]
    np.testing.assert_allclose(cs.xyz_to_rgb @ cs.white_point, 1.0, atol=1e-12)
    spec["xyz_to_rgb"] = spec["xyz_to_rgb"][:8]
    p.write_text(json.dumps(spec))
    with pytest.raises(ValueError):
        ColorSystem.from_json(p)


def _color(R, system):
    return cm.xyz_to_linear_rgb(cm.spectrum_to_xyz(R, system), system)


def first_order_ratio(bare_R, dR, system, eps):
    base = cm.rgb_to_lab(_color(bare_R, system), system)

    def h(e):
        return cm.delta_e(cm.rgb_to_lab(_color(SpectralCurve(bare_R.grid, bare_R.values + e * dR), system), system), base)

    return h(eps) / eps, h(eps / 2) / (eps / 2)


def test_first_order_link_single_flake(d65, lib):
    from flakesim.optics import contrast_spectrum, flake_on_substrate

    bare = substrate_stack(180.0, lib)
    dR = contrast_spectrum(flake_on_substrate("mos2", 0.65, 180.0, lib), bare, DEFAULT_GRID).values
    r1, r2 = first_order_ratio(reflectance_spectrum(bare, DEFAULT_GRID), dR, d65, 1e-3)
    assert abs(r1 - r2) < 0.05 * r1
