import numpy as np
import pytest
from hypothesis import given, strategies as st

from flakesim.materials import (
    DispersionTable,
    SpectralDataError,
    SpectralGrid,
    TabulatedSpectrum,
    WavelengthRangeError,
    data_dir,
    interp_index,
    load_dispersion,
    load_illuminant,
    sample_curve,
)
from oracles import linear_interp, read_table


def write(tmp_path, text, name="m.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_two_rows(tmp_path):
    t = load_dispersion(write(tmp_path, "wavelength_nm,n,k\n400,1.47,0\n700,1.45,0\n"))
    assert t.material_id == "m"
    assert len(t.wavelengths) == 2
    assert t.n.tolist() == [1.47, 1.45]


@pytest.mark.parametrize(
    "body",
    [
        "700,1.45,0\n400,1.47,0\n",  # out of order
        "400,1.47,0\n400,1.45,0\n",  # duplicate
        "400,0,0\n700,1.45,0\n",  # n <= 0
        "400,1.4,-0.1\n700,1.45,0\n",  # k < 0
        "400,1.4,0\n",  # single sample
    ],
)
def test_load_rejects_invalid(tmp_path, body):
    with pytest.raises(SpectralDataError):
        load_dispersion(write(tmp_path, "wavelength_nm,n,k\n" + body))


@pytest.mark.parametrize(
    "text",
    ["wavelength_nm,n,k\n400,abc,0\n700,1,0\n", "wavelength_nm,n,k\n400,1\n700,1,0\n", "lam,n,k\n400,1,0\n700,1,0\n", ""],
)
def test_load_parse_errors(tmp_path, text):
    with pytest.raises(SpectralDataError):
        load_dispersion(write(tmp_path, text))


def test_shipped_sio2_node_identity(lib):
    _, rows = read_table(data_dir() / "materials" / "sio2.csv")
    for lam, n, k in rows:
        assert interp_index(lib["sio2"], lam) == complex(n, k)


def test_interp_midpoint_and_range():
    t = DispersionTable("x", [500, 600], [1.5, 1.7], [0.0, 0.0])
    assert interp_index(t, 550) == pytest.approx(1.6 + 0j, abs=1e-15)
    with pytest.raises(WavelengthRangeError):
        interp_index(DispersionTable("y", [400, 700], [1, 1], [0, 0]), 399)


def test_node_550():
    t = DispersionTable("x", [500, 550, 600], [1.5, 1.46, 1.7], [0.1, 0.0, 0.2])
    assert interp_index(t, 550) == 1.46 + 0j


@given(st.floats(400.001, 699.999))
def test_interp_continuity(lam):
    # slopes below 1e-3 per nm, typical of dielectric data
    t = DispersionTable("x", [400, 450, 520, 700], [1.50, 1.53, 1.48, 1.45], [0.0, 0.02, 0.01, 0.05])
    eps = 1e-6
    assert abs(interp_index(t, lam + eps) - interp_index(t, lam)) < 1e-9
    assert abs(interp_index(t, lam - eps) - interp_index(t, lam)) < 1e-9


@pytest.mark.parametrize("name", ["si", "sio2", "mos2", "graphene"])
def test_shipped_tables_lipschitz(lib, name):
    t = lib[name]
    slope = max(np.max(np.abs(np.diff(t.n) / np.diff(t.wavelengths))),
                np.max(np.abs(np.diff(t.k) / np.diff(t.wavelengths))))
    eps = 1e-6
    for lam in np.linspace(400, 700, 301):
        assert abs(interp_index(t, lam + eps) - interp_index(t, lam)) <= 2 * slope * eps + 1e-12


@given(st.floats(1.0, 5.0), st.floats(0.0, 3.0), st.floats(300.0, 1000.0))
def test_constant_table(n, k, lam):
    t = DispersionTable.constant("c", complex(n, k))
    assert interp_index(t, lam) == complex(n, k)


def test_sample_curve_constant_and_endpoints():
    g = SpectralGrid(400, 700, 2)
    assert sample_curve(1.0, SpectralGrid(380, 780, 17)).values.tolist() == [1.0] * 17
    c = sample_curve(lambda lam: lam, g)
    assert c.values.tolist() == [400.0, 700.0]


def test_sample_curve_d65_matches_pointwise():
    ill = load_illuminant(data_dir() / "illuminant_d65.csv")
    _, rows = read_table(data_dir() / "illuminant_d65.csv")
    g = SpectralGrid(400, 700, 31)
    curve = sample_curve(ill, g)
    expect = [linear_interp([r[0] for r in rows], [r[1] for r in rows], lam) for lam in g.wavelengths]
    np.testing.assert_allclose(curve.values, expect, rtol=0, atol=1e-12)


def test_sample_curve_propagates_range_error():
    spd = TabulatedSpectrum("s", [450, 650], [1, 1])
    with pytest.raises(WavelengthRangeError):
        sample_curve(spd, SpectralGrid(400, 700, 5))


@given(st.floats(100, 900), st.floats(1, 500), st.integers(2, 200))
def test_grid_refinement_bit_identical(lo, span, d):
    g = SpectralGrid(lo, lo + span, d)
    fine = g.refined().wavelengths
    coarse = g.wavelengths
    assert np.array_equal(fine[::2], coarse)
    assert coarse[0] == g.lambda_min and coarse[-1] == g.lambda_max


def test_default_grid_spacing():
    wl = SpectralGrid().wavelengths
    assert len(wl) == 31 and wl[1] - wl[0] == 10.0


@pytest.mark.parametrize("args", [(700, 400, 31), (400, 700, 1), (400, 400, 5)])
def test_grid_invalid(args):
    with pytest.raises(ValueError):
        SpectralGrid(*args)


def test_library_ships_paper_materials(lib):
    for m in ["air", "sio2", "si", "graphene", "hbn", "mos2", "mose2", "mowse2", "ws2", "wse2", "wte2"]:
        t = lib[m]
        assert t.span[0] <= 400 and t.span[1] >= 700
    assert interp_index(lib["air"], 555.5) == 1 + 0j
    with pytest.raises(KeyError):
        lib["unobtainium"]
