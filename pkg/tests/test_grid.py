import numpy as np
import pytest
from hypothesis import given, strategies as hs
from hypothesis.extra import numpy as hnp

from nullcauchy.grid import Field, GridError, d1, field_norms, ko_dissipation, make_grid, \
    pack_symmetric, read_field, unpack_symmetric, write_field

from conftest import torus


def test_d1_is_fourth_order():
    errs = []
    for N in (16, 32, 64):
        g = torus(1, N)
        (x,) = g.coords()
        errs.append(np.max(np.abs(d1(np.sin(3 * x), 0, g.spacing[0]) - 3 * np.cos(3 * x))))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 3.8)


def test_d1_exact_on_low_modes_in_2d():
    g = make_grid(2, [12, 16], [2.0, 3.0])
    x, y = g.coords()
    f = np.cos(2 * np.pi * y / 3.0)
    assert np.max(np.abs(d1(f, 0, g.spacing[0]))) < 1e-13


def test_ko_dissipation_annihilates_constants_and_damps_nyquist():
    g = torus(2, 16)
    assert np.max(np.abs(ko_dissipation(np.full(g.shape, 3.0), g, 0.5))) < 1e-13
    x, _ = g.coords()
    nyq = np.cos(8 * x)
    out = ko_dissipation(nyq, g, 0.1)
    assert np.all(out * nyq <= 1e-12)


@pytest.mark.parametrize("dim,sizes,lengths", [(4, [8] * 4, [1] * 4), (2, [8, 4], [1, 1]),
                                                (2, [8, 8], [1, 0]), (2, [8], [1, 1])])
def test_make_grid_rejects(dim, sizes, lengths):
    with pytest.raises(GridError):
        make_grid(dim, sizes, lengths)


def test_field_shape_and_kinds_checked():
    g = torus(2, 8)
    with pytest.raises(GridError):
        Field(g, np.zeros((8, 9)))
    with pytest.raises(GridError):
        Field(g, np.zeros((8, 8, 2, 2)), (1, 1), kinds="ll")


@given(hnp.arrays(np.float64, (3, 4, 4), elements=hs.floats(-1e6, 1e6)))
def test_pack_unpack_roundtrip(a):
    a = a + np.swapaxes(a, -1, -2)
    assert np.array_equal(unpack_symmetric(pack_symmetric(a, 4), 4), a)


def test_field_file_roundtrip(tmp_path, rng):
    g = make_grid(2, [8, 10], [1.0, 2.0])
    a = rng.standard_normal(g.shape + (3, 3))
    f = Field(g, a + np.swapaxes(a, -1, -2), (2, 0), symmetric=True, meta={"tag": 1})
    write_field(tmp_path / "f.bin", f)
    back = read_field(tmp_path / "f.bin")
    assert np.array_equal(back.data, f.data)
    assert back.meta == {"tag": 1} and back.symmetric and back.grid == g


def test_field_norms():
    g = torus(1, 8)
    assert field_norms(Field(g, np.full(8, -2.0))) == (2.0, 2.0)
