import numpy as np
import pytest
import sympy as sp

from nullcauchy.constraint import ConstraintError, S, build_normal_form, completeness_check, \
    constraint_identities, constraint_residual, family_from_expr, get_family, registry, \
    sampled_family, u_profile

from conftest import torus


def residual(family, N, dim=2, kind="warp"):
    fam = get_family(family, dim - 1, eps=0.1, conformal=0.1)
    d = build_normal_form(u_profile(dim - 1, kind, 0.1, 0.1), fam, torus(dim, N))
    return float(np.max(np.abs(constraint_residual(d.g, d.U, d.W).data))), d


@pytest.mark.parametrize("family", registry)
def test_constraint_converges(family):
    r1, _ = residual(family, 16)
    r2, _ = residual(family, 32)
    assert r2 < r1 / 10


def test_constant_u_flat_is_exact():
    r, _ = residual("flat_static", 8, kind="const")
    assert r < 1e-14


def test_identities_converge():
    _, d1_ = residual("conformal_exp", 16, dim=3)
    _, d2_ = residual("conformal_exp", 32, dim=3)
    a = [max(np.max(np.abs(f.data)) for f in constraint_identities(d)) for d in (d1_, d2_)]
    assert a[1] < a[0] / 10


def test_normal_form_layout():
    _, d = residual("brinkmann_wave", 8)
    assert np.allclose(d.g.g[..., 0, 0], d.u ** -2)
    assert np.allclose(d.U.data[..., 0], d.u ** 2)
    assert np.allclose(d.W.data[..., 1:, 1:], -0.5 * d.u[..., None, None] * d.hdot)


def test_sampled_family_matches_closed_form():
    fam = family_from_expr("w", sp.Matrix([[1 + sp.sin(S) / 4, 0], [0, sp.exp(sp.cos(S) / 5)]]))
    s = np.arange(64) * 2 * np.pi / 64
    sam = sampled_family("w", s, fam.h(s))
    err = np.max(np.abs(sam.hdot(s) - fam.hdot(s)))
    assert err < 1e-5
    assert np.array_equal(sam.h(s[5]), fam.h(s)[5])


def test_errors():
    fam = get_family("flat_static", 2)
    with pytest.raises(ConstraintError):
        build_normal_form(u_profile(2), fam, torus(2, 8))
    with pytest.raises(ConstraintError):
        build_normal_form(-np.ones((8, 8, 8)), fam, torus(3, 8))
    with pytest.raises(ConstraintError):
        get_family("nope", 2)
    with pytest.raises(ConstraintError):
        u_profile(2, "nope")
    bad = family_from_expr("bad", sp.Matrix([[sp.sin(S)]]))
    with pytest.raises(ConstraintError):
        bad.evaluate(np.array([-1.0]))


def test_completeness_verdicts():
    u = np.ones(4)
    assert completeness_check(u, True, "S1").verdict == "complete"
    v = completeness_check(u, True, "R")
    assert v.verdict == "complete" and v.bound == 1.0
    assert completeness_check(u, False, "R").verdict == "inconclusive"
    assert completeness_check(u, True, "(0,1)").verdict == "inconclusive"
    assert completeness_check(u, True, "R", u_bounded=False).verdict == "inconclusive"
