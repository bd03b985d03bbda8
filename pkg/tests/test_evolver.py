import numpy as np
import pytest
from hypothesis import given, strategies as hs

from nullcauchy.constraint import get_family
from nullcauchy.evolver import EvolutionError, admissibility, char_speed, evolve, projection_data, \
    rhs, rk4_step, symbol_matrices, time_step
from nullcauchy.initial_data import ppwave_state

from conftest import normal_form_state, torus


def minkowski(N=8):
    st, bg, _ = normal_form_state("flat_static", N)
    return st, bg


def test_minkowski_is_a_fixed_point():
    st, bg = minkowski()
    res = evolve(st, bg, steps=5, cfl=0.25)
    assert res.status == "ok" and res.steps == 5
    assert res.state.max_abs_diff(st) < 1e-14


def exact_rhs_error(N, t=0.2, eps=1e-3):
    fam = get_family("conformal_exp", 2, eps=0.1, conformal=0.1)
    grid = torus(3, N)
    st, bg = ppwave_state(fam, grid, t)
    got = rhs(st, bg)
    sh = [ppwave_state(fam, grid, t + j * eps)[0].blocks() for j in (-2, -1, 1, 2)]
    ref = [(8 * (b1 - a1) - (b2 - a2)) / (12 * eps) for a2, a1, b1, b2 in zip(*sh)]
    return [float(np.max(np.abs(a - b))) for a, b in zip(got, ref)]


def test_rhs_reproduces_exact_time_derivatives():
    e1, e2 = exact_rhs_error(12), exact_rhs_error(24)
    # gbar, alpha: exact; dgbar, k, Z: truncation error shrinks at 4th order
    assert e1[0] < 1e-9 and e2[3] < 1e-12
    for i in (1, 2, 4):
        assert e2[i] < e1[i] / 10, (i, e1[i], e2[i])


def test_z_forms_agree_on_flat_data():
    st, bg = minkowski()
    a = rhs(st, bg, z_form="covariant")[4]
    b = rhs(st, bg, z_form="coordinate")[4]
    assert np.max(np.abs(a - b)) < 1e-14
    with pytest.raises(EvolutionError):
        rhs(st, bg, z_form="other")


def test_rk4_reuses_first_stage():
    st, bg, _ = normal_form_state("brinkmann_wave", 8, eps=0.1)
    k1 = rhs(st, bg)
    a = rk4_step(st, bg, 0.01)
    b = rk4_step(st, bg, 0.01, k1=k1)
    assert a.max_abs_diff(b) == 0


def test_evolution_stops_when_inadmissible():
    st, bg = minkowski()
    st.k[..., 1, 1] = -100.0
    res = evolve(st, bg, t_end=0.5, cfl=0.25)
    assert res.status == "inadmissible"
    assert admissibility(res.state.gbar)[0]


def test_inadmissible_start():
    st, bg = minkowski()
    st.gbar[..., 0, 0] = 0.5
    assert not admissibility(st.gbar)[0]
    assert evolve(st, bg, steps=2).status == "inadmissible"


def test_projection_of_V():
    st, _ = minkowski()
    prj = projection_data(st.gbar, st.alpha)
    assert np.allclose(prj.V[..., 0], 1.0) and np.allclose(prj.V[..., 1], -1.0)
    assert np.allclose(prj.u, 1.0)
    assert np.allclose(prj.N[..., 0], 1.0)
    st.alpha[..., 1] = 0.0
    with pytest.raises(EvolutionError):
        projection_data(st.gbar, st.alpha)


def test_projection_kills_V():
    st, _ = minkowski()
    A = np.random.default_rng(3).standard_normal(st.gbar.shape)
    st.gbar += 0.05 * (A + np.swapaxes(A, -1, -2))
    prj = projection_data(st.gbar, st.alpha)
    assert np.max(np.abs(np.einsum("...m,...mk->...k", prj.V, prj.pr))) < 1e-13


def test_time_step():
    st, _ = minkowski()
    dt, c = time_step(st, 0.25)
    assert c == char_speed(st.gbar) and dt == pytest.approx(0.25 * st.grid.spacing[0] / c)
    with pytest.raises(EvolutionError):
        time_step(st, 1.5)


def random_admissible_point(rng, st, scale=0.15):
    D = st.n + 1
    p = (0,) * st.n
    A = rng.standard_normal((D, D)) * scale
    st.gbar[p] = st.gbar[p] + (A + A.T) / 2
    a1 = np.array([-1.0, -1.0] + [0.0] * (D - 2)) + rng.standard_normal(D) * scale
    a1[0] = -abs(a1[0]) - 0.2
    st.alpha[p] = 0.0
    for m in range(D):
        st.alpha[p + (1 << m,)] = a1[m]
    return p


@given(hs.integers(0, 2 ** 32 - 1))
def test_symbol_is_symmetric_hyperbolic(seed):
    rng = np.random.default_rng(seed)
    st, _ = minkowski()
    p = random_admissible_point(rng, st)
    if not admissibility(st.gbar[p][None])[0]:
        return
    sm = symbol_matrices(st, p)
    assert sm.symmetry_defect < 1e-13
    assert sm.min_eig_A0 >= 0.5 * sm.bound
