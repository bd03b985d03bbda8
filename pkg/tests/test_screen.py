import numpy as np
import pytest

from nullcauchy.constraint import get_family
from nullcauchy.grid import make_grid
from nullcauchy.initial_data import ppwave_state
from nullcauchy.screen import ScreenError, holonomy_span, loop_transport, screen_covariant_derivative, \
    screen_curvature, screen_frame, screen_projector, su_screen_test

from conftest import normal_form_state, torus

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def curved(N, conformal=0.2):
    fam = get_family("conformal_exp", 2, eps=0.1, conformal=conformal)
    return ppwave_state(fam, torus(3, N), 0.0)


def minus_laplace_f(grid, amp=0.2):
    _, x1, x2 = grid.coords()
    return amp * (np.sin(x1) + 0.5 * np.cos(x2))


def test_projector_and_frame():
    st, _ = curved(8)
    P = screen_projector(st)
    assert np.max(np.abs(P @ P - P)) < 1e-12
    fr = screen_frame(st)
    g = st.gbar
    for vec in (fr.T, fr.V, fr.Nprime):
        assert np.max(np.abs(np.einsum("...ab,...b->...a", P, vec))) < 1e-12
    gram = np.einsum("...ai,...ij,...bj->...ab", fr.sigma, g, fr.sigma)
    assert np.max(np.abs(gram - np.eye(2))) < 1e-12
    assert np.max(np.abs(np.einsum("...ai,...ij,...j->...a", fr.sigma, g, fr.V))) < 1e-12


def test_screen_curvature_matches_fibre_oracle():
    errs = []
    for N in (12, 24):
        st, bg = curved(N)
        RS, _ = screen_curvature(st, bg)
        # R(d1, d2) on the screen is rotation by the Gauss curvature term, up to frame orientation
        errs.append(np.max(np.abs(np.abs(RS[..., 2, 3, 0, 1]) - np.abs(minus_laplace_f(st.grid)))))
        assert np.max(np.abs(RS + np.swapaxes(RS, -1, -2))) < 1e-12
    assert errs[1] < errs[0] / 10


def test_loop_transport_approximates_curvature():
    st, bg = curved(24)
    RS, _ = screen_curvature(st, bg)
    O, A = loop_transport(st, (0, 4, 6), (1, 2), size=1)
    assert np.max(np.abs(O.T @ O - np.eye(2))) < 1e-6
    # compare with the curvature at the centre of the loop
    pred = np.eye(2) - A * RS[0, 5, 7, 2, 3]
    assert np.max(np.abs(O - pred)) < 0.05 * np.max(np.abs(A * RS[0, 5, 7, 2, 3]))


def test_holonomy_span_curved_flat_and_minkowski():
    st, bg = curved(12)
    hs = holonomy_span(st, bg, (0, 0, 0), stride=5)
    assert hs.dimension == 1 and hs.fingerprint == "so(2)"
    st, bg, _ = normal_form_state("flat_static", 8)
    assert holonomy_span(st, bg, (0, 0, 0), stride=3).dimension == 0
    st, bg = ppwave_state(get_family("anisotropic_torus", 2, eps=0.1), torus(3, 12), 0.0)
    hs = holonomy_span(st, bg, (0, 0, 0), stride=5, floor=1e-3)
    assert hs.dimension == 0 and hs.fingerprint == "trivial"
    assert hs.to_json()["dimension"] == 0


def test_su_trace_flat_versus_conformal():
    flat = [np.max(np.abs(su_screen_test(*ppwave_state(get_family("anisotropic_torus", 2, eps=0.1),
                                                         torus(3, N), 0.0), J2))) for N in (12, 24)]
    assert flat[1] < flat[0] / 10
    st, bg = curved(12)
    assert np.max(np.abs(su_screen_test(st, bg, J2))) > 1000 * flat[1]


def test_covariant_derivative_stays_in_screen():
    defects = []
    for N in (12, 24):
        st, _ = curved(N)
        fr = screen_frame(st)
        _, d = screen_covariant_derivative(fr.sigma[..., 0, :], st)
        defects.append(d)
    assert defects[1] < defects[0] / 10


def test_errors():
    st, bg = ppwave_state(get_family("flat_static", 2), make_grid(3, [9, 8, 8], [2 * np.pi] * 3), 0.0)
    with pytest.raises(ScreenError):
        holonomy_span(st, bg, (0, 0, 0))
    st.alpha[..., 1] = 1.0
    with pytest.raises(ScreenError):
        screen_frame(st)
