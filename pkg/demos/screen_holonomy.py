"""
Screen bundle curvature and holonomy
====================================

On an exact pp-wave slice the screen connection sees only the fibre metric.
With a conformal factor ``h = exp(2f) delta`` the curvature has one
independent entry, ``-Delta f``; transported frames then rotate and the
holonomy algebra is so(2). A flat fibre gives a trivial holonomy.
"""

import numpy as np

from nullcauchy.constraint import get_family
from nullcauchy.grid import make_grid
from nullcauchy.initial_data import ppwave_state
from nullcauchy.screen import holonomy_span, screen_curvature, su_screen_test

J = np.array([[0.0, -1.0], [1.0, 0.0]])

for name, params in (("conformal_exp", dict(eps=0.1, conformal=0.2)), ("anisotropic_torus", dict(eps=0.1))):
    fam = get_family(name, 2, **params)
    print(name)
    for N in (12, 24):
        grid = make_grid(3, [N] * 3, [2 * np.pi] * 3)
        st, bg = ppwave_state(fam, grid, 0.0)
        RS, _ = screen_curvature(st, bg)
        su = np.max(np.abs(su_screen_test(st, bg, J)))
        print(f"  N={N:3d}  max |R(e2,e3)| {np.max(np.abs(RS[..., 2, 3, 0, 1])):.3f}, SU trace {su:.1e}")
    # the floor keeps O(dx^4) noise in the flat case from counting as rank
    hs = holonomy_span(st, bg, (0, 0, 0), stride=4, floor=1e-4)
    print(f"  holonomy: dimension {hs.dimension}, {hs.fingerprint}")
