import numpy as np
import pytest
from hypothesis import settings

from nullcauchy.constraint import build_normal_form, get_family, u_profile
from nullcauchy.grid import make_grid
from nullcauchy.initial_data import assemble_state

settings.register_profile("repo", max_examples=40, deadline=None)
settings.load_profile("repo")

TWO_PI = 2 * np.pi


def torus(dim, N):
    return make_grid(dim, [N] * dim, [TWO_PI] * dim)


def normal_form_state(family, N, dim=3, u=None, **params):
    grid = torus(dim, N)
    fam = get_family(family, dim - 1, **params)
    d = build_normal_form(u or u_profile(dim - 1), fam, grid)
    st, bg = assemble_state(d.g, d.U, d.W)
    return st, bg, d


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
