"""
Riemannian initial data in normal form and the constraint ``nabla U + u W = 0``.

Data live on ``M = S^1_s x F`` with ``s`` along grid axis 0 and the fibre
``F = T^m`` on the remaining axes::

    g = u^{-2} ds^2 + h_s,    U = u^2 d_s,
    W_ss = -u_s / u^2,   W_sx = -d_x u / u^2,   W_xy = -(u / 2) hdot_xy.

Metric families ``s -> h_s`` come either from closed-form expressions (sympy,
so ``hdot`` is exact) or from samples in ``s`` differentiated to 4th order.
"""

from dataclasses import dataclass

import numpy as np
import sympy as sp

from .geometry import MetricField, covariant_derivative
from .grid import Field, d1, einsum

__all__ = [
    "ConstraintError",
    "MetricFamily",
    "UProfile",
    "NormalFormData",
    "family_from_expr",
    "sampled_family",
    "registry",
    "get_family",
    "u_profile",
    "build_normal_form",
    "constraint_residual",
    "constraint_identities",
    "completeness_check",
    "Verdict",
]


class ConstraintError(ValueError):
    pass


S = sp.Symbol("s", real=True)


def fibre_symbols(m):
    return sp.symbols(f"x1:{m + 1}", real=True) if m else ()


class MetricFamily:
    """``s -> h_s`` on a fibre of dimension ``m``.

    ``evaluate(s, x)`` returns ``(h, hdot)`` with trailing shape ``(m, m)``;
    ``x`` is a tuple of ``m`` fibre coordinate arrays (ignored by families
    that do not depend on the fibre point).
    """

    def __init__(self, name, m, h, hdot, hddot=None, provenance="closed_form", expr=None):
        self.name = name
        self.m = m
        self._h = h
        self._hdot = hdot
        self._hddot = hddot
        self.provenance = provenance
        self.expr = expr

    def _call(self, fn, s, x):
        s = np.asarray(s, dtype=float)
        if x is None:
            x = tuple(np.zeros_like(s) for _ in range(self.m))
        shape = np.broadcast(s, *x).shape if x else s.shape
        out = np.empty(shape + (self.m, self.m))
        for i in range(self.m):
            for j in range(self.m):
                out[..., i, j] = np.broadcast_to(fn[i][j](s, *x), shape)
        return out

    def h(self, s, x=None):
        return self._call(self._h, s, x)

    def hdot(self, s, x=None):
        return self._call(self._hdot, s, x)

    def hddot(self, s, x=None):
        if self._hddot is None:
            raise ConstraintError(f"family {self.name!r} has no second derivative")
        return self._call(self._hddot, s, x)

    def evaluate(self, s, x=None):
        h = self.h(s, x)
        if np.any(np.linalg.eigvalsh(h)[..., 0] <= 0):
            raise ConstraintError(f"family {self.name!r} is not positive definite")
        return h, self.hdot(s, x)


def family_from_expr(name, hmat):
    """Closed-form family from a sympy matrix in ``s`` and ``x1..xm``."""
    hmat = sp.Matrix(hmat)
    m = hmat.shape[0]
    args = (S,) + tuple(fibre_symbols(m))

    def lam(M):
        return [[sp.lambdify(args, M[i, j], "numpy") for j in range(m)] for i in range(m)]

    d1m = hmat.diff(S)
    return MetricFamily(name, m, lam(hmat), lam(d1m), lam(d1m.diff(S)), "closed_form", hmat)


def sampled_family(name, s_values, h_samples):
    """Family from samples on a uniform periodic ``s`` grid; ``hdot`` by 4th-order FD.

    Evaluation is only defined at the sample points.
    """
    s_values = np.asarray(s_values, dtype=float)
    h_samples = np.asarray(h_samples, dtype=float)
    ds = s_values[1] - s_values[0]
    hd = d1(h_samples, 0, ds)
    hdd = d1(hd, 0, ds)
    m = h_samples.shape[-1]

    def lookup(arr):
        def f(s, *x):
            idx = np.rint((np.asarray(s) - s_values[0]) / ds).astype(int) % len(s_values)
            return arr[idx]
        return f

    def table(arr):
        return [[lookup(arr[..., i, j]) for j in range(m)] for i in range(m)]

    return MetricFamily(name, m, table(h_samples), table(hd), table(hdd), "sampled")


def _registry_exprs(m, params):
    x = fibre_symbols(m)
    eye = sp.eye(m)
    eps = sp.nsimplify(params.get("eps", 0.1))
    if m == 0:
        return {k: sp.zeros(0, 0) for k in ("flat_static", "conformal_exp", "anisotropic_torus", "brinkmann_wave")}
    amp = sp.nsimplify(params.get("conformal", 0))
    f = amp * (sp.sin(x[0]) + (sp.cos(x[1]) / 2 if m > 1 else 0))
    # volume preserving in pairs of axes; a single axis is simply stretched
    aniso = sp.diag(*[sp.exp(2 * eps * sp.sin(S) * (1 if i % 2 == 0 else -1)) if (i < m - m % 2 or m == 1) else 1
                      for i in range(m)])
    return {
        "flat_static": eye,
        "conformal_exp": sp.exp(2 * eps * sp.sin(S)) * sp.exp(2 * f) * eye,
        "anisotropic_torus": aniso,
        "brinkmann_wave": (1 + eps * sp.sin(S)) * sp.exp(2 * f) * eye,
    }


registry = ("flat_static", "conformal_exp", "anisotropic_torus", "brinkmann_wave")


def get_family(name, m, **params):
    """Registry family on a fibre ``T^m``.

    ``eps`` sets the amplitude of the ``s`` dependence; ``conformal`` adds a
    fibre-dependent conformal factor ``exp(2 f(x))``.
    """
    if name not in registry:
        raise ConstraintError(f"unknown family {name!r}; known: {', '.join(registry)}")
    return family_from_expr(name, _registry_exprs(m, params)[name])


@dataclass
class UProfile:
    """Positive function ``u(s, x)`` with closed-form first derivatives."""

    expr: object
    m: int

    def __post_init__(self):
        args = (S,) + tuple(fibre_symbols(self.m))
        self._f = sp.lambdify(args, self.expr, "numpy")
        self._df = [sp.lambdify(args, sp.diff(self.expr, a), "numpy") for a in args]

    def value(self, coords):
        c = coords
        return np.broadcast_to(self._f(*c), c[0].shape).astype(float)

    def grad(self, coords):
        return np.stack([np.broadcast_to(f(*coords), coords[0].shape).astype(float) for f in self._df], -1)


def u_profile(m, kind="const", a=0.1, b=0.0):
    """``u = 1``, or ``u = 1 + a sin s + b sin s cos x1`` for ``kind="warp"``."""
    if kind == "const":
        return UProfile(sp.Integer(1), m)
    if kind == "warp":
        x = fibre_symbols(m)
        expr = 1 + sp.nsimplify(a) * sp.sin(S)
        if m:
            expr += sp.nsimplify(b) * sp.sin(S) * sp.cos(x[0])
        return UProfile(expr, m)
    raise ConstraintError(f"unknown u profile {kind!r}")


@dataclass
class NormalFormData:
    grid: object
    u: np.ndarray
    family: MetricFamily
    g: MetricField
    U: Field
    W: Field
    h: np.ndarray
    hdot: np.ndarray


def build_normal_form(u, fam, grid):
    """Assemble ``(g, U, W)`` on ``grid``.

    ``u`` is a :class:`UProfile` (exact derivatives) or an array / Field of
    values (derivatives by finite differences).
    """
    coords = grid.coords()
    s, x = coords[0], tuple(coords[1:])
    if fam.m != grid.dim - 1:
        raise ConstraintError(f"family on T^{fam.m} does not fit a {grid.dim}-d grid")
    if isinstance(u, UProfile):
        uval = u.value(coords)
        du = u.grad(coords)
    else:
        uval = np.asarray(u.data if isinstance(u, Field) else u, dtype=float) * np.ones(grid.shape)
        du = np.stack([d1(uval, a, grid.spacing[a]) for a in range(grid.dim)], -1)
    if np.any(uval <= 0):
        raise ConstraintError("u must be positive")
    h, hdot = fam.evaluate(s, x)
    n = grid.dim
    g = np.zeros(grid.shape + (n, n))
    g[..., 0, 0] = uval ** -2
    g[..., 1:, 1:] = h
    W = np.zeros_like(g)
    W[..., 0, 0] = -du[..., 0] / uval ** 2
    W[..., 0, 1:] = -du[..., 1:] / uval[..., None] ** 2
    W[..., 1:, 0] = W[..., 0, 1:]
    W[..., 1:, 1:] = -0.5 * uval[..., None, None] * hdot
    U = np.zeros(grid.shape + (n,))
    U[..., 0] = uval ** 2
    return NormalFormData(
        grid, uval, fam,
        MetricField(Field(grid, g, (2, 0), symmetric=True)),
        Field(grid, U, (0, 1)),
        Field(grid, W, (2, 0), symmetric=True),
        h, hdot,
    )


def constraint_residual(g, U, W):
    """``nabla U_flat + u W`` with ``u = sqrt(g(U, U))``; derivative index first."""
    Ud = U.data
    uu = einsum("...a,...ab,...b->...", Ud, g.g, Ud)
    if np.any(uu <= 0):
        bad = np.argwhere(uu <= 0)[0]
        raise ConstraintError(f"U vanishes at point index {tuple(bad)}")
    Uflat = Field(g.grid, einsum("...ab,...b->...a", g.g, Ud), (1, 0))
    nab = covariant_derivative(Uflat, g).data
    return Field(g.grid, nab + np.sqrt(uu)[..., None, None] * W.data, (2, 0))


def constraint_identities(data):
    """Residuals of ``du_i = -u N^k W_ik`` and ``nabla_i N_j = N^k W_ki N_j - W_ij``."""
    g = data.g
    u = data.u
    N = data.U.data / u[..., None]
    Nflat = einsum("...ab,...b->...a", g.g, N)
    du = np.stack([d1(u, a, data.grid.spacing[a]) for a in range(data.grid.dim)], -1)
    WN = einsum("...k,...ik->...i", N, data.W.data)
    res_du = du + u[..., None] * WN
    nabN = covariant_derivative(Field(g.grid, Nflat, (1, 0)), g).data
    res_dN = nabN - (WN[..., :, None] * Nflat[..., None, :] - data.W.data)
    return Field(g.grid, res_du, (1, 0)), Field(g.grid, res_dN, (2, 0))


@dataclass
class Verdict:
    verdict: str
    reason: str
    bound: float = None


def completeness_check(u, fiber_compact, interval, u_bounded=True):
    """Sufficient test for completeness of ``u^{-2} ds^2 + h_s``.

    ``interval`` is ``"R"``, ``"S1"`` or anything else (treated as a proper
    interval).  The test never concludes incompleteness.
    """
    uval = np.asarray(u.data if isinstance(u, Field) else u, dtype=float)
    if not fiber_compact:
        return Verdict("inconclusive", "fibre not compact")
    if interval == "S1":
        return Verdict("complete", "compact manifold S^1 x F")
    if interval != "R":
        return Verdict("inconclusive", f"base interval {interval!r} is not R or S^1")
    bound = float(np.max(uval)) if uval.size else float("inf")
    if not u_bounded or not np.isfinite(bound) or np.any(uval <= 0):
        return Verdict("inconclusive", "u is not a bounded positive function")
    return Verdict("complete", "compact fibre and bounded positive u", bound)
