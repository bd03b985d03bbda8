"""
Initial data for the evolution system from normal-form data ``(g, U, W)``.

The evolved unknowns are the spacetime metric ``gbar``, copies of its spatial
derivatives ``dgbar[i] = d_i gbar``, ``k = d_t gbar``, a multivector ``alpha``
whose degree-1 part is the null 1-form ``V_flat``, and a spatial symmetric
tensor ``Z``.

The background metric is ``h = -lam_h^2 dt^2 + g`` with
``lam_h(t) = lam + t * lamdot``; with the default ``lamdot = 0`` it is static.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from .geometry import MetricField, christoffel_arrays, curvature, divergence, riemann_from_christoffel, rm_form
from .grid import Field, d1, einsum, pack_symmetric, unpack_symmetric

__all__ = [
    "InitialDataError",
    "CauchyState",
    "BackgroundMetric",
    "background_metric",
    "initial_Z",
    "k0_simple",
    "k0_general",
    "assemble_state",
    "AnalyticBackground",
    "spacetime_symbols",
    "ppwave_expr",
    "ppwave_state",
]


class InitialDataError(ValueError):
    pass


@dataclass
class CauchyState:
    """Evolved fields on one slice; all arrays are grid-first."""

    grid: object
    gbar: np.ndarray
    dgbar: np.ndarray
    k: np.ndarray
    alpha: np.ndarray
    Z: np.ndarray
    t: float = 0.0

    BLOCKS = ("gbar", "dgbar", "k", "alpha", "Z")

    @property
    def n(self):
        return self.grid.dim

    def blocks(self):
        return [getattr(self, b) for b in self.BLOCKS]

    def with_blocks(self, arrays, t=None):
        kw = dict(zip(self.BLOCKS, arrays))
        if t is not None:
            kw["t"] = t
        return replace(self, **kw)

    def copy(self):
        return self.with_blocks([a.copy() for a in self.blocks()])

    def metric(self, dtt=None, check=False):
        """``gbar`` as a spacetime :class:`MetricField` with ``d_t gbar = k``."""
        return MetricField(Field(self.grid, self.gbar, (2, 0), "spacetime", True),
                           dt=self.k, dtt=dtt, check=check)

    def max_abs_diff(self, other):
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.blocks(), other.blocks()))

    def to_file(self, path, meta=None):
        """JSON manifest line, then the blocks as little-endian float64.

        Symmetric blocks are packed to their upper triangles.
        """
        D = self.n + 1
        parts = [pack_symmetric(self.gbar, D), pack_symmetric(self.dgbar, D),
                 pack_symmetric(self.k, D), self.alpha, pack_symmetric(self.Z, self.n)]
        manifest = {
            "t": self.t,
            "dim": self.grid.dim,
            "sizes": list(self.grid.sizes),
            "lengths": list(self.grid.lengths),
            "blocks": [[name, list(p.shape[self.grid.dim:])] for name, p in zip(self.BLOCKS, parts)],
            "meta": meta or {},
        }
        with open(path, "wb") as fh:
            fh.write((json.dumps(manifest) + "\n").encode())
            for p in parts:
                fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())

    @classmethod
    def from_file(cls, path):
        from .grid import make_grid

        with open(path, "rb") as fh:
            man = json.loads(fh.readline().decode())
            raw = np.frombuffer(fh.read(), dtype="<f8")
        grid = make_grid(man["dim"], man["sizes"], man["lengths"])
        n = grid.dim
        out, pos = {}, 0
        for name, comp in man["blocks"]:
            size = grid.npoints * int(np.prod(comp))
            out[name] = raw[pos:pos + size].reshape(grid.shape + tuple(comp)).copy()
            pos += size
        D = n + 1
        return cls(grid, unpack_symmetric(out["gbar"], D), unpack_symmetric(out["dgbar"], D),
                   unpack_symmetric(out["k"], D), out["alpha"], unpack_symmetric(out["Z"], n), man["t"])


class BackgroundMetric:
    """``h = -lam_h^2 dt^2 + g`` with derivatives up to second order at any ``t``.

    Spatial derivatives are 4th-order differences, second derivatives are
    nested differences; time dependence enters only through ``lam_h``.
    """

    def __init__(self, lam, g, lamdot=None):
        self.grid = g.grid
        n = self.grid.dim
        self.lam = np.asarray(lam, dtype=float) * np.ones(self.grid.shape)
        if np.any(self.lam <= 0):
            raise InitialDataError("lapse must be positive")
        self.lamdot = np.zeros(self.grid.shape) if lamdot is None else np.asarray(lamdot, dtype=float) * np.ones(self.grid.shape)
        self.g = g.g
        sp_ = self.grid.spacing
        grad = lambda a: np.stack([d1(a, i, sp_[i]) for i in range(n)], n)
        self.dlam, self.dlamdot = grad(self.lam), grad(self.lamdot)
        self.ddlam, self.ddlamdot = grad(self.dlam), grad(self.dlamdot)
        self.dgs = grad(self.g)
        self.ddgs = grad(self.dgs)
        self._cache = {}

    @property
    def n(self):
        return self.grid.dim

    def lapse(self, t=0.0):
        return self.lam + t * self.lamdot

    def components(self, t=0.0):
        """``(h, dh, ddh)`` with ``dh[c, a, b] = d_c h_ab`` and ``ddh[c, e, a, b]``."""
        n, D = self.n, self.n + 1
        L = self.lapse(t)
        dL = self.dlam + t * self.dlamdot
        ddL = self.ddlam + t * self.ddlamdot
        ld = self.lamdot
        shp = self.grid.shape
        h = np.zeros(shp + (D, D))
        h[..., 0, 0] = -L ** 2
        h[..., 1:, 1:] = self.g
        dh = np.zeros(shp + (D, D, D))
        dh[..., 0, 0, 0] = -2 * L * ld
        dh[..., 1:, 0, 0] = -2 * L[..., None] * dL
        dh[..., 1:, 1:, 1:] = self.dgs
        ddh = np.zeros(shp + (D, D, D, D))
        ddh[..., 0, 0, 0, 0] = -2 * ld ** 2
        mix = -2 * (dL * ld[..., None] + L[..., None] * self.dlamdot)
        ddh[..., 0, 1:, 0, 0] = mix
        ddh[..., 1:, 0, 0, 0] = mix
        ddh[..., 1:, 1:, 0, 0] = -2 * (dL[..., :, None] * dL[..., None, :] + L[..., None, None] * ddL)
        ddh[..., 1:, 1:, 1:, 1:] = self.ddgs
        return h, dh, ddh

    def christoffel(self, t=0.0):
        """``(Gamma~, dGamma~)`` with ``dGamma~[c, m, a, b] = d_c Gamma~^m_ab``."""
        key = float(t) if np.any(self.lamdot) else 0.0
        if key in self._cache:
            return self._cache[key]
        out = _christoffel_from_components(*self.components(t))
        if len(self._cache) > 3:
            self._cache.clear()
        self._cache[key] = out
        return out

    def metric(self, t=0.0):
        h, dh, _ = self.components(t)
        return MetricField(Field(self.grid, h, (2, 0), "spacetime", True), dt=dh[..., 0, :, :])


def _christoffel_from_components(h, dh, ddh):
    hinv = np.linalg.inv(h)
    low, gam = christoffel_arrays(hinv, dh)
    # d_c low[r, a, b] = 1/2 (dd_{c a} h_rb + dd_{c b} h_ra - dd_{c r} h_ab)
    dlow = 0.5 * (einsum("...carb->...crab", ddh) + einsum("...cbra->...crab", ddh) - ddh)
    dhinv = -einsum("...mr,...crs,...sn->...cmn", hinv, dh, hinv)
    dgam = einsum("...cmr,...rab->...cmab", dhinv, low) + einsum("...mr,...crab->...cmab", hinv, dlow)
    return gam, dgam


class AnalyticBackground:
    """Background metric given in closed form as a sympy matrix in ``(t, s, x1, ...)``.

    All derivatives are exact.  Used with an exact solution as background so
    that the solution itself satisfies ``E = 0``.
    """

    def __init__(self, grid, expr):
        import sympy as sp

        self.grid = grid
        D = grid.dim + 1
        expr = sp.Matrix(expr)
        if expr.shape != (D, D):
            raise InitialDataError(f"background must be {D}x{D}, got {expr.shape}")
        self.syms = spacetime_symbols(grid.dim)
        self.expr = expr
        f = lambda e: sp.lambdify(self.syms, e, "numpy")
        self._h = [[f(expr[a, b]) for b in range(D)] for a in range(D)]
        self._dh = [[[f(expr[a, b].diff(x)) for b in range(D)] for a in range(D)] for x in self.syms]
        self._ddh = [[[[f(expr[a, b].diff(x).diff(y)) for b in range(D)] for a in range(D)]
                      for y in self.syms] for x in self.syms]
        self._cache = {}

    @property
    def n(self):
        return self.grid.dim

    def _eval(self, table, t):
        c = self.grid.coords()
        tt = np.full(self.grid.shape, float(t))
        arr = np.array(table, dtype=object)
        out = np.empty(self.grid.shape + arr.shape)
        for idx in np.ndindex(arr.shape):
            out[(...,) + idx] = arr[idx](tt, *c)
        return out

    def components(self, t=0.0):
        return self._eval(self._h, t), self._eval(self._dh, t), self._eval(self._ddh, t)

    def christoffel(self, t=0.0):
        key = float(t)
        if key not in self._cache:
            if len(self._cache) > 3:
                self._cache.clear()
            self._cache[key] = _christoffel_from_components(*self.components(t))
        return self._cache[key]

    def metric(self, t=0.0):
        h, dh, _ = self.components(t)
        return MetricField(Field(self.grid, h, (2, 0), "spacetime", True), dt=dh[..., 0, :, :])

    def ricci(self, t=0.0):
        """Exact Ricci tensor ``R^a_{bad}`` of the background at time ``t``."""
        gam, dgam = self.christoffel(t)
        return einsum("...abad->...bd", riemann_from_christoffel(gam, dgam))


def spacetime_symbols(n):
    """Sympy symbols ``(t, s, x1, ..., x_{n-1})`` matching the grid axes."""
    import sympy as sp

    from .constraint import S, fibre_symbols

    return (sp.Symbol("t", real=True), S) + tuple(fibre_symbols(n - 1))


def ppwave_expr(fam):
    """``-dt^2 + ds^2 + h_{t+s}`` for a fibre family with a closed form."""
    import sympy as sp

    from .constraint import S

    if fam.expr is None:
        raise InitialDataError(f"family {fam.name!r} has no closed form")
    m = fam.m
    T = spacetime_symbols(m + 1)[0]
    G = sp.zeros(m + 2, m + 2)
    G[0, 0] = -1
    G[1, 1] = 1
    G[2:, 2:] = fam.expr.subs(S, S + T)
    return G


def ppwave_state(fam, grid, t=0.0):
    """Exact state of the plane wave ``-dt^2 + ds^2 + h_{t+s}`` at time ``t``.

    ``alpha = -dt - ds`` so ``V = d_t - d_s``; ``Z`` is the spatial block of
    the exact Ricci tensor.  For a fibre family without ``x`` dependence
    this is ``rho(w) dw^2`` with ``w = t + s`` and
    ``rho = -tr(h^-1 hddot) / 2 + tr((h^-1 hdot)^2) / 4``.
    """
    bg = AnalyticBackground(grid, ppwave_expr(fam))
    h, dh, ddh = bg.components(t)
    D = grid.dim + 1
    Z = bg.ricci(t)[..., 1:, 1:].copy()
    alpha = np.zeros(grid.shape + (1 << D,))
    alpha[..., 1] = -1.0
    alpha[..., 2] = -1.0
    st = CauchyState(grid, h, dh[..., 1:, :, :].copy(), dh[..., 0, :, :].copy(),
                     alpha, Z, float(t))
    return st, bg


def background_metric(lam, g, lamdot=None):
    return BackgroundMetric(lam, g, lamdot)


def _trace_W(g, W):
    Wup = einsum("...ab,...bc->...ac", g.inv, W)
    return Wup, np.trace(Wup, axis1=-2, axis2=-1)


def initial_Z(g, U, W, curv=None):
    """``Z`` on the slice from ``(g, U, W)`` and the curvature of ``g``.

    Along ``N = U / u``: ``Z(N, .) = d trW + delta W``.  On ``N``-orthogonal
    vectors::

        Z(X, Y) = Ric(X, Y) - Rm(X, N, N, Y) - W^2(X, Y) + trW W(X, Y)
                  + W(X, N) W(Y, N) - W(N, N) W(X, Y)
    """
    curv = curv or curvature(g)
    Ud = U.data
    u = np.sqrt(einsum("...a,...ab,...b->...", Ud, g.g, Ud))
    if np.any(u < 1e-8):
        raise InitialDataError("u vanishes: the N decomposition degenerates")
    N = Ud / u[..., None]
    Nf = einsum("...ab,...b->...a", g.g, N)
    Wd = W.data
    Wup, trW = _trace_W(g, Wd)
    nd = g.grid.dim
    a = divergence(W, g).data + np.moveaxis(g.deriv(trW), nd, -1)
    WN = einsum("...ab,...b->...a", Wd, N)
    B = (curv.ricci.data
         - einsum("...xaby,...a,...b->...xy", rm_form(curv), N, N)
         - einsum("...ab,...bc->...ac", Wd, Wup)
         + trW[..., None, None] * Wd
         + WN[..., :, None] * WN[..., None, :]
         - einsum("...a,...a->...", WN, N)[..., None, None] * Wd)
    n = g.m
    Pi = np.eye(n) - N[..., :, None] * Nf[..., None, :]
    Bperp = einsum("...ax,...by,...ab->...xy", Pi, Pi, B)
    aN = einsum("...a,...a->...", a, N)
    Z = Bperp + Nf[..., :, None] * a[..., None, :] + a[..., :, None] * Nf[..., None, :] \
        - aN[..., None, None] * Nf[..., :, None] * Nf[..., None, :]
    return Field(g.grid, Z, (2, 0), symmetric=True)


def k0_simple(lam, lamdot, trW):
    """``(k_00, k_0i)`` at ``t = 0`` when ``gbar = h`` on the slice.

    ``k_00 = -2 lam lamdot + 2 lam^3 trW`` makes ``E_0`` vanish for the
    background ``lam_h = lam + t lamdot``; ``k_0i = 0``.
    """
    k00 = -2 * lam * lamdot + 2 * lam ** 3 * trW
    return k00, np.zeros(np.shape(k00) + (0,))


def k0_general(g, W, lam, F):
    """``(k_00, k_0i)`` making ``E`` vanish at ``t = 0`` for a general gauge source ``F``.

    Uses ``k_00 = 2 lam^2 (lam trW - F_0)`` and
    ``k_0i = lam^2 (Gamma_i[g] - F_i - d_i log lam)`` with
    ``Gamma_i[g] = g_ij g^ab Gamma^j_ab``.
    """
    _, trW = _trace_W(g, W.data)
    nd = g.grid.dim
    _, gam = christoffel_arrays(g.inv, g.dg())
    Gam = einsum("...ij,...ab,...jab->...i", g.g, g.inv, gam)
    dlog = np.moveaxis(g.deriv(np.log(lam)), nd, -1)
    k00 = 2 * lam ** 2 * (lam * trW - F[..., 0])
    k0i = lam[..., None] ** 2 * (Gam - F[..., 1:] - dlog)
    return k00, k0i


def assemble_state(g, U, W, lam=1.0, lamdot=0.0, Z=None, background=None):
    """Initial :class:`CauchyState` and its background metric.

    By default the background is ``-lam_h^2 dt^2 + g``.  Another background
    (for instance an :class:`AnalyticBackground`) can be passed; ``k_0mu``
    is then chosen by :func:`k0_general` so that ``E = 0`` at ``t = 0``.
    """
    grid = g.grid
    n, D = grid.dim, grid.dim + 1
    bg = BackgroundMetric(lam, g, lamdot)
    lam = bg.lam
    h, dh, _ = bg.components(0.0)
    _, trW = _trace_W(g, W.data)
    k = np.zeros(grid.shape + (D, D))
    k[..., 1:, 1:] = -2 * lam[..., None, None] * W.data
    if background is None:
        k[..., 0, 0] = k0_simple(lam, bg.lamdot, trW)[0]
    else:
        gtil, _ = background.christoffel(0.0)
        F = einsum("...nm,...ab,...mab->...n", h, np.linalg.inv(h), gtil)
        k00, k0i = k0_general(g, W, lam, F)
        k[..., 0, 0] = k00
        k[..., 0, 1:] = k0i
        k[..., 1:, 0] = k0i
        bg = background
    Ud = U.data
    u = np.sqrt(einsum("...a,...ab,...b->...", Ud, g.g, Ud))
    K = 1 << D
    alpha = np.zeros(grid.shape + (K,))
    alpha[..., 1] = -lam * u
    Uf = einsum("...ab,...b->...a", g.g, Ud)
    for i in range(n):
        alpha[..., 1 << (i + 1)] = -Uf[..., i]
    if Z is None:
        Z = initial_Z(g, U, W).data
    st = CauchyState(grid, h, dh[..., 1:, :, :].copy(), k, alpha,
                     np.asarray(Z, dtype=float), 0.0)
    return st, bg

