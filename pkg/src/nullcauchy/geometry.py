"""
Coordinate tensor calculus on periodic grids.

Metrics may be spatial (components over the grid axes) or spacetime
(components over ``t`` plus the grid axes).  A spacetime metric lives on one
time slice; its time derivatives cannot be taken by finite differences, so
they are supplied explicitly as ``dt`` (first) and ``dtt`` (second).

Conventions
-----------
* ``R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb} + Gamma^a_{ce} Gamma^e_{db}
  - Gamma^a_{de} Gamma^e_{cb}``; ``R_{abcd} = g_{ae} R^e_{bcd}`` and
  ``Ric_{bd} = R^a_{bad}``.
* The four-slot form ``Rm(X, Y, Z, L) = g(R(X, Y) Z, L)`` equals
  ``-R_{XYZL}``; see :func:`rm_form`.  With it the round sphere has
  ``Rm(X, Y, Y, X) > 0``.
* Divergence carries a minus sign: ``(delta B)_b = -g^{ac} nabla_a B_{cb}``,
  so that ``delta d f = -Laplacian f``.  Many references use the opposite sign.

Examples
--------
>>> import numpy as np
>>> from nullcauchy.grid import make_grid, Field
>>> grid = make_grid(1, [32], [2 * np.pi])
>>> x, = grid.coords()
>>> g = MetricField(Field(grid, np.ones((32, 1, 1)), (2, 0), symmetric=True))
>>> df = Field(grid, np.cos(x)[:, None], (1, 0))
>>> bool(np.allclose(divergence(df, g).data, np.sin(x), atol=1e-4))
True
"""

from dataclasses import dataclass

import numpy as np

from .grid import Field, d1, einsum

__all__ = [
    "GeometryError",
    "MetricField",
    "CurvatureBundle",
    "christoffel_arrays",
    "riemann_from_christoffel",
    "algebraic_projection",
    "christoffel",
    "curvature",
    "rm_form",
    "covariant_derivative",
    "divergence",
    "gauss_codazzi_residual",
]


class GeometryError(ValueError):
    pass


class MetricField:
    """A metric sampled on a grid, with cached inverse.

    Parameters
    ----------
    g : Field
        Valence (2, 0), symmetric components.
    signature : {"riemannian", "lorentzian"}, optional
        Defaults by ambient: spatial metrics are Riemannian, spacetime
        metrics Lorentzian with signature ``(-, +, ..., +)``.
    dt, dtt : ndarray, optional
        First and second time derivatives of the components (spacetime only).
        Missing derivatives are taken to be zero.
    """

    def __init__(self, g, signature=None, dt=None, dtt=None, check=True):
        self.field = g
        self.grid = g.grid
        comp = g.components
        if len(comp) != 2 or comp[0] != comp[1]:
            raise GeometryError(f"metric needs square component shape, got {comp}")
        self.m = comp[0]
        n = self.grid.dim
        if self.m == n:
            self.ambient = "spatial"
        elif self.m == n + 1:
            self.ambient = "spacetime"
        else:
            raise GeometryError(f"{self.m} components do not fit a {n}-d grid")
        self.signature = signature or ("riemannian" if self.ambient == "spatial" else "lorentzian")
        self.g = g.data
        self.dt = np.zeros_like(self.g) if dt is None else np.asarray(dt, dtype=float)
        self.dtt = np.zeros_like(self.g) if dtt is None else np.asarray(dtt, dtype=float)
        if check:
            self._check()
        self.inv = np.linalg.inv(self.g)

    def _check(self):
        asym = np.max(np.abs(self.g - np.swapaxes(self.g, -1, -2)))
        if asym > 1e-12 * max(1.0, np.max(np.abs(self.g))):
            raise GeometryError(f"metric not symmetric (defect {asym:.2e})")
        det = np.linalg.det(self.g)
        bad = np.argwhere(np.abs(det) < 1e-14)
        if len(bad):
            raise GeometryError(f"singular metric at point index {tuple(bad[0])}")
        ev = np.linalg.eigvalsh(self.g)
        if self.signature == "riemannian":
            bad = np.argwhere(ev[..., 0] <= 0)
        else:
            bad = np.argwhere((ev[..., 0] >= 0) | (ev[..., 1] <= 0))
        if len(bad):
            raise GeometryError(f"{self.signature} signature violated at point index {tuple(bad[0])}")

    @property
    def offset(self):
        """1 for spacetime metrics: grid axis ``a`` is component ``a + 1``."""
        return self.m - self.grid.dim

    def deriv(self, arr, time_part=None):
        """Stack ``d_c arr`` over ambient ``c`` as the first component axis."""
        parts = []
        if self.offset:
            parts.append(np.zeros_like(arr) if time_part is None else time_part)
        parts += [d1(arr, a, self.grid.spacing[a]) for a in range(self.grid.dim)]
        return np.stack(parts, axis=self.grid.dim)

    def dg(self):
        """``dg[..., c, a, b] = d_c g_ab``."""
        return self.deriv(self.g, self.dt)


@dataclass
class CurvatureBundle:
    riemann: Field
    ricci: Field
    scal: Field
    einstein: Field
    mixed: np.ndarray


def christoffel_arrays(ginv, dg):
    """Lowered ``Gamma_{r,ab}`` and raised ``Gamma^m_{ab}`` from ``dg[..., c, a, b]``."""
    low = 0.5 * (np.swapaxes(dg, -3, -2) + np.swapaxes(np.swapaxes(dg, -3, -2), -2, -1) - dg)
    # low[r, a, b] = 1/2 (d_a g_rb + d_b g_ra - d_r g_ab)
    D = ginv.shape[-1]
    return low, np.matmul(ginv, low.reshape(low.shape[:-2] + (D * D,))).reshape(low.shape)


def _christoffel_dt(ginv, dt, low, dlow_t):
    dinv = -einsum("...ar,...rs,...sb->...ab", ginv, dt, ginv)
    return einsum("...mr,...rab->...mab", dinv, low) + einsum("...mr,...rab->...mab", ginv, dlow_t)


def riemann_from_christoffel(gam, dgam):
    """``R^a_{bcd}`` from ``gam[..., a, b, c]`` and ``dgam[..., e, a, b, c] = d_e Gamma^a_{bc}``."""
    r = einsum("...cadb->...abcd", dgam)
    r = r - np.swapaxes(r, -1, -2)
    quad = einsum("...ace,...edb->...abcd", gam, gam)
    return r + quad - np.swapaxes(quad, -1, -2)


def algebraic_projection(r):
    """Project onto tensors with the algebraic symmetries of a curvature tensor.

    Differencing Γ a second time breaks pair symmetry and the first Bianchi
    identity at truncation order; the exact tensor is a fixed point, so the
    projection costs no accuracy.
    """
    r = 0.5 * (r - np.swapaxes(r, -1, -2))
    r = 0.5 * (r - np.swapaxes(r, -3, -4))
    r = 0.5 * (r + einsum("...abcd->...cdab", r))
    cyc = (r + einsum("...abcd->...acdb", r) + einsum("...abcd->...adbc", r)) / 3.0
    return r - cyc


def _gamma_with_derivs(mf):
    dg = mf.dg()
    low, gam = christoffel_arrays(mf.inv, dg)
    parts = []
    if mf.offset:
        # d_t d_c g: c = t from dtt, spatial c by differencing dt
        ddg = mf.deriv(mf.dt, mf.dtt)
        dlow = 0.5 * (np.swapaxes(ddg, -3, -2) + np.swapaxes(np.swapaxes(ddg, -3, -2), -2, -1) - ddg)
        parts.append(_christoffel_dt(mf.inv, mf.dt, low, dlow))
    parts += [d1(gam, a, mf.grid.spacing[a]) for a in range(mf.grid.dim)]
    return gam, np.stack(parts, axis=mf.grid.dim)


def christoffel(g):
    """Christoffel symbols ``Gamma^m_{ab}`` as a Field with layout ``(m, a, b)``."""
    _, gam = christoffel_arrays(g.inv, g.dg())
    return Field(g.grid, gam, (2, 1), g.ambient, kinds="ull")


def curvature(g):
    """Riemann, Ricci, scalar and Einstein tensors; Γ is differenced again for ``dΓ``."""
    gam, dgam = _gamma_with_derivs(g)
    riem = algebraic_projection(einsum("...ae,...ebcd->...abcd", g.g,
                                          riemann_from_christoffel(gam, dgam)))
    mixed = einsum("...ae,...ebcd->...abcd", g.inv, riem)
    ric = einsum("...abad->...bd", mixed)
    scal = einsum("...ab,...ab->...", g.inv, ric)
    ein = ric - 0.5 * scal[..., None, None] * g.g
    G = g.grid
    return CurvatureBundle(
        Field(G, riem, (4, 0), g.ambient),
        Field(G, ric, (2, 0), g.ambient, symmetric=True),
        Field(G, scal, (0, 0), g.ambient),
        Field(G, ein, (2, 0), g.ambient, symmetric=True),
        mixed,
    )


def rm_form(bundle):
    """``Rm(X, Y, Z, L) = g(R(X, Y) Z, L)`` as an array over ``(X, Y, Z, L)``."""
    return -bundle.riemann.data


def _slot_term(gam, data, nd, pos, kind):
    moved = np.moveaxis(data, nd + pos, -1)
    flat = moved.reshape(moved.shape[:nd] + (-1, moved.shape[-1]))
    if kind == "u":
        term = einsum("...acb,...rb->...rca", gam, flat)
    else:
        term = -einsum("...bca,...rb->...rca", gam, flat)
    m = gam.shape[-1]
    term = term.reshape(moved.shape[:-1] + (m, m))
    term = np.moveaxis(term, -2, nd)
    return np.moveaxis(term, -1, nd + 1 + pos)


def covariant_derivative(t, g, dt=None):
    """``nabla t`` with the derivative index placed first.

    ``dt`` supplies ``d_t`` of the components for spacetime fields; it
    defaults to zero.
    """
    if t.ambient != g.ambient:
        raise GeometryError(f"{t.ambient} field against {g.ambient} metric")
    rank = len(t.kinds)
    if t.components[:rank] != (g.m,) * rank:
        raise GeometryError("component axes do not match the metric dimension")
    _, gam = christoffel_arrays(g.inv, g.dg())
    nd = g.grid.dim
    out = g.deriv(t.data, dt)
    for pos, kind in enumerate(t.kinds):
        out = out + _slot_term(gam, t.data, nd, pos, kind)
    return Field(g.grid, out, (t.valence[0] + 1, t.valence[1]), t.ambient,
                 kinds="l" + t.kinds)


def divergence(t, g, dt=None):
    """``(delta B)_{b...} = -g^{ac} nabla_a B_{cb...}``; for a vector, ``nabla_a V^a``."""
    if not t.kinds:
        raise GeometryError("divergence of a scalar is undefined")
    nab = covariant_derivative(t, g, dt).data
    nd = g.grid.dim
    if t.kinds[0] == "u":
        out = np.trace(nab, axis1=nd, axis2=nd + 1)
        return Field(g.grid, out, (t.valence[0], t.valence[1] - 1), t.ambient, kinds=t.kinds[1:])
    # contract the derivative index with the first slot
    ginv = g.inv.reshape(g.inv.shape[:nd] + g.inv.shape[nd:] + (1,) * (nab.ndim - nd - 2))
    out = -np.sum(ginv * nab, axis=(nd, nd + 1))
    return Field(g.grid, out, (t.valence[0] - 1, t.valence[1]), t.ambient, kinds=t.kinds[1:])


def gauss_codazzi_residual(g, W, ambient, embedding_data):
    """Defects of the contracted hypersurface relations and of the fibre equations.

    ``g`` and ``W`` live on a slice of a spacetime whose curvature on that
    slice is ``ambient``; the slice must be orthogonal to ``d_t`` with lapse
    ``embedding_data["lam"]``.  The fibre checks assume the normal form with
    ``s`` along grid axis 0 and need ``embedding_data["u"]``.

    Returns ``(hamiltonian, momentum, gauss, codazzi)`` Fields; the last two are
    ``None`` without ``u``.
    """
    Wd = W.data
    if np.max(np.abs(Wd - np.swapaxes(Wd, -1, -2))) > 1e-10:
        raise GeometryError("W is not symmetric")
    G = g.grid
    nd = G.dim
    lam = np.asarray(embedding_data["lam"], dtype=float) * np.ones(G.shape)
    curv = curvature(g)
    Wup = einsum("...ab,...bc->...ac", g.inv, Wd)
    trW = np.trace(Wup, axis1=-2, axis2=-1)
    trW2 = einsum("...ab,...ba->...", Wup, Wup)
    Ein = ambient.einstein.data
    ham = Ein[..., 0, 0] / lam ** 2 - 0.5 * (curv.scal.data - trW2 + trW ** 2)
    dW = divergence(W, g).data
    mom = Ein[..., 0, 1:] / lam[..., None] - (dW + np.moveaxis(g.deriv(trW), nd, -1))
    out = [Field(G, ham), Field(G, mom, (1, 0))]
    u = embedding_data.get("u")
    if u is None:
        return tuple(out) + (None, None)
    u = np.asarray(u, dtype=float) * np.ones(G.shape)
    Rm = rm_form(curv)
    f = slice(1, None)
    h = g.g[..., f, f]
    hdot_like = Wd[..., f, f]
    # fibre curvature: only fibre axes are differentiated, s is a parameter
    Rs = _fibre_rm(h, G)
    Ws = hdot_like
    gauss = Rm[..., f, f, f, f] - (
        Rs + einsum("...xz,...yl->...xyzl", Ws, Ws) - einsum("...xl,...yz->...xyzl", Ws, Ws))
    # (nabla^h_Y W_s)(Z, X) on the fibre
    nW = _fibre_cov_lower2(Ws, h, G)
    codazzi = u[..., None, None, None] * Rm[..., f, 0, f, f] - (
        einsum("...yzx->...xyz", nW) - einsum("...zyx->...xyz", nW))
    out += [Field(G, gauss, (4, 0)), Field(G, codazzi, (3, 0))]
    return tuple(out)


def _fibre_derivs(arr, G):
    return np.stack([d1(arr, a, G.spacing[a]) for a in range(1, G.dim)], axis=G.dim)


def _fibre_gammas(h, G):
    hinv = np.linalg.inv(h)
    dh = _fibre_derivs(h, G)
    _, gam = christoffel_arrays(hinv, dh)
    return hinv, gam


def _fibre_rm(h, G):
    _, gam = _fibre_gammas(h, G)
    dgam = _fibre_derivs(gam, G)
    mixed = riemann_from_christoffel(gam, dgam)
    riem = einsum("...ae,...ebcd->...abcd", h, mixed)
    return -riem


def _fibre_cov_lower2(B, h, G):
    # (nabla_c B)_{ab} with the derivative index first
    _, gam = _fibre_gammas(h, G)
    dB = _fibre_derivs(B, G)
    return dB - einsum("...eca,...eb->...cab", gam, B) - einsum("...ecb,...ae->...cab", gam, B)
