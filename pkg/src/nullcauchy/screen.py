"""
The screen bundle ``S = T^perp cap V^perp`` of an evolved slice.

``T = d_t / lam`` with ``lam = sqrt(-gbar_00)`` and ``V`` comes from the
degree-1 part of ``alpha``.  Writing ``V = u (T + N')`` with ``N'`` a unit
spacelike vector orthogonal to ``T``, the orthogonal projection onto ``S`` is
``pr_S = Id + T (x) T_flat - N' (x) N'_flat``.

The screen connection is ``nabla^S_Y s = nabla_Y s - (1/u) g(s, nabla_Y T) V``
and its curvature is ``pr_S (R(X, Y) s)``.  Holonomy is estimated at the
curvature level: the span of ``R^S(X, Y)`` at sampled points, pulled back to
the base point by ``nabla^S``-transport along axis-aligned paths.
"""

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import geometric_derivs
from .evolver import MIN_U, projection_data, rhs
from .geometry import christoffel_arrays, curvature
from .grid import d1, einsum

__all__ = [
    "ScreenError",
    "ScreenFrame",
    "HolonomySpan",
    "screen_frame",
    "screen_projector",
    "screen_covariant_derivative",
    "screen_curvature",
    "transport_matrix",
    "transport_frame",
    "loop_transport",
    "holonomy_span",
    "su_screen_test",
]


class ScreenError(ValueError):
    pass


@dataclass
class ScreenFrame:
    """Orthonormal screen basis ``sigma[..., a, mu]`` with ``T``, ``V``, ``N'`` and ``u``."""

    sigma: np.ndarray
    T: np.ndarray
    V: np.ndarray
    Nprime: np.ndarray
    u: np.ndarray
    dropped: np.ndarray = None


def _ip(g, X, Y):
    return einsum("...a,...ab,...b->...", X, g, Y)


def _basics(st):
    g = st.gbar
    D = g.shape[-1]
    prj = projection_data(g, st.alpha, check=False)
    if np.any(prj.u < MIN_U):
        bad = np.argwhere(prj.u < MIN_U)[0]
        raise ScreenError(f"u below threshold at point index {tuple(bad)}")
    T = np.zeros(g.shape[:-1])
    T[..., 0] = 1.0 / prj.lam
    Np = prj.V / prj.u[..., None] - T
    return prj, T, Np, D


def screen_projector(st):
    """``pr_S[..., mu, nu]`` acting on vectors as ``X^mu -> pr^mu_nu X^nu``."""
    _, T, Np, D = _basics(st)
    g = st.gbar
    Tf = einsum("...ab,...b->...a", g, T)
    Nf = einsum("...ab,...b->...a", g, Np)
    return np.eye(D) + T[..., :, None] * Tf[..., None, :] - Np[..., :, None] * Nf[..., None, :]


def screen_frame(st, tol=1e-8):
    """Gram-Schmidt of the projected coordinate vectors ``pr_S(d_i)``.

    One of the ``n`` projected vectors is dependent on the others; per point
    the one with the smallest Gram-Schmidt remainder is dropped.
    """
    prj, T, Np, D = _basics(st)
    g = st.gbar
    n = D - 1
    P = screen_projector(st)
    cand = np.swapaxes(P[..., :, 1:], -1, -2)          # pr_S(d_i), shape (..., n, D)
    vecs = np.zeros_like(cand)
    norms = np.zeros(cand.shape[:-1])
    for i in range(n):
        v = cand[..., i, :].copy()
        for j in range(i):
            w = vecs[..., j, :]
            v = v - _ip(g, v, w)[..., None] * w
        nrm = np.sqrt(np.maximum(_ip(g, v, v), 0.0))
        norms[..., i] = nrm
        ok = nrm > tol
        vecs[..., i, :] = np.where(ok[..., None], v / np.where(ok, nrm, 1.0)[..., None], 0.0)
    drop = np.argmin(norms, axis=-1)
    keep = np.array([[j for j in range(n) if j != d] for d in range(n)])[drop]
    sigma = np.take_along_axis(vecs, keep[..., None], axis=-2)
    gram = einsum("...ai,...ij,...bj->...ab", sigma, g, sigma)
    if np.max(np.abs(gram - np.eye(n - 1))) > 1e-8:
        raise ScreenError("screen frame is degenerate")
    return ScreenFrame(sigma, T, prj.V, Np, prj.u, drop)


def _gamma(st):
    ginv = np.linalg.inv(st.gbar)
    return christoffel_arrays(ginv, geometric_derivs(st))[1]


def _nabla_vector(st, gam, X, Xt=None):
    """``nabla_c X^mu`` with ``d_t X = Xt`` (zero by default); derivative index first."""
    gr = st.grid
    Xt = np.zeros_like(X) if Xt is None else Xt
    dX = np.stack([Xt] + [d1(X, a, gr.spacing[a]) for a in range(gr.dim)], axis=gr.dim)
    return dX + einsum("...mcl,...l->...cm", gam, X)


def _nabla_T(st, gam, T):
    # d_t T^0 = -d_t lam / lam^2 = k_00 / (2 lam^3)
    lam = 1.0 / T[..., 0]
    Tt = np.zeros_like(T)
    Tt[..., 0] = st.k[..., 0, 0] / (2 * lam ** 3)
    return _nabla_vector(st, gam, T, Tt)


def screen_covariant_derivative(sigma, st, sigma_t=None):
    """``nabla^S_{d_c} sigma`` for all coordinate directions, derivative index first.

    Returns ``(out, defect)`` where ``out`` is re-projected onto ``S`` and
    ``defect`` is the linf size of what the projection removed.
    """
    fr = screen_frame(st)
    gam = _gamma(st)
    nab = _nabla_vector(st, gam, sigma, sigma_t)
    nT = _nabla_T(st, gam, fr.T)
    coef = einsum("...a,...ab,...cb->...c", sigma, st.gbar, nT) / fr.u[..., None]
    raw = nab - coef[..., None] * fr.V[..., None, :]
    P = screen_projector(st)
    out = einsum("...mn,...cn->...cm", P, raw)
    return out, float(np.max(np.abs(out - raw)))


def screen_curvature(st, bg, rate=None, frame=None):
    """``R^S(d_c, d_d)`` as matrices in the screen frame: ``RS[..., c, d, a, b]``.

    ``RS[..., c, d, a, b] = g(sigma_a, R(d_c, d_d) sigma_b)``.
    """
    rate = rhs(st, bg, check=False) if rate is None else rate
    frame = screen_frame(st) if frame is None else frame
    riem = curvature(st.metric(dtt=rate[2])).riemann.data
    return einsum("...am,...mncd,...bn->...cdab", frame.sigma, riem, frame.sigma), frame


def _transport_fields(st):
    fr = screen_frame(st)
    gam = _gamma(st)
    nT = _nabla_T(st, gam, fr.T)
    return fr, gam, nT


def transport_matrix(st, axis, fields=None):
    """Pointwise ``M`` with ``d sigma / dx^axis = M sigma`` for ``nabla^S``-parallel ``sigma``."""
    fr, gam, nT = _transport_fields(st) if fields is None else fields
    c = axis + 1
    a = einsum("...ab,...b->...a", st.gbar, nT[..., c, :]) / fr.u[..., None]
    return -gam[..., :, c, :] + fr.V[..., :, None] * a[..., None, :]


def _rk4_sweep(Ms, sig0, axis, h, nsteps, start):
    """Transport ``sig0`` (frames at points ``start``) ``nsteps`` double steps along ``axis``."""
    N = Ms.shape[axis]
    out = [sig0]
    idx = np.array(start)
    sig = sig0
    for _ in range(nsteps):
        def M_at(off):
            j = idx.copy()
            j[..., axis] = (j[..., axis] + off) % N
            return Ms[tuple(np.moveaxis(j, -1, 0))]
        f = lambda M, s: einsum("...mn,...an->...am", M, s)
        M0, M1, M2 = M_at(0), M_at(1), M_at(2)
        k1 = f(M0, sig)
        k2 = f(M1, sig + h * k1)
        k3 = f(M1, sig + h * k2)
        k4 = f(M2, sig + 2 * h * k3)
        sig = sig + (2 * h) / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        idx = idx.copy()
        idx[..., axis] = (idx[..., axis] + 2) % N
        out.append(sig)
    return out


def transport_frame(st, base, fields=None):
    """Frames transported from ``base`` to every even-offset grid point.

    Paths run along axis 0, then axis 1, and so on.  Returns
    ``(points, frames)`` with ``points[k]`` a grid index and ``frames[k]`` the
    transported ``sigma`` there.
    """
    fields = _transport_fields(st) if fields is None else fields
    fr = fields[0]
    gr = st.grid
    if any(N % 2 for N in gr.shape):
        raise ScreenError("transport uses double steps and needs even grid sizes")
    pts = np.array([base])
    frames = fr.sigma[tuple(base)][None]
    for ax in range(gr.dim):
        M = transport_matrix(st, ax, fields)
        n2 = gr.shape[ax] // 2
        seq = _rk4_sweep(M, frames, ax, gr.spacing[ax], n2 - 1, pts)
        newp, newf = [], []
        for k, sig in enumerate(seq):
            p = pts.copy()
            p[:, ax] = (p[:, ax] + 2 * k) % gr.shape[ax]
            newp.append(p)
            newf.append(sig)
        pts = np.concatenate(newp)
        frames = np.concatenate(newf)
    return pts, frames


def loop_transport(st, base, axes, size=1, fields=None):
    """Transport around the square with side ``2 * size`` grid steps in the plane ``axes``.

    Returns the matrix ``O[a, b] = g(sigma_a, P sigma_b)`` of the loop map
    ``P`` in the base frame, and the loop area.
    """
    fields = _transport_fields(st) if fields is None else fields
    fr = fields[0]
    gr = st.grid
    i, j = axes
    sig = fr.sigma[tuple(base)][None]
    p = np.array([base])
    legs = ((i, 1), (j, 1), (i, -1), (j, -1))
    for ax, direction in legs:
        M = transport_matrix(st, ax, fields)
        if direction < 0:
            # walk backwards: reverse the axis so the sweep still moves forward
            Mr = np.flip(M, axis=ax)
            pr_ = p.copy()
            pr_[:, ax] = (gr.shape[ax] - 1 - pr_[:, ax]) % gr.shape[ax]
            sig = _rk4_sweep(-Mr, sig, ax, gr.spacing[ax], size, pr_)[-1]
        else:
            sig = _rk4_sweep(M, sig, ax, gr.spacing[ax], size, p)[-1]
        p = p.copy()
        p[:, ax] = (p[:, ax] + 2 * size * direction) % gr.shape[ax]
    s0 = fr.sigma[tuple(base)]
    O = einsum("am,mn,bn->ab", s0, st.gbar[tuple(base)], sig[0])
    area = (2 * size * gr.spacing[i]) * (2 * size * gr.spacing[j])
    return O, area


@dataclass
class HolonomySpan:
    dimension: int
    basis: list
    singular_values: np.ndarray
    fingerprint: str
    blocks: list = field(default_factory=list)
    frame: np.ndarray = None

    def to_json(self):
        return {"dimension": self.dimension, "singular_values": self.singular_values.tolist(),
                "fingerprint": self.fingerprint, "blocks": self.blocks,
                "frame": None if self.frame is None else self.frame.tolist()}


def _blocks(mats, tol):
    """Connected groups of frame indices coupled by the matrices."""
    r = mats.shape[-1]
    adj = np.max(np.abs(mats), axis=0) > tol if len(mats) else np.zeros((r, r), bool)
    seen, out = set(), []
    for a in range(r):
        if a in seen:
            continue
        comp, stack = set(), [a]
        while stack:
            x = stack.pop()
            if x in comp:
                continue
            comp.add(x)
            stack += [y for y in range(r) if adj[x, y] and y not in comp]
        seen |= comp
        out.append(sorted(comp))
    return out


def holonomy_span(st, bg, base_point, stride=1, rel_tol=1e-8, floor=0.0, rate=None):
    """Span of transported screen curvature matrices (Ambrose-Singer at curvature level).

    Singular values above ``max(rel_tol * scale, floor)`` count, with
    ``scale = max(1, largest singular value)``.  Discretisation error makes
    curvature that vanishes exactly show up at the ``O(dx^4)`` level, so a
    ``floor`` of that size is needed to see a zero span on curved grids.
    ``stride`` thins the transported sample points.  The fingerprint lists
    the ``so(k)`` blocks (``k >= 2``) that the span couples.
    """
    RS, fr = screen_curvature(st, bg, rate)
    fields = _transport_fields(st)
    pts, frames = transport_frame(st, tuple(base_point), fields)
    pts, frames = pts[::stride], frames[::stride]
    riem_frame = []
    for p, sig in zip(pts, frames):
        # pull back: g(tau sigma_a, R tau sigma_b) = sum over the point frame
        R_here = RS[tuple(p)]                  # in the local Gram-Schmidt frame
        loc = fr.sigma[tuple(p)]
        C = einsum("am,mn,bn->ab", loc, st.gbar[tuple(p)], sig)  # local -> transported
        riem_frame.append(einsum("xa,cdxy,yb->cdab", C, R_here, C))
    mats = np.concatenate([m.reshape(-1, *m.shape[-2:]) for m in riem_frame])
    if np.max(np.abs(mats + np.swapaxes(mats, -1, -2))) > 1e-10 * max(1.0, np.max(np.abs(mats))):
        raise ScreenError("screen curvature matrices are not antisymmetric")
    r = mats.shape[-1]
    iu = np.triu_indices(r, 1)
    vecs = mats[:, iu[0], iu[1]]
    if vecs.shape[1] == 0:
        return HolonomySpan(0, [], np.zeros(0), "trivial", [], fr.sigma[tuple(base_point)])
    _, sv, vt = np.linalg.svd(vecs, full_matrices=False)
    tol = max(rel_tol * max(sv[0] if sv.size else 0.0, 1.0), floor)
    dim = int(np.sum(sv > tol))
    basis = []
    for v in vt[:dim]:
        B = np.zeros((r, r))
        B[iu] = v
        basis.append(B - B.T)
    blocks = _blocks(np.array(basis), 1e-6) if basis else [[a] for a in range(r)]
    big = [b for b in blocks if len(b) > 1]
    fp = " + ".join(f"so({len(b)})" for b in big) if big else "trivial"
    return HolonomySpan(dim, basis, sv, fp, blocks, fr.sigma[tuple(base_point)])


def su_screen_test(st, bg, J_screen, rate=None):
    """``tr(J o R^S(d_c, d_d))`` for all coordinate pairs; ``J`` given in the screen frame."""
    J = np.asarray(J_screen, dtype=float)
    r = J.shape[-1]
    if np.max(np.abs(J @ J + np.eye(r))) > 1e-8:
        raise ScreenError("J^2 != -Id")
    RS, _ = screen_curvature(st, bg, rate)
    return einsum("...ba,...cdab->...cd", J, RS)
