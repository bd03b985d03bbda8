"""
First-order evolution system and method-of-lines time stepping.

Unknowns ``(gbar, dgbar, k, alpha, Z)`` on a periodic grid evolve by::

    d_t gbar    = k
    d_t dgbar_i = d_i k
    d_t k       = (2 g^{0j} d_j k + g^{ij} d_j dgbar_i - 2 H - 2 nabla_(mu F_nu)
                   + 2 (Z o pr)) / (-g^{00})

together with the Clifford form of ``(d + delta) alpha = 0`` and transport of
``Z`` along ``V``.  First derivatives of ``gbar`` are taken from the state
(``k`` in time, ``dgbar`` in space); the system is first order.

The symbol matrices are assembled only for verification; the stepper is
classic RK4.
"""

from dataclasses import dataclass, field

import numpy as np

from .clifford import apply_clifford, gram_schmidt_frame, insert, minkowski_clifford, wedge
from .geometry import christoffel_arrays
from .grid import d1, einsum, ko_dissipation

__all__ = [
    "EvolutionError",
    "ProjectionData",
    "SymbolMatrices",
    "EvolutionResult",
    "state_derivs",
    "gauge_source",
    "reduced_ricci_H",
    "projection_data",
    "admissibility",
    "rhs",
    "symbol_matrices",
    "char_speed",
    "time_step",
    "evolve",
]

ADMISSIBLE_EIG = 1e-6
ADMISSIBLE_G00 = 1e-6
MIN_U = 1e-8


class EvolutionError(RuntimeError):
    pass


def state_derivs(st):
    """``Dg[..., c, a, b] = d_c gbar_ab`` from the state: ``k`` for ``c = 0``, ``dgbar`` otherwise."""
    return np.concatenate([st.k[..., None, :, :], st.dgbar], axis=-3)


def gauge_source(st, bg, Dg=None):
    """``F_nu = g_mu nu g^ab Gamma~^mu_ab`` and ``E_nu = -g_mu nu g^ab (Gamma - Gamma~)^mu_ab``."""
    ginv = np.linalg.inv(st.gbar)
    Dg = state_derivs(st) if Dg is None else Dg
    _, gam = christoffel_arrays(ginv, Dg)
    gtil, _ = bg.christoffel(st.t)
    G = einsum("...ab,...mab->...m", ginv, gtil)
    F = einsum("...nm,...m->...n", st.gbar, G)
    Gam = einsum("...nm,...ab,...mab->...n", st.gbar, ginv, gam)
    return F, F - Gam


def reduced_ricci_H(ginv, low):
    """Quadratic first-derivative part of the reduced Ricci tensor.

    ``H_mn = g^ab g^cd [G_{c,am} G_{d,bn} + G_{c,am} G_{n,bd} + G_{c,an} G_{m,bd}]``
    with lowered Christoffels ``G_{r,ab}``.
    """
    D = ginv.shape[-1]
    gam = np.matmul(ginv, low.reshape(low.shape[:-2] + (D * D,))).reshape(low.shape)
    # P[m, b, d] = g^ab Gamma^d_am
    P = np.matmul(ginv[..., None, :, :], np.swapaxes(gam, -3, -1)).reshape(low.shape[:-3] + (D, D * D))
    t1 = np.matmul(P, np.swapaxes(low, -3, -2).reshape(low.shape[:-3] + (D * D, D)))
    t2 = np.matmul(P, np.swapaxes(low.reshape(low.shape[:-3] + (D, D * D)), -1, -2))
    return t1 + t2 + np.swapaxes(t2, -1, -2)


@dataclass
class ProjectionData:
    V: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    N: np.ndarray
    pr: np.ndarray

    def zpr(self, Z):
        """``(Z o pr)_{mu nu} = Z_kl pr(d_mu)^k pr(d_nu)^l`` for spatial ``Z``."""
        return np.matmul(np.matmul(self.pr, Z), np.swapaxes(self.pr, -1, -2))


def projection_data(gbar, alpha, check=True):
    """``V`` from the degree-1 part of ``alpha`` and ``pr = Id + (1/u) g(T, .) V``."""
    D = gbar.shape[-1]
    ginv = np.linalg.inv(gbar)
    a1 = np.stack([alpha[..., 1 << m] for m in range(D)], -1)
    V = einsum("...ab,...b->...a", ginv, a1)
    lam = np.sqrt(-gbar[..., 0, 0])
    u = -a1[..., 0] / lam
    if check and np.any(u < MIN_U):
        bad = np.argwhere(u < MIN_U)[0]
        raise EvolutionError(f"u = {u[tuple(bad)]:.3e} below threshold at point index {tuple(bad)}")
    # pr(d_mu)^nu = delta + g(T, d_mu) V^nu / u, T = d_t / lam
    pr = np.eye(D) + (gbar[..., 0, :, None] / (lam * u)[..., None, None]) * V[..., None, :]
    N = -V[..., 1:] / (lam * V[..., 0])[..., None]
    return ProjectionData(V, u, lam, N, pr[..., :, 1:])


def admissibility(gbar):
    """``(ok, message)`` for membership in the admissible class."""
    ev = np.linalg.eigvalsh(gbar[..., 1:, 1:])[..., 0]
    if np.any(ev <= ADMISSIBLE_EIG):
        i = np.unravel_index(np.argmin(ev), ev.shape)
        return False, f"spatial block eigenvalue {ev[i]:.3e} at point index {i}"
    g00 = np.linalg.inv(gbar)[..., 0, 0]
    if np.any(-g00 <= ADMISSIBLE_G00):
        i = np.unravel_index(np.argmax(g00), g00.shape)
        return False, f"-g^00 = {-g00[i]:.3e} at point index {i}"
    if np.any(gbar[..., 0, 0] >= 0):
        i = np.unravel_index(np.argmax(gbar[..., 0, 0]), gbar.shape[:-2])
        return False, f"d_t not timelike at point index {i}"
    return True, ""


def _grad(arr, grid):
    return [d1(arr, a, grid.spacing[a]) for a in range(grid.dim)]


def _connection_action(gam, alpha):
    """``A_mu alpha`` with ``A_mu = -Gamma^nu_{mu lam} sigma^lam ^ i_{e_nu}``; shape ``(..., D, K)``."""
    D = gam.shape[-1]
    K = alpha.shape[-1]
    terms = np.stack([np.stack([wedge(lam, insert(nu, alpha)) for lam in range(D)], -2)
                      for nu in range(D)], -3)
    G = np.swapaxes(gam, -3, -2).reshape(gam.shape[:-3] + (D, D * D))
    return -np.matmul(G, terms.reshape(alpha.shape[:-1] + (D * D, K)))


def _alpha_rhs(st, ginv, gam, lamt):
    g = st.gbar
    D = g.shape[-1]
    frame = gram_schmidt_frame(g, check=False)
    zeta = frame.zeta
    A = _connection_action(gam, st.alpha)
    grads = _grad(st.alpha, st.grid)
    nab = [grads[i] + A[..., i + 1, :] for i in range(st.n)]
    b = np.zeros_like(st.alpha)
    for k in range(1, D):
        w = sum(zeta[..., k, i + 1, None] * nab[i] for i in range(st.n))
        b += apply_clifford(zeta[..., k, :], w, g)
    b = apply_clifford(zeta[..., 0, :], b, g)
    # M = I/lam - c(s0) c(Y) with Y = sum_k zeta^0_k s_k; (c(s0) c(Y))^2 = |Y|^2
    Y = einsum("...k,...ka->...a", zeta[..., 1:, 0], zeta[..., 1:, :])
    Y2 = np.sum(zeta[..., 1:, 0] ** 2, axis=-1)
    a = 1.0 / lamt
    Qb = apply_clifford(zeta[..., 0, :], apply_clifford(Y, b, g), g)
    sol = (a[..., None] * b + Qb) / (a ** 2 - Y2)[..., None]
    return sol - A[..., 0, :]


def _z_rhs_coordinate(st, gam, prj):
    """``lam N^i d_i Z + 2 Gamma^i_0(k Z_l)i - 2 lam N^i Gamma^j_i(k Z_l)j``.

    Drops the ``Gamma^0`` terms and the time dependence of ``pr``, so it
    agrees with ``nabla_V (Z o pr) = 0`` only where ``Z(N, .) = 0`` and the
    shift vanishes.  Kept for comparison.
    """
    n = st.n
    Z = st.Z
    lN = prj.lam[..., None] * prj.N
    grads = _grad(Z, st.grid)
    out = sum(lN[..., i, None, None] * grads[i] for i in range(n))
    G0 = gam[..., 1:, 0, 1:]          # Gamma^i_{0k}
    t = einsum("...ik,...li->...kl", G0, Z)
    out = out + t + np.swapaxes(t, -1, -2)
    Gs = gam[..., 1:, 1:, 1:]         # Gamma^j_{ik}
    t = einsum("...i,...jik,...lj->...kl", lN, Gs, Z)
    return out - (t + np.swapaxes(t, -1, -2))


def _z_rhs(st, ginv, gam, prj, at):
    """``d_t Z`` from the spatial components of ``nabla_V (Z o pr) = 0``.

    With ``Q = Z o pr`` and ``P_k^m = pr(d_k)^m``::

        P (d_t Z) P^T = (V^c Gamma^e_ck Q_el + (k <-> l) - V^i d_i Q_kl) / V^0
                        - Z(d_t P, P) - Z(P, d_t P)

    ``d_t P`` follows from ``d_t gbar = k`` and the degree-1 part of ``d_t alpha``.
    """
    D = st.gbar.shape[-1]
    n = st.n
    V = prj.V
    Q = prj.zpr(st.Z)
    dQ = _grad(Q[..., 1:, 1:], st.grid)
    R = einsum("...c,...eck,...el->...kl", V, gam[..., :, :, 1:], Q[..., :, 1:])
    S = R + np.swapaxes(R, -1, -2) - sum(V[..., i + 1, None, None] * dQ[i] for i in range(n))
    S = S / V[..., 0, None, None]
    a1 = np.stack([st.alpha[..., 1 << m] for m in range(D)], -1)
    a1t = np.stack([at[..., 1 << m] for m in range(D)], -1)
    Vt = einsum("...ab,...b->...a", ginv, a1t - einsum("...ab,...b->...a", st.k, V))
    a0, a0t = a1[..., 0], a1t[..., 0]
    g0, k0 = st.gbar[..., 0, 1:], st.k[..., 0, 1:]
    # P_k^m = delta - g_0k V^m / alpha_0
    P = prj.pr[..., 1:, :]
    Pt = -(k0[..., :, None] * V[..., None, 1:] + g0[..., :, None] * Vt[..., None, 1:]) / a0[..., None, None] \
        + g0[..., :, None] * V[..., None, 1:] * (a0t / a0 ** 2)[..., None, None]
    t = einsum("...km,...mn,...ln->...kl", Pt, st.Z, P)
    S = S - t - np.swapaxes(t, -1, -2)
    Pinv = np.linalg.inv(P)
    return einsum("...mk,...kl,...nl->...mn", Pinv, S, Pinv)


def rhs(st, bg, sigma=0.0, check=True, z_form="covariant"):
    """Time derivatives of ``(gbar, dgbar, k, alpha, Z)`` as a list of arrays.

    ``z_form="coordinate"`` switches to the truncated coordinate transport of ``Z``.
    """
    if check:
        ok, msg = admissibility(st.gbar)
        if not ok:
            raise EvolutionError(f"state left the admissible class: {msg}")
    g = st.gbar
    n = st.n
    grid = st.grid
    ginv = np.linalg.inv(g)
    Dg = state_derivs(st)
    low, gam = christoffel_arrays(ginv, Dg)
    H = reduced_ricci_H(ginv, low)

    gtil, dgtil = bg.christoffel(st.t)
    G = einsum("...ab,...mab->...m", ginv, gtil)
    F = einsum("...nm,...m->...n", g, G)
    D = g.shape[-1]
    gi = ginv[..., None, :, :]
    dginv = -np.matmul(np.matmul(gi, Dg), gi)
    dG = np.matmul(dginv.reshape(g.shape[:-2] + (D, D * D)),
                   np.swapaxes(gtil.reshape(g.shape[:-2] + (D, D * D)), -1, -2)) \
        + einsum("...ab,...cmab->...cm", ginv, dgtil)
    dF = einsum("...cnm,...m->...cn", Dg, G) + einsum("...nm,...cm->...cn", g, dG)
    nabF = dF - einsum("...lmn,...l->...mn", gam, F)
    symF = 0.5 * (nabF + np.swapaxes(nabF, -1, -2))

    prj = projection_data(g, st.alpha, check=check)
    Q = prj.zpr(st.Z)

    dk = _grad(st.k, grid)
    wave = 2 * sum(ginv[..., 0, j + 1, None, None] * dk[j] for j in range(n))
    for j in range(n):
        ddg_j = d1(st.dgbar, j, grid.spacing[j])
        wave = wave + einsum("...i,...iab->...ab", ginv[..., 1:, j + 1], ddg_j)
    kt = (wave - 2 * H - 2 * symF + 2 * Q) / (-ginv[..., 0, 0])[..., None, None]
    dgt = np.stack(dk, axis=-3)

    lamt = np.sqrt(-g[..., 0, 0])
    at = _alpha_rhs(st, ginv, gam, lamt)
    if z_form == "covariant":
        zt = _z_rhs(st, ginv, gam, prj, at)
    elif z_form == "coordinate":
        zt = _z_rhs_coordinate(st, gam, prj)
    else:
        raise EvolutionError(f"unknown z_form {z_form!r}")
    out = [st.k.copy(), dgt, kt, at, zt]
    if sigma:
        out = [o + ko_dissipation(b, grid, sigma) for o, b in zip(out, st.blocks())]
    return out


@dataclass
class SymbolMatrices:
    A0: np.ndarray
    Ai: list
    symmetry_defect: float
    min_eig_A0: float
    bound: float


def _block1(ginv, n):
    # per metric component: unknowns (g, g_{,1..n}, k)
    m = n + 2
    A0 = np.zeros((m, m))
    A0[0, 0] = 1.0
    A0[1:n + 1, 1:n + 1] = ginv[1:, 1:]
    A0[-1, -1] = -ginv[0, 0]
    Ai = []
    for i in range(n):
        A = np.zeros((m, m))
        A[1:n + 1, -1] = ginv[1:, i + 1]
        A[-1, 1:n + 1] = ginv[1:, i + 1]
        A[-1, -1] = 2 * ginv[0, i + 1]
        Ai.append(A)
    return A0, Ai


def symbol_matrices(st, point):
    """Principal symbols at one grid point, block diagonal over the subsystems.

    The Clifford block is written in the orthonormal frame, where ``c(e_0)``
    is symmetric and ``c(e_i)`` skew for the Euclidean product on monomials.
    """
    from scipy.linalg import block_diag

    g = st.gbar[point]
    n = st.n
    D = n + 1
    ginv = np.linalg.inv(g)
    b0, bi = _block1(ginv, n)
    ncomp = D * (D + 1) // 2
    frame = gram_schmidt_frame(g)
    zeta = frame.zeta
    C = minkowski_clifford(D)
    lam = np.sqrt(-g[0, 0])
    K = 1 << D
    A02 = np.eye(K) / lam - sum(zeta[k, 0] * C[0] @ C[k] for k in range(1, D))
    Ai2 = [sum(zeta[k, i + 1] * C[0] @ C[k] for k in range(1, D)) for i in range(n)]
    prj = projection_data(st.gbar[point][None], st.alpha[point][None])
    lN = (prj.lam[..., None] * prj.N)[0]
    nz = n * (n + 1) // 2
    A0 = block_diag(*([b0] * ncomp), A02, np.eye(nz))
    Ai = [block_diag(*([bi[i]] * ncomp), Ai2[i], lN[i] * np.eye(nz)) for i in range(n)]
    defect = max(float(np.max(np.abs(A - A.T))) for A in [A0] + Ai)
    bound = min(1.0, 1.0 / lam, -ginv[0, 0], float(np.min(np.linalg.eigvalsh(ginv[1:, 1:]))))
    return SymbolMatrices(A0, Ai, defect, float(np.min(np.linalg.eigvalsh(A0))), bound)


def char_speed(gbar):
    """``2 max(lam) sqrt(1 + max spectral radius of g^{ij})``, a deliberate overestimate."""
    lam = np.sqrt(-gbar[..., 0, 0])
    rho = np.linalg.eigvalsh(np.linalg.inv(gbar)[..., 1:, 1:])[..., -1]
    return float(2 * np.max(lam) * np.sqrt(1 + np.max(rho)))


def time_step(st, cfl):
    if not 0 < cfl < 1:
        raise EvolutionError(f"cfl must lie in (0, 1), got {cfl}")
    c = char_speed(st.gbar)
    return cfl * min(st.grid.spacing) / c, c


@dataclass
class EvolutionResult:
    state: object
    reports: list = field(default_factory=list)
    status: str = "ok"
    message: str = ""
    steps: int = 0
    dt: float = 0.0
    c_max: float = 0.0


def _axpy(st, coef, tan, t):
    return st.with_blocks([b + coef * d for b, d in zip(st.blocks(), tan)], t=t)


def rk4_step(st, bg, dt, sigma=0.0, z_form="covariant", k1=None):
    """One classic RK4 step; ``k1`` may be passed when ``rhs(st)`` is already known."""
    k1 = rhs(st, bg, sigma, z_form=z_form) if k1 is None else k1
    k2 = rhs(_axpy(st, dt / 2, k1, st.t + dt / 2), bg, sigma, z_form=z_form)
    k3 = rhs(_axpy(st, dt / 2, k2, st.t + dt / 2), bg, sigma, z_form=z_form)
    k4 = rhs(_axpy(st, dt, k3, st.t + dt), bg, sigma, z_form=z_form)
    new = [b + dt / 6 * (a + 2 * b2 + 2 * c + d)
           for b, a, b2, c, d in zip(st.blocks(), k1, k2, k3, k4)]
    return st.with_blocks(new, t=st.t + dt)


def evolve(state0, bg, t_end=None, cfl=0.25, diag_every=1, sigma=0.0, monitor=None,
           steps=None, checkpoint=None, checkpoint_every=0, z_form="covariant"):
    """Integrate with RK4 up to ``t_end`` (or for ``steps`` steps).

    ``monitor(state, step, rate)`` is called at step 0 and every
    ``diag_every`` steps, with ``rate = rhs(state)`` (reused as the first
    stage of the next step); its return values are collected in ``reports``.
    ``checkpoint`` is called as ``checkpoint(state, step)`` every
    ``checkpoint_every`` steps.  Admissibility loss ends the run with
    ``status = "inadmissible"`` and the last good state.
    """
    ok, msg = admissibility(state0.gbar)
    if not ok:
        return EvolutionResult(state0, status="inadmissible", message=f"initial state: {msg}")
    dt, c = time_step(state0, cfl)
    if steps is None:
        if t_end is None:
            raise EvolutionError("give t_end or steps")
        steps = max(1, int(np.ceil(t_end / dt - 1e-12)))
        dt = t_end / steps
    res = EvolutionResult(state0, dt=dt, c_max=c)
    st = state0
    try:
        k1 = rhs(st, bg, sigma, z_form=z_form)
    except EvolutionError as exc:
        res.status, res.message = "inadmissible", str(exc)
        return res
    if monitor:
        res.reports.append(monitor(st, 0, k1))
    for i in range(1, steps + 1):
        try:
            new = rk4_step(st, bg, dt, sigma, z_form, k1)
            ok, msg = admissibility(new.gbar)
            if not ok:
                raise EvolutionError(msg)
            if not all(np.all(np.isfinite(b)) for b in new.blocks()):
                raise EvolutionError("non-finite values")
            want = monitor and (i % diag_every == 0 or i == steps)
            k1 = rhs(new, bg, sigma, z_form=z_form) if (i < steps or want) else None
        except EvolutionError as exc:
            res.status, res.message, res.state, res.steps = "inadmissible", str(exc), st, i - 1
            return res
        st = new
        if want:
            res.reports.append(monitor(st, i, k1))
        if checkpoint and checkpoint_every and i % checkpoint_every == 0:
            checkpoint(st, i)
    res.state, res.steps = st, steps
    return res
