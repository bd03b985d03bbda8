"""
Flow equations for tensors on the fibre and special-holonomy algebra.

A family ``s -> eta_s`` of tensors on the fibre corresponds to a parallel
screen tensor when it is ``h_s``-parallel and obeys

    eta_dot = -1/2 hdot^sharp . eta

where ``A . eta`` is the derivation action of an endomorphism ``A``: ``+A`` on
every upper slot and ``-A`` precomposed on every lower slot.  Tensors are
plain arrays whose trailing axes are the component slots; ``kinds`` holds one
letter per slot, ``"l"`` (lower) or ``"u"`` (upper).

Examples
--------
>>> import numpy as np
>>> vol = np.array([[0.0, 1.0], [-1.0, 0.0]])
>>> endo_action(np.eye(2), vol, "ll").tolist()
[[0.0, -2.0], [2.0, 0.0]]
"""

import itertools
from dataclasses import dataclass

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .constraint import S, family_from_expr
from .geometry import MetricField, covariant_derivative, curvature, divergence
from .grid import Field, einsum

__all__ = [
    "volume_flow_error",
    "reference_comparison",
    "FlowError",
    "TensorFamily",
    "TypeDecomposition2Form",
    "KaehlerResult",
    "G2Coordinates",
    "endo_action",
    "sharp",
    "flow_rhs",
    "integrate_flow",
    "reference_flow",
    "flow_residual",
    "parallel_residual",
    "type_decomposition",
    "kaehler_form",
    "kaehler_instance",
    "kaehler_checks",
    "kaehler_family_checks",
    "su_trace",
    "hyperkaehler_checks",
    "phi0",
    "hodge_star",
    "interior",
    "g2_basis_matrix",
    "g2_decompose",
    "g2_projectors",
    "g2_flow_residual",
]


class FlowError(ValueError):
    pass


def _check_kinds(eta, kinds, m):
    r = len(kinds)
    if set(kinds) - {"l", "u"}:
        raise FlowError(f"kinds must use 'l' and 'u', got {kinds!r}")
    if r and eta.shape[-r:] != (m,) * r:
        raise FlowError(f"tensor slots {eta.shape[-r:]} do not match dimension {m}")


def endo_action(A, eta, kinds):
    """Derivation action ``A . eta`` of an endomorphism ``A[..., i, j] = A^i_j``."""
    A = np.asarray(A, dtype=float)
    eta = np.asarray(eta, dtype=float)
    m = A.shape[-1]
    _check_kinds(eta, kinds, m)
    r = len(kinds)
    out = np.zeros(np.broadcast_shapes(A.shape[:-2] + (1,) * r, eta.shape))
    for pos, kind in enumerate(kinds):
        ax = eta.ndim - r + pos
        moved = np.moveaxis(eta, ax, -1)
        if kind == "u":
            # (A eta)^{..i..} = A^i_j eta^{..j..}
            term = einsum("...ij,...j->...i", A.reshape(A.shape[:-2] + (1,) * (r - 1) + (m, m)), moved)
        else:
            # -eta(.., A X, ..) = -eta_{..j..} A^j_i
            term = -einsum("...ji,...j->...i", A.reshape(A.shape[:-2] + (1,) * (r - 1) + (m, m)), moved)
        out = out + np.moveaxis(term, -1, ax)
    return out


def sharp(h, hdot):
    """``hdot^sharp = h^{-1} hdot`` as an endomorphism."""
    return np.linalg.solve(h, hdot)


def flow_rhs(h, hdot, eta, kinds):
    return -0.5 * endo_action(sharp(h, hdot), eta, kinds)


@dataclass
class TensorFamily:
    """Samples of ``s -> eta_s`` with their ``s``-derivatives.

    Between samples values come from cubic Hermite interpolation.
    """

    m: int
    kinds: str
    s: np.ndarray
    values: np.ndarray
    derivs: np.ndarray

    def __post_init__(self):
        self._spline = CubicHermiteSpline(self.s, self.values, self.derivs, axis=0)

    @property
    def valence(self):
        return self.kinds.count("l"), self.kinds.count("u")

    def __call__(self, s):
        i = np.flatnonzero(np.isclose(self.s, s, rtol=0, atol=1e-14))
        return self.values[i[0]] if i.size else self._spline(s)

    def dot(self, s):
        i = np.flatnonzero(np.isclose(self.s, s, rtol=0, atol=1e-14))
        return self.derivs[i[0]] if i.size else self._spline(s, 1)


def _metric_at(fam, s, x):
    h, hd = fam.h(s, x), fam.hdot(s, x)
    if np.any(np.linalg.eigvalsh(h)[..., 0] <= 0):
        raise FlowError(f"h_s is not positive definite at s = {s}")
    return h, hd


def integrate_flow(fam, eta0, s_range, steps, kinds, x=None):
    """RK4 integration of ``eta_dot = -1/2 hdot^sharp . eta`` from ``s_range[0]``.

    ``x`` is a tuple of fibre coordinate arrays for grid-backed tensors
    (``eta0`` then has the grid shape in front); ``None`` means a single point.
    """
    s0, s1 = map(float, s_range)
    if steps < 1:
        raise FlowError("steps must be positive")
    eta = np.asarray(eta0, dtype=float)
    _check_kinds(eta, kinds, fam.m)
    ds = (s1 - s0) / steps
    svals = s0 + ds * np.arange(steps + 1)

    def f(s, e):
        return flow_rhs(*_metric_at(fam, s, x), e, kinds)

    vals, ders = [eta], [f(s0, eta)]
    for s in svals[:-1]:
        k1 = ders[-1]
        k2 = f(s + ds / 2, eta + ds / 2 * k1)
        k3 = f(s + ds / 2, eta + ds / 2 * k2)
        k4 = f(s + ds, eta + ds * k3)
        eta = eta + ds / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        vals.append(eta)
        ders.append(f(s + ds, eta))
    return TensorFamily(fam.m, kinds, svals, np.array(vals), np.array(ders))


def _dense_generator(A, kinds):
    """Matrix of ``eta -> A . eta`` on row-major flattened tensors (single point)."""
    m = A.shape[-1]
    r = len(kinds)
    eye = np.eye(m)
    L = np.zeros((m ** r, m ** r))
    for pos, kind in enumerate(kinds):
        B = A if kind == "u" else -A.T
        factors = [eye] * r
        factors[pos] = B
        term = np.ones((1, 1))
        for fct in factors:
            term = np.kron(term, fct)
        L += term
    return L


def reference_flow(fam, eta0, s_range, kinds, x=None, rtol=1e-12, atol=1e-14):
    """Independent reference: dense Kronecker generator integrated by DOP853.

    Single point only; returns ``eta`` at ``s_range[1]``.
    """
    eta0 = np.asarray(eta0, dtype=float)
    shape = eta0.shape

    def f(s, y):
        h, hd = _metric_at(fam, s, x)
        return -0.5 * _dense_generator(np.linalg.solve(h, hd), kinds) @ y

    sol = solve_ivp(f, tuple(map(float, s_range)), eta0.ravel(), method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise FlowError(f"reference integrator failed: {sol.message}")
    return sol.y[:, -1].reshape(shape)


def volume_flow_error(steps=200):
    """Relative error of the flowed volume form of ``e^{2s} delta`` on ``T^3`` against ``e^{3s} vol``."""
    fam = family_from_expr("exp_scaling", sp.exp(2 * S) * sp.eye(3))
    vol0 = form_from_components({(0, 1, 2): 1.0}, 3, 3)
    tf = integrate_flow(fam, vol0, (0.0, 1.0), steps, "lll")
    return float(np.max(np.abs(tf(1.0) - np.e ** 3 * vol0)) / np.e ** 3)


def reference_comparison(rng, steps=200, count=6):
    """Worst relative gap between :func:`integrate_flow` and :func:`reference_flow`.

    Families are ``h0 + s h1 + s^2 h2`` with random symmetric ``h_i``, tensors
    of mixed valence on ``R^2 .. R^4``.
    """
    worst = 0.0
    for i in range(count):
        m = 2 + i % 3
        A = rng.standard_normal((m, m))
        h0 = A @ A.T + m * np.eye(m)
        h1 = rng.standard_normal((m, m))
        h2 = rng.standard_normal((m, m))
        hmat = sp.Matrix(h0) + S * sp.Matrix(h1 + h1.T) / 2 + S ** 2 * sp.Matrix(h2 + h2.T) / 4
        fam = family_from_expr(f"poly{i}", hmat)
        kinds = ("lu", "ll", "lul")[i % 3]
        eta0 = rng.standard_normal((m,) * len(kinds))
        got = integrate_flow(fam, eta0, (0.0, 1.0), steps, kinds)(1.0)
        ref = reference_flow(fam, eta0, (0.0, 1.0), kinds)
        worst = max(worst, float(np.max(np.abs(got - ref)) / np.max(np.abs(ref))))
    return worst


def flow_residual(fam, tf, s, x=None):
    """``linf(eta_dot + 1/2 hdot^sharp . eta)`` using the family's own derivative."""
    h, hd = _metric_at(fam, s, x)
    return float(np.max(np.abs(tf.dot(s) + 0.5 * endo_action(sharp(h, hd), tf(s), tf.kinds))))


def parallel_residual(fam, tf, s, grid):
    """``nabla^{h_s} eta_s`` on the fibre grid as a Field (derivative index first)."""
    x = grid.coords()
    h = fam.h(s, tuple(x))
    g = MetricField(Field(grid, h, (2, 0), symmetric=True))
    eta = Field(grid, tf(s), tf.valence, kinds=tf.kinds)
    return covariant_derivative(eta, g)


# ---------------------------------------------------------------- Kaehler


@dataclass
class TypeDecomposition2Form:
    beta11: np.ndarray
    betaminus: np.ndarray


def type_decomposition(beta, J):
    """``beta = beta11 + betaminus`` with ``beta(JX, JY)`` even / odd."""
    bJ = einsum("...ia,...ij,...jb->...ab", J, beta, J)
    return TypeDecomposition2Form(0.5 * (beta + bJ), 0.5 * (beta - bJ))


def kaehler_form(h, J):
    """``omega(X, Y) = h(JX, Y)``, i.e. ``omega = J^T h``."""
    return np.swapaxes(J, -1, -2) @ h


@dataclass
class KaehlerResult:
    flow_res_J: float
    flow_res_omega: float
    type_dec: TypeDecomposition2Form
    minus_mass: float
    lemma_verdict: bool
    su_div_res: float = None
    su_trace_res: float = None


def kaehler_checks(h, hdot, J, Jdot, omega, omegadot, tol=1e-10, compat_tol=1e-10):
    """Flow residuals, type decomposition of ``omega_dot`` and the lemma verdict.

    ``lemma_verdict`` is True when "both flow residuals below ``tol``" and
    "``Lambda^2_-`` part of ``omega_dot`` below ``tol``" agree.
    """
    m = h.shape[-1]
    if np.max(np.abs(J @ J + np.eye(m))) > compat_tol:
        raise FlowError("J^2 != -Id")
    if np.max(np.abs(kaehler_form(h, J) - omega)) > compat_tol:
        raise FlowError("(h, J, omega) are not compatible")
    A = sharp(h, hdot)
    rJ = float(np.max(np.abs(Jdot + 0.5 * endo_action(A, J, "ul"))))
    rw = float(np.max(np.abs(omegadot + 0.5 * endo_action(A, omega, "ll"))))
    dec = type_decomposition(omegadot, J)
    minus = float(np.max(np.abs(dec.betaminus)))
    verdict = (max(rJ, rw) < tol) == (minus < tol)
    return KaehlerResult(rJ, rw, dec, minus, verdict)


def kaehler_instance(rng, m=4, flow=True, scale=1.0):
    """Random compatible ``(h, hdot, J, Jdot, omega, omegadot)`` at one point.

    ``h = M^T M`` and ``J = M^{-1} J0 M`` with ``cond(M) <= 10`` (``M`` is
    redrawn otherwise, so round-off stays far below the 1e-10 thresholds).
    ``Jdot`` is the flow value plus,
    when ``flow`` is False, a rotation ``[B, J]`` with ``B`` ``h``-skew and
    anticommuting with ``J``, which keeps ``(h, J)`` compatible to first order.
    """
    if m % 2:
        raise FlowError("Kaehler structures need even dimension")
    M = np.eye(m) + 0.3 * rng.standard_normal((m, m))
    while np.linalg.cond(M) > 10:
        M = np.eye(m) + 0.3 * rng.standard_normal((m, m))
    h = M.T @ M
    J0 = np.kron(np.eye(m // 2), np.array([[0.0, -1.0], [1.0, 0.0]]))
    J = np.linalg.solve(M, J0 @ M)
    S = rng.standard_normal((m, m))
    hdot = scale * (S + S.T) / 2
    Jdot = -0.5 * endo_action(sharp(h, hdot), J, "ul")
    if not flow:
        C = rng.standard_normal((m, m))
        B = np.linalg.solve(h, C - C.T)
        B = 0.5 * (B + J @ B @ J)
        B *= scale / max(np.max(np.abs(B)), 1e-300)
        Jdot = Jdot + (B @ J - J @ B)
    omega = kaehler_form(h, J)
    omegadot = np.swapaxes(Jdot, -1, -2) @ h + np.swapaxes(J, -1, -2) @ hdot
    return h, hdot, J, Jdot, omega, omegadot


def su_trace(mixed, J, W=None, ginv=None):
    """``tr(J o R(X, Y))`` for coordinate pairs, minus the slice terms when ``W`` is given.

    ``mixed[..., a, b, c, d] = R^a_{bcd}`` so that ``R(d_c, d_d)`` is the
    matrix ``mixed[..., :, :, c, d]``.  With ``W`` the result is the defect
    ``tr(J o R(X, Y)) + W(Y, J W X) - W(X, J W Y)``.
    """
    tr = einsum("...ba,...abcd->...cd", J, mixed)
    if W is not None:
        Wsh = einsum("...ab,...bc->...ac", ginv, W)
        T = einsum("...ya,...ab,...bx->...xy", W, J, Wsh)
        tr = tr + T - np.swapaxes(T, -1, -2)
    return tr


def kaehler_family_checks(fam, J, s, grid, W=None):
    """SU residuals on the fibre grid at ``s``: ``linf(delta hdot)`` and the trace defect."""
    x = tuple(grid.coords())
    h, hd = fam.h(s, x), fam.hdot(s, x)
    g = MetricField(Field(grid, h, (2, 0), symmetric=True))
    div = divergence(Field(grid, hd, (2, 0), symmetric=True), g).data
    tr = su_trace(curvature(g).mixed, J, W, g.inv if W is not None else None)
    return float(np.max(np.abs(div))), float(np.max(np.abs(tr)))


def hyperkaehler_checks(h, hdot, Js, Jdots, tol=1e-10):
    """Three Kaehler checks plus the quaternion relation ``J1 J2 = J3``."""
    if np.max(np.abs(Js[0] @ Js[1] - Js[2])) > tol:
        raise FlowError("J1 J2 != J3")
    out = []
    for J, Jd in zip(Js, Jdots):
        w = kaehler_form(h, J)
        wd = np.swapaxes(Jd, -1, -2) @ h + np.swapaxes(J, -1, -2) @ hdot
        out.append(kaehler_checks(h, hdot, J, Jd, w, wd, tol))
    return out


# ---------------------------------------------------------------- G2

_PHI0_TERMS = ((1, 2, 3, 1), (1, 4, 5, 1), (1, 6, 7, 1), (2, 4, 6, 1),
               (2, 5, 7, -1), (3, 4, 7, -1), (3, 5, 6, -1))
TRIPLES = tuple(itertools.combinations(range(7), 3))


def _perm_sign(p):
    p = list(p)
    sgn = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sgn = -sgn
    return sgn


def form_from_components(idx_vals, m, k):
    """Full antisymmetric array from ``{sorted index tuple: value}``."""
    out = np.zeros((m,) * k)
    for I, v in idx_vals.items():
        for p in itertools.permutations(range(k)):
            out[tuple(I[q] for q in p)] = _perm_sign(p) * v
    return out


def phi0():
    """``e123 + e145 + e167 + e246 - e257 - e347 - e356`` on ``R^7``."""
    return form_from_components({(a - 1, b - 1, c - 1): s for a, b, c, s in _PHI0_TERMS}, 7, 3)


def hodge_star(beta, k):
    """Euclidean Hodge star of a ``k``-form on ``R^m`` (full antisymmetric arrays)."""
    m = beta.shape[0]
    vals = {}
    for J in itertools.combinations(range(m), m - k):
        I = tuple(i for i in range(m) if i not in J)
        # beta ^ *beta = |beta|^2 vol: *e^I = sign(I, J) e^J
        vals[J] = _perm_sign(I + J) * beta[I]
    return form_from_components(vals, m, m - k)


def interior(X, psi):
    """``X _| psi`` into the first slot."""
    return np.tensordot(X, psi, axes=(0, 0))


def _sym0_basis():
    out = []
    for i in range(6):
        E = np.zeros((7, 7))
        E[i, i], E[6, 6] = 1.0, -1.0
        out.append(E)
    for i, j in itertools.combinations(range(7), 2):
        E = np.zeros((7, 7))
        E[i, j] = E[j, i] = 1.0
        out.append(E)
    return out


def _coords3(beta):
    return np.array([beta[I] for I in TRIPLES])


def g2_basis_matrix():
    """Columns: images of ``r = 1``, the 27 ``Sym_0`` basis elements and ``e_i``."""
    phi = phi0()
    sphi = hodge_star(phi, 3)
    cols = [_coords3(phi)]
    cols += [_coords3(endo_action(S, phi, "lll")) for S in _sym0_basis()]
    cols += [_coords3(interior(np.eye(7)[i], sphi)) for i in range(7)]
    M = np.array(cols).T
    cond = np.linalg.cond(M)
    if cond >= 1e6:
        raise FlowError(f"G2 decomposition matrix is ill conditioned ({cond:.2e})")
    return M


@dataclass
class G2Coordinates:
    r: float
    S: np.ndarray
    X: np.ndarray

    def reconstruct(self):
        phi = phi0()
        return self.r * phi + endo_action(self.S, phi, "lll") + interior(self.X, hodge_star(phi, 3))


def g2_decompose(beta):
    """Coordinates ``(r, S, X)`` of a 3-form with ``beta = r phi0 + S . phi0 + X _| *phi0``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (7, 7, 7):
        raise FlowError("G2 decomposition needs a 3-form on R^7")
    c = np.linalg.solve(g2_basis_matrix(), _coords3(beta))
    S = sum(ci * B for ci, B in zip(c[1:28], _sym0_basis()))
    return G2Coordinates(float(c[0]), S, c[28:])


def g2_projectors():
    """``(P1, P27, P7)`` on the 35 coordinates of ``Lambda^3 R^7``."""
    M = g2_basis_matrix()
    Minv = np.linalg.inv(M)
    out = []
    for sl in (slice(0, 1), slice(1, 28), slice(28, 35)):
        out.append(M[:, sl] @ Minv[sl, :])
    return tuple(out)


def g2_flow_residual(phidot):
    """``phidot + 1/2 hdot . phi0`` with the metric velocity read off the decomposition.

    ``r phi0 = -(r/3) Id . phi0``, so ``phidot = S' . phi0 + X _| *phi0`` with
    ``S' = S - (r/3) Id``; pulling back ``phi0`` by ``exp(eps A)`` changes it by
    ``-eps A . phi0`` and the metric by ``2 eps A``, hence ``hdot = -2 S'``.
    """
    c = g2_decompose(phidot)
    hdot = -2 * (c.S - c.r / 3 * np.eye(7))
    return phidot + 0.5 * endo_action(hdot, phi0(), "lll")
