"""
Residuals that vanish for an exact solution, evaluated on one slice.

Spatial derivatives are finite differences on the slice.  Time derivatives
never use neighbouring slices: ``d_t gbar = k``, ``d_t k`` comes from the
evolution right-hand side, and for derived quantities ``Q(state)`` (such as
``V`` or ``Z o pr``) ``d_t Q`` is the directional derivative of ``Q`` along
the right-hand side, taken with a 4th-order central stencil in the state.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .evolver import admissibility, projection_data, rhs, symbol_matrices, char_speed
from .geometry import christoffel_arrays, curvature
from .grid import d1, einsum

__all__ = [
    "DiagnosticsError",
    "DiagnosticsReport",
    "REPORT_FIELDS",
    "geometric_derivs",
    "gauge_residual",
    "time_derivative",
    "split_V",
    "delta_L",
    "residual_suite",
    "convergence_order",
    "write_csv",
]

REPORT_FIELDS = ("E", "nablaV", "nullV", "ricci_res", "ZV", "dVZ", "deltaL", "alpha_purity", "grz")


class DiagnosticsError(ValueError):
    pass


@dataclass
class DiagnosticsReport:
    t: float
    norms: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def linf(self, name):
        return self.norms[name][0]

    def row(self):
        out = [self.t]
        for name in REPORT_FIELDS:
            out += list(self.norms.get(name, (float("nan"), float("nan"))))
        out += [self.meta.get(k, float("nan")) for k in ("dt", "c_max", "min_eig_A0")]
        return out

    @staticmethod
    def header():
        cols = ["t"]
        for name in REPORT_FIELDS:
            cols += [f"{name}_linf", f"{name}_l2"]
        return cols + ["dt", "c_max", "min_eig_A0"]


def _norms(a):
    a = np.asarray(a)
    return float(np.max(np.abs(a))), float(np.sqrt(np.mean(a ** 2)))


def geometric_derivs(st):
    """``d_c gbar`` with ``k`` in time and differences of ``gbar`` in space."""
    g = st.grid
    parts = [st.k] + [d1(st.gbar, a, g.spacing[a]) for a in range(g.dim)]
    return np.stack(parts, axis=g.dim)


def gauge_residual(st, bg):
    """``E_nu = -g_mu nu g^ab (Gamma - Gamma~)^mu_ab`` from slice derivatives."""
    ginv = np.linalg.inv(st.gbar)
    _, gam = christoffel_arrays(ginv, geometric_derivs(st))
    gtil, _ = bg.christoffel(st.t)
    return -einsum("...nm,...ab,...mab->...n", st.gbar, ginv, gam - gtil)


def _shift(st, eps, rate):
    return st.with_blocks([b + eps * r for b, r in zip(st.blocks(), rate)], t=st.t + eps)


def time_derivative(func, st, rate, eps=1e-3):
    """``d/dt func(state)`` along ``rate`` by a 4th-order central stencil."""
    fp1, fm1 = func(_shift(st, eps, rate)), func(_shift(st, -eps, rate))
    fp2, fm2 = func(_shift(st, 2 * eps, rate)), func(_shift(st, -2 * eps, rate))
    return (8 * (fp1 - fm1) - (fp2 - fm2)) / (12 * eps)


def split_V(st):
    """``V``, ``u``, ``N`` and ``pr`` from the degree-1 part of ``alpha``."""
    D = st.gbar.shape[-1]
    a1 = np.stack([st.alpha[..., 1 << m] for m in range(D)], -1)
    if not np.any(a1):
        raise DiagnosticsError("alpha has no degree-1 part: V is undefined")
    return projection_data(st.gbar, st.alpha)


def _V(st):
    return projection_data(st.gbar, st.alpha, check=False).V


def _Ztilde(st):
    return projection_data(st.gbar, st.alpha, check=False).zpr(st.Z)


def _L(st):
    Zt = _Ztilde(st)
    tr = einsum("...ab,...ab->...", np.linalg.inv(st.gbar), Zt)
    return Zt - 0.5 * tr[..., None, None] * st.gbar


def _nabla_lower(st, gam, T, Tt):
    """``nabla_c T_{ab...}`` (all slots lower) with ``d_t T = Tt``; derivative index first."""
    g = st.grid
    nd = g.dim
    out = np.stack([Tt] + [d1(T, a, g.spacing[a]) for a in range(g.dim)], axis=nd)
    rank = T.ndim - nd
    letters = "abcdefg"[:rank]
    for pos in range(rank):
        src = letters[:pos] + "z" + letters[pos + 1:]
        out = out - einsum(f"...zy{letters[pos]},...{src}->...y{letters}", gam, T)
    return out


def delta_L(st, bg, rate=None, gam=None):
    """``(delta L)_c = -g^ab nabla_a L_bc`` with ``L = Z~ - tr(Z~) gbar / 2``."""
    rate = rhs(st, bg, check=False) if rate is None else rate
    if gam is None:
        _, gam = christoffel_arrays(np.linalg.inv(st.gbar), geometric_derivs(st))
    L = _L(st)
    nab = _nabla_lower(st, gam, L, time_derivative(_L, st, rate))
    return -einsum("...ab,...abc->...c", np.linalg.inv(st.gbar), nab)


def _grz(st, Z):
    """``N^i N^j Z_ij + tr Z - (scal - |W|^2 + (trW)^2)`` on the slice."""
    from .geometry import MetricField
    from .grid import Field

    n = st.n
    gs = st.gbar[..., 1:, 1:]
    mf = MetricField(Field(st.grid, gs, (2, 0), symmetric=True), check=False)
    beta = st.gbar[..., 0, 1:]
    lapse = 1.0 / np.sqrt(-np.linalg.inv(st.gbar)[..., 0, 0])
    _, gam = christoffel_arrays(mf.inv, mf.dg())
    betal = np.stack([d1(beta, a, st.grid.spacing[a]) for a in range(n)], -2)
    Db = betal - einsum("...cab,...c->...ab", gam, beta)
    W = -(st.k[..., 1:, 1:] - Db - np.swapaxes(Db, -1, -2)) / (2 * lapse[..., None, None])
    Wup = einsum("...ab,...bc->...ac", mf.inv, W)
    trW = np.trace(Wup, axis1=-2, axis2=-1)
    W2 = einsum("...ab,...ba->...", Wup, Wup)
    scal = curvature(mf).scal.data
    prj = projection_data(st.gbar, st.alpha, check=False)
    N = prj.N
    return einsum("...i,...j,...ij->...", N, N, Z) + einsum("...ab,...ab->...", mf.inv, Z) \
        - (scal - W2 + trW ** 2)


def residual_suite(st, bg, which=None, rate=None, point_checks=True):
    """All residuals on the slice ``st`` as a :class:`DiagnosticsReport`.

    ``which`` restricts the computation to a subset of :data:`REPORT_FIELDS`.
    """
    which = set(REPORT_FIELDS if which is None else which)
    ok, msg = admissibility(st.gbar)
    if not ok:
        raise DiagnosticsError(f"state not admissible: {msg}")
    rep = DiagnosticsReport(st.t)
    needs_rate = which & {"nablaV", "ricci_res", "dVZ", "deltaL"}
    if needs_rate and rate is None:
        rate = rhs(st, bg, check=False)
    ginv = np.linalg.inv(st.gbar)
    _, gam = christoffel_arrays(ginv, geometric_derivs(st))
    prj = projection_data(st.gbar, st.alpha, check=False)
    V = prj.V
    valid = prj.u > 1e-8
    if "E" in which or "ricci_res" in which:
        E = gauge_residual(st, bg)
        rep.norms["E"] = _norms(E)
    if "nablaV" in which:
        Vt = time_derivative(_V, st, rate)
        g = st.grid
        dV = np.stack([Vt] + [d1(V, a, g.spacing[a]) for a in range(g.dim)], axis=g.dim)
        nabV = dV + einsum("...mcl,...l->...cm", gam, V)
        rep.norms["nablaV"] = _norms(nabV[valid])
    if "nullV" in which:
        rep.norms["nullV"] = _norms(einsum("...a,...ab,...b->...", V, st.gbar, V))
    if "ricci_res" in which:
        curv = curvature(st.metric(dtt=rate[2]))
        Et = time_derivative(lambda s: gauge_residual(s, bg), st, rate)
        nabE = _nabla_lower(st, gam, E, Et)
        res = curv.ricci.data - prj.zpr(st.Z) + 0.5 * (nabE + np.swapaxes(nabE, -1, -2))
        rep.norms["ricci_res"] = _norms(res)
    if "ZV" in which or "dVZ" in which:
        Zt = prj.zpr(st.Z)
        rep.norms["ZV"] = _norms(einsum("...ab,...a->...b", Zt, V))
    if "dVZ" in which:
        nabZ = _nabla_lower(st, gam, Zt, time_derivative(_Ztilde, st, rate))
        rep.norms["dVZ"] = _norms(einsum("...c,...cab->...ab", V, nabZ)[valid])
    if "deltaL" in which:
        rep.norms["deltaL"] = _norms(delta_L(st, bg, rate, gam))
    if "alpha_purity" in which:
        D = st.gbar.shape[-1]
        mask = np.array([bin(I).count("1") != 1 for I in range(1 << D)])
        rep.norms["alpha_purity"] = _norms(st.alpha[..., mask])
    if "grz" in which:
        rep.norms["grz"] = _norms(_grz(st, st.Z))
    rep.meta["c_max"] = char_speed(st.gbar)
    if point_checks:
        sm = symbol_matrices(st, (0,) * st.grid.dim)
        rep.meta["min_eig_A0"] = sm.min_eig_A0
        rep.meta["symbol_defect"] = sm.symmetry_defect
    for k, (a, b) in rep.norms.items():
        if not (np.isfinite(a) and np.isfinite(b)):
            raise DiagnosticsError(f"non-finite residual {k}")
    return rep


def convergence_order(values, spacings):
    """Least-squares slope of ``log(value)`` against ``log(spacing)``."""
    values = np.asarray(values, dtype=float)
    spacings = np.asarray(spacings, dtype=float)
    if len(values) < 2 or len(values) != len(spacings):
        raise DiagnosticsError("need at least two (value, spacing) pairs")
    if np.any(values <= 0):
        raise DiagnosticsError("values below floor: convergence order undefined for zeros")
    slope, _ = np.polyfit(np.log(spacings), np.log(values), 1)
    return float(slope)


def write_csv(path, reports, extra=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DiagnosticsReport.header())
        for r in reports:
            w.writerow([f"{v:.10e}" if isinstance(v, float) else v for v in r.row()])
