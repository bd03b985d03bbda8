"""
Exterior algebra with metric-dependent Clifford multiplication.

A multivector in ``D`` dimensions is a vector of ``2**D`` coefficients in the
monomial basis ``sigma^I``; the monomial for the index set ``I`` sits at the
bitmask ``sum(1 << i for i in I)``.  All operators are stored as dense
``2**D x 2**D`` matrices with exact integer signs, and act by matrix-vector
products, so they broadcast over grid points.

Clifford multiplication is ``c(X) w = X_flat ^ w - X _| w``, hence
``c(X)^2 = -g(X, X)``.

Examples
--------
>>> import numpy as np
>>> eta = np.diag([-1.0, 1.0])
>>> c0 = clifford_matrix(np.array([1.0, 0.0]), eta)
>>> (c0 @ basis_monomial(2, ())).tolist()   # c(e0) 1 = -sigma^0
[0.0, -1.0, 0.0, 0.0]
"""

from functools import lru_cache

import numpy as np

from .grid import einsum

__all__ = [
    "CliffordError",
    "MultiVector",
    "Frame",
    "wedge_matrices",
    "interior_matrices",
    "clifford_matrix",
    "clifford_multiply",
    "apply_clifford",
    "gather_tables",
    "wedge",
    "insert",
    "minkowski_clifford",
    "lambda_inner",
    "basis_monomial",
    "degree_mask",
    "gram_schmidt_frame",
]


class CliffordError(ValueError):
    pass


def _sign(mask, i):
    # (-1)^(number of set bits below i)
    return -1.0 if bin(mask & ((1 << i) - 1)).count("1") % 2 else 1.0


@lru_cache(maxsize=None)
def wedge_matrices(D):
    """``E[i]`` represents ``sigma^i ^ .``; shape ``(D, 2**D, 2**D)``."""
    K = 1 << D
    E = np.zeros((D, K, K))
    for i in range(D):
        for I in range(K):
            if not I >> i & 1:
                E[i, I | 1 << i, I] = _sign(I, i)
    E.setflags(write=False)
    return E


@lru_cache(maxsize=None)
def interior_matrices(D):
    """``P[i]`` represents insertion of the coordinate vector ``e_i``."""
    P = np.ascontiguousarray(np.swapaxes(wedge_matrices(D), 1, 2))
    P.setflags(write=False)
    return P


@lru_cache(maxsize=None)
def degree_mask(D, k):
    return np.array([bin(I).count("1") == k for I in range(1 << D)])


@lru_cache(maxsize=None)
def gather_tables(D):
    """Signed gathers for wedge and insertion: ``(E_i w)[J] = sE[i, J] * w[iE[i, J]]``."""
    K = 1 << D
    iE = np.zeros((D, K), dtype=int)
    sE = np.zeros((D, K))
    iP = np.zeros((D, K), dtype=int)
    sP = np.zeros((D, K))
    for i in range(D):
        bit = 1 << i
        for J in range(K):
            if J & bit:
                iE[i, J] = J ^ bit
                sE[i, J] = _sign(J ^ bit, i)
            else:
                iP[i, J] = J | bit
                sP[i, J] = _sign(J, i)
    for a in (iE, sE, iP, sP):
        a.setflags(write=False)
    return iE, sE, iP, sP


def wedge(i, w):
    """``sigma^i ^ w`` on coefficient arrays ``w[..., 2**D]``."""
    iE, sE, _, _ = gather_tables(w.shape[-1].bit_length() - 1)
    return sE[i] * w[..., iE[i]]


def insert(i, w):
    """Insertion of the coordinate vector ``e_i`` into ``w``."""
    _, _, iP, sP = gather_tables(w.shape[-1].bit_length() - 1)
    return sP[i] * w[..., iP[i]]


def apply_clifford(X, w, g):
    """``c(X) w`` pointwise without forming matrices; ``X[..., D]``, ``w[..., 2**D]``."""
    flat = einsum("...ab,...b->...a", g, X)
    out = np.zeros(np.broadcast_shapes(w.shape, X.shape[:-1] + (w.shape[-1],)))
    for i in range(X.shape[-1]):
        out += flat[..., i, None] * wedge(i, w) - X[..., i, None] * insert(i, w)
    return out


def basis_monomial(D, idx):
    v = np.zeros(1 << D)
    mask = 0
    for i in sorted(idx):
        mask |= 1 << i
    v[mask] = 1.0
    return v


def clifford_matrix(X, g):
    """Matrix of ``c(X)`` for vector(s) ``X[..., D]`` and metric(s) ``g[..., D, D]``."""
    X = np.asarray(X, dtype=float)
    g = np.asarray(g, dtype=float)
    D = X.shape[-1]
    if g.shape[-1] != D:
        raise CliffordError(f"vector of dimension {D} against a {g.shape[-1]}-d metric")
    flat = einsum("...ab,...b->...a", g, X)
    E = wedge_matrices(D)
    P = interior_matrices(D)
    return einsum("...i,ijk->...jk", flat, E) - einsum("...i,ijk->...jk", X, P)


def clifford_multiply(X, w, g):
    """``c(X) w`` for a :class:`MultiVector` or a raw coefficient array."""
    coeffs = w.coeffs if isinstance(w, MultiVector) else np.asarray(w, dtype=float)
    if coeffs.shape[-1] != 1 << np.shape(X)[-1]:
        raise CliffordError("vector and multivector dimensions differ")
    out = einsum("...jk,...k->...j", clifford_matrix(X, g), coeffs)
    return MultiVector(out) if isinstance(w, MultiVector) else out


@lru_cache(maxsize=None)
def minkowski_clifford(D):
    """``c(e_mu)`` for the standard basis of Minkowski space, shape ``(D, K, K)``."""
    eta = np.diag([-1.0] + [1.0] * (D - 1))
    C = np.stack([clifford_matrix(np.eye(D)[m], eta) for m in range(D)])
    C.setflags(write=False)
    return C


def lambda_inner(a, b):
    """Euclidean product of coefficient vectors: monomials are orthonormal."""
    a = a.coeffs if isinstance(a, MultiVector) else np.asarray(a)
    b = b.coeffs if isinstance(b, MultiVector) else np.asarray(b)
    if a.shape[-1] != b.shape[-1]:
        raise CliffordError("multivectors of different dimension")
    return einsum("...i,...i->...", a, b)


class MultiVector:
    """Coefficients of a multivector in the bitmask monomial basis."""

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        K = coeffs.shape[-1]
        D = K.bit_length() - 1
        if K != 1 << D:
            raise CliffordError(f"coefficient length {K} is not a power of two")
        self.coeffs = coeffs
        self.dim = D

    def degree(self, k):
        """The ``Lambda^k`` block, in increasing bitmask order."""
        return self.coeffs[..., degree_mask(self.dim, k)]

    def __repr__(self):
        return f"MultiVector(dim={self.dim}, coeffs={self.coeffs!r})"


class Frame:
    """Orthonormal frame ``s_mu = zeta[mu, nu] d_nu`` with causal signs ``eps``."""

    def __init__(self, zeta, eps):
        self.zeta = zeta
        self.eps = eps


def gram_schmidt_frame(g, check=True):
    """Gram-Schmidt applied to ``(d_t, d_1, ..., d_n)``.

    Works pointwise on ``g[..., D, D]``.  The result is lower triangular with
    positive diagonal, ``s_0`` is the unit future vector along ``d_t`` and the
    ``s_i`` are spacelike.
    """
    g = np.asarray(g, dtype=float)
    D = g.shape[-1]
    if check:
        if np.any(g[..., 0, 0] >= 0):
            raise CliffordError("d_t is not timelike")
        if D > 1 and np.any(np.linalg.eigvalsh(g[..., 1:, 1:])[..., 0] <= 0):
            raise CliffordError("spatial block is not positive definite")
        if np.any(np.linalg.inv(g)[..., 0, 0] >= 0):
            raise CliffordError("dt(grad t) is not negative: slices are not spacelike")
    eps = np.array([-1.0] + [1.0] * (D - 1))
    zeta = np.zeros(g.shape)
    for i in range(D):
        v = np.zeros(g.shape[:-1])
        v[..., i] = 1.0
        for j in range(i):
            s = zeta[..., j, :]
            proj = einsum("...a,...ab,...b->...", v, g, s)
            v = v - eps[j] * proj[..., None] * s
        norm2 = eps[i] * einsum("...a,...ab,...b->...", v, g, v)
        if check and np.any(norm2 <= 0):
            raise CliffordError(f"frame vector {i} degenerates")
        zeta[..., i, :] = v / np.sqrt(norm2)[..., None]
    return Frame(zeta, eps)
