"""
Periodic grids, tensor-valued fields and finite differences.

Every array in the package is stored grid-first: a field with component shape
``c`` on a grid of shape ``(N1, ..., Nn)`` is an array of shape
``(N1, ..., Nn) + c``.  Spacetime index 0 is time, index ``i >= 1`` refers to
grid axis ``i - 1``.

Examples
--------
>>> import numpy as np
>>> g = make_grid(1, [64], [2 * np.pi])
>>> x, = g.coords()
>>> df = d1(np.sin(x), 0, g.spacing[0])
>>> bool(np.max(np.abs(df - np.cos(x))) < 1e-5)
True
"""

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

__all__ = [
    "einsum",
    "Grid",
    "Field",
    "GridError",
    "make_grid",
    "d1",
    "gradient",
    "partial_derivative",
    "ko_dissipation",
    "field_norms",
    "pack_symmetric",
    "unpack_symmetric",
    "write_field",
    "read_field",
]


def einsum(subscripts, *operands):
    """``np.einsum`` with contraction-path optimisation for three or more operands."""
    return np.einsum(subscripts, *operands, optimize=len(operands) > 2)


class GridError(ValueError):
    """Raised for invalid grid parameters or incompatible fields."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on a torus ``prod_i [0, L_i)``."""

    dim: int
    sizes: tuple
    lengths: tuple

    @property
    def shape(self):
        return tuple(self.sizes)

    @property
    def spacing(self):
        return tuple(L / N for L, N in zip(self.lengths, self.sizes))

    @property
    def npoints(self):
        return int(np.prod(self.sizes))

    def coords(self):
        """Coordinate arrays (``indexing='ij'``), one per axis."""
        axes = [np.arange(N) * h for N, h in zip(self.sizes, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def refine(self, factor=2):
        return make_grid(self.dim, [N * factor for N in self.sizes], self.lengths)


def make_grid(dim, sizes, lengths):
    """Validate and build a :class:`Grid`.

    Each axis needs at least 8 points, since the 6th-order dissipation stencil
    spans 7 points.
    """
    if dim not in (1, 2, 3):
        raise GridError(f"grid dimension must be 1, 2 or 3, got {dim}")
    sizes = tuple(int(N) for N in sizes)
    lengths = tuple(float(L) for L in lengths)
    if len(sizes) != dim or len(lengths) != dim:
        raise GridError("sizes and lengths must have one entry per axis")
    if min(sizes) < 8:
        raise GridError(f"every axis needs at least 8 points, got {sizes}")
    if min(lengths) <= 0:
        raise GridError("axis lengths must be positive")
    return Grid(dim, sizes, lengths)


@dataclass
class Field:
    """Tensor field sampled on a grid.

    ``valence`` is ``(covariant rank, contravariant rank)``; ``ambient`` says
    whether the component indices run over space (``n``) or spacetime
    (``n + 1``).  ``kinds`` gives the layout of the component axes, one
    letter per axis: ``"l"`` lower, ``"u"`` upper; by default lower slots come
    first.
    """

    grid: Grid
    data: np.ndarray
    valence: tuple = (0, 0)
    ambient: str = "spatial"
    symmetric: bool = False
    meta: dict = dc_field(default_factory=dict)
    kinds: str = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape[: self.grid.dim] != self.grid.shape:
            raise GridError(
                f"data shape {self.data.shape} does not start with grid shape {self.grid.shape}")
        if self.kinds is None:
            self.kinds = "l" * self.valence[0] + "u" * self.valence[1]
        if sorted(self.kinds) != sorted("l" * self.valence[0] + "u" * self.valence[1]):
            raise GridError(f"kinds {self.kinds!r} disagree with valence {self.valence}")

    @property
    def components(self):
        return self.data.shape[self.grid.dim:]

    def like(self, data, **kw):
        opts = dict(valence=self.valence, ambient=self.ambient, symmetric=self.symmetric,
                    kinds=self.kinds)
        opts.update(kw)
        return Field(self.grid, data, **opts)


# 4th-order centred first derivative
_D1 = {-2: 1.0 / 12.0, -1: -8.0 / 12.0, 1: 8.0 / 12.0, 2: -1.0 / 12.0}

# binomial stencil of the 6th difference
_D6 = {-3: 1.0, -2: -6.0, -1: 15.0, 0: -20.0, 1: 15.0, 2: -6.0, 3: 1.0}


def d1(arr, axis, h):
    """4th-order periodic first derivative of ``arr`` along grid ``axis``."""
    out = np.zeros_like(arr)
    for shift, w in _D1.items():
        out += w * np.roll(arr, -shift, axis=axis)
    return out / h


def gradient(arr, grid):
    """Stack of first derivatives, inserted as the first component axis."""
    return np.stack([d1(arr, a, grid.spacing[a]) for a in range(grid.dim)], axis=grid.dim)


def partial_derivative(f, axis):
    """Derivative of every component of ``f`` along grid ``axis``."""
    if not 0 <= axis < f.grid.dim:
        raise GridError(f"axis {axis} out of range for a {f.grid.dim}-d grid")
    return f.like(d1(f.data, axis, f.grid.spacing[axis]))


def ko_dissipation(arr, grid, sigma):
    """6th-order Kreiss-Oliger dissipation term, to be added to a right-hand side."""
    if sigma == 0:
        return np.zeros_like(arr)
    out = np.zeros_like(arr)
    for a in range(grid.dim):
        acc = np.zeros_like(arr)
        for shift, w in _D6.items():
            acc += w * np.roll(arr, -shift, axis=a)
        out += acc / (64.0 * grid.spacing[a])
    return sigma * out


def field_norms(f):
    """``(linf, l2)`` over points and components; ``l2`` is the RMS value."""
    data = f.data if isinstance(f, Field) else np.asarray(f)
    if data.size == 0:
        return 0.0, 0.0
    return float(np.max(np.abs(data))), float(np.sqrt(np.mean(data ** 2)))


def _triu(m):
    return np.triu_indices(m)


def pack_symmetric(arr, m):
    """Upper triangle (row-major) of the trailing ``(m, m)`` axes."""
    i, j = _triu(m)
    return arr[..., i, j]


def unpack_symmetric(arr, m):
    i, j = _triu(m)
    out = np.empty(arr.shape[:-1] + (m, m))
    out[..., i, j] = arr
    out[..., j, i] = arr
    return out


def write_field(path, f):
    """JSON header line, then little-endian float64 values, point-major."""
    comp = f.components
    data = f.data
    if f.symmetric and len(comp) >= 2 and comp[-1] == comp[-2]:
        data = pack_symmetric(data, comp[-1])
    header = {
        "dim": f.grid.dim,
        "sizes": list(f.grid.sizes),
        "lengths": list(f.grid.lengths),
        "valence": list(f.valence),
        "ambient": f.ambient,
        "symmetric": bool(f.symmetric),
        "components": list(comp),
        "kinds": f.kinds,
        "meta": f.meta,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        raw = np.frombuffer(fh.read(), dtype="<f8")
    grid = make_grid(header["dim"], header["sizes"], header["lengths"])
    comp = tuple(header["components"])
    if header["symmetric"] and len(comp) >= 2:
        m = comp[-1]
        packed = raw.reshape(grid.shape + comp[:-2] + (m * (m + 1) // 2,))
        data = unpack_symmetric(packed, m)
    else:
        data = raw.reshape(grid.shape + comp)
    return Field(grid, data.copy(), tuple(header["valence"]), header["ambient"],
                 header["symmetric"], header.get("meta", {}), header.get("kinds"))
