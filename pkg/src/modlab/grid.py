"""Uniform cell-centred grids, midpoint quadrature, modulars and Luxemburg norms."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, InputError, NumericalError, ParameterError
from .phi import PhiFunction

Box = tuple[tuple[float, float], ...]


def _as_box(bounds, dim=None) -> Box:
    b = np.asarray(bounds, dtype=float)
    if b.ndim == 1:
        b = b[None, :]
    box = tuple((float(lo), float(hi)) for lo, hi in b)
    if dim is not None and len(box) != dim:
        raise ParameterError(f"expected a {dim}-dimensional box, got {bounds!r}")
    if any(hi <= lo for lo, hi in box):
        raise ParameterError(f"degenerate box {bounds!r}")
    return box


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Cell-centred grid on a box.

    ``omega`` is the box of the domain Omega when the computational box is
    larger (boundary constructions need room outside Omega); it defaults to
    the whole box.  Quadrature is the midpoint rule with weights h^N.
    """

    bounds: Box
    resolution: tuple[int, ...]
    omega: Optional[Box] = None

    def __post_init__(self):
        box = _as_box(self.bounds)
        res = tuple(int(r) for r in np.broadcast_to(np.asarray(self.resolution), (len(box),)))
        if len(box) not in (1, 2):
            raise ParameterError("grids are 1- or 2-dimensional")
        if any(r < 1 for r in res):
            raise ParameterError("resolution must be positive")
        object.__setattr__(self, "bounds", box)
        object.__setattr__(self, "resolution", res)
        omega = box if self.omega is None else _as_box(self.omega, len(box))
        for (a, b), (c, d) in zip(omega, box):
            if a < c - 1e-12 or b > d + 1e-12:
                raise ParameterError("omega must lie inside the computational box")
        object.__setattr__(self, "omega", omega)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.bounds, self.resolution))

    @property
    def h(self) -> float:
        return max(self.spacing)

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(lo + (np.arange(n) + 0.5) * h for (lo, _), n, h in zip(self.bounds, self.resolution, self.spacing))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates: shape (n,) in 1-D, (n1, n2, 2) in 2-D."""
        if self.dim == 1:
            return self.axes[0]
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def omega_mask(self) -> np.ndarray:
        """Nodes inside the closed box of Omega."""
        masks = [(ax >= lo - 1e-12) & (ax <= hi + 1e-12) for ax, (lo, hi) in zip(self.axes, self.omega)]
        return masks[0] if self.dim == 1 else np.logical_and.outer(masks[0], masks[1])

    @cached_property
    def omega_slices(self) -> tuple[slice, ...]:
        """Index ranges of the Omega nodes along each axis."""
        out = []
        for ax, (lo, hi) in zip(self.axes, self.omega):
            idx = np.nonzero((ax >= lo - 1e-12) & (ax <= hi + 1e-12))[0]
            out.append(slice(int(idx[0]), int(idx[-1]) + 1))
        return tuple(out)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.shape, self.cell_volume)

    @property
    def measure(self) -> float:
        """|Omega| (exact; the quadrature reproduces it when omega is the whole box)."""
        return float(np.prod([hi - lo for lo, hi in self.omega]))

    def box_mask(self, box, closed: bool = True) -> np.ndarray:
        box = _as_box(box, self.dim)
        pad = 1e-12 if closed else -1e-12
        masks = [(ax >= lo - pad) & (ax <= hi + pad) if closed else (ax > lo - pad) & (ax < hi + pad) for ax, (lo, hi) in zip(self.axes, box)]
        return masks[0] if self.dim == 1 else np.logical_and.outer(masks[0], masks[1])

    def integrate(self, values, mask=None) -> float:
        """Midpoint quadrature over Omega (or over ``mask``)."""
        m = self.omega_mask if mask is None else mask
        v = np.asarray(values, dtype=float)
        return float(np.sum(np.where(m, v, 0.0)) * self.cell_volume)

    def sample(self, f: Callable) -> "GridFunction":
        return GridFunction(self, np.asarray(f(self.points), dtype=float))

    def zeros(self, components: int = 0) -> "GridFunction":
        shape = self.shape if components == 0 else (components,) + self.shape
        return GridFunction(self, np.zeros(shape))


def interval(lo: float, hi: float, n: int, omega=None) -> GridDomain:
    return GridDomain(((lo, hi),), (n,), omega)


def square(lo: float, hi: float, n: int, omega=None) -> GridDomain:
    return GridDomain(((lo, hi), (lo, hi)), (n, n), omega)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Nodal values on a GridDomain; scalar (domain.shape) or vector ((k,) + domain.shape)."""

    domain: GridDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        shape = self.domain.shape
        if v.shape != shape and v.shape[1:] != shape:
            raise InputError(f"values of shape {v.shape} do not fit the grid {shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def is_vector(self) -> bool:
        return self.values.shape != self.domain.shape

    @property
    def n_components(self) -> int:
        return self.values.shape[0] if self.is_vector else 1

    def component(self, i: int) -> "GridFunction":
        return GridFunction(self.domain, self.values[i]) if self.is_vector else self

    def magnitude(self) -> np.ndarray:
        """|u| pointwise (Euclidean norm over components)."""
        if self.is_vector:
            return np.sqrt(np.sum(self.values**2, axis=0))
        return np.abs(self.values)

    @property
    def support_box(self) -> Optional[Box]:
        """Bounding box of the nonzero nodes (cell edges), or None for u = 0."""
        nz = self.magnitude() != 0
        if not nz.any():
            return None
        out = []
        for axis, (ax, h) in enumerate(zip(self.domain.axes, self.domain.spacing)):
            other = tuple(i for i in range(nz.ndim) if i != axis)
            idx = np.nonzero(nz.any(axis=other) if other else nz)[0]
            out.append((float(ax[idx[0]] - h / 2), float(ax[idx[-1]] + h / 2)))
        return tuple(out)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.domain, values)

    def restrict(self, mask) -> "GridFunction":
        """Zero outside ``mask``."""
        return self.with_values(np.where(mask, self.values, 0.0))

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.domain is not self.domain and (other.domain.bounds, other.domain.resolution) != (self.domain.bounds, self.domain.resolution):
                raise InputError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._other(other))

    def __rsub__(self, other):
        return self.with_values(self._other(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self.with_values(self.values / self._other(c))

    def __neg__(self):
        return self.with_values(-self.values)

    # -- import / export

    def to_csv(self, path) -> None:
        d = self.domain
        idx_cols = ["i", "j"][: d.dim]
        x_cols = ["x", "y"][: d.dim]
        v_cols = ["value"] if not self.is_vector else [f"value_{k}" for k in range(self.n_components)]
        vals = self.values.reshape(self.n_components, -1) if self.is_vector else self.values.reshape(1, -1)
        index = np.stack(np.unravel_index(np.arange(int(np.prod(d.shape))), d.shape), axis=-1)
        coords = d.points.reshape(-1, d.dim)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(idx_cols + x_cols + v_cols)
            for n in range(index.shape[0]):
                w.writerow([*index[n].tolist(), *map(repr, coords[n].tolist()), *map(repr, vals[:, n].tolist())])

    @classmethod
    def from_csv(cls, path, domain: GridDomain) -> "GridFunction":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        v_idx = [k for k, h in enumerate(header) if h.startswith("value")]
        if not v_idx:
            raise InputError(f"{path}: no value column")
        i_idx = [header.index(c) for c in ["i", "j"][: domain.dim]]
        vals = np.zeros((len(v_idx),) + domain.shape)
        for r in rows:
            node = tuple(int(r[k]) for k in i_idx)
            vals[(slice(None),) + node] = [float(r[k]) for k in v_idx]
        return cls(domain, vals[0] if len(v_idx) == 1 else vals)

    _MAGIC = b"MLGF"

    def to_binary(self, path) -> None:
        d = self.domain
        with open(path, "wb") as fh:
            fh.write(self._MAGIC)
            fh.write(struct.pack("<iii", d.dim, self.n_components if self.is_vector else 0, 0))
            fh.write(struct.pack(f"<{d.dim}i", *d.resolution))
            fh.write(struct.pack(f"<{2 * d.dim}d", *[b for pair in d.bounds for b in pair]))
            fh.write(struct.pack(f"<{2 * d.dim}d", *[b for pair in d.omega for b in pair]))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "GridFunction":
        with open(path, "rb") as fh:
            if fh.read(4) != cls._MAGIC:
                raise InputError(f"{path}: not a grid function dump")
            dim, ncomp, _ = struct.unpack("<iii", fh.read(12))
            res = struct.unpack(f"<{dim}i", fh.read(4 * dim))
            b = struct.unpack(f"<{2 * dim}d", fh.read(16 * dim))
            o = struct.unpack(f"<{2 * dim}d", fh.read(16 * dim))
            data = np.frombuffer(fh.read(), dtype="<f8")
        dom = GridDomain(tuple(zip(b[::2], b[1::2])), res, tuple(zip(o[::2], o[1::2])))
        shape = ((ncomp,) if ncomp else ()) + tuple(res)
        return cls(dom, data.reshape(shape).copy())


# -- modulars and norms -----------------------------------------------------------


def _integrand(M: PhiFunction, u: GridFunction, lam: float) -> np.ndarray:
    return np.broadcast_to(M(u.domain.points, u.magnitude() / lam), u.domain.shape)


def modular(M: PhiFunction, u: GridFunction, lam: float = 1.0, mask=None) -> float:
    """rho_M(u / lam) = int_Omega M(x, |u| / lam) dx by the midpoint rule."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    return u.domain.integrate(_integrand(M, u, lam), mask)


def modular_error_estimate(M: PhiFunction, u: GridFunction, lam: float = 1.0, mask=None) -> float:
    """|rho_even - rho_odd|: the two interleaved half-grids integrated separately."""
    vals = _integrand(M, u, lam)
    m = u.domain.omega_mask if mask is None else mask
    vals = np.where(m, vals, 0.0)
    axis = int(np.argmax(u.domain.shape))
    even = np.take(vals, np.arange(0, vals.shape[axis], 2), axis=axis).sum()
    odd = np.take(vals, np.arange(1, vals.shape[axis], 2), axis=axis).sum()
    if not (np.isfinite(even) and np.isfinite(odd)):
        return np.inf
    return float(abs(even - odd) * u.domain.cell_volume)


def luxemburg_norm(M: PhiFunction, u: GridFunction, tol: float = 1e-10, max_iter: int = 60, max_expand: int = 400, mask=None) -> float:
    """inf{lam > 0 : rho_M(u / lam) <= 1} by geometric bisection.

    The bracket starts from ||u||_1 / |Omega| and is widened by doubling or
    halving; the returned value is the upper end, so rho(u / norm) <= 1.
    """
    d = u.domain
    m = d.omega_mask if mask is None else mask
    if not np.any(u.magnitude()[m] != 0):
        return 0.0
    rho = lambda lam: modular(M, u, lam, m)
    lam0 = d.integrate(u.magnitude(), m) / max(d.integrate(np.ones(d.shape), m), np.finfo(float).tiny)
    lo = hi = lam0 if lam0 > 0 else float(np.max(u.magnitude()))
    for _ in range(max_expand):
        if rho(hi) <= 1:
            break
        hi *= 2
    else:
        raise NumericalError("no upper bracket for the Luxemburg norm")
    lo = hi
    for _ in range(max_expand):
        lo /= 2
        if rho(lo) > 1:
            break
        hi = lo
    else:
        raise NumericalError("no lower bracket for the Luxemburg norm")
    for _ in range(max_iter):
        if hi / lo - 1 <= tol:
            break
        mid = np.sqrt(lo * hi)
        if rho(mid) <= 1:
            hi = mid
        else:
            lo = mid
    return float(hi)


def lp_norm(u: GridFunction, p: float = 2.0, mask=None) -> float:
    if p < 1:
        raise DomainError("p must be >= 1")
    return u.domain.integrate(u.magnitude() ** p, mask) ** (1.0 / p)


def gradient(u: GridFunction, within_omega: bool = False) -> GridFunction:
    """Finite-difference gradient, components stacked on axis 0.

    Second-order centred differences inside, second-order one-sided at the
    ends.  With ``within_omega`` the differences are taken on the Omega
    sub-grid only (one-sided at its boundary) and zero outside.
    """
    d = u.domain
    if any(n < 3 for n in d.shape):
        raise ParameterError("gradient needs at least 3 nodes per axis")
    if u.is_vector:
        raise InputError("gradient of a vector field is not supported")
    if not within_omega:
        grads = np.gradient(u.values, *d.spacing, edge_order=2)
        grads = [grads] if d.dim == 1 else grads
        return GridFunction(d, np.stack(grads))
    sl = d.omega_slices
    sub = u.values[sl]
    if any(n < 3 for n in sub.shape):
        raise ParameterError("gradient needs at least 3 nodes per axis inside Omega")
    grads = np.gradient(sub, *d.spacing, edge_order=2)
    grads = [grads] if d.dim == 1 else grads
    out = np.zeros((d.dim,) + d.shape)
    for k, g in enumerate(grads):
        out[(k,) + sl] = g
    return GridFunction(d, out)
