"""Friedrichs mollification, truncation, translation, partitions of unity and
the shift-then-mollify construction near the boundary."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, signal

from .errors import CoverError, DomainError, ParameterError, ResolutionError
from .grid import Box, GridDomain, GridFunction, _as_box


def _bump(r2) -> np.ndarray:
    """exp(-1/(1 - |x|^2)) for |x| < 1, else 0 (argument is |x|^2)."""
    r2 = np.asarray(r2, dtype=float)
    inside = r2 < 1
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - r2, 1.0)), 0.0)


@lru_cache(maxsize=None)
def kernel_constant(N: int) -> float:
    """k with int_{R^N} k exp(-1/(1-|x|^2)) dx = 1."""
    if N == 1:
        mass = integrate.quad(lambda t: _bump(t * t), -1, 1, epsabs=1e-14, epsrel=1e-13)[0]
    elif N == 2:
        mass = 2 * np.pi * integrate.quad(lambda r: r * _bump(r * r), 0, 1, epsabs=1e-14, epsrel=1e-13)[0]
    else:
        raise ParameterError("kernels are provided for N = 1, 2")
    return 1.0 / mass


def friedrichs_kernel(N: int, x) -> np.ndarray:
    """J(x) = k exp(-1/(1-|x|^2)) on the unit ball (continuum normalisation)."""
    x = np.asarray(x, dtype=float)
    r2 = x * x if N == 1 else np.sum(x * x, axis=-1)
    return kernel_constant(N) * _bump(r2)


def kernel_lp_constant(N: int, q: float) -> float:
    """(int J^q)^(1/q), the constant of |u_eps| <= eps^(-N/p) ||J||_q ||u||_p with q = p'."""
    k = kernel_constant(N)
    if N == 1:
        m = integrate.quad(lambda t: (k * _bump(t * t)) ** q, -1, 1, epsabs=1e-14)[0]
    else:
        m = 2 * np.pi * integrate.quad(lambda r: r * (k * _bump(r * r)) ** q, 0, 1, epsabs=1e-14)[0]
    return m ** (1.0 / q)


@dataclass(frozen=True, eq=False)
class MollifierSpec:
    """Sampled J_eps on the grid.  ``weights`` sum to 1 and include the cell volume."""

    eps: float
    spacing: tuple[float, ...]
    weights: np.ndarray = field(repr=False)
    k: float  # discrete normalisation: weights = k exp(-1/(1-|y/eps|^2)) (h/eps)^N

    @property
    def N(self) -> int:
        return len(self.spacing)

    @property
    def radius_nodes(self) -> tuple[int, ...]:
        return tuple((n - 1) // 2 for n in self.weights.shape)

    @property
    def footprint(self) -> np.ndarray:
        return self.weights > 0

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def max_J(self) -> float:
        """max of the discrete kernel profile, k e^(-1)."""
        return self.k * np.exp(-1.0)

    def sup_constant(self, u: GridFunction, p: Optional[float] = None) -> float:
        """c with |u_eps| <= c eps^(-N/p) (p = 1 by default), exact for the discrete convolution."""
        d = u.domain
        mag = u.magnitude()
        if p is None or p == 1:
            return self.max_J * float(np.sum(mag) * d.cell_volume)
        q = p / (p - 1)
        dens = self.weights / self.cell_volume  # J_eps at the nodes
        jq = float(np.sum(dens**q) * self.cell_volume) ** (1 / q)
        up = float(np.sum(mag**p) * d.cell_volume) ** (1 / p)
        return jq * up * self.eps ** (self.N / p)


def build_mollifier(domain: GridDomain, eps: float) -> MollifierSpec:
    if not eps > 0:
        raise DomainError("eps must be positive")
    if eps < 2 * domain.h * (1 - 1e-12):
        raise ResolutionError(f"eps={eps:g} is below twice the grid spacing {domain.h:g}")
    offsets = []
    for h in domain.spacing:
        m = int(np.ceil(eps / h))
        offsets.append(np.arange(-m, m + 1) * h)
    if domain.dim == 1:
        r2 = (offsets[0] / eps) ** 2
    else:
        X, Y = np.meshgrid(*offsets, indexing="ij")
        r2 = (X * X + Y * Y) / eps**2
    prof = _bump(r2)
    cell = float(np.prod(domain.spacing)) / eps**domain.dim
    k = 1.0 / (prof.sum() * cell)
    w = prof / prof.sum()
    w.setflags(write=False)
    return MollifierSpec(eps=float(eps), spacing=domain.spacing, weights=w, k=float(k))


def _dilate(mask: np.ndarray, footprint: np.ndarray) -> np.ndarray:
    # counts of a 0/1 convolution are integers; 0.5 separates them safely
    if not mask.any():
        return mask
    return signal.fftconvolve(mask.astype(float), footprint.astype(float), mode="same") > 0.5


def mollify(u: GridFunction, eps: float, spec: Optional[MollifierSpec] = None) -> GridFunction:
    """u_eps = J_eps * u with zero extension outside the grid.

    Nodes farther than eps from every nonzero node of u are exactly zero.
    """
    spec = spec or build_mollifier(u.domain, eps)
    vals = u.values if u.is_vector else u.values[None]
    reach = _dilate(u.magnitude() != 0, spec.footprint)
    out = np.empty_like(vals)
    for k, comp in enumerate(vals):
        out[k] = np.where(reach, signal.fftconvolve(comp, spec.weights, mode="same"), 0.0)
    return GridFunction(u.domain, out if u.is_vector else out[0])


# -- truncation and translation ---------------------------------------------------------


def _smooth_step(t):
    """0 for t <= 0, 1 for t >= 1, C-infinity in between."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        f = lambda z: np.where(z > 0, np.exp(-1.0 / np.where(z > 0, z, 1.0)), 0.0)
        a, b = f(t), f(1 - t)
    return a / (a + b)


def cutoff(r) -> np.ndarray:
    """chi(r): 1 for r <= 1, 0 for r >= 2, smooth in between."""
    return _smooth_step(2.0 - np.asarray(r, dtype=float))


def truncate(u: GridFunction, R: float, center=None) -> GridFunction:
    """u_R = chi(|x - center| / R) u."""
    if not R > 0:
        raise DomainError("R must be positive")
    d = u.domain
    c = np.zeros(d.dim) if center is None else np.asarray(center, dtype=float)
    r = np.abs(d.points - c[0]) if d.dim == 1 else np.linalg.norm(d.points - c, axis=-1)
    return u.with_values(u.values * cutoff(r / R))


def snap_shift(domain: GridDomain, hvec) -> tuple[np.ndarray, tuple[int, ...]]:
    """Round a shift to the nearest grid multiple; returns (snapped vector, node offsets)."""
    hv = np.zeros(domain.dim) + np.asarray(hvec, dtype=float)
    steps = tuple(int(np.round(v / h)) for v, h in zip(hv, domain.spacing))
    return np.array([k * h for k, h in zip(steps, domain.spacing)]), steps


def shift_nodes(values: np.ndarray, steps: Sequence[int], dim: int) -> np.ndarray:
    """out[i] = values[i - steps] (graph moved by +steps), zero fill."""
    lead = values.ndim - dim
    out = np.zeros_like(values)
    src, dst = [slice(None)] * lead, [slice(None)] * lead
    for k, n in zip(steps, values.shape[lead:]):
        if abs(k) >= n:
            return out
        if k >= 0:
            src.append(slice(0, n - k))
            dst.append(slice(k, n))
        else:
            src.append(slice(-k, n))
            dst.append(slice(0, n + k))
    out[tuple(dst)] = values[tuple(src)]
    return out


def translate(u: GridFunction, hvec) -> GridFunction:
    """(tau_h u)(x) = u(x - h), with h snapped to the grid and zero fill."""
    _, steps = snap_shift(u.domain, hvec)
    return u.with_values(shift_nodes(u.values, steps, u.domain.dim))


# -- partitions of unity ---------------------------------------------------------------


def box_bump(domain: GridDomain, box) -> np.ndarray:
    """Product of 1-D Friedrichs bumps, positive exactly on the open box."""
    box = _as_box(box, domain.dim)
    out = np.ones(domain.shape)
    for axis, (ax, (lo, hi)) in enumerate(zip(domain.axes, box)):
        t = (ax - 0.5 * (lo + hi)) / (0.5 * (hi - lo))
        b = _bump(t * t) * np.e
        if domain.dim == 1:
            out = out * b
        else:
            out = out * (b[:, None] if axis == 0 else b[None, :])
    return out


def partition_of_unity(domain: GridDomain, cover: Sequence, K=None) -> list[GridFunction]:
    """psi_i = b_i / sum_j b_j where the sum is positive, for bumps b_i on the boxes.

    Raises CoverError if some node of the compact K is not covered.
    """
    bumps = [box_bump(domain, b) for b in cover]
    total = np.sum(bumps, axis=0)
    K_mask = domain.omega_mask if K is None else domain.box_mask(K)
    uncovered = K_mask & (total <= 0)
    if uncovered.any():
        idx = tuple(int(i[0]) for i in np.nonzero(uncovered))
        raise CoverError(f"K is not covered at node {idx} (x = {np.asarray(domain.points[idx]).tolist()})")
    safe = np.where(total > 0, total, 1.0)
    return [GridFunction(domain, np.where(total > 0, b / safe, 0.0)) for b in bumps]


def interval_cover(omega: tuple[float, float], n_interior: int = 1, overlap: float = 0.1, z: float = 0.5):
    """Automatic 1-D cover of [a, b]: one piece per end point plus interior pieces.

    Returns a list of CoverPiece; boundary pieces carry the inward segment vector.
    """
    a, b = omega
    L = b - a
    w = overlap * L
    pieces = [
        CoverPiece(outer=((a - 2 * w, a + 4 * w),), inner=((a - w, a + 3 * w),), z=(abs(z) * L,)),
        CoverPiece(outer=((b - 4 * w, b + 2 * w),), inner=((b - 3 * w, b + w),), z=(-abs(z) * L,)),
    ]
    edges = np.linspace(a + w, b - w, n_interior + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        pad = w / 2
        pieces.append(CoverPiece(outer=((lo - pad, hi + pad),), inner=((lo, hi),), z=None))
    return pieces


# -- segment cover ---------------------------------------------------------------------


@dataclass(frozen=True)
class CoverPiece:
    outer: Box  # theta-hat
    inner: Box  # theta-prime, compactly inside outer
    z: Optional[tuple[float, ...]] = None  # segment vector; None for an interior piece

    def __post_init__(self):
        object.__setattr__(self, "outer", _as_box(self.outer))
        object.__setattr__(self, "inner", _as_box(self.inner, len(self.outer)))
        if self.z is not None:
            z = tuple(float(v) for v in np.ravel(self.z))
            if len(z) != len(self.outer) or not np.any(np.array(z) != 0):
                raise CoverError("segment vector must be nonzero and match the dimension")
            object.__setattr__(self, "z", z)

    @property
    def inner_gap(self) -> float:
        """dist(theta', boundary of theta-hat) for nested boxes."""
        return float(min(min(i_lo - o_lo, o_hi - i_hi) for (i_lo, i_hi), (o_lo, o_hi) in zip(self.inner, self.outer)))

    @property
    def znorm(self) -> float:
        return float(np.linalg.norm(self.z)) if self.z is not None else 0.0


def _box_intersection(a: Box, b: Box) -> Optional[Box]:
    out = tuple((max(x0, y0), min(x1, y1)) for (x0, x1), (y0, y1) in zip(a, b))
    return None if any(lo > hi for lo, hi in out) else out


def _dist_point_box(pts: np.ndarray, box: Box) -> np.ndarray:
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return np.linalg.norm(pts - np.clip(pts, lo, hi), axis=-1)


@dataclass(frozen=True, eq=False)
class SegmentCover:
    """Cover of the closed box Omega by pieces with segment vectors, plus the partition psi."""

    domain: GridDomain
    pieces: tuple[CoverPiece, ...]
    K: Box
    psi: tuple[GridFunction, ...] = field(repr=False)

    @property
    def omega(self) -> Box:
        return self.domain.omega

    def r_max(self, i: int) -> float:
        pc = self.pieces[i]
        if pc.z is None:
            return 0.0
        return min(1.0 / (pc.znorm + 1.0), pc.inner_gap / pc.znorm)

    def gamma_points(self, i: int, n: int = 401) -> np.ndarray:
        """Sample of Gamma_i = closure(theta'_i) intersected with the boundary of Omega."""
        pc = self.pieces[i]
        inner = pc.inner
        pts = []
        dim = len(inner)
        for axis in range(dim):
            for side in (0, 1):
                face_val = self.omega[axis][side]
                if not (inner[axis][0] <= face_val <= inner[axis][1]):
                    continue
                if dim == 1:
                    pts.append(np.array([[face_val]]))
                    continue
                other = 1 - axis
                rng = _box_intersection((inner[other],), (self.omega[other],))
                if rng is None:
                    continue
                t = np.linspace(rng[0][0], rng[0][1], n)
                face = np.empty((n, 2))
                face[:, axis] = face_val
                face[:, other] = t
                pts.append(face)
        return np.concatenate(pts) if pts else np.empty((0, dim))

    def eps_max(self, i: int, r: float, direction: str = "outward") -> float:
        """Admissible mollification radius after shifting piece i by r."""
        pc = self.pieces[i]
        if pc.z is None:
            # interior piece: keep J_eps * u_0 inside Omega
            lo = min(min(i_lo - o_lo, o_hi - i_hi) for (i_lo, i_hi), (o_lo, o_hi) in zip(pc.inner, self.omega))
            return float(lo)
        z = np.array(pc.z)
        if direction == "outward":
            g = self.gamma_points(i) - r * z
            target = _box_intersection(pc.outer, self.omega)
            if g.size == 0 or target is None:
                return np.inf
            return float(np.min(_dist_point_box(g, target)))
        if direction == "inward":
            base = _box_intersection(pc.inner, self.omega)
            if base is None:
                return np.inf
            moved = [(lo + r * zc, hi + r * zc) for (lo, hi), zc in zip(base, z)]
            return float(min(min(lo - o_lo, o_hi - hi) for (lo, hi), (o_lo, o_hi) in zip(moved, self.omega)))
        raise ParameterError(f"direction must be 'outward' or 'inward', got {direction!r}")

    def snap_shift(self, i: int, r: float) -> tuple[float, np.ndarray]:
        """r z_i rounded toward zero onto the grid; returns (effective r, shift vector)."""
        z = np.array(self.pieces[i].z)
        shift = np.array([np.sign(v) * _snap_down(abs(v), h) for v, h in zip(r * z, self.domain.spacing)])
        return float(np.linalg.norm(shift) / np.linalg.norm(z)), shift

    def check_segment_property(self, i: int, n: int = 41) -> bool:
        """(closure(Omega) cap theta-hat_i) + t z_i lies in Omega for sampled t in (0, 1)."""
        pc = self.pieces[i]
        if pc.z is None:
            return True
        base = _box_intersection(pc.outer, self.omega)
        if base is None:
            return True
        axes = [np.linspace(lo, hi, n) for lo, hi in base]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(base))
        z = np.array(pc.z)
        lo = np.array([b[0] for b in self.omega])
        hi = np.array([b[1] for b in self.omega])
        for t in np.linspace(0, 1, n)[1:-1]:
            q = pts + t * z
            if not np.all((q > lo) & (q < hi)):
                return False
        return True


def build_segment_cover(domain: GridDomain, pieces: Sequence, K=None) -> SegmentCover:
    pieces = tuple(p if isinstance(p, CoverPiece) else CoverPiece(**p) for p in pieces)
    for k, pc in enumerate(pieces):
        if pc.inner_gap <= 0:
            raise CoverError(f"piece {k}: inner set is not compactly contained in the outer set")
    K = domain.omega if K is None else _as_box(K, domain.dim)
    psi = partition_of_unity(domain, [pc.inner for pc in pieces], K)
    cover = SegmentCover(domain=domain, pieces=pieces, K=K, psi=tuple(psi))
    for k in range(len(pieces)):
        if not cover.check_segment_property(k):
            raise CoverError(f"piece {k}: segment vector does not push the closure inside Omega")
    return cover


def _snap_down(value: float, h: float) -> float:
    return np.floor(value / h + 1e-9) * h


@dataclass
class ShiftGeometry:
    r: float
    shift: np.ndarray
    eps: float
    r_max: float
    eps_max: float
    leak_free: bool
    support: Optional[Box]
    inside: bool


def shift_parameters(cover: SegmentCover, i: int, r: float, eps: float, direction: str = "outward") -> tuple[float, np.ndarray, float]:
    """Snap r z_i and eps down to grid multiples and validate them.

    Returns (effective r, snapped shift vector, snapped eps).
    """
    pc = cover.pieces[i]
    d = cover.domain
    if pc.z is None:
        raise ParameterError(f"piece {i} is interior and has no segment vector")
    rmax = cover.r_max(i)
    if not (0 < r < rmax):
        raise ParameterError(f"r={r:g} outside (0, r_max={rmax:g})")
    r_eff, shift = cover.snap_shift(i, r)
    if not np.any(shift != 0):
        raise ParameterError("r z snaps to zero on this grid")
    eps_s = _snap_down(eps, d.h)
    emax = cover.eps_max(i, r_eff, direction)
    if not (0 < eps_s < emax):
        raise ParameterError(f"eps={eps:g} outside (0, eps_max={emax:g}) for r={r_eff:g}")
    return r_eff, shift, eps_s


def shifted_mollify(
    u_i: GridFunction,
    cover: SegmentCover,
    i: int,
    r: float,
    eps: float,
    direction: str = "outward",
    restrict: bool = True,
) -> GridFunction:
    """v_i = J_eps * (u_i)_{+-r}, with (u_i)_r(x) = u_i(x + r z_i).

    ``u_i`` is extended by zero outside the closed Omega.  The outward
    result is a smooth function on R^N; with ``restrict`` it is returned
    restricted to the closed Omega, where it approximates u_i.
    """
    _, shift, eps_s = shift_parameters(cover, i, r, eps, direction)
    d = cover.domain
    ext = u_i.restrict(d.omega_mask if not u_i.is_vector else d.omega_mask[None])
    moved = translate(ext, -shift if direction == "outward" else shift)
    v = mollify(moved, eps_s)
    if restrict and direction == "outward":
        v = v.restrict(d.omega_mask if not v.is_vector else d.omega_mask[None])
    return v


def shift_geometry(cover: SegmentCover, i: int, r: float, eps: float, direction: str = "outward", u_i: Optional[GridFunction] = None) -> ShiftGeometry:
    """Discrete checks behind the shifted construction.

    ``leak_free``: no node of closure(Omega) cap theta-hat_i draws on values
    from outside closure(Omega) (outward), i.e. the zero extension is never
    seen there.  ``inside``: for the inward shift, the support of v_i stays
    at positive distance from the boundary.
    """
    r_eff, shift, eps_s = shift_parameters(cover, i, r, eps, direction)
    d = cover.domain
    pc = cover.pieces[i]
    spec = build_mollifier(d, eps_s)
    outside = GridFunction(d, (~d.omega_mask).astype(float))
    s = -shift if direction == "outward" else shift
    seen = mollify(translate(outside, s), eps_s, spec)
    region = d.omega_mask & d.box_mask(pc.outer)
    leak_free = bool(not np.any(seen.values[region] > 0))
    support = None
    inside = True
    if u_i is not None:
        v = shifted_mollify(u_i, cover, i, r, eps, direction)
        support = v.support_box
        if direction == "inward" and support is not None:
            inside = all(lo > o_lo and hi < o_hi for (lo, hi), (o_lo, o_hi) in zip(support, d.omega))
        elif support is not None:
            inside = bool(not np.any(v.magnitude()[~d.omega_mask] != 0))
    return ShiftGeometry(
        r=r_eff,
        shift=shift,
        eps=eps_s,
        r_max=cover.r_max(i),
        eps_max=cover.eps_max(i, r_eff, direction),
        leak_free=leak_free,
        support=support,
        inside=inside,
    )
