"""Legendre conjugates, convex envelopes and local-infimum envelopes on grids."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConjugateTruncationWarning, DomainError, InputError
from .phi import PhiFunction

PROVENANCES = ("conjugate", "second_conjugate", "local_inf", "local_inf_envelope", "samples")

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class EnvelopeTable:
    """A tabulated function of s >= 0; piecewise-linear between nodes."""

    s: np.ndarray
    values: np.ndarray
    provenance: str
    source: dict = field(default_factory=dict)
    gap: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise InputError(f"unknown provenance {self.provenance!r}")
        s = np.asarray(self.s, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if s.shape != v.shape or s.ndim != 1:
            raise InputError("s and values must be 1-D arrays of equal length")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "values", v)

    def __call__(self, s) -> np.ndarray:
        return np.interp(s, self.s, self.values)

    def __len__(self):
        return len(self.s)

    @property
    def gap_max(self) -> float:
        return 0.0 if self.gap is None else float(np.max(self.gap))

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.s)

    def is_convex(self, tol: float = 1e-9) -> bool:
        sl = self.slopes()
        scale = np.maximum(1.0, np.abs(sl[1:]))
        return bool(np.all(np.diff(sl) >= -tol * scale))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "value", "provenance"])
            for s, v in zip(self.s, self.values):
                w.writerow([repr(float(s)), repr(float(v)), self.provenance])

    @classmethod
    def from_csv(cls, path) -> "EnvelopeTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise InputError(f"{path}: empty table")
        return cls(
            s=np.array([float(r["s"]) for r in rows]),
            values=np.array([float(r["value"]) for r in rows]),
            provenance=rows[0]["provenance"],
        )


# -- conjugation --------------------------------------------------------------


def _auto_t_grid(f: Callable, s_min: float, s_max: float, n: int = 4001) -> np.ndarray:
    """Log grid bracketing every maximiser of s t - f(t) for s in [s_min, s_max].

    Convexity with f(0) = 0 gives f(t)/t <= f'(t) <= f(2t)/t: the upper end
    has f(t)/t > 2 s_max, the lower end f(2t)/t < s_min.
    """
    ev = lambda t: float(np.asarray(f(np.array([t])), dtype=float).reshape(-1)[0])
    hi = 1.0
    for _ in range(400):
        if ev(hi) / hi > 2.0 * s_max:
            break
        hi *= 2.0
    lo = min(hi, 1.0) * 0.5
    if s_min > 0:
        for _ in range(400):
            if ev(2 * lo) / lo < s_min:
                break
            lo *= 0.5
    else:
        lo = hi * 1e-12
    return np.concatenate([[0.0], np.geomspace(lo, hi, n - 1)])


def _secant_gap(G: np.ndarray, t: np.ndarray, k: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Bound on sup_t g - g(t_k) for concave g with grid argmax k.

    Concavity caps g on [t_k, t_{k+1}] by the left secant slope times the
    right step (and symmetrically), which gives the bound.
    """
    n = len(t)
    rows = np.arange(len(k))
    gk = G[rows, k]
    gap = np.zeros(len(k))
    has_left = k > 0
    has_right = k < n - 1
    kl = np.where(has_left, k - 1, k)
    kr = np.where(has_right, k + 1, k)
    dl = t[k] - t[kl]
    dr = t[kr] - t[k]
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(has_left & has_right, (gk - G[rows, kl]) * dr / dl, 0.0)
        right = np.where(has_left & has_right, (gk - G[rows, kr]) * dl / dr, 0.0)
    gap = np.maximum(np.nan_to_num(left, nan=0.0, posinf=np.inf), np.nan_to_num(right, nan=0.0, posinf=np.inf))
    # argmax at t = 0: g(t) <= s t because f >= 0, so the shortfall is at most s t_1 - g_0
    first = (k == 0) & has_right
    gap = np.where(first, s * t[np.minimum(1, n - 1)] - gk, gap)
    return np.maximum(gap, 0.0)


def _golden_max(f: Callable, s: np.ndarray, lo: np.ndarray, hi: np.ndarray, iters: int = 80) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised golden-section search for max_t s*t - f(t) on [lo, hi]."""
    a, b = lo.copy(), hi.copy()
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = s * c - f(c)
    fd = s * d - f(d)
    for _ in range(iters):
        left = fc > fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _GOLDEN * (b - a)
        new_d = a + _GOLDEN * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_next = np.where(left, s * new_c - f(new_c), fd)
        fd_next = np.where(left, fc, s * new_d - f(new_d))
        c, d, fc, fd = c_next, d_next, fc_next, fd_next
    best_t = np.where(fc > fd, c, d)
    return best_t, np.maximum(fc, fd)


def _local_gap(f, s, t0, g0, lo, hi) -> np.ndarray:
    """Secant bound around the refined maximiser t0.

    If g(t0) beats both neighbours t0 -+ delta, concavity puts the supremum
    in [t0 - delta, t0 + delta] and the secant bound applies with a tiny
    step; otherwise inf is returned and the grid bound is kept.
    """
    delta = np.maximum(1e-7 * t0, 1e-300)
    tl = np.maximum(t0 - delta, lo)
    tr = np.minimum(t0 + delta, hi)
    gl = s * tl - f(tl)
    gr = s * tr - f(tr)
    ok = (g0 >= gl) & (g0 >= gr) & (tl < t0) & (tr > t0)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.maximum((g0 - gl) * (tr - t0) / (t0 - tl), (g0 - gr) * (t0 - tl) / (tr - t0))
    floor = 8 * np.finfo(float).eps * (np.abs(s * t0) + np.abs(f(t0)))
    return np.where(ok, np.maximum(bound, 0.0) + floor, np.inf)


def legendre_conjugate(
    M: Union[PhiFunction, EnvelopeTable, Callable],
    x=0.0,
    s_grid=None,
    t_grid=None,
    refine: bool = True,
    chunk: int = 512,
) -> EnvelopeTable:
    """M*(x, s) = sup_{t >= 0} (s t - M(x, t)) tabulated on ``s_grid``.

    The table is a lower bound of the true conjugate; ``gap`` carries a
    per-node bound on the shortfall (exact for convex M).  Tabulated input
    is treated as its piecewise-linear interpolant, whose conjugate is the
    discrete transform over the nodes.  A ``ConjugateTruncationWarning`` is
    issued when some supremum sits at the last t-node.
    """
    if s_grid is None:
        raise InputError("s_grid is required")
    s = np.asarray(s_grid, dtype=float)
    if np.any(s < 0):
        raise DomainError("conjugate is tabulated for s >= 0")
    if isinstance(M, EnvelopeTable):
        t = M.s
        F = M.values
        f = None
        refine = False
        source = {"from": M.provenance}
    else:
        f = M.at(x) if isinstance(M, PhiFunction) else M
        pos = s[s > 0]
        t = _auto_t_grid(f, float(pos.min()) if pos.size else 0.0, float(np.max(s))) if t_grid is None else np.asarray(t_grid, dtype=float)
        t = np.unique(t)
        if t[0] > 0:
            t = np.concatenate([[0.0], t])
        F = np.asarray(f(t), dtype=float)
        source = {"family": getattr(M, "name", "callable"), "x": np.asarray(x).tolist()}

    values = np.empty_like(s)
    gap = np.empty_like(s)
    arg = np.empty(len(s), dtype=int)
    for start in range(0, len(s), chunk):
        sl = slice(start, start + chunk)
        with np.errstate(invalid="ignore", over="ignore"):
            G = s[sl, None] * t[None, :] - F[None, :]
        G = np.where(np.isnan(G), -np.inf, G)
        k = np.argmax(G, axis=1)
        arg[sl] = k
        values[sl] = G[np.arange(len(k)), k]
        gap[sl] = _secant_gap(G, t, k, s[sl])

    at_end = (arg == len(t) - 1) & (s > 0)
    if np.any(at_end):
        warnings.warn(
            f"supremum attained at the last t-node ({t[-1]:g}) for {int(at_end.sum())} s-values; extend the t-grid",
            ConjugateTruncationWarning,
            stacklevel=2,
        )

    if refine and f is not None:
        inner = (arg > 0) & (arg < len(t) - 1)
        if np.any(inner):
            idx = np.nonzero(inner)[0]
            lo = t[arg[idx] - 1]
            hi = t[arg[idx] + 1]
            ff = lambda tt: np.asarray(f(tt), dtype=float)
            t0, best = _golden_max(ff, s[idx], lo, hi)
            improved = best >= values[idx]
            values[idx] = np.maximum(values[idx], best)
            local = _local_gap(ff, s[idx], t0, best, lo, hi)
            gap[idx] = np.where(improved & np.isfinite(local), np.minimum(gap[idx], local), gap[idx])

    return EnvelopeTable(s=s, values=values, provenance="conjugate", source=source, gap=gap)


# -- convex envelopes ---------------------------------------------------------


def lower_convex_hull(s, v) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the lower convex hull of points (s_i, v_i) (monotone chain)."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    order = np.lexsort((v, s))
    s, v = s[order], v[order]
    keep = np.concatenate([[True], np.diff(s) > 0])  # smallest value per abscissa
    s, v = s[keep], v[keep]
    hs: list[float] = []
    hv: list[float] = []
    for px, py in zip(s, v):
        while len(hs) >= 2:
            ax, ay, bx, by = hs[-2], hv[-2], hs[-1], hv[-1]
            if (bx - ax) * (py - ay) - (by - ay) * (px - ax) <= 0:
                hs.pop()
                hv.pop()
            else:
                break
        hs.append(px)
        hv.append(py)
    return np.array(hs), np.array(hv)


def second_conjugate(samples, values=None, provenance: str = "second_conjugate") -> EnvelopeTable:
    """Convex envelope (biconjugate) of sampled points, tabulated on the same nodes.

    ``samples`` is an EnvelopeTable or an array of abscissae (with ``values``).
    """
    if isinstance(samples, EnvelopeTable):
        s, v, source = samples.s, samples.values, dict(samples.source)
    else:
        s = np.asarray(samples, dtype=float)
        v = np.asarray(values, dtype=float)
        source = {}
    if s.shape != v.shape or s.ndim != 1:
        raise InputError("samples and values must be 1-D arrays of equal length")
    if len(s) < 2:
        raise InputError("second_conjugate needs at least 2 points")
    if not np.all(np.isfinite(v)):
        raise InputError("second_conjugate needs finite values")
    hs, hv = lower_convex_hull(s, v)
    if len(hs) == 1:
        out = np.full_like(s, hv[0])
    else:
        out = np.interp(s, hs, hv)
    source["hull_vertices"] = int(len(hs))
    return EnvelopeTable(s=s, values=out, provenance=provenance, source=source)


def lower_hull_bruteforce(s, v) -> np.ndarray:
    """O(n^2 * n) reference: the envelope value at each node is the minimum over
    all chords (i, j) spanning it.  Used as an independent oracle."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    out = v.copy()
    n = len(s)
    for i in range(n):
        for j in range(n):
            if s[i] < s[j]:
                span = (s >= s[i]) & (s <= s[j])
                w = (s[span] - s[i]) / (s[j] - s[i])
                chord = (1 - w) * v[i] + w * v[j]
                out[span] = np.minimum(out[span], chord)
    return out


# -- Fenchel-Young --------------------------------------------------------------


@dataclass
class FenchelYoungReport:
    max_violation: float
    gap_bound: float
    passed: bool
    worst: dict


def verify_fenchel_young(M: PhiFunction, x, u_grid, v_grid, t_grid=None) -> FenchelYoungReport:
    """max over (u, v) of u v - M(x, u) - M*_num(x, v), compared against the conjugate gap."""
    u = np.asarray(u_grid, dtype=float)
    v = np.asarray(v_grid, dtype=float)
    table = legendre_conjugate(M, x, v, t_grid=t_grid)
    Mu = M.at(x)(u)
    viol = u[:, None] * v[None, :] - Mu[:, None] - table.values[None, :]
    i, j = np.unravel_index(np.argmax(viol), viol.shape)
    allowed = viol - table.gap[None, :]
    return FenchelYoungReport(
        max_violation=float(viol[i, j]),
        gap_bound=table.gap_max,
        passed=bool(np.max(allowed) <= 1e-12 * max(1.0, float(np.max(np.abs(table.values))))),
        worst={"u": float(u[i]), "v": float(v[j]), "violation": float(viol[i, j])},
    )


# -- local infimum envelopes -----------------------------------------------------


def ball_sample(x, radius: float, n: int = 33, dim: int = 1, omega=None) -> np.ndarray:
    """Points of the closed ball B(x, radius), intersected with the box ``omega``."""
    x = np.asarray(x, dtype=float)
    if dim == 1:
        pts = np.linspace(float(x) - radius, float(x) + radius, n)
    else:
        r = np.linspace(0.0, radius, max(2, n // 4))
        th = np.linspace(0.0, 2 * np.pi, max(8, n), endpoint=False)
        R, T = np.meshgrid(r, th, indexing="ij")
        pts = np.stack([x[0] + R.ravel() * np.cos(T.ravel()), x[1] + R.ravel() * np.sin(T.ravel())], axis=-1)
        pts = np.unique(np.round(pts, 15), axis=0)
    if omega is not None:
        lo = np.array([b[0] for b in omega])
        hi = np.array([b[1] for b in omega])
        p2 = pts.reshape(len(pts), -1)
        inside = np.all((p2 >= lo) & (p2 <= hi), axis=1)
        pts = pts[inside]
    return pts


def local_inf_envelope(
    M: PhiFunction,
    x,
    eps: float,
    y_sample,
    s_grid,
) -> EnvelopeTable:
    """Convex envelope of s -> inf_y M(y, s) over sampled y in the closed ball B(x, eps/2).

    For families continuous in x the Lebesgue-point regularisation equals M
    itself and is not computed; discontinuous families are flagged in
    ``source['tilde_shortcut_exact']``.
    """
    y = np.asarray(y_sample, dtype=float)
    if y.size == 0:
        raise InputError("empty y-sample")
    s = np.asarray(s_grid, dtype=float)
    x = np.asarray(x, dtype=float)
    if M.dim == 1:
        y = y.reshape(-1)
        d = np.abs(y - float(x))
        vals = M(y[:, None], s[None, :])
    else:
        y = y.reshape(-1, 2)
        d = np.linalg.norm(y - x, axis=1)
        vals = M(y[:, None, :], s[None, :])
    if np.any(d > eps / 2 * (1 + 1e-12) + 1e-15):
        raise InputError("y-sample must lie in the closed ball B(x, eps/2)")
    vals = np.broadcast_to(vals, (len(y), len(s)))
    inf_vals = np.min(vals, axis=0)
    arg = np.argmin(vals, axis=0)
    source = {
        "x": x.tolist(),
        "eps": float(eps),
        "n_sample": int(len(y)),
        "tilde_shortcut_exact": bool(M.continuous_in_x),
        "inf_values": inf_vals,
        "argmin_y": y[arg],
    }
    table = EnvelopeTable(s=s, values=inf_vals, provenance="local_inf", source=source)
    return second_conjugate(table, provenance="local_inf_envelope")


@dataclass
class EnvelopeBoundReport:
    max_ratio: float
    passed: bool
    worst: dict
    degenerate: bool = False


def verify_envelope_bound(
    M: PhiFunction,
    phi,
    x,
    eps: float,
    y_sample,
    s_grid,
    tol: float = 1e-9,
    extend: float = 10.0,
) -> EnvelopeBoundReport:
    """max over sampled (y, s > 0) of M(y, s) / (env(s) * 4 phi(eps, s)^2).

    The envelope is built on the grid extended by a factor ``extend`` past
    its end so that truncation of the hull does not bias the ratio.
    """
    if not (0 < eps <= 0.5):
        raise DomainError("eps must lie in (0, 1/2]")
    s = np.asarray(s_grid, dtype=float)
    s = s[s > 0]
    tail = np.geomspace(s[-1], s[-1] * extend, 41)[1:]
    s_ext = np.concatenate([[0.0], s, tail])
    env = local_inf_envelope(M, x, eps, y_sample, s_ext)
    e = env.values[1 : 1 + len(s)]
    y = np.asarray(y_sample, dtype=float)
    if M.dim == 1:
        vals = M(y.reshape(-1)[:, None], s[None, :])
    else:
        vals = M(y.reshape(-1, 2)[:, None, :], s[None, :])
    bound = 4.0 * np.asarray(phi(np.full_like(s, eps), s), dtype=float) ** 2
    degenerate = bool(np.any(e <= 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = vals / (e * bound)[None, :]
    ratio = np.where(np.isnan(ratio), np.inf, ratio)
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    mr = float(ratio[i, j])
    return EnvelopeBoundReport(
        max_ratio=mr,
        passed=bool(mr <= 1 + tol and not degenerate),
        worst={"y": np.asarray(y.reshape(len(ratio), -1)[i]).tolist(), "s": float(s[j]), "ratio": mr},
        degenerate=degenerate,
    )
