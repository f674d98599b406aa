"""Scalar coefficient and exponent fields a(x), p(x), k_i(x) with declared regularity.

A field is evaluated on point arrays.  In one dimension any array of
coordinates is accepted; in two dimensions the last axis holds the
coordinates.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ParameterError

REGULARITIES = ("constant", "holder", "lipschitz", "log_holder", "none")

Box = Sequence[Sequence[float]]


def default_region(dim: int) -> list[tuple[float, float]]:
    return [(-1.0, 1.0)] * dim


def distance_to_center(x, center, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dim == 1:
        return np.abs(x - float(np.ravel(center)[0]))
    return np.linalg.norm(x - np.asarray(center, dtype=float), axis=-1)


def _distance_range(center, region: Box) -> tuple[float, float]:
    lo = np.array([b[0] for b in region], dtype=float)
    hi = np.array([b[1] for b in region], dtype=float)
    c = np.broadcast_to(np.asarray(center, dtype=float), lo.shape)
    nearest = np.clip(c, lo, hi)
    dmin = float(np.linalg.norm(c - nearest))
    corners = np.array(list(itertools.product(*region)), dtype=float)
    dmax = float(np.max(np.linalg.norm(corners - c, axis=1)))
    return dmin, dmax


@dataclass(frozen=True)
class ScalarField:
    """A real field on a box with a declared modulus of continuity.

    ``regularity`` is one of ``constant``, ``holder`` (``constant`` = C,
    ``exponent`` = alpha), ``lipschitz`` (``constant`` = L), ``log_holder``
    (``constant`` = c in |a(x)-a(y)| <= c/log(1/|x-y|)) or ``none``.
    """

    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    dim: int
    regularity: str
    constant: float
    exponent: float
    bounds: tuple[float, float]
    name: str = "field"
    continuous: bool = True

    def __post_init__(self):
        if self.regularity not in REGULARITIES:
            raise ParameterError(f"unknown regularity {self.regularity!r}")
        if self.dim not in (1, 2):
            raise ParameterError("fields are defined for dim 1 or 2 only")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.fn(x), dtype=float)

    @property
    def is_constant(self) -> bool:
        return self.regularity == "constant"

    def modulus(self, tau) -> np.ndarray:
        """Upper bound for |a(x) - a(y)| over pairs with |x - y| <= tau (tau <= 1/2)."""
        tau = np.asarray(tau, dtype=float)
        if self.regularity == "constant":
            return np.zeros_like(tau)
        if self.regularity in ("holder", "lipschitz"):
            alpha = 1.0 if self.regularity == "lipschitz" else self.exponent
            return self.constant * tau**alpha
        if self.regularity == "log_holder":
            with np.errstate(divide="ignore"):
                out = self.constant / np.log(1.0 / tau)
            return np.where(tau > 0, out, 0.0)
        return np.full_like(tau, self.bounds[1] - self.bounds[0])

    def as_log_holder(self) -> "ScalarField":
        """Re-declare a Hoelder field as log-Hoelder.

        tau^alpha log(1/tau) peaks at tau = exp(-1/alpha) with value 1/(e alpha),
        so C tau^alpha <= (C / (e alpha)) / log(1/tau) on (0, 1/2].
        """
        if self.regularity == "log_holder" or self.regularity == "constant":
            return self
        if self.regularity not in ("holder", "lipschitz"):
            raise ParameterError("only Hoelder fields can be re-declared log-Hoelder")
        alpha = 1.0 if self.regularity == "lipschitz" else self.exponent
        if np.exp(-1.0 / alpha) <= 0.5:
            c = self.constant / (np.e * alpha)
        else:
            c = self.constant * 0.5**alpha * np.log(2.0)
        return replace(self, regularity="log_holder", constant=float(c), exponent=0.0)

    def check_regularity(self, x, y, tol: float = 1e-9) -> dict:
        """Sampled check of the declared modulus and bounds on pairs (x, y)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ax, ay = self(x), self(y)
        if self.dim == 1:
            d = np.abs(x - y)
        else:
            d = np.linalg.norm(x - y, axis=-1)
        allowed = self.modulus(np.minimum(d, 0.5))
        excess = np.abs(ax - ay) - allowed * (1 + tol) - tol
        inside = (np.minimum(ax, ay) >= self.bounds[0] - tol) & (
            np.maximum(ax, ay) <= self.bounds[1] + tol
        )
        mask = d <= 0.5
        worst = int(np.argmax(np.where(mask, excess, -np.inf))) if mask.any() else -1
        return {
            "passed": bool(np.all(excess[mask] <= 0) and np.all(inside)),
            "max_excess": float(np.max(excess[mask])) if mask.any() else 0.0,
            "within_bounds": bool(np.all(inside)),
            "worst_pair": None if worst < 0 else (np.asarray(x)[worst].tolist(), np.asarray(y)[worst].tolist()),
        }


def constant(value: float, dim: int = 1) -> ScalarField:
    v = float(value)
    return ScalarField(
        fn=lambda x: np.full(np.shape(x)[: np.ndim(x) - (dim - 1)], v),
        dim=dim,
        regularity="constant",
        constant=0.0,
        exponent=0.0,
        bounds=(v, v),
        name=f"const({v:g})",
    )


def power_distance(
    beta: float,
    scale: float = 1.0,
    center=0.0,
    dim: int = 1,
    region: Optional[Box] = None,
) -> ScalarField:
    """a(x) = scale * |x - center|^beta; Hoelder(beta, scale) for beta <= 1."""
    if beta <= 0:
        raise ParameterError("beta must be positive")
    if scale < 0:
        raise ParameterError("scale must be nonnegative")
    region = region or default_region(dim)
    center = np.zeros(dim) + np.asarray(center, dtype=float)
    dmin, dmax = _distance_range(center, region)
    if beta <= 1:
        reg, C, alpha = "holder", float(scale), float(beta)
    else:
        reg, C, alpha = "lipschitz", float(scale * beta * dmax ** (beta - 1)), 1.0
    return ScalarField(
        fn=lambda x: scale * distance_to_center(x, center, dim) ** beta,
        dim=dim,
        regularity=reg,
        constant=C,
        exponent=alpha,
        bounds=(float(scale * dmin**beta), float(scale * dmax**beta)),
        name=f"{scale:g}|x-c|^{beta:g}",
    )


def affine(c0: float, slope, dim: int = 1, region: Optional[Box] = None) -> ScalarField:
    """a(x) = c0 + <slope, x>; Lipschitz with constant |slope|."""
    region = region or default_region(dim)
    g = np.zeros(dim) + np.asarray(slope, dtype=float)
    L = float(np.linalg.norm(g))
    corners = np.array(list(itertools.product(*region)), dtype=float)
    vals = c0 + corners @ g
    if dim == 1:
        fn = lambda x: c0 + g[0] * x
    else:
        fn = lambda x: c0 + x @ g
    return ScalarField(
        fn=fn,
        dim=dim,
        regularity="lipschitz" if L > 0 else "constant",
        constant=L,
        exponent=1.0,
        bounds=(float(vals.min()), float(vals.max())),
        name=f"affine({c0:g})",
    )


def quadratic(c0: float, c2: float, center=0.0, dim: int = 1, region: Optional[Box] = None) -> ScalarField:
    """a(x) = c0 + c2 |x - center|^2."""
    region = region or default_region(dim)
    center = np.zeros(dim) + np.asarray(center, dtype=float)
    dmin, dmax = _distance_range(center, region)
    vals = sorted([c0 + c2 * dmin**2, c0 + c2 * dmax**2])
    return ScalarField(
        fn=lambda x: c0 + c2 * distance_to_center(x, center, dim) ** 2,
        dim=dim,
        regularity="lipschitz",
        constant=float(2 * abs(c2) * dmax),
        exponent=1.0,
        bounds=(float(vals[0]), float(vals[1])),
        name=f"{c0:g}+{c2:g}|x|^2",
    )


def checkerboard(low: float, high: float, period: float, dim: int = 1) -> ScalarField:
    """Two-valued field: ``low`` on even cells of side ``period``, ``high`` on odd ones."""
    if period <= 0:
        raise ParameterError("period must be positive")

    def fn(x):
        x = np.asarray(x, dtype=float)
        cells = np.floor(x / period).astype(np.int64)
        parity = cells % 2 if dim == 1 else cells.sum(axis=-1) % 2
        return np.where(parity == 0, low, high)

    return ScalarField(
        fn=fn,
        dim=dim,
        regularity="none",
        constant=abs(high - low),
        exponent=0.0,
        bounds=(min(low, high), max(low, high)),
        name=f"checker({low:g},{high:g})",
        continuous=False,
    )


_BUILDERS = {
    "constant": lambda d, dim, region: constant(d["value"], dim),
    "power_distance": lambda d, dim, region: power_distance(
        d.get("beta", 1.0), d.get("scale", 1.0), d.get("center", 0.0), dim, region
    ),
    "affine": lambda d, dim, region: affine(d.get("c0", 0.0), d.get("slope", 0.0), dim, region),
    "quadratic": lambda d, dim, region: quadratic(
        d.get("c0", 1.0), d.get("c2", 1.0), d.get("center", 0.0), dim, region
    ),
    "checkerboard": lambda d, dim, region: checkerboard(d["low"], d["high"], d["period"], dim),
}


def from_descriptor(desc, dim: int = 1, region: Optional[Box] = None) -> ScalarField:
    """Build a field from a number, a ScalarField, or a dict with a ``kind`` key."""
    if isinstance(desc, ScalarField):
        return desc
    if isinstance(desc, (int, float)):
        return constant(desc, dim)
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ParameterError(f"cannot build a field from {desc!r}")
    try:
        builder = _BUILDERS[desc["kind"]]
    except KeyError:
        raise ParameterError(f"unknown field kind {desc['kind']!r}") from None
    out = builder(desc, dim, region or default_region(dim))
    if desc.get("log_holder"):
        out = out.as_log_holder()
    return out
