"""Phi-function families M(x, s) and their validation.

Built-in families::

    variable_exponent   s^p(x)              (optionally s^p(x) / p(x))
    vexp_log            s^p(x) log(e + s)
    vexp_smoothed       ((1 + s^2)^(p(x)/2) - 1) / p(x)
    double_phase        s^p + a(x) s^q
    exp_power           exp(s^p(x)) - 1
    orlicz_custom       x-independent: power, linear, indicator, callable
    weighted_sum        sum_i k_i(x) M_i(s) + M_0(x, s)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import fields as fields_mod
from .errors import DomainError, InputError, ParameterError, UnsupportedWitness
from .fields import ScalarField

FAMILIES = (
    "variable_exponent",
    "vexp_log",
    "vexp_smoothed",
    "double_phase",
    "exp_power",
    "orlicz_custom",
    "weighted_sum",
)

EXP_CAP = 700.0
CONVEXITY_TOL = 1e-10


def default_s_grid() -> np.ndarray:
    """s = 0 followed by 121 log-spaced points on [1e-3, 1e3]."""
    return np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 121)])


@dataclass(frozen=True, eq=False)
class PhiFunction:
    """An evaluable integrand M(x, s); immutable after construction."""

    family: str
    params: dict
    dim: int
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    fields: dict = field(default_factory=dict, repr=False)
    derivative_in_s: Optional[Callable] = field(default=None, repr=False)
    components: tuple = field(default=(), repr=False)
    delta2_bound: Optional[float] = None
    name: str = ""

    def __call__(self, x, s) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            return np.asarray(self.fn(np.asarray(x, dtype=float), np.asarray(s, dtype=float)), dtype=float)

    def eval(self, x, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise DomainError("M(x, s) is defined for s >= 0 only")
        return self(x, s)

    @property
    def x_independent(self) -> bool:
        own = all(f.is_constant for f in self.fields.values())
        return own and all(c.x_independent for _, c in self.components)

    @property
    def continuous_in_x(self) -> bool:
        own = all(f.continuous for f in self.fields.values())
        return own and all(c.continuous_in_x for _, c in self.components)

    @cached_property
    def witness(self):
        from .regularity import phi_witness

        return phi_witness(self)

    def at(self, x) -> Callable[[np.ndarray], np.ndarray]:
        """Freeze the space variable: return s -> M(x, s)."""
        x = np.asarray(x, dtype=float)
        return lambda s: self(x, s)


def evaluate(M: PhiFunction, x, s) -> np.ndarray:
    """M(x, s), raising DomainError for negative s."""
    return M.eval(x, s)


# -- family constructors ----------------------------------------------------


def _exponent_field(value, dim, region, name="p", minimum=1.0, strict=True) -> ScalarField:
    f = fields_mod.from_descriptor(value, dim, region)
    lo = f.bounds[0]
    if (strict and lo <= minimum) or (not strict and lo < minimum) or not np.isfinite(f.bounds[1]):
        rel = ">" if strict else ">="
        raise ParameterError(f"exponent {name}(x) must satisfy {minimum:g} {rel} ... < inf, got bounds {f.bounds}")
    return f


def _variable_exponent(desc, dim, region):
    p = _exponent_field(desc.get("p", 2.0), dim, region)
    normalized = bool(desc.get("normalized", False))

    def fn(x, s):
        px = p(x)
        out = s**px
        return out / px if normalized else out

    def dfn(x, s):
        px = p(x)
        d = px * s ** (px - 1)
        return d / px if normalized else d

    return PhiFunction(
        family="variable_exponent",
        params={"p_minus": p.bounds[0], "p_plus": p.bounds[1], "normalized": normalized},
        dim=dim,
        fn=fn,
        fields={"p": p},
        derivative_in_s=dfn,
        delta2_bound=2.0 ** p.bounds[1],
        name=("s^p(x)/p(x)" if normalized else "s^p(x)"),
    )


def _vexp_log(desc, dim, region):
    p = _exponent_field(desc.get("p", 2.0), dim, region)
    return PhiFunction(
        family="vexp_log",
        params={"p_minus": p.bounds[0], "p_plus": p.bounds[1]},
        dim=dim,
        fn=lambda x, s: s ** p(x) * np.log(np.e + s),
        fields={"p": p},
        name="s^p(x) log(e+s)",
    )


def _vexp_smoothed(desc, dim, region):
    p = _exponent_field(desc.get("p", 2.0), dim, region)

    def fn(x, s):
        px = p(x)
        return np.expm1(0.5 * px * np.log1p(s * s)) / px

    return PhiFunction(
        family="vexp_smoothed",
        params={"p_minus": p.bounds[0], "p_plus": p.bounds[1]},
        dim=dim,
        fn=fn,
        fields={"p": p},
        derivative_in_s=lambda x, s: s * (1 + s * s) ** (0.5 * p(x) - 1),
        name="((1+s^2)^(p/2)-1)/p",
    )


def _double_phase(desc, dim, region):
    p = float(desc.get("p", 2.0))
    q = float(desc.get("q", p))
    if not (p > 1 and q > 1):
        raise ParameterError(f"double phase needs p, q > 1 (got p={p}, q={q})")
    if q < p:
        raise ParameterError(f"double phase needs q >= p (got p={p}, q={q})")
    a = fields_mod.from_descriptor(desc.get("a", 1.0), dim, region)
    if a.bounds[0] < 0:
        raise ParameterError("coefficient a(x) must be nonnegative")
    if a.regularity == "holder" and not (0 < a.exponent <= 1):
        raise ParameterError("Hoelder exponent alpha must lie in (0, 1]")

    def fn(x, s):
        return s**p + a(x) * s**q

    return PhiFunction(
        family="double_phase",
        params={"p": p, "q": q},
        dim=dim,
        fn=fn,
        fields={"a": a},
        derivative_in_s=lambda x, s: p * s ** (p - 1) + q * a(x) * s ** (q - 1),
        delta2_bound=2.0**q,
        name=f"s^{p:g} + a(x) s^{q:g}",
    )


def _exp_power(desc, dim, region):
    p = _exponent_field(desc.get("p", 2.0), dim, region, strict=False)

    def fn(x, s):
        arg = s ** p(x)
        return np.where(arg > EXP_CAP, np.inf, np.expm1(np.minimum(arg, EXP_CAP)))

    return PhiFunction(
        family="exp_power",
        params={"p_minus": p.bounds[0], "p_plus": p.bounds[1]},
        dim=dim,
        fn=fn,
        fields={"p": p},
        name="exp(s^p(x))-1",
    )


def _orlicz_custom(desc, dim, region):
    kind = desc.get("kind", "power")
    if kind == "power":
        p = float(desc.get("p", 2.0))
        if p < 1:
            raise ParameterError("power exponent must be >= 1")
        scale = float(desc.get("scale", 1.0))
        if desc.get("normalized", False):
            scale = scale / p

        def fn(x, s):
            return scale * np.broadcast_to(s, np.broadcast_shapes(_space_shape(x, dim), np.shape(s))) ** p

        return PhiFunction(
            family="orlicz_custom",
            params={"kind": "power", "p": p, "scale": scale},
            dim=dim,
            fn=fn,
            derivative_in_s=lambda x, s: scale * p * s ** (p - 1),
            delta2_bound=2.0**p,
            name=f"{scale:g} s^{p:g}",
        )
    if kind == "linear":
        scale = float(desc.get("scale", 1.0))
        return PhiFunction(
            family="orlicz_custom",
            params={"kind": "linear", "scale": scale},
            dim=dim,
            fn=lambda x, s: scale * np.broadcast_to(s, np.broadcast_shapes(_space_shape(x, dim), np.shape(s))) * 1.0,
            delta2_bound=2.0,
            name=f"{scale:g} s",
        )
    if kind == "indicator":
        thr = float(desc.get("threshold", 1.0))
        return PhiFunction(
            family="orlicz_custom",
            params={"kind": "indicator", "threshold": thr},
            dim=dim,
            fn=lambda x, s: np.where(
                np.broadcast_to(s, np.broadcast_shapes(_space_shape(x, dim), np.shape(s))) > thr, np.inf, 0.0
            ),
            name=f"inf*chi(s>{thr:g})",
        )
    if kind == "callable":
        f = desc["function"]
        return PhiFunction(
            family="orlicz_custom",
            params={"kind": "callable"},
            dim=dim,
            fn=lambda x, s: f(np.broadcast_to(s, np.broadcast_shapes(_space_shape(x, dim), np.shape(s)))),
            derivative_in_s=desc.get("derivative"),
            delta2_bound=desc.get("delta2_bound"),
            name=desc.get("name", "custom"),
        )
    raise ParameterError(f"unknown orlicz_custom kind {kind!r}")


def _weighted_sum(desc, dim, region):
    terms = []
    for t in desc.get("terms", []):
        k = fields_mod.from_descriptor(t.get("k", 1.0), dim, region)
        if k.bounds[0] <= 0:
            raise ParameterError("weights k_i(x) must be strictly positive")
        Mi = t["M"] if isinstance(t["M"], PhiFunction) else make_family(t["M"], dim=dim, region=region)
        if not Mi.x_independent:
            raise ParameterError("weighted_sum terms M_i must be x-independent")
        terms.append((k, Mi))
    base = desc.get("base")
    if base is not None and not isinstance(base, PhiFunction):
        base = make_family(base, dim=dim, region=region)
    if not terms and base is None:
        raise ParameterError("weighted_sum needs at least one term")

    def fn(x, s):
        total = 0.0
        for k, Mi in terms:
            kx = k(x)
            total = total + kx * Mi(x, s)
        if base is not None:
            total = total + base(x, s)
        return total

    bounds = [Mi.delta2_bound for _, Mi in terms] + ([base.delta2_bound] if base is not None else [])
    d2 = max(bounds) if all(b is not None for b in bounds) else None
    components = tuple(terms)
    return PhiFunction(
        family="weighted_sum",
        params={"n_terms": len(terms), "has_base": base is not None},
        dim=dim,
        fn=fn,
        fields={f"k{i + 1}": k for i, (k, _) in enumerate(terms)},
        components=components + (((None, base),) if base is not None else ()),
        delta2_bound=d2,
        name=" + ".join(f"{k.name}*[{Mi.name}]" for k, Mi in terms) + (f" + [{base.name}]" if base else ""),
    )


def _space_shape(x, dim):
    shape = np.shape(x)
    return shape if dim == 1 else shape[:-1]


_CONSTRUCTORS = {
    "variable_exponent": _variable_exponent,
    "vexp_log": _vexp_log,
    "vexp_smoothed": _vexp_smoothed,
    "double_phase": _double_phase,
    "exp_power": _exp_power,
    "orlicz_custom": _orlicz_custom,
    "weighted_sum": _weighted_sum,
}


def make_family(desc: dict, dim: Optional[int] = None, region=None) -> PhiFunction:
    """Build a PhiFunction from a family descriptor.

    >>> M = make_family({"family": "double_phase", "p": 2, "q": 3, "a": 1.0})
    >>> float(M(0.0, 2.0))
    12.0
    """
    if not isinstance(desc, dict) or "family" not in desc:
        raise ParameterError("family descriptor must be a dict with a 'family' key")
    family = desc["family"]
    if family not in _CONSTRUCTORS:
        raise ParameterError(f"unknown family {family!r}")
    dim = int(desc.get("dim", dim or 1))
    if dim not in (1, 2):
        raise ParameterError("dimension must be 1 or 2")
    M = _CONSTRUCTORS[family](desc, dim, region)
    if family == "double_phase":
        try:
            M.witness  # attach eagerly
        except UnsupportedWitness:
            pass  # discontinuous coefficient: the family is still usable without a domination witness
    return M


def power(p: float, scale: float = 1.0, normalized: bool = False, dim: int = 1) -> PhiFunction:
    """Shorthand for the x-independent M(s) = scale * s^p (divided by p if ``normalized``)."""
    return make_family({"family": "orlicz_custom", "kind": "power", "p": p, "scale": scale, "normalized": normalized}, dim=dim)


# -- validation ---------------------------------------------------------------


@dataclass
class ValidationReport:
    passed: bool
    checks: dict
    convexity_residual: float
    lower_slope: float
    upper_slope: float
    ess_inf_at_one: float
    details: dict = field(default_factory=dict)


@dataclass
class Delta2Report:
    """Doubling constants: ``k_empirical`` is the sampled sup of M(x,2s)/M(x,s)."""

    k_empirical: float
    k_bound: Optional[float]
    bounded: bool
    tail_growth: float
    worst: dict

    @property
    def k(self) -> float:
        """Certified doubling constant, or inf when the ratio grows without bound.

        The family's analytic constant is returned when the sample confirms
        it (sampled sup not above it); otherwise the sampled sup.
        """
        if not self.bounded:
            return np.inf
        if self.k_bound is not None and self.k_empirical <= self.k_bound * (1 + 1e-12):
            return float(self.k_bound)
        return self.k_empirical


def _rows(M: PhiFunction, x_sample, s_grid) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x_sample, dtype=float)
    if M.dim == 1:
        x = x.reshape(-1)
        X = x[:, None]
    else:
        x = x.reshape(-1, 2)
        X = x[:, None, :]
    s = np.asarray(s_grid, dtype=float)
    vals = np.broadcast_to(M(X, s[None, :]), (len(x), len(s)))
    return x, np.array(vals, dtype=float)


def convexity_residual(s: np.ndarray, vals: np.ndarray) -> float:
    """Largest relative violation of the three-point convexity inequality.

    Works on consecutive triples of each row; triples with infinite values
    are skipped (extended-valued convexity is checked by the caller).
    """
    s1, s2, s3 = s[:-2], s[1:-1], s[2:]
    m1, m2, m3 = vals[..., :-2], vals[..., 1:-1], vals[..., 2:]
    with np.errstate(invalid="ignore"):
        chord = m1 * (s3 - s2) + m3 * (s2 - s1)
        lhs = m2 * (s3 - s1)
        rel = (lhs - chord) / np.maximum(np.abs(chord), np.finfo(float).tiny)
    finite = np.isfinite(m1) & np.isfinite(m2) & np.isfinite(m3)
    rel = np.where(finite & (np.abs(chord) > 0), rel, np.where(finite & (lhs > 0), np.inf, -np.inf))
    return float(np.max(rel)) if rel.size else -np.inf


def _loglog_slope(s, r) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        ls, lr = np.log(s), np.log(r)
    if not np.all(np.isfinite(lr)):
        return np.nan
    return float(np.polyfit(ls, lr, 1)[0])


def check_n_function(
    M: PhiFunction,
    x_sample,
    s_grid=None,
    slope_tol: float = 1e-3,
    convexity_tol: float = CONVEXITY_TOL,
) -> ValidationReport:
    """Sampled N-function check: convexity, M(x,0)=0, limits of M/s, strict monotonicity.

    The limits M/s -> 0 and M/s -> inf are judged by the log-log slope of
    M(x,s)/s over the lowest and highest two decades of the s-grid.
    Failures are reported, never raised.
    """
    s = default_s_grid() if s_grid is None else np.sort(np.asarray(s_grid, dtype=float))
    pos = s[s > 0]
    if len(pos) < 3 or np.log10(pos[-1] / pos[0]) < 6 - 1e-9:
        raise InputError("s-grid must be log-spaced over at least 6 decades")
    if s[0] != 0:
        s = np.concatenate([[0.0], s])
    x, vals = _rows(M, x_sample, s)

    zero_ok = bool(np.all(vals[:, 0] == 0))
    residual = convexity_residual(s, vals)
    convex_ok = residual <= convexity_tol
    at_one = np.array(M(x if M.dim == 1 else x, np.ones(len(x))), dtype=float)
    ess_inf = float(np.min(at_one))

    sp = s[1:]
    ratios = vals[:, 1:] / sp
    lo = sp <= sp[0] * 100
    hi = sp >= sp[-1] / 100
    lower = np.array([_loglog_slope(sp[lo], r[lo]) for r in ratios])
    upper = np.array([_loglog_slope(sp[hi], r[hi]) for r in ratios])
    lower_ok = bool(np.all(np.isfinite(lower)) and np.all(lower > slope_tol))
    upper_ok = bool(np.all(np.isfinite(upper)) and np.all(upper > slope_tol))
    with np.errstate(invalid="ignore"):
        steps = np.diff(vals, axis=1)
    strict_ok = bool(np.all(np.isfinite(vals)) and np.all(steps > 0))

    checks = {
        "zero_at_zero": zero_ok,
        "convexity": bool(convex_ok),
        "ess_inf_positive": ess_inf > 0,
        "limit_at_zero": lower_ok,
        "limit_at_infinity": upper_ok,
        "strictly_increasing": strict_ok,
    }
    return ValidationReport(
        passed=all(checks.values()),
        checks=checks,
        convexity_residual=residual,
        lower_slope=float(np.nanmin(lower)) if np.any(np.isfinite(lower)) else np.nan,
        upper_slope=float(np.nanmin(upper)) if np.any(np.isfinite(upper)) else np.nan,
        ess_inf_at_one=ess_inf,
    )


def check_delta2(M: PhiFunction, x_sample, s_grid=None, growth_factor: float = 1.5) -> Delta2Report:
    """Sampled doubling ratio M(x,2s)/M(x,s) with h = 0.

    The ratio is declared unbounded when it is infinite somewhere or keeps
    growing over the last decade of the grid (by more than ``growth_factor``).
    """
    s = default_s_grid() if s_grid is None else np.sort(np.asarray(s_grid, dtype=float))
    s = s[s > 0]
    x, base = _rows(M, x_sample, s)
    _, doubled = _rows(M, x_sample, 2 * s)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = doubled / base
    ratio = np.where((base == 0) & (doubled == 0), np.nan, ratio)
    ratio = np.where((base == 0) & (doubled > 0), np.inf, ratio)
    finite_max = np.nanmax(np.where(np.isfinite(ratio), ratio, np.nan)) if np.any(np.isfinite(ratio)) else np.nan
    k_emp = float(np.nanmax(ratio)) if np.any(~np.isnan(ratio)) else np.nan

    decade = s >= s[-1] / 10
    first = np.argmax(decade)
    with np.errstate(invalid="ignore"):
        g = ratio[:, -1] / ratio[:, first]
    growth = np.nanmax(g) if np.any(~np.isnan(g)) else np.inf
    bounded = bool(np.isfinite(k_emp) and not (growth > growth_factor))
    i, j = np.unravel_index(np.nanargmax(np.where(np.isnan(ratio), -np.inf, ratio)), ratio.shape)
    return Delta2Report(
        k_empirical=k_emp,
        k_bound=M.delta2_bound,
        bounded=bounded,
        tail_growth=float(growth),
        worst={"x": np.asarray(x[i]).tolist(), "s": float(s[j]), "ratio": float(ratio[i, j]), "finite_max": float(finite_max)},
    )
