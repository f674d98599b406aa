"""Regularity witnesses phi(tau, s) and the checks built on them.

A witness certifies M(x, s) <= phi(|x - y|, s) M(y, s) for |x - y| <= 1/2.
Witnesses are evaluated in log space so that the scaling checks can
follow phi(eps, c eps^(-N/p)) far past the float range of s itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError, ParameterError, UnsupportedWitness
from .fields import ScalarField
from .phi import PhiFunction, default_s_grid

# exponents built from boundary tuples in floating point land within a few ulps of 0
EXPONENT_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class RegularityWitness:
    """phi(tau, s) on [0, 1/2] x (0, inf).

    ``log_fn(log_tau, log_s)`` returns log phi.  ``exponent`` gives the
    analytic power-law exponent e with phi(eps, c eps^(-N/p)) ~ eps^e, or
    None when phi stays bounded without a power law (or has none).
    """

    log_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)
    kind: str
    params: dict
    monotone_in_s: bool = True
    exponent: Optional[Callable[[int, float], Optional[float]]] = field(default=None, repr=False)
    always_bounded: bool = False
    constant_c: Optional[float] = None

    def __call__(self, tau, s) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            return np.exp(self.log_phi(np.log(tau), np.log(s)))

    def log_phi(self, log_tau, log_s) -> np.ndarray:
        with np.errstate(invalid="ignore", over="ignore"):
            return np.asarray(self.log_fn(np.asarray(log_tau, dtype=float), np.asarray(log_s, dtype=float)), dtype=float)

    def scaling_exponent(self, N: int, p: float = 1.0) -> Optional[float]:
        """Exponent e of phi(eps, c eps^(-N/p)) ~ eps^e (e >= 0: bounded)."""
        if self.exponent is None:
            return None
        return self.exponent(N, p)

    @property
    def scaling_exponent_N(self):
        return lambda N: self.scaling_exponent(N, 1.0)

    @property
    def scaling_exponent_Np(self):
        return lambda N, p: self.scaling_exponent(N, p)

    def analytic_bounded(self, N: int, p: float = 1.0) -> Optional[bool]:
        if self.always_bounded:
            return True
        e = self.scaling_exponent(N, p)
        return None if e is None else bool(e >= -EXPONENT_SLACK)

    def with_constant(self, c: float) -> "RegularityWitness":
        return replace(self, constant_c=float(c))


# -- witnesses ------------------------------------------------------------------


def _unit_witness() -> RegularityWitness:
    return RegularityWitness(
        log_fn=lambda lt, ls: np.zeros(np.broadcast_shapes(np.shape(lt), np.shape(ls))),
        kind="x_independent",
        params={},
        exponent=lambda N, p: 0.0,
        always_bounded=True,
    )


def _exponent_witness(p_field: ScalarField, factor: float) -> RegularityWitness:
    # s^p(x) <= max{s^sigma, s^-sigma} s^p(y) with sigma = |p(x) - p(y)|
    log_factor = float(np.log(factor))

    def log_fn(lt, ls):
        sigma = p_field.modulus(np.exp(lt))
        return log_factor + np.where(sigma > 0, sigma * np.abs(ls), 0.0)

    return RegularityWitness(
        log_fn=log_fn,
        kind="variable_exponent",
        params={"factor": factor, "regularity": p_field.regularity, "modulus_constant": p_field.constant},
        monotone_in_s=False,
        always_bounded=p_field.regularity in ("constant", "holder", "lipschitz", "log_holder"),
    )


def double_phase_witness(C_a: float, alpha: float, p: float, q: float) -> RegularityWitness:
    """phi(tau, s) = 1 + C_a tau^alpha s^(q - p)."""
    logC = np.log(C_a) if C_a > 0 else -np.inf
    dq = q - p

    def log_fn(lt, ls):
        arg = logC + alpha * lt + (dq * ls if dq != 0 else 0.0)
        return np.logaddexp(0.0, arg)

    return RegularityWitness(
        log_fn=log_fn,
        kind="double_phase",
        params={"C_a": C_a, "alpha": alpha, "p": p, "q": q},
        exponent=(lambda N, pg: 0.0) if C_a == 0 else (lambda N, pg: alpha - N * dq / pg),
        always_bounded=C_a == 0 or dq == 0,
    )


def _holder_data(a: ScalarField) -> tuple[float, float]:
    if a.regularity == "constant":
        return 0.0, 1.0
    if a.regularity == "holder":
        return a.constant, a.exponent
    if a.regularity == "lipschitz":
        return a.constant, 1.0
    raise UnsupportedWitness(f"double phase witness needs a Hoelder coefficient, got {a.regularity}")


def _weighted_witness(M: PhiFunction) -> RegularityWitness:
    parts = []
    base_w = None
    for k, Mi in M.components:
        if k is None:
            base_w = phi_witness(Mi)
        else:
            parts.append((k, float(k.bounds[0])))

    def log_fn(lt, ls):
        tau = np.exp(lt)
        total = np.zeros(np.broadcast_shapes(np.shape(lt), np.shape(ls)))
        for k, kmin in parts:
            total = total + 1.0 + k.modulus(tau) / kmin
        if base_w is None:
            return np.log(total)
        return np.logaddexp(np.log(np.where(total > 0, total, np.finfo(float).tiny)), base_w.log_phi(lt, ls)) if parts else base_w.log_phi(lt, ls)

    bounded_parts = all(k.regularity != "none" for k, _ in parts)
    return RegularityWitness(
        log_fn=log_fn,
        kind="weighted_sum",
        params={"n_terms": len(parts), "base": None if base_w is None else base_w.kind},
        monotone_in_s=base_w.monotone_in_s if base_w else True,
        exponent=None if base_w is None else base_w.exponent,
        always_bounded=bounded_parts and (base_w is None or base_w.always_bounded),
    )


def phi_witness(M: PhiFunction) -> RegularityWitness:
    """The witness attached to a built-in family with declared field regularity."""
    if M.family == "weighted_sum":
        return _weighted_witness(M)
    if M.x_independent:
        return _unit_witness()
    if M.family == "variable_exponent":
        p = M.fields["p"]
        if p.regularity == "none":
            raise UnsupportedWitness("exponent field has no declared modulus")
        factor = M.params["p_plus"] / M.params["p_minus"] if M.params.get("normalized") else 1.0
        return _exponent_witness(p, factor)
    if M.family == "double_phase":
        C, alpha = _holder_data(M.fields["a"])
        return double_phase_witness(C, alpha, M.params["p"], M.params["q"])
    raise UnsupportedWitness(f"no regularity witness for family {M.family!r}")


# -- checks ---------------------------------------------------------------------


@dataclass
class DominationReport:
    max_ratio: float
    passed: bool
    n_pairs: int
    worst: dict
    tol: float


def pair_sample(region, dim: int, n_random: int = 2000, seed: int = 42, n_grid: int = 41, max_dist: float = 0.5):
    """Structured plus random pairs (x, y) in the closed box with |x - y| <= max_dist."""
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in region], dtype=float)
    hi = np.array([b[1] for b in region], dtype=float)
    if dim == 1:
        g = np.linspace(lo[0], hi[0], n_grid)
        X, Y = np.meshgrid(g, g, indexing="ij")
        keep = np.abs(X - Y) <= max_dist
        xs, ys = [X[keep]], [Y[keep]]
        x = rng.uniform(lo[0], hi[0], 4 * n_random)
        y = x + rng.uniform(-max_dist, max_dist, x.shape)
        ok = (y >= lo[0]) & (y <= hi[0])
        xs.append(x[ok][:n_random])
        ys.append(y[ok][:n_random])
        return np.concatenate(xs), np.concatenate(ys)
    m = max(5, int(round(np.sqrt(n_grid * 2))))
    gx = np.linspace(lo[0], hi[0], m)
    gy = np.linspace(lo[1], hi[1], m)
    nodes = np.stack(np.meshgrid(gx, gy, indexing="ij"), axis=-1).reshape(-1, 2)
    d = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=-1)
    i, j = np.nonzero(d <= max_dist)
    x = rng.uniform(lo, hi, (4 * n_random, 2))
    r = max_dist * np.sqrt(rng.uniform(0, 1, len(x)))
    th = rng.uniform(0, 2 * np.pi, len(x))
    y = x + np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    ok = np.all((y >= lo) & (y <= hi), axis=1)
    return (
        np.concatenate([nodes[i], x[ok][:n_random]]),
        np.concatenate([nodes[j], y[ok][:n_random]]),
    )


def check_pointwise_domination(
    M: PhiFunction,
    phi: Optional[RegularityWitness] = None,
    pairs=None,
    s_grid=None,
    region=None,
    tol: float = 1e-9,
    seed: int = 42,
) -> DominationReport:
    """max over sampled (x, y, s > 0) of M(x, s) / (phi(|x - y|, s) M(y, s))."""
    phi = M.witness if phi is None else phi
    if pairs is None:
        region = region or [(-1.0, 1.0)] * M.dim
        pairs = pair_sample(region, M.dim, seed=seed)
    x, y = (np.asarray(a, dtype=float) for a in pairs)
    s = default_s_grid() if s_grid is None else np.asarray(s_grid, dtype=float)
    s = s[s > 0]
    if M.dim == 1:
        x, y = x.reshape(-1), y.reshape(-1)
        tau = np.abs(x - y)
        X, Y = x[:, None], y[:, None]
    else:
        x, y = x.reshape(-1, 2), y.reshape(-1, 2)
        tau = np.linalg.norm(x - y, axis=1)
        X, Y = x[:, None, :], y[:, None, :]
    if np.any(tau > 0.5 + 1e-12):
        raise InputError("pairs must satisfy |x - y| <= 1/2")
    Mx = M(X, s[None, :])
    My = M(Y, s[None, :])
    ph = phi(tau[:, None], s[None, :])
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.broadcast_to(Mx / (ph * My), (len(tau), len(s)))
    ratio = np.where(np.isnan(ratio), 1.0, ratio)  # inf/inf from indicator-type integrands
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    mr = float(ratio[i, j])
    return DominationReport(
        max_ratio=mr,
        passed=bool(mr <= 1 + tol),
        n_pairs=int(len(tau)),
        worst={"x": np.asarray(x[i]).tolist(), "y": np.asarray(y[i]).tolist(), "s": float(s[j]), "ratio": mr},
        tol=tol,
    )


def check_witness_invariants(phi: RegularityWitness, n_tau: int = 41, s_grid=None, tol: float = 1e-12) -> dict:
    """phi >= 1 everywhere sampled; nondecreasing in tau, and in s when flagged monotone."""
    tau = np.linspace(0.0, 0.5, n_tau)[1:]
    s = default_s_grid()[1:] if s_grid is None else np.asarray(s_grid, dtype=float)
    vals = phi(tau[:, None], s[None, :])
    at_least_one = bool(np.all(vals >= 1 - tol))
    mono_tau = bool(np.all(np.diff(vals, axis=0) >= -tol * np.abs(vals[1:])))
    mono_s = bool(np.all(np.diff(vals, axis=1) >= -tol * np.abs(vals[:, 1:])))
    return {
        "at_least_one": at_least_one,
        "monotone_in_tau": mono_tau,
        "monotone_in_s": mono_s,
        "passed": at_least_one and mono_tau and (mono_s or not phi.monotone_in_s),
        "min_value": float(np.min(vals)),
    }


@dataclass
class ScalingReport:
    eps: np.ndarray
    values: np.ndarray
    log_values: np.ndarray
    slope: float
    analytic_exponent: Optional[float]
    bounded: bool
    verdict: str
    c: float
    N: int
    p: Optional[float]


def default_eps_schedule(n: int = 13, decades_per_step: float = 16.0) -> np.ndarray:
    """Geometric schedule 0.5 * 10^(-k d), k = 0..n-1.

    Steep steps push s = c eps^(-N/p) far into the range where the witness
    is dominated by its power-law part, so log-log slopes are clean.
    """
    return 0.5 * 10.0 ** (-decades_per_step * np.arange(n))


def _tail_slope(log_eps, log_vals, n_tail: int = 4) -> float:
    return float(np.polyfit(log_eps[-n_tail:], log_vals[-n_tail:], 1)[0])


def check_scaling_limsup(
    phi: RegularityWitness,
    c: float,
    N: int,
    p: Optional[float] = None,
    eps_schedule=None,
    power: float = 1.0,
    scale: float = 1.0,
) -> ScalingReport:
    """Track phi(eps_k, c eps_k^(-N/p))^power * scale along a schedule decreasing to 0.

    ``power=3, scale=4`` gives the bound factor 4 phi^3 of the modular
    domination lemma.  Verdict: the analytic exponent decides when the
    witness exposes one (bounded iff >= 0); otherwise the tail over the
    last 4 points must be nonincreasing or within 5%.
    """
    if c <= 0:
        raise ParameterError("c must be positive")
    eps = default_eps_schedule() if eps_schedule is None else np.asarray(eps_schedule, dtype=float)
    if len(eps) < 12 or np.any(np.diff(eps) >= 0) or eps[0] > 0.5 or eps[-1] <= 0:
        raise InputError("eps-schedule must decrease within (0, 1/2] and have at least 12 terms")
    pg = 1.0 if p is None else float(p)
    le = np.log(eps)
    ls = np.log(c) - (N / pg) * le
    lv = np.log(scale) + power * phi.log_phi(le, ls)
    slope = _tail_slope(le, lv)
    analytic = phi.scaling_exponent(N, pg)
    if phi.always_bounded:
        bounded = True
    elif analytic is not None:
        bounded = analytic >= -EXPONENT_SLACK
    else:
        tail = lv[-4:]
        bounded = bool(np.all(np.diff(tail) <= 1e-12) or (np.max(tail) - np.min(tail)) <= np.log(1.05))
    with np.errstate(over="ignore"):
        vals = np.exp(lv)
    return ScalingReport(
        eps=eps,
        values=vals,
        log_values=lv,
        slope=slope,
        analytic_exponent=None if analytic is None else power * analytic,
        bounded=bool(bounded),
        verdict="bounded" if bounded else f"diverges (log-log slope {slope:.4g})",
        c=float(c),
        N=int(N),
        p=p,
    )


def sharp_range_predicate(p: float, q: float, alpha: float, N: int) -> bool:
    """q/p <= 1 + alpha/N (non-strict), compared as q N <= p (N + alpha) with
    a few ulps of slack so that boundary tuples built in floating point count."""
    if not (p > 1 and q > 1 and 0 < alpha <= 1 and N >= 1):
        raise ParameterError("need p, q > 1, alpha in (0, 1], N >= 1")
    lhs = q * N
    rhs = p * (N + alpha)
    return bool(lhs <= rhs + 8 * np.finfo(float).eps * max(abs(lhs), abs(rhs)))


@dataclass
class IntegrabilityReport:
    integrals: dict
    passed: bool
    failures: list


def check_local_integrability(M: PhiFunction, domain, c_list: Sequence[float], mask=None) -> IntegrabilityReport:
    """Midpoint quadrature of M(., c) over the grid subset K (``mask`` or Omega)."""
    pts = domain.points
    w = domain.weights * (domain.omega_mask if mask is None else np.asarray(mask, dtype=bool))
    integrals = {}
    failures = []
    for c in c_list:
        vals = np.broadcast_to(M(pts, np.full(domain.shape, float(c))), domain.shape)
        active = w > 0
        bad = active & ~np.isfinite(vals)
        if np.any(bad):
            idx = tuple(int(i[0]) for i in np.nonzero(bad))
            failures.append({"c": float(c), "node": idx, "x": np.asarray(pts[idx]).tolist()})
            integrals[float(c)] = np.inf
        else:
            integrals[float(c)] = float(np.sum(np.where(active, vals, 0.0) * w))
    return IntegrabilityReport(integrals=integrals, passed=not failures, failures=failures)
