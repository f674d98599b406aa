"""Modular convergence detection, lemma certification and the approximation experiments."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import fixtures
from .errors import DomainError, UncertifiedError
from .grid import GridDomain, GridFunction, gradient, interval, lp_norm, modular, modular_error_estimate, square
from .mollify import (
    SegmentCover,
    build_mollifier,
    kernel_lp_constant,
    mollify,
    shift_geometry,
    shift_parameters,
    shifted_mollify,
    translate,
)
from .phi import PhiFunction, make_family
from .regularity import RegularityWitness, check_pointwise_domination, check_scaling_limsup, sharp_range_predicate


def default_lambdas() -> np.ndarray:
    """2^-4 ... 2^8 (13 points)."""
    return 2.0 ** np.arange(-4, 9)


@dataclass
class ModularReport:
    lambdas: np.ndarray
    rho: np.ndarray  # shape (n_lambda, n_sequence)
    quad_error: np.ndarray
    raw_detected: np.ndarray
    detected: np.ndarray
    verdict: str
    lambda_star: Optional[float]
    tail_nonincreasing: bool

    @property
    def convergent(self) -> bool:
        return self.lambda_star is not None

    def pairs(self, k: int = -1) -> list[tuple[float, float]]:
        return [(float(l), float(r)) for l, r in zip(self.lambdas, self.rho[:, k])]


def detect_modular_convergence(
    M: PhiFunction,
    sequence: Sequence[GridFunction],
    target: GridFunction,
    lambdas=None,
    rel_tol: float = 1e-2,
) -> ModularReport:
    """Sweep lambda and decide whether rho_M((u_k - u) / lambda) tends to 0.

    Detection at lambda: final rho <= max(rel_tol * initial rho, 10 * quadrature
    error).  Because rho(w / mu) <= (lambda / mu) rho(w / lambda) for mu >= lambda,
    detection at lambda carries over to every larger lambda.
    """
    lams = default_lambdas() if lambdas is None else np.asarray(lambdas, dtype=float)
    if np.any(lams <= 0):
        raise DomainError("lambdas must be positive")
    lams = np.sort(lams)
    diffs = [u - target for u in sequence]
    rho = np.array([[modular(M, w, lam) for w in diffs] for lam in lams])
    qerr = np.array([modular_error_estimate(M, diffs[-1], lam) for lam in lams])
    with np.errstate(invalid="ignore"):
        raw = np.isfinite(rho[:, -1]) & (rho[:, -1] <= np.maximum(rel_tol * rho[:, 0], 10 * np.nan_to_num(qerr, posinf=0.0)))
    detected = np.logical_or.accumulate(raw)
    if detected.all():
        verdict = "norm_convergent"
    elif detected.any():
        verdict = f"modular_convergent({lams[np.argmax(detected)]:g})"
    else:
        verdict = "not_detected"
    lam_star = float(lams[np.argmax(detected)]) if detected.any() else None
    tail_ok = True
    if lam_star is not None:
        row = rho[np.argmax(detected)]
        half = row[len(row) // 2 :]
        tail_ok = bool(np.all(np.diff(half) <= 1e-12 * max(1.0, float(np.max(half)))))
    return ModularReport(
        lambdas=lams,
        rho=rho,
        quad_error=qerr,
        raw_detected=raw,
        detected=detected,
        verdict=verdict,
        lambda_star=lam_star,
        tail_nonincreasing=tail_ok,
    )


# -- lemma certification ---------------------------------------------------------------


@dataclass
class SupBoundReport:
    eps: float
    sup: float
    c: float
    scaled: float
    ratio: float
    passed: bool
    p: Optional[float]


def verify_sup_bound(u: GridFunction, eps: float, p: Optional[float] = None) -> SupBoundReport:
    """max |u_eps| * eps^(N/p) against the constant c (max J ||u||_1, or ||J||_p' ||u||_p)."""
    spec = build_mollifier(u.domain, eps)
    ue = mollify(u, eps, spec)
    c = spec.sup_constant(u, p)
    N = u.domain.dim
    sup = float(np.max(ue.magnitude()))
    scaled = sup * eps ** (N / (p or 1.0))
    ratio = scaled / c if c > 0 else (0.0 if scaled == 0 else np.inf)
    return SupBoundReport(eps=eps, sup=sup, c=c, scaled=scaled, ratio=ratio, passed=bool(ratio <= 1 + 1e-12), p=p)


@dataclass
class DominationRatioReport:
    eps: float
    lam: float
    lhs: float
    rhs: float
    factor: float
    ratio: float
    c: float
    passed: bool
    shifted: bool = False


def _certify(M: PhiFunction, phi: RegularityWitness, domain: GridDomain, certificate, seed: int):
    if certificate is None:
        certificate = check_pointwise_domination(M, phi, region=domain.omega, seed=seed)
    if not certificate.passed:
        raise UncertifiedError(f"(M, phi) fails the pointwise domination check: worst {certificate.worst}")
    return certificate


def bound_factor(phi: RegularityWitness, eps: float, c: float, N: int, lam: float, p: Optional[float] = None) -> float:
    """4 phi(eps, c eps^(-N/p) / lam)^3, evaluated in log space."""
    ls = np.log(c) - (N / (p or 1.0)) * np.log(eps) - np.log(lam)
    return float(4.0 * np.exp(3.0 * phi.log_phi(np.log(eps), ls)))


def verify_modular_domination(
    M: PhiFunction,
    u: GridFunction,
    eps: float,
    lam: float = 1.0,
    phi: Optional[RegularityWitness] = None,
    growth_p: Optional[float] = None,
    certificate=None,
    shifted: Optional[dict] = None,
    slack: float = 0.05,
    seed: int = 42,
) -> DominationRatioReport:
    """int M(x, |u_eps| / lam) against 4 phi(eps, c eps^(-N/p) / lam)^3 int M(x, |u| / lam).

    ``shifted`` = {"cover": SegmentCover, "i": piece, "r": r} replaces u_eps by
    the shifted mollification J_eps * (u)_r.  Refuses (UncertifiedError)
    when (M, phi) fails the pointwise check on the domain.
    """
    if not (0 < eps <= 0.5):
        raise DomainError("eps must lie in (0, 1/2]")
    phi = M.witness if phi is None else phi
    d = u.domain
    _certify(M, phi, d, certificate, seed)
    spec = build_mollifier(d, eps)
    c = spec.sup_constant(u, growth_p)
    if shifted is None:
        ue = mollify(u, eps, spec)
    else:
        _, _, eps = shift_parameters(shifted["cover"], shifted["i"], shifted["r"], eps, shifted.get("direction", "outward"))
        ue = shifted_mollify(u, shifted["cover"], shifted["i"], shifted["r"], eps, shifted.get("direction", "outward"))
    lhs = modular(M, ue, lam)
    rhs = modular(M, u, lam)
    factor = bound_factor(phi, eps, c, d.dim, lam, growth_p) if c > 0 else 4.0
    ratio = lhs / (factor * rhs) if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    return DominationRatioReport(
        eps=eps, lam=lam, lhs=lhs, rhs=rhs, factor=factor, ratio=float(ratio), c=c,
        passed=bool(ratio <= 1 + slack), shifted=shifted is not None,
    )


@dataclass
class DyadicReport:
    left: float
    right: float
    passed: bool


def dyadic_weights(k: int) -> np.ndarray:
    i = np.arange(1, k + 1)
    return 2.0 ** (k - i) / (2.0**k - 1)


def dyadic_convexity_check(f: Callable[[float], float], a: Sequence[float], k: Optional[int] = None) -> DyadicReport:
    """f(sum a_i / 2^i) <= sum 2^(k-i) / (2^k - 1) f(a_i), i = 1..k."""
    a = np.asarray(a, dtype=float)
    k = len(a) if k is None else int(k)
    a = a[:k]
    i = np.arange(1, k + 1)
    left = float(f(np.sum(a / 2.0**i)))
    right = float(np.sum(dyadic_weights(k) * np.array([f(v) for v in a])))
    return DyadicReport(left=left, right=right, passed=bool(left <= right * (1 + 1e-12) + 1e-300))


@dataclass
class PairingReport:
    pairings: np.ndarray  # (n_tests, n_sequence)
    final: np.ndarray
    passed: bool
    tol: float
    reason: str = ""


def _pair(w: GridFunction, v: GridFunction) -> float:
    d = w.domain
    if w.is_vector and not v.is_vector:
        return max(abs(d.integrate(c * v.values)) for c in w.values)
    if w.is_vector:
        return abs(d.integrate(np.sum(w.values * v.values, axis=0)))
    return abs(d.integrate(w.values * v.values))


def weak_pairing_check(
    M: PhiFunction,
    sequence: Sequence[GridFunction],
    target: GridFunction,
    tests: Sequence[GridFunction],
    tol: float = 1e-4,
    modular_report: Optional[ModularReport] = None,
) -> PairingReport:
    """|int (u_k - u) v| along the sequence for bounded test functions v.

    Bounded v on a bounded grid have finite conjugate modular (M* is
    finite-valued for N-functions), which is the hypothesis needed.
    """
    rep = modular_report or detect_modular_convergence(M, sequence, target)
    P = np.array([[_pair(u - target, v) for u in sequence] for v in tests])
    final = P[:, -1]
    if not rep.convergent:
        return PairingReport(P, final, False, tol, "modular convergence not detected")
    decreasing = np.all((final <= P[:, 0] * (1 + 1e-9)) | (P[:, 0] <= tol))
    ok = bool(np.all(final <= tol) and decreasing)
    return PairingReport(P, final, ok, tol, "" if ok else "pairing above tolerance or not decreasing")


# -- the double-phase approximation experiment ------------------------------------------------


@dataclass
class LavrentievResult:
    p: float
    q: float
    alpha: float
    N: int
    in_range: bool
    label: str
    eps: np.ndarray
    lambdas: np.ndarray
    w1p_error: np.ndarray
    order: float
    rho: np.ndarray  # (n_lambda, n_eps)
    bound_factors: np.ndarray  # (n_eps, n_lambda)
    modular: ModularReport
    bound_slope: float
    bound_exponent: float
    bound_bounded: bool
    convergence_claimed: bool
    c: float
    tests: dict = field(default_factory=dict)

    def rows(self) -> list[list]:
        out = []
        for j, e in enumerate(self.eps):
            for i, lam in enumerate(self.lambdas):
                out.append([e, lam, self.rho[i, j], self.bound_factors[j, i], self.w1p_error[j], self.label])
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "lambda", "rho", "bound_factor", "w1p_error", "verdict"])
            for e, lam, r, b, err, lab in self.rows():
                w.writerow([repr(float(e)), repr(float(lam)), repr(float(r)), repr(float(b)), repr(float(err)), lab])


def default_schedule(domain: GridDomain, coarsest: int = 2) -> np.ndarray:
    """2^-coarsest down to the finest resolvable power of two (eps >= 2h)."""
    finest = int(np.floor(np.log2(1.0 / (2 * domain.h))))
    return 2.0 ** -np.arange(coarsest, finest + 1)


def lavrentiev_experiment(
    p: float,
    q: float,
    alpha: float,
    N: int = 1,
    fixture: Optional[dict] = None,
    eps_schedule=None,
    lambdas=None,
    n: Optional[int] = None,
    C_a: float = 1.0,
    deep_schedule=None,
) -> LavrentievResult:
    """Mollify a compactly supported fixture on (-1, 1)^N under H = s^p + C_a |x|^alpha s^q.

    Reports the W^{1,p} error of u_eps, the modular rho_H((grad u_eps - grad u) / lambda)
    per lambda, and the bound factor 4 phi(eps, c eps^(-N/p) / lambda)^3.
    Convergence is claimed only inside the range q/p <= 1 + alpha/N.
    """
    n = n or (4096 if N == 1 else 256)
    domain = interval(-1.0, 1.0, n) if N == 1 else square(-1.0, 1.0, n)
    region = domain.omega
    a = {"kind": "power_distance", "beta": alpha, "scale": C_a}
    M = make_family({"family": "double_phase", "p": p, "q": q, "a": a}, dim=N, region=region)
    phi = M.witness
    fixture = fixture or {"shape": "hat_power", "theta": 2.0, "radius": 0.6}
    u = fixtures.build(domain, fixture)
    g = gradient(u)
    eps = default_schedule(domain) if eps_schedule is None else np.asarray(eps_schedule, dtype=float)
    lams = default_lambdas() if lambdas is None else np.asarray(lambdas, dtype=float)

    in_range = sharp_range_predicate(p, q, alpha, N)
    seq = []
    errs = []
    for e in eps:
        ue = mollify(u, e)
        ge = gradient(ue)
        seq.append(ge)
        errs.append((lp_norm(ue - u, p) ** p + lp_norm(ge - g, p) ** p) ** (1.0 / p))
    errs = np.array(errs)
    order = float(np.polyfit(np.log(eps), np.log(errs), 1)[0])
    report = detect_modular_convergence(M, seq, g, lams)

    c = kernel_lp_constant(N, p / (p - 1)) * lp_norm(g, p)
    factors = np.array([[bound_factor(phi, e, c, N, lam, p) for lam in report.lambdas] for e in eps])
    scaling = check_scaling_limsup(phi, c, N, p, deep_schedule, power=3.0, scale=4.0)
    label = "in_range" if in_range else "out_of_range"
    return LavrentievResult(
        p=p, q=q, alpha=alpha, N=N, in_range=in_range, label=label, eps=eps, lambdas=report.lambdas,
        w1p_error=errs, order=order, rho=report.rho, bound_factors=factors, modular=report,
        bound_slope=scaling.slope, bound_exponent=scaling.analytic_exponent, bound_bounded=scaling.bounded,
        convergence_claimed=bool(in_range and report.convergent), c=float(c),
        tests={"sequence": seq, "target": g, "M": M},
    )


# -- the segment construction ----------------------------------------------------------------


@dataclass
class PieceReport:
    index: int
    kind: str
    r: float
    eps: float
    J: tuple[float, float]
    I: dict
    jensen_ok: bool
    domination_ok: bool
    inside: bool
    leak_free: bool
    target: float


@dataclass
class SegmentResult:
    eta: float
    eta_bar: float
    lam: float
    lam_total: float
    pieces: list
    errors: tuple[float, float]
    bounds: tuple[float, float]
    passed: bool


def _truncate_magnitude(w: GridFunction, level: float) -> GridFunction:
    mag = w.magnitude()
    scale = np.where(mag > level, level / np.where(mag > 0, mag, 1.0), 1.0)
    return w.with_values(w.values * scale)


def _derivs(u: GridFunction) -> tuple[GridFunction, GridFunction]:
    return u, gradient(u, within_omega=True)


def _four_terms(M, w, cover, i, r, eps, lam, target, phi):
    """I1..I4 of the Jensen split of w - J_eps * (w)_r for one derivative order."""
    d = w.domain
    level, I1, wn = None, None, w
    top = float(np.max(w.magnitude()))
    for m in range(1, 40):
        level = top * (1 - 2.0**-m)
        wn = _truncate_magnitude(w, level)
        I1 = modular(M, w - wn, lam)
        if I1 <= target / 8:
            break
    r_eff, shift, eps_s = shift_parameters(cover, i, r, eps)
    wn_r = translate(wn.restrict(d.omega_mask if not wn.is_vector else d.omega_mask[None]), -shift)
    v_n = shifted_mollify(wn, cover, i, r, eps)
    v = shifted_mollify(w, cover, i, r, eps)
    I2 = modular(M, wn - wn_r, lam)
    I3 = modular(M, wn_r - v_n, lam)
    I4 = modular(M, v_n - v, lam)
    J = modular(M, w - v, 4 * lam)
    spec = build_mollifier(d, eps_s)
    c = spec.sup_constant(w - wn)
    factor = bound_factor(phi, eps_s, c, d.dim, lam) if c > 0 else 4.0
    return {
        "level": level, "I1": I1, "I2": I2, "I3": I3, "I4": I4, "J": J,
        "jensen_ok": J <= (I1 + I2 + I3 + I4) / 4 * (1 + 1e-12) + 1e-300,
        "domination_ok": I4 <= factor * I1 * 1.05 + 1e-300,
    }


def segment_approximation(
    M: PhiFunction,
    u: GridFunction,
    cover: SegmentCover,
    eta: float = 1e-2,
    lam: float = 1.0,
    r_fraction: float = 0.9,
    max_halvings: int = 12,
) -> SegmentResult:
    """Recombine v = sum_i J_eps_i * (psi_i u)_{r_i} + J_eps_0 * (psi_0 u) and measure
    int M(x, |D^a u - D^a v| / (2^(k+1) lam_total)) for a = 0, 1.

    Boundary pieces are numbered i = 1..k in cover order; (r_i, eps_i) are
    halved until J_i = int M(x, |D^a u_i - D^a v_i| / (4 lam)) <= eta_bar / 2^i.
    """
    d = u.domain
    phi = M.witness
    boundary = [j for j, pc in enumerate(cover.pieces) if pc.z is not None]
    interior = [j for j, pc in enumerate(cover.pieces) if pc.z is None]
    k = len(boundary)
    w = dyadic_weights(k) if k else np.array([])
    eta_bar = eta / 2.0 / (np.sum(w) if k else 1.0)
    lam_total = 4.0 * lam
    du = _derivs(u)
    dv = [d.zeros(), d.zeros(d.dim)]
    reports = []
    J_all = []
    for rank, j in enumerate(boundary, start=1):
        ui = u * cover.psi[j]
        dui = _derivs(ui)
        target = eta_bar / 2.0**rank
        r = r_fraction * cover.r_max(j)
        chosen = None
        for _ in range(max_halvings):
            r_eff, _ = cover.snap_shift(j, r)
            eps = r_fraction * cover.eps_max(j, r_eff)
            if eps < 2 * d.h:
                break
            vs = [shifted_mollify(x, cover, j, r, eps) for x in dui]
            J = [modular(M, x - y, 4 * lam) for x, y in zip(dui, vs)]
            chosen = (r, eps, vs, J)
            if max(J) <= target:
                break
            r /= 2
        r, eps, vs, J = chosen
        terms = [_four_terms(M, x, cover, j, r, eps, lam, target, phi) for x in dui]
        geo = shift_geometry(cover, j, r, eps, "outward", ui)
        _, _, eps_s = shift_parameters(cover, j, r, eps)
        reports.append(PieceReport(
            index=j, kind="boundary", r=geo.r, eps=eps_s, J=tuple(J),
            I={f"I{m}": tuple(t[f"I{m}"] for t in terms) for m in range(1, 5)},
            jensen_ok=all(t["jensen_ok"] for t in terms),
            domination_ok=all(t["domination_ok"] for t in terms),
            inside=geo.inside, leak_free=geo.leak_free, target=target,
        ))
        J_all.append(J)
        dv = [acc + v for acc, v in zip(dv, vs)]
    J0 = [0.0, 0.0]
    for j in interior:
        u0 = u * cover.psi[j]
        du0 = _derivs(u0)
        eps = r_fraction * cover.eps_max(j, 0.0)
        for _ in range(max_halvings):
            if eps < 2 * d.h:
                break
            vs = [mollify(x, eps) for x in du0]
            J0 = [modular(M, x - y, lam) for x, y in zip(du0, vs)]
            if max(J0) <= eta_bar / 2:
                break
            eps /= 2
        reports.append(PieceReport(
            index=j, kind="interior", r=0.0, eps=eps, J=tuple(J0), I={}, jensen_ok=True, domination_ok=True,
            inside=bool(not np.any(vs[0].values[~d.omega_mask] != 0)), leak_free=True, target=eta_bar / 2,
        ))
        dv = [acc + v for acc, v in zip(dv, vs)]
    scale = 2.0 ** (k + 1) * lam_total
    errors = tuple(modular(M, x - y, scale) for x, y in zip(du, dv))
    bounds = tuple(
        float(sum(w[m] * J_all[m][a] for m in range(k)) + J0[a] / 2.0 ** (k + 1)) for a in range(2)
    )
    passed = all(e <= eta for e in errors) and all(p.jensen_ok and p.inside and p.leak_free for p in reports)
    return SegmentResult(
        eta=eta, eta_bar=eta_bar, lam=lam, lam_total=lam_total, pieces=reports,
        errors=errors, bounds=bounds, passed=bool(passed),
    )
