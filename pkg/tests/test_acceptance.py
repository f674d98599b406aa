"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances
and runtime limits.  Lines are collected in the terminal summary."""
import itertools
import time

import mpmath
import numpy as np

import modlab.mollify as mo
from modlab import conjugate as cj, convergence as cv, fixtures, grid, phi, regularity as rg

DP = {"family": "double_phase", "p": 2, "q": 2.2, "a": {"kind": "power_distance", "beta": 0.5}}
VE = {"family": "variable_exponent", "p": {"kind": "affine", "c0": 2.0, "slope": 0.25}}
WS = {
    "family": "weighted_sum",
    "terms": [{"k": {"kind": "quadratic", "c0": 1, "c2": 1}, "M": {"family": "orlicz_custom", "kind": "power", "p": 2}}],
}
# (descriptor, growth exponent p with M(x, s) >= c s^p near infinity)
FAMILIES = {"double_phase": (DP, 2.0), "variable_exponent": (VE, 1.75), "weighted_sum": (WS, 2.0)}


# -- 1. conjugation --------------------------------------------------------------------


def test_criterion_1_conjugation(criterion):
    t0 = time.perf_counter()
    s = np.geomspace(1e-2, 1e2, 401)
    u = np.geomspace(1e-2, 1e2, 200)
    worst = {"conj": 0.0, "bi": 0.0, "fy": -np.inf}
    ok = True
    for p in (1.5, 2.0, 3.0):
        M = phi.power(p, normalized=True)
        q = p / (p - 1)
        T = cj.legendre_conjugate(M, 0.0, s)
        err = np.abs(T.values - s**q / q)
        ok &= bool(np.all(err <= np.maximum(1e-4, T.gap)))
        worst["conj"] = max(worst["conj"], float(np.max(err / np.maximum(1e-4, T.gap))))
        # M* tabulated past M'(s_max), then conjugated back as a piecewise-linear table
        v = np.concatenate([[0.0], np.geomspace(1e-6, 2 * s[-1] ** (p - 1), 4000)])
        Ts = cj.legendre_conjugate(M, 0.0, v)
        B = cj.legendre_conjugate(Ts, 0.0, s)
        gap = B.gap + Ts.gap_max
        e2 = np.abs(B.values - s**p / p)
        ok &= bool(np.all(e2 <= 2 * np.maximum(gap, 1e-12)))
        worst["bi"] = max(worst["bi"], float(np.max(e2 / gap)))
        fy = cj.verify_fenchel_young(M, 0.0, u, u)
        ok &= fy.passed
        worst["fy"] = max(worst["fy"], fy.max_violation - fy.gap_bound)
    dt = time.perf_counter() - t0
    ok &= dt < 5
    criterion(1, ok, f"err/max(1e-4,gap) <= {worst['conj']:.2g}, biconj err/gap <= {worst['bi']:.2g}, "
                     f"FY excess {worst['fy']:.2g}, {dt:.2f}s (< 5s)")
    assert ok


# -- 2. Luxemburg norm ------------------------------------------------------------------


def _closed_form_errors():
    errs = {}
    d = grid.interval(0, 1, 256)
    one = grid.GridFunction(d, np.ones(d.shape))
    for p in (1.5, 2.0, 3.0):
        errs[f"power{p}"] = max(abs(grid.luxemburg_norm(phi.power(p), c * one) - c) for c in (1.0, 2.0))
    roots = np.roots([1.0, 1.0, 0.0, -1.0])
    t_star = float(np.real(roots[np.abs(roots.imag) < 1e-12][0]))
    Mdp = phi.make_family({"family": "double_phase", "p": 2, "q": 3, "a": 1.0})
    errs["double_phase"] = abs(grid.luxemburg_norm(Mdp, one) - 1 / t_star)
    mpmath.mp.dps = 30
    lam_star = float(mpmath.findroot(lambda lam: mpmath.quad(lambda x: lam ** (-(2 + x)), [0, 1]) - 1, 1.2))
    fine = grid.interval(0, 1, 2**17)
    Mve = phi.make_family({"family": "variable_exponent", "p": {"kind": "affine", "c0": 2.0, "slope": 1.0}}, region=[(0, 1)])
    errs["variable_exponent"] = abs(grid.luxemburg_norm(Mve, grid.GridFunction(fine, np.ones(fine.shape))) - lam_star)
    return errs


def test_criterion_2_luxemburg(criterion):
    t0 = time.perf_counter()
    d = grid.interval(-1, 1, 1024)
    rng = np.random.default_rng(2024)
    tol = 1e-8
    worst = {"unit": 0.0, "homog": 0.0, "triangle": -np.inf}
    for name, (desc, _) in FAMILIES.items():
        M = phi.make_family(desc, region=d.omega)
        for _ in range(50):
            u = fixtures.random_fixture(d, rng)
            w = fixtures.random_fixture(d, rng)
            c = float(rng.uniform(-10, 10))
            nu, nw = grid.luxemburg_norm(M, u), grid.luxemburg_norm(M, w)
            worst["unit"] = max(worst["unit"], abs(grid.modular(M, u, nu) - 1.0))
            worst["homog"] = max(worst["homog"], abs(grid.luxemburg_norm(M, c * u) - abs(c) * nu) / (abs(c) * nu))
            worst["triangle"] = max(worst["triangle"], (grid.luxemburg_norm(M, u + w) - nu - nw) / (nu + nw))
    closed = _closed_form_errors()
    ok = worst["unit"] <= tol and worst["homog"] <= tol and worst["triangle"] <= tol and max(closed.values()) <= tol
    dt = time.perf_counter() - t0
    criterion(2, ok, f"|rho(u/|u|)-1| <= {worst['unit']:.2g}, homogeneity {worst['homog']:.2g}, "
                     f"triangle excess {worst['triangle']:.2g}, closed forms {max(closed.values()):.2g} "
                     f"(150 fixtures, {dt:.1f}s)")
    assert ok


# -- 3. lemma certifications --------------------------------------------------------------


def _shift_cover():
    box = grid.GridDomain(((-2.0, 2.0),), (8192,), omega=((-1.0, 1.0),))  # same spacing as n=4096 on (-1, 1)
    pieces = [
        mo.CoverPiece(outer=((-1.6, -0.2),), inner=((-1.3, -0.5),), z=(0.5,)),
        mo.CoverPiece(outer=((0.2, 1.6),), inner=((0.5, 1.3),), z=(-0.5,)),
        mo.CoverPiece(outer=((-0.7, 0.7),), inner=((-0.6, 0.6),), z=None),
    ]
    return box, mo.build_segment_cover(box, pieces)


def test_criterion_3_lemmas(criterion):
    t0 = time.perf_counter()
    d = grid.interval(-1, 1, 4096)
    box, cover = _shift_cover()
    sched = 2.0 ** -np.arange(2, 10)
    assert len(sched) == 8 and sched[-1] >= 2 * d.h
    slack = 1.05
    rng = np.random.default_rng(7)
    worst = {k: 0.0 for k in ("sup_N", "sup_N/p", "dom", "dom_shifted", "env")}
    violations = 0
    certified = True
    dyadic_ok = True
    for name, (desc, p) in FAMILIES.items():
        M = phi.make_family(desc, region=d.omega)
        MB = phi.make_family(desc, region=box.omega)
        w = M.witness
        cert = rg.check_pointwise_domination(M, w, region=d.omega)
        certified &= cert.passed
        u = fixtures.hat_power(d)
        U = fixtures.dome(box, radius=1.0)  # support reaches the boundary of (-1, 1)
        for e in sched:
            for key, rep in (("sup_N", cv.verify_sup_bound(u, e)), ("sup_N/p", cv.verify_sup_bound(u, e, p))):
                worst[key] = max(worst[key], rep.ratio)
                violations += rep.ratio > 1 + 1e-12
            for lam in (0.25, 1.0, 4.0):
                rep = cv.verify_modular_domination(M, u, e, lam, w, growth_p=p, certificate=cert)
                worst["dom"] = max(worst["dom"], rep.ratio)
                violations += rep.ratio > slack
                for i in (0, 1):
                    shifted = {"cover": cover, "i": i, "r": min(0.55, 4 * e)}
                    rep = cv.verify_modular_domination(MB, U, e, lam, w, growth_p=p, shifted=shifted)
                    worst["dom_shifted"] = max(worst["dom_shifted"], rep.ratio)
                    violations += rep.ratio > slack
            for x in (-0.9, -0.3, 0.0, 0.45):
                y = cj.ball_sample(x, e / 2, 33, omega=d.omega)
                rep = cj.verify_envelope_bound(M, w, x, e, y, phi.default_s_grid())
                worst["env"] = max(worst["env"], rep.max_ratio)
                violations += not rep.passed
        for x in (-0.7, 0.2):
            f = lambda t, x=x: float(M(x, t))
            for _ in range(20):
                dyadic_ok &= cv.dyadic_convexity_check(f, rng.uniform(0, 5, rng.integers(1, 9))).passed
    dt = time.perf_counter() - t0
    ok = certified and dyadic_ok and violations == 0 and dt < 60
    ratios = ", ".join(f"{k} {v:.3g}" for k, v in worst.items())
    criterion(3, ok, f"{violations} violations; worst ratios: {ratios}; dyadic {'ok' if dyadic_ok else 'FAILED'}; {dt:.1f}s (< 60s)")
    assert ok


# -- 5. sharp range --------------------------------------------------------------------------


def test_criterion_5_sharp_range(criterion):
    rows = []
    for N, p, alpha, delta in itertools.product((1, 2), (1.5, 2.0, 3.0), (0.3, 0.5, 1.0), (-0.5, 0.0, 0.5)):
        # q - p = (1 + delta) p alpha / N, so the exponent is -alpha delta and delta = 0 is the boundary
        q = p + p * alpha / N * (1 + delta)
        rows.append((N, p, alpha, q, delta))
    bad = []
    boundary_slopes = []
    for N, p, alpha, q, delta in rows:
        pred = rg.sharp_range_predicate(p, q, alpha, N)
        w = rg.double_phase_witness(1.0, alpha, p, q)
        e = 3 * (alpha - N * (q - p) / p)
        for c in (1.0, 10.0):
            rep = rg.check_scaling_limsup(w, c, N, p, power=3.0, scale=4.0)
            if pred != rep.bounded:
                bad.append((N, p, alpha, q, c, "predicate vs boundedness"))
            elif delta > 0 and abs(rep.slope - e) > 0.1 * abs(e):
                bad.append((N, p, alpha, q, c, f"slope {rep.slope:.4g} vs {e:.4g}"))
            elif delta <= 0 and abs(rep.slope) > 0.05:
                # bounded side: phi >= 1, so the factor levels off and the slope tends to 0
                bad.append((N, p, alpha, q, c, f"slope {rep.slope:.4g} not flat"))
            if delta == 0:
                boundary_slopes.append(rep.slope)
                if not pred:
                    bad.append((N, p, alpha, q, c, "boundary predicate false"))
    ok = not bad and len(rows) >= 20
    criterion(5, ok, f"{len(rows)} tuples x 2 constants, {len(bad)} disagreements, "
                     f"boundary |slope| <= {max(map(abs, boundary_slopes)):.2g}" + (f"; first: {bad[0]}" if bad else ""))
    assert ok


# -- 6. segment construction -----------------------------------------------------------------


def test_criterion_6_segment(criterion):
    d = grid.interval(-0.5, 1.5, 4096, omega=(0, 1))
    cover = mo.build_segment_cover(d, mo.interval_cover((0, 1)))
    M = phi.make_family(DP, region=d.omega)
    u = fixtures.dome(d, center=0.5, radius=0.5)  # positive up to both end points of [0, 1]
    res = cv.segment_approximation(M, u, cover, eta=1e-2)
    boundary = [pr for pr in res.pieces if pr.kind == "boundary"]
    stays = all(
        not np.any(mo.shifted_mollify(u * cover.psi[pr.index], cover, pr.index, pr.r, pr.eps).magnitude()[~d.omega_mask])
        for pr in boundary
    )
    split = all(set(pr.I) == {"I1", "I2", "I3", "I4"} for pr in boundary)
    ok = res.passed and stays and split and len(res.pieces) == 3 and all(pr.jensen_ok for pr in boundary)
    terms = "; ".join(
        f"piece {pr.index}: " + ", ".join(f"{k} {max(v):.2g}" for k, v in pr.I.items()) for pr in boundary
    )
    criterion(6, ok, f"errors (u, Du) = ({res.errors[0]:.2g}, {res.errors[1]:.2g}) <= 1e-2, "
                     f"support in closed Omega: {stays}; {terms}")
    assert ok


# -- 4 and 7. approximation pipeline and weak pairing ---------------------------------------

_RUNS = {}


def _run(N):
    if N not in _RUNS:
        t0 = time.perf_counter()
        res = cv.lavrentiev_experiment(2.0, 2.2, 0.5, N=N)
        _RUNS[N] = (res, time.perf_counter() - t0)
    return _RUNS[N]


def _criterion_4_ok(res):
    rep = res.modular
    j = int(np.argmax(rep.detected)) if rep.convergent else None
    final_ratio = rep.rho[j, -1] / rep.rho[j, 0] if j is not None else np.inf
    decreasing = bool(np.all(np.diff(res.w1p_error) < 0))
    return decreasing and res.order >= 1 and final_ratio <= 1e-2, final_ratio


def test_criterion_4_approximation(criterion):
    parts = []
    ok = True
    total = 0.0
    for N in (1, 2):
        res, dt = _run(N)
        total += dt
        good, ratio = _criterion_4_ok(res)
        ok &= good
        parts.append(f"N={N}: order {res.order:.2f}, rho ratio {ratio:.2g} at lambda* {res.modular.lambda_star:g}, "
                     f"{res.modular.verdict}")
    ok &= total < 180
    criterion(4, ok, "; ".join(parts) + f"; {total:.1f}s (< 180s)")
    assert ok


def _test_functions(d):
    # compactly supported smooth bumps of radius 0.5 at asymmetric centres
    centres = [(-0.45, 0.2), (-0.2, -0.35), (0.1, 0.4), (0.3, -0.1), (0.5, 0.3)]
    if d.dim == 1:
        return [d.sample(lambda x, c=c: np.e * mo._bump(((x - c[0]) / 0.5) ** 2)) for c in centres]
    return [
        d.sample(lambda P, c=c: np.e * mo._bump(((P[..., 0] - c[0]) ** 2 + (P[..., 1] - c[1]) ** 2) / 0.25))
        for c in centres
    ]


def test_criterion_7_weak_pairing(criterion):
    parts = []
    ok = True
    for N in (1, 2):
        res, _ = _run(N)
        if not _criterion_4_ok(res)[0]:
            continue
        d = res.tests["target"].domain
        rep = cv.weak_pairing_check(res.tests["M"], res.tests["sequence"], res.tests["target"], _test_functions(d),
                                    tol=1e-4, modular_report=res.modular)
        ok &= rep.passed
        parts.append(f"N={N}: max final pairing {np.max(rep.final):.2g} ({'ok' if rep.passed else 'above 1e-4'})")
    criterion(7, ok and bool(parts), "; ".join(parts))
    assert ok and parts
