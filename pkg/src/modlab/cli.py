"""Command-line runner: ``modlab <subcommand> --config cfg.json --out dir``.

Exit status 0 when every requested certification passes, 1 on a
certification failure (the worst witness is printed), 2 on a malformed
config or a missing input file.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import conjugate, convergence, fixtures, grid, mollify, phi, regularity
from .errors import ModlabError, UncertifiedError, UnsupportedWitness
from .reporting import dumps

COMMANDS = ("verify-lemmas", "conjugate", "norm", "mollify", "lavrentiev", "witness")


class ConfigError(Exception):
    pass


class Failure(Exception):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    sched = cfg.get("eps_schedule")
    if sched is not None and (len(sched) < 1 or np.any(np.diff(sched) >= 0)):
        raise ConfigError("eps_schedule must be strictly decreasing")
    return cfg


def _domain(cfg: dict) -> grid.GridDomain:
    spec = cfg.get("domain", {})
    N = int(spec.get("N", cfg.get("family", {}).get("dim", 1)))
    bounds = spec.get("bounds", [[-1.0, 1.0]] * N)
    res = spec.get("resolution", 4096 if N == 1 else 256)
    return grid.GridDomain(tuple(map(tuple, bounds)), tuple(np.broadcast_to(res, (N,)).tolist()), spec.get("omega"))


def _family(cfg: dict, domain: grid.GridDomain) -> phi.PhiFunction:
    if "family" not in cfg:
        raise ConfigError("config needs a 'family' descriptor")
    return phi.make_family(cfg["family"], dim=domain.dim, region=domain.omega)


def _s_grid(spec) -> np.ndarray:
    if spec is None:
        return phi.default_s_grid()
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    s = np.geomspace(spec.get("min", 1e-3), spec.get("max", 1e3), int(spec.get("n", 121)))
    return np.concatenate([[0.0], s]) if spec.get("include_zero", True) else s


def _write(out: Path, name: str, obj) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(dumps(obj) + "\n")
    return path


# -- subcommands ----------------------------------------------------------------------


def cmd_witness(cfg, out: Path, seed: int, threads: int) -> dict:
    d = _domain(cfg)
    M = _family(cfg, d)
    try:
        w = M.witness
    except UnsupportedWitness as exc:
        raise Failure(str(exc)) from None
    dom = regularity.check_pointwise_domination(M, w, region=d.omega, s_grid=_s_grid(cfg.get("s_grid")), seed=seed)
    inv = regularity.check_witness_invariants(w)
    c_list = cfg.get("c_list", [1.0, 10.0])
    p = cfg.get("growth_p")
    scaling = [regularity.check_scaling_limsup(w, c, d.dim, p) for c in c_list]
    report = {
        "witness": {"kind": w.kind, "params": w.params, "monotone_in_s": w.monotone_in_s},
        "domination": dom,
        "invariants": inv,
        "scaling": [{"c": s.c, "bounded": s.bounded, "slope": s.slope, "verdict": s.verdict} for s in scaling],
        "passed": dom.passed and inv["passed"],
    }
    _write(out, "witness.json", report)
    if not report["passed"]:
        raise Failure("witness check failed", dom.worst)
    return report


def cmd_conjugate(cfg, out: Path, seed: int, threads: int) -> dict:
    d = _domain(cfg)
    M = _family(cfg, d)
    sec = cfg.get("conjugate", {})
    x = sec.get("x", 0.0 if d.dim == 1 else [0.0, 0.0])
    s = _s_grid(sec.get("s_grid", {"min": 1e-2, "max": 1e2, "n": 401}))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        table = conjugate.legendre_conjugate(M, x, s)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "conjugate.csv")
    report = {"x": x, "gap_max": table.gap_max, "warnings": [str(w.message) for w in caught], "passed": True}
    if sec.get("biconjugate", True):
        bi = conjugate.second_conjugate(conjugate.EnvelopeTable(s, M.at(x)(s), "samples"))
        bi.to_csv(out / "envelope.csv")
    _write(out, "conjugate.json", report)
    return report


def cmd_norm(cfg, out: Path, seed: int, threads: int) -> dict:
    d = _domain(cfg)
    M = _family(cfg, d)
    u = fixtures.build(d, cfg.get("fixture", {"shape": "constant", "value": 1.0}))
    lams = np.asarray(cfg.get("lambdas", convergence.default_lambdas()), dtype=float)
    norm = grid.luxemburg_norm(M, u)
    report = {
        "luxemburg_norm": norm,
        "rho_at_norm": grid.modular(M, u, norm),
        "modular": [[float(l), grid.modular(M, u, l)] for l in lams],
        "passed": True,
    }
    _write(out, "norm.json", report)
    return report


def cmd_mollify(cfg, out: Path, seed: int, threads: int) -> dict:
    d = _domain(cfg)
    u = fixtures.build(d, cfg.get("fixture", {"shape": "hat"}))
    sched = cfg.get("eps_schedule", convergence.default_schedule(d).tolist())
    p = cfg.get("growth_p")
    reports = [convergence.verify_sup_bound(u, e, p) for e in sched]
    out.mkdir(parents=True, exist_ok=True)
    mollify.mollify(u, sched[-1]).to_csv(out / "mollified.csv")
    report = {"sup_bound": reports, "passed": all(r.passed for r in reports)}
    _write(out, "mollify.json", report)
    if not report["passed"]:
        worst = max(reports, key=lambda r: r.ratio)
        raise Failure("sup bound violated", {"eps": worst.eps, "ratio": worst.ratio})
    return report


def cmd_lavrentiev(cfg, out: Path, seed: int, threads: int) -> dict:
    sec = cfg.get("lavrentiev", {})
    for key in ("p", "q", "alpha"):
        if key not in sec:
            raise ConfigError(f"lavrentiev section needs '{key}'")
    res = convergence.lavrentiev_experiment(
        float(sec["p"]), float(sec["q"]), float(sec["alpha"]), int(sec.get("N", 1)),
        fixture=cfg.get("fixture"), eps_schedule=cfg.get("eps_schedule"), lambdas=cfg.get("lambdas"),
        n=sec.get("n"), C_a=float(sec.get("C_a", 1.0)),
    )
    out.mkdir(parents=True, exist_ok=True)
    res.to_csv(out / "lavrentiev.csv")
    report = {
        "label": res.label, "in_range": res.in_range, "order": res.order, "verdict": res.modular.verdict,
        "convergence_claimed": res.convergence_claimed, "bound_slope": res.bound_slope,
        "bound_exponent": res.bound_exponent, "bound_bounded": res.bound_bounded, "passed": True,
    }
    _write(out, "lavrentiev.json", report)
    return report


def cmd_verify_lemmas(cfg, out: Path, seed: int, threads: int) -> dict:
    d = _domain(cfg)
    M = _family(cfg, d)
    u = fixtures.build(d, cfg.get("fixture", {"shape": "hat", "radius": 0.5}))
    sched = cfg.get("eps_schedule", (2.0 ** -np.arange(2, 10)).tolist())
    lam = float(cfg.get("lambda", 1.0))
    p = cfg.get("growth_p")
    try:
        w = M.witness
    except UnsupportedWitness as exc:
        raise Failure(f"no witness, lemmas needing phi-domination refused: {exc}") from None
    cert = regularity.check_pointwise_domination(M, w, region=d.omega, seed=seed)
    checks = {"pointwise_domination": cert}
    failures = []
    if not cert.passed:
        failures.append(("pointwise_domination", cert.worst))
    else:
        def per_eps(e):
            sup = convergence.verify_sup_bound(u, e)
            supp = convergence.verify_sup_bound(u, e, p) if p else None
            dom = convergence.verify_modular_domination(M, u, e, lam, w, growth_p=p, certificate=cert)
            return {"eps": e, "sup_bound": sup, "sup_bound_p": supp, "domination": dom}

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            rows = list(pool.map(per_eps, sched))
        checks["per_eps"] = rows
        for r in rows:
            for key in ("sup_bound", "sup_bound_p", "domination"):
                rep = r[key]
                if rep is not None and not rep.passed:
                    failures.append((f"{key}@eps={r['eps']:g}", {"ratio": rep.ratio}))
    a = cfg.get("dyadic_a", [1.0, 1.0, 1.0])
    dy = convergence.dyadic_convexity_check(lambda t: float(M(0.0 if d.dim == 1 else np.zeros(2), t)), a)
    checks["dyadic_convexity"] = dy
    if not dy.passed:
        failures.append(("dyadic_convexity", {"left": dy.left, "right": dy.right}))
    integ = regularity.check_local_integrability(M, d, cfg.get("c_list", [1.0, 2.0]))
    checks["local_integrability"] = integ
    if not integ.passed:
        failures.append(("local_integrability", integ.failures[0]))
    report = {"checks": checks, "passed": not failures, "failures": [f[0] for f in failures]}
    _write(out, "lemmas.json", report)
    if failures:
        raise Failure(f"{len(failures)} certification(s) failed", failures[0])
    return report


HANDLERS = {
    "verify-lemmas": cmd_verify_lemmas,
    "conjugate": cmd_conjugate,
    "norm": cmd_norm,
    "mollify": cmd_mollify,
    "lavrentiev": cmd_lavrentiev,
    "witness": cmd_witness,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="modlab", description="Musielak-Orlicz modular analysis laboratory")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", default="modlab-out", help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="pair-sampling seed (default: config or 42)")
    ap.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 42))
        report = HANDLERS[args.command](cfg, Path(args.out), seed, args.threads)
    except Failure as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        print(f"worst witness: {dumps(exc.witness, indent=None)}", file=sys.stderr)
        return 1
    except (ConfigError, FileNotFoundError, KeyError, TypeError, ModlabError) as exc:
        if isinstance(exc, UncertifiedError):
            print(f"FAIL: {exc}", file=sys.stderr)
            return 1
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: ok ({'passed' if report.get('passed') else 'done'})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
