"""Named test functions on grids: hat, hat_power, plateau, dome, csv, random."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InputError
from .grid import GridDomain, GridFunction

SHAPES = ("hat", "hat_power", "plateau", "dome", "csv", "constant")


def _radius(domain: GridDomain, center) -> np.ndarray:
    c = np.zeros(domain.dim) + np.asarray(center, dtype=float)
    if domain.dim == 1:
        return np.abs(domain.points - c[0])
    return np.linalg.norm(domain.points - c, axis=-1)


def hat(domain: GridDomain, center=0.0, radius: float = 1.0, height: float = 1.0) -> GridFunction:
    """(1 - |x - c| / R)_+"""
    r = _radius(domain, center)
    return GridFunction(domain, height * np.maximum(1.0 - r / radius, 0.0))


def hat_power(domain: GridDomain, theta: float = 2.0, center=0.0, radius: float = 0.6, height: float = 1.0) -> GridFunction:
    """(1 - |x - c|^2 / R^2)_+^theta; C^1 across the support edge for theta > 1."""
    r = _radius(domain, center)
    return GridFunction(domain, height * np.maximum(1.0 - (r / radius) ** 2, 0.0) ** theta)


def plateau(domain: GridDomain, center=0.0, inner: float = 0.3, outer: float = 0.6, height: float = 1.0) -> GridFunction:
    """1 on |x - c| <= inner, linear down to 0 at |x - c| = outer."""
    r = _radius(domain, center)
    return GridFunction(domain, height * np.clip((outer - r) / (outer - inner), 0.0, 1.0))


def dome(domain: GridDomain, center=0.0, radius: float = 1.0, height: float = 1.0) -> GridFunction:
    """1 - |x - c|^2 / R^2 on the closed Omega, zero outside it (need not vanish on the boundary)."""
    r = _radius(domain, center)
    vals = height * np.maximum(1.0 - (r / radius) ** 2, 0.0)
    return GridFunction(domain, np.where(domain.omega_mask, vals, 0.0))


def from_csv(domain: GridDomain, path) -> GridFunction:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"fixture file not found: {path}")
    return GridFunction.from_csv(path, domain)


def build(domain: GridDomain, spec: dict) -> GridFunction:
    """Fixture from a descriptor such as ``{"shape": "hat_power", "theta": 2, "radius": 0.6}``."""
    spec = dict(spec)
    shape = spec.pop("shape", None)
    if shape == "hat":
        return hat(domain, **spec)
    if shape == "hat_power":
        return hat_power(domain, **spec)
    if shape == "plateau":
        return plateau(domain, **spec)
    if shape == "dome":
        return dome(domain, **spec)
    if shape == "constant":
        return GridFunction(domain, np.where(domain.omega_mask, float(spec.get("value", 1.0)), 0.0))
    if shape == "csv":
        if "path" not in spec:
            raise InputError("csv fixture needs a 'path'")
        return from_csv(domain, spec["path"])
    raise InputError(f"unknown fixture shape {shape!r}")


def random_fixture(domain: GridDomain, rng: np.random.Generator, n_bumps: int = 3) -> GridFunction:
    """Sum of randomly placed and scaled hat-power bumps of random sign, inside Omega."""
    lo = np.array([b[0] for b in domain.omega])
    hi = np.array([b[1] for b in domain.omega])
    total = np.zeros(domain.shape)
    for _ in range(n_bumps):
        radius = rng.uniform(0.1, 0.5) * float(np.min(hi - lo))
        center = rng.uniform(lo + radius, hi - radius)
        amp = rng.uniform(0.2, 3.0) * rng.choice([-1.0, 1.0])
        total += hat_power(domain, theta=rng.uniform(1.0, 3.0), center=center, radius=radius, height=amp).values
    return GridFunction(domain, total)
