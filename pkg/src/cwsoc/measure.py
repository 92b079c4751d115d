"""Symmetric probability measures on the line: atoms plus a density component.

A measure is stored as a finite list of atoms together with an optional
absolutely continuous part.  The density callable carries its own mass ``a``
(it integrates to ``a``, not to 1) and must come with a Gaussian domination
pair ``(A, v)`` such that ``density(z) <= A * exp(-v z^2)``: this pair feeds
the rejection sampler envelope and the analytic quadrature tail bounds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .quadrature import adaptive_gauss_legendre, gaussian_tail_bound


class MeasureError(ValueError):
    """Raised for invalid or degenerate measure specifications."""


@dataclass(frozen=True)
class DensityComponent:
    pdf: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    domination: tuple[float, float]  # (A, v)
    spec: Optional[dict] = None      # JSON description, kept for round-trips

    def __call__(self, z):
        return self.pdf(np.asarray(z, dtype=float))


@dataclass(frozen=True)
class MomentSummary:
    sigma2: float
    mu4: float
    mass_at_zero: float


@dataclass(frozen=True)
class Measure1D:
    atoms: tuple[tuple[float, float], ...] = ()
    density: Optional[DensityComponent] = None
    v0: Optional[float] = None  # integrability witness, defaults to v/2

    @property
    def discrete_mass(self) -> float:
        return sum(m for _, m in self.atoms)

    @property
    def ac_mass(self) -> float:
        return 1.0 - self.discrete_mass

    @property
    def mass_at_zero(self) -> float:
        return sum(m for z, m in self.atoms if z == 0.0)

    @property
    def witness(self) -> float:
        if self.v0 is not None:
            return self.v0
        if self.density is not None:
            return 0.5 * self.density.domination[1]
        return 1.0

    def density_integral(self, g, tol: float = 1e-12):
        """Quadrature of ``g(z) * density(z)`` over the effective support."""
        if self.density is None:
            return 0.0
        R = self.density.support_radius
        pdf = self.density.pdf
        return adaptive_gauss_legendre(
            lambda z: g(z) * pdf(z), -R, R, tol=tol, initial_panels=8
        )

    def validate(self, grid_points: int = 201) -> None:
        """Check the structural invariants; raise MeasureError on failure."""
        locs = [z for z, _ in self.atoms]
        if len(set(locs)) != len(locs):
            raise MeasureError("atom locations must be distinct")
        for z, m in self.atoms:
            if not (0.0 < m <= 1.0):
                raise MeasureError(f"atom mass {m} outside (0, 1]")
        atom_map = dict(self.atoms)
        for z, m in self.atoms:
            if abs(atom_map.get(-z, np.nan) - m) > 1e-12:
                raise MeasureError(f"missing mirror atom for location {z}")
        a = self.ac_mass
        if self.density is None:
            if abs(a) > 1e-12:
                raise MeasureError(f"atom masses sum to {self.discrete_mass}, not 1")
        else:
            if a <= -1e-12:
                raise MeasureError("discrete mass exceeds 1")
            A, v = self.density.domination
            if A <= 0 or v <= 0:
                raise MeasureError("domination pair must be positive")
            R = self.density.support_radius
            grid = np.linspace(0.0, R, grid_points)
            fp = self.density.pdf(grid)
            fm = self.density.pdf(-grid)
            if np.any(fp < -1e-12):
                raise MeasureError("density takes negative values")
            if np.max(np.abs(fp - fm)) > 1e-10:
                raise MeasureError("density is not symmetric on the test grid")
            if np.any(fp > A * np.exp(-v * grid**2) + 1e-10):
                raise MeasureError("density exceeds its Gaussian envelope")
            mass = self.density_integral(lambda z: np.ones_like(z))
            tail = gaussian_tail_bound(A, v, R)
            if abs(mass - a) > 1e-9 + 2 * tail:
                raise MeasureError(
                    f"density mass {mass:.3e} inconsistent with 1 - b = {a:.3e}"
                )
            if not self.witness < v:
                raise MeasureError("integrability witness v0 must be < v")
            # e^{v0 z^2} drho must be finite: the envelope makes the tail
            # integral proportional to exp((v0 - v) z^2), convergent here.
        if moments(self, _validated=True).sigma2 <= 0:
            raise MeasureError("degenerate measure: variance is zero")

    def to_json(self) -> str:
        doc: dict = {"atoms": [[z, m] for z, m in self.atoms]}
        if self.density is not None:
            doc["density"] = self.density.spec or {"kind": "opaque"}
            doc["domination"] = list(self.density.domination)
            doc["support_radius"] = self.density.support_radius
        if self.v0 is not None:
            doc["v0"] = self.v0
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "Measure1D":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MeasureError(f"malformed measure JSON: {exc}") from exc
        atoms = tuple((float(z), float(m)) for z, m in doc.get("atoms", []))
        density = None
        if "density" in doc:
            spec = doc["density"]
            dom = tuple(doc["domination"])
            R = float(doc["support_radius"])
            density = _density_from_spec(spec, R, dom)
        return Measure1D(atoms=atoms, density=density, v0=doc.get("v0"))


def _density_from_spec(spec: dict, R: float, dom: tuple[float, float]) -> DensityComponent:
    kind = spec.get("kind")
    if kind == "gaussian":
        mass = float(spec.get("mass", 1.0))
        sigma = float(spec.get("sigma", 1.0))
        pdf = lambda z: mass * np.exp(-z * z / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))
    elif kind == "table":
        x = np.asarray(spec["x"], dtype=float)
        y = np.asarray(spec["y"], dtype=float)
        pdf = lambda z: np.interp(z, x, y, left=0.0, right=0.0)
    elif kind == "expr":
        expr = spec["expr"]
        pdf = lambda z: eval(expr, {"np": np, "z": z})  # lab tool, trusted input
    else:
        raise MeasureError(f"unknown density kind {kind!r}")
    return DensityComponent(pdf=pdf, support_radius=R, domination=dom, spec=spec)


# ---------------------------------------------------------------------------
# canonical measures

def gaussian(sigma: float = 1.0, mass: float = 1.0, support_radius: float = 10.0,
             atoms: Sequence[tuple[float, float]] = ()) -> Measure1D:
    spec = {"kind": "gaussian", "mass": mass, "sigma": sigma}
    A = 1.01 * mass / (sigma * math.sqrt(2 * math.pi))
    v = 1.0 / (2 * sigma**2)
    dens = _density_from_spec(spec, support_radius * sigma, (A, v))
    return Measure1D(atoms=tuple(atoms), density=dens)


def rademacher() -> Measure1D:
    return Measure1D(atoms=((-1.0, 0.5), (1.0, 0.5)))


def three_point(p: float = 0.25, location: float = 1.0) -> Measure1D:
    """Atoms at -location and +location with mass p each, rest at 0."""
    return Measure1D(
        atoms=((-location, p), (0.0, 1.0 - 2 * p), (location, p)))


def rho_zero() -> Measure1D:
    """1/16 at -1 and +1, 3/4 at 0, plus a Gaussian component of mass 1/8."""
    return gaussian(
        sigma=1.0, mass=0.125,
        atoms=((-1.0, 1.0 / 16), (0.0, 0.75), (1.0, 1.0 / 16)))


# ---------------------------------------------------------------------------
# operations

def moments(m: Measure1D, tol: float = 1e-12, _validated: bool = False) -> MomentSummary:
    """Second and fourth moments via exact atom sums plus quadrature."""
    if not _validated:
        m.validate()
    s2 = sum(mass * z * z for z, mass in m.atoms)
    m4 = sum(mass * z**4 for z, mass in m.atoms)
    if m.density is not None:
        s2 += float(m.density_integral(lambda z: z * z, tol=tol))
        m4 += float(m.density_integral(lambda z: z**4, tol=tol))
    if s2 <= 0:
        raise MeasureError("degenerate measure: variance is zero")
    return MomentSummary(sigma2=s2, mu4=m4, mass_at_zero=m.mass_at_zero)


def sample(m: Measure1D, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. draws: inverse CDF over atoms, rejection for the density."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not m.atoms:
        if m.density is None:
            raise MeasureError("empty measure")
        return _rejection_sample(m.density, count, rng)
    u = rng.random(count)
    out = np.empty(count)
    if m.atoms:
        locs = np.array([z for z, _ in m.atoms])
        cum = np.cumsum([mass for _, mass in m.atoms])
        discrete = u < cum[-1]
        idx = np.searchsorted(cum, u[discrete], side="right")
        out[discrete] = locs[np.minimum(idx, len(locs) - 1)]
    else:
        discrete = np.zeros(count, dtype=bool)
    n_ac = int(np.sum(~discrete))
    if n_ac:
        if m.density is None:
            raise MeasureError("no density component but ac mass requested")
        out[~discrete] = _rejection_sample(m.density, n_ac, rng)
    return out


def _rejection_sample(dens: DensityComponent, count: int, rng: np.random.Generator) -> np.ndarray:
    if dens.spec.get("kind") == "gaussian":
        # exact sampler; redraw the (astronomically rare) truncation overflow
        sigma = dens.spec.get("sigma", 1.0)
        z = rng.normal(0.0, sigma, size=count)
        bad = np.abs(z) > dens.support_radius
        while np.any(bad):
            z[bad] = rng.normal(0.0, sigma, size=int(bad.sum()))
            bad = np.abs(z) > dens.support_radius
        return z
    A, v = dens.domination
    sigma = 1.0 / math.sqrt(2 * v)
    out = np.empty(count)
    filled = 0
    while filled < count:
        todo = count - filled
        batch = max(64, int(1.5 * todo))
        z = rng.normal(0.0, sigma, size=batch)
        envelope = A * np.exp(-v * z * z)
        accept = rng.random(batch) * envelope < dens.pdf(z)
        z = z[accept][:todo]
        out[filled:filled + len(z)] = z
        filled += len(z)
    return out


def convolution_density_f2(f: Callable, x, y):
    """Two-fold convolution density of the lifted pair law of the AC part.

    For ``Z1, Z2`` i.i.d. with density ``f``, this is the density of
    ``(Z1 + Z2, Z1^2 + Z2^2)`` at ``(x, y)``; it vanishes when ``x^2 >= 2y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = x * x < 2 * y
    disc = np.sqrt(np.where(inside, 2 * y - x * x, 1.0))
    val = np.asarray(
        f((x + disc) / 2) * f((x - disc) / 2) / disc, dtype=float)
    result = np.where(inside, val, 0.0)
    return result if result.ndim else float(result)
