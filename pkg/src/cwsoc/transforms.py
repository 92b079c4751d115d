"""Log-Laplace surfaces and their convex conjugates.

The canonical object is the log-Laplace transform of the pair law of
``(Z, Z^2)`` for ``Z`` distributed under a symmetric measure; a plain 1-D
variant is provided for measures used directly on the line.  The conjugate
(rate function) is computed by a damped Newton solve of ``grad L = target``,
which also yields the inverse-gradient map and the Hessian of the conjugate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .measure import Measure1D, moments
from .quadrature import adaptive_gauss_legendre


class DomainFault(ValueError):
    """Evaluation requested outside the interior of the finiteness domain."""


class LogLaplace:
    """Log-Laplace transform of the law of ``psi(Z)`` for ``Z ~ base``.

    ``lift='pair'`` uses ``psi(z) = (z, z^2)`` (dimension 2), ``lift='line'``
    uses ``psi(z) = z`` (dimension 1).
    """

    def __init__(self, base: Measure1D, lift: str = "pair"):
        if lift not in ("pair", "line"):
            raise ValueError(f"unknown lift {lift!r}")
        base.validate()
        self.base = base
        self.lift = lift
        self.d = 2 if lift == "pair" else 1

    def _psi(self, z: np.ndarray) -> list[np.ndarray]:
        return [z, z * z] if self.lift == "pair" else [z]

    def _quadratic_coeff(self, theta: np.ndarray) -> float:
        return float(theta[1]) if self.lift == "pair" else 0.0

    def in_domain(self, theta) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.base.density is None:
            return True
        return self._quadratic_coeff(theta) < self.base.density.domination[1]

    def _exponent_shift(self, theta: np.ndarray) -> float:
        """Exact maximum of <theta, psi(z)> over the effective support."""
        u = float(theta[0])
        v = float(theta[1]) if self.d == 2 else 0.0
        best = max((u * z + v * z * z for z, _ in self.base.atoms),
                   default=-np.inf)
        if self.base.density is not None:
            R = self.base.density.support_radius
            cands = [u * R + v * R * R, -u * R + v * R * R]
            if v < 0 and abs(u) < 2 * abs(v) * R:
                zc = -u / (2 * v)
                cands.append(u * zc + v * zc * zc)
            best = max(best, *cands)
        return best if np.isfinite(best) else 0.0

    def tilted_stats(self, theta, tol: float = 1e-12):
        """Return ``(L(theta), tilted mean of psi, tilted covariance of psi)``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if not self.in_domain(theta):
            return math.inf, None, None
        c = self._exponent_shift(theta)
        d = self.d
        n_mom = 2 * d + 1  # raw moments of z up to order 2d
        m = np.zeros(n_mom)
        for z, mass in self.base.atoms:
            w = mass * math.exp(
                theta[0] * z + (theta[1] * z * z if d == 2 else 0.0) - c)
            m += w * np.asarray(z, dtype=float) ** np.arange(n_mom)
        if self.base.density is not None:
            R = self.base.density.support_radius
            pdf = self.base.density.pdf
            powers = np.arange(n_mom)

            def integrand(z):
                e = theta[0] * z + (theta[1] * z * z if d == 2 else 0.0)
                w = np.exp(e - c) * pdf(z)
                return w[:, None] * z[:, None] ** powers

            m += np.asarray(adaptive_gauss_legendre(
                integrand, -R, R, tol=tol, initial_panels=8), dtype=float)
        if m[0] <= 0:
            return math.inf, None, None
        value = c + math.log(m[0])
        mom = m / m[0]
        if d == 1:
            mean = np.array([mom[1]])
            cov = np.array([[mom[2] - mom[1] ** 2]])
        else:
            mean = np.array([mom[1], mom[2]])
            cov = np.array([
                [mom[2] - mom[1] ** 2, mom[3] - mom[1] * mom[2]],
                [mom[3] - mom[1] * mom[2], mom[4] - mom[2] ** 2],
            ])
        return value, mean, cov

    def value(self, theta, tol: float = 1e-12) -> float:
        """L(theta) alone (cheaper than the full moment pass)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if not self.in_domain(theta):
            return math.inf
        c = self._exponent_shift(theta)
        d = self.d
        m0 = sum(mass * math.exp(
            theta[0] * z + (theta[1] * z * z if d == 2 else 0.0) - c)
            for z, mass in self.base.atoms)
        if self.base.density is not None:
            R = self.base.density.support_radius
            pdf = self.base.density.pdf

            def integrand(z):
                e = theta[0] * z + (theta[1] * z * z if d == 2 else 0.0)
                return np.exp(e - c) * pdf(z)

            m0 += float(adaptive_gauss_legendre(
                integrand, -R, R, tol=tol, initial_panels=8))
        if m0 <= 0:
            return math.inf
        return c + math.log(m0)

    def grad_hess(self, theta):
        """Gradient (tilted first moments) and Hessian (tilted covariance)."""
        value, mean, cov = self.tilted_stats(theta)
        if not math.isfinite(value):
            raise DomainFault(f"theta {theta} outside the finiteness domain")
        return mean, cov


def log_laplace(L: LogLaplace, u: float, v: float | None = None) -> float:
    """Surface value at ``(u, v)`` (or ``u`` alone for the 1-D variant)."""
    theta = [u] if v is None and L.d == 1 else [u, v]
    return L.value(np.asarray(theta, dtype=float))


def log_laplace_grad_hess(L: LogLaplace, u: float, v: float | None = None):
    theta = [u] if v is None and L.d == 1 else [u, v]
    return L.grad_hess(np.asarray(theta, dtype=float))


@dataclass
class SolverSettings:
    gtol: float = 1e-10
    max_iter: int = 100
    cond_limit: float = 1e12


@dataclass
class CramerResult:
    value: float
    argmax: np.ndarray
    hess: Optional[np.ndarray]  # Hessian of the conjugate at the target
    converged: bool
    iterations: int
    message: str = ""

    @property
    def inside(self) -> bool:
        return self.converged


class RateFunction:
    """Convex conjugate of a log-Laplace surface, solved point by point."""

    def __init__(self, source: LogLaplace, settings: SolverSettings | None = None):
        self.source = source
        self.settings = settings or SolverSettings()
        self._moments = moments(source.base)

    def solve(self, x) -> CramerResult:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        L = self.source
        s = self.settings
        theta = np.zeros(L.d)
        val, mean, cov = L.tilted_stats(theta)
        it = 0
        for it in range(1, s.max_iter + 1):
            grad = mean - x
            gnorm = float(np.linalg.norm(grad))
            if gnorm <= s.gtol:
                break
            if np.linalg.cond(cov) > s.cond_limit:
                return self._solve_degenerate(x, theta, it)
            step = np.linalg.solve(cov, -grad)
            # backtracking on the dual objective L(theta) - <theta, x>; the
            # slack term keeps the search from stalling once the predicted
            # decrease falls below float precision of the objective
            t = 1.0
            obj = val - float(np.dot(theta, x))
            slope = float(np.dot(grad, step))
            slack = 1e-14 * (1.0 + abs(obj))
            for _ in range(60):
                cand = theta + t * step
                cval = L.value(cand)
                if math.isfinite(cval) and \
                        cval - float(np.dot(cand, x)) <= obj + 0.25 * t * slope + slack:
                    break
                t *= 0.5
            else:
                return CramerResult(
                    value=float(np.dot(theta, x)) - val, argmax=theta,
                    hess=None, converged=False, iterations=it,
                    message="line search failed; outside admissible domain")
            theta = cand
            val, mean, cov = L.tilted_stats(theta)
        else:
            return CramerResult(
                value=float(np.dot(theta, x)) - val, argmax=theta, hess=None,
                converged=False, iterations=it,
                message="max iterations; outside admissible domain")
        if float(np.linalg.norm(theta)) > 1e8:
            return CramerResult(
                value=float(np.dot(theta, x)) - val, argmax=theta, hess=None,
                converged=False, iterations=it,
                message="argmax diverged; outside admissible domain")
        if np.linalg.cond(cov) > s.cond_limit:
            return self._solve_degenerate(x, theta, it)
        hess = np.linalg.inv(cov)
        return CramerResult(
            value=float(np.dot(theta, x)) - val, argmax=theta, hess=hess,
            converged=True, iterations=it)

    def _solve_degenerate(self, x, theta, it) -> CramerResult:
        # pair lift with z^2 a.s. constant: conjugate finite only on y = const
        L = self.source
        if L.lift != "pair":
            return CramerResult(
                value=math.nan, argmax=theta, hess=None, converged=False,
                iterations=it, message="degenerate curvature")
        c0 = float(L.tilted_stats(np.zeros(2))[1][1])
        if abs(x[1] - c0) > 1e-9:
            return CramerResult(
                value=math.inf, argmax=theta, hess=None, converged=False,
                iterations=it,
                message=f"second coordinate degenerate at {c0}; target unreachable")
        line = RateFunction(LogLaplace(L.base, lift="line"), self.settings)
        r = line.solve([x[0]])
        hess = None
        if r.hess is not None:
            hess = np.array([[r.hess[0, 0], math.nan], [math.nan, math.nan]])
        return CramerResult(
            value=r.value, argmax=np.array([r.argmax[0], 0.0]), hess=hess,
            converged=r.converged, iterations=it + r.iterations,
            message="degenerate direction v reported as free")

    def value(self, x) -> float:
        r = self.solve(x)
        return r.value if r.converged else math.inf


def cramer_transform(R: RateFunction, x: float, y: float | None = None) -> CramerResult:
    target = [x] if y is None and R.source.d == 1 else [x, y]
    return R.solve(np.asarray(target, dtype=float))


def rate_at_origin(R: RateFunction) -> float:
    """Conjugate value at the origin of the pair lift: -ln(mass at zero)."""
    p0 = R.source.base.mass_at_zero
    return -math.log(p0) if p0 > 0 else math.inf


def admissible_domain_probe(R: RateFunction, x) -> dict:
    r = R.solve(x)
    return {
        "inside": r.inside,
        "iterations": r.iterations,
        "argmax": None if r.argmax is None else r.argmax.tolist(),
        "gradient_gap": None,
        "message": r.message,
    }


def rate_expansion_residual(R: RateFunction, g, x: float, y: float) -> float:
    """(I - F_g)(x, y) divided by its leading quartic/quadratic form.

    ``g`` is an interaction carrying ``m4``, ``variant`` and the functional
    ``F(x, y)``.  The denominator uses the fourth-moment constant matching the
    variant; at the exact minimum the ratio is 1 by convention.
    """
    ms = R._moments
    s2, mu4 = ms.sigma2, ms.mu4
    sig_pow = s2**3 if g.variant == "star" else s2**2
    coeff = mu4 + g.m4 * sig_pow
    form = coeff * x**4 / (12 * s2**4) + (y - s2) ** 2 / (2 * (mu4 - s2**2))
    if form == 0.0:
        return 1.0
    r = R.solve([x, y])
    if not r.converged:
        raise DomainFault(f"target ({x}, {y}) outside admissible domain")
    return (r.value - g.F(x, y)) / form
