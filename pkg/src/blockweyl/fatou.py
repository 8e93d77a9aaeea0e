"""Poisson quotients of scalar measures and their small-radius limits.

For a non-negative measure ``mu`` with ``int dmu(t)/(t^2+1)`` finite and a
bounded function ``f`` the quotient

    ``Q(s, r) = int r f dmu / ((s-t)^2 + r^2)  /  int r dmu / ((s-t)^2 + r^2)``

converges to ``f(s)`` as ``r`` shrinks, at every point where ``f`` has a
``mu``-Lebesgue point (a set of full ``mu``-measure).  The scan below
evaluates the quotient along a radius schedule together with the explicit
far-field tail bound; failures at adversarial (non-Lebesgue) points are
expected behaviour, not bugs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import quadrature
from .errors import DegeneratePointError, StructuralError

_DEN_GUARD = 1e-280


@dataclass(frozen=True, eq=False)
class ScalarSegment:
    interval: tuple[float, float]
    density: Callable[[float], float]

    def __post_init__(self):
        lo, hi = self.interval
        if not lo < hi:
            raise StructuralError("empty density segment")


@dataclass(frozen=True, eq=False)
class ScalarMeasureModel:
    """Scalar measure: densities on segments plus positive point masses.

    Point masses stand in for the whole singular part; singular-continuous
    components are not representable.
    """

    segments: tuple[ScalarSegment, ...] = ()
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        atoms = tuple((float(x), float(m)) for x, m in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        for _, m in atoms:
            if not m > 0:
                raise StructuralError("atom masses must be positive")

    def growth_value(self) -> float:
        """``int dmu(t) / (t^2 + 1)`` (must be finite for the theory to apply)."""
        total = 0.0
        for seg in self.segments:
            val, _ = quadrature.integrate(
                lambda t: np.array(seg.density(t) / (t * t + 1.0)),
                seg.interval[0], seg.interval[1], rel_tol=1e-10,
            )
            total += float(np.real(val))
        for x, m in self.atoms:
            total += m / (x * x + 1.0)
        return total

    def window_mass(self, lo: float, hi: float) -> float:
        total = sum(m for x, m in self.atoms if lo < x < hi)
        for seg in self.segments:
            a = max(seg.interval[0], lo)
            b = min(seg.interval[1], hi)
            if a < b:
                val, _ = quadrature.integrate(
                    lambda t: np.array(seg.density(t)), a, b, rel_tol=1e-8
                )
                total += float(np.real(val))
        return total


def _poisson_parts(
    mu: ScalarMeasureModel,
    f: Callable[[float], complex] | None,
    s: float,
    r: float,
) -> complex:
    """``int r g dmu / ((s-t)^2 + r^2)`` with ``g = f`` (or 1 when f is None).

    Density segments are integrated after the substitution ``t = s + r tan(theta)``,
    which turns the Poisson kernel into a bounded weight uniformly in ``r``.
    """
    total = 0.0 + 0j
    for seg in mu.segments:
        lo, hi = seg.interval
        th_lo = float(np.arctan((lo - s) / r))
        th_hi = float(np.arctan((hi - s) / r))
        if th_hi <= th_lo:
            continue
        breaks = [
            float(np.arctan((b - s) / r))
            for b in getattr(f, "breakpoints", ())
            if lo < b < hi
        ]

        def integrand(theta: float) -> np.ndarray:
            t = s + r * np.tan(theta)
            val = seg.density(t)
            if f is not None:
                val = val * f(t)
            return np.asarray(val, dtype=complex)

        val, _ = quadrature.integrate(
            integrand, th_lo, th_hi, breakpoints=breaks, rel_tol=1e-11, abs_tol=1e-15
        )
        total += complex(val)
    for x, m in mu.atoms:
        kern = r * m / ((s - x) ** 2 + r * r)
        total += kern * (f(x) if f is not None else 1.0)
    return total


def poisson_quotient(
    mu: ScalarMeasureModel,
    f: Callable[[float], complex],
    s: float,
    r: float,
) -> complex:
    """The Poisson quotient of ``f`` against ``mu`` at height ``r`` over ``s``."""
    if not r > 0:
        raise StructuralError("the radius must be positive")
    den = _poisson_parts(mu, None, s, r)
    if abs(den) <= _DEN_GUARD:
        raise DegeneratePointError(
            f"Poisson denominator underflow at s={s}, r={r}; "
            "the measure has no visible mass near this point"
        )
    num = _poisson_parts(mu, f, s, r)
    return num / den


@dataclass
class FatouScanReport:
    s: float
    rows: list[tuple[float, complex, float]] = field(default_factory=list)  # (r, quotient, bound)
    limit: complex = 0j
    monotone_trend: bool = True
    caveats: list[str] = field(default_factory=list)

    @property
    def radii(self) -> list[float]:
        return [r for r, _, _ in self.rows]

    @property
    def quotients(self) -> list[complex]:
        return [q for _, q, _ in self.rows]


def fatou_convergence_scan(
    mu: ScalarMeasureModel,
    f: Callable[[float], complex],
    s: float,
    r_schedule: Sequence[float],
    *,
    delta: float = 0.125,
    f_sup: float | None = None,
) -> FatouScanReport:
    """Quotients along a decreasing radius schedule plus the far-field bound.

    The bound column is ``16 |f|_inf (s^2+1) r / delta^2 * int dmu/(t^2+1)``,
    controlling the contribution of the measure outside ``(s-delta, s+delta)``.
    The extrapolated limit removes a linear-in-r trend from the last two rows.
    """
    rs = [float(r) for r in r_schedule]
    if any(b >= a for a, b in zip(rs[:-1], rs[1:])):
        raise StructuralError("radius schedule must be strictly decreasing")
    if f_sup is None:
        probes = [s] + [x for x, _ in mu.atoms]
        for seg in mu.segments:
            lo, hi = seg.interval
            probes.extend(np.linspace(lo, hi, 17)[1:-1])
        f_sup = max(abs(complex(f(p))) for p in probes)
    growth = mu.growth_value()

    report = FatouScanReport(s=s)
    for r in rs:
        q = poisson_quotient(mu, f, s, r)
        bound = 16.0 * f_sup * (s * s + 1.0) * r / (delta * delta) * growth
        report.rows.append((r, q, bound))

    qs = report.quotients
    if len(qs) >= 2:
        r1, r2 = rs[-2], rs[-1]
        q1, q2 = qs[-2], qs[-1]
        report.limit = (r1 * q2 - r2 * q1) / (r1 - r2)
    else:
        report.limit = qs[-1]

    diffs = [abs(b - a) for a, b in zip(qs[:-1], qs[1:])]
    report.monotone_trend = all(d2 <= d1 * (1 + 1e-9) for d1, d2 in zip(diffs[:-1], diffs[1:]))
    if mu.window_mass(s - delta, s + delta) == 0.0:
        report.caveats.append(
            "no measure mass near the base point; the Lebesgue-point theorem "
            "does not apply here"
        )
    return report
