import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockweyl.errors import DegeneratePointError, StructuralError
from blockweyl.fatou import (
    ScalarMeasureModel,
    ScalarSegment,
    fatou_convergence_scan,
    poisson_quotient,
)


class StepPlusTwo:
    """sign(t) + 2 with its jump advertised as a breakpoint."""

    breakpoints = (0.0,)

    def __call__(self, t):
        return float(np.sign(t)) + 2.0


def lebesgue(lo=-1.0, hi=1.0, h=1.0):
    return ScalarSegment((lo, hi), lambda t: h)


def test_single_atom_quotient_is_exact_for_every_radius():
    mu = ScalarMeasureModel(atoms=((0.0, 1.0),))
    f = lambda t: np.sin(t) + 2.0
    for r in (1.0, 1e-2, 1e-6, 1e-12):
        assert abs(poisson_quotient(mu, f, 0.0, r) - f(0.0)) < 1e-12


def test_lebesgue_point_limit():
    mu = ScalarMeasureModel(segments=(lebesgue(),))
    f = StepPlusTwo()
    q = poisson_quotient(mu, f, 0.3, 1e-5)
    assert abs(q - 3.0) < 1e-4


def test_atom_dominates_mixed_measure():
    mu = ScalarMeasureModel(segments=(lebesgue(),), atoms=((0.0, 1.0),))
    f = lambda t: 5.0 if t == 0.0 else 3.0 + np.sin(3 * t)
    q = poisson_quotient(mu, f, 0.0, 1e-6)
    assert abs(q - 5.0) < 1e-3


def test_scan_reports_monotone_trend_and_bound():
    mu = ScalarMeasureModel(segments=(lebesgue(),), atoms=((0.0, 1.0),))
    f = lambda t: 5.0 if t == 0.0 else 3.0 + np.sin(3 * t)
    rep = fatou_convergence_scan(mu, f, 0.0, [1e-2, 1e-3, 1e-4, 1e-5], delta=0.125)
    assert rep.monotone_trend
    assert abs(rep.limit - 5.0) < 1e-6
    rs = rep.radii
    bounds = [b for _, _, b in rep.rows]
    # tail bound is linear in r
    assert all(abs(b2 / b1 - r2 / r1) < 1e-12 for (r1, r2, b1, b2) in zip(rs, rs[1:], bounds, bounds[1:]))
    assert not rep.caveats


def test_scan_outside_support_reports_caveat():
    mu = ScalarMeasureModel(segments=(lebesgue(),))
    rep = fatou_convergence_scan(mu, StepPlusTwo(), 5.0, [1e-1, 1e-2], delta=0.5)
    assert rep.caveats
    # the quotient is still defined there
    assert np.isfinite(rep.quotients[-1].real)


def test_scan_requires_decreasing_radii():
    mu = ScalarMeasureModel(segments=(lebesgue(),))
    with pytest.raises(StructuralError):
        fatou_convergence_scan(mu, StepPlusTwo(), 0.0, [1e-3, 1e-2])


def test_quotient_scaling_invariance_is_exact():
    f = StepPlusTwo()
    q1 = poisson_quotient(ScalarMeasureModel(segments=(lebesgue(h=1.0),)), f, 0.3, 1e-3)
    q2 = poisson_quotient(ScalarMeasureModel(segments=(lebesgue(h=7.0),)), f, 0.3, 1e-3)
    assert abs(q1 - q2) < 1e-12


def test_quotient_constant_shift_covariance():
    mu = ScalarMeasureModel(segments=(lebesgue(),), atoms=((0.25, 0.5),))

    class Shifted:
        breakpoints = (0.0,)

        def __call__(self, t):
            return StepPlusTwo()(t) + 11.0

    q = poisson_quotient(mu, StepPlusTwo(), 0.3, 1e-3)
    q_shift = poisson_quotient(mu, Shifted(), 0.3, 1e-3)
    assert abs((q_shift - q) - 11.0) < 1e-11


@settings(max_examples=15, deadline=None)
@given(
    s=st.floats(min_value=-0.9, max_value=0.9),
    r=st.floats(min_value=1e-6, max_value=0.5),
    mass=st.floats(min_value=0.1, max_value=2.0),
    loc=st.floats(min_value=-0.8, max_value=0.8),
)
def test_quotient_bounded_by_sup(s, r, mass, loc):
    mu = ScalarMeasureModel(segments=(lebesgue(),), atoms=((loc, mass),))
    f = StepPlusTwo()
    q = poisson_quotient(mu, f, s, r)
    assert abs(q) <= 3.0 + 1e-9


def test_degenerate_denominator_raises():
    mu = ScalarMeasureModel(atoms=((0.0, 1.0),))
    with pytest.raises(DegeneratePointError):
        poisson_quotient(mu, lambda t: 1.0, 10.0, 1e-285)


def test_growth_value():
    mu = ScalarMeasureModel(segments=(lebesgue(),), atoms=((3.0, 2.0),))
    # int_{-1}^{1} dt/(t^2+1) = pi/2 plus 2/10
    assert abs(mu.growth_value() - (np.pi / 2 + 0.2)) < 1e-10


def test_positive_masses_enforced():
    with pytest.raises(StructuralError):
        ScalarMeasureModel(atoms=((0.0, -1.0),))
