# File: tests/test_bounds.py
# Description: Tests for envelope coefficients, regimes and curve-level checks
# Author: serlab developers
# Created: 2026-10-19

import math

import numpy as np
import pytest

from serlab.bounds import (
    beta_form_discrepancy,
    check_derivative_bounds,
    coefficients,
    inflection_scan,
    limit_check,
    log_concavity_check,
    noise_regimes,
    region_regimes,
    second_differences,
    sign_contract_check,
    snr_regimes,
)
from serlab.closed_forms import resolve_closed_form
from serlab.config import Settings
from serlab.constellation import DecisionRegion, parse_constellation_name, standard_constellation
from serlab.error_handling import CapabilityError, InvalidInputError
from serlab.ser_engine import Axis, CurveEstimate, Method, Quantity, curve, region_derivative_mc
from serlab.sphere_oracle import RadiusRule, sphere_curve


def oracle(axis, grid, quantity, values):
    return CurveEstimate(axis=axis, grid=grid, values=values, std_errors=np.zeros(len(grid)),
                         quantity=quantity, method=Method.ORACLE)


class TestCoefficients:
    """Test dimension-only envelope coefficients."""

    @pytest.mark.smoke
    def test_one_dimension(self):
        bs = coefficients(1)
        assert bs.c_n == pytest.approx(1.0 / math.sqrt(2.0 * math.pi * math.e), abs=1e-12)
        assert bs.beta_l == 0.0

    @pytest.mark.smoke
    def test_two_dimensions(self):
        bs = coefficients(2)
        assert bs.c_n == pytest.approx(1.0 / math.e, abs=1e-12)
        assert bs.beta_l == pytest.approx(0.0, abs=1e-12)
        assert bs.beta_u == pytest.approx(4.0 / math.e ** 2, abs=1e-12)
        assert bs.b_1 == pytest.approx(2.0 + math.sqrt(2.0), abs=1e-12)
        assert bs.b_2 == pytest.approx(2.0 - math.sqrt(2.0), abs=1e-12)

    @pytest.mark.smoke
    def test_higher_dimensions_have_negative_lower_envelope(self):
        for n in (3, 5, 8):
            bs = coefficients(n)
            assert bs.beta_l < 0 < bs.beta_u
            assert bs.b_l < 0 < bs.b_u

    @pytest.mark.smoke
    def test_envelope_shapes(self):
        bs = coefficients(2)
        lower, upper = bs.envelope(Axis.SNR, 1, np.array([1.0, 2.0]))
        np.testing.assert_allclose(lower, [-bs.c_n, -bs.c_n / 2.0])
        np.testing.assert_array_equal(upper, 0.0)
        lower, upper = bs.envelope(Axis.NOISE, 2, np.array([0.5]))
        assert lower[0] == pytest.approx(4.0 * bs.b_l)
        assert upper[0] == pytest.approx(4.0 * bs.b_u)

    @pytest.mark.smoke
    def test_invalid_dimension(self):
        with pytest.raises(InvalidInputError):
            coefficients(0)
        with pytest.raises(InvalidInputError):
            coefficients(2.5)

    @pytest.mark.smoke
    def test_beta_forms(self):
        """Test both coefficient forms agree for n = 2 and differ elsewhere."""
        assert not beta_form_discrepancy(2).differs
        report = beta_form_discrepancy(3)
        assert report.differs
        assert report.beta_l_literal is None
        assert beta_form_discrepancy(4).beta_l_literal is not None


class TestRegimes:
    """Test convexity regimes from decision-region geometry."""

    @pytest.mark.smoke
    def test_cube_snr_edge(self, cube3):
        report = snr_regimes(cube3)
        assert not report.convex_everywhere
        assert report.overall.convex_edge == pytest.approx(3.0 * (3.0 + math.sqrt(6.0)), rel=1e-12)
        assert report.overall.convex_edge == pytest.approx(16.348, abs=1e-3)
        assert report.overall.concave_edge is None

    @pytest.mark.smoke
    def test_cube_noise_edge(self, cube3):
        report = noise_regimes(cube3)
        assert report.overall.convex_edge == pytest.approx((1.0 / 3.0) / (5.0 + math.sqrt(10.0)))
        assert report.overall.convex_edge == pytest.approx(0.0408383, abs=1e-7)

    @pytest.mark.smoke
    def test_bpsk_noise_edge(self, bpsk):
        report = noise_regimes(bpsk)
        assert report.overall.convex_edge == pytest.approx(1.0 / (3.0 + math.sqrt(6.0)))
        assert report.overall.convex_edge == pytest.approx(0.18350, abs=1e-5)
        assert report.overall.inflection_bracket == (report.overall.convex_edge, math.inf)

    @pytest.mark.smoke
    def test_low_dimensions_convex_everywhere(self, qpsk):
        report = snr_regimes(qpsk)
        assert report.convex_everywhere
        assert "convex for all gamma" in report.summary()

    @pytest.mark.smoke
    def test_bounded_box(self):
        """Test a bounded region has both regimes and a finite bracket."""
        interval = region_regimes(DecisionRegion.box(3, 1.0), Axis.SNR)
        assert interval.convex_edge == pytest.approx(3.0 + math.sqrt(6.0))
        assert interval.concave_edge == pytest.approx((3.0 - math.sqrt(6.0)) / 3.0)
        lo, hi = interval.inflection_bracket
        assert lo < hi

    @pytest.mark.fast
    def test_per_point_intervals(self):
        c = standard_constellation("mqam", 16)
        report = snr_regimes(c, per_point=True)
        assert len(report.intervals) == c.M + 1
        inner = next(r for r in report.intervals if r.index == 5)
        assert inner.d_max == pytest.approx(math.sqrt(0.2))

    @pytest.mark.smoke
    def test_capability_limit_propagates(self):
        """Test a bounded inner 16QAM region hits the enumeration limit."""
        with pytest.raises(CapabilityError):
            snr_regimes(standard_constellation("mqam", 16), settings=Settings(vertex_max_dim=1))


class TestBoundChecks:
    """Test derivative envelope checks."""

    @pytest.mark.smoke
    @pytest.mark.parametrize("axis,quantity,rule", [
        (Axis.SNR, Quantity.D1, RadiusRule.FIRST_ORDER),
        (Axis.SNR, Quantity.D2, RadiusRule.UPPER),
        (Axis.NOISE, Quantity.D1, RadiusRule.FIRST_ORDER),
        (Axis.NOISE, Quantity.D2, RadiusRule.UPPER),
        (Axis.NOISE, Quantity.D2, RadiusRule.LOWER),
    ])
    def test_extremal_balls_pass_with_zero_margin(self, axis, quantity, rule):
        grid = np.geomspace(0.05, 20.0, 15)
        est = sphere_curve(3, axis, grid, quantity, rule)
        report = check_derivative_bounds(est, coefficients(3))
        assert report.passed
        assert abs(report.closest.margin) <= 1e-9 * abs(report.closest.lower or report.closest.upper)

    @pytest.mark.smoke
    @pytest.mark.parametrize("radius", [0.2, 1.0, 3.0])
    def test_fixed_balls_stay_inside(self, radius):
        grid = np.geomspace(0.01, 100.0, 40)
        bs = coefficients(2)
        for quantity in (Quantity.D1, Quantity.D2):
            est = sphere_curve(2, Axis.SNR, grid, quantity, radius=radius)
            assert check_derivative_bounds(est, bs).passed

    @pytest.mark.smoke
    def test_violation_detected(self):
        grid = np.array([1.0, 2.0, 4.0])
        bs = coefficients(1)
        est = oracle(Axis.SNR, grid, Quantity.D1, -2.0 * bs.c_n / grid)
        report = check_derivative_bounds(est, bs)
        assert not report.passed
        assert report.closest.margin == pytest.approx(-bs.c_n)

    @pytest.mark.smoke
    def test_standard_errors_widen_the_band(self):
        grid = np.array([1.0])
        bs = coefficients(1)
        est = CurveEstimate(axis=Axis.SNR, grid=grid, values=[-1.1 * bs.c_n], std_errors=[0.05 * bs.c_n],
                            quantity=Quantity.D1, method=Method.MC)
        assert check_derivative_bounds(est, bs, sigma_k=4.0).passed
        assert not check_derivative_bounds(est, bs, sigma_k=1.0).passed

    @pytest.mark.smoke
    def test_probability_curve_rejected(self, bpsk_form):
        with pytest.raises(InvalidInputError):
            check_derivative_bounds(bpsk_form.curve([1.0, 2.0], Quantity.PE), coefficients(1))

    @pytest.mark.fast
    def test_monte_carlo_bpsk(self, bpsk, settings):
        grid = np.geomspace(0.1, 10.0, 10)
        bs = coefficients(1)
        for axis in (Axis.SNR, Axis.NOISE):
            for quantity in (Quantity.D1, Quantity.D2):
                est = curve(bpsk, axis, grid, quantity, samples=50_000, seed=11, settings=settings)
                assert check_derivative_bounds(est, bs, settings=settings).passed


class TestSignAndLimit:
    """Test sign contracts and large-value limits."""

    @pytest.mark.smoke
    def test_closed_form_signs(self, bpsk_form, bpsk_noise):
        grid = np.geomspace(0.1, 10.0, 8)
        assert sign_contract_check(bpsk_form.curve(grid, Quantity.D1)).passed
        assert sign_contract_check(bpsk_noise.curve(grid, Quantity.D1)).passed

    @pytest.mark.smoke
    def test_sign_violation(self):
        est = oracle(Axis.SNR, [1.0, 2.0], Quantity.D1, [-0.1, 0.1])
        assert sign_contract_check(est).violations == (2.0,)

    @pytest.mark.smoke
    def test_sign_needs_first_derivative(self, bpsk_form):
        with pytest.raises(InvalidInputError):
            sign_contract_check(bpsk_form.curve([1.0, 2.0], Quantity.D2))

    @pytest.mark.smoke
    def test_limit(self, bpsk_form):
        bs = coefficients(1)
        grid = np.geomspace(1.0, 1000.0, 6)
        report = limit_check(bpsk_form.curve(grid, Quantity.D1), bs)
        assert report.passed
        assert report.value == pytest.approx(1000.0)
        assert report.envelope == pytest.approx(bs.c_n / 1000.0)


class TestInflectionScan:
    """Test sign-change scans of second-derivative curves."""

    @pytest.mark.smoke
    def test_sphere_noise_inflection(self):
        grid = np.geomspace(0.05, 1.0, 400)
        est = sphere_curve(3, Axis.NOISE, grid, Quantity.D2, radius=1.0)
        report = inflection_scan(est, (0.05, 1.0))
        assert report.count == 1 and report.odd
        assert report.crossings[0] == pytest.approx(0.2, rel=1e-3)

    @pytest.mark.smoke
    def test_box_has_odd_crossings_inside_bracket(self):
        """Test the bounded box changes curvature an odd number of times inside its bracket."""
        form = resolve_closed_form("box:3:1")
        interval = region_regimes(DecisionRegion.box(3, 1.0), Axis.SNR)
        lo, hi = interval.inflection_bracket
        grid = np.geomspace(0.01, 50.0, 300)
        est = form.curve(grid, Quantity.D2)
        assert np.all(est.values[grid < lo] < 0)
        assert np.all(est.values[grid > hi] > 0)
        assert inflection_scan(est, (lo, hi)).odd

    @pytest.mark.smoke
    def test_insignificant_changes_are_unresolved(self):
        est = CurveEstimate(axis=Axis.SNR, grid=[1.0, 2.0, 3.0], values=[1.0, -0.01, -1.0],
                            std_errors=[0.1, 0.1, 0.1], quantity=Quantity.D2, method=Method.MC)
        report = inflection_scan(est, (0.5, 3.5))
        assert report.count == 1
        assert report.unresolved == ((1.0, 2.0),)

    @pytest.mark.smoke
    def test_empty_bracket(self, bpsk_form):
        with pytest.raises(InvalidInputError):
            inflection_scan(bpsk_form.curve([1.0, 2.0], Quantity.D2), (5.0, 6.0))

    @pytest.mark.slow
    def test_monte_carlo_box_crossing(self, settings):
        """Test Monte Carlo second derivatives of the box agree with its closed form."""
        box = DecisionRegion.box(3, 1.0)
        form = resolve_closed_form("box:3:1")
        for gamma in (0.1, 1.0, 3.0, 10.0):
            d, se = region_derivative_mc(box.contains, 3, Axis.SNR, gamma, 2, 1_000_000, seed=21,
                                         settings=settings)
            assert abs(-d - form.pe_d2(gamma)) <= 4.0 * se


class TestLogConcavity:
    """Test discrete log-concavity of correct-detection curves."""

    @pytest.mark.smoke
    def test_second_differences_of_a_line(self):
        grid = np.array([1.0, 2.0, 4.0, 7.0])
        diffs, w = second_differences(grid, 3.0 * grid + 1.0)
        np.testing.assert_allclose(diffs, 0.0, atol=1e-12)
        np.testing.assert_allclose(w, [2.0 / 3.0, 0.6])

    @pytest.mark.smoke
    def test_closed_forms_are_log_concave(self):
        grid = np.geomspace(0.01, 100.0, 60)
        for name in ("bpsk-closed-form", "qpsk-closed-form", "sphere:3:1"):
            est = resolve_closed_form(name).curve(grid, Quantity.PC)
            assert log_concavity_check(est).passed, name

    @pytest.mark.smoke
    def test_log_convex_curve_fails(self):
        grid = np.linspace(1.0, 2.0, 11)
        values = np.exp(grid ** 2 - 4.0)
        report = log_concavity_check(oracle(Axis.SNR, grid, Quantity.PC, values))
        assert not report.passed
        assert report.worst_margin < 0

    @pytest.mark.smoke
    def test_wrong_axis(self, bpsk_noise):
        with pytest.raises(InvalidInputError):
            log_concavity_check(bpsk_noise.curve([1.0, 2.0, 3.0], Quantity.PC))

    @pytest.mark.fast
    def test_monte_carlo_cube(self, cube3, settings):
        grid = np.geomspace(0.01, 100.0, 25)
        est = curve(cube3, Axis.SNR, grid, Quantity.PCI, samples=20_000, seed=13, index=0,
                    settings=settings)
        assert log_concavity_check(est, settings=settings).passed


@pytest.mark.slow
class TestDeskScale:
    """Test universal envelopes at 10^6 samples per point."""

    @pytest.mark.parametrize("name", ["bpsk", "qpsk", "mpsk:8", "mqam:16", "cube:3", "orthogonal:3"])
    def test_every_envelope(self, name, settings):
        c = parse_constellation_name(name)
        bs = coefficients(c.n)
        grids = {Axis.SNR: np.geomspace(0.01, 20.0, 50), Axis.NOISE: np.geomspace(0.01, 10.0, 50)}
        for axis, grid in grids.items():
            for quantity in (Quantity.D1, Quantity.D2):
                est = curve(c, axis, grid, quantity, samples=1_000_000, seed=17, settings=settings)
                assert check_derivative_bounds(est, bs, sigma_k=4.0, settings=settings).passed

    @pytest.mark.parametrize("name", ["bpsk", "qpsk"])
    def test_low_dimension_convexity(self, name, settings):
        c = parse_constellation_name(name)
        grid = np.geomspace(0.01, 20.0, 50)
        est = curve(c, Axis.SNR, grid, Quantity.D2, samples=1_000_000, seed=19, settings=settings)
        assert np.all(est.values >= -4.0 * est.std_errors)

    @pytest.mark.parametrize("name", ["bpsk", "qpsk", "cube:3"])
    def test_log_concavity(self, name, settings):
        c = parse_constellation_name(name)
        grid = np.geomspace(0.01, 100.0, 50)
        for i in range(c.M):
            est = curve(c, Axis.SNR, grid, Quantity.PCI, samples=1_000_000, seed=23, index=i,
                        settings=settings)
            assert log_concavity_check(est, settings=settings).passed
