# File: tests/test_optimize.py
# Description: Tests for V-BLAST allocation and jammer/transmitter power sharing
# Author: serlab developers
# Created: 2026-10-19

import math

import numpy as np
import pytest

from serlab.closed_forms import q_function, resolve_closed_form
from serlab.error_handling import (
    InvalidInputError,
    MultipleInflectionError,
    NoSignChangeError,
    NonConvexError,
)
from serlab.optimize import (
    SharingKind,
    SharingStrategy,
    blast_allocate,
    blast_bler,
    envelope_concavity_check,
    find_inflection_noise,
    jam_optimal,
    jam_suboptimal,
    sharing_grid_search,
    transmitter_sharing,
)


BPSK_NOISE_INFLECTION = 1.0 / 3.0


class TestBlastAllocation:
    """Test block-error-rate minimizing power allocation."""

    @pytest.mark.smoke
    def test_bler(self, bpsk_form):
        expected = 1.0 - (1.0 - q_function(2.0)) ** 2
        assert blast_bler(bpsk_form.pe, [1.0, 1.0], [4.0, 4.0]) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.04498, abs=1e-5)

    @pytest.mark.smoke
    def test_bler_validates_input(self, bpsk_form):
        with pytest.raises(InvalidInputError):
            blast_bler(bpsk_form.pe, [1.0], [4.0, 4.0])
        with pytest.raises(InvalidInputError):
            blast_bler(bpsk_form.pe, [-1.0, 3.0], [4.0, 4.0])

    @pytest.mark.smoke
    def test_equal_streams_share_equally(self, bpsk_form):
        result = blast_allocate(bpsk_form.pe, bpsk_form.pe_d1, [5.0, 5.0, 5.0])
        np.testing.assert_allclose(result.fractions, 1.0, atol=1e-9)
        assert result.m == 3

    @pytest.mark.smoke
    def test_single_stream(self, bpsk_form):
        result = blast_allocate(bpsk_form.pe, bpsk_form.pe_d1, [3.0])
        assert result.fractions == (1.0,)
        assert result.objective == pytest.approx(bpsk_form.pe(3.0))

    @pytest.mark.fast
    def test_matches_grid_oracle(self, bpsk_form):
        """Test the two-stream optimum against a fine grid over the simplex."""
        snrs = (10.0, 1.0)
        result = blast_allocate(bpsk_form.pe, bpsk_form.pe_d1, snrs)
        alphas = np.arange(0.0, 2.0 + 5e-5, 1e-4)
        objectives = np.array([blast_bler(bpsk_form.pe, [a, 2.0 - a], snrs) for a in alphas])
        best = int(np.argmin(objectives))
        assert sum(result.fractions) == pytest.approx(2.0, abs=1e-10)
        assert result.fractions[0] == pytest.approx(alphas[best], abs=1e-3)
        assert result.objective <= objectives[best] + 1e-8
        assert result.kkt_residual < 1e-6

    @pytest.mark.smoke
    @pytest.mark.parametrize("snrs", [(10.0, 1.0), (8.0, 2.0, 0.5), (20.0, 5.0, 5.0, 1.0)])
    def test_no_pairwise_shift_improves(self, bpsk_form, snrs):
        """Test moving 1e-3 of power between any two streams never lowers the BLER."""
        result = blast_allocate(bpsk_form.pe, bpsk_form.pe_d1, snrs)
        step = 1e-3
        for i in range(len(snrs)):
            for j in range(len(snrs)):
                if i == j or result.fractions[i] < step:
                    continue
                shifted = list(result.fractions)
                shifted[i] -= step
                shifted[j] += step
                assert blast_bler(bpsk_form.pe, shifted, snrs) >= result.objective - 1e-12

    @pytest.mark.smoke
    @pytest.mark.parametrize("snrs", [(10.0, 1.0), (8.0, 2.0, 0.5)])
    def test_beats_uniform_allocation(self, bpsk_form, snrs):
        result = blast_allocate(bpsk_form.pe, bpsk_form.pe_d1, snrs)
        uniform = blast_bler(bpsk_form.pe, [1.0] * len(snrs), snrs)
        assert result.objective < uniform

    @pytest.mark.smoke
    def test_non_convex_pe_rejected(self):
        """Test a pe whose success probability is not log-concave is refused."""
        pe = lambda x: 0.5 * math.exp(-x * x)
        pe_d1 = lambda x: -x * math.exp(-x * x)
        with pytest.raises(NonConvexError) as exc:
            blast_allocate(pe, pe_d1, [1.0, 2.0])
        assert exc.value.context['stream'] == 0

    @pytest.mark.smoke
    @pytest.mark.parametrize("snrs", [[], [1.0, 0.0], [1.0, math.inf]])
    def test_bad_snrs(self, bpsk_form, snrs):
        with pytest.raises(InvalidInputError):
            blast_allocate(bpsk_form.pe, bpsk_form.pe_d1, snrs)


class TestInflection:
    """Test the noise-axis inflection finder."""

    @pytest.mark.smoke
    def test_bpsk_inflection(self, bpsk_noise):
        P_0 = find_inflection_noise(bpsk_noise.pe_d2, (0.05, 5.0))
        assert P_0 == pytest.approx(BPSK_NOISE_INFLECTION, rel=1e-6)

    @pytest.mark.smoke
    def test_no_sign_change(self, bpsk_noise):
        with pytest.raises(NoSignChangeError):
            find_inflection_noise(bpsk_noise.pe_d2, (0.5, 5.0))

    @pytest.mark.smoke
    def test_multiple_sign_changes(self):
        with pytest.raises(MultipleInflectionError) as exc:
            find_inflection_noise(math.sin, (1.0, 20.0))
        assert len(exc.value.context['locations']) == 6

    @pytest.mark.smoke
    def test_infinite_bracket_rejected(self, bpsk_noise):
        with pytest.raises(InvalidInputError):
            find_inflection_noise(bpsk_noise.pe_d2, (0.1, math.inf))


class TestJammer:
    """Test the jammer's power-sharing strategies."""

    @pytest.mark.smoke
    def test_tangent_threshold(self, bpsk_noise):
        """Test the line from the origin touches pe at the threshold."""
        strategy = jam_optimal(bpsk_noise.pe, bpsk_noise.pe_d1, BPSK_NOISE_INFLECTION, 0.2)
        p_star = strategy.threshold
        assert 0.6 < p_star < 0.8
        assert p_star * bpsk_noise.pe_d1(p_star) == pytest.approx(bpsk_noise.pe(p_star), rel=1e-5)
        assert strategy.kind is SharingKind.TANGENT_OPTIMAL
        assert strategy.levels[1] == (pytest.approx(1.0 - 0.2 / p_star), 0.0)
        assert strategy.achieved_ser > bpsk_noise.pe(0.2)

    @pytest.mark.smoke
    def test_budget_above_threshold_is_single_level(self, bpsk_noise):
        strategy = jam_optimal(bpsk_noise.pe, bpsk_noise.pe_d1, BPSK_NOISE_INFLECTION, 1.0)
        assert strategy.levels == ((1.0, 1.0),)
        assert strategy.kind is SharingKind.NONE

    @pytest.mark.smoke
    def test_suboptimal_uses_inflection(self, bpsk_noise):
        strategy = jam_suboptimal(bpsk_noise.pe, BPSK_NOISE_INFLECTION, 0.2)
        assert strategy.threshold == BPSK_NOISE_INFLECTION
        assert strategy.kind is SharingKind.ON_OFF_SUBOPTIMAL
        assert strategy.achieved_ser == pytest.approx(0.6 * bpsk_noise.pe(BPSK_NOISE_INFLECTION))
        assert jam_suboptimal(bpsk_noise.pe, BPSK_NOISE_INFLECTION, 0.5).kind is SharingKind.NONE

    @pytest.mark.smoke
    def test_dominance(self, bpsk_noise):
        """Test optimal >= suboptimal >= constant jamming at every budget."""
        for budget in np.geomspace(0.05, 2.0, 15):
            none = bpsk_noise.pe(budget)
            sub = jam_suboptimal(bpsk_noise.pe, BPSK_NOISE_INFLECTION, budget).achieved_ser
            best = jam_optimal(bpsk_noise.pe, bpsk_noise.pe_d1, BPSK_NOISE_INFLECTION, budget).achieved_ser
            assert best >= sub - 1e-12
            assert sub >= none - 1e-12

    @pytest.mark.fast
    def test_matches_grid_search(self, bpsk_noise):
        strategy = jam_optimal(bpsk_noise.pe, bpsk_noise.pe_d1, BPSK_NOISE_INFLECTION, 0.2)
        brute = sharing_grid_search(bpsk_noise.pe, 0.2, np.linspace(0.001, 3.0, 3000))
        assert brute.kind is SharingKind.TANGENT_OPTIMAL
        assert brute.achieved_ser == pytest.approx(strategy.achieved_ser, rel=1e-4)
        assert brute.threshold == pytest.approx(strategy.threshold, abs=1e-2)

    @pytest.mark.smoke
    def test_concave_curve_gets_single_level(self):
        pe = lambda p: 1.0 - math.exp(-p)
        pe_d1 = lambda p: math.exp(-p)
        strategy = jam_optimal(pe, pe_d1, 1.0, 0.5)
        assert strategy.kind is SharingKind.NONE
        assert strategy.threshold is None

    @pytest.mark.smoke
    def test_bad_budget(self, bpsk_noise):
        with pytest.raises(InvalidInputError):
            jam_optimal(bpsk_noise.pe, bpsk_noise.pe_d1, BPSK_NOISE_INFLECTION, 0.0)


class TestEnvelopeConcavity:
    """Test the budget-to-SER envelopes."""

    @pytest.mark.smoke
    def test_optimal_envelope_is_concave(self, bpsk_noise):
        envelope = lambda b: jam_optimal(bpsk_noise.pe, bpsk_noise.pe_d1, BPSK_NOISE_INFLECTION, b).achieved_ser
        report = envelope_concavity_check(envelope, np.geomspace(0.05, 3.0, 40), tol=1e-7)
        assert report.passed

    @pytest.mark.smoke
    def test_suboptimal_envelope_fails_only_at_the_kink(self, bpsk_noise):
        envelope = lambda b: jam_suboptimal(bpsk_noise.pe, BPSK_NOISE_INFLECTION, b).achieved_ser
        report = envelope_concavity_check(envelope, np.geomspace(0.05, 3.0, 40), tol=1e-7,
                                          kink=BPSK_NOISE_INFLECTION)
        assert not report.passed
        assert report.violations_at_kink_only


class TestTransmitter:
    """Test the transmitter's SNR sharing."""

    @pytest.mark.smoke
    def test_qpsk_is_always_on(self):
        form = resolve_closed_form("qpsk-closed-form")
        strategy = transmitter_sharing(form.pc, form.pc_d1, 1.0)
        assert strategy.kind is SharingKind.NONE
        assert strategy.achieved_ser == pytest.approx(form.pc(1.0))

    @pytest.mark.fast
    def test_ball_matches_grid_oracle(self):
        """Test on/off transmission for a P_c with a convex start."""
        form = resolve_closed_form("sphere:3:1")
        strategy = transmitter_sharing(form.pc, form.pc_d1, 0.5)
        brute = sharing_grid_search(form.pc, 0.5, np.geomspace(1e-3, 50.0, 3000))
        assert strategy.kind is SharingKind.TANGENT_OPTIMAL
        assert 1.0 < strategy.threshold < 3.0
        assert strategy.achieved_ser == pytest.approx(brute.achieved_ser, abs=1e-4)
        assert strategy.achieved_ser > form.pc(0.5)


class TestSharingStrategy:
    """Test strategy validation."""

    @pytest.mark.smoke
    def test_valid(self):
        s = SharingStrategy(levels=((0.25, 4.0), (0.75, 0.0)), achieved_ser=0.1, threshold=4.0,
                            kind="tangent_optimal", budget=1.0)
        assert s.kind is SharingKind.TANGENT_OPTIMAL

    @pytest.mark.smoke
    @pytest.mark.parametrize("levels,budget", [
        (((0.5, 4.0), (0.4, 0.0)), 2.0),
        (((0.5, 4.0), (0.5, 0.0)), 1.0),
        (((0.2, 1.0), (0.3, 1.0), (0.5, 1.0)), 1.0),
        ((), 1.0),
    ])
    def test_invalid(self, levels, budget):
        with pytest.raises(InvalidInputError):
            SharingStrategy(levels=levels, achieved_ser=0.1, threshold=None, kind="none", budget=budget)
