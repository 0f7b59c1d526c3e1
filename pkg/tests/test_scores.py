import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppcert.beliefs import FiniteBelief, GaussianBelief
from ppcert.errors import IndexMismatch, PropertyViolation, UndefinedMoments
from ppcert.scores import (
    CustomScore,
    Interval,
    MarginalDSS,
    NegLogProb,
    PrivacyFunction,
    bayes_act,
    bayes_act_index,
    expected_score,
    interval_window,
    loss_from_score,
    mode_privacy_function,
    propriety_check,
    score_from_loss,
    worst_case_loss_check,
)
from ppcert.suite import random_belief


def brute_force_bayes(table, probs):
    losses = [sum(p * table[d][j] for j, p in enumerate(probs) if p > 0) for d in range(len(table))]
    best = min(losses)
    return next(d for d, v in enumerate(losses) if v <= best + 1e-12 * max(1, abs(best)))


def best_window_mass(belief, s):
    """Exhaustive scan over windows whose left edge sits on a support point."""
    pts = [(float(z), float(p)) for z, p in zip(belief.universe, belief.probs) if p > 0]
    return max(sum(p for z, p in pts if lo - 1e-12 <= z <= lo + s + 1e-12) for lo, _ in pts)


class TestNegLogProb:
    def test_values(self):
        b = FiniteBelief(("a", "b", "c"), (0.5, 0.5, 0.0))
        rule = NegLogProb()
        assert rule.score(b, "a") == pytest.approx(math.log(2))
        assert rule.score(b, "c") == math.inf
        assert rule.score(b, "zzz") == math.inf

    def test_expected_skips_zero_mass_infinities(self):
        p = FiniteBelief((0, 1), (1.0, 0.0))
        assert expected_score(NegLogProb(), p, p) == 0.0

    def test_strict_propriety_caught_for_improper_rule(self):
        # the linear score rewards overconfidence
        linear = CustomScore(lambda b, x: -float(b.mass(x)), "linear")
        fam = [FiniteBelief((0, 1), (0.7, 0.3)), FiniteBelief((0, 1), (1.0, 0.0))]
        with pytest.raises(PropertyViolation) as err:
            propriety_check(linear, fam)
        assert err.value.witness is not None


class TestInterval:
    @settings(max_examples=200, deadline=None)
    @given(
        probs=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6).filter(lambda p: sum(p) > 1e-6),
        s=st.sampled_from([0.5, 1.0, 1.5, 2.0, 3.5]),
    )
    def test_window_has_maximal_mass(self, probs, s):
        p = np.array(probs) / sum(probs)
        b = FiniteBelief(tuple(float(i) for i in range(len(p))), tuple(p))
        lo, hi = interval_window(b, s)
        assert hi - lo == pytest.approx(s)
        covered = sum(q for z, q in zip(b.universe, b.probs) if lo - 1e-12 <= z <= hi + 1e-12)
        assert covered >= best_window_mass(b, s) - 1e-12

    def test_score_and_tie_break(self):
        b = FiniteBelief((0.0, 5.0), (0.5, 0.5))
        rule = Interval(1.0)
        # equal masses: leftmost window wins
        assert rule.score(b, 0.0) == 0.0
        assert rule.score(b, 5.0) == 1.0

    def test_window_centred_on_run(self):
        b = FiniteBelief((0.0, 1.0, 2.0), (0.4, 0.4, 0.2))
        assert interval_window(b, 2.0) == (0.0, 2.0)
        assert interval_window(b, 1.0) == (0.0, 1.0)


class TestDSS:
    def test_closed_form(self):
        b = FiniteBelief((0.0, 2.0), (0.5, 0.5))
        assert MarginalDSS(0).score(b, 3.0) == pytest.approx(math.log(1.0) + 4.0)

    def test_point_mass_has_no_moments(self):
        with pytest.raises(UndefinedMoments):
            MarginalDSS(0).score(FiniteBelief((1.0,), (1.0,)), 1.0)

    def test_gaussian_expected_matches_monte_carlo(self, rng):
        a = rng.normal(size=(3, 3))
        truth = GaussianBelief(rng.normal(size=3), a @ a.T + np.eye(3))
        pred = GaussianBelief(rng.normal(size=3), np.diag([1.0, 2.0, 0.5]))
        for i in range(3):
            rule = MarginalDSS(i)
            draws = truth.sample(rng, 20_000)[:, i]
            values = math.log(pred.cov[i, i]) + (draws - pred.mean[i]) ** 2 / pred.cov[i, i]
            sd = values.std() / math.sqrt(len(values))
            assert abs(values.mean() - rule.expected(pred, truth)) < 5 * sd

    def test_gaussian_propriety(self, rng):
        fam = []
        for _ in range(6):
            a = rng.normal(size=(2, 2))
            fam.append(GaussianBelief(rng.normal(size=2), a @ a.T + 0.2 * np.eye(2)))
        rep = propriety_check(MarginalDSS(1), fam)
        assert rep.proper and rep.min_gap >= -1e-9


class TestBayesActs:
    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        nd, nx = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        table = np.round(rng.random((nd, nx)) * 4) / 4
        rho = PrivacyFunction(tuple(range(nd)), tuple(range(nx)), table)
        b = random_belief(rng, rho.universe)
        assert bayes_act_index(rho, b) == brute_force_bayes(table, b.probs)

    def test_mode_loss_picks_mode(self):
        rho = mode_privacy_function(("a", "b", "c"))
        assert bayes_act(rho, FiniteBelief(("a", "b", "c"), (0.2, 0.5, 0.3))) == "b"

    def test_shift_by_dataset_constant_keeps_acts(self, rng):
        rho = PrivacyFunction(tuple(range(4)), tuple(range(3)), rng.random((4, 3)))
        shifted = rho.shifted([1.0, -2.0, 0.5])
        for _ in range(50):
            b = random_belief(rng, rho.universe)
            assert bayes_act_index(rho, b) == bayes_act_index(shifted, b)

    def test_unknown_dataset(self):
        rho = mode_privacy_function((0, 1))
        with pytest.raises(IndexMismatch):
            rho.rho(0, 7)


class TestScoreGeneration:
    def test_loss_score_is_proper(self, rng):
        for _ in range(30):
            rho = PrivacyFunction(tuple(range(3)), tuple(range(4)), rng.random((3, 4)))
            fam = [random_belief(rng, rho.universe) for _ in range(6)]
            assert propriety_check(score_from_loss(rho), fam, require_strict=False).proper

    def test_round_trip_recovers_log_score(self, rng):
        fam = [random_belief(rng, (0, 1, 2)) for _ in range(8)]
        back = score_from_loss(loss_from_score(NegLogProb(), fam))
        for p, x in itertools.product(fam, (0, 1, 2)):
            a, b = back.score(p, x), NegLogProb().score(p, x)
            assert a == b or abs(a - b) < 1e-9

    def test_round_trip_keeps_own_decision_on_ties(self):
        # two identical beliefs in the family share every expected loss
        fam = [FiniteBelief((0, 1), (0.5, 0.5)), FiniteBelief((0, 1), (0.9, 0.1)), FiniteBelief((0, 1), (0.5, 0.5))]
        back = score_from_loss(loss_from_score(Interval(0.5), fam))
        for p in fam:
            for x in (0, 1):
                assert back.score(p, x) == Interval(0.5).score(p, x)


class TestWorstCaseLoss:
    def test_holds_on_random_instances(self, rng):
        for _ in range(100):
            rho = PrivacyFunction(tuple(range(4)), tuple(range(5)), rng.random((4, 5)))
            alt = PrivacyFunction(tuple(range(4)), tuple(range(5)), rng.random((4, 5)))
            rep = worst_case_loss_check(rho, [alt], [random_belief(rng, rho.universe)])
            assert rep.max_gap >= 0

    def test_shape_mismatch(self):
        rho = mode_privacy_function((0, 1))
        with pytest.raises(IndexMismatch):
            worst_case_loss_check(rho, [mode_privacy_function((0, 1, 2))], [FiniteBelief.uniform((0, 1))])
