import math
from fractions import Fraction

import numpy as np
import pytest

from ppcert.beliefs import FiniteBelief, GaussianBelief, GaussianClassSpec
from ppcert.certify import (
    ExplicitFinite,
    GaussianClass,
    GuaranteeSpec,
    NeighborTwoPoint,
    average_gaussian_delta_reference,
    certify_average_gaussian,
    certify_pdp,
    certify_pp,
    check_composition,
    check_conjugacy,
    check_pdp_pp_equivalence,
    check_receiver_postprocessing,
    default_w_grid,
    relative_score,
    relative_score_distribution,
    search_sender_postprocessing_counterexample,
    tail_probability,
    tail_probability_mc,
    two_point_tail_table,
)
from ppcert.errors import (
    ConjugacyViolation,
    PreconditionError,
    StructuralViolation,
    UnsupportedPriorClass,
    ZeroEvidence,
)
from ppcert import kernels
from ppcert.beliefs import sample_gaussian_class_arrays
from ppcert.mechanisms import (
    AVERAGE,
    FiniteMechanism,
    chain,
    complete_neighbors,
    constant_mechanism,
    identity_mechanism,
    randomized_response,
)
from ppcert.scores import Interval, MarginalDSS, NegLogProb
from ppcert.suite import random_mechanism

LN3 = math.log(3)


def two_point_spec(mech, kappa, delta=0.0, **kw):
    return GuaranteeSpec((NegLogProb(),), NeighborTwoPoint(complete_neighbors(mech.universe), **kw), kappa, delta)


def exact_pdp_delta(kernel, exp_eps):
    """Independent enumeration of the worst violating mass over ordered pairs."""
    worst = Fraction(0)
    for i, row in enumerate(kernel):
        for j, other in enumerate(kernel):
            if i != j:
                worst = max(worst, sum((a for a, b in zip(row, other) if a > exp_eps * b), Fraction(0)))
    return worst


class TestRelativeScore:
    def test_constant_kernel_is_zero(self):
        m = constant_mechanism((0.0, 3.0), (0, 1), (0.3, 0.7))
        q = FiniteBelief((0.0, 3.0), (0.4, 0.6))
        for rule in (NegLogProb(), Interval(1.0)):
            for t in (0, 1):
                assert relative_score(rule, q, m, t, 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_hand_value(self):
        m = FiniteMechanism(("a", "b"), (0, 1), [[0.9, 0.1], [0.1, 0.9]])
        q = FiniteBelief(("a", "b"), (0.5, 0.5))
        assert relative_score(NegLogProb(), q, m, 0, "a") == pytest.approx(math.log(1.8), abs=1e-15)

    def test_zero_mass_truth_is_zero(self):
        m = FiniteMechanism(("a", "b", "c"), (0, 1), [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
        q = FiniteBelief(("b", "c"), (0.5, 0.5))
        assert relative_score(NegLogProb(), q, m, 0, "a") == 0.0

    def test_zero_evidence_propagates(self):
        m = FiniteMechanism((0.0, 1.0, 2.0), (0, 1), [[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        q = FiniteBelief((1.0, 2.0), (0.5, 0.5))
        with pytest.raises(ZeroEvidence):
            relative_score(Interval(1.0), q, m, 0, 0.0)

    def test_distribution_sums_to_one(self, rng):
        m = random_mechanism(rng, 4, 5, 0.3)
        q = FiniteBelief(m.universe, tuple(rng.dirichlet(np.ones(len(m.universe)))))
        dist = relative_score_distribution(NegLogProb(), q, m, m.universe[0])
        assert math.fsum(s.prob for s in dist) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_average(self):
        prior = GaussianBelief(np.zeros(2), np.eye(2))
        x = np.ones(2)
        d = relative_score(MarginalDSS(0), prior, AVERAGE, AVERAGE(x), x)
        assert d == pytest.approx(1 + math.log(2), abs=1e-12)
        with pytest.raises(PreconditionError):
            relative_score(MarginalDSS(0), prior, randomized_response(1.0, 2), 0, x)


class TestTailProbability:
    def test_constant_kernel(self):
        m = constant_mechanism((0, 1), (0, 1, 2), (0.2, 0.3, 0.5))
        assert tail_probability(NegLogProb(), FiniteBelief.uniform((0, 1)), m, 0, 0.0) == pytest.approx(1.0)

    def test_randomized_response_near_limit(self):
        rr = randomized_response(LN3, 2)
        q = FiniteBelief((0, 1), (1e-6, 1 - 1e-6))
        assert tail_probability(NegLogProb(), q, rr, 0, LN3) == pytest.approx(1.0)
        assert tail_probability(NegLogProb(), q, rr, 0, LN3 - 0.01) == pytest.approx(0.25, abs=1e-12)

    def test_monte_carlo_interval_covers_exact(self, rng):
        m = random_mechanism(rng, 3, 5)
        q = FiniteBelief(m.universe, tuple(rng.dirichlet(np.ones(len(m.universe)))))
        exact = tail_probability(NegLogProb(), q, m, 0, 0.3)
        est = tail_probability_mc(NegLogProb(), q, m, 0, 0.3, 20_000, seed=5)
        assert est.interval[0] <= exact <= est.interval[1]
        again = tail_probability_mc(NegLogProb(), q, m, 0, 0.3, 20_000, seed=5)
        assert again.estimate == est.estimate


class TestTwoPointTables:
    def test_fast_and_generic_agree(self, rng):
        for _ in range(40):
            m = random_mechanism(rng, 4, 5, 0.3)
            pairs = complete_neighbors(m.universe).ordered_pairs(m.universe)
            kappa = float(rng.uniform(0, 2))
            g1, l1 = two_point_tail_table(m, pairs, kappa, default_w_grid(), fast=True)
            g2, l2 = two_point_tail_table(m, pairs, kappa, default_w_grid(), fast=False)
            np.testing.assert_allclose(g1, g2, atol=1e-12)
            np.testing.assert_allclose(l1, l2, atol=1e-12)

    def test_default_grid(self):
        grid = default_w_grid()
        assert len(grid) == 25
        assert grid[0] == pytest.approx(1e-6) and grid[-2] == pytest.approx(0.5) and grid[-1] == 1 - 1e-6


class TestCertifyPP:
    def test_randomized_response_passes_at_its_eps(self):
        rr = randomized_response(LN3, 2)
        rep = certify_pp(rr, two_point_spec(rr, LN3))
        assert rep.verdict and rep.witness is None and rep.method == "exact"
        assert rep.status == "certified"

    def test_attained_below_eps(self):
        for eps in (0.5, 1.0, 2.0):
            rr = randomized_response(eps, 2)
            rep = certify_pp(rr, two_point_spec(rr, eps - 0.1))
            assert rep.attained == pytest.approx(1 / (1 + math.exp(eps)), abs=1e-12)
            assert not rep.verdict
            assert rep.witness.dataset == 0 and rep.witness.outputs == (0,)

    def test_zero_mass_priors_are_trivially_private(self):
        m = identity_mechanism(("a", "b", "c"))
        table = {
            "a": (FiniteBelief(("b", "c"), (0.5, 0.5)),),
            "b": (FiniteBelief(("a", "c"), (0.2, 0.8)),),
            "c": (FiniteBelief(("a",), (1.0,)),),
        }
        rep = certify_pp(m, GuaranteeSpec((NegLogProb(),), ExplicitFinite(per_dataset=table), 0.0, 0.0))
        assert rep.verdict and rep.attained == 1.0

    def test_identity_leaks_everything(self):
        m = identity_mechanism((0, 1))
        rep = certify_pp(m, GuaranteeSpec((NegLogProb(),), ExplicitFinite((FiniteBelief.uniform((0, 1)),)), 0.5, 0.0))
        assert not rep.verdict and rep.attained == 0.0
        assert rep.witness.prior == FiniteBelief.uniform((0, 1)).describe()

    def test_structural_zero_fails_both(self):
        m = FiniteMechanism((0, 1), (0, 1, 2), [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])
        nb = complete_neighbors(m.universe)
        assert not certify_pdp(m, nb, 5.0, 0.1).verdict
        assert not certify_pp(m, two_point_spec(m, 5.0, 0.1)).verdict
        assert certify_pp(m, two_point_spec(m, 5.0, 0.5)).verdict

    def test_interval_score_uses_grid(self):
        m = random_mechanism(np.random.default_rng(1), 3, 3)
        spec = GuaranteeSpec((Interval(1.0),), NeighborTwoPoint(complete_neighbors(m.universe), truth_supported_only=True), 0.5)
        assert certify_pp(m, spec).method == "grid"

    def test_threads_do_not_change_report(self, monkeypatch, rng):
        m = random_mechanism(rng, 4, 5)
        cls = ExplicitFinite(tuple(FiniteBelief(m.universe, tuple(rng.dirichlet(np.ones(len(m.universe))))) for _ in range(5)))
        spec = GuaranteeSpec((NegLogProb(), Interval(1.0)), cls, 0.2, 0.1)
        monkeypatch.setenv("PP_CERT_THREADS", "1")
        a = certify_pp(m, spec)
        monkeypatch.setenv("PP_CERT_THREADS", "4")
        b = certify_pp(m, spec)
        assert a.to_dict() == b.to_dict()
        assert a.evaluations == b.evaluations

    def test_gaussian_class_requires_average(self):
        spec = GuaranteeSpec((MarginalDSS(0),), GaussianClass(GaussianClassSpec(1.0, 2.0, [0.0, 0.0])), 1.0)
        with pytest.raises(UnsupportedPriorClass):
            certify_pp(randomized_response(1.0, 2), spec)

    def test_gaussian_class_report(self):
        spec_c = GaussianClassSpec(1.0, 5.0, [0.5, -1.0, 2.0])
        spec = GuaranteeSpec(tuple(MarginalDSS(i) for i in range(3)), GaussianClass(spec_c, 500, 3), spec_c.bound)
        rep = certify_pp(AVERAGE, spec)
        assert rep.verdict and rep.method == "monte-carlo" and rep.status == "supported"
        assert rep.interval[0] <= 1.0 <= rep.interval[1]
        tight = certify_pp(AVERAGE, spec.with_budget(0.0, 0.0))
        assert not tight.verdict and tight.status == "refuted" and tight.witness is not None

    def test_guarantee_validation(self):
        with pytest.raises(PreconditionError):
            GuaranteeSpec((), ExplicitFinite(()), 0.0)
        with pytest.raises(PreconditionError):
            GuaranteeSpec((NegLogProb(),), ExplicitFinite(()), -1.0)
        with pytest.raises(PreconditionError):
            GuaranteeSpec((NegLogProb(),), ExplicitFinite(()), 0.0, 1.0)


class TestCertifyPDP:
    def test_randomized_response(self):
        rr = randomized_response(LN3, 2)
        assert certify_pdp(rr, None, LN3).attained_delta == 0.0
        # a hair below ln 3 the diagonal outputs violate
        rep = certify_pdp(rr, None, 1.0986)
        assert rep.attained_delta == pytest.approx(0.75)
        assert rep.witness == (0, 1, (0,))

    def test_exact_mode(self):
        m = FiniteMechanism((0, 1), (0, 1), [[Fraction(3, 4), Fraction(1, 4)], [Fraction(1, 4), Fraction(3, 4)]])
        assert certify_pdp(m, None, exp_eps=3).attained_delta == 0
        rep = certify_pdp(m, None, exp_eps=Fraction(299, 100))
        assert rep.exact and rep.attained_delta == Fraction(3, 4)

    def test_matches_independent_enumeration(self, rng):
        for _ in range(50):
            w = rng.integers(0, 5, size=(3, 4))
            w[w.sum(axis=1) == 0, 0] = 1
            kernel = [[Fraction(int(v), int(r.sum())) for v in r] for r in w]
            m = FiniteMechanism((0, 1, 2), (0, 1, 2, 3), kernel)
            assert certify_pdp(m, None, exp_eps=2).attained_delta == exact_pdp_delta(kernel, 2)


class TestEquivalence:
    def test_agrees_on_random_mechanisms(self, rng):
        for _ in range(30):
            m = random_mechanism(rng, 4, 5, 0.25)
            for eps in (0.2, 1.0):
                for delta in (0.0, 0.2):
                    rep = check_pdp_pp_equivalence(m, complete_neighbors(m.universe), eps, delta)
                    assert rep.monotone

    def test_pure_python_path(self, rng):
        m = random_mechanism(rng, 3, 4, 0.25)
        rep = check_pdp_pp_equivalence(m, complete_neighbors(m.universe), 0.7, 0.1, fast=False)
        assert rep.pdp_verdict == rep.pp_verdict


def restriction_class(universe, base):
    from ppcert.suite import restriction_closure

    return ExplicitFinite(tuple(restriction_closure(base, universe)))


class TestComposition:
    def test_randomized_response_pair(self):
        rr = randomized_response(LN3, 2)
        spec = two_point_spec(rr, LN3)
        rep = check_composition(rr, rr, spec, spec, "dataset")
        assert rep.premises and rep.composed.verdict
        assert rep.kappa == pytest.approx(2 * LN3)

    def test_non_closed_class_is_rejected(self):
        rr = randomized_response(1.0, 2)
        cls = ExplicitFinite((FiniteBelief.uniform((0, 1)),))
        spec = GuaranteeSpec((NegLogProb(),), cls, 1.0)
        assert not check_conjugacy(cls, rr)
        with pytest.raises(ConjugacyViolation):
            check_composition(rr, rr, spec, spec, "dataset")

    def test_partition_kernels_are_conjugate(self):
        universe = (0, 1, 2)
        m = FiniteMechanism(universe, ("lo", "hi"), [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        cls = restriction_class(universe, [FiniteBelief(universe, (0.2, 0.3, 0.5))])
        assert check_conjugacy(cls, m)

    def test_mismatched_scores(self):
        rr = randomized_response(1.0, 2)
        cls = NeighborTwoPoint(complete_neighbors(rr.universe))
        with pytest.raises(PreconditionError):
            check_composition(
                rr, rr, GuaranteeSpec((NegLogProb(),), cls, 1.0), GuaranteeSpec((Interval(1.0),), cls, 1.0), "dataset"
            )


class TestReceiverPostprocessing:
    def test_holds_for_output_indexed_kernel(self, rng):
        m = random_mechanism(rng, 3, 3)
        k = FiniteMechanism(m.alphabet, ("u", "v"), rng.dirichlet(np.ones(2), size=len(m.alphabet)))
        spec = two_point_spec(m, 0.5, 0.1, truth_supported_only=True)
        rep = check_receiver_postprocessing(m, k, spec)
        assert rep.multisets_equal and rep.verdicts_equal

    def test_data_dependent_kernel_rejected(self, rng):
        m = randomized_response(1.0, 2)
        rows = [(x, t) for x in m.universe for t in m.alphabet]
        k = FiniteMechanism(tuple(rows), ("u", "v"), rng.dirichlet(np.ones(2), size=4))
        with pytest.raises(StructuralViolation):
            check_receiver_postprocessing(m, k, two_point_spec(m, 1.0), rows="pair")

    def test_pair_indexed_but_independent(self, rng):
        m = randomized_response(1.0, 2)
        per_output = rng.dirichlet(np.ones(2), size=2)
        rows = [(x, t) for x in m.universe for t in m.alphabet]
        k = FiniteMechanism(tuple(rows), ("u", "v"), [per_output[t] for _, t in rows])
        assert check_receiver_postprocessing(m, k, two_point_spec(m, 1.0), rows="pair").multisets_equal


class TestSenderPostprocessing:
    def test_witness_verifies_independently(self):
        found = search_sender_postprocessing_counterexample(seed=0, budget=200_000)
        assert found.found
        m, k = found.mechanism, found.post
        assert m.is_exact and k.is_exact
        base = exact_pdp_delta(m.kernel.tolist(), found.exp_eps)
        chained = exact_pdp_delta(chain(m, k).kernel.tolist(), found.exp_eps)
        assert base == found.delta and chained == found.chained_delta
        assert chained > base

    def test_exhausted_budget(self):
        rep = search_sender_postprocessing_counterexample(seed=0, budget=0)
        assert not rep.found and rep.candidates == 0

    def test_identity_post_never_hurts(self):
        rep = search_sender_postprocessing_counterexample(
            seed=1, budget=5000, max_alphabet=3, fixed_post=identity_mechanism((0, 1, 2))
        )
        assert not rep.found and rep.candidates == 5000


class TestAverageGaussian:
    def test_worked_example(self):
        d = average_gaussian_delta_reference(GaussianBelief(np.zeros(2), np.eye(2)), [1.0, 1.0])
        assert d[0] == pytest.approx(1 + math.log(2), abs=1e-9)
        assert d[1] == pytest.approx(1 + math.log(2), abs=1e-9)

    def test_kernel_matches_reference(self):
        spec = GaussianClassSpec(2.0, 5.0, [0.4, -0.3, 1.2, 0.0])
        means, covs = sample_gaussian_class_arrays(spec, 9, 100)
        fast = kernels.average_gaussian_deltas(means, covs, spec.x)
        for b in range(100):
            ref = average_gaussian_delta_reference(GaussianBelief(means[b], covs[b]), spec.x)
            np.testing.assert_allclose(fast[b], ref, rtol=1e-9, atol=1e-9)

    def test_report(self):
        rep = certify_average_gaussian(GaussianClassSpec(1.0, 2.0, [0.0, 1.0, 2.0]), 2000, 4)
        assert rep.verdict and rep.violations == 0
        assert rep.max_delta <= rep.bound + 1e-8
        assert rep.status == "supported"
        assert rep.slack_quantiles["0.0"] >= 0

    def test_deterministic(self):
        spec = GaussianClassSpec(0.5, 10.0, [1.0, 2.0, 3.0])
        a = certify_average_gaussian(spec, 500, 17).to_dict()
        b = certify_average_gaussian(spec, 500, 17).to_dict()
        assert a == b
