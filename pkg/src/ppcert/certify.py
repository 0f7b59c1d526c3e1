"""Certification of persuasive-privacy guarantees and the property checks.

A guarantee is a set of scoring rules, a class of Receiver priors and a
budget ``(kappa, delta)``. A mechanism satisfies it when, for every rule,
true dataset ``x`` and prior ``Q`` in the class,

    P_{T ~ M(x)}[ S(Q, x) - S(Q_T, x) <= kappa ] >= 1 - delta.

Finite mechanisms are certified by exact enumeration of outputs. The
two-point neighbour class is handled with a finite ``w`` grid plus the
analytic ``w -> 0`` limit, where the infimum over that class is attained
for the discrete log score. The Gaussian class under the average mechanism
is checked by Monte Carlo over class members.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from . import kernels
from .beliefs import (
    FiniteBelief,
    GaussianBelief,
    GaussianClassSpec,
    gaussian_condition_on_average,
    posterior_update,
    sample_gaussian_class_arrays,
)
from .errors import (
    ConjugacyViolation,
    EquivalenceViolation,
    PreconditionError,
    PropertyViolation,
    StructuralViolation,
    UnsupportedPriorClass,
    ZeroEvidence,
)
from .mechanisms import (
    AVERAGE,
    DeterministicMechanism,
    FiniteMechanism,
    NeighborRelation,
    _pair_rows,
    chain,
    complete_neighbors,
    is_x_independent,
    tensor,
)
from .scores import MarginalDSS, NegLogProb, ScoringRule
from .xreal import xsub

BOUNDARY_RTOL = 1e-12
PROB_TOL = 1e-10
AVERAGE_BOUND_TOL = 1e-8
MULTISET_TOL = 1e-12


def delta_tol(kappa: float) -> float:
    """Slack granted to ``Delta <= kappa`` so boundary ties count as compliant."""
    return 1e-12 * max(1.0, abs(kappa))


def default_w_grid(size: int = 25) -> tuple:
    """Geometric grid from 1e-6 to 0.5 plus ``1 - 1e-6``."""
    if size < 2:
        raise PreconditionError("w grid needs at least two points")
    return tuple(np.geomspace(1e-6, 0.5, size - 1).tolist()) + (1 - 1e-6,)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("PP_CERT_THREADS", "1")))
    except ValueError:
        return 1


# --------------------------------------------------------------------------
# Guarantee and report types
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExplicitFinite:
    """An explicit list of priors, optionally different per dataset."""

    priors: tuple = ()
    per_dataset: dict | None = None

    def priors_for(self, x) -> tuple:
        if self.per_dataset is not None:
            return tuple(self.per_dataset.get(x, ()))
        return tuple(self.priors)

    def all_priors(self) -> list:
        out = list(self.priors)
        if self.per_dataset:
            for ps in self.per_dataset.values():
                out.extend(ps)
        return out


@dataclass(frozen=True, eq=False)
class NeighborTwoPoint:
    """Two-point priors supported on neighbouring datasets.

    ``truth_supported_only`` restricts to priors that put positive mass on
    the true dataset; the remaining priors leave the log score unchanged.
    """

    neighbors: NeighborRelation
    w_grid: tuple = field(default_factory=default_w_grid)
    include_limit: bool = True
    truth_supported_only: bool = False


@dataclass(frozen=True, eq=False)
class GaussianClass:
    spec: GaussianClassSpec
    samples: int = 10_000
    seed: int = 0


@dataclass(frozen=True, eq=False)
class GuaranteeSpec:
    scores: tuple
    prior_class: object
    kappa: float
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scores", tuple(self.scores))
        if not self.scores:
            raise PreconditionError("a guarantee needs at least one scoring rule")
        if not self.kappa >= 0:
            raise PreconditionError(f"kappa must be nonnegative, got {self.kappa!r}")
        if not 0 <= self.delta < 1:
            raise PreconditionError(f"delta must lie in [0, 1), got {self.delta!r}")

    def with_budget(self, kappa: float, delta: float) -> "GuaranteeSpec":
        return GuaranteeSpec(self.scores, self.prior_class, kappa, delta)


@dataclass(frozen=True)
class RelativeScoreSample:
    output: object
    delta_s: float
    prob: float


@dataclass
class Witness:
    score: str
    dataset: object
    prior: str
    outputs: tuple

    def to_dict(self) -> dict:
        return {"score": self.score, "dataset": self.dataset, "prior": self.prior, "outputs": list(self.outputs)}


@dataclass
class Evaluation:
    score: str
    dataset: object
    prior: str
    tail: float


@dataclass
class CertificationReport:
    verdict: bool
    attained: float
    kappa: float
    delta: float
    method: str
    witness: Witness | None = None
    samples: int | None = None
    seed: int | None = None
    interval: tuple | None = None
    evaluations: list = field(default_factory=list)

    @property
    def status(self) -> str:
        if self.method == "monte-carlo":
            return "supported" if self.verdict else "refuted"
        return "certified" if self.verdict else "refuted"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "status": self.status,
            "attained": self.attained,
            "kappa": self.kappa,
            "delta": self.delta,
            "method": self.method,
            "witness": self.witness.to_dict() if self.witness else None,
            "samples": self.samples,
            "seed": self.seed,
            "interval": list(self.interval) if self.interval else None,
        }


# --------------------------------------------------------------------------
# Relative scores and tail probabilities
# --------------------------------------------------------------------------


def relative_score(rule: ScoringRule, prior, mech, output, dataset) -> float:
    """``S(Q, x) - S(Q_T, x)`` for the observed ``output``."""
    if isinstance(prior, GaussianBelief):
        if mech is not AVERAGE:
            raise PreconditionError("Gaussian priors are supported with the average mechanism only")
        posterior = gaussian_condition_on_average(prior, float(output))
        return xsub(rule.score(prior, dataset), rule.score(posterior, dataset))
    before = rule.score(prior, dataset)
    if isinstance(rule, NegLogProb) and prior.mass(dataset) == 0:
        # posterior mass on the truth stays zero; inf - inf is taken as 0
        return 0.0
    posterior = posterior_update(prior, mech, output)
    return xsub(before, rule.score(posterior, dataset))


def relative_score_distribution(rule: ScoringRule, prior: FiniteBelief, mech: FiniteMechanism, dataset) -> list:
    """Distribution of the relative score over outputs drawn from ``mech(dataset)``."""
    out = []
    row = mech.row(dataset)
    for t, p in zip(mech.alphabet, row):
        if p > 0:
            out.append(RelativeScoreSample(t, relative_score(rule, prior, mech, t, dataset), float(p)))
    return out


def tail_probability(rule: ScoringRule, prior, mech, dataset, kappa: float) -> float:
    """Exact ``P_x[Delta <= kappa]`` by enumerating the outputs."""
    if isinstance(prior, GaussianBelief):
        t = mech(np.asarray(dataset, dtype=float))
        return 1.0 if relative_score(rule, prior, mech, t, dataset) <= kappa + delta_tol(kappa) else 0.0
    tol = delta_tol(kappa)
    return math.fsum(s.prob for s in relative_score_distribution(rule, prior, mech, dataset) if s.delta_s <= kappa + tol)


@dataclass
class TailEstimate:
    estimate: float
    interval: tuple
    samples: int
    seed: int


def wilson_interval(successes: int, trials: int, level: float = 0.99) -> tuple:
    ci = stats.binomtest(successes, trials).proportion_ci(confidence_level=level, method="wilson")
    return (float(ci.low), float(ci.high))


def tail_probability_mc(rule, prior, mech: FiniteMechanism, dataset, kappa: float, samples: int, seed: int) -> TailEstimate:
    """Monte Carlo tail estimate with a Wilson 99% interval."""
    if samples < 1:
        raise PreconditionError("samples must be positive")
    rng = np.random.default_rng(seed)
    row = np.asarray(mech.row(dataset), dtype=float)
    draws = rng.choice(len(mech.alphabet), size=samples, p=row / row.sum())
    tol = delta_tol(kappa)
    cache, hits = {}, 0
    for j in draws:
        if j not in cache:
            cache[j] = relative_score(rule, prior, mech, mech.alphabet[j], dataset) <= kappa + tol
        hits += cache[j]
    return TailEstimate(hits / samples, wilson_interval(hits, samples), samples, seed)


# --------------------------------------------------------------------------
# Two-point neighbour class
# --------------------------------------------------------------------------


def _pair_index_array(mech: FiniteMechanism, pairs: Sequence) -> np.ndarray:
    return np.array([[mech.dataset_index(a), mech.dataset_index(b)] for a, b in pairs], dtype=np.int64).reshape(-1, 2)


def two_point_limit_tail(mech: FiniteMechanism, x, x_prime, kappa: float) -> float:
    """Tail probability in the limit of vanishing prior mass on the truth.

    As ``w -> 0`` the log-score relative score of output ``t`` tends to
    ``log m(x, t) - log m(x', t)`` (``+inf`` where ``m(x', t) = 0``).
    """
    tol = delta_tol(kappa)
    total = []
    for a, b in zip(mech.row(x), mech.row(x_prime)):
        if a <= 0:
            continue
        limit = math.log(a) - math.log(b) if b > 0 else math.inf
        if limit <= kappa + tol:
            total.append(float(a))
    return math.fsum(total)


def two_point_tail_table(mech: FiniteMechanism, pairs: Sequence, kappa: float, w_grid: Sequence[float], fast: bool | None = None):
    """Log-score tails for every ordered ``(truth, alternative)`` pair.

    Returns ``(grid, limit)`` arrays of shape ``(len(pairs), len(w_grid))``
    and ``(len(pairs),)``. ``fast`` selects the enumeration kernels; the
    default uses them for float kernels.
    """
    pairs = list(pairs)
    if fast is None:
        fast = not mech.is_exact
    if fast:
        k = np.ascontiguousarray(mech.kernel, dtype=float)
        idx = _pair_index_array(mech, pairs)
        ws = np.asarray(w_grid, dtype=float)
        grid = kernels.two_point_tails(k, idx, ws, float(kappa), delta_tol(kappa))
        limit = kernels.two_point_limit_tails(k, idx, float(kappa), delta_tol(kappa))
        return np.asarray(grid), np.asarray(limit)
    rule = NegLogProb()
    grid = np.zeros((len(pairs), len(w_grid)))
    limit = np.zeros(len(pairs))
    for p, (x, y) in enumerate(pairs):
        for i, w in enumerate(w_grid):
            prior = FiniteBelief((x, y), (w, 1 - w))
            grid[p, i] = tail_probability(rule, prior, mech, x, kappa)
        limit[p] = two_point_limit_tail(mech, x, y, kappa)
    return grid, limit


# --------------------------------------------------------------------------
# Certification
# --------------------------------------------------------------------------


def _violating_outputs(rule, prior, mech, x, kappa) -> tuple:
    tol = delta_tol(kappa)
    return tuple(s.output for s in relative_score_distribution(rule, prior, mech, x) if s.delta_s > kappa + tol)


def _limit_violating_outputs(mech, x, y, kappa) -> tuple:
    tol = delta_tol(kappa)
    out = []
    for t, a, b in zip(mech.alphabet, mech.row(x), mech.row(y)):
        if a > 0 and (b <= 0 or math.log(a) - math.log(b) > kappa + tol):
            out.append(t)
    return tuple(out)


def _explicit_evaluations(mech, spec, rule, x):
    cls = spec.prior_class
    rows = []
    for q in cls.priors_for(x):
        rows.append((q, tail_probability(rule, q, mech, x, spec.kappa)))
    return rows


def _certify_explicit(mech: FiniteMechanism, spec: GuaranteeSpec) -> CertificationReport:
    jobs = [(si, rule, x) for si, rule in enumerate(spec.scores) for x in mech.universe]
    workers = _workers()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: _explicit_evaluations(mech, spec, j[1], j[2]), jobs))
    else:
        results = [_explicit_evaluations(mech, spec, rule, x) for _, rule, x in jobs]
    threshold = 1 - spec.delta - PROB_TOL
    evaluations, attained, witness = [], 1.0, None
    for (si, rule, x), rows in zip(jobs, results):
        for q, tail in rows:
            evaluations.append(Evaluation(rule.name, x, q.describe(), tail))
            attained = min(attained, tail)
            if witness is None and tail < threshold:
                witness = Witness(rule.name, x, q.describe(), _violating_outputs(rule, q, mech, x, spec.kappa))
    return CertificationReport(attained >= threshold, attained, spec.kappa, spec.delta, "exact", witness, evaluations=evaluations)


def _certify_two_point(mech: FiniteMechanism, spec: GuaranteeSpec, fast: bool | None = None) -> CertificationReport:
    cls: NeighborTwoPoint = spec.prior_class
    pairs = cls.neighbors.ordered_pairs(mech.universe)
    threshold = 1 - spec.delta - PROB_TOL
    evaluations, attained, witness = [], 1.0, None
    exact = True
    for rule in spec.scores:
        if isinstance(rule, NegLogProb):
            grid, limit = two_point_tail_table(mech, pairs, spec.kappa, cls.w_grid, fast=fast)
            table = {}
            for p, (x, y) in enumerate(pairs):
                table[(x, y)] = (grid[p], limit[p])
        else:
            exact = False
            table = None
        for x in mech.universe:
            rows = []
            for y in [b for a, b in pairs if a == x]:
                if table is not None:
                    g, lim = table[(x, y)]
                    for w, tail in zip(cls.w_grid, g):
                        rows.append((f"two-point({x!r}:{w:.6g}, {y!r})", float(tail), (x, y, w)))
                    if cls.include_limit:
                        rows.append((f"two-point({x!r}:w->0, {y!r})", float(lim), (x, y, 0.0)))
                else:
                    for w in cls.w_grid:
                        prior = FiniteBelief((x, y), (w, 1 - w))
                        rows.append((f"two-point({x!r}:{w:.6g}, {y!r})", tail_probability(rule, prior, mech, x, spec.kappa), (x, y, w)))
            if not cls.truth_supported_only and not isinstance(rule, NegLogProb):
                for a, b in pairs:
                    if x in (a, b) or mech.universe.index(a) > mech.universe.index(b):
                        continue
                    for w in cls.w_grid:
                        prior = FiniteBelief((a, b), (w, 1 - w))
                        rows.append((f"two-point({a!r}:{w:.6g}, {b!r})", tail_probability(rule, prior, mech, x, spec.kappa), (a, b, w)))
            for desc, tail, (a, b, w) in rows:
                evaluations.append(Evaluation(rule.name, x, desc, tail))
                attained = min(attained, tail)
                if witness is None and tail < threshold:
                    if w == 0.0:
                        outs = _limit_violating_outputs(mech, a, b, spec.kappa)
                    else:
                        outs = _violating_outputs(rule, FiniteBelief((a, b), (w, 1 - w)), mech, x, spec.kappa)
                    witness = Witness(rule.name, x, desc, outs)
    method = "exact" if exact and cls.include_limit else "grid"
    return CertificationReport(attained >= threshold, attained, spec.kappa, spec.delta, method, witness, evaluations=evaluations)


def certify_pp(mech, spec: GuaranteeSpec, fast: bool | None = None) -> CertificationReport:
    """Decide whether ``mech`` meets the guarantee ``spec``.

    ``attained`` is the infimum tail probability over rules, datasets and
    priors; the witness is the first failing ``(rule, dataset, prior)`` in
    enumeration order together with its violating outputs.
    """
    cls = spec.prior_class
    if isinstance(cls, GaussianClass):
        if mech is not AVERAGE:
            raise UnsupportedPriorClass("the Gaussian class is supported for the average mechanism only")
        return _certify_average(cls, spec)
    if not isinstance(mech, FiniteMechanism):
        raise UnsupportedPriorClass(f"finite prior classes need a finite mechanism, got {type(mech).__name__}")
    if isinstance(cls, ExplicitFinite):
        return _certify_explicit(mech, spec)
    if isinstance(cls, NeighborTwoPoint):
        return _certify_two_point(mech, spec, fast=fast)
    raise UnsupportedPriorClass(f"unsupported prior class {type(cls).__name__}")


# --------------------------------------------------------------------------
# Probabilistic differential privacy
# --------------------------------------------------------------------------


@dataclass
class PDPReport:
    attained_delta: float
    eps: float
    exact: bool
    witness: tuple | None
    per_pair: dict
    target_delta: float | None = None

    @property
    def verdict(self) -> bool | None:
        if self.target_delta is None:
            return None
        return self.satisfies(self.target_delta)

    def satisfies(self, delta) -> bool:
        if self.exact:
            return self.attained_delta <= delta
        return self.attained_delta <= delta + PROB_TOL

    def to_dict(self) -> dict:
        return {
            "attained_delta": float(self.attained_delta),
            "eps": self.eps,
            "exact": self.exact,
            "verdict": self.verdict,
            "target_delta": self.target_delta,
            "witness": None
            if self.witness is None
            else {"dataset": self.witness[0], "neighbor": self.witness[1], "outputs": list(self.witness[2])},
        }


def certify_pdp(mech: FiniteMechanism, neighbors: NeighborRelation | None, eps: float | None = None, delta=None, exp_eps=None) -> PDPReport:
    """Worst violation mass ``sup_{x ~ x'} P_x[m(T|x) > e^eps m(T|x')]``.

    Exact when the kernel holds fractions and ``exp_eps`` is rational;
    otherwise ratios within a relative 1e-12 of ``e^eps`` count as
    satisfying the (non-strict) inequality.
    """
    if neighbors is None:
        neighbors = complete_neighbors(mech.universe)
    if exp_eps is None:
        if eps is None:
            raise PreconditionError("give eps or exp_eps")
        exp_eps = math.exp(eps)
    elif eps is None:
        eps = math.log(exp_eps)
    exact = mech.is_exact and isinstance(exp_eps, (Fraction, int))
    bound = Fraction(exp_eps) if exact else float(exp_eps)
    scale = 1 if exact else 1.0 + BOUNDARY_RTOL
    per_pair, best, witness = {}, (Fraction(0) if exact else 0.0), None
    for x, y in neighbors.ordered_pairs(mech.universe):
        mass = Fraction(0) if exact else 0.0
        outs = []
        for t, a, b in zip(mech.alphabet, mech.row(x), mech.row(y)):
            if a > 0 and a > bound * b * scale:
                mass += a
                outs.append(t)
        per_pair[(x, y)] = mass
        if mass > best:
            best, witness = mass, (x, y, tuple(outs))
    return PDPReport(best, float(eps), exact, witness, per_pair, delta)


@dataclass
class EquivalenceReport:
    eps: float
    delta: float
    pdp_verdict: bool
    pp_verdict: bool
    pdp_attained: float
    pp_attained: float
    monotone: bool


def check_pdp_pp_equivalence(mech: FiniteMechanism, neighbors: NeighborRelation, eps: float, delta: float, w_grid: Sequence[float] | None = None, fast: bool | None = None) -> EquivalenceReport:
    """Compare the PDP verdict with the two-point log-score PP verdict.

    Also checks that tails are nondecreasing in ``w`` and never fall below
    the ``w -> 0`` limit, so grid verdicts move monotonically toward it.
    """
    w_grid = tuple(sorted(w_grid if w_grid is not None else default_w_grid()))
    pdp = certify_pdp(mech, neighbors, eps, delta)
    cls = NeighborTwoPoint(neighbors, w_grid, include_limit=True)
    pp = certify_pp(mech, GuaranteeSpec((NegLogProb(),), cls, eps, delta), fast=fast)
    pairs = neighbors.ordered_pairs(mech.universe)
    grid, limit = two_point_tail_table(mech, pairs, eps, w_grid, fast=fast)
    monotone = bool(np.all(np.diff(grid, axis=1) >= -PROB_TOL)) and bool(np.all(limit[:, None] <= grid + PROB_TOL))
    report = EquivalenceReport(eps, delta, bool(pdp.verdict), pp.verdict, float(pdp.attained_delta), pp.attained, monotone)
    if report.pdp_verdict != report.pp_verdict:
        raise EquivalenceViolation(
            f"PDP says {report.pdp_verdict}, PP says {report.pp_verdict} at eps={eps!r}, delta={delta!r}",
            witness=(mech, eps, delta),
        )
    if not monotone:
        raise EquivalenceViolation("two-point tails are not monotone toward the w -> 0 limit", witness=(mech, eps))
    return report


# --------------------------------------------------------------------------
# Composition
# --------------------------------------------------------------------------


def second_stage_slice(m1: FiniteMechanism, m2: FiniteMechanism, t1, rows: str = "auto") -> FiniteMechanism:
    """The dataset-indexed kernel ``x -> m2((x, t1), .)``."""
    idx = _pair_rows(m1, m2, rows)
    j = m1.output_index(t1)
    return FiniteMechanism(m1.universe, m2.alphabet, m2.kernel[idx[:, j]])


def _in_family(belief: FiniteBelief, family: Sequence[FiniteBelief], tol: float = 1e-12) -> bool:
    return any(belief.same_distribution(q, tol) for q in family)


def check_conjugacy(cls, mech: FiniteMechanism) -> bool:
    """Every posterior of every class member stays in the class.

    Per-dataset classes are checked only on outputs reachable from their
    dataset, i.e. closure almost surely under the data-generating law.
    """
    if isinstance(cls, NeighborTwoPoint):
        # posteriors of two-point priors stay on the same neighbour pair
        return True
    if not isinstance(cls, ExplicitFinite):
        raise UnsupportedPriorClass("conjugacy is checked for finite classes only")
    if cls.per_dataset is None:
        groups = [(cls.priors, mech.alphabet)]
    else:
        # outputs the true dataset cannot produce are irrelevant for its class
        groups = [
            (family, [t for t in mech.alphabet if mech.prob(x, t) > 0])
            for x, family in cls.per_dataset.items()
            if x in mech.universe
        ]
    for family, outputs in groups:
        for q in family:
            for t in outputs:
                try:
                    post = posterior_update(q, mech, t)
                except ZeroEvidence:
                    continue
                if not _in_family(post, family):
                    return False
    return True


@dataclass
class CompositionReport:
    conjugate: bool
    first_passes: bool
    slices_pass: bool
    composed: CertificationReport
    kappa: float
    delta: float

    @property
    def premises(self) -> bool:
        return self.conjugate and self.first_passes and self.slices_pass

    @property
    def consistent(self) -> bool:
        return not self.premises or self.composed.verdict


def check_composition(m1: FiniteMechanism, m2: FiniteMechanism, spec1: GuaranteeSpec, spec2: GuaranteeSpec, rows: str = "auto") -> CompositionReport:
    """Composition bound: ``(k1, d1)`` and ``(k2, d2)`` give ``(k1 + k2, d1 + d2)``."""
    if tuple(spec1.scores) != tuple(spec2.scores):
        raise PreconditionError("both guarantees must use the same scoring rules")
    if spec1.prior_class is not spec2.prior_class:
        raise PreconditionError("both guarantees must use the same prior class")
    cls = spec1.prior_class
    slices = [second_stage_slice(m1, m2, t1, rows) for t1 in m1.alphabet]
    if not check_conjugacy(cls, m1) or not all(check_conjugacy(cls, s) for s in slices):
        raise ConjugacyViolation("the prior class is not closed under Bayes updates by both mechanisms")
    first = certify_pp(m1, spec1)
    slices_pass = all(certify_pp(s, spec2).verdict for s in slices)
    kappa, delta = spec1.kappa + spec2.kappa, spec1.delta + spec2.delta
    joint = tensor(m1, m2, rows)
    composed_spec = GuaranteeSpec(spec1.scores, cls, kappa, min(delta, 1 - 1e-15))
    composed = certify_pp(joint, composed_spec)
    report = CompositionReport(True, first.verdict, slices_pass, composed, kappa, delta)
    if not report.consistent:
        raise PropertyViolation("composition bound violated", witness=(m1, m2, composed.witness))
    return report


# --------------------------------------------------------------------------
# Post-processing
# --------------------------------------------------------------------------


def _merge_multiset(samples: Sequence[tuple]) -> list:
    merged = []
    for d, p in sorted(samples):
        if merged and abs(merged[-1][0] - d) <= MULTISET_TOL:
            merged[-1][1] += p
        else:
            merged.append([d, p])
    return merged


def _multisets_equal(a, b) -> tuple[bool, float]:
    ma, mb = _merge_multiset(a), _merge_multiset(b)
    if len(ma) != len(mb):
        return False, math.inf
    worst = 0.0
    for (da, pa), (db, pb) in zip(ma, mb):
        worst = max(worst, abs(da - db) if math.isfinite(da) or da != db else math.inf, abs(pa - pb))
    return worst <= MULTISET_TOL, worst


def _class_priors(cls, mech: FiniteMechanism, x) -> list:
    if isinstance(cls, ExplicitFinite):
        return list(cls.priors_for(x))
    if isinstance(cls, NeighborTwoPoint):
        out = []
        for a, b in cls.neighbors.ordered_pairs(mech.universe):
            if a == x or not cls.truth_supported_only:
                out.extend(FiniteBelief((a, b), (w, 1 - w)) for w in cls.w_grid)
        return out
    raise UnsupportedPriorClass(f"unsupported prior class {type(cls).__name__}")


@dataclass
class PostprocessReport:
    multisets_equal: bool
    max_discrepancy: float
    verdicts_equal: bool
    verdict: bool
    comparisons: int


def check_receiver_postprocessing(m: FiniteMechanism, k: FiniteMechanism, spec: GuaranteeSpec, rows: str = "output") -> PostprocessReport:
    """Releasing ``(t1, t2)`` with data-independent ``k`` changes nothing.

    ``k`` is indexed by outputs of ``m`` (``rows='output'``) or by
    ``(dataset, output)`` pairs that must agree across datasets.
    """
    if rows == "pair" and not is_x_independent(k, m.universe, m.alphabet):
        raise StructuralViolation("post-processing kernel depends on the data")
    if rows == "dataset":
        first = k.kernel[0]
        if any(any(a != b for a, b in zip(first, r)) for r in k.kernel[1:]):
            raise StructuralViolation("post-processing kernel depends on the data")
    joint = tensor(m, k, rows)
    worst, equal, comparisons = 0.0, True, 0
    for rule in spec.scores:
        for x in m.universe:
            for q in _class_priors(spec.prior_class, m, x):
                a = [(s.delta_s, s.prob) for s in relative_score_distribution(rule, q, m, x)]
                b = [(s.delta_s, s.prob) for s in relative_score_distribution(rule, q, joint, x)]
                ok, gap = _multisets_equal(a, b)
                comparisons += 1
                equal &= ok
                worst = max(worst, gap)
    v_m = certify_pp(m, spec).verdict
    v_j = certify_pp(joint, spec).verdict
    report = PostprocessReport(equal, worst, v_m == v_j, v_m, comparisons)
    if not (report.multisets_equal and report.verdicts_equal):
        raise PropertyViolation("receiver post-processing changed the relative-score distribution", witness=(m, k))
    return report


@dataclass
class SenderCounterexample:
    found: bool
    candidates: int
    mechanism: FiniteMechanism | None = None
    post: FiniteMechanism | None = None
    exp_eps: Fraction | None = None
    eps: float | None = None
    delta: Fraction | None = None
    chained_delta: Fraction | None = None

    def to_dict(self) -> dict:
        if not self.found:
            return {"found": False, "candidates": self.candidates}
        return {
            "found": True,
            "candidates": self.candidates,
            "eps": self.eps,
            "exp_eps": str(self.exp_eps),
            "delta": str(self.delta),
            "chained_delta": str(self.chained_delta),
            "mechanism": [[str(v) for v in row] for row in self.mechanism.kernel],
            "post": [[str(v) for v in row] for row in self.post.kernel],
        }


def _random_stochastic_ints(rng, shape, denominator):
    w = rng.integers(0, denominator + 1, size=shape)
    zero = w.sum(axis=-1) == 0
    w[zero, ..., 0] = 1
    return w


def search_sender_postprocessing_counterexample(
    seed: int = 0,
    budget: int = 1_000_000,
    max_universe: int = 3,
    max_alphabet: int = 4,
    max_post_alphabet: int = 4,
    exp_eps_choices: Sequence = (2, 3),
    denominator: int = 6,
    fixed_post: FiniteMechanism | None = None,
    batch: int = 2048,
) -> SenderCounterexample:
    """Random search for ``(M, K)`` where ``M`` is ``(eps, delta)``-PDP but
    the chained release ``MK`` is not.

    Candidates have rational entries with small denominators; float screening
    runs through the enumeration kernels and any hit is re-verified exactly
    with :func:`certify_pdp` on fraction kernels. Neighbours are all pairs.
    """
    rng = np.random.default_rng(seed)
    tried = 0
    while tried < budget:
        u = int(rng.integers(2, max_universe + 1))
        if fixed_post is not None:
            a, c = len(fixed_post.universe), len(fixed_post.alphabet)
        else:
            a = int(rng.integers(2, max_alphabet + 1))
            c = int(rng.integers(2, max_post_alphabet + 1))
        exp_eps = Fraction(exp_eps_choices[int(rng.integers(len(exp_eps_choices)))])
        size = min(batch, budget - tried)
        wm = _random_stochastic_ints(rng, (size, u, a), denominator)
        ms = wm / wm.sum(axis=-1, keepdims=True)
        if fixed_post is not None:
            kf = np.asarray(fixed_post.kernel, dtype=float)
            wk = None
            ks = np.broadcast_to(kf, (size, a, c)).copy()
        else:
            wk = _random_stochastic_ints(rng, (size, a, c), denominator)
            ks = wk / wk.sum(axis=-1, keepdims=True)
        gaps = kernels.batch_chain_pdp(np.ascontiguousarray(ms), np.ascontiguousarray(ks), float(exp_eps), BOUNDARY_RTOL)
        for b in np.flatnonzero(gaps[:, 1] > gaps[:, 0] + 1e-9):
            m_exact = FiniteMechanism(
                tuple(range(u)), tuple(range(a)), [[Fraction(int(v), int(r.sum())) for v in r] for r in wm[b]]
            )
            if fixed_post is not None:
                k_exact = fixed_post
            else:
                k_exact = FiniteMechanism(
                    tuple(range(a)), tuple(range(c)), [[Fraction(int(v), int(r.sum())) for v in r] for r in wk[b]]
                )
            neighbors = complete_neighbors(m_exact.universe)
            base = certify_pdp(m_exact, neighbors, exp_eps=exp_eps)
            post = certify_pdp(chain(m_exact, k_exact), neighbors, exp_eps=exp_eps)
            if base.exact and post.exact and post.attained_delta > base.attained_delta:
                return SenderCounterexample(
                    True,
                    tried + int(b) + 1,
                    m_exact,
                    k_exact,
                    exp_eps,
                    math.log(exp_eps),
                    base.attained_delta,
                    post.attained_delta,
                )
        tried += size
    return SenderCounterexample(False, tried)


# --------------------------------------------------------------------------
# Average mechanism under the Gaussian class
# --------------------------------------------------------------------------


def average_gaussian_delta_reference(prior: GaussianBelief, x) -> np.ndarray:
    """Per-coordinate relative DSS of releasing the average, via conditioning."""
    x = np.asarray(x, dtype=float)
    posterior = gaussian_condition_on_average(prior, AVERAGE(x))
    out = []
    for i in range(prior.dim):
        rule = MarginalDSS(i)
        out.append(xsub(rule.score(prior, x), rule.score(posterior, x)))
    return np.array(out)


@dataclass
class AverageReport:
    verdict: bool
    bound: float
    kappa: float
    max_delta: float
    violations: int
    samples: int
    seed: int
    slack_quantiles: dict
    interval: tuple

    @property
    def status(self) -> str:
        return "supported" if self.verdict else "refuted"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "status": self.status,
            "bound": self.bound,
            "kappa": self.kappa,
            "max_delta": self.max_delta,
            "violations": self.violations,
            "samples": self.samples,
            "seed": self.seed,
            "slack_quantiles": self.slack_quantiles,
            "interval": list(self.interval),
            "method": "monte-carlo",
        }


def _average_run(spec: GaussianClassSpec, samples: int, seed: int, kappa: float, coords=None):
    means, covs = sample_gaussian_class_arrays(spec, seed, samples)
    deltas = np.asarray(kernels.average_gaussian_deltas(np.ascontiguousarray(means), np.ascontiguousarray(covs), spec.x))
    if coords is not None:
        deltas = deltas[:, list(coords)]
    worst = deltas.max(axis=1)
    violations = int(np.sum(worst > kappa))
    slack = kappa - worst
    quantiles = {str(q): float(np.quantile(slack, q)) for q in (0.0, 0.01, 0.5, 0.99, 1.0)}
    return deltas, violations, quantiles


def certify_average_gaussian(spec: GaussianClassSpec, samples: int = 10_000, seed: int = 0) -> AverageReport:
    """Monte Carlo check of ``Delta_i <= r1 + log r2`` for the noiseless average.

    Every sampled class member and every coordinate is checked with the
    closed-form conditioned Gaussian; a 1e-8 slack absorbs rounding.
    """
    if samples < 1:
        raise PreconditionError("samples must be positive")
    bound = spec.bound
    deltas, violations, quantiles = _average_run(spec, samples, seed, bound + AVERAGE_BOUND_TOL)
    return AverageReport(
        violations == 0,
        bound,
        bound + AVERAGE_BOUND_TOL,
        float(deltas.max()),
        violations,
        samples,
        seed,
        quantiles,
        wilson_interval(samples - violations, samples),
    )


def _certify_average(cls: GaussianClass, spec: GuaranteeSpec) -> CertificationReport:
    coords = []
    for rule in spec.scores:
        if not isinstance(rule, MarginalDSS):
            raise UnsupportedPriorClass("the Gaussian class is supported with marginal DSS rules only")
        if rule.i >= cls.spec.n:
            raise PreconditionError(f"coordinate {rule.i} out of range for n={cls.spec.n}")
        coords.append(rule.i)
    kappa = spec.kappa + delta_tol(spec.kappa)
    deltas, violations, _ = _average_run(cls.spec, cls.samples, cls.seed, kappa, coords)
    ok = deltas <= kappa
    attained = float(ok.all(axis=1).mean())
    verdict = attained >= 1 - spec.delta - PROB_TOL
    witness = None
    if not verdict:
        b, j = np.argwhere(~ok)[0]
        witness = Witness(spec.scores[j].name, cls.spec.x.tolist(), f"sampled member #{int(b)} (seed {cls.seed})", (AVERAGE(cls.spec.x),))
    hits = int(ok.all(axis=1).sum())
    return CertificationReport(
        verdict,
        attained,
        spec.kappa,
        spec.delta,
        "monte-carlo",
        witness,
        samples=cls.samples,
        seed=cls.seed,
        interval=wilson_interval(hits, cls.samples),
    )
