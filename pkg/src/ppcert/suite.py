"""Randomized property battery over every guarantee the library checks.

Each ``check_*`` function draws its instances from a seeded generator, runs
the corresponding library check and returns a :class:`CheckResult`. A check
records violations instead of stopping at the first one so the summary
shows how many instances failed.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .beliefs import (
    FiniteBelief,
    GaussianBelief,
    GaussianClassSpec,
    average_conditioning_terms,
    correlation_decompose,
    gaussian_condition_on_average,
)
from .certify import (
    ExplicitFinite,
    GuaranteeSpec,
    NeighborTwoPoint,
    certify_average_gaussian,
    certify_pp,
    check_composition,
    check_pdp_pp_equivalence,
    check_receiver_postprocessing,
    search_sender_postprocessing_counterexample,
    second_stage_slice,
)
from .errors import PropertyViolation
from .mechanisms import (
    FiniteMechanism,
    NeighborRelation,
    complete_neighbors,
    randomized_response,
)
from .scores import (
    Interval,
    MarginalDSS,
    NegLogProb,
    PrivacyFunction,
    loss_from_score,
    propriety_check,
    score_from_loss,
    worst_case_loss_check,
)

EPS_GRID = (0.1, 0.5, 1.0, math.log(3), 2.0)
DELTA_GRID = (0.0, 0.05, 0.1, 0.25, 0.5)
AVERAGE_N = tuple(range(2, 11))
AVERAGE_R1 = (0.5, 1.0, 2.0)
AVERAGE_R2 = (2.0, 5.0, 10.0)


@dataclass
class CheckResult:
    name: str
    instances: int
    violations: int
    seconds: float
    detail: dict = field(default_factory=dict)
    worst: object = None

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.instances > 0

    def row(self) -> dict:
        return {
            "check": self.name,
            "passed": self.passed,
            "instances": self.instances,
            "violations": self.violations,
            "seconds": round(self.seconds, 3),
            **self.detail,
        }


@dataclass
class SuiteResult:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self) -> str:
        header = f"{'check':<28}{'result':<8}{'instances':>10}{'violations':>12}{'seconds':>10}"
        lines = [header, "-" * len(header)]
        for c in self.checks:
            lines.append(
                f"{c.name:<28}{'PASS' if c.passed else 'FAIL':<8}{c.instances:>10}{c.violations:>12}{c.seconds:>10.2f}"
            )
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# Random instance generators
# --------------------------------------------------------------------------


def random_belief(rng, universe, max_support=None, allow_zeros=True) -> FiniteBelief:
    """Dirichlet weights on a random subset of ``universe``."""
    universe = tuple(universe)
    k = len(universe) if max_support is None else min(max_support, len(universe))
    size = int(rng.integers(1, k + 1))
    chosen = sorted(rng.choice(len(universe), size=size, replace=False))
    probs = np.zeros(len(universe))
    probs[chosen] = rng.dirichlet(np.full(size, float(rng.choice([0.3, 1.0, 3.0]))))
    probs = np.maximum(probs, 0.0)
    probs[chosen] = np.maximum(probs[chosen], 1e-9)
    probs /= probs.sum()
    if allow_zeros:
        return FiniteBelief(universe, tuple(probs))
    return FiniteBelief(tuple(universe[i] for i in chosen), tuple(probs[chosen] / probs[chosen].sum()))


def random_kernel(rng, rows: int, cols: int, zero_rate: float = 0.0) -> np.ndarray:
    k = rng.dirichlet(np.ones(cols), size=rows)
    if zero_rate > 0:
        mask = rng.random((rows, cols)) < zero_rate
        for r in range(rows):
            if mask[r].all():
                mask[r, int(rng.integers(cols))] = False
        k = np.where(mask, 0.0, k)
        k /= k.sum(axis=1, keepdims=True)
    return k


def random_mechanism(rng, max_universe=4, max_alphabet=5, zero_rate=0.0) -> FiniteMechanism:
    u = int(rng.integers(2, max_universe + 1))
    a = int(rng.integers(2, max_alphabet + 1))
    return FiniteMechanism(tuple(range(u)), tuple(range(a)), random_kernel(rng, u, a, zero_rate))


def has_structural_zero(mech: FiniteMechanism, neighbors: NeighborRelation) -> bool:
    """Some output has positive mass at ``x`` and zero mass at a neighbour."""
    for x, y in neighbors.ordered_pairs(mech.universe):
        if any(a > 0 and b == 0 for a, b in zip(mech.row(x), mech.row(y))):
            return True
    return False


def random_neighbors(rng, universe) -> NeighborRelation:
    pairs = list(itertools.combinations(universe, 2))
    if rng.random() < 0.5:
        return NeighborRelation.from_pairs(pairs)
    keep = [p for p in pairs if rng.random() < 0.6] or [pairs[int(rng.integers(len(pairs)))]]
    return NeighborRelation.from_pairs(keep)


def random_privacy_function(rng, n_decisions, n_data) -> PrivacyFunction:
    table = rng.random((n_decisions, n_data))
    # coarse values make ties between decisions common
    if rng.random() < 0.3:
        table = np.round(table * 3) / 3
    return PrivacyFunction(tuple(range(n_decisions)), tuple(range(n_data)), table)


def restriction_closure(priors, universe) -> list:
    """All normalized restrictions of ``priors`` to subsets of ``universe``."""
    out = []
    for q in priors:
        for r in range(1, len(universe) + 1):
            for subset in itertools.combinations(universe, r):
                mass = [q.mass(z) for z in subset]
                total = sum(mass)
                if total <= 0:
                    continue
                cand = FiniteBelief(tuple(universe), tuple(q.mass(z) / total if z in subset else 0.0 for z in universe))
                if not any(cand.same_distribution(o, 1e-12) for o in out):
                    out.append(cand)
    return out


def partition_choice_kernel(rng, universe, partitions: int) -> tuple[list, np.ndarray]:
    """Pick partition ``k`` with probability ``pi_k`` and report the cell of ``x``.

    Posteriors under such kernels are restrictions of the prior to a cell.
    """
    pi = rng.dirichlet(np.ones(partitions))
    outputs, columns = [], []
    for k in range(partitions):
        labels = rng.integers(0, len(universe), size=len(universe))
        for cell in sorted(set(labels.tolist())):
            outputs.append((k, cell))
            columns.append([pi[k] if labels[i] == cell else 0.0 for i in range(len(universe))])
    return outputs, np.array(columns).T


# --------------------------------------------------------------------------
# Checks
# --------------------------------------------------------------------------


def _timed(name, fn):
    start = time.perf_counter()
    instances, violations, detail, worst = fn()
    return CheckResult(name, instances, violations, time.perf_counter() - start, detail, worst)


def check_propriety(seed: int = 0, count: int = 500, family_size: int = 10) -> CheckResult:
    """Propriety of the log, DSS and interval scores on random finite beliefs."""

    def run():
        rng = np.random.default_rng(seed)
        universe = tuple(float(v) for v in range(6))
        rules = (NegLogProb(), MarginalDSS(0), Interval(1.5))
        beliefs = [random_belief(rng, universe, 6) for _ in range(count)]
        violations, pairs, worst = 0, 0, None
        for rule in rules:
            pool = beliefs
            if isinstance(rule, MarginalDSS):
                pool = [b for b in beliefs if len(b.support) > 1]
            for start in range(0, len(pool), family_size):
                family = pool[start : start + family_size]
                try:
                    pairs += propriety_check(rule, family, tol=1e-9).pairs
                except PropertyViolation as exc:
                    violations += 1
                    worst = worst or (rule.name, exc.witness)
        return count, violations, {"pairs": pairs}, worst

    return _timed("propriety", run)


def check_score_generation(seed: int = 0, count: int = 500, family_size: int = 6) -> CheckResult:
    """Loss-generated scores are proper and loss/score round trips agree."""

    def run():
        rng = np.random.default_rng(seed)
        violations, worst = 0, None
        for _ in range(count):
            nd, nx = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            rho = random_privacy_function(rng, nd, nx)
            rule = score_from_loss(rho)
            family = [random_belief(rng, rho.universe) for _ in range(family_size)]
            try:
                propriety_check(rule, family, tol=1e-9, require_strict=False)
            except PropertyViolation as exc:
                violations += 1
                worst = worst or ("propriety", exc.witness)
                continue
            for base in (rule, NegLogProb()):
                back = score_from_loss(loss_from_score(base, family))
                gap = max(
                    _score_gap(back.score(p, x), base.score(p, x)) for p in family for x in rho.universe
                )
                if gap > 1e-9:
                    violations += 1
                    worst = worst or ("round trip", base.name, gap)
        return count, violations, {}, worst

    return _timed("score-generation", run)


def _score_gap(a, b) -> float:
    if a == b:
        return 0.0
    return abs(a - b)


def check_worst_case_loss(seed: int = 0, count: int = 500) -> CheckResult:
    """Receiver's own loss is worst for Sender on average."""

    def run():
        rng = np.random.default_rng(seed)
        violations, worst, strict = 0, None, 0
        for _ in range(count):
            nd, nx = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            rho = random_privacy_function(rng, nd, nx)
            alt = random_privacy_function(rng, nd, nx)
            p = random_belief(rng, rho.universe)
            try:
                strict += worst_case_loss_check(rho, [alt], [p], tol=1e-12).strict_count
            except PropertyViolation as exc:
                violations += 1
                worst = worst or exc.witness
        return count, violations, {"strict": strict}, worst

    return _timed("worst-case-loss", run)


def check_equivalence(seed: int = 0, count: int = 500, min_structural: int = 50) -> CheckResult:
    """PDP and two-point PP verdicts agree over an (eps, delta) grid."""

    def run():
        rng = np.random.default_rng(seed)
        violations, structural, worst = 0, 0, None
        for i in range(count):
            zero_rate = 0.3 if i % 4 == 0 else 0.0
            mech = random_mechanism(rng, 4, 5, zero_rate)
            neighbors = random_neighbors(rng, mech.universe)
            structural += has_structural_zero(mech, neighbors)
            for eps in EPS_GRID:
                for delta in DELTA_GRID:
                    try:
                        check_pdp_pp_equivalence(mech, neighbors, eps, delta)
                    except PropertyViolation as exc:
                        violations += 1
                        worst = worst or exc.witness
        if structural < min_structural:
            violations += 1
        return count, violations, {"structural_zero_mechanisms": structural, "grid": len(EPS_GRID) * len(DELTA_GRID)}, worst

    return _timed("pdp-pp-equivalence", run)


def random_conjugate_instance(rng):
    """Two partition-choice stages and a restriction-closed prior class."""
    u = int(rng.integers(2, 5))
    universe = tuple(range(u))
    outs1, k1 = partition_choice_kernel(rng, universe, int(rng.integers(1, 3)))
    m1 = FiniteMechanism(universe, tuple(outs1), k1)
    stage2 = {}
    outs2 = [(k, c) for k in range(2) for c in range(u)]
    rows, row_ids = [], []
    for t1 in m1.alphabet:
        o, k = partition_choice_kernel(rng, universe, 2)
        stage2[t1] = (o, k)
    for x in universe:
        for t1 in m1.alphabet:
            o, k = stage2[t1]
            row = np.zeros(len(outs2))
            for j, t in enumerate(o):
                row[outs2.index(t)] = k[x, j]
            rows.append(row)
            row_ids.append((x, t1))
    m2 = FiniteMechanism(tuple(row_ids), tuple(outs2), np.array(rows))
    base = [random_belief(rng, universe) for _ in range(int(rng.integers(1, 3)))]
    closure = restriction_closure(base, universe)
    cls = ExplicitFinite(per_dataset={x: tuple(q for q in closure if q.mass(x) > 0) for x in universe})
    return m1, m2, cls


def _budget_with_mass(rng, mechs, rules, cls, floor=0.05):
    """Random kappa, raised until every mechanism keeps tail mass ``floor``."""
    kappa = float(rng.uniform(0, 2))
    while True:
        attained = min(certify_pp(m, GuaranteeSpec(rules, cls, kappa, 0.0)).attained for m in mechs)
        if attained >= floor:
            return kappa, attained
        kappa += 1.0


def check_composition_bound(seed: int = 0, count: int = 200) -> CheckResult:
    """Composed guarantees hold at the summed budget on conjugate instances."""

    def run():
        rng = np.random.default_rng(seed)
        violations, worst, premises = 0, None, 0
        for _ in range(count):
            m1, m2, cls = random_conjugate_instance(rng)
            rules = (NegLogProb(),) if rng.random() < 0.5 else (NegLogProb(), Interval(1.0))
            slices = [second_stage_slice(m1, m2, t1, "pair") for t1 in m1.alphabet]
            k1, a1 = _budget_with_mass(rng, [m1], rules, cls)
            k2, a2 = _budget_with_mass(rng, slices, rules, cls)
            # the tightest delta each premise allows
            d1, d2 = 1 - a1, 1 - a2
            try:
                rep = check_composition(m1, m2, GuaranteeSpec(rules, cls, k1, d1), GuaranteeSpec(rules, cls, k2, d2), "pair")
                premises += rep.premises
            except PropertyViolation as exc:
                violations += 1
                worst = worst or exc.witness
        # two independent randomized responses at the doubled budget
        eps = math.log(3)
        rr = randomized_response(eps, 2)
        cls = NeighborTwoPoint(complete_neighbors(rr.universe))
        spec = GuaranteeSpec((NegLogProb(),), cls, eps, 0.0)
        rep = check_composition(rr, rr, spec, spec, "dataset")
        rr_ok = rep.premises and rep.composed.verdict
        violations += not rr_ok
        return count + 1, violations, {"premises_held": premises, "rr_pair_passes": bool(rr_ok)}, worst

    return _timed("composition", run)


def check_receiver_post(seed: int = 0, count: int = 200) -> CheckResult:
    """Relative-score multisets survive data-independent post-processing."""

    def run():
        rng = np.random.default_rng(seed)
        violations, worst, comparisons = 0, None, 0
        for i in range(count):
            m = random_mechanism(rng, 4, 4, 0.2 if i % 3 == 0 else 0.0)
            c = int(rng.integers(2, 4))
            k = FiniteMechanism(m.alphabet, tuple(f"s{j}" for j in range(c)), random_kernel(rng, len(m.alphabet), c, 0.2))
            rules = (NegLogProb(), Interval(1.0))
            if i % 2 == 0:
                cls = ExplicitFinite(tuple(FiniteBelief(m.universe, tuple(rng.dirichlet(np.ones(len(m.universe))))) for _ in range(4)))
            else:
                cls = NeighborTwoPoint(complete_neighbors(m.universe), (1e-3, 0.1, 0.5, 0.9), truth_supported_only=True)
            spec = GuaranteeSpec(rules, cls, float(rng.uniform(0, 2)), float(rng.choice([0.0, 0.1, 0.3])))
            try:
                comparisons += check_receiver_postprocessing(m, k, spec).comparisons
            except PropertyViolation as exc:
                violations += 1
                worst = worst or exc.witness
        return count, violations, {"comparisons": comparisons}, worst

    return _timed("receiver-postprocessing", run)


def check_sender_post(seed: int = 0, budget: int = 1_000_000) -> CheckResult:
    """A counterexample to sender post-processing exists and verifies exactly."""

    def run():
        found = search_sender_postprocessing_counterexample(seed=seed, budget=budget)
        detail = {"candidates": found.candidates}
        if found.found:
            detail.update(exp_eps=str(found.exp_eps), delta=str(found.delta), chained_delta=str(found.chained_delta))
        return 1, 0 if found.found else 1, detail, found

    return _timed("sender-postprocessing", run)


def check_average_bound(seed: int = 0, samples: int = 10_000, ns=AVERAGE_N, r1s=AVERAGE_R1, r2s=AVERAGE_R2) -> CheckResult:
    """Sampled Gaussian class members never exceed ``r1 + log r2``."""

    def run():
        rng = np.random.default_rng(seed)
        violations, configs, max_ratio = 0, 0, -math.inf
        for n, r1, r2 in itertools.product(ns, r1s, r2s):
            x = rng.normal(size=n)
            rep = certify_average_gaussian(GaussianClassSpec(r1, r2, x), samples, int(rng.integers(2**63)))
            configs += 1
            violations += rep.violations
            max_ratio = max(max_ratio, rep.max_delta - rep.bound)
        return configs * samples, violations, {"configs": configs, "max_excess": max_ratio}, None

    return _timed("average-bound", run)


def check_average_inequalities(seed: int = 0, count: int = 1000) -> CheckResult:
    """The two variance inequalities behind the average bound, on random PSD matrices."""

    def run():
        rng = np.random.default_rng(seed)
        violations, worst = 0, None
        for _ in range(count):
            n = int(rng.integers(2, 9))
            a = rng.normal(size=(n, n + int(rng.integers(0, 4))))
            cov = a @ a.T + 1e-3 * np.eye(n)
            v, v_bar = average_conditioning_terms(cov)
            dec = correlation_decompose(cov)
            share = dec.sigma**2 / np.sum(dec.sigma**2)
            first = v_bar - v**2 >= -1e-12 * max(1.0, v_bar)
            second = 1 - v**2 / v_bar >= dec.lambda_min / dec.lambda_max * (1 - share) - 1e-12
            if not (np.all(first) and np.all(second)):
                violations += 1
                worst = worst or cov
        return count, violations, {}, worst

    return _timed("average-inequalities", run)


def worked_average_example() -> float:
    """Two coordinates, standard prior, truth (1, 1): returns the first relative DSS."""
    prior = GaussianBelief(np.zeros(2), np.eye(2))
    x = np.array([1.0, 1.0])
    post = gaussian_condition_on_average(prior, 1.0)
    rule = MarginalDSS(0)
    return rule.score(prior, x) - rule.score(post, x)


def run_suite(seed: int = 0, samples: int = 10_000, budget: int = 1_000_000) -> SuiteResult:
    return SuiteResult(
        [
            check_propriety(seed),
            check_score_generation(seed),
            check_worst_case_loss(seed),
            check_equivalence(seed),
            check_composition_bound(seed),
            check_receiver_post(seed),
            check_sender_post(seed, budget),
            check_average_bound(seed, samples),
            check_average_inequalities(seed),
        ]
    )


__all__ = [
    "CheckResult",
    "SuiteResult",
    "run_suite",
    "check_propriety",
    "check_score_generation",
    "check_worst_case_loss",
    "check_equivalence",
    "check_composition_bound",
    "check_receiver_post",
    "check_sender_post",
    "check_average_bound",
    "check_average_inequalities",
    "worked_average_example",
    "random_belief",
    "random_mechanism",
    "random_kernel",
    "has_structural_zero",
    "restriction_closure",
    "partition_choice_kernel",
    "random_conjugate_instance",
]
