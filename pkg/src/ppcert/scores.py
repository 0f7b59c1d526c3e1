"""Privacy functions, Bayes acts and the proper scoring rules built from them.

All scores are negatively orientated for the Receiver: lower means the
belief predicts the true dataset better. Values are extended reals (see
:mod:`ppcert.xreal`).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from .beliefs import FiniteBelief, GaussianBelief
from .errors import IndexMismatch, PreconditionError, PropertyViolation, UndefinedMoments
from .xreal import INF, xexpect, xsub

TIE_TOL = 1e-12


# --------------------------------------------------------------------------
# Privacy functions and Bayes acts
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PrivacyFunction:
    """Tabulated ``rho(decision, dataset)`` over finite decisions.

    ``decision_beliefs`` is set when the decisions are themselves beliefs
    (the decision problem induced by a scoring rule); Bayes acts then
    prefer the belief being evaluated whenever it is among the minimizers.
    """

    decisions: tuple
    universe: tuple
    table: np.ndarray
    decision_beliefs: tuple | None = None

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        decisions, universe = tuple(self.decisions), tuple(self.universe)
        if table.shape != (len(decisions), len(universe)):
            raise IndexMismatch(f"table shape {table.shape} != ({len(decisions)}, {len(universe)})")
        if not decisions:
            raise PreconditionError("decision space must be non-empty")
        if np.isnan(table).any():
            raise PreconditionError("privacy function table contains NaN")
        table.setflags(write=False)
        object.__setattr__(self, "decisions", decisions)
        object.__setattr__(self, "universe", universe)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "_col", {z: j for j, z in enumerate(universe)})

    def column(self, x: Hashable) -> int:
        try:
            return self._col[x]
        except KeyError:
            raise IndexMismatch(f"dataset {x!r} is not in the privacy function's universe") from None

    def rho(self, d_index: int, x: Hashable) -> float:
        return float(self.table[d_index, self.column(x)])

    def expected_losses(self, belief: FiniteBelief) -> np.ndarray:
        cols, probs = [], []
        for z, p in zip(belief.universe, belief.probs):
            if p > 0:
                cols.append(self.column(z))
                probs.append(float(p))
        return np.array([xexpect(probs, self.table[d, cols]) for d in range(len(self.decisions))])

    def shifted(self, offsets: Sequence[float]) -> "PrivacyFunction":
        """Add a dataset-dependent constant ``c(x)`` to every decision."""
        return PrivacyFunction(self.decisions, self.universe, self.table + np.asarray(offsets, float)[None, :])


def bayes_act_index(rho: PrivacyFunction, belief: FiniteBelief, prefer: int | None = None) -> int:
    """Index of the decision minimizing expected loss; ties go to the lowest
    index unless ``prefer`` is itself a minimizer."""
    losses = rho.expected_losses(belief)
    best = float(np.min(losses))
    slack = TIE_TOL * max(1.0, abs(best)) if math.isfinite(best) else 0.0
    minimizers = np.flatnonzero(losses <= best + slack)
    if prefer is not None and prefer in minimizers:
        return int(prefer)
    return int(minimizers[0])


def bayes_act(rho: PrivacyFunction, belief: FiniteBelief):
    """Receiver's optimal decision id under ``belief``."""
    return rho.decisions[bayes_act_index(rho, belief)]


def mode_privacy_function(universe: Sequence) -> PrivacyFunction:
    """0/1 hit-or-miss loss with the datasets themselves as decisions."""
    universe = tuple(universe)
    return PrivacyFunction(universe, universe, 1.0 - np.eye(len(universe)))


def interval_privacy_function(universe: Sequence[float], s: float, centers: Sequence[float]) -> PrivacyFunction:
    """Interval loss restricted to length-``s`` windows at ``centers``."""
    universe = tuple(universe)
    decisions = tuple((c - s / 2, c + s / 2) for c in centers)
    table = np.array([[0.0 if _in_window(x, d) else 1.0 for x in universe] for d in decisions])
    return PrivacyFunction(decisions, universe, table)


# --------------------------------------------------------------------------
# Scoring rules
# --------------------------------------------------------------------------


class ScoringRule:
    """Base class; subclasses implement :meth:`score`."""

    name = "score"

    def score(self, belief, x) -> float:
        raise NotImplementedError

    def expected(self, predict, truth) -> float:
        if isinstance(truth, FiniteBelief):
            values, probs = [], []
            for z, p in zip(truth.universe, truth.probs):
                if p > 0:
                    probs.append(float(p))
                    values.append(self.score(predict, z))
            return xexpect(probs, values)
        raise PreconditionError(f"{self.name}: expected score needs a finite truth belief")

    def __repr__(self):
        return self.name


def _window_tol(s: float) -> float:
    return 1e-12 * max(1.0, abs(s))


def _in_window(x, window) -> bool:
    lo, hi = window
    tol = _window_tol(hi - lo)
    return lo - tol <= float(x) <= hi + tol


def interval_window(belief: FiniteBelief, s: float) -> tuple[float, float]:
    """Length-``s`` window of maximal belief mass.

    Candidates start at each support point and extend to every support point
    within distance ``s``; the chosen window is centred on the covered
    points. Ties go to the leftmost candidate.
    """
    pts = sorted((float(z), float(p)) for z, p in zip(belief.universe, belief.probs) if p > 0)
    if not pts:
        raise PreconditionError("belief has empty support")
    xs = [a for a, _ in pts]
    cum = np.concatenate([[0.0], np.cumsum([p for _, p in pts])])
    tol = _window_tol(s)
    best, best_run, k = -1.0, (0, 0), 0
    for j in range(len(xs)):
        k = max(k, j)
        while k + 1 < len(xs) and xs[k + 1] - xs[j] <= s + tol:
            k += 1
        mass = cum[k + 1] - cum[j]
        if mass > best + TIE_TOL:
            best, best_run = mass, (j, k)
    j, k = best_run
    center = 0.5 * (xs[j] + xs[k])
    return center - s / 2, center + s / 2


@dataclass(frozen=True, repr=False)
class Interval(ScoringRule):
    """0 when the truth lies in the Receiver's best length-``s`` window."""

    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise PreconditionError("interval length must be positive")

    @property
    def name(self):
        return f"interval(s={self.s:g})"

    def score(self, belief, x) -> float:
        if not isinstance(belief, FiniteBelief):
            raise PreconditionError("interval score is defined here for finite beliefs only")
        return 0.0 if _in_window(x, interval_window(belief, self.s)) else 1.0


@dataclass(frozen=True, repr=False)
class NegLogProb(ScoringRule):
    """``-log P({x})``, infinite when ``x`` carries no mass."""

    name = "neglogprob"

    def score(self, belief, x) -> float:
        if not isinstance(belief, FiniteBelief):
            raise PreconditionError("discrete log score needs a finite belief")
        p = belief.mass(x)
        return -math.log(p) if p > 0 else INF


def _marginal_moments(belief, i: int) -> tuple[float, float]:
    if isinstance(belief, GaussianBelief):
        return belief.marginal(i)
    if isinstance(belief, FiniteBelief):
        probs, vals = [], []
        for z, p in zip(belief.universe, belief.probs):
            if p > 0:
                probs.append(float(p))
                vals.append(float(np.atleast_1d(z)[i]))
        probs, vals = np.array(probs), np.array(vals)
        mean = float(probs @ vals)
        return mean, float(probs @ (vals - mean) ** 2)
    raise PreconditionError(f"unsupported belief type {type(belief).__name__}")


@dataclass(frozen=True, repr=False)
class MarginalDSS(ScoringRule):
    """Dawid-Sebastiani score of coordinate ``i`` (0-based)."""

    i: int

    def __post_init__(self):
        if self.i < 0:
            raise PreconditionError("coordinate index must be nonnegative")

    @property
    def name(self):
        return f"dss(i={self.i})"

    def moments(self, belief) -> tuple[float, float]:
        mean, var = _marginal_moments(belief, self.i)
        if not var > 0:
            raise UndefinedMoments(f"marginal variance of coordinate {self.i} is {var!r}")
        return mean, var

    def score(self, belief, x) -> float:
        mean, var = self.moments(belief)
        xi = float(np.atleast_1d(np.asarray(x, dtype=float))[self.i])
        return math.log(var) + (xi - mean) ** 2 / var

    def expected(self, predict, truth) -> float:
        if isinstance(truth, GaussianBelief):
            mean_p, var_p = self.moments(predict)
            mean_q, var_q = _marginal_moments(truth, self.i)
            return math.log(var_p) + (var_q + (mean_q - mean_p) ** 2) / var_p
        return super().expected(predict, truth)


@dataclass(frozen=True, eq=False, repr=False)
class CustomScore(ScoringRule):
    """Wraps an arbitrary ``fn(belief, x)``; used to probe improper rules."""

    fn: Callable
    label: str = "custom"

    @property
    def name(self):
        return self.label

    def score(self, belief, x) -> float:
        return float(self.fn(belief, x))


@dataclass(frozen=True, eq=False, repr=False)
class LossScore(ScoringRule):
    """Score generated by a decision problem: ``S(P, x) = rho(d^P, x)``."""

    rho: PrivacyFunction

    @property
    def name(self):
        return "loss-score"

    def act(self, belief: FiniteBelief) -> int:
        prefer = None
        if self.rho.decision_beliefs is not None:
            for j, d in enumerate(self.rho.decision_beliefs):
                if isinstance(d, FiniteBelief) and d.same_distribution(belief):
                    prefer = j
                    break
        return bayes_act_index(self.rho, belief, prefer=prefer)

    def score(self, belief, x) -> float:
        return self.rho.rho(self.act(belief), x)


def score_from_loss(rho: PrivacyFunction) -> LossScore:
    return LossScore(rho)


def loss_from_score(rule: ScoringRule, family: Sequence[FiniteBelief]) -> PrivacyFunction:
    """Decision problem whose decisions are the beliefs in ``family`` and
    whose loss is the score itself."""
    family = tuple(family)
    universe = []
    for b in family:
        for z in b.universe:
            if z not in universe:
                universe.append(z)
    table = np.array([[rule.score(b, z) for z in universe] for b in family])
    return PrivacyFunction(tuple(range(len(family))), tuple(universe), table, decision_beliefs=family)


def evaluate(rule: ScoringRule, belief, dataset) -> float:
    return rule.score(belief, dataset)


def expected_score(rule: ScoringRule, predict, truth) -> float:
    """``E_{X ~ truth}[S(predict, X)]`` with ``0 * inf = 0``."""
    return rule.expected(predict, truth)


# --------------------------------------------------------------------------
# Property checks
# --------------------------------------------------------------------------


@dataclass
class ProprietyReport:
    rule: str
    pairs: int
    proper: bool
    strict: bool
    min_gap: float
    witness: tuple | None = None


def _distance(p, q) -> float:
    if isinstance(p, FiniteBelief) and isinstance(q, FiniteBelief):
        return p.total_variation(q)
    if isinstance(p, GaussianBelief) and isinstance(q, GaussianBelief):
        return float(np.max(np.abs(p.mean - q.mean)) + np.max(np.abs(p.cov - q.cov)))
    return math.inf


def propriety_check(rule: ScoringRule, family: Sequence, tol: float = 1e-9, require_strict: bool | None = None) -> ProprietyReport:
    """Check ``S(Q, Q) <= S(P, Q) + tol`` over all ordered pairs.

    For the discrete log score strictness is checked quantitatively: the
    gap is the Kullback-Leibler divergence, which Pinsker's inequality
    bounds below by ``2 TV(P, Q)**2``. A gap below that (minus ``tol``) is
    a strictness violation.
    """
    family = list(family)
    if require_strict is None:
        require_strict = isinstance(rule, NegLogProb)
    self_scores = [rule.expected(q, q) for q in family]
    min_gap, strict, pairs = math.inf, True, 0
    for (ip, p), (iq, q) in itertools.product(enumerate(family), repeat=2):
        if ip == iq:
            continue
        pairs += 1
        gap = xsub(rule.expected(p, q), self_scores[iq])
        min_gap = min(min_gap, gap)
        if gap < -tol:
            raise PropertyViolation(
                f"{rule.name} is not proper: S(P,Q) - S(Q,Q) = {gap!r}", witness=(p, q)
            )
        dist = _distance(p, q)
        if dist > 0 and not gap > 0:
            strict = False
        if require_strict and isinstance(p, FiniteBelief) and gap < 2 * dist**2 - tol:
            raise PropertyViolation(
                f"{rule.name} fails strict propriety: gap {gap!r} below Pinsker bound {2 * dist**2!r}",
                witness=(p, q),
            )
    return ProprietyReport(rule.name, pairs, True, strict, min_gap)


@dataclass
class WorstCaseReport:
    checks: int
    strict_count: int
    max_gap: float


def worst_case_loss_check(
    rho: PrivacyFunction, alt_losses: Sequence[PrivacyFunction], beliefs: Sequence[FiniteBelief], tol: float = 1e-12
) -> WorstCaseReport:
    """Receiver using ``rho`` itself is worst for Sender on average.

    For every belief ``P`` and alternative loss ``l`` (on the same decisions
    and universe), ``E_P rho(d_rho^P) <= E_P rho(d_l^P) + tol``.
    """
    checks = strict = 0
    max_gap = 0.0
    for p in beliefs:
        own = rho.expected_losses(p)
        best = own[bayes_act_index(rho, p)]
        for alt in alt_losses:
            if alt.decisions != rho.decisions or alt.universe != rho.universe:
                raise IndexMismatch("alternative losses must share decisions and universe with rho")
            other = own[bayes_act_index(alt, p)]
            checks += 1
            gap = other - best
            if gap < -tol:
                raise PropertyViolation(f"alternative loss beats rho by {-gap!r}", witness=(p, alt))
            if gap > tol:
                strict += 1
            max_gap = max(max_gap, gap)
    return WorstCaseReport(checks, strict, max_gap)
