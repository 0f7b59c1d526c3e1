"""Receiver beliefs over datasets and their Bayes updates.

Two families are supported: finite discrete beliefs over an ordered
universe of hashable dataset ids, and multivariate Gaussian beliefs over
real vectors (possibly rank deficient after conditioning on the average).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np

from .errors import (
    DegenerateInput,
    PreconditionError,
    SamplingExhausted,
    SingularCorrelation,
    ZeroEvidence,
)

RANK_TOL = 1e-10
MEMBERSHIP_RTOL = 1e-12
NORMALIZATION_TOL = 1e-12


# --------------------------------------------------------------------------
# Finite beliefs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteBelief:
    """Discrete distribution over a finite, ordered universe of datasets.

    ``probs`` may hold floats or :class:`fractions.Fraction` values; exact
    inputs stay exact through :func:`posterior_update`.
    """

    universe: tuple
    probs: tuple

    def __post_init__(self):
        object.__setattr__(self, "universe", tuple(self.universe))
        object.__setattr__(self, "probs", tuple(self.probs))
        if len(self.universe) != len(self.probs):
            raise PreconditionError("universe and probs differ in length")
        if len(set(self.universe)) != len(self.universe):
            raise PreconditionError("universe identifiers must be distinct")
        if any(p < 0 for p in self.probs):
            raise PreconditionError("probabilities must be nonnegative")
        total = sum(self.probs)
        if abs(total - 1) > NORMALIZATION_TOL:
            raise PreconditionError(f"probabilities sum to {float(total)!r}, not 1")

    @classmethod
    def point_mass(cls, x: Hashable, universe: Sequence | None = None) -> "FiniteBelief":
        universe = tuple(universe) if universe is not None else (x,)
        return cls(universe, tuple(1.0 if z == x else 0.0 for z in universe))

    @classmethod
    def uniform(cls, universe: Sequence) -> "FiniteBelief":
        universe = tuple(universe)
        return cls(universe, (1.0 / len(universe),) * len(universe))

    @property
    def is_exact(self) -> bool:
        return all(isinstance(p, (Fraction, int)) for p in self.probs)

    @property
    def support(self) -> tuple:
        return tuple(z for z, p in zip(self.universe, self.probs) if p > 0)

    def mass(self, x: Hashable):
        """Probability of ``x``; zero for ids outside the universe."""
        try:
            return self.probs[self.universe.index(x)]
        except ValueError:
            return 0.0

    def as_dict(self) -> dict:
        return dict(zip(self.universe, self.probs))

    def total_variation(self, other: "FiniteBelief") -> float:
        keys = set(self.universe) | set(other.universe)
        return 0.5 * sum(abs(float(self.mass(k)) - float(other.mass(k))) for k in keys)

    def same_distribution(self, other: "FiniteBelief", tol: float = 0.0) -> bool:
        """Equality as measures (zero-mass ids and ordering are ignored)."""
        if tol == 0.0:
            keys = set(self.support) | set(other.support)
            return all(self.mass(k) == other.mass(k) for k in keys)
        return self.total_variation(other) <= tol

    def describe(self) -> str:
        body = ", ".join(f"{z!r}: {float(p):.6g}" for z, p in zip(self.universe, self.probs))
        return "{" + body + "}"


@dataclass(frozen=True)
class TwoPointPrior:
    """Prior putting mass ``w`` on ``x`` and ``1 - w`` on ``x_prime``."""

    x: Hashable
    x_prime: Hashable
    w: float

    def __post_init__(self):
        if self.x == self.x_prime:
            raise PreconditionError("two-point prior needs distinct support points")
        if not 0 < self.w <= 1:
            raise PreconditionError(f"w must lie in (0, 1], got {self.w!r}")

    def to_finite(self) -> FiniteBelief:
        return FiniteBelief((self.x, self.x_prime), (self.w, 1 - self.w))


def posterior_update(prior: FiniteBelief, mech, output) -> FiniteBelief:
    """Bayes update of ``prior`` after observing ``output`` from ``mech``.

    The result lives on the prior's universe with probabilities proportional
    to ``prior(z) * m(z, output)``.
    """
    col = mech.output_index(output)
    weights = []
    for z, p in zip(prior.universe, prior.probs):
        if p == 0:
            weights.append(p * 0)
            continue
        weights.append(p * mech.kernel[mech.dataset_index(z), col])
    evidence = sum(weights)
    if evidence <= 0:
        raise ZeroEvidence(f"output {output!r} has zero marginal probability under the prior")
    if prior.is_exact and mech.is_exact:
        probs = tuple(Fraction(w) / evidence for w in weights)
    else:
        probs = tuple(float(w) / float(evidence) for w in weights)
    return FiniteBelief(prior.universe, probs)


# --------------------------------------------------------------------------
# Gaussian beliefs
# --------------------------------------------------------------------------


def _effective_rank(cov: np.ndarray, rank_tol: float = RANK_TOL) -> int:
    eig = np.linalg.eigvalsh(cov)
    top = max(float(eig[-1]), 0.0)
    if top == 0.0:
        return 0
    return int(np.sum(eig > rank_tol * top))


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Multivariate normal belief ``N(mean, cov)``.

    ``cov`` is stored in full even when singular; ``support_rank`` records
    the dimension of the affine subspace carrying the mass.
    """

    mean: np.ndarray
    cov: np.ndarray
    support_rank: int = field(default=-1)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise PreconditionError(f"covariance shape {cov.shape} does not match mean length {n}")
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0):
            raise PreconditionError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        eig = np.linalg.eigvalsh(cov)
        if eig[0] < -1e-10 * max(1.0, float(eig[-1])):
            raise PreconditionError(f"covariance has negative eigenvalue {eig[0]!r}")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "support_rank", _effective_rank(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def full_rank(self) -> bool:
        return self.support_rank == self.dim

    def marginal(self, i: int) -> tuple[float, float]:
        """Mean and variance of coordinate ``i`` (0-based)."""
        return float(self.mean[i]), float(self.cov[i, i])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draws via a symmetric square root, valid for singular ``cov``."""
        eig, vec = np.linalg.eigh(self.cov)
        root = vec * np.sqrt(np.clip(eig, 0.0, None))
        z = rng.standard_normal((size, self.dim))
        return self.mean + z @ root.T

    def describe(self) -> str:
        return f"N(mean={np.round(self.mean, 6).tolist()}, cov={np.round(self.cov, 6).tolist()})"


def average_conditioning_terms(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Return ``(v, v_bar)`` with ``v_i = (1/n) sum_j phi_ij sigma_j`` and
    ``v_bar = (1/n) sum_i sigma_i v_i`` (the variance of the average)."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    sigma = np.sqrt(np.diag(cov))
    phi = cov / np.outer(sigma, sigma)
    v = phi @ sigma / n
    return v, float(sigma @ v / n)


def gaussian_condition_on_average(prior: GaussianBelief, xbar: float) -> GaussianBelief:
    """Condition a full-rank Gaussian prior on the observed average ``xbar``.

    The posterior is supported on the hyperplane ``{z : mean(z) = xbar}``.
    """
    n = prior.dim
    if n < 2:
        raise PreconditionError("conditioning on the average needs n >= 2")
    if not prior.full_rank:
        raise PreconditionError("prior covariance must be full rank")
    u = np.full(n, 1.0 / n)
    sigma_u = prior.cov @ u
    var_avg = float(u @ sigma_u)
    top = float(np.linalg.eigvalsh(prior.cov)[-1])
    if var_avg <= RANK_TOL * top:
        raise DegenerateInput("the prior already determines the average")
    innovation = xbar - float(prior.mean.mean())
    mean = prior.mean + sigma_u * (innovation / var_avg)
    cov = prior.cov - np.outer(sigma_u, sigma_u) / var_avg
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


@dataclass(frozen=True, eq=False)
class CorrelationDecomposition:
    sigma: np.ndarray
    phi: np.ndarray
    lambda_max: float
    lambda_min: float
    cond: float


def correlation_decompose(cov) -> CorrelationDecomposition:
    """Split ``cov`` into marginal standard deviations and correlation."""
    cov = np.asarray(cov, dtype=float)
    diag = np.diag(cov)
    if np.any(diag <= 0):
        raise PreconditionError("covariance diagonal must be strictly positive")
    sigma = np.sqrt(diag)
    phi = cov / np.outer(sigma, sigma)
    phi = 0.5 * (phi + phi.T)
    np.fill_diagonal(phi, 1.0)
    eig = np.linalg.eigvalsh(phi)
    lam_min, lam_max = float(eig[0]), float(eig[-1])
    if lam_min <= RANK_TOL * lam_max:
        raise SingularCorrelation(f"smallest correlation eigenvalue {lam_min!r}; condition number is +inf")
    return CorrelationDecomposition(sigma, phi, lam_max, lam_min, lam_max / lam_min)


@dataclass(frozen=True, eq=False)
class GaussianClassSpec:
    """Parameters of the Gaussian prior class around the true dataset ``x``.

    A prior ``N(mu, Sigma)`` is a member when the squared standardized error
    of its average guess is at most ``r1`` and, for every coordinate,
    ``cond(Phi) <= r2 * (1 - sigma_i**2 / ||sigma||**2)``.
    """

    r1: float
    r2: float
    x: np.ndarray

    def __post_init__(self):
        if not self.r1 > 0:
            raise PreconditionError(f"r1 must be positive, got {self.r1!r}")
        if not self.r2 > 1:
            raise PreconditionError(f"r2 must exceed 1, got {self.r2!r}")
        x = np.array(self.x, dtype=float).reshape(-1)
        if x.shape[0] < 2:
            raise PreconditionError("the Gaussian class needs n >= 2")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def bound(self) -> float:
        """Privacy loss bound ``r1 + log r2`` of the average mechanism."""
        return self.r1 + math.log(self.r2)


@dataclass(frozen=True)
class ClassMembership:
    member: bool
    mean_statistic: float
    mean_slack: float
    cond: float
    corr_slacks: tuple

    def __bool__(self):
        return self.member


def _class_statistics(mean, cov, x, r1, r2):
    """Vectorized membership statistics for a batch of priors.

    ``mean`` is (B, n) and ``cov`` is (B, n, n). Returns the standardized
    mean error, condition numbers and the per-coordinate slack array.
    """
    n = x.shape[-1]
    var_avg = cov.sum(axis=(-2, -1)) / n**2
    err = (x.mean() - mean.mean(axis=-1)) ** 2 / var_avg
    var = np.diagonal(cov, axis1=-2, axis2=-1)
    sigma = np.sqrt(var)
    phi = cov / (sigma[..., :, None] * sigma[..., None, :])
    idx = np.arange(n)
    phi[..., idx, idx] = 1.0
    eig = np.linalg.eigvalsh(phi)
    cond = eig[..., -1] / eig[..., 0]
    cond = np.where(eig[..., 0] > RANK_TOL * eig[..., -1], cond, np.inf)
    share = var / var.sum(axis=-1, keepdims=True)
    corr_slack = r2 * (1.0 - share) - cond[..., None]
    return err, cond, corr_slack


def _member_mask(err, cond, corr_slack, r1, r2):
    ok_mean = err <= r1 * (1 + MEMBERSHIP_RTOL)
    ok_corr = np.all(corr_slack >= -MEMBERSHIP_RTOL * r2, axis=-1) & np.isfinite(cond)
    return ok_mean & ok_corr


def in_gaussian_class(prior: GaussianBelief, spec: GaussianClassSpec) -> ClassMembership:
    """Weak-inequality membership test with per-condition slack."""
    if not prior.full_rank:
        raise PreconditionError("class membership requires a full-rank prior")
    if prior.dim != spec.n:
        raise PreconditionError("prior dimension does not match the class dataset")
    correlation_decompose(prior.cov)
    err, cond, slack = _class_statistics(prior.mean[None], prior.cov[None].copy(), spec.x, spec.r1, spec.r2)
    member = bool(_member_mask(err, cond, slack, spec.r1, spec.r2)[0])
    return ClassMembership(
        member=member,
        mean_statistic=float(err[0]),
        mean_slack=float(spec.r1 - err[0]),
        cond=float(cond[0]),
        corr_slacks=tuple(float(s) for s in slack[0]),
    )


def _random_correlations(rng, count, n):
    g = rng.standard_normal((count, n, n + 1))
    a = g @ np.swapaxes(g, -1, -2)
    d = np.sqrt(np.diagonal(a, axis1=-2, axis2=-1))
    c = a / (d[..., :, None] * d[..., None, :])
    alpha = rng.uniform(0.0, 1.0, size=count)
    alpha[rng.uniform(size=count) < 0.2] = 0.0
    eye = np.eye(n)
    phi = (1 - alpha)[:, None, None] * eye + alpha[:, None, None] * c
    phi[..., np.arange(n), np.arange(n)] = 1.0
    return phi


def _propose_class_members(spec: GaussianClassSpec, rng: np.random.Generator, count: int):
    """One batch from the proposal; returns (mean, cov) arrays, unfiltered.

    Proposal: correlation ``(1 - a) I + a C`` with ``C`` a normalized
    Wishart draw and ``a`` uniform (an atom at 0), variance shares
    ``(1 - b) / n + b * Dirichlet(1)`` (an atom at ``b = 0``) scaled by a
    log-uniform total in ``[1e-2, 1e2]``, means scattered around the truth
    and shifted so the standardized average error is uniform on
    ``[-sqrt(r1), sqrt(r1)]``.
    """
    n = spec.n
    phi = _random_correlations(rng, count, n)
    beta = rng.uniform(0.0, 1.0, size=count)
    beta[rng.uniform(size=count) < 0.2] = 0.0
    share = (1 - beta)[:, None] / n + beta[:, None] * rng.dirichlet(np.ones(n), size=count)
    scale = np.exp(rng.uniform(math.log(1e-2), math.log(1e2), size=count))
    sigma = np.sqrt(share * (scale * n)[:, None])
    cov = phi * sigma[:, :, None] * sigma[:, None, :]
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    mean = spec.x + sigma * rng.standard_normal((count, n))
    var_avg = cov.sum(axis=(-2, -1)) / n**2
    target = rng.uniform(-1.0, 1.0, size=count) * math.sqrt(spec.r1) * np.sqrt(var_avg)
    mean = mean + (spec.x.mean() - target - mean.mean(axis=1))[:, None]
    return mean, cov


def sample_gaussian_class_arrays(
    spec: GaussianClassSpec, seed, count: int, max_attempts: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Rejection sampler returning ``(means, covs)`` of accepted members."""
    if count < 1:
        raise PreconditionError("count must be at least 1")
    rng = np.random.default_rng(seed)
    budget = max_attempts if max_attempts is not None else 200 * count + 10_000
    means, covs, drawn, kept = [], [], 0, 0
    while kept < count:
        if drawn >= budget:
            raise SamplingExhausted(f"accepted {kept} of {count} members after {drawn} proposals")
        batch = min(max(2 * (count - kept), 64), budget - drawn)
        mean, cov = _propose_class_members(spec, rng, batch)
        drawn += batch
        err, cond, slack = _class_statistics(mean, cov.copy(), spec.x, spec.r1, spec.r2)
        ok = _member_mask(err, cond, slack, spec.r1, spec.r2)
        means.append(mean[ok])
        covs.append(cov[ok])
        kept += int(ok.sum())
    return np.concatenate(means)[:count], np.concatenate(covs)[:count]


def sample_gaussian_class(spec: GaussianClassSpec, seed, count: int, max_attempts: int | None = None) -> list:
    """Draw ``count`` members of the class; deterministic given ``seed``.

    Monte Carlo statements built on these draws are relative to the
    proposal described in :func:`_propose_class_members`; the class itself
    carries no natural measure.
    """
    means, covs = sample_gaussian_class_arrays(spec, seed, count, max_attempts)
    return [GaussianBelief(m, c) for m, c in zip(means, covs)]
