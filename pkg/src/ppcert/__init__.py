"""Persuasive-privacy certification for data-release mechanisms."""

__version__ = "0.1.0"

from .beliefs import (
    FiniteBelief,
    GaussianBelief,
    GaussianClassSpec,
    TwoPointPrior,
    gaussian_condition_on_average,
    in_gaussian_class,
    posterior_update,
    sample_gaussian_class,
)
from .certify import (
    ExplicitFinite,
    GaussianClass,
    GuaranteeSpec,
    NeighborTwoPoint,
    certify_average_gaussian,
    certify_pdp,
    certify_pp,
    check_composition,
    check_pdp_pp_equivalence,
    check_receiver_postprocessing,
    relative_score,
    search_sender_postprocessing_counterexample,
    tail_probability,
    tail_probability_mc,
)
from .errors import (
    ConjugacyViolation,
    EquivalenceViolation,
    ParseError,
    PPCertError,
    PreconditionError,
    PropertyViolation,
    StructuralViolation,
    ZeroEvidence,
)
from .mechanisms import (
    AVERAGE,
    FiniteMechanism,
    NeighborRelation,
    chain,
    complete_neighbors,
    hamming_neighbors,
    randomized_response,
    tensor,
    truncated_geometric,
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
