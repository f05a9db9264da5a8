"""Head acceptors and head transducers.

Probabilistic head acceptor models (sampling, scoring, exact parsing),
recursive head transduction (decoding, pair scoring) and their parameter
estimation, each checked against brute-force enumeration on small inputs.
"""

from importlib.resources import files

from .analysis import NoParse, ParseResult, parse, parse_nbest
from .core import (
    EPS, LEFT, RIGHT, STOP, TRANSITION, AcceptorAction, CapacityError, ConstrainedTransducerModel,
    DataError, HeadAcceptor, HeadTransducer, ImpossibleDerivation, ModelFormatError,
    RelationalAcceptorModel, SamplingFailure, TransducerAction, TransductionModel, ValidationReport,
    Violation, renormalize, validate_acceptor, validate_model, validate_transducer,
)
from .generation import (
    OrderedDependencyTree, accepts, derivation_probability, enumerate_derivations,
    sample_derivation, sample_derivations, tree_to_string,
)
from .serialization import load_model, model_to_json, save_model
from .training import ExpectedCounts, em_train, estimate_acceptor_model, expected_counts
from .transduction import (
    EpsBudget, NoTranslation, PairedDerivation, TransductionResult, enumerate_transductions,
    score_pair, transduce,
)


def example_path(name: str):
    """Path of a bundled example file."""
    return files(__name__).joinpath("examples", name)


__all__ = [
    "AcceptorAction",
    "CapacityError",
    "ConstrainedTransducerModel",
    "DataError",
    "EPS",
    "EpsBudget",
    "ExpectedCounts",
    "HeadAcceptor",
    "HeadTransducer",
    "ImpossibleDerivation",
    "LEFT",
    "ModelFormatError",
    "NoParse",
    "NoTranslation",
    "OrderedDependencyTree",
    "PairedDerivation",
    "ParseResult",
    "RIGHT",
    "RelationalAcceptorModel",
    "STOP",
    "SamplingFailure",
    "TRANSITION",
    "TransducerAction",
    "TransductionModel",
    "TransductionResult",
    "ValidationReport",
    "Violation",
    "accepts",
    "derivation_probability",
    "em_train",
    "enumerate_derivations",
    "enumerate_transductions",
    "estimate_acceptor_model",
    "example_path",
    "expected_counts",
    "load_model",
    "model_to_json",
    "parse",
    "parse_nbest",
    "renormalize",
    "sample_derivation",
    "sample_derivations",
    "save_model",
    "score_pair",
    "transduce",
    "tree_to_string",
    "validate_acceptor",
    "validate_model",
    "validate_transducer",
]
