"""Exception hierarchy shared across the package."""
from __future__ import annotations


class FigclassError(Exception):
    """Base class for all errors raised by this package."""


# taxonomy
class EmptyConceptSet(FigclassError):
    pass


class DuplicateConcept(FigclassError):
    pass


class EmbeddingBackendError(FigclassError):
    pass


# prompts
class AspectMismatch(FigclassError):
    pass


class InvalidOptions(FigclassError):
    pass


class UnknownAspect(FigclassError):
    pass


class RomanRangeError(FigclassError):
    pass


class RomanParseError(FigclassError):
    pass


class InsufficientPool(FigclassError):
    pass


# backend
class BackendUnavailable(FigclassError):
    pass


class ProtocolError(FigclassError):
    pass


class LogprobsUnavailable(FigclassError):
    pass


class InvalidRequest(FigclassError):
    pass


# strategies
class NoDecision(FigclassError):
    pass


class InvalidK(FigclassError):
    pass


class ContextCapExceeded(FigclassError):
    pass


# matching
class ZeroVector(FigclassError):
    pass


class DimensionMismatch(FigclassError):
    pass


class ConceptNotInSet(FigclassError):
    pass


# evaluation
class EmptyEvaluation(FigclassError):
    pass


class LengthMismatch(FigclassError):
    pass


class DegenerateMarginals(FigclassError):
    pass


class UnknownLabel(FigclassError):
    pass


class UnknownFigure(FigclassError):
    pass


class DatasetUnderfilled(UserWarning):
    """Warning: a split could not be filled to its target size."""
