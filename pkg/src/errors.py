"""Exception hierarchy.

ValidationError subclasses are config/input problems (CLI exit code 2);
anything else deriving from XaiGapError is a runtime failure (exit code 1).
"""

from __future__ import annotations


class XaiGapError(Exception):
    exit_code = 1


class ValidationError(XaiGapError, ValueError):
    exit_code = 2


class ConfigError(ValidationError):
    pass


# --- data pipeline ---------------------------------------------------------

class MissingFile(ValidationError, FileNotFoundError):
    pass


class HeaderMismatch(ValidationError):
    pass


class EmptyTable(ValidationError):
    pass


class UnsupportedAggregator(ValidationError):
    pass


class AllMissingColumn(XaiGapError):
    pass


class ResidualMissing(XaiGapError):
    pass


class UnknownLevel(ValidationError):
    pass


class OverlappingRoles(ValidationError):
    pass


class UnknownFeature(ValidationError):
    pass


# --- clustering ------------------------------------------------------------

class DegenerateInput(XaiGapError):
    pass


class NotSymmetric(XaiGapError):
    pass


class RangeTooSmall(ValidationError):
    pass


class NoValidCell(XaiGapError):
    pass


# --- validity --------------------------------------------------------------

class TooFewClusters(XaiGapError):
    pass


class CoincidentCentroids(XaiGapError):
    pass


class CoincidentCenters(XaiGapError):
    pass


class EmptySample(XaiGapError):
    pass


class RowMismatch(ValidationError):
    pass


# --- surrogate / explainers ------------------------------------------------

class SingleClass(XaiGapError):
    pass


class ShapeMismatch(ValidationError):
    pass


class UnknownClass(ValidationError):
    pass


class DegenerateNeighborhood(XaiGapError):
    pass


class NoCounterfactualFound(XaiGapError):
    pass


class TargetIsCurrentClass(ValidationError):
    pass


class EmptyData(XaiGapError):
    pass


# --- thesaurus -------------------------------------------------------------

class NoSuccessfulRun(XaiGapError):
    pass


class EmptyExemplarBank(ValidationError):
    pass


class VersionMismatch(ValidationError):
    pass


class CorruptFile(ValidationError):
    pass


class FingerprintMismatch(ValidationError):
    pass


# --- llm bridge ------------------------------------------------------------

class BankTooSmall(ValidationError):
    pass


class EndpointUnreachable(XaiGapError):
    pass


class HttpStatus(XaiGapError):
    def __init__(self, code: int, message: str = ""):
        self.code = int(code)
        super().__init__(f"HTTP {code}: {message}" if message else f"HTTP {code}")


class LlmTimeout(XaiGapError):
    pass


class StubKeyMissing(XaiGapError):
    pass


class Unparseable(XaiGapError):
    pass


# --- quality ---------------------------------------------------------------

class EmptyText(XaiGapError):
    pass


class NoWords(XaiGapError):
    pass


class TooFewCommonFeatures(XaiGapError):
    pass


class ZeroGainVector(XaiGapError):
    pass


class DimensionMismatch(XaiGapError):
    pass
