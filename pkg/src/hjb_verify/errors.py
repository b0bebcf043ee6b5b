#!/usr/bin/env python3
"""
Exception hierarchy for hjb-verify.
Operations that promise to *report* a condition return report objects instead;
everything here is raised.
"""

from typing import Iterable, List


class HJBError(Exception):
    """Base class for every error raised by the package"""


# problem-core
class NonCoercive(HJBError):
    """Coercivity constant missing or too weak to bound the control set"""


class DimensionMismatch(HJBError):
    """Array shapes disagree with the problem dimension"""


class EmptyGrid(HJBError):
    """No grid values were supplied"""


class UnsupportedProblem(HJBError):
    """Operation does not apply to this kind of problem"""


# scheme
class DegenerateGrid(HJBError):
    """Grid has fewer than three nodes per axis or a non-positive mesh width"""


class CflViolation(HJBError):
    """Time step exceeds the monotonicity bound"""


class NonFiniteValue(HJBError):
    """An update produced inf or nan"""

    def __init__(self, message: str, time: float = float("nan")):
        super().__init__(message)
        self.time = time


# oracles
class QuadratureDivergence(HJBError):
    """Blow-up integral diverges for the requested parameters"""


class BeyondBlowUp(HJBError):
    """Requested time lies at or before the blow-up time"""


class NonPositiveR(HJBError):
    """Auxiliary problem needs R > 0"""


class UnknownKind(HJBError):
    """Manufactured solution kind is not registered"""


# barriers
class MissingConstants(HJBError):
    """Barrier construction needs assumption constants that are absent"""


class MissingEnvelopes(HJBError):
    """Barrier construction needs the chi / gamma envelopes"""


class DerivativeUnavailable(HJBError):
    """Candidate does not provide closed-form derivatives"""


# harness
class ConfigInvalid(HJBError):
    """Experiment configuration failed validation"""


class UnknownPreset(ConfigInvalid):
    """Preset name not in the registry"""

    def __init__(self, name: str, valid: Iterable[str]):
        self.name = name
        self.valid: List[str] = sorted(valid)
        super().__init__(f"Unknown preset '{name}'. Valid presets: {', '.join(self.valid)}")


class MissingArtifact(HJBError):
    """A run record does not contain the artifact needed for an export"""
