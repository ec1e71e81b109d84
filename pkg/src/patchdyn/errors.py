"""Exception types shared across the toolkit."""


class PatchdynError(Exception):
    """Base class for all toolkit errors."""


class DegenerateConfig(PatchdynError):
    """Raised when the two body centers coincide (distance problem undefined)."""


class NoCandidateFound(PatchdynError):
    """No enumerated active-set candidate passed KKT verification."""


class NotInContact(PatchdynError):
    """Operation requires the bodies to be in contact."""


class MlcpFailure(PatchdynError):
    """No active subset of the impact MLCP was sign-consistent."""


class SingularDenominator(PatchdynError):
    """Closed-form contact force/point expression has a singular coefficient."""


class DomainError(PatchdynError):
    """Evaluation left the domain of an elementary function."""


class NlpFailure(PatchdynError):
    """NLP solve failed; carries an optional homotopy stage index."""

    def __init__(self, msg, stage=None):
        super().__init__(msg)
        self.stage = stage


class MaxIterations(NlpFailure):
    """Interior-point iteration limit reached."""


class RestorationFailure(NlpFailure):
    """Feasibility restoration could not produce an acceptable point."""


class LinearAlgebraFailure(NlpFailure):
    """KKT matrix remained singular after maximum regularization."""


class CompResidualNotMet(PatchdynError):
    """Homotopy exhausted its outer iterations above the complementarity tolerance."""


class ParseError(PatchdynError):
    """Scenario file is malformed; message carries key context."""


class ValidationError(PatchdynError):
    """Scenario file violates a physical or schema invariant."""
