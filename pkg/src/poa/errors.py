"""Exception types shared across the package."""


class PoaError(Exception):
    """Base class for all package errors."""


class DomainError(PoaError, ValueError):
    """A numeric argument lies outside its documented domain."""


class ShapeMismatch(PoaError, ValueError):
    """Operands with incompatible shapes."""


class InvalidAlpha(PoaError, ValueError):
    """DDIM alpha outside (0, 1) or mis-ordered."""


class InvalidParams(PoaError, ValueError):
    """Distribution parameters outside their domain."""


class DegenerateSample(PoaError, ValueError):
    """Sample set carries no usable spread (all values equal)."""


class NonConvergence(PoaError, RuntimeError):
    """Iterative fit exhausted its evaluation budget."""


class FitError(PoaError, RuntimeError):
    """Distribution fitting failed inside the adjudicator."""


class ZeroLatent(PoaError, ValueError):
    """Operation undefined for an all-zero latent."""


class SingularTransform(PoaError, ValueError):
    """Affine parameters describe a non-invertible map."""


class DuplicateIdentity(PoaError, ValueError):
    """Identity key already present in the registry."""


class UnknownIdentity(PoaError, KeyError):
    """Identity not found in the registry."""


class BackendError(PoaError, RuntimeError):
    """Generator backend failed or rejected the request."""


class Transport(BackendError):
    """Network-level failure talking to a remote backend."""


class ProtocolVersionMismatch(BackendError):
    """Remote payload violates the wire protocol."""


class IllegalQuery(PoaError, RuntimeError):
    """Distinguisher queried the excluded challenge input."""


class InconsistentReport(PoaError, ValueError):
    """Adjudication report fails its internal consistency checks."""
