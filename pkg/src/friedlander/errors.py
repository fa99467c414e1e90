"""Exception types shared across the package.

Every failure mode that callers are expected to branch on gets a named class;
plain ValueError/TypeError remain for programming errors (bad shapes, wrong
argument types).
"""


class ConfigError(ValueError):
    """A run configuration is malformed.  The message carries the offending
    field path (dot-separated) so CLI users can locate it."""

    def __init__(self, field_path, message):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


class PhaseUnresolvableError(ValueError):
    """Airy evaluation requested where the oscillation phase cannot be
    resolved in double precision (x < -1e6): the amplitude would be fine but
    any downstream phase arithmetic is meaningless."""


class NonConvergenceError(RuntimeError):
    """An iterative solve (Newton polish, critical-point search) failed to
    reach its target residual within the iteration budget."""


class BranchUnwrapError(RuntimeError):
    """Continuity tracking of the spectral phase detected a non-monotone
    sample sequence; indicates a grid far too coarse or an internal bug."""


class UnresolvedOscillationError(RuntimeError):
    """An oscillatory quadrature exhausted its node budget before the
    Richardson error estimate met tolerance."""


class BudgetExhaustedError(RuntimeError):
    """A declared numerical budget (nodes, iterations, wall-clock proxy) was
    exhausted before reaching tolerance."""


class NoCriticalPointError(RuntimeError):
    """The phase has no admissible stationary point for the requested
    parameters (e.g. reflection number outside its admissible window)."""


class NoLocusError(RuntimeError):
    """A caustic locus was requested where the defining equation has no root
    in the admissible range."""


class TurningPointOverflowError(ValueError):
    """A requested transverse mode turns around outside the computational
    box, so its eigenfunction cannot be represented on the grid."""


class RegimeRefusedError(ValueError):
    """An evaluator was asked to run outside the parameter regime where its
    approximation is controlled; the message states the violated inequality."""


class UnconvergedTailWarning(UserWarning):
    """A truncated sum's last shell still contributes non-negligibly."""


class AliasingWarning(UserWarning):
    """Grid data carries non-negligible content at the y Nyquist frequency,
    which the modal transform cannot represent."""
