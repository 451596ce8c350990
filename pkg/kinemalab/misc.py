# Incidence tolerance, every face-lattice decision goes through it
TAU = 1e-9
# Slacks in (TAU, AMBIGUITY_FACTOR*TAU] can't be classified safely
AMBIGUITY_FACTOR = 1e3

# Default Monte-Carlo budget for cone measures
N_MC_ANGLE = 200000
# Samples per RNG stream, fixed so results don't depend on the number of workers
CHUNK = 2048

# Return error codes
CRITERIA_FAILED = 1
WRONG_ARGUMENTS = 2   # This is what argsparse uses
TOLERANCE_ABORT = 3

# Acceptance thresholds used when the config doesn't override them
DEFAULT_TOLERANCES = {
    'tau': TAU,
    'z_max': 4.0,
    'decomposition': 1e-8,
    'residual': 1e-9,
    'dimension': 0.15,
    'resample_rate': 0.01,
    'stderr_factor': 4.0,
}

# Environment variable used to cap the parallelism
THREADS_ENV = 'KINEMALAB_THREADS'


class KinemaError(RuntimeError):
    """ Base for all the errors reported by the library """
    exit_code = TOLERANCE_ABORT


class ToleranceAmbiguityError(KinemaError):
    """ An incidence is within the ambiguity band of TAU, the caller must perturb """


class DegeneratePolytopeError(KinemaError):
    """ The operation needs a full dimensional body """


class UnboundedError(KinemaError):
    """ The body is unbounded in the requested direction """


class EmptyPolytopeError(KinemaError):
    """ The halfspaces don't have a common point """


class PreconditionError(KinemaError):
    """ The arguments are outside the domain of the operation """


class GeneralPositionError(KinemaError):
    """ Two bodies meet non-transversally """


class CertificationMissingError(KinemaError):
    """ Weak regularity at 0 couldn't be verified for the aura """


class SingularSystemError(KinemaError):
    """ The template system for the constants is rank deficient or leaves a residual """


class ResampleAbortError(KinemaError):
    """ Too many degenerate motions were drawn """


class ConfigError(KinemaError):
    """ The experiment config or the command line is wrong """
    exit_code = WRONG_ARGUMENTS
