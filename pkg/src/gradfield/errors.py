"""Exception hierarchy shared across the package."""


class GradFieldError(Exception):
    """Base class for all package errors."""


# -- lattice ----------------------------------------------------------------

class LatticeError(GradFieldError):
    pass


class ZeroInGenerators(LatticeError):
    pass


class NotSymmetric(LatticeError):
    pass


class NotGenerating(LatticeError):
    pass


# -- potentials -------------------------------------------------------------

class PotentialError(GradFieldError):
    pass


class NonFiniteEnergy(PotentialError):
    pass


class EllipticityViolation(PotentialError):
    pass


class QuadratureFailure(PotentialError):
    pass


# -- samplers ---------------------------------------------------------------

class SamplerError(GradFieldError):
    pass


class MethodUnsupported(SamplerError):
    pass


class DivergedChain(SamplerError):
    pass


class RegionTooLarge(SamplerError):
    pass


class TooFewSamples(SamplerError):
    pass


# -- potential theory -------------------------------------------------------

class SolverFailure(GradFieldError):
    pass


class TolInfeasible(GradFieldError):
    pass


class MarginTooSmall(GradFieldError):
    pass


# -- walk in dynamic environment -------------------------------------------

class DivergedEnvironment(GradFieldError):
    pass


# -- decoupling / events ----------------------------------------------------

class SupportOutsideRegion(GradFieldError):
    pass


class DegenerateW(GradFieldError):
    pass


# -- percolation / renormalization ------------------------------------------

class BudgetExceeded(GradFieldError):
    pass


class NoEmbeddingExists(GradFieldError):
    pass


class NotAdapted(GradFieldError):
    pass


# -- even-sublattice reduction ----------------------------------------------

class NotFStar(GradFieldError):
    def __init__(self, vertex, message=None):
        self.vertex = vertex
        super().__init__(message or f"region is not F*: even vertex {vertex} "
                         "is missing a nearest neighbor")


# -- CLI / experiments ------------------------------------------------------

class ConfigError(GradFieldError):
    pass


class CheckpointVersionMismatch(GradFieldError):
    pass


class CorruptCheckpoint(GradFieldError):
    pass
