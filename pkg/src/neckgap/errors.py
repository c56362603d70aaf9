"""Exception hierarchy for geometry, solver, and pipeline failures."""


class NeckgapError(Exception):
    """Base class for all package errors."""


class PointOutsideChart(NeckgapError):
    pass


class TubeExceedsChart(NeckgapError):
    pass


class DegeneratePlane(NeckgapError):
    pass


class LeftChart(NeckgapError):
    pass


class NoConvergence(NeckgapError):
    def __init__(self, msg="iteration failed to converge", residual=None):
        super().__init__(msg)
        self.residual = residual


class TubeTooLarge(NeckgapError):
    pass


class InsufficientLevels(NeckgapError):
    pass


class NearConjugate(NeckgapError):
    pass


class EigenvalueCollision(NeckgapError):
    pass


class InvalidBoundaryHeights(NeckgapError):
    pass


class HypothesisViolation(NeckgapError):
    pass


class GateFailed(NeckgapError):
    pass


class AuditFailed(NeckgapError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class BoundaryLeftTube(NeckgapError):
    pass


class CornerNotFound(NeckgapError):
    pass


class SliceOutsideDomain(NeckgapError):
    pass


class ContainmentViolated(NeckgapError):
    pass


class ClosureDiverged(NeckgapError):
    pass


class EmptyBulk(NeckgapError):
    pass


class NoAdmissibleRho(NeckgapError):
    pass


class ConvexityViolated(AuditFailed):
    pass


class QualityFailure(NeckgapError):
    pass


class MeshTooCoarse(NeckgapError):
    pass


class QuadraturePointOutsideChart(NeckgapError):
    pass


class SolverStagnation(NeckgapError):
    pass


class ZeroFunction(NeckgapError):
    pass


class InterpolationOutsideMesh(NeckgapError):
    pass


class ProfileTooCoarse(NeckgapError):
    pass


class InsufficientSweep(NeckgapError):
    pass


class PositiveSlope(NeckgapError):
    pass


class DeltaTooLarge(NeckgapError):
    pass


class NeckNotResolved(NeckgapError):
    pass


class NoBalancedState(NeckgapError):
    pass


class NoSignChange(NeckgapError):
    def __init__(self, msg, endpoint_signs=None):
        super().__init__(msg)
        self.endpoint_signs = endpoint_signs


class InsufficientData(NeckgapError):
    pass


class NonDecaying(NeckgapError):
    pass


class ValidationError(NeckgapError):
    pass
