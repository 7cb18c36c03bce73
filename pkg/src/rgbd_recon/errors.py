"""Exception types raised across the reconstruction pipeline."""


class RgbdReconError(Exception):
    """Base class for all errors raised by this package."""


class AngleNearPi(RgbdReconError):
    """Rotation angle within tolerance of pi; the matrix logarithm branch is ill-conditioned."""


class ParseError(RgbdReconError):
    """A file could not be read or did not parse as the expected format."""


class InvalidIntrinsics(RgbdReconError):
    """Camera intrinsics violate their invariants (e.g. non-positive focal length)."""


class MismatchedPair(RgbdReconError):
    """A color frame without its depth counterpart, or vice versa."""


class SizeMismatch(RgbdReconError):
    """Image dimensions disagree with the camera intrinsics."""


class EmptyTrajectory(RgbdReconError):
    """Synthetic rendering was requested for an empty pose list."""


class TooFewPoints(RgbdReconError):
    """A cloud has fewer points than an operation requires."""


class NormalPresenceMismatch(RgbdReconError):
    """Clouds being merged disagree on whether normals are present."""


class UnsupportedPcd(RgbdReconError):
    """PCD file uses fields or an encoding this reader does not handle."""


class IoError(RgbdReconError):
    """File-level failure while reading or writing an artifact."""


class TooSmall(RgbdReconError):
    """An image pyramid level fell below the minimum usable size."""


class Disconnected(RgbdReconError):
    """Pose graph has nodes unreachable from the gauge node."""


class OdometryChainBroken(RgbdReconError):
    """Adjacent-frame odometry failed, so a fragment cannot be assembled."""

    def __init__(self, source_index: int, target_index: int, reason: str = ""):
        self.source_index = source_index
        self.target_index = target_index
        msg = f"odometry failed for adjacent pair ({source_index}, {target_index})"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class TooSparse(RgbdReconError):
    """A fragment has too few points after down-sampling to register."""


class ConfigError(RgbdReconError):
    """Pipeline configuration file is malformed or contains unknown keys."""
