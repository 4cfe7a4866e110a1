"""Exception types shared across the package."""


class DynsplatError(Exception):
    """Base class for all package errors."""


class ZeroQuaternion(DynsplatError):
    """Rotation requested from a (near-)zero quaternion."""


class EmptyPointCloud(DynsplatError):
    """Point cloud with no points."""


class InvalidBox(DynsplatError):
    """Axis-aligned box with non-positive volume."""


class ShapeMismatch(DynsplatError):
    """Array arguments whose shapes do not chain."""


class SingularCovariance(DynsplatError):
    """Projected 2D covariance is not invertible."""


class PixelOutOfBounds(DynsplatError):
    """Pixel coordinate outside the image."""


class EmptyPixel(DynsplatError):
    """No Gaussian contributes at the queried pixel."""


class ZeroQuery(DynsplatError):
    """Semantic query vector with zero norm."""


class ParseError(DynsplatError):
    """Malformed input file."""


class MissingFile(DynsplatError):
    """A file referenced by a manifest does not exist."""


class DimensionMismatch(DynsplatError):
    """Inconsistent feature dimension between inputs."""


class TimeOutOfRange(DynsplatError):
    """Frame timestamp outside [0, 1]."""


class BadMagic(DynsplatError):
    """Binary file does not start with the expected magic."""


class VersionMismatch(DynsplatError):
    """Binary file has an unsupported format version."""


class TruncatedFile(DynsplatError):
    """Binary file shorter (or longer) than its header implies."""
