class Char2ImageError(Exception):
    pass


class ConfigError(Char2ImageError):
    """Invalid network or training configuration."""


class ShapeError(Char2ImageError):
    """Tensor dimensions inconsistent with the operation's contract."""


class NonFiniteError(Char2ImageError):
    """NaN or infinity encountered in inputs, losses, or gradients."""


class FormatError(Char2ImageError):
    """A stack file or manifest does not conform to its format."""
