"""Exception types shared across the toolkit."""


class InvalidArgument(ValueError):
    """An argument violates an operation's precondition."""


class InvalidState(ValueError):
    """An object is in the wrong state for the requested operation."""


class InvalidConfig(ValueError):
    """A configuration produces an unusable setup (e.g. empty voxel selection)."""


class SingularDesign(ValueError):
    """A least-squares design matrix is rank deficient."""


class BundleError(IOError):
    """A matrix bundle manifest or payload is malformed."""
