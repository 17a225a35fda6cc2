"""Exception taxonomy for the extraction pipeline."""


class ExtractError(Exception):
    """Base class for everything this package raises on purpose."""


class RegistryError(ExtractError):
    """Unknown model identifier, or no loader available for the family."""


class AudioError(ExtractError):
    """File missing, undecodable, empty, or not convertible to mono PCM."""


class ManifestError(ExtractError):
    """Manifest missing, malformed, or containing unusable ids/labels."""


class DimMismatchError(ExtractError):
    """Backend produced a width different from the registry's declared dim."""
