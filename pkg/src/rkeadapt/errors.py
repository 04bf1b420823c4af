"""Exception types shared across the package."""


class InvalidStateError(RuntimeError):
    """Operation called in a state where it is not defined."""


class DecodeError(ValueError):
    """Malformed certificate or message encoding."""


class DecryptError(ValueError):
    """Ciphertext did not decrypt to a well-padded plaintext."""


class ConfigError(ValueError):
    """Scenario configuration failed validation.

    ``field`` is the dotted path of the offending entry, e.g.
    ``interferers[0].duty_cycle``.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
