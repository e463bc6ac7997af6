class NetsirError(Exception):
    pass


class ConfigurationError(NetsirError, ValueError):
    pass


class StructuralError(NetsirError, ValueError):
    """Shapes or labels that do not fit together."""


class ContractViolation(NetsirError, RuntimeError):
    pass
