class ConfigError(ValueError):
    """Invalid configuration value; the message names the offending field."""


class DomainError(ValueError):
    """A route or genome that does not fit the layout it is evaluated on."""


class BudgetExceeded(RuntimeError):
    """Exhaustive enumeration would exceed the configured route budget."""
