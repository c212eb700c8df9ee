"""Exception types with distinct CLI exit codes."""


class QlbError(Exception):
    pass


class SeedParseError(QlbError, ValueError):
    """Malformed partition seed text."""


class ConfigError(QlbError, ValueError):
    """Invalid experiment configuration."""


class CapExceeded(QlbError):
    """An orbit, basis or enumeration is too large for the configured caps."""


class HierarchyMismatch(QlbError, ValueError):
    """Orbits are not related by splitting and unhighlighting."""


class RankCollapse(QlbError):
    """The restricted operator is numerically zero, so no anti-concentration constant exists."""
