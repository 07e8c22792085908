class NotFoundError(KeyError):
    """An update or delete named a row that does not exist."""


class IntegrityError(RuntimeError):
    """Support indexes and a materialized view disagree."""


class UnsupportedJoinError(ValueError):
    """A stored structure cannot produce the requested join type."""


class ConfigError(ValueError):
    pass
