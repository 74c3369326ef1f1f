"""Exception types shared across the toolkit."""


class ToolError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ToolError):
    """Malformed or inconsistent input data (files, schemas, group tables)."""


class NotLEligibleError(ToolError):
    """The table cannot be partitioned into l-diverse groups of the required shape."""


class WorldExplosionError(ToolError):
    """A group's possible-world count exceeds the configured cap."""

    def __init__(self, gid: int, n_worlds: int, cap: int):
        self.gid = gid
        self.n_worlds = n_worlds
        self.cap = cap
        super().__init__(
            f"group {gid} has {n_worlds} possible worlds, exceeding the cap of {cap}"
        )
