"""Siting and sizing of on-route fast charging for battery electric buses on a coupled transit and power network."""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def data_path(name: str = "") -> Path:
    """Location of a file shipped in ``busgrid/data``, e.g. ``data_path("replication.toml")``."""
    return Path(str(resources.files(__name__).joinpath("data", name)))


REPLICATION_CONFIG = "replication.toml"
