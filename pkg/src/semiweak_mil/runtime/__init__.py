"""Runtime helpers."""

from .parallel import OrderedMapper, map_ordered

__all__ = ["OrderedMapper", "map_ordered"]
