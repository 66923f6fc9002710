"""Semi-weakly supervised multiple instance learning on bags of feature vectors."""

from semiweak_mil.errors import SemiweakError

__version__ = "0.1.0"

__all__ = ["SemiweakError", "__version__"]
