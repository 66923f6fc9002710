"""Dense matrix kernels and the reverse-mode tape."""

from . import ops
from .tape import Node, Tape

__all__ = ["Node", "Tape", "ops"]
