"""Shared exception taxonomy.

Every guard in the package raises one of these, so callers (and the CLI exit-code
mapping) can dispatch on class rather than message text.
"""

from __future__ import annotations

__all__ = [
    "NeuralWalkerError",
    "GraphError",
    "DuplicateEdge",
    "SelfLoopEdge",
    "BadIndex",
    "ParseError",
    "SamplerError",
    "TooManyWalks",
    "BadLength",
    "Unsupported",
    "NeverCovers",
    "EncodingError",
    "BadWindow",
    "TensorError",
    "ShapeError",
    "BadSchedule",
    "BadKernel",
    "BadHeads",
    "BadTimestep",
    "GuardError",
    "TooLarge",
]


class NeuralWalkerError(Exception):
    """Base class for every error raised by this package."""


# --- graph construction / parsing ------------------------------------------------

class GraphError(NeuralWalkerError):
    pass


class DuplicateEdge(GraphError):
    """The same (u, v) pair (or its mirror, undirected) was supplied twice."""


class SelfLoopEdge(GraphError):
    """Edges u -- u are rejected at build time."""


class BadIndex(GraphError):
    """A node or edge index is outside the valid range."""


class ParseError(GraphError):
    """A graph or walks file line does not match the record grammar."""


# --- walk sampling ----------------------------------------------------------------

class SamplerError(NeuralWalkerError):
    pass


class TooManyWalks(SamplerError):
    """Requested more walks than start nodes can be distinct (m > n)."""


class BadLength(SamplerError):
    """Walk length must be a positive integer."""


class Unsupported(NeuralWalkerError):
    """The operation is defined only for a graph class this graph is not in."""


class NeverCovers(SamplerError):
    """Cover time is infinite (the graph is disconnected)."""


# --- walk encodings ---------------------------------------------------------------

class EncodingError(NeuralWalkerError):
    pass


class BadWindow(EncodingError):
    """Encoding window must be a positive integer."""


# --- tensors, layers, optimization -------------------------------------------------

class TensorError(NeuralWalkerError):
    pass


class ShapeError(TensorError):
    """Operand shapes do not satisfy the op's contract."""


class BadSchedule(TensorError):
    """Learning-rate schedule parameters are inconsistent (e.g. warmup > total)."""


class BadKernel(TensorError):
    """Convolution kernel width must be odd (same-padding)."""


class BadHeads(TensorError):
    """Attention head count must divide the model width."""


class BadTimestep(TensorError):
    """State-space discretization step must be strictly positive."""


# --- resource guards ----------------------------------------------------------------

class GuardError(NeuralWalkerError):
    pass


class TooLarge(GuardError):
    """A brute-force enumeration or buffer would exceed its hard cap."""
