"""Lifted and reversible MCMC samplers for distributions on {-1, +1}^n."""

from posetmc.poset import BinaryState, Direction, LiftedChainState, counts, directed_neighborhood, flip
from posetmc.samplers import RhoPolicy, SamplerKind, run_chain

__version__ = "0.1.0"

__all__ = [
    "BinaryState",
    "Direction",
    "LiftedChainState",
    "RhoPolicy",
    "SamplerKind",
    "counts",
    "directed_neighborhood",
    "flip",
    "run_chain",
]
