"""Single-flip proposal kernels, directed and undirected.

A directed kernel ``q_{x, nu}`` only proposes flips that move ``x`` in
direction ``nu`` of the partial order; the undirected kernel ``q_x`` uses
the whole one-flip neighbourhood. Two families are provided: uniform, and
locally-balanced kernels whose weights are ``g(pi(y) / pi(x))`` for a
balancing function ``g`` with ``g(t) = t * g(1/t)``.

All weight arithmetic is done on log-ratios. Categorical draws use inverse
CDF over the neighbourhood in ascending coordinate order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from posetmc.poset import BinaryState, directed_neighborhood, flip, neighborhood_size

__all__ = [
    "BalancingFunction",
    "BARKER",
    "SQRT",
    "EmptyNeighborhood",
    "CostCounter",
    "Draw",
    "UniformProposal",
    "LocallyBalancedProposal",
    "make_proposal",
    "lb_weights_directed",
]


class EmptyNeighborhood(Exception):
    """The requested (directed) neighbourhood of a state is empty."""


@dataclass(frozen=True)
class BalancingFunction:
    """``g`` with ``g(t) / g(1/t) = t``; either ``"barker"`` (t/(1+t)) or ``"sqrt"``."""

    tag: str

    def __post_init__(self):
        if self.tag not in ("barker", "sqrt"):
            raise ValueError(f"unknown balancing function {self.tag!r}")

    def log_g(self, log_t):
        """``log g(exp(log_t))``, elementwise and overflow-safe."""
        log_t = np.asarray(log_t, dtype=float)
        if self.tag == "barker":
            return -np.logaddexp(0.0, -log_t)
        return 0.5 * log_t

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("balancing functions are defined for t > 0")
        with np.errstate(divide="ignore"):
            return np.exp(self.log_g(np.log(t)))


BARKER = BalancingFunction("barker")
SQRT = BalancingFunction("sqrt")


@dataclass
class CostCounter:
    """Work done by a proposal kernel, in target log-ratio evaluations."""

    ratio_evals: int = 0
    normalizers: int = 0

    def reset(self) -> None:
        self.ratio_evals = 0
        self.normalizers = 0

    def snapshot(self) -> tuple[int, int]:
        return self.ratio_evals, self.normalizers


class Draw(NamedTuple):
    """A sampled proposal ``y = flip(x, index)``.

    ``log_ratio`` is ``log pi(y) - log pi(x)`` when the kernel had to compute
    it anyway, else ``None``.
    """

    y: BinaryState
    index: int
    log_q: float
    log_ratio: float | None


def _flipped_coordinate(x: BinaryState, y: BinaryState) -> int | None:
    diff = np.flatnonzero(x.bits != y.bits)
    return int(diff[0]) if diff.size == 1 else None


def _inverse_cdf(log_probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(np.exp(log_probs))
    k = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(k, cdf.size - 1)


class _Kernel:
    informed = False

    def __init__(self):
        self.counter = CostCounter()

    def _log_weights(self, target, x, idx) -> tuple[np.ndarray, np.ndarray | None]:
        raise NotImplementedError

    def _support(self, target, x: BinaryState, idx: np.ndarray):
        if idx.size == 0:
            raise EmptyNeighborhood(repr(x))
        logw, deltas = self._log_weights(target, x, idx)
        log_c = float(logsumexp(logw))
        if log_c == -np.inf:
            raise EmptyNeighborhood(f"{x!r}: every neighbour has zero weight")
        return logw - log_c, log_c, deltas

    def directed_support(self, target, x: BinaryState, nu: int):
        """``(indices, log q_{x,nu}, log c_{x,nu}, log-ratios or None)``."""
        idx = directed_neighborhood(x, nu)
        return (idx, *self._support(target, x, idx))

    def undirected_support(self, target, x: BinaryState):
        idx = np.arange(x.n)
        return (idx, *self._support(target, x, idx))

    def _draw(self, x, idx, log_probs, deltas, rng) -> Draw:
        k = _inverse_cdf(log_probs, rng.random())
        i = int(idx[k])
        return Draw(flip(x, i), i, float(log_probs[k]), None if deltas is None else float(deltas[k]))

    def sample_directed(self, target, x: BinaryState, nu: int, rng) -> Draw:
        """Draw ``y ~ q_{x,nu}``; raises :class:`EmptyNeighborhood` on the boundary."""
        idx, logp, _, deltas = self.directed_support(target, x, nu)
        return self._draw(x, idx, logp, deltas, rng)

    def sample_undirected(self, target, x: BinaryState, rng) -> Draw:
        idx, logp, _, deltas = self.undirected_support(target, x)
        return self._draw(x, idx, logp, deltas, rng)

    def log_q_directed(self, target, x: BinaryState, nu: int, y: BinaryState) -> float:
        i = _flipped_coordinate(x, y)
        if i is None or x.bits[i] != -nu:
            return -np.inf
        idx, logp, _, _ = self.directed_support(target, x, nu)
        return float(logp[np.searchsorted(idx, i)])

    def log_q_undirected(self, target, x: BinaryState, y: BinaryState) -> float:
        i = _flipped_coordinate(x, y)
        if i is None:
            return -np.inf
        _, logp, _, _ = self.undirected_support(target, x)
        return float(logp[i])

    def normalizer_directed(self, target, x: BinaryState, nu: int) -> float:
        """``log c_{x,nu}``; ``-inf`` on an empty neighbourhood."""
        try:
            return self.directed_support(target, x, nu)[2]
        except EmptyNeighborhood:
            return -np.inf

    def normalizer_undirected(self, target, x: BinaryState) -> float:
        return self.undirected_support(target, x)[2]


class UniformProposal(_Kernel):
    """``q_{x,nu} = U(N_nu(x))`` and ``q_x = U(N(x))``; no target evaluations."""

    name = "uniform"

    def _log_weights(self, target, x, idx):
        return np.zeros(idx.size), None

    def log_q_directed(self, target, x, nu, y):
        i = _flipped_coordinate(x, y)
        if i is None or x.bits[i] != -nu:
            return -np.inf
        return -math.log(neighborhood_size(x, nu))

    def log_q_undirected(self, target, x, y):
        return -math.log(x.n) if _flipped_coordinate(x, y) is not None else -np.inf


class LocallyBalancedProposal(_Kernel):
    """Weights ``g(pi(y)/pi(x))`` over the (directed) neighbourhood.

    Every normaliser computed costs one log-ratio evaluation per neighbour;
    the :attr:`counter` records both quantities.
    """

    informed = True

    def __init__(self, g: BalancingFunction = BARKER):
        super().__init__()
        self.g = g

    @property
    def name(self) -> str:
        return self.g.tag

    def _log_weights(self, target, x, idx):
        deltas = np.asarray(target.log_ratios(x, idx), dtype=float)
        self.counter.ratio_evals += idx.size
        self.counter.normalizers += 1
        return self.g.log_g(deltas), deltas


def make_proposal(name: str):
    """``"uniform"``, ``"barker"`` or ``"sqrt"``."""
    if name == "uniform":
        return UniformProposal()
    return LocallyBalancedProposal(BalancingFunction(name))


def lb_weights_directed(target, x: BinaryState, nu: int, g: BalancingFunction = BARKER):
    """Locally-balanced weights over ``N_nu(x)`` and their sum ``c_{nu}(x)``.

    Returns ``(indices, weights, c)`` in linear scale. Raises
    :class:`EmptyNeighborhood` on the boundary.
    """
    idx = directed_neighborhood(x, nu)
    if idx.size == 0:
        raise EmptyNeighborhood(repr(x))
    w = np.exp(g.log_g(target.log_ratios(x, idx)))
    return idx, w, float(w.sum())
