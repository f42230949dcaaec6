"""Brute-force ground truth on small state spaces.

Everything here enumerates: exact normalised PMFs, dense transition
matrices of each sampler, stationarity and (skew-)detailed-balance residuals,
and asymptotic variances from the Poisson equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from posetmc.poset import BinaryState, Direction, LiftedChainState, all_states, flip
from posetmc.proposals import Draw, EmptyNeighborhood
from posetmc.samplers import (
    SamplerKind,
    log_acceptance_undirected,
    transition_terms,
)
from posetmc.targets import TabularTarget

__all__ = [
    "MAX_PLAIN",
    "MAX_LIFTED",
    "KernelMatrix",
    "ReducibleKernelError",
    "enumerate_states",
    "lifted_index",
    "build_kernel",
    "stationarity_error",
    "skew_balance_error",
    "detailed_balance_error",
    "asymptotic_variance",
    "tv_distance",
    "random_tabular_target",
    "random_kappa",
]

MAX_PLAIN = 14
MAX_LIFTED = 12


class ReducibleKernelError(ValueError):
    """The kernel is not irreducible on the support of the target."""


def _normalise(log_masses: np.ndarray) -> np.ndarray:
    lm = log_masses - np.max(log_masses)
    p = np.exp(lm)
    return p / p.sum()


def enumerate_states(target, lifted: bool = False):
    """All states and the exact normalised PMF.

    Plain states are ordered by code. Lifted states ``(x, nu)`` sit at index
    ``2 * code + (nu == +1)`` and carry ``pi(x) / 2``.
    """
    limit = MAX_LIFTED if lifted else MAX_PLAIN
    if target.n > limit:
        raise ValueError(f"refusing to enumerate n={target.n} > {limit} ({'lifted' if lifted else 'plain'} space)")
    states = all_states(target.n)
    pi = _normalise(np.array([target.log_mass(x) for x in states]))
    if not lifted:
        return states, pi
    lstates = [LiftedChainState(x, nu) for x in states for nu in (Direction.DOWN, Direction.UP)]
    return lstates, np.repeat(pi, 2) / 2.0


def lifted_index(x: BinaryState, nu: int) -> int:
    return 2 * x.code + (1 if nu > 0 else 0)


@dataclass
class KernelMatrix:
    """Dense row-stochastic matrix over an enumerated (lifted or plain) space."""

    P: np.ndarray
    states: list
    lifted: bool

    def index(self, state) -> int:
        if self.lifted:
            return lifted_index(state.state, state.direction)
        return state.code

    def row_sum_error(self) -> float:
        return float(np.max(np.abs(self.P.sum(axis=1) - 1.0)))


def _undirected_row(target, proposal, x):
    """``{code(y): q_x(y) alpha(x, y)}`` for the MH kernel."""
    try:
        idx, logp, _, deltas = proposal.undirected_support(target, x)
    except EmptyNeighborhood:
        return {}
    row = {}
    for k, i in enumerate(idx):
        d = Draw(flip(x, int(i)), int(i), float(logp[k]), None if deltas is None else float(deltas[k]))
        row[d.y.code] = math.exp(logp[k] + log_acceptance_undirected(target, proposal, x, d))
    return row


def _directed_row(target, proposal, x, nu):
    idx, terms = transition_terms(target, proposal, x, nu)
    return {x.code ^ (1 << int(i)): float(t) for i, t in zip(idx, terms)}


def _lifted1_rejection(target, proposal, x, nu) -> float:
    """Probability of ``(x, nu) -> (x, -nu)``: sum of ``q (1 - alpha)`` over proposals."""
    try:
        idx, logp, _, _ = proposal.directed_support(target, x, nu)
    except EmptyNeighborhood:
        return 1.0
    _, terms = transition_terms(target, proposal, x, nu)
    return max(0.0, float(np.sum(np.exp(logp) - terms)))


def _moves(kind: SamplerKind, target, proposal, x: BinaryState, nu: int):
    """Off-state moves keeping the direction, plus the direction-reversal probability."""
    if kind.algorithm == "mh":
        return _undirected_row(target, proposal, x), 0.0
    if kind.algorithm == "revmix":
        row = {}
        for mu in (Direction.DOWN, Direction.UP):
            for c, p in _directed_row(target, proposal, x, mu).items():
                row[c] = row.get(c, 0.0) + 0.5 * p
        return row, 0.0
    moves = _directed_row(target, proposal, x, nu)
    if kind.algorithm == "lifted1":
        return moves, _lifted1_rejection(target, proposal, x, nu)
    t_nu = sum(moves.values())
    t_other = sum(_directed_row(target, proposal, x, -nu).values())
    return moves, kind.rho(x, nu, t_nu, t_other)


def build_kernel(kind: SamplerKind, target, lifted: bool = True) -> KernelMatrix:
    """Exact transition matrix of ``kind`` on ``target``.

    With ``lifted=False`` (reversible algorithms only) the matrix acts on
    plain states; otherwise on ``(x, nu)`` pairs, the reversible samplers
    carrying ``nu`` unchanged.
    """
    if not lifted and kind.lifted:
        raise ValueError(f"{kind.label} only has a lifted kernel")
    proposal = kind.make_proposal()
    states, _ = enumerate_states(target, lifted=lifted)
    P = np.zeros((len(states), len(states)))
    if not lifted:
        for x in states:
            row, _ = _moves(kind, target, proposal, x, Direction.UP)
            for c, p in row.items():
                P[x.code, c] += p
            P[x.code, x.code] += max(0.0, 1.0 - sum(row.values()))
        return KernelMatrix(P, states, lifted=False)
    for s in states:
        x, nu = s
        i = lifted_index(x, nu)
        row, rho = _moves(kind, target, proposal, x, nu)
        for c, p in row.items():
            P[i, 2 * c + (1 if nu > 0 else 0)] += p
        P[i, lifted_index(x, -nu)] += max(0.0, rho)
        P[i, i] += max(0.0, 1.0 - sum(row.values()) - rho)
    return KernelMatrix(P, states, lifted=True)


# ------------------------------------------------------------------- checks


def stationarity_error(K: KernelMatrix, pi: np.ndarray) -> float:
    """``max |pi P - pi|``."""
    return float(np.max(np.abs(pi @ K.P - pi)))


def skew_balance_error(K: KernelMatrix, pi_plain: np.ndarray) -> float:
    """``max |pi(x) P((x,nu),(y,nu)) - pi(y) P((y,-nu),(x,-nu))|`` over ``x != y``."""
    if not K.lifted:
        raise ValueError("skew balance is a property of lifted kernels")
    N = pi_plain.size
    err = 0.0
    for nu in (0, 1):
        fwd = K.P[nu::2, nu::2]  # (x, nu) -> (y, nu)
        bwd = K.P[1 - nu::2, 1 - nu::2]  # (y, -nu) -> (x, -nu)
        lhs = pi_plain[:, None] * fwd
        rhs = (pi_plain[:, None] * bwd).T
        off = ~np.eye(N, dtype=bool)
        err = max(err, float(np.max(np.abs(lhs - rhs)[off])))
    return err


def detailed_balance_error(K: KernelMatrix, pi: np.ndarray) -> float:
    flow = pi[:, None] * K.P
    return float(np.max(np.abs(flow - flow.T)))


def _check_irreducible(P: np.ndarray, support: np.ndarray, states) -> None:
    sub = P[np.ix_(support, support)]
    n_comp, labels = connected_components(csr_matrix(sub > 0), directed=True, connection="strong")
    if n_comp > 1:
        main = np.bincount(labels).argmax()
        bad = [states[int(support[k])] for k in np.flatnonzero(labels != main)[:8]]
        raise ReducibleKernelError(
            f"kernel has {n_comp} communicating classes on the support; e.g. unreachable: {bad}")


def asymptotic_variance(K: KernelMatrix | np.ndarray, pi: np.ndarray, f) -> float:
    """``Var f + 2 sum_{k>0} <f, P^k f>`` under ``pi`` via the Poisson equation.

    Solves ``(I - P) h = f - pi(f)`` with the constraint ``pi(h) = 0``
    folded in as the rank-one term ``1 pi^T`` (dense LU), then returns
    ``2 <fbar, h> - <fbar, fbar>``. States of zero mass are dropped.
    """
    P = K.P if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)
    states = K.states if isinstance(K, KernelMatrix) else list(range(P.shape[0]))
    f = np.asarray(f, dtype=float)
    support = np.flatnonzero(pi > 0)
    _check_irreducible(P, support, states)
    Ps = P[np.ix_(support, support)]
    p = pi[support] / pi[support].sum()
    fs = f[support]
    fbar = fs - p @ fs
    A = np.eye(p.size) - Ps + np.outer(np.ones(p.size), p)
    h = scipy.linalg.lu_solve(scipy.linalg.lu_factor(A), fbar)
    return float(2.0 * p @ (fbar * h) - p @ (fbar * fbar))


def tv_distance(empirical, exact) -> float:
    """Total variation ``1/2 sum |p_hat - p|``; ``empirical`` may be raw counts."""
    e = np.asarray(empirical, dtype=float)
    p = np.asarray(exact, dtype=float)
    if e.shape != p.shape:
        raise ValueError("distributions must share a support")
    return 0.5 * float(np.abs(e / e.sum() - p / p.sum()).sum())


# ------------------------------------------------------------------ fixtures


def random_tabular_target(n: int, seed: int, low: float = -3.0, high: float = 3.0) -> TabularTarget:
    """Log masses i.i.d. uniform on ``[low, high]``."""
    rng = np.random.default_rng(seed)
    return TabularTarget(rng.uniform(low, high, size=1 << n))


def random_kappa(seed: int):
    """A fixed pseudo-random map from states to [0, 1], for interpolated rho policies."""
    def kappa(x: BinaryState) -> float:
        return float(np.random.default_rng([seed, x.code]).random())
    return kappa
