"""Reversible and lifted single-flip samplers.

Four transition mechanisms share one chain-state type
(:class:`~posetmc.poset.LiftedChainState`):

``mh``
    Metropolis-Hastings with an undirected proposal; the direction is
    carried along but never used.
``lifted1``
    Propose from ``q_{x,nu}``; on acceptance keep ``nu``, otherwise stay and
    reverse ``nu``.
``lifted2``
    First decide whether to move using the total acceptance mass
    ``T_nu(x)``; a rejection reverses ``nu`` with probability ``rho_nu(x)``
    and keeps it otherwise.
``revmix``
    Draw a fresh direction uniformly each step and apply the lifted
    proposal/acceptance pair without memory. This is the reversible kernel
    ``(P_up + P_down) / 2``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from posetmc.poset import BinaryState, Direction, LiftedChainState, as_direction, flip
from posetmc.proposals import Draw, EmptyNeighborhood, make_proposal

__all__ = [
    "RhoPolicy",
    "SamplerKind",
    "StepOutcome",
    "log_acceptance_directed",
    "log_acceptance_undirected",
    "transition_terms",
    "acceptance_mass_T",
    "mh_step",
    "lifted1_step",
    "lifted2_step",
    "revmix_step",
    "step",
    "run_chain",
]

_RHO_TOL = 1e-12


@dataclass(frozen=True)
class RhoPolicy:
    """Direction-reversal probability after a rejection in ``lifted2``.

    Valid policies satisfy ``0 <= rho_nu <= 1 - T_nu`` and
    ``rho_nu - rho_{-nu} = T_{-nu} - T_nu``. ``optimal`` is
    ``max(0, T_{-nu} - T_nu)``; ``worst`` is ``1 - T_nu`` and reproduces
    ``lifted1``. A ``custom`` policy wraps ``fn(x, nu, t_nu, t_other)``.
    """

    tag: str
    fn: Callable[[BinaryState, int, float, float], float] | None = None

    def __post_init__(self):
        if self.tag not in ("optimal", "worst", "custom"):
            raise ValueError(f"unknown rho policy {self.tag!r}")
        if (self.tag == "custom") != (self.fn is not None):
            raise ValueError("a function is required for, and only for, custom policies")

    @classmethod
    def optimal(cls) -> "RhoPolicy":
        return cls("optimal")

    @classmethod
    def worst(cls) -> "RhoPolicy":
        return cls("worst")

    @classmethod
    def custom(cls, fn) -> "RhoPolicy":
        return cls("custom", fn)

    @classmethod
    def interpolated(cls, kappa: Callable[[BinaryState], float]) -> "RhoPolicy":
        """``rho* + kappa(x) * (1 - max(T_nu, T_-nu))``; ``kappa`` in [0, 1].

        ``kappa = 0`` gives ``optimal`` and ``kappa = 1`` gives ``worst``;
        any state-dependent mix in between is valid.
        """

        def fn(x, nu, t_nu, t_other):
            return max(0.0, t_other - t_nu) + kappa(x) * (1.0 - max(t_nu, t_other))

        return cls("custom", fn)

    @property
    def needs_other(self) -> bool:
        return self.tag != "worst"

    def __call__(self, x: BinaryState, nu: int, t_nu: float, t_other: float | None) -> float:
        if self.tag == "worst":
            return 1.0 - t_nu
        if self.tag == "optimal":
            return max(0.0, t_other - t_nu)
        return float(self.fn(x, nu, t_nu, t_other))


def check_rho(x, nu, rho_nu, rho_other, t_nu, t_other, tol=_RHO_TOL) -> None:
    """Raise ``AssertionError`` if ``(rho_nu, rho_other)`` violates the validity conditions."""
    if not (-tol <= rho_nu <= 1.0 - t_nu + tol):
        raise AssertionError(f"rho={rho_nu} outside [0, 1 - T={1 - t_nu}] at {x!r}, nu={nu}")
    if abs((rho_nu - rho_other) - (t_other - t_nu)) > tol:
        raise AssertionError(f"rho balance violated at {x!r}, nu={nu}")


@dataclass(frozen=True)
class SamplerKind:
    """Algorithm tag plus proposal family (``uniform``, ``barker`` or ``sqrt``)."""

    algorithm: str
    proposal: str = "barker"
    rho: RhoPolicy | None = None

    def __post_init__(self):
        if self.algorithm not in ("mh", "lifted1", "lifted2", "revmix"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.proposal not in ("uniform", "barker", "sqrt"):
            raise ValueError(f"unknown proposal {self.proposal!r}")
        if (self.algorithm == "lifted2") != (self.rho is not None):
            raise ValueError("lifted2 requires a rho policy; other algorithms take none")

    @classmethod
    def parse(cls, text: str) -> "SamplerKind":
        """Parse labels such as ``"mh/barker"`` or ``"lifted2[optimal]/uniform"``."""
        algo, _, prop = text.strip().partition("/")
        prop = prop or "barker"
        rho = None
        if "[" in algo:
            algo, _, tag = algo.partition("[")
            rho = RhoPolicy(tag.rstrip("]"))
        elif algo == "lifted2":
            rho = RhoPolicy.optimal()
        return cls(algo, prop, rho)

    @property
    def label(self) -> str:
        algo = self.algorithm if self.rho is None else f"{self.algorithm}[{self.rho.tag}]"
        return f"{algo}/{self.proposal}"

    @property
    def lifted(self) -> bool:
        return self.algorithm in ("lifted1", "lifted2")

    def make_proposal(self):
        return make_proposal(self.proposal)


class StepOutcome(NamedTuple):
    next: LiftedChainState
    accepted: bool
    evaluations: int
    branch: str  # "accept", "flip" (direction reversed) or "reject" (direction kept)


# ------------------------------------------------------------------ acceptance


def _log_ratio(target, proposal, x, draw) -> float:
    if draw.log_ratio is not None:
        return draw.log_ratio
    proposal.counter.ratio_evals += 1
    return target.log_ratio(x, draw.index)


def _combine(delta: float, log_q_rev: float, log_q_fwd: float) -> float:
    s = delta + log_q_rev - log_q_fwd
    if math.isnan(s):  # both masses zero
        return -np.inf
    return min(0.0, s)


def log_acceptance_directed(target, proposal, x: BinaryState, nu: int, draw) -> float:
    """``log alpha_nu(x, y)`` for ``y = draw.y ~ q_{x,nu}``."""
    delta = _log_ratio(target, proposal, x, draw)
    log_q_rev = proposal.log_q_directed(target, draw.y, -nu, x)
    return _combine(delta, log_q_rev, draw.log_q)


def log_acceptance_undirected(target, proposal, x: BinaryState, draw) -> float:
    delta = _log_ratio(target, proposal, x, draw)
    log_q_rev = proposal.log_q_undirected(target, draw.y, x)
    return _combine(delta, log_q_rev, draw.log_q)


def transition_terms(target, proposal, x: BinaryState, nu: int):
    """Per-neighbour accepted mass ``q_{x,nu}(y) alpha_nu(x, y)`` over ``N_nu(x)``.

    Returns ``(indices, terms)``; both are empty on the boundary.
    """
    try:
        idx, logp, _, deltas = proposal.directed_support(target, x, nu)
    except EmptyNeighborhood:
        return np.empty(0, dtype=np.int64), np.empty(0)
    terms = np.empty(idx.size)
    for k, i in enumerate(idx):
        d = Draw(flip(x, int(i)), int(i), float(logp[k]), None if deltas is None else float(deltas[k]))
        terms[k] = math.exp(logp[k] + log_acceptance_directed(target, proposal, x, nu, d))
    return idx, terms


def acceptance_mass_T(target, proposal, x: BinaryState, nu: int) -> float:
    """``T_nu(x)``: probability that a proposal from ``(x, nu)`` is accepted."""
    return float(np.sum(transition_terms(target, proposal, x, nu)[1]))


# ----------------------------------------------------------------------- steps


def _accept(rng, log_a: float) -> bool:
    return rng.random() < math.exp(log_a)


def _spent(proposal, before) -> int:
    return proposal.counter.ratio_evals - before


def mh_step(target, proposal, state: LiftedChainState, rng) -> StepOutcome:
    x, nu = state.state, Direction(state.direction)
    before = proposal.counter.ratio_evals
    draw = proposal.sample_undirected(target, x, rng)
    log_a = log_acceptance_undirected(target, proposal, x, draw)
    if _accept(rng, log_a):
        return StepOutcome(LiftedChainState(draw.y, nu), True, _spent(proposal, before), "accept")
    return StepOutcome(state, False, _spent(proposal, before), "reject")


def lifted1_step(target, proposal, state: LiftedChainState, rng) -> StepOutcome:
    x, nu = state.state, Direction(state.direction)
    before = proposal.counter.ratio_evals
    flipped = LiftedChainState(x, nu.reversed)
    try:
        draw = proposal.sample_directed(target, x, nu, rng)
    except EmptyNeighborhood:
        return StepOutcome(flipped, False, 0, "flip")
    log_a = log_acceptance_directed(target, proposal, x, nu, draw)
    if _accept(rng, log_a):
        return StepOutcome(LiftedChainState(draw.y, nu), True, _spent(proposal, before), "accept")
    return StepOutcome(flipped, False, _spent(proposal, before), "flip")


def lifted2_step(target, proposal, rho: RhoPolicy, state: LiftedChainState, rng,
                 *, debug: bool = False) -> StepOutcome:
    """One step of the ``T``-first lifted sampler.

    ``T_{-nu}(x)`` is only computed when the policy needs it and the draw
    fell outside the acceptance branch (or always, with ``debug``, to check
    the policy's validity conditions).
    """
    x, nu = state.state, Direction(state.direction)
    before = proposal.counter.ratio_evals
    idx, terms = transition_terms(target, proposal, x, nu)
    t_nu = float(terms.sum())
    u = rng.random()
    if u < t_nu:
        k = min(int(np.searchsorted(np.cumsum(terms), u, side="right")), idx.size - 1)
        y = flip(x, int(idx[k]))
        return StepOutcome(LiftedChainState(y, nu), True, _spent(proposal, before), "accept")
    t_other = None
    if debug or (rho.needs_other and t_nu < 1.0):
        t_other = acceptance_mass_T(target, proposal, x, -nu)
    r = rho(x, nu, t_nu, t_other) if t_other is not None or not rho.needs_other else 0.0
    if debug:
        check_rho(x, nu, r, rho(x, -nu, t_other, t_nu), t_nu, t_other)
    if u < t_nu + r:
        return StepOutcome(LiftedChainState(x, nu.reversed), False, _spent(proposal, before), "flip")
    return StepOutcome(state, False, _spent(proposal, before), "reject")


def revmix_step(target, proposal, state: LiftedChainState, rng) -> StepOutcome:
    x, nu = state.state, Direction(state.direction)
    before = proposal.counter.ratio_evals
    mu = Direction.UP if rng.random() < 0.5 else Direction.DOWN
    try:
        draw = proposal.sample_directed(target, x, mu, rng)
    except EmptyNeighborhood:
        return StepOutcome(state, False, 0, "reject")
    log_a = log_acceptance_directed(target, proposal, x, mu, draw)
    if _accept(rng, log_a):
        return StepOutcome(LiftedChainState(draw.y, nu), True, _spent(proposal, before), "accept")
    return StepOutcome(state, False, _spent(proposal, before), "reject")


def step(kind: SamplerKind, target, proposal, state: LiftedChainState, rng, **kw) -> StepOutcome:
    if kind.algorithm == "mh":
        return mh_step(target, proposal, state, rng)
    if kind.algorithm == "lifted1":
        return lifted1_step(target, proposal, state, rng)
    if kind.algorithm == "lifted2":
        return lifted2_step(target, proposal, kind.rho, state, rng, **kw)
    return revmix_step(target, proposal, state, rng)


# ------------------------------------------------------------------------ runs


def initial_state(target, rng, init=None) -> LiftedChainState:
    """Uniformly random spins and direction unless ``init`` is given."""
    if isinstance(init, LiftedChainState):
        return LiftedChainState(init.state, as_direction(int(init.direction)))
    if init is None:
        x = BinaryState(rng.choice(np.array([-1, 1], dtype=np.int8), size=target.n))
    else:
        x = init if isinstance(init, BinaryState) else BinaryState(init)
    nu = Direction.UP if rng.random() < 0.5 else Direction.DOWN
    return LiftedChainState(x, nu)


def run_chain(kind: SamplerKind, target, statistic=None, iters: int = 10_000, burnin: int = 0,
              seed: int = 0, init=None, engine: str = "auto", record_states: bool = False):
    """Run one chain and summarise it.

    ``statistic`` maps a :class:`BinaryState` to a float; ``None`` means the
    magnetisation ``sum_i x_i``. ``iters`` counts all iterations, the first
    ``burnin`` of which are discarded. ``engine="numba"`` (chosen
    automatically when possible) runs the compiled incremental engine for
    Ising and table-backed targets; ``"python"`` steps through
    :func:`step`. Both are deterministic given ``seed``, but they consume
    random numbers differently. ``record_states`` keeps the per-iteration
    state codes and directions.

    Returns a :class:`~posetmc.diagnostics.TraceSummary`.
    """
    from posetmc import engine as fast
    from posetmc.diagnostics import TraceSummary, magnetisation

    if not iters > burnin >= 0:
        raise ValueError("need iters > burnin >= 0")
    if engine not in ("auto", "numba", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    supported = statistic is None and fast.supports(target, kind)
    if engine == "numba" and not supported:
        raise ValueError(f"the numba engine cannot run {kind.label} on this target with this statistic")
    use_fast = engine == "numba" or (engine == "auto" and supported)

    t0 = time.perf_counter()
    if use_fast:
        res = fast.run(kind, target, iters, burnin, seed, init=init, record_codes=record_states)
        return TraceSummary.from_run(kind, res["trace"].astype(float), res["accepted"], res["proposals"],
                                     res["flips"], res["ratio_evals"], res["normalizers"],
                                     time.perf_counter() - t0, codes=res.get("codes"),
                                     directions=res.get("directions"), final=res["final"])

    stat = magnetisation if statistic is None else statistic
    rng = np.random.default_rng(seed)
    proposal = kind.make_proposal()
    state = initial_state(target, rng, init)
    m = iters - burnin
    trace = np.empty(m)
    codes = np.empty(m, dtype=np.int64) if record_states else None
    dirs = np.empty(m, dtype=np.int8) if record_states else None
    accepted = proposals = flips = 0
    always_proposes = kind.algorithm in ("mh", "lifted2")
    for t in range(iters):
        if t == burnin:
            proposal.counter.reset()  # costs are reported for the recorded window only
        out = step(kind, target, proposal, state, rng)
        if t >= burnin:
            k = t - burnin
            proposals += always_proposes or out.evaluations > 0
            accepted += out.accepted
            flips += out.next.direction != state.direction
            trace[k] = stat(out.next.state)
            if codes is not None:
                codes[k] = out.next.state.code
                dirs[k] = out.next.direction
        state = out.next
    return TraceSummary.from_run(kind, trace, accepted, proposals, flips,
                                 proposal.counter.ratio_evals, proposal.counter.normalizers,
                                 time.perf_counter() - t0, codes=codes, directions=dirs, final=state)
