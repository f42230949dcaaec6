"""Lifted trans-dimensional sampling over covariate subsets.

A state is a model ``x`` (covariate subset, as a :class:`BinaryState`), the
model's parameters ``theta_x`` and a direction ``nu``. The model proposal
``q_{x,nu}`` puts a fixed self-mass ``w0`` on ``x`` (a within-model update)
and spreads ``1 - w0`` uniformly over ``N_nu(x)``; on the boundary that mass
points outside the model space and is rejected automatically.

Model switches use a :class:`SwitchProposal`, which draws ``theta'_y`` and
returns the log of the reversible-jump ratio ``r`` (target ratio times the
reverse/forward parameter-proposal densities). The switch is accepted with
``1 ∧ q_{y,-nu}(x) / q_{x,nu}(y) * r``; a rejection reverses ``nu``.

The toy fixture is a Gaussian linear model with a conjugate
normal-inverse-gamma prior, where the posterior of every model is known in
closed form and parameters can be drawn exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Protocol

import numpy as np
from scipy.special import gammaln

from posetmc.poset import BinaryState, Direction, all_states, directed_neighborhood, flip

__all__ = [
    "TransDimState",
    "SwitchProposal",
    "WithinModelKernel",
    "ConjugateToy",
    "toy_conjugate_target",
    "ExactConditionalSwitch",
    "ExactGibbs",
    "ModelProposal",
    "lifted_rj_step",
    "rj_step",
    "run_transdim",
    "model_switch_kernel",
]


class TransDimState(NamedTuple):
    """``params`` is ``(intercept, coefficients of included covariates ascending, sigma^2)``."""

    model: BinaryState
    params: np.ndarray
    direction: Direction


class SwitchProposal(Protocol):
    def propose(self, x: BinaryState, theta: np.ndarray, y: BinaryState, rng) -> tuple[np.ndarray, float]:
        """Return ``(theta'_y, log r)``."""


class WithinModelKernel(Protocol):
    def update(self, x: BinaryState, theta: np.ndarray, rng) -> np.ndarray: ...


# ------------------------------------------------------------------ toy model


@dataclass
class _Posterior:
    cols: np.ndarray
    Z: np.ndarray
    mean: np.ndarray
    chol_cov: np.ndarray  # lower Cholesky factor of V_n (beta | sigma^2 ~ N(mean, sigma^2 V_n))
    chol_cov_inv: np.ndarray
    logdet_cov: float
    a: float
    b: float
    log_marginal: float


@dataclass
class ConjugateToy:
    """Normal linear model ``y = Z_x beta + e``, ``e ~ N(0, sigma^2 I)``, intercept always in.

    Prior, for every model: ``beta | sigma^2 ~ N(0, sigma^2 tau2 I)`` and
    ``sigma^2 ~ InvGamma(a0, b0)``; models are a priori uniform.
    """

    design: np.ndarray
    response: np.ndarray
    tau2: float = 1.0
    a0: float = 1.0
    b0: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.design.shape[1]

    @property
    def n_obs(self) -> int:
        return self.design.shape[0]

    def _Z(self, cols: np.ndarray) -> np.ndarray:
        return np.column_stack([np.ones(self.n_obs), self.design[:, cols]])

    def posterior(self, x: BinaryState) -> _Posterior:
        if x.code in self._cache:
            return self._cache[x.code]
        cols = np.flatnonzero(x.bits > 0)
        Z = self._Z(cols)
        d = cols.size + 1
        prec = Z.T @ Z + np.eye(d) / self.tau2
        L = np.linalg.cholesky(prec)
        Linv = np.linalg.inv(L)
        cov = Linv.T @ Linv
        mean = cov @ (Z.T @ self.response)
        a = self.a0 + self.n_obs / 2
        b = self.b0 + 0.5 * float(self.response @ self.response - mean @ prec @ mean)
        logdet_cov = -2.0 * float(np.sum(np.log(np.diag(L))))
        log_m = (-0.5 * self.n_obs * math.log(2 * math.pi) + 0.5 * logdet_cov - 0.5 * d * math.log(self.tau2)
                 + self.a0 * math.log(self.b0) - a * math.log(b) + gammaln(a) - gammaln(self.a0))
        C = np.linalg.cholesky(cov)
        post = _Posterior(cols, Z, mean, C, np.linalg.inv(C), logdet_cov, a, b, float(log_m))
        self._cache[x.code] = post
        return post

    # closed form
    def log_mass(self, x: BinaryState) -> float:
        """Log marginal likelihood (models are a priori uniform)."""
        return self.posterior(x).log_marginal

    def log_ratio(self, x: BinaryState, i: int) -> float:
        return self.log_mass(flip(x, i)) - self.log_mass(x)

    def log_ratios(self, x: BinaryState, idx) -> np.ndarray:
        return np.array([self.log_ratio(x, int(i)) for i in idx])

    def log_mass_table(self) -> np.ndarray:
        return np.array([self.log_mass(s) for s in all_states(self.n)])

    def model_posterior(self) -> np.ndarray:
        lm = self.log_mass_table()
        p = np.exp(lm - lm.max())
        return p / p.sum()

    # densities, used by the switch proposal's r
    def log_joint(self, x: BinaryState, theta: np.ndarray) -> float:
        """``log p(data | theta, x) + log p(theta | x)``."""
        beta, s2 = theta[:-1], float(theta[-1])
        if s2 <= 0:
            return -np.inf
        resid = self.response - self.posterior(x).Z @ beta
        d = beta.size
        loglik = -0.5 * self.n_obs * math.log(2 * math.pi * s2) - 0.5 * float(resid @ resid) / s2
        logprior_beta = -0.5 * d * math.log(2 * math.pi * s2 * self.tau2) - 0.5 * float(beta @ beta) / (s2 * self.tau2)
        return loglik + logprior_beta + _log_invgamma(s2, self.a0, self.b0)

    def log_conditional(self, x: BinaryState, theta: np.ndarray) -> float:
        """``log pi(theta | x)``: normal-inverse-gamma density."""
        post = self.posterior(x)
        beta, s2 = theta[:-1], float(theta[-1])
        z = post.chol_cov_inv @ (beta - post.mean)
        d = beta.size
        log_normal = -0.5 * d * math.log(2 * math.pi * s2) - 0.5 * post.logdet_cov - 0.5 * float(z @ z) / s2
        return log_normal + _log_invgamma(s2, post.a, post.b)

    def sample_conditional(self, x: BinaryState, rng) -> np.ndarray:
        post = self.posterior(x)
        s2 = post.b / rng.gamma(post.a)
        out = np.empty(post.mean.size + 1)
        out[:-1] = post.mean + math.sqrt(s2) * (post.chol_cov @ rng.standard_normal(post.mean.size))
        out[-1] = s2
        return out


def _log_invgamma(s2: float, a: float, b: float) -> float:
    return a * math.log(b) - gammaln(a) - (a + 1) * math.log(s2) - b / s2


def toy_conjugate_target(p: int = 3, n_obs: int = 30, seed: int = 0, *, tau2: float = 1.0,
                         a0: float = 1.0, b0: float = 1.0) -> ConjugateToy:
    """Synthetic regression with weak signal, so posterior mass spreads over models."""
    if not 1 <= p <= 6:
        raise ValueError("the toy fixture supports 1 <= p <= 6")
    if n_obs <= p + 2:
        raise ValueError("need n_obs > p + 2")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_obs, p))
    beta = np.where(np.arange(p) % 2 == 0, 0.35, 0.0)
    y = 0.5 + X @ beta + rng.standard_normal(n_obs)
    return ConjugateToy(X, y, tau2, a0, b0)


# ------------------------------------------------------------- plug-in moves


class ExactGibbs:
    """Within-model update: an independent draw from ``pi(theta | x)``."""

    def __init__(self, toy: ConjugateToy):
        self.toy = toy

    def update(self, x, theta, rng):
        return self.toy.sample_conditional(x, rng)


class ExactConditionalSwitch:
    """Draw ``theta'_y ~ pi(. | y)``; ``r`` is computed from densities.

    ``log r = [log p(data, theta'_y | y) - log pi(theta'_y | y)]
            - [log p(data, theta_x | x) - log pi(theta_x | x)]``,
    which is the marginal ratio ``pi(y) / pi(x)`` for any parameter values.
    With ``noise_sd > 0`` the log ratio is perturbed by
    ``N(-noise_sd^2 / 2, noise_sd^2)`` (the penalty method), which keeps the
    chain exact while making ``r`` a noisy estimate.
    """

    def __init__(self, toy: ConjugateToy, noise_sd: float = 0.0):
        if noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        self.toy = toy
        self.noise_sd = noise_sd

    def log_evidence(self, x, theta) -> float:
        return self.toy.log_joint(x, theta) - self.toy.log_conditional(x, theta)

    def propose(self, x, theta, y, rng):
        new = self.toy.sample_conditional(y, rng)
        log_r = self.log_evidence(y, new) - self.log_evidence(x, theta)
        if self.noise_sd > 0:
            s = self.noise_sd
            log_r += rng.normal(-0.5 * s * s, s)
        return new, log_r


@dataclass(frozen=True)
class ModelProposal:
    """Self-mass ``w0`` plus uniform directed moves: ``q_{x,nu}(y) = (1 - w0) / n_{-nu}(x)``.

    Because ``q_{x,-1}(x) = q_{x,+1}(x) = w0`` by construction, the
    symmetry required for the lifted sampler holds for every model.
    """

    w0: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.w0 <= 1.0:
            raise ValueError("self-proposal mass w0 must lie in (0, 1]")

    @classmethod
    def from_self_masses(cls, w_down: float, w_up: float) -> "ModelProposal":
        """Build from per-direction self masses, which the lifted sampler needs to be equal."""
        if w_down != w_up:
            raise ValueError(f"self-proposal masses differ between directions ({w_down} vs {w_up})")
        return cls(w_up)

    def self_mass(self, x: BinaryState, nu: int) -> float:
        return self.w0

    def log_q(self, x: BinaryState, nu: int, y: BinaryState) -> float:
        """``log q_{x,nu}(y)`` for ``y`` in ``N_nu(x)``."""
        m = x.n_minus if nu > 0 else x.n_plus
        return math.log1p(-self.w0) - math.log(m) if m else -np.inf

    def draw(self, x: BinaryState, nu: int, rng) -> BinaryState | None:
        """``x`` itself (self-move), a neighbour, or ``None`` (outside the space)."""
        if rng.random() < self.w0:
            return x
        idx = directed_neighborhood(x, nu)
        if idx.size == 0:
            return None
        return flip(x, int(idx[rng.integers(idx.size)]))


# ---------------------------------------------------------------------- steps


def _accept(rng, log_a: float) -> bool:
    return log_a >= 0 or rng.random() < math.exp(log_a)


def lifted_rj_step(q: ModelProposal, switch, within, state: TransDimState, rng) -> tuple[TransDimState, str]:
    """One lifted trans-dimensional step; returns the new state and ``"within"``,
    ``"accept"`` or ``"flip"``."""
    x, theta, nu = state
    y = q.draw(x, nu, rng)
    if y is x:
        return TransDimState(x, within.update(x, theta, rng), nu), "within"
    if y is None:
        return TransDimState(x, theta, nu.reversed), "flip"
    new, log_r = switch.propose(x, theta, y, rng)
    log_a = q.log_q(y, -nu, x) - q.log_q(x, nu, y) + log_r
    if _accept(rng, log_a):
        return TransDimState(y, new, nu), "accept"
    return TransDimState(x, theta, nu.reversed), "flip"


def rj_step(q: ModelProposal, switch, within, state: TransDimState, rng) -> tuple[TransDimState, str]:
    """Reversible-jump counterpart with ``q_x = (q_{x,-1} + q_{x,+1}) / 2``."""
    x, theta, nu = state
    mu = Direction.UP if rng.random() < 0.5 else Direction.DOWN
    y = q.draw(x, mu, rng)
    if y is x:
        return TransDimState(x, within.update(x, theta, rng), nu), "within"
    if y is None:
        return state, "reject"
    new, log_r = switch.propose(x, theta, y, rng)
    # q_x(y) = q_{x,mu}(y) / 2 and q_y(x) = q_{y,-mu}(x) / 2, the halves cancel
    log_a = q.log_q(y, -mu, x) - q.log_q(x, mu, y) + log_r
    if _accept(rng, log_a):
        return TransDimState(y, new, nu), "accept"
    return state, "reject"


@dataclass
class TransDimRun:
    models: np.ndarray  # model codes
    sigma2: np.ndarray
    directions: np.ndarray
    n_switch_proposals: int
    n_accepted: int
    n_flips: int

    @property
    def accept_rate(self) -> float:
        return self.n_accepted / self.n_switch_proposals if self.n_switch_proposals else 0.0

    @property
    def flip_rate(self) -> float:
        return self.n_flips / self.models.size


def run_transdim(toy: ConjugateToy, iters: int, seed: int, *, lifted: bool = True, w0: float = 0.5,
                 noise_sd: float = 0.0, burnin: int = 0, init: BinaryState | None = None) -> TransDimRun:
    """Run the lifted (or reversible-jump) sampler on the toy fixture."""
    if not iters > burnin >= 0:
        raise ValueError("need iters > burnin >= 0")
    rng = np.random.default_rng(seed)
    q = ModelProposal(w0)
    switch = ExactConditionalSwitch(toy, noise_sd)
    within = ExactGibbs(toy)
    x = init if init is not None else BinaryState(-np.ones(toy.n, dtype=np.int8))
    state = TransDimState(x, toy.sample_conditional(x, rng), Direction.UP)
    kernel = lifted_rj_step if lifted else rj_step
    m = iters - burnin
    models = np.empty(m, dtype=np.int64)
    sigma2 = np.empty(m)
    dirs = np.empty(m, dtype=np.int8)
    switches = accepted = flips = 0
    for t in range(iters):
        state_prev = state
        state, kind = kernel(q, switch, within, state, rng)
        if t >= burnin:
            k = t - burnin
            switches += kind in ("accept", "flip", "reject")
            accepted += kind == "accept"
            flips += state.direction != state_prev.direction
            models[k] = state.model.code
            sigma2[k] = state.params[-1]
            dirs[k] = state.direction
    return TransDimRun(models, sigma2, dirs, switches, accepted, flips)


def model_switch_kernel(toy: ConjugateToy, rng=None, w0: float = 0.5) -> np.ndarray:
    """Lifted model-space kernel restricted to switch proposals.

    Row ``(x, nu)`` (index ``2 * code + (nu == +1)``) moves to ``(y, nu)``
    with probability ``q^dir_{x,nu}(y) * alpha`` and to ``(x, -nu)``
    otherwise, where ``alpha`` is computed by the sampler's acceptance rule
    from an ``r`` returned by :class:`ExactConditionalSwitch` at freshly
    drawn parameters.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    q = ModelProposal(w0)
    switch = ExactConditionalSwitch(toy)
    states = all_states(toy.n)
    P = np.zeros((2 * len(states), 2 * len(states)))
    for x in states:
        theta = toy.sample_conditional(x, rng)
        for nu in (Direction.DOWN, Direction.UP):
            i = 2 * x.code + (nu > 0)
            idx = directed_neighborhood(x, nu)
            stay = 1.0
            for j in idx:
                y = flip(x, int(j))
                _, log_r = switch.propose(x, theta, y, rng)
                log_a = min(0.0, q.log_q(y, -nu, x) - q.log_q(x, nu, y) + log_r)
                p = math.exp(log_a) / idx.size
                P[i, 2 * y.code + (nu > 0)] += p
                stay -= p
            P[i, 2 * x.code + (nu < 0)] += stay
    return P
