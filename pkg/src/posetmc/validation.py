"""Exact validation suites run by ``posetmc validate`` and the test-suite.

Each suite builds transition matrices by enumeration on a battery of seeded
random tabular targets and checks one structural property: invariance,
variance orderings between kernels, equivalences between algorithms, or the
mixture identity on a space where it is exact.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from posetmc import oracle
from posetmc.poset import all_states
from posetmc.proposals import BARKER, BalancingFunction
from posetmc.samplers import RhoPolicy, SamplerKind

__all__ = [
    "SuiteResult",
    "battery",
    "all_kinds",
    "stationarity_suite",
    "ordering_suite",
    "mixture_ordering_suite",
    "variance_table",
    "worst_equals_lifted1_suite",
    "mixture_identity_suite",
    "balancing_suite",
    "run_all",
]

VAR_SLACK = 1e-9
EXACT_TOL = 1e-12


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f}s)"


def battery(seed: int = 0, count: int = 20, sizes=range(3, 9)):
    """``count`` random tabular targets cycling through ``sizes``; seeds ``seed + k``."""
    sizes = list(sizes)
    return [oracle.random_tabular_target(sizes[k % len(sizes)], seed + k) for k in range(count)]


def all_kinds(proposal: str, kappa_seed: int = 0) -> list[SamplerKind]:
    return [
        SamplerKind("mh", proposal),
        SamplerKind("lifted1", proposal),
        SamplerKind("lifted2", proposal, RhoPolicy.optimal()),
        SamplerKind("lifted2", proposal, RhoPolicy.worst()),
        SamplerKind("lifted2", proposal, RhoPolicy.interpolated(oracle.random_kappa(kappa_seed))),
        SamplerKind("revmix", proposal),
    ]


def magnetisation_vector(n: int, lifted: bool) -> np.ndarray:
    f = np.array([float(s.bits.sum()) for s in all_states(n)])
    return np.repeat(f, 2) if lifted else f


def _timed(name, fn) -> SuiteResult:
    t0 = time.perf_counter()
    passed, detail = fn()
    return SuiteResult(name, passed, detail, time.perf_counter() - t0)


def stationarity_suite(targets, proposals=("uniform", "barker")) -> SuiteResult:
    """``||pi_bar P - pi_bar||_inf < 1e-12`` for every kind; also skew balance for lifted kinds."""
    def run():
        worst_stat = worst_skew = worst_rows = 0.0
        for k, tg in enumerate(targets):
            _, pi = oracle.enumerate_states(tg)
            _, pib = oracle.enumerate_states(tg, lifted=True)
            for prop in proposals:
                for kind in all_kinds(prop, kappa_seed=k):
                    K = oracle.build_kernel(kind, tg)
                    worst_stat = max(worst_stat, oracle.stationarity_error(K, pib))
                    worst_rows = max(worst_rows, K.row_sum_error())
                    if kind.lifted:
                        worst_skew = max(worst_skew, oracle.skew_balance_error(K, pi))
        ok = worst_stat < EXACT_TOL and worst_skew < EXACT_TOL and worst_rows < EXACT_TOL
        return ok, f"max stationarity residual {worst_stat:.2e}, skew balance {worst_skew:.2e}, row sums {worst_rows:.2e}"
    return _timed("invariance", run)


def _variances(tg, prop, kappa_seed):
    _, pi = oracle.enumerate_states(tg)
    _, pib = oracle.enumerate_states(tg, lifted=True)
    fl = magnetisation_vector(tg.n, True)
    fp = magnetisation_vector(tg.n, False)
    out = {}
    for name, rho in (("optimal", RhoPolicy.optimal()), ("custom", RhoPolicy.interpolated(oracle.random_kappa(kappa_seed))),
                      ("worst", RhoPolicy.worst())):
        out[name] = oracle.asymptotic_variance(oracle.build_kernel(SamplerKind("lifted2", prop, rho), tg), pib, fl)
    out["revmix"] = oracle.asymptotic_variance(oracle.build_kernel(SamplerKind("revmix", prop), tg, lifted=False), pi, fp)
    out["mh"] = oracle.asymptotic_variance(oracle.build_kernel(SamplerKind("mh", prop), tg, lifted=False), pi, fp)
    return out


def variance_table(targets, proposals=("uniform", "barker")) -> list[dict]:
    """Exact asymptotic variances of the magnetisation for every (target, proposal)."""
    return [_variances(tg, prop, k) for k, tg in enumerate(targets) for prop in proposals]


def ordering_suite(targets, proposals=("uniform", "barker"), table=None) -> SuiteResult:
    """``var(rho*) <= var(custom rho) <= var(rho^w)`` for the magnetisation."""
    def run():
        slack = np.inf
        for v in table if table is not None else variance_table(targets, proposals):
            slack = min(slack, v["custom"] - v["optimal"], v["worst"] - v["custom"])
        return slack >= -VAR_SLACK, f"min slack {slack:.3e} (>= -1e-9 required)"
    return _timed("rho ordering", run)


def mixture_ordering_suite(targets, proposals=("uniform", "barker"), table=None) -> SuiteResult:
    """Every lifted2 policy has variance at most that of the coin-flip mixture."""
    def run():
        slack = np.inf
        for v in table if table is not None else variance_table(targets, proposals):
            slack = min(slack, *(v["revmix"] - v[r] for r in ("optimal", "custom", "worst")))
        return slack >= -VAR_SLACK, f"min var(revmix) - var(lifted2) {slack:.3e}"
    return _timed("lifted vs mixture ordering", run)


def worst_equals_lifted1_suite(targets, proposals=("uniform", "barker")) -> SuiteResult:
    def run():
        err = 0.0
        for tg in targets:
            for prop in proposals:
                a = oracle.build_kernel(SamplerKind("lifted1", prop), tg).P
                b = oracle.build_kernel(SamplerKind("lifted2", prop, RhoPolicy.worst()), tg).P
                err = max(err, float(np.max(np.abs(a - b))))
        return err <= EXACT_TOL, f"max |P_lifted1 - P_lifted2[worst]| {err:.2e}"
    return _timed("lifted2[worst] = lifted1", run)


# ---------------------------------------------------------- mixture identity


def torus_space(m: int, d: int = 2):
    """States of ``Z_m^d``; "up" moves add 1 to one coordinate, "down" moves subtract 1.

    Every state has exactly ``d`` up- and ``d`` down-neighbours, which is the
    balanced-neighbourhood situation where the mixture identity is exact.
    """
    shape = (m,) * d
    size = m ** d
    up = np.empty((size, d), dtype=np.int64)
    down = np.empty((size, d), dtype=np.int64)
    for s in range(size):
        c = np.array(np.unravel_index(s, shape))
        for j in range(d):
            cu, cd = c.copy(), c.copy()
            cu[j] = (c[j] + 1) % m
            cd[j] = (c[j] - 1) % m
            up[s, j] = np.ravel_multi_index(cu, shape)
            down[s, j] = np.ravel_multi_index(cd, shape)
    return up, down


def _graph_kernels(log_pi, up, down):
    """Uniform-proposal MH, lifted (rho^w) and mixture kernels on a directed neighbour graph."""
    size = log_pi.size
    nbrs = {+1: up, -1: down}
    mh_terms = np.zeros((size, size))
    dir_terms = {+1: np.zeros((size, size)), -1: np.zeros((size, size))}
    for x in range(size):
        full = np.concatenate([up[x], down[x]])
        for y in full:
            rev = np.concatenate([up[y], down[y]])
            a = min(1.0, math.exp(log_pi[y] - log_pi[x]) * (1 / rev.size) / (1 / full.size))
            mh_terms[x, y] += a / full.size
        for nu in (+1, -1):
            for y in nbrs[nu][x]:
                a = min(1.0, math.exp(log_pi[y] - log_pi[x]) * (1 / nbrs[-nu][y].size) / (1 / nbrs[nu][x].size))
                dir_terms[nu][x, y] += a / nbrs[nu][x].size
    return mh_terms, dir_terms


def mixture_identity_suite(seed: int = 0, m: int = 5, trials: int = 5) -> SuiteResult:
    """``q_x alpha = (q_{x,+1} alpha_{+1} + q_{x,-1} alpha_{-1}) / 2`` on a balanced torus,
    and, consequently, lifted (rho^w) beats MH there in asymptotic variance."""
    def run():
        up, down = torus_space(m)
        err, slack = 0.0, np.inf
        size = up.shape[0]
        for k in range(trials):
            log_pi = np.random.default_rng(seed + k).uniform(-3, 3, size)
            pi = np.exp(log_pi - log_pi.max())
            pi /= pi.sum()
            mh, dirs = _graph_kernels(log_pi, up, down)
            err = max(err, float(np.max(np.abs(mh - 0.5 * (dirs[+1] + dirs[-1])))))
            P_mh = mh + np.diag(1.0 - mh.sum(axis=1))
            P_l = np.zeros((2 * size, 2 * size))
            for nu, off in ((-1, 0), (+1, 1)):
                moves = dirs[nu]
                for x in range(size):
                    for y in np.flatnonzero(moves[x]):
                        P_l[2 * x + off, 2 * y + off] += moves[x, y]
                    P_l[2 * x + off, 2 * x + 1 - off] += 1.0 - moves[x].sum()
            f = np.random.default_rng(seed + 100 + k).standard_normal(size)
            v_mh = oracle.asymptotic_variance(P_mh, pi, f)
            v_l = oracle.asymptotic_variance(P_l, np.repeat(pi, 2) / 2, np.repeat(f, 2))
            slack = min(slack, v_mh - v_l)
        ok = err < EXACT_TOL and slack >= -VAR_SLACK
        return ok, f"identity residual {err:.2e}; min var(MH) - var(lifted) {slack:.3e}"
    return _timed("mixture identity", run)


def balancing_suite() -> SuiteResult:
    """``g(t) / g(1/t) = t`` on a 100-point log grid, relative error."""
    def run():
        t = np.logspace(-6, 6, 100)
        err = 0.0
        for g in ("barker", "sqrt"):
            f = BalancingFunction(g)
            err = max(err, float(np.max(np.abs(f(t) / f(1 / t) / t - 1.0))))
        return err < EXACT_TOL and BARKER(1.0) == 0.5, f"max relative error of g(t)/g(1/t) = t: {err:.2e}"
    return _timed("balancing functions", run)


def run_all(seed: int = 0, count: int = 20) -> list[SuiteResult]:
    targets = battery(seed, count)
    table = variance_table(targets)
    return [
        balancing_suite(),
        stationarity_suite(targets),
        worst_equals_lifted1_suite(targets),
        ordering_suite(targets, table=table),
        mixture_ordering_suite(targets, table=table),
        mixture_identity_suite(seed),
    ]
