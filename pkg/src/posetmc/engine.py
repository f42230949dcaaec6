"""Compiled chain runner for Ising and table-backed targets.

The engine keeps, for the current state, every single-flip log-ratio and
the proposal weight of every coordinate in two segment trees (one per
direction). Flipping a coordinate only touches the sites whose log-ratio
changes (the site and its lattice neighbours for Ising, every site for a
table), so normalisers ``c_{+1}(x)``, ``c_{-1}(x)`` and ``c(x)`` are read off
the tree roots and categorical draws take ``O(log n)``.

Cost counters follow the accounting of the Python samplers: each normaliser
of a neighbourhood of size ``m`` costs ``m`` log-ratio evaluations, and a
uniform proposal costs one evaluation for its acceptance ratio.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from posetmc.poset import BinaryState, Direction, LiftedChainState
from posetmc.targets import IsingModel

ALGORITHMS = {"mh": 0, "lifted1": 1, "lifted2[optimal]": 2, "lifted2[worst]": 3, "revmix": 4}
PROPOSALS = {"uniform": 0, "barker": 1, "sqrt": 2}
_ISING, _TABLE = 0, 1


def supports(target, kind=None) -> bool:
    """Whether the compiled engine can run ``kind`` (any kind if omitted) on ``target``."""
    if kind is not None:
        key = kind.algorithm if kind.rho is None else f"{kind.algorithm}[{kind.rho.tag}]"
        if key not in ALGORITHMS or kind.proposal not in PROPOSALS:
            return False
    return isinstance(target, IsingModel) or hasattr(target, "log_mass_table")


def _algorithm_code(kind) -> int:
    key = kind.algorithm if kind.rho is None else f"{kind.algorithm}[{kind.rho.tag}]"
    if key not in ALGORITHMS:
        raise ValueError(f"the compiled engine does not support {kind.label}")
    return ALGORITHMS[key]


# ----------------------------------------------------------------- primitives


@nb.njit(cache=True)
def _weight(prop, d):
    if prop == 0:
        return 1.0
    if prop == 1:
        if d >= 0.0:
            return 1.0 / (1.0 + math.exp(-d))
        e = math.exp(d)
        return e / (1.0 + e)
    return math.exp(0.5 * d)


@nb.njit(cache=True)
def _tree_set(tree, size, i, v):
    pos = size + i
    tree[pos] = v
    pos >>= 1
    while pos >= 1:
        tree[pos] = tree[2 * pos] + tree[2 * pos + 1]
        pos >>= 1


@nb.njit(cache=True)
def _tree_find(tree, size, u):
    """Leaf index where the running sum first exceeds ``u`` (ascending order)."""
    pos = 1
    while pos < size:
        left = tree[2 * pos]
        if u < left or tree[2 * pos + 1] == 0.0:
            pos = 2 * pos
        else:
            u -= left
            pos = 2 * pos + 1
    return pos - size


@nb.njit(cache=True)
def _delta(kind, i, x, code, nbr, deg, alpha, lam, table):
    if kind == 0:
        s = 0.0
        for k in range(deg[i]):
            s += x[nbr[i, k]]
        return -2.0 * x[i] * (alpha[i] + lam * s)
    a = table[code ^ (1 << i)]
    b = table[code]
    if b == -np.inf:
        return np.inf if a > -np.inf else np.nan
    return a - b


@nb.njit(cache=True)
def _refresh(kind, prop, i, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table):
    d = _delta(kind, i, x, code, nbr, deg, alpha, lam, table)
    delta[i] = d
    if prop == 0:
        w = 1.0
    else:
        w = _weight(prop, d) if d == d else 0.0
    if x[i] < 0:
        _tree_set(up, size, i, w)
        _tree_set(dn, size, i, 0.0)
    else:
        _tree_set(dn, size, i, w)
        _tree_set(up, size, i, 0.0)


@nb.njit(cache=True)
def _apply_flip(kind, prop, j, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table):
    """Flip coordinate ``j`` and refresh affected sites; returns the new code."""
    n = x.size
    x[j] = -x[j]
    if n <= 62:
        code ^= 1 << j
    if kind == 0:
        _refresh(kind, prop, j, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table)
        for k in range(deg[j]):
            _refresh(kind, prop, nbr[j, k], x, code, delta, up, dn, size, nbr, deg, alpha, lam, table)
    else:
        for i in range(n):
            _refresh(kind, prop, i, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table)
    return code


@nb.njit(cache=True)
def _leaf(tree, size, i):
    return tree[size + i]


@nb.njit(cache=True)
def _log(v):
    return math.log(v) if v > 0.0 else -np.inf


@nb.njit(cache=True)
def _directed_move(kind, prop, nu, j, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table):
    """Log acceptance of flipping ``j`` from direction ``nu``; leaves the state flipped.

    Returns ``(log_alpha, code_after_flip, size of the reverse neighbourhood)``.
    """
    fwd = up if nu > 0 else dn
    c_fwd = fwd[1]
    w_fwd = _leaf(fwd, size, j)
    d = delta[j]
    code = _apply_flip(kind, prop, j, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table)
    rev = dn if nu > 0 else up
    c_rev = rev[1]
    w_rev = _leaf(rev, size, j)
    if prop == 0:
        # uniform: tree values are counts, so c's are neighbourhood sizes
        s = d + math.log(c_fwd) - math.log(c_rev)
    else:
        s = d + _log(w_rev) - _log(c_rev) - _log(w_fwd) + _log(c_fwd)
    if s != s:
        s = -np.inf
    return min(0.0, s), code, c_rev


@nb.njit(cache=True)
def _T(kind, prop, nu, x, nplus, code, delta, up, dn, size, nbr, deg, alpha, lam, table, terms, ev):
    """``T_nu(x)`` with per-neighbour terms written to ``terms`` (0 outside ``N_nu``)."""
    fwd = up if nu > 0 else dn
    c = fwd[1]
    n = x.size
    total = 0.0
    m = n - nplus if nu > 0 else nplus
    m_rev = n - m + 1  # |N_{-nu}(y)| for every y in N_nu(x)
    for i in range(n):
        terms[i] = 0.0
    if c == 0.0:
        return 0.0, code
    for i in range(n):
        if x[i] != -nu:
            continue
        w = _leaf(fwd, size, i)
        if w == 0.0:
            continue
        la, code, c_rev = _directed_move(kind, prop, nu, i, x, code, delta, up, dn, size,
                                         nbr, deg, alpha, lam, table)
        if prop != 0:
            ev[0] += m_rev
            ev[1] += 1
        code = _apply_flip(kind, prop, i, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table)
        terms[i] = (w / c) * math.exp(la)
        total += terms[i]
    ev[0] += m
    if prop != 0:
        ev[1] += 1
    return total, code


@nb.njit(cache=True, nogil=True)
def _run(algo, prop, kind, x, nu, nbr, deg, alpha, lam, table, iters, burnin, seed, record_codes):
    np.random.seed(seed)
    n = x.size
    size = 1
    while size < n:
        size <<= 1
    up = np.zeros(2 * size)
    dn = np.zeros(2 * size)
    delta = np.zeros(n)
    code = 0
    if n <= 62:
        for i in range(n):
            if x[i] > 0:
                code |= 1 << i
    for i in range(n):
        _refresh(kind, prop, i, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table)
    nplus = 0
    for i in range(n):
        if x[i] > 0:
            nplus += 1

    m = iters - burnin
    trace = np.empty(m, dtype=np.int64)
    codes = np.empty(m if record_codes else 0, dtype=np.int64)
    dirs = np.empty(m if record_codes else 0, dtype=np.int8)
    terms = np.zeros(n)
    ev = np.zeros(2, dtype=np.int64)  # ratio evaluations, normalisers
    accepted = 0
    proposals = 0
    flips = 0

    for t in range(iters):
        if t == burnin:
            ev[0] = 0
            ev[1] = 0
        moved = False
        j = -1
        proposed = True
        old_nu = nu
        if algo == 0:  # MH
            c = up[1] + dn[1]
            if c > 0.0:
                r = np.random.random() * c
                if r < up[1] or dn[1] == 0.0:
                    j = _tree_find(up, size, min(r, up[1]))
                else:
                    j = _tree_find(dn, size, r - up[1])
                w_f = _leaf(up, size, j) + _leaf(dn, size, j)
                d = delta[j]
                code = _apply_flip(kind, prop, j, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table)
                c_y = up[1] + dn[1]
                w_r = _leaf(up, size, j) + _leaf(dn, size, j)
                if prop == 0:
                    s = d
                    ev[0] += 1
                else:
                    s = d + _log(w_r) - _log(c_y) - _log(w_f) + _log(c)
                    ev[0] += 2 * n
                    ev[1] += 2
                if s != s:
                    s = -np.inf
                if np.random.random() < math.exp(min(0.0, s)):
                    moved = True
                else:
                    code = _apply_flip(kind, prop, j, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table)
        elif algo == 1 or algo == 4:  # lifted1, revmix
            dirn = nu
            if algo == 4:
                dirn = 1 if np.random.random() < 0.5 else -1
            fwd = up if dirn > 0 else dn
            c = fwd[1]
            if c == 0.0:
                proposed = False
                if algo == 1:
                    nu = -nu
            else:
                j = _tree_find(fwd, size, np.random.random() * c)
                m_fwd = n - nplus if dirn > 0 else nplus
                la, code, c_rev = _directed_move(kind, prop, dirn, j, x, code, delta, up, dn, size,
                                                 nbr, deg, alpha, lam, table)
                if prop == 0:
                    ev[0] += 1
                else:
                    ev[0] += m_fwd + (n - m_fwd + 1)
                    ev[1] += 2
                if np.random.random() < math.exp(la):
                    moved = True
                else:
                    code = _apply_flip(kind, prop, j, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table)
                    if algo == 1:
                        nu = -nu
        else:  # lifted2, optimal (2) or worst (3) rho
            t_nu, code = _T(kind, prop, nu, x, nplus, code, delta, up, dn, size, nbr, deg, alpha, lam, table, terms, ev)
            u = np.random.random()
            if u < t_nu:
                acc = 0.0
                j = -1
                for i in range(n):
                    if terms[i] > 0.0:
                        j = i
                        acc += terms[i]
                        if u < acc:
                            break
                code = _apply_flip(kind, prop, j, x, code, delta, up, dn, size, nbr, deg, alpha, lam, table)
                moved = True
            else:
                if algo == 3:
                    rho = 1.0 - t_nu
                elif t_nu >= 1.0:
                    rho = 0.0
                else:
                    t_other, code = _T(kind, prop, -nu, x, nplus, code, delta, up, dn, size, nbr, deg, alpha,
                                       lam, table, terms, ev)
                    rho = max(0.0, t_other - t_nu)
                if u < t_nu + rho:
                    nu = -nu
        if moved:
            nplus += 1 if x[j] > 0 else -1
        if t >= burnin:
            k = t - burnin
            trace[k] = 2 * nplus - n
            if record_codes:
                codes[k] = code
                dirs[k] = nu
            if moved:
                accepted += 1
            if proposed:
                proposals += 1
            if nu != old_nu:
                flips += 1
    return trace, codes, dirs, accepted, proposals, flips, ev[0], ev[1], nu


def run(kind, target, iters: int, burnin: int, seed: int, init=None, record_codes: bool = False) -> dict:
    """Run ``kind`` on ``target``; see :func:`posetmc.samplers.run_chain`."""
    algo = _algorithm_code(kind)
    prop = PROPOSALS[kind.proposal]
    n = target.n
    if isinstance(target, IsingModel):
        tkind = _ISING
        nbr, deg = target.nbr, target.deg
        alpha, lam = np.asarray(target.alpha, dtype=float), float(target.lam)
        table = np.zeros(1)
    else:
        tkind = _TABLE
        table = np.ascontiguousarray(target.log_mass_table(), dtype=float)
        nbr, deg = np.zeros((1, 4), dtype=np.int64), np.zeros(1, dtype=np.int64)
        alpha, lam = np.zeros(1), 0.0
        if n > 30:
            raise ValueError("table-backed targets are limited to n <= 30")
    if record_codes and n > 62:
        raise ValueError("state codes can only be recorded for n <= 62")

    rng = np.random.default_rng(seed)
    if isinstance(init, LiftedChainState):
        x0, nu0 = init.state, int(init.direction)
    else:
        x0 = init
        nu0 = None
    if x0 is None:
        bits = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
    else:
        bits = (x0 if isinstance(x0, BinaryState) else BinaryState(x0)).bits
    if nu0 is None:
        nu0 = 1 if rng.random() < 0.5 else -1
    x = np.array(bits, dtype=np.int8)
    engine_seed = int(rng.integers(0, 2**31 - 1))

    trace, codes, dirs, acc, props, flips, ev, norms, nu = _run(
        algo, prop, tkind, x, nu0, nbr, deg, alpha, lam, table, int(iters), int(burnin),
        engine_seed, bool(record_codes))
    return {
        "trace": trace,
        "codes": codes if record_codes else None,
        "directions": dirs if record_codes else None,
        "accepted": acc,
        "proposals": props,
        "flips": flips,
        "ratio_evals": ev,
        "normalizers": norms,
        "final": LiftedChainState(BinaryState(x), Direction(nu)),
    }
