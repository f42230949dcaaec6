"""Target PMFs on {-1, +1}^n.

Every target exposes an unnormalised ``log_mass`` and the single-flip
``log_ratio(x, i) = log pi(flip(x, i)) - log pi(x)``. Normalising constants
are never computed here; see :mod:`posetmc.oracle` for small-space
enumeration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, runtime_checkable

import numpy as np
from scipy.special import gammaln

from posetmc.poset import BinaryState, flip

__all__ = [
    "TargetModel",
    "IsingModel",
    "FieldSpec",
    "build_field",
    "VariableSelectionTarget",
    "DatasetError",
    "load_crime_csv",
    "crime_dataset_path",
    "model_prior",
    "TabularTarget",
]


@runtime_checkable
class TargetModel(Protocol):
    n: int

    def log_mass(self, x: BinaryState) -> float: ...

    def log_ratio(self, x: BinaryState, i: int) -> float: ...

    def log_ratios(self, x: BinaryState, idx: np.ndarray) -> np.ndarray: ...


def _check_dim(target, x: BinaryState) -> None:
    if x.n != target.n:
        raise ValueError(f"state has dimension {x.n}, target expects {target.n}")


# --------------------------------------------------------------------------- Ising


def lattice_neighbors(eta: int, periodic: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Row-major nearest-neighbour table of an ``eta x eta`` lattice.

    Returns ``(nbr, deg)``: ``nbr[i, :deg[i]]`` are the sites adjacent to
    ``i``; unused slots hold -1.
    """
    n = eta * eta
    nbr = np.full((n, 4), -1, dtype=np.int64)
    deg = np.zeros(n, dtype=np.int64)
    for i in range(n):
        r, c = divmod(i, eta)
        cand = []
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if periodic:
                rr %= eta
                cc %= eta
            elif not (0 <= rr < eta and 0 <= cc < eta):
                continue
            j = rr * eta + cc
            if j != i and j not in cand:
                cand.append(j)
        deg[i] = len(cand)
        nbr[i, : len(cand)] = cand
    return nbr, deg


@dataclass(frozen=True, eq=False)
class IsingModel:
    """2-D Ising model ``log pi(x) = sum_i alpha_i x_i + lam * sum_<ij> x_i x_j``.

    Sites are encoded row-major; the boundary is free unless ``periodic``.
    """

    eta: int
    lam: float
    alpha: np.ndarray
    periodic: bool = False
    nbr: np.ndarray = field(init=False, repr=False)
    deg: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.eta < 1:
            raise ValueError("eta must be positive")
        if not self.lam > 0:
            raise ValueError("coupling lam must be > 0")
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim == 0:
            alpha = np.full(self.eta * self.eta, float(alpha))
        if alpha.shape != (self.eta * self.eta,):
            raise ValueError(f"alpha must have length eta^2 = {self.eta ** 2}")
        alpha = alpha.copy()
        alpha.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        nbr, deg = lattice_neighbors(self.eta, self.periodic)
        object.__setattr__(self, "nbr", nbr)
        object.__setattr__(self, "deg", deg)

    @property
    def n(self) -> int:
        return self.eta * self.eta

    def edges(self) -> np.ndarray:
        """Each undirected nearest-neighbour pair once, as ``(i, j)`` with i < j."""
        pairs = [(i, j) for i in range(self.n) for j in self.nbr[i, : self.deg[i]] if i < j]
        return np.array(pairs, dtype=np.int64).reshape(-1, 2)

    def _field_sums(self, bits: np.ndarray) -> np.ndarray:
        padded = np.append(bits.astype(float), 0.0)
        return padded[self.nbr].sum(axis=1)

    def log_mass(self, x: BinaryState) -> float:
        _check_dim(self, x)
        s = x.bits.astype(float)
        pair = 0.5 * float(s @ self._field_sums(x.bits))
        return float(self.alpha @ s) + self.lam * pair

    def log_ratio(self, x: BinaryState, i: int) -> float:
        _check_dim(self, x)
        nb = self.nbr[i, : self.deg[i]]
        local = self.alpha[i] + self.lam * float(x.bits[nb].sum())
        return -2.0 * x.bits[i] * local

    def log_ratios(self, x: BinaryState, idx: np.ndarray) -> np.ndarray:
        _check_dim(self, x)
        idx = np.asarray(idx, dtype=np.int64)
        s = x.bits[idx].astype(float)
        return -2.0 * s * (self.alpha[idx] + self.lam * self._field_sums(x.bits)[idx])


@dataclass(frozen=True)
class FieldSpec:
    """External field recipe: ``-mu + eps`` left of column ``ell``, ``+mu + eps`` right of it."""

    mu: float = 1.0
    ell: int | None = None  # defaults to floor(eta / 2)
    noise_half_width: float = 0.1
    seed: int = 0


def build_field(spec: FieldSpec, eta: int) -> np.ndarray:
    """Row-major field vector of length ``eta**2``.

    Column indices are 1-based; columns ``<= ell`` get ``-mu + eps_i``, the
    rest ``+mu + eps_i`` with ``eps_i ~ U(-w, w)`` drawn from ``spec.seed``.
    """
    ell = eta // 2 if spec.ell is None else spec.ell
    if not 1 <= ell <= eta:
        raise ValueError(f"ell must lie in [1, {eta}], got {ell}")
    rng = np.random.default_rng(spec.seed)
    w = spec.noise_half_width
    eps = rng.uniform(-w, w, size=eta * eta) if w > 0 else np.zeros(eta * eta)
    col = np.tile(np.arange(1, eta + 1), eta)
    return np.where(col <= ell, -spec.mu, spec.mu) + eps


# ------------------------------------------------------------ variable selection


class DatasetError(ValueError):
    """Raised when a regression dataset cannot be loaded."""


def model_prior(name: str, n_obs: int) -> Callable[[int], float]:
    """Log prior mass of a model as a function of its size ``k``.

    ``"uniform"`` (the default) puts equal mass on every model.
    ``"lindley"`` multiplies it by ``(2 * pi * n_obs)^(-k/2)``, cancelling the
    arbitrary scale that a flat prior on each extra coefficient contributes
    to the marginal likelihood; it penalises large models heavily.
    """
    if name == "uniform":
        return lambda k: 0.0
    if name == "lindley":
        c = -0.5 * (math.log(2 * math.pi) + math.log(n_obs))
        return lambda k: c * k
    raise ValueError(f"unknown model prior {name!r}")


class VariableSelectionTarget:
    """Marginal posterior over covariate subsets of a normal linear model.

    An intercept is always included. Given model ``x`` with ``k`` covariates
    and design ``Z = [1, X_x]``, the coefficients and error scale carry the
    prior ``p(beta, sigma) ~ 1/sigma``; integrating them out gives

        log m(y | x) = lgamma(m/2) - (m/2) log RSS_x - 1/2 log det(Z'Z)
                       - (m/2) log(pi) - log 2,   m = n_obs - k - 1.

    Model ``x`` is the set of +1 coordinates of the state.
    """

    def __init__(self, design, response, model_log_prior: Callable[[int], float] | str = "uniform",
                 *, standardize: bool = True, names: list[str] | None = None):
        X = np.asarray(design, dtype=float)
        y = np.asarray(response, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DatasetError("design must be (n_obs, p) and response (n_obs,)")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DatasetError("dataset contains non-finite values")
        n_obs, p = X.shape
        if n_obs <= p + 1:
            raise DatasetError(f"need more than p + 1 = {p + 1} observations, got {n_obs}")
        if standardize:
            sd = X.std(axis=0)
            if np.any(sd == 0):
                raise DatasetError("constant covariate column cannot be standardised")
            X = (X - X.mean(axis=0)) / sd
        self.design = X
        self.response = y
        self.n_obs = n_obs
        self.n = p
        self.names = names
        if isinstance(model_log_prior, str):
            model_log_prior = model_prior(model_log_prior, n_obs)
        self.model_log_prior = model_log_prior
        self._table: np.ndarray | None = None

    @property
    def p(self) -> int:
        return self.n

    def log_marginal_likelihood(self, x: BinaryState) -> float:
        _check_dim(self, x)
        cols = np.flatnonzero(x.bits > 0)
        k = cols.size
        Z = np.column_stack([np.ones(self.n_obs), self.design[:, cols]])
        R = np.linalg.qr(Z, mode="r")
        d = np.abs(np.diag(R))
        if d.min() <= 1e-10 * max(d.max(), 1.0):
            return -np.inf
        coef = np.linalg.lstsq(Z, self.response, rcond=None)[0]
        rss = float(np.sum((self.response - Z @ coef) ** 2))
        m = self.n_obs - k - 1
        return (gammaln(m / 2) - (m / 2) * math.log(rss) - float(np.sum(np.log(d)))
                - (m / 2) * math.log(math.pi) - math.log(2.0))

    def log_mass(self, x: BinaryState) -> float:
        if self._table is not None:
            _check_dim(self, x)
            return float(self._table[x.code])
        return self.log_marginal_likelihood(x) + self.model_log_prior(x.n_plus)

    def log_ratio(self, x: BinaryState, i: int) -> float:
        a, b = self.log_mass(flip(x, i)), self.log_mass(x)
        return a - b if np.isfinite(b) else (np.inf if np.isfinite(a) else np.nan)

    def log_ratios(self, x: BinaryState, idx: np.ndarray) -> np.ndarray:
        return np.array([self.log_ratio(x, int(i)) for i in idx], dtype=float)

    def log_mass_table(self) -> np.ndarray:
        """Log masses of all ``2^p`` models indexed by :attr:`BinaryState.code` (cached)."""
        if self._table is None:
            table = np.empty(1 << self.n)
            for code in range(1 << self.n):
                x = BinaryState.from_code(code, self.n)
                table[code] = self.log_marginal_likelihood(x) + self.model_log_prior(x.n_plus)
            table.flags.writeable = False
            self._table = table
        return self._table


def crime_dataset_path() -> Path:
    """Bundled copy of the 1960 US crime data (47 states, 15 covariates, rate)."""
    return Path(__file__).with_name("data") / "uscrime.csv"


def load_crime_csv(path: str | Path | None = None, *, log_transform: bool = True,
                   model_log_prior: Callable[[int], float] | str = "uniform") -> VariableSelectionTarget:
    """Load a 15-covariate + response CSV into a :class:`VariableSelectionTarget`.

    With ``log_transform`` every column whose entries are all strictly
    positive (including the response) is logged before the covariates are
    standardised; indicator columns are left untouched.
    """
    path = crime_dataset_path() if path is None else Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if len(header) != 16:
        raise DatasetError(f"{path}: expected 16 columns (15 covariates + response), header has {len(header)}")
    values = np.empty((len(body), 16))
    for lineno, row in enumerate(body, start=2):
        if len(row) != 16:
            raise DatasetError(f"{path}:{lineno}: expected 16 cells, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                values[lineno - 2, j] = float(cell)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric cell {cell!r} in column {header[j]!r}") from None
    if len(body) <= 15 + 1:
        raise DatasetError(f"{path}: {len(body)} data rows is too few for 15 covariates")
    if not np.all(np.isfinite(values)):
        raise DatasetError(f"{path}: non-finite values")
    if log_transform:
        positive = np.all(values > 0, axis=0)
        values[:, positive] = np.log(values[:, positive])
    return VariableSelectionTarget(values[:, :15], values[:, 15], model_log_prior, names=header[:15])


# ---------------------------------------------------------------------- tabular


class TabularTarget:
    """Explicit unnormalised PMF given by ``2^n`` log masses indexed by state code."""

    max_dim = 14

    def __init__(self, log_masses):
        lm = np.array(log_masses, dtype=float)
        n = int(round(math.log2(lm.size))) if lm.size else 0
        if lm.ndim != 1 or lm.size < 2 or (1 << n) != lm.size:
            raise ValueError("need a flat vector of 2^n log masses, n >= 1")
        if n > self.max_dim:
            raise ValueError(f"tabular targets are limited to n <= {self.max_dim}")
        if np.any(np.isnan(lm)) or np.any(lm == np.inf):
            raise ValueError("log masses must be finite or -inf")
        if not np.any(np.isfinite(lm)):
            raise ValueError("at least one state needs positive mass")
        lm.flags.writeable = False
        self.table = lm
        self.n = n

    @classmethod
    def from_masses(cls, masses) -> "TabularTarget":
        m = np.asarray(masses, dtype=float)
        if np.any(m < 0):
            raise ValueError("masses must be non-negative")
        with np.errstate(divide="ignore"):
            return cls(np.log(m))

    @classmethod
    def from_target(cls, target: TargetModel) -> "TabularTarget":
        if target.n > cls.max_dim:
            raise ValueError(f"cannot tabulate a target with n={target.n} > {cls.max_dim}")
        return cls([target.log_mass(BinaryState.from_code(c, target.n)) for c in range(1 << target.n)])

    def log_mass_table(self) -> np.ndarray:
        return self.table

    def log_mass(self, x: BinaryState) -> float:
        _check_dim(self, x)
        return float(self.table[x.code])

    def log_ratio(self, x: BinaryState, i: int) -> float:
        _check_dim(self, x)
        c = x.code
        a, b = self.table[c ^ (1 << i)], self.table[c]
        return float(a - b) if np.isfinite(b) else (np.inf if np.isfinite(a) else np.nan)

    def log_ratios(self, x: BinaryState, idx: np.ndarray) -> np.ndarray:
        return np.array([self.log_ratio(x, int(i)) for i in idx], dtype=float)

    def normalized(self) -> np.ndarray:
        lm = self.table - np.max(self.table)
        p = np.exp(lm)
        return p / p.sum()
