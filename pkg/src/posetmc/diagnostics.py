"""Run summaries: magnetisation, effective sample size, rates and CSV output."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from posetmc.poset import BinaryState

__all__ = [
    "magnetisation",
    "autocorrelation",
    "ess",
    "ESS_CAP",
    "TraceSummary",
    "summarize",
    "write_csv",
    "read_csv",
    "CSV_COLUMNS",
]

ESS_CAP = 1.25  # ESS is reported as at most ESS_CAP * trace length


def magnetisation(x: BinaryState) -> float:
    """``sum_i x_i``; the same for both lift directions by construction."""
    return float(np.sum(x.bits, dtype=np.int64))


def autocorrelation(trace) -> np.ndarray:
    """Biased sample autocorrelation at lags ``0 .. len-1`` via FFT."""
    x = np.asarray(trace, dtype=float)
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n] / n
    return acov / acov[0]


def ess(trace) -> float:
    """Effective sample size with Geyer's initial monotone sequence estimator.

    Autocorrelations are summed in consecutive pairs
    ``Gamma_k = rho_{2k} + rho_{2k+1}`` up to the first non-positive pair,
    with the partial sequence forced to be non-increasing; the integrated
    autocorrelation time is ``-1 + 2 * sum_k Gamma_k``. A constant trace
    has ESS equal to its length, and the estimate is capped at
    ``ESS_CAP * len(trace)`` (antithetic chains can otherwise exceed it
    wildly).
    """
    x = np.asarray(trace, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError(f"ESS needs a trace of length >= 10, got {n}")
    if np.all(x == x[0]):
        return float(n)
    rho = autocorrelation(x)
    m = (n - 1) // 2
    pairs = rho[0 : 2 * m : 2] + rho[1 : 2 * m : 2]
    positive = pairs > 0
    stop = int(np.argmin(positive)) if not positive.all() else pairs.size
    gam = np.minimum.accumulate(pairs[:stop])
    tau = -1.0 + 2.0 * float(gam.sum())
    cap = ESS_CAP * n
    if tau <= 0:
        return cap
    return min(n / tau, cap)


@dataclass
class TraceSummary:
    """Outcome of one chain run, restricted to post-burn-in iterations."""

    sampler: str
    proposal: str
    trace: np.ndarray = field(repr=False)
    n_accepted: int
    n_proposals: int
    n_flips: int
    ratio_evals: int
    normalizers: int
    seconds: float
    codes: np.ndarray | None = field(default=None, repr=False)
    directions: np.ndarray | None = field(default=None, repr=False)
    final: Any = field(default=None, repr=False)

    @classmethod
    def from_run(cls, kind, trace, accepted, proposals, flips, ratio_evals, normalizers,
                 seconds, codes=None, directions=None, final=None) -> "TraceSummary":
        algo = kind.label.split("/")[0]
        return cls(algo, kind.proposal, np.asarray(trace, dtype=float), int(accepted), int(proposals),
                   int(flips), int(ratio_evals), int(normalizers), float(seconds), codes, directions, final)

    @property
    def iterations(self) -> int:
        return self.trace.size

    @property
    def accept_rate(self) -> float:
        return self.n_accepted / self.n_proposals if self.n_proposals else 0.0

    @property
    def flip_rate(self) -> float:
        return self.n_flips / self.iterations

    @property
    def ess(self) -> float:
        if not hasattr(self, "_ess"):
            self._ess = ess(self.trace)
        return self._ess

    @property
    def ess_per_iter(self) -> float:
        return self.ess / self.iterations


CSV_COLUMNS = ["replicate_id", "sampler", "proposal"]
_METRICS = ["ess", "ess_per_iter", "accept_rate", "flip_rate", "evals", "seconds"]
_SE = ["ess_se", "ess_per_iter_se", "accept_rate_se", "flip_rate_se"]


def summarize(runs: Sequence[TraceSummary], params: dict | None = None) -> list[dict]:
    """One row per replicate plus an ``aggregate`` row of means and standard errors.

    ``params`` (target parameters such as ``eta`` or ``mu``) are copied
    into every row between the sampler columns and the metrics.
    """
    if not runs:
        raise ValueError("no replicates to summarise")
    params = dict(params or {})
    rows = []
    for r, run in enumerate(runs):
        row = {"replicate_id": r, "sampler": run.sampler, "proposal": run.proposal, **params,
               "ess": run.ess, "ess_per_iter": run.ess_per_iter, "accept_rate": run.accept_rate,
               "flip_rate": run.flip_rate, "evals": run.ratio_evals, "seconds": run.seconds}
        row.update({k: "" for k in _SE})
        rows.append(row)
    agg = {"replicate_id": "aggregate", "sampler": runs[0].sampler, "proposal": runs[0].proposal, **params}
    for key in _METRICS:
        vals = np.array([row[key] for row in rows], dtype=float)
        agg[key] = float(vals.mean())
        if key + "_se" in _SE:
            agg[key + "_se"] = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    rows.append(agg)
    return rows


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(rows: Iterable[dict], path: str | Path, *, drop: Sequence[str] = ()) -> Path:
    """Write rows with a fixed column order; floats use shortest round-trip repr."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    columns = [c for c in rows[0] if c not in drop]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])
    return path


def read_csv(path: str | Path) -> list[dict]:
    """Parse a summary CSV back into rows; numeric cells become floats."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except ValueError:
                    parsed[k] = v
            out.append(parsed)
    return out
