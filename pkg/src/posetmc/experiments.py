"""Config-driven experiment runners: Ising sweeps, the crime study, trans-dimensional demo.

Config files are INI-style with a single section named after the
experiment::

    [ising-sweep-eta]
    samplers = mh, lifted1
    proposals = uniform, barker
    eta = 50, 100, 160
    iters = 100000
    replicates = 20

Unknown keys, bad values and missing sections are reported with the line
they occur on. Replicate ``r`` of every cell uses seed ``seed + r``, so
results do not depend on the number of worker threads.
"""

from __future__ import annotations

import configparser
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from posetmc.diagnostics import TraceSummary, summarize
from posetmc.oracle import tv_distance
from posetmc.poset import BinaryState
from posetmc.samplers import SamplerKind, run_chain
from posetmc.targets import FieldSpec, IsingModel, build_field, crime_dataset_path, load_crime_csv
from posetmc.transdim import run_transdim, toy_conjugate_target

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
    "default_threads",
    "run_experiment",
]

EXPERIMENTS = ("ising-sweep-eta", "ising-sweep-mu", "crime-vs", "transdim-demo", "validate")
THREADS_ENV = "POSETMC_THREADS"


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("\n".join(errors))


@dataclass
class ExperimentConfig:
    experiment: str
    samplers: list[str] = field(default_factory=lambda: ["mh", "lifted1"])
    proposals: list[str] = field(default_factory=lambda: ["uniform", "barker"])
    iters: int = 100_000
    burnin: int | None = None  # default: 10% of iters
    replicates: int = 20
    seed: int = 0
    # Ising
    eta: list[int] = field(default_factory=lambda: [50])
    lam: float = 0.5
    mu: list[float] = field(default_factory=lambda: [1.0])
    ell: int | None = None  # default: floor(eta / 2)
    noise_half_width: float = 0.1
    field_seed: int = 0
    periodic: bool = False
    # variable selection
    dataset: str | None = None
    log_transform: bool = True
    model_prior: str = "uniform"
    init: str = "full"
    # trans-dimensional toy
    p: int = 3
    n_obs: int = 30
    w0: float = 0.5
    noise_sd: list[float] = field(default_factory=lambda: [0.0])
    toy_seed: int = 0
    # output
    output: str | None = None
    threads: int | None = None

    def __post_init__(self):
        if self.burnin is None:
            self.burnin = self.iters // 10


_DEFAULTS = {
    "ising-sweep-eta": dict(eta=[50, 100, 160]),
    "ising-sweep-mu": dict(mu=[1.0, 1.5, 2.0, 2.5, 3.0]),
    "crime-vs": dict(samplers=["mh", "lifted1", "lifted2[optimal]"], proposals=["barker"], iters=10_000),
    "transdim-demo": dict(samplers=["lifted", "rj"], proposals=["uniform"], iters=100_000, replicates=5,
                          noise_sd=[0.0, 1.0, 2.0]),
    "validate": dict(),
}

_LIST_INT = {"eta"}
_LIST_FLOAT = {"mu", "noise_sd"}
_LIST_STR = {"samplers", "proposals"}
_INT = {"iters", "burnin", "replicates", "seed", "ell", "field_seed", "p", "n_obs", "toy_seed", "threads"}
_FLOAT = {"lam", "noise_half_width", "w0"}
_BOOL = {"periodic", "log_transform"}
_STR = {"dataset", "model_prior", "init", "output"}
_KEYS = _LIST_INT | _LIST_FLOAT | _LIST_STR | _INT | _FLOAT | _BOOL | _STR


def _key_lines(text: str) -> dict[str, int]:
    lines = {}
    for no, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*([A-Za-z_][\w-]*)\s*[=:]", line)
        if m:
            lines.setdefault(m.group(1).lower(), no)
        elif re.match(r"\s*\[", line):
            lines.setdefault("[" + line.strip().strip("[]").strip() + "]", no)
    return lines


def _convert(key: str, raw: str):
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if key in _LIST_STR:
        if not items:
            raise ValueError("expected a non-empty comma-separated list")
        return items
    if key in _LIST_INT:
        return [int(s) for s in items]
    if key in _LIST_FLOAT:
        return [float(s) for s in items]
    if key in _INT:
        return int(raw)
    if key in _FLOAT:
        return float(raw)
    if key in _BOOL:
        low = raw.strip().lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError(f"expected a boolean, got {raw!r}")
        return low in ("true", "yes", "1")
    return raw.strip()


def _validate(cfg: ExperimentConfig, where) -> list[str]:
    errs = []

    def bad(key, msg):
        errs.append(f"{where(key)}: {key}: {msg}")

    if cfg.iters <= 0:
        bad("iters", "must be positive")
    if not 0 <= cfg.burnin < max(cfg.iters, 1):
        bad("burnin", "must satisfy 0 <= burnin < iters")
    if cfg.replicates <= 0:
        bad("replicates", "must be positive")
    if cfg.seed < 0:
        bad("seed", "must be non-negative")
    if cfg.lam <= 0:
        bad("lam", f"coupling must be positive, got {cfg.lam}")
    if any(e <= 0 for e in cfg.eta):
        bad("eta", "lattice sides must be positive")
    if any(m < 0 for m in cfg.mu):
        bad("mu", "field contrast must be non-negative")
    if cfg.ell is not None and any(not 1 <= cfg.ell <= e for e in cfg.eta):
        bad("ell", "split column must satisfy 1 <= ell <= eta")
    if cfg.noise_half_width < 0:
        bad("noise_half_width", "must be non-negative")
    if cfg.threads is not None and cfg.threads <= 0:
        bad("threads", "must be positive")
    if not 0 < cfg.w0 <= 1:
        bad("w0", "self-proposal mass must lie in (0, 1]")
    if any(s < 0 for s in cfg.noise_sd):
        bad("noise_sd", "must be non-negative")
    if not 1 <= cfg.p <= 6:
        bad("p", "toy dimension must lie in 1..6")
    if cfg.n_obs <= cfg.p + 2:
        bad("n_obs", "must exceed p + 2")
    if cfg.init not in ("full", "empty", "random"):
        bad("init", "must be one of full, empty, random")
    if cfg.model_prior not in ("uniform", "lindley"):
        bad("model_prior", "must be uniform or lindley")
    for prop in cfg.proposals:
        if prop not in ("uniform", "barker", "sqrt"):
            bad("proposals", f"unknown proposal {prop!r}")
    if cfg.experiment == "transdim-demo":
        for s in cfg.samplers:
            if s not in ("lifted", "rj"):
                bad("samplers", f"transdim-demo samplers are lifted and rj, got {s!r}")
    else:
        for s in cfg.samplers:
            try:
                SamplerKind.parse(f"{s}/barker")
            except ValueError as exc:
                bad("samplers", str(exc))
    return errs


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate a config; raises :class:`ConfigError` listing all problems."""
    lines = _key_lines(text)
    where = lambda key: f"{source}:{lines.get(key, '?')}"  # noqa: E731
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"{source}: {exc}".replace("\n", " ")]) from None
    sections = parser.sections()
    if len(sections) != 1:
        raise ConfigError([f"{source}: expected exactly one [experiment] section, found {len(sections)}"])
    name = sections[0]
    if name not in EXPERIMENTS:
        raise ConfigError([f"{source}:{lines.get(f'[{name}]', '?')}: unknown experiment [{name}]; "
                           f"choose from {', '.join(EXPERIMENTS)}"])
    values = dict(_DEFAULTS[name])
    errs = []
    for key, raw in parser.items(name):
        if key not in _KEYS:
            errs.append(f"{where(key)}: unknown key {key!r}")
            continue
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            errs.append(f"{where(key)}: {key}: cannot parse {raw!r} ({exc})")
    if errs:
        raise ConfigError(errs)
    cfg = ExperimentConfig(experiment=name, **values)
    errs = _validate(cfg, where)
    if errs:
        raise ConfigError(errs)
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror})"]) from None
    return parse_config_text(text, str(path))


def config_fields() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
            if n > 0:
                return n
        except ValueError:
            pass
        raise ConfigError([f"environment variable {THREADS_ENV} must be a positive integer, got {raw!r}"])
    return os.cpu_count() or 1


# --------------------------------------------------------------------- runners


def _replicates(fn, cfg: ExperimentConfig, threads: int):
    seeds = [cfg.seed + r for r in range(cfg.replicates)]
    if threads <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, seeds))


def _kinds(cfg: ExperimentConfig):
    return [SamplerKind.parse(f"{s}/{p}") for s in cfg.samplers for p in cfg.proposals]


def _ising_cells(cfg: ExperimentConfig):
    if cfg.experiment == "ising-sweep-eta":
        return [(eta, cfg.mu[0]) for eta in cfg.eta]
    return [(cfg.eta[0], mu) for mu in cfg.mu]


def run_ising(cfg: ExperimentConfig, threads: int = 1, log=None) -> list[dict]:
    rows = []
    for eta, mu in _ising_cells(cfg):
        ell = cfg.ell if cfg.ell is not None else eta // 2
        alpha = build_field(FieldSpec(mu=mu, ell=ell, noise_half_width=cfg.noise_half_width, seed=cfg.field_seed), eta)
        target = IsingModel(eta, cfg.lam, alpha, periodic=cfg.periodic)
        params = {"eta": eta, "lam": cfg.lam, "mu": mu, "ell": ell}
        for kind in _kinds(cfg):
            runs = _replicates(lambda s: run_chain(kind, target, iters=cfg.iters, burnin=cfg.burnin, seed=s),
                               cfg, threads)
            block = summarize(runs, params)
            rows.extend(block)
            if log:
                agg = block[-1]
                log(f"eta={eta} mu={mu} {kind.label}: ess/iter={agg['ess_per_iter']:.4g} "
                    f"accept={agg['accept_rate']:.3f}")
    return rows


def _crime_init(cfg: ExperimentConfig, p: int):
    if cfg.init == "full":
        return BinaryState(np.ones(p, dtype=np.int8))
    if cfg.init == "empty":
        return BinaryState(-np.ones(p, dtype=np.int8))
    return None


def run_crime(cfg: ExperimentConfig, threads: int = 1, log=None) -> list[dict]:
    target = load_crime_csv(cfg.dataset or crime_dataset_path(), log_transform=cfg.log_transform,
                            model_log_prior=cfg.model_prior)
    target.log_mass_table()  # build once, shared read-only by all threads
    init = _crime_init(cfg, target.p)
    params = {"model_prior": cfg.model_prior, "log_transform": cfg.log_transform}
    rows = []
    for kind in _kinds(cfg):
        runs = _replicates(lambda s: run_chain(kind, target, iters=cfg.iters, burnin=cfg.burnin, seed=s, init=init),
                           cfg, threads)
        block = summarize(runs, params)
        rows.extend(block)
        if log:
            agg = block[-1]
            log(f"{kind.label}: ess/iter={agg['ess_per_iter']:.4g} accept={agg['accept_rate']:.3f}")
    return rows


def run_transdim_demo(cfg: ExperimentConfig, threads: int = 1, log=None) -> list[dict]:
    """Model-posterior accuracy, acceptance and direction-flip rates of both samplers,
    with exact and increasingly noisy switch ratios."""
    toy = toy_conjugate_target(cfg.p, cfg.n_obs, cfg.toy_seed)
    pi = toy.model_posterior()
    rows = []
    for sampler in cfg.samplers:
        for sd in cfg.noise_sd:
            def one(seed, sampler=sampler, sd=sd):
                r = run_transdim(toy, cfg.iters, seed, lifted=sampler == "lifted", w0=cfg.w0,
                                 noise_sd=sd, burnin=cfg.burnin)
                size = np.array([bin(int(c)).count("1") for c in range(1 << cfg.p)])[r.models].astype(float)
                summ = TraceSummary(sampler, "uniform", size, r.n_accepted, r.n_switch_proposals, r.n_flips,
                                    0, 0, 0.0)
                return summ, tv_distance(np.bincount(r.models, minlength=1 << cfg.p), pi)
            out = _replicates(one, cfg, threads)
            block = summarize([o[0] for o in out], {"p": cfg.p, "noise_sd": sd})
            tvs = [o[1] for o in out]
            for row, tv in zip(block, tvs):
                row["tv"] = tv
            block[-1]["tv"] = float(np.mean(tvs))
            rows.extend(block)
            if log:
                agg = block[-1]
                log(f"{sampler} noise_sd={sd}: tv={agg['tv']:.4f} accept={agg['accept_rate']:.3f} "
                    f"flip={agg['flip_rate']:.3f} ess/iter={agg['ess_per_iter']:.4g}")
    return rows


def run_validate(cfg: ExperimentConfig, threads: int = 1, log=None) -> list[dict]:
    from posetmc.validation import run_all

    rows = []
    for res in run_all(cfg.seed):
        if log:
            log(res.line())
        rows.append({"suite": res.name, "passed": res.passed, "detail": res.detail, "seconds": res.seconds})
    return rows


_RUNNERS = {
    "ising-sweep-eta": run_ising,
    "ising-sweep-mu": run_ising,
    "crime-vs": run_crime,
    "transdim-demo": run_transdim_demo,
    "validate": run_validate,
}


def run_experiment(cfg: ExperimentConfig, threads: int | None = None, log=None) -> list[dict]:
    threads = threads or cfg.threads or default_threads()
    return _RUNNERS[cfg.experiment](cfg, threads, log)

