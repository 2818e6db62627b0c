"""Monte Carlo estimates of size and power for the beta-score tests.

The design is drawn once per scenario and then held fixed. Each replication
draws its own errors from an independent stream spawned off the scenario
seed, so results do not depend on how replications are spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BpBetaError, ConfigError, SimulationAborted
from .estimation import FitOptions, fit_null_dpd
from .lmtest import bp_beta_test, koenker_beta_test
from .model import RegressionData, ScedasticKind, build_white_design, scedastic_variance
from .numerics import chi_square_isf

Z_RECIPES = ("x", "white", "squares")


@dataclass(frozen=True)
class LogNormal:
    mu: float = 0.0
    sigma: float = 1.0


@dataclass(frozen=True)
class SimScenario:
    n: int = 250
    p: int = 2
    z_recipe: str = "x"
    scedastic: ScedasticKind | None = None
    coefficients: tuple[float, ...] | None = None
    contamination_fraction: float = 0.0
    contamination: LogNormal = field(default_factory=LogNormal)
    replications: int = 1000
    alpha: float = 0.05
    beta_grid: tuple[float, ...] = (0.0, 0.3, 0.6)
    seed: int = 20240101
    workers: int = 1

    def __post_init__(self):
        if self.n < 5 or self.p < 1:
            raise ConfigError("need n >= 5 and p >= 1")
        if self.z_recipe not in Z_RECIPES:
            raise ConfigError(f"z_recipe must be one of {Z_RECIPES}")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not 0.0 <= self.contamination_fraction < 1.0:
            raise ConfigError("contamination_fraction must lie in [0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not self.beta_grid or any(b < 0 for b in self.beta_grid):
            raise ConfigError("beta_grid must be a nonempty list of nonnegative values")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        if self.coefficients is not None:
            object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
            if len(self.coefficients) != self.p + 1:
                raise ConfigError("coefficients must have p + 1 entries")
        if self.scedastic is not None and len(self.scedastic.alpha) != self.r:
            raise ConfigError(f"scedastic alpha must have r = {self.r} entries")

    @property
    def r(self) -> int:
        if self.z_recipe == "x":
            return self.p
        if self.z_recipe == "squares":
            return 2 * self.p
        return self.p + self.p * (self.p + 1) // 2

    @property
    def n_contaminated(self) -> int:
        return int(math.floor(self.contamination_fraction * self.n + 0.5))


@dataclass(frozen=True)
class SimReport:
    beta_grid: tuple[float, ...]
    bp_rate: tuple[float, ...]
    koenker_rate: tuple[float, ...]
    bp_se: tuple[float, ...]
    koenker_se: tuple[float, ...]
    failures: tuple[int, ...]
    replications: int
    threshold: float

    def as_dict(self) -> dict:
        return {
            "beta_grid": list(self.beta_grid),
            "bp_rate": list(self.bp_rate),
            "koenker_rate": list(self.koenker_rate),
            "bp_se": list(self.bp_se),
            "koenker_se": list(self.koenker_se),
            "failures": list(self.failures),
            "replications": self.replications,
            "threshold": self.threshold,
        }


def build_design(s: SimScenario) -> tuple[np.ndarray, np.ndarray]:
    """Fixed ``X`` (with intercept) and ``Z`` for the scenario."""
    rng = np.random.default_rng(np.random.SeedSequence(s.seed).spawn(1)[0])
    R = rng.standard_normal((s.n, s.p))
    X = np.column_stack([np.ones(s.n), R])
    if s.z_recipe == "x":
        Z = R.copy()
    elif s.z_recipe == "squares":
        Z = np.column_stack([R, R * R])
    else:
        Z = build_white_design(X)
    return X, Z


def _error_sd(s: SimScenario, Z: np.ndarray) -> np.ndarray:
    if s.scedastic is None:
        return np.ones(s.n)
    return np.sqrt(scedastic_variance(s.scedastic, Z))


def _replicate(s: SimScenario, X, Z, sd, coef, thr, opts, seq) -> tuple[list[int], list[int], list[int]]:
    rng = np.random.default_rng(seq)
    eps = sd * rng.standard_normal(s.n)
    k = s.n_contaminated
    if k:
        rows = rng.choice(s.n, size=k, replace=False)
        eps[rows] = rng.lognormal(s.contamination.mu, s.contamination.sigma, size=k)
    y = X @ coef + eps
    data = RegressionData(y, X, Z)
    bp, ko, fail = [], [], []
    for b in s.beta_grid:
        try:
            fit = fit_null_dpd(data, b, opts)
            bp.append(int(bp_beta_test(fit, Z).statistic > thr))
            ko.append(int(koenker_beta_test(fit, Z).statistic > thr))
            fail.append(0)
        except BpBetaError:
            bp.append(0)
            ko.append(0)
            fail.append(1)
    return bp, ko, fail


def _chunk(args) -> np.ndarray:
    s, X, Z, sd, coef, thr, opts, seqs = args
    out = np.zeros((3, len(s.beta_grid)), dtype=np.int64)
    for seq in seqs:
        bp, ko, fail = _replicate(s, X, Z, sd, coef, thr, opts, seq)
        out += np.array([bp, ko, fail], dtype=np.int64)
    return out


def run_scenario(s: SimScenario, opts: FitOptions = FitOptions()) -> SimReport:
    X, Z = build_design(s)
    sd = _error_sd(s, Z)
    coef = np.ones(s.p + 1) if s.coefficients is None else np.asarray(s.coefficients)
    thr = chi_square_isf(s.alpha, Z.shape[1])
    seqs = np.random.SeedSequence(s.seed).spawn(s.replications + 1)[1:]

    if s.workers == 1:
        counts = _chunk((s, X, Z, sd, coef, thr, opts, seqs))
    else:
        chunks = [seqs[i:: s.workers] for i in range(s.workers)]
        with ProcessPoolExecutor(max_workers=s.workers) as ex:
            parts = list(ex.map(_chunk, [(s, X, Z, sd, coef, thr, opts, c) for c in chunks]))
        counts = sum(parts)

    bp_hits, ko_hits, fails = counts
    if np.any(fails > s.replications / 2):
        raise SimulationAborted(f"more than half of the replications failed: {fails.tolist()}")
    ok = s.replications - fails
    bp_rate = tuple(float(h / m) if m else math.nan for h, m in zip(bp_hits, ok))
    ko_rate = tuple(float(h / m) if m else math.nan for h, m in zip(ko_hits, ok))

    def se(rates):
        return tuple(math.sqrt(p * (1 - p) / m) if m else math.nan for p, m in zip(rates, ok))

    return SimReport(s.beta_grid, bp_rate, ko_rate, se(bp_rate), se(ko_rate),
                     tuple(int(f) for f in fails), s.replications, thr)


# -- scenario files -----------------------------------------------------------

_INT_KEYS = {"n", "p", "replications", "seed", "workers"}
_FLOAT_KEYS = {"alpha", "contamination_fraction", "sigma2", "lognormal_mu", "lognormal_sigma"}
_LIST_KEYS = {"beta_grid", "coefficients", "scedastic_alpha"}
_STR_KEYS = {"z_recipe", "scedastic"}


def parse_scenario_text(text: str) -> SimScenario:
    """``key = value`` lines; ``#`` starts a comment; lists are comma separated.

    Keys: n, p, z_recipe, scedastic (additive | multiplicative), scedastic_alpha,
    sigma2, coefficients, contamination_fraction, lognormal_mu, lognormal_sigma,
    replications, alpha, beta_grid, seed, workers.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (t.strip() for t in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = val
    unknown = set(raw) - _INT_KEYS - _FLOAT_KEYS - _LIST_KEYS - _STR_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")

    def num(key, conv):
        try:
            return conv(raw[key])
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {raw[key]!r}") from None

    def lst(key):
        try:
            return tuple(float(t) for t in raw[key].split(",") if t.strip())
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {raw[key]!r}") from None

    kw: dict = {}
    for k in _INT_KEYS & raw.keys():
        kw[k] = num(k, int)
    for k in ("alpha", "contamination_fraction"):
        if k in raw:
            kw[k] = num(k, float)
    if "z_recipe" in raw:
        kw["z_recipe"] = raw["z_recipe"]
    if "beta_grid" in raw:
        kw["beta_grid"] = lst("beta_grid")
    if "coefficients" in raw:
        kw["coefficients"] = lst("coefficients")
    kw["contamination"] = LogNormal(
        num("lognormal_mu", float) if "lognormal_mu" in raw else 0.0,
        num("lognormal_sigma", float) if "lognormal_sigma" in raw else 1.0,
    )
    if "scedastic" in raw:
        try:
            kw["scedastic"] = ScedasticKind(
                raw["scedastic"],
                lst("scedastic_alpha") if "scedastic_alpha" in raw else (),
                num("sigma2", float) if "sigma2" in raw else 1.0,
            )
        except ValueError as exc:
            raise ConfigError(f"scedastic: {exc}") from None
    elif "scedastic_alpha" in raw or "sigma2" in raw:
        raise ConfigError("scedastic_alpha/sigma2 need a scedastic kind")
    return SimScenario(**kw)


def parse_scenario_file(path) -> SimScenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario_text(fh.read())


def with_seed(s: SimScenario, seed: int) -> SimScenario:
    return replace(s, seed=seed)
