"""Monte Carlo generators for synthetic unfolding scenarios.

A :class:`Scenario` fixes a truth distribution, a smearing model, the sample
size, the measured binning and the seed; :func:`generate` draws the sample
and histograms both sides, returning the event pairs that a migration-matrix
estimate needs.  :func:`pseudo_experiments` repeats the measurement many
times to validate the propagated covariance empirically.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .histogram import Axis, Histogram, rebin_axes
from .response import ResponseMatrix
from .unfold import StoppingPolicy, run


def _gauss_cdf(z):
    z = np.asarray(z, dtype=np.float64)
    return np.array([0.5 * (1.0 + math.erf(v / math.sqrt(2.0))) for v in z.ravel()]
                    ).reshape(z.shape)


@dataclass(frozen=True)
class CauchyTruth:
    """Cauchy distribution; heavy tails, no moments."""

    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def sample(self, rng, n):
        u = rng.random(n)
        return self.location + self.scale * np.tan(np.pi * (u - 0.5))

    def cdf(self, x):
        return 0.5 + np.arctan((np.asarray(x) - self.location) / self.scale) / np.pi


@dataclass(frozen=True)
class GaussianTruth:
    mean: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def sample(self, rng, n):
        return rng.normal(self.mean, self.sigma, n)

    def cdf(self, x):
        return _gauss_cdf((np.asarray(x) - self.mean) / self.sigma)


@dataclass(frozen=True)
class PowerlawTruth:
    """Falling energy spectrum: power-law tail with a soft core.

    Density ``(n-1)/(n*T) * (1 + E/(n*T))**(-n)`` on E >= 0 with
    ``n = exponent`` and ``T = scale_energy``; the tail falls like E**(-n)
    and the analytic inverse CDF makes sampling exact.
    """

    exponent: float = 3.0
    scale_energy: float = 1.0

    def __post_init__(self):
        if self.exponent <= 1:
            raise ValueError("exponent must exceed 1")
        if self.scale_energy <= 0:
            raise ValueError("scale_energy must be positive")

    def sample(self, rng, n):
        u = rng.random(n)
        nt = self.exponent * self.scale_energy
        return nt * ((1.0 - u) ** (-1.0 / (self.exponent - 1.0)) - 1.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        nt = self.exponent * self.scale_energy
        out = 1.0 - (1.0 + np.clip(x, 0.0, None) / nt) ** (1.0 - self.exponent)
        return np.where(x < 0, 0.0, out)


@dataclass(frozen=True)
class GaussianSmearing:
    """Additive Gaussian noise: y = x + N(0, sigma)."""

    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def apply(self, rng, x):
        if self.sigma == 0:
            return x.copy()
        return x + rng.normal(0.0, self.sigma, x.size)

    def kernel(self):
        """Vectorized response density rho(y | x)."""
        s = self.sigma
        norm = 1.0 / (s * math.sqrt(2.0 * math.pi))
        return lambda y, x: norm * np.exp(-0.5 * ((y - x) / s) ** 2)


@dataclass(frozen=True)
class CalorimeterSmearing:
    """Relative Gaussian energy resolution, truncated at zero.

    ``y = x * (1 + N(0, 1) * sqrt(a^2/x + b^2))`` clipped to y >= 0, the
    usual stochastic-plus-constant parameterization of a hadron calorimeter
    (a in sqrt(energy) units, b dimensionless).
    """

    stochastic_a: float = 1.15
    constant_b: float = 0.055

    def __post_init__(self):
        if self.stochastic_a < 0 or self.constant_b < 0:
            raise ValueError("resolution terms must be non-negative")

    def apply(self, rng, x):
        a, b = self.stochastic_a, self.constant_b
        if a == 0 and b == 0:
            return x.copy()
        positive = x > 0
        rel = np.sqrt(np.where(positive, a * a / np.where(positive, x, 1.0), 0.0)
                      + b * b)
        y = x * (1.0 + rel * rng.normal(0.0, 1.0, x.size))
        return np.maximum(np.where(positive, y, x), 0.0)


_TRUTH_TYPES = {
    "cauchy": (CauchyTruth, ("location", "scale")),
    "gaussian": (GaussianTruth, ("mean", "sigma")),
    "powerlaw_spectrum": (PowerlawTruth, ("exponent", "scale_energy")),
}
_SMEARING_TYPES = {
    "gaussian_convolution": (GaussianSmearing, ("sigma",)),
    "calorimeter": (CalorimeterSmearing, ("stochastic_a", "constant_b")),
}


@dataclass(frozen=True)
class Scenario:
    """Complete description of one synthetic measurement."""

    truth: object
    smearing: object
    entries: int
    seed: int
    meas_axis: Axis
    rebin: tuple = (1.0, 1)

    def __post_init__(self):
        if self.entries < 1:
            raise ValueError("entries must be >= 1")

    @property
    def true_axis(self) -> Axis:
        return rebin_axes(self.meas_axis, *self.rebin)

    def to_dict(self) -> dict:
        def tagged(obj, table):
            for name, (klass, fields) in table.items():
                if isinstance(obj, klass):
                    d = {"type": name}
                    d.update({f: getattr(obj, f) for f in fields})
                    return d
            raise ValueError(f"unknown component {obj!r}")

        return {
            "truth": tagged(self.truth, _TRUTH_TYPES),
            "smearing": tagged(self.smearing, _SMEARING_TYPES),
            "entries": self.entries,
            "seed": self.seed,
            "meas_axis": self.meas_axis.to_dict(),
            "rebin": {"extension_factor": self.rebin[0],
                      "refine_factor": self.rebin[1]},
        }

    @classmethod
    def from_dict(cls, d) -> "Scenario":
        def need(mapping, key, where=""):
            if key not in mapping:
                name = f"{where}.{key}" if where else key
                raise ConfigError(f"missing configuration field '{name}'", field=name)
            return mapping[key]

        def build(entry, table, where):
            kind = need(entry, "type", where)
            if kind not in table:
                raise ConfigError(
                    f"unknown {where} type '{kind}' (choices: {sorted(table)})",
                    field=f"{where}.type")
            klass, fields = table[kind]
            try:
                return klass(**{f: need(entry, f, where) for f in fields})
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad {where} parameters: {exc}", field=where) from exc

        truth = build(need(d, "truth"), _TRUTH_TYPES, "truth")
        smearing = build(need(d, "smearing"), _SMEARING_TYPES, "smearing")
        entries = need(d, "entries")
        seed = need(d, "seed")
        try:
            meas_axis = Axis.from_dict(need(d, "meas_axis"))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad meas_axis: {exc}", field="meas_axis") from exc
        rebin_cfg = d.get("rebin", {})
        rebin = (float(rebin_cfg.get("extension_factor", 1.0)),
                 int(rebin_cfg.get("refine_factor", 1)))
        try:
            return cls(truth=truth, smearing=smearing, entries=int(entries),
                       seed=int(seed), meas_axis=meas_axis, rebin=rebin)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field=None) from exc

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "Scenario":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class GenerateResult:
    """Sample of one synthetic measurement.

    `pairs` is the (n, 2) array of (true, measured) values feeding
    migration-matrix estimation; the tallies count samples falling outside
    the respective axes (they are not binned).
    """

    truth_hist: Histogram
    measured: Histogram
    pairs: np.ndarray
    truth_underflow: int
    truth_overflow: int
    meas_underflow: int
    meas_overflow: int


def _generate(sc: Scenario, rng, n_entries) -> GenerateResult:
    x = np.asarray(sc.truth.sample(rng, n_entries), dtype=np.float64)
    y = np.asarray(sc.smearing.apply(rng, x), dtype=np.float64)
    true_axis = sc.true_axis
    tc, _ = np.histogram(x, bins=true_axis.edges)
    mc, _ = np.histogram(y, bins=sc.meas_axis.edges)
    return GenerateResult(
        truth_hist=Histogram.from_counts(true_axis, tc),
        measured=Histogram.from_counts(sc.meas_axis, mc),
        pairs=np.column_stack([x, y]),
        truth_underflow=int(np.sum(x < true_axis.low)),
        truth_overflow=int(np.sum(x > true_axis.high)),
        meas_underflow=int(np.sum(y < sc.meas_axis.low)),
        meas_overflow=int(np.sum(y > sc.meas_axis.high)),
    )


def generate(sc: Scenario) -> GenerateResult:
    """Draw the scenario's sample; bitwise reproducible for a fixed seed."""
    return _generate(sc, np.random.default_rng(sc.seed), sc.entries)


@dataclass(frozen=True)
class EnsembleStats:
    """Per-bin moments of an ensemble of unfolded pseudo-experiments,
    all evaluated at the common iteration order `order`."""

    order: int
    mean: np.ndarray
    covariance: np.ndarray
    n_experiments: int


def _worker_count(workers):
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get("UNFOLDER_THREADS", "1")))
    except ValueError:
        return 1


def pseudo_experiments(sc: Scenario, n_experiments: int, R: ResponseMatrix,
                       policy: StoppingPolicy, poisson_total=True,
                       workers=None, seeds=None) -> EnsembleStats:
    """Ensemble of independently re-sampled measurements, unfolded at a
    common order.

    Experiment k uses seed ``sc.seed + k`` (or ``seeds[k]`` when an explicit
    sequence is given).  The stopping policy is resolved once, on the first
    experiment, and every experiment is then evaluated at that fixed order
    so the ensemble spread is directly comparable with the propagated
    covariance.  With `poisson_total` the sample size of each experiment
    fluctuates as Poisson(entries), which makes the bin contents exactly
    independent Poisson variates; otherwise the total is fixed (multinomial
    bins).

    `workers` threads parallelize the sample generation (default from the
    UNFOLDER_THREADS environment variable); results do not depend on the
    worker count.
    """
    if n_experiments < 2:
        raise ValueError("need at least 2 pseudo-experiments")
    if R.meas_axis != sc.meas_axis:
        raise DimensionError("response measured axis does not match the scenario")
    if seeds is None:
        seeds = [sc.seed + k for k in range(n_experiments)]
    elif len(seeds) != n_experiments:
        raise ValueError("seeds length must equal n_experiments")

    def measured_counts(seed):
        rng = np.random.default_rng(seed)
        n = int(rng.poisson(sc.entries)) if poisson_total else sc.entries
        return _generate(sc, rng, max(n, 1)).measured.contents

    n_workers = _worker_count(workers)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            counts = list(pool.map(measured_counts, seeds))
    else:
        counts = [measured_counts(seed) for seed in seeds]
    g_matrix = np.vstack(counts)

    first = Histogram.from_counts(sc.meas_axis, counts[0])
    order = run(R, first, policy).stopped_at

    # batched content-only iteration: one row per experiment
    a = R.matrix
    f0 = g_matrix @ (a / R.k_factor)          # rows of K⁻¹Aᵀg
    im = np.eye(a.shape[1]) - (a.T @ a) / R.k_factor  # symmetric
    f = f0.copy()
    for _ in range(order):
        f = f @ im + f0
    return EnsembleStats(
        order=order,
        mean=f.mean(axis=0),
        covariance=np.cov(f, rowvar=False),
        n_experiments=n_experiments,
    )
