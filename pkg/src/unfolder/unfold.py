"""Regularized linear unfolding by damped fixed-point iteration.

Starting from the matched estimate ``f0 = K⁻¹ Aᵀ g`` the iteration

    f_{N+1} = f_N + (f0 - K⁻¹ AᵀA f_N)

converges, for a non-negative response A with K at least the largest column
sum of AᵀA, to the best reconstructable part of the true distribution (the
truth minus its component in the null space of A).  The same recursion
applied to a square root E of the measurement covariance propagates
statistical errors exactly: ``C_N = E_N E_Nᵀ`` is the covariance of ``f_N``.

Three error measures are tracked per iteration order N:

* a bias bound, falling as ``1/(N+2)``,
* the integrated statistical error ``sum_i sqrt(C_N[i, i])``, non-decreasing,
* a systematic bound, growing with the harmonic number ``H_{N+1}``.

The iteration order is the only regularization parameter; the trade-off
between the falling and the growing terms fixes where to stop, and
:class:`StoppingPolicy` implements the supported rules.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DecompositionError, DimensionError, NumericalFailureError
from .histogram import Histogram
from .response import ResponseMatrix

DEFAULT_MAX_ITERATIONS = 10000

# consecutive non-improving iterations that confirm a minimum of the total
# error budget
MIN_TOTAL_PATIENCE = 10


def harmonic_number(m: int) -> float:
    """H_m = sum_{k=1..m} 1/k, exactly as a compensated sum; H_0 = 0."""
    return math.fsum(1.0 / k for k in range(1, int(m) + 1))


def l2_density_norm(masses, volumes) -> float:
    """L2 norm of the density a mass vector represents.

    With mass m_i on a bin of volume v_i the density is m_i / v_i and the
    squared norm integrates to sum(m_i^2 / v_i).
    """
    m = np.asarray(masses, dtype=np.float64)
    v = np.asarray(volumes, dtype=np.float64)
    return float(np.sqrt(np.sum(m * m / v)))


def covariance_sqrt(c) -> np.ndarray:
    """Matrix E with ``E Eᵀ = c``.

    Cholesky when the covariance is positive definite, symmetric
    eigendecomposition square root when only semidefinite.  The square root
    is not unique; any valid E propagates identically.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DecompositionError(f"covariance must be square, got shape {c.shape}")
    scale = float(np.abs(c).max(initial=0.0))
    if not np.allclose(c, c.T, atol=1e-12 * max(scale, 1.0)):
        raise DecompositionError("covariance must be symmetric")
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(0.5 * (c + c.T))
    if w.min(initial=0.0) < -1e-9 * max(scale, 1.0):
        raise DecompositionError(
            f"covariance has negative eigenvalue {w.min():.3g}")
    return v * np.sqrt(np.clip(w, 0.0, None))[None, :]


@dataclass(frozen=True)
class IterateState:
    """State of the unfolding iteration at order `n`.

    ``f_n`` is the current unfolded mass estimate, ``e_n`` the propagated
    covariance square root (``covariance = e_n @ e_n.T``).  ``f0``/``e0`` are
    the first iterates and ``m0`` the operator ``K⁻¹AᵀA``; together they
    define the recursion.  ``volumes`` holds the true-axis bin volumes used
    by the density norms, ``delta_g`` an optional systematic offset of the
    measured input and ``delta_f0`` its image ``K⁻¹Aᵀ delta_g``.
    """

    n: int
    f_n: np.ndarray
    e_n: np.ndarray
    f0: np.ndarray
    e0: np.ndarray
    m0: np.ndarray
    volumes: np.ndarray
    delta_g: np.ndarray | None = None
    delta_f0: np.ndarray | None = None

    @property
    def covariance(self) -> np.ndarray:
        return self.e_n @ self.e_n.T


@dataclass(frozen=True)
class ErrorBudget:
    """Error summary of one iteration order.

    `bias_bound` and `syst_bound` bound the per-bin average deviation
    (density units, worst bin volume); `stat_integral` is the summed per-bin
    statistical error and `stat_fraction` its ratio to the summed absolute
    content.  `total` combines the three on a common scale: per-bin bounds
    are multiplied by the bin count before adding the integrated
    statistical term.
    """

    n: int
    bias_bound: float
    stat_integral: float
    stat_fraction: float
    syst_bound: float
    total: float

    CSV_HEADER = "n,bias_bound,stat_integral,stat_fraction,syst_bound,total"

    def csv_row(self) -> str:
        return (f"{self.n},{self.bias_bound!r},{self.stat_integral!r},"
                f"{self.stat_fraction!r},{self.syst_bound!r},{self.total!r}")


@dataclass(frozen=True)
class StoppingPolicy:
    """Rule deciding the final iteration order.

    * ``fixed(N)`` stops at order N;
    * ``stat_fraction(t)`` stops at the smallest order whose integrated
      statistical error reaches fraction t of the summed absolute content;
    * ``min_total()`` stops at the order minimizing ``ErrorBudget.total``,
      confirmed after 10 consecutive non-improving iterations.

    `max_iterations` caps the order in all cases; a run that hits the cap
    before its rule fires is flagged as truncated.
    """

    rule: str
    order: int | None = None
    threshold: float | None = None
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if self.rule not in ("fixed", "stat_fraction", "min_total"):
            raise ValueError(f"unknown stopping rule {self.rule!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.rule == "fixed":
            if self.order is None or self.order < 0:
                raise ValueError("fixed rule needs an order >= 0")
        if self.rule == "stat_fraction":
            if self.threshold is None or not 0.0 < self.threshold < 1.0:
                raise ValueError("stat_fraction threshold must be in (0, 1)")

    @classmethod
    def fixed(cls, order, max_iterations=DEFAULT_MAX_ITERATIONS):
        return cls("fixed", order=int(order), max_iterations=max_iterations)

    @classmethod
    def stat_fraction(cls, threshold, max_iterations=DEFAULT_MAX_ITERATIONS):
        return cls("stat_fraction", threshold=float(threshold),
                   max_iterations=max_iterations)

    @classmethod
    def min_total(cls, max_iterations=DEFAULT_MAX_ITERATIONS):
        return cls("min_total", max_iterations=max_iterations)


@dataclass(frozen=True)
class UnfoldResult:
    """Outcome of :func:`run`: the unfolded histogram, the per-iteration
    error budgets, the stopping order, and whether the iteration cap cut
    the policy short."""

    result: Histogram
    trace: tuple
    stopped_at: int
    truncated: bool


def init(R: ResponseMatrix, g: Histogram, syst=None, covariance=None) -> IterateState:
    """First iterate ``f0 = K⁻¹Aᵀg`` with its covariance square root.

    `g` must carry statistical errors.  With only per-bin errors the input
    covariance is diagonal and its square root trivial; a full (PSD)
    `covariance` matrix may be passed instead and is decomposed with
    :func:`covariance_sqrt`.  `syst` is the per-bin systematic offset of the
    measured histogram, used by the systematic bound.
    """
    if g.axis != R.meas_axis:
        raise DimensionError("measured histogram is not on the response's measured axis")
    a = R.matrix
    bt = a.T / R.k_factor  # K⁻¹Aᵀ
    if covariance is not None:
        e_meas = covariance_sqrt(covariance)
    else:
        if g.stat_err is None:
            raise ValueError("measured histogram carries no statistical errors")
        e_meas = np.diag(g.stat_err)
    f0 = bt @ g.contents
    e0 = bt @ e_meas
    m0 = bt @ a
    delta_g = None
    delta_f0 = None
    if syst is not None:
        delta_g = np.asarray(syst, dtype=np.float64)
        if delta_g.shape != (R.meas_axis.nbins,):
            raise DimensionError("systematic offset length does not match the measured axis")
        delta_f0 = bt @ delta_g
    return IterateState(n=0, f_n=f0, e_n=e0, f0=f0, e0=e0, m0=m0,
                        volumes=R.true_axis.widths, delta_g=delta_g,
                        delta_f0=delta_f0)


def step(s: IterateState) -> IterateState:
    """One iteration of both recursions; returns the order n+1 state."""
    f = s.f_n + (s.f0 - s.m0 @ s.f_n)
    e = s.e_n + (s.e0 - s.m0 @ s.e_n)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(e))):
        raise NumericalFailureError(
            f"non-finite values at iteration order {s.n + 1}", order=s.n + 1)
    return replace(s, n=s.n + 1, f_n=f, e_n=e)


def bias_bound(s: IterateState, bin_volume: float) -> float:
    """Bound on the residual per-bin average deviation from the limit.

    ``(1/sqrt(bin_volume)) * (1/(n+2)) * ||f||_2`` with the unknown true
    density norm replaced by the norm of the current iterate; the
    substitution is tight for large n and approximate early on.
    """
    if bin_volume <= 0:
        raise ValueError("bin_volume must be positive")
    return (1.0 / math.sqrt(bin_volume)) / (s.n + 2) \
        * l2_density_norm(s.f_n, s.volumes)


def syst_bound(s: IterateState, R: ResponseMatrix, delta_g, bin_volume: float) -> float:
    """Bound on the propagated systematic error at order n.

    ``(1/sqrt(bin_volume)) * H_{n+1} * ||K⁻¹Aᵀ delta_g||_2``; the harmonic
    number equals digamma(n+2) plus the Euler constant and grows like
    1 + log(n+1).
    """
    if bin_volume <= 0:
        raise ValueError("bin_volume must be positive")
    h = R.transpose_apply(np.asarray(delta_g, dtype=np.float64)) / R.k_factor
    return (1.0 / math.sqrt(bin_volume)) * harmonic_number(s.n + 1) \
        * l2_density_norm(h, s.volumes)


def stat_summary(s: IterateState):
    """Per-bin statistical errors, their integral, and the integral's
    fraction of the summed absolute content."""
    per_bin = np.sqrt(np.einsum("ij,ij->i", s.e_n, s.e_n))
    integral = float(per_bin.sum())
    denom = float(np.abs(s.f_n).sum())
    fraction = math.inf if denom == 0.0 else integral / denom
    return per_bin, integral, fraction


class _Harmonic:
    """Kahan-compensated running harmonic number."""

    def __init__(self):
        self.value = 0.0
        self._c = 0.0

    def add(self, term):
        t = term - self._c
        new = self.value + t
        self._c = (new - self.value) - t
        self.value = new


def _budget(s: IterateState, nx, min_volume, syst_coeff, h_value) -> ErrorBudget:
    per_bin, integral, fraction = stat_summary(s)
    bias = (1.0 / math.sqrt(min_volume)) / (s.n + 2) \
        * l2_density_norm(s.f_n, s.volumes)
    syst = (1.0 / math.sqrt(min_volume)) * h_value * syst_coeff
    return ErrorBudget(
        n=s.n,
        bias_bound=bias,
        stat_integral=integral,
        stat_fraction=fraction,
        syst_bound=syst,
        total=bias * nx + integral + syst * nx,
    )


def run(R: ResponseMatrix, g: Histogram, policy: StoppingPolicy,
        syst=None, covariance=None) -> UnfoldResult:
    """Iterate until the stopping policy fires and assemble the result.

    The returned histogram carries the unfolded contents, per-bin
    statistical errors from the propagated covariance, the per-bin
    systematic bound (when a systematic offset was given) and the
    ``unfolded`` flag.  The trace records one :class:`ErrorBudget` per
    executed order, including order 0.  Scalar budgets use the smallest
    true-bin volume, the worst case on a non-uniform axis.
    """
    state = init(R, g, syst=syst, covariance=covariance)
    nx = R.true_axis.nbins
    min_volume = float(state.volumes.min())
    syst_coeff = 0.0
    if state.delta_f0 is not None:
        syst_coeff = l2_density_norm(state.delta_f0, state.volumes)
    harmonic = _Harmonic()
    harmonic.add(1.0)  # H_1 at order 0

    cap = policy.max_iterations
    budgets = [_budget(state, nx, min_volume, syst_coeff, harmonic.value)]
    truncated = False

    def advance(s):
        s = step(s)
        harmonic.add(1.0 / (s.n + 1))
        budgets.append(_budget(s, nx, min_volume, syst_coeff, harmonic.value))
        return s

    if policy.rule == "fixed":
        target = min(policy.order, cap)
        while state.n < target:
            state = advance(state)
        truncated = policy.order > cap
        final = state
    elif policy.rule == "stat_fraction":
        while budgets[-1].stat_fraction < policy.threshold and state.n < cap:
            state = advance(state)
        truncated = budgets[-1].stat_fraction < policy.threshold
        final = state
    else:  # min_total
        best_n, best_total, best_state = 0, budgets[0].total, state
        while state.n < cap and state.n - best_n < MIN_TOTAL_PATIENCE:
            state = advance(state)
            if budgets[-1].total < best_total:
                best_n, best_total, best_state = state.n, budgets[-1].total, state
        truncated = state.n - best_n < MIN_TOTAL_PATIENCE
        final = best_state
    if truncated:
        warnings.warn(
            f"stopping policy did not fire within {cap} iterations; "
            "returning the best order examined", RuntimeWarning)

    per_bin, _, _ = stat_summary(final)
    syst_err = None
    if state.delta_f0 is not None:
        # per-bin mass bound: bin volume times the per-bin average bound
        syst_err = np.sqrt(final.volumes) * harmonic_number(final.n + 1) * syst_coeff
    result = Histogram(R.true_axis, final.f_n, stat_err=per_bin,
                       syst_err=syst_err, kind=g.kind, unfolded=True)
    return UnfoldResult(result=result, trace=tuple(budgets),
                        stopped_at=final.n, truncated=truncated)
