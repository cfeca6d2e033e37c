"""Continuous-Poisson model for sums of log probabilities.

For ``x = -sum(ln p_i)`` with ``p_i`` uniform on (0, 1] the mean and the
variance both equal the chain length ``n``.  The histogram of ``x`` is
modelled by ``n**x * exp(-x) / Gamma(x + 1)``, evaluated on a scaled and
shifted abscissa and with a free vertical normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .sampling import Rand48

_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

MIN_BIN_COUNT = 5


class FitError(ValueError):
    """The histogram does not carry enough information for a fit."""


def _lanczos_log_gamma(x: np.ndarray) -> np.ndarray:
    # Valid for x >= 0.5.
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS[0])
    for k, c in enumerate(_LANCZOS[1:], start=1):
        acc = acc + c / (z + k)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def log_gamma(x):
    """ln Gamma(x) for x > 0 (Lanczos, g=7, with reflection below 1/2).

    Accepts scalars or arrays.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise ValueError("log_gamma is defined here only for x > 0")
    out = np.empty_like(arr)
    hi = arr >= 0.5
    out[hi] = _lanczos_log_gamma(arr[hi])
    lo = ~hi
    if np.any(lo):
        xl = arr[lo]
        # Gamma(x) Gamma(1-x) = pi / sin(pi x); sin(pi x) > 0 on (0, 1/2).
        out[lo] = math.log(math.pi) - np.log(np.sin(math.pi * xl)) - _lanczos_log_gamma(1.0 - xl)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CPoissModel:
    lam: float
    x_scale: float = 1.0
    x_shift: float = 0.0
    norm: float = 1.0

    def __post_init__(self):
        if not (self.lam > 0 and self.x_scale > 0 and self.norm > 0):
            raise ValueError("lam, x_scale and norm must be positive")


def cpoiss_density(x, model: CPoissModel):
    """``norm * lam**u * exp(-u) / Gamma(u + 1)`` with ``u = x_scale * (x + x_shift)``.

    Zero where ``u < 0``.
    """
    arr = np.asarray(x, dtype=np.float64)
    u = model.x_scale * (arr + model.x_shift)
    inside = u >= 0
    out = np.zeros_like(u)
    ui = u[inside]
    out[inside] = model.norm * np.exp(ui * math.log(model.lam) - ui - log_gamma(ui + 1.0))
    return float(out) if out.ndim == 0 else out


def poiss_discrete(m: int, n: float) -> float:
    """``n**m * exp(-m) / m!`` for integer m."""
    return math.exp(m * math.log(n) - m - math.lgamma(m + 1))


@dataclass
class SumLogSample:
    n: int
    p_min: float
    p_max: float
    values: np.ndarray
    edges: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def rebin(self, bins) -> "SumLogSample":
        counts, edges = np.histogram(self.values, bins=bins)
        return replace(self, edges=edges, counts=counts)


def sample_sumlog(
    n: int,
    p_min: float,
    p_max: float,
    count: int,
    rng: Rand48,
    bins="fd",
) -> SumLogSample:
    """``count`` draws of ``-sum(ln p_i)`` with ``p_i`` uniform on (p_min, p_max]."""
    if not (0 <= p_min < p_max <= 1):
        raise ValueError(f"need 0 <= p_min < p_max <= 1, got [{p_min}, {p_max}]")
    if n < 1 or count < 1:
        raise ValueError("n and count must be >= 1")
    values = np.empty(count)
    rows_per_block = max(1, (1 << 20) // n)
    done = 0
    width = p_max - p_min
    while done < count:
        rows = min(rows_per_block, count - done)
        # u in [0, 1) maps to p in (p_min, p_max], so p = 0 never occurs.
        p = p_max - width * rng.uniforms(rows * n).reshape(rows, n)
        values[done : done + rows] = -np.log(p).sum(axis=1)
        done += rows
    counts, edges = np.histogram(values, bins=bins)
    return SumLogSample(n, p_min, p_max, values, edges, counts)


def shift_for_pmax(model: CPoissModel, n: int, p_max: float) -> CPoissModel:
    if not (0 < p_max <= 1):
        raise ValueError("p_max must lie in (0, 1]")
    return replace(model, x_shift=n * math.log(p_max))


def noise_elongation_shift(n: int, p_mean: float, e: float) -> tuple[float, float]:
    """Mean log-product before and after uniform [-e, e] noise (sd e/sqrt(3))."""
    if p_mean <= 0 or e < 0:
        raise ValueError("need p_mean > 0 and e >= 0")
    sigma_e = e / math.sqrt(3.0)
    return n * math.log(p_mean), n * math.log(p_mean + sigma_e)


def golden_section(f, lo: float, hi: float, tol: float = 1e-7, max_iter: int = 200) -> float:
    """Minimizer of a unimodal ``f`` on [lo, hi]."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (abs(a) + abs(b) + 1e-12):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


@dataclass
class CPoissFit:
    model: CPoissModel
    chi2: float
    dof: int
    bins_used: int

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else math.inf


def _usable(sample: SumLogSample) -> tuple[np.ndarray, np.ndarray]:
    keep = sample.counts >= MIN_BIN_COUNT
    if np.count_nonzero(keep) < MIN_BIN_COUNT:
        raise FitError(
            f"only {np.count_nonzero(keep)} bins with >= {MIN_BIN_COUNT} counts; need {MIN_BIN_COUNT}"
        )
    return sample.centers[keep], sample.counts[keep].astype(np.float64)


def _norm_and_chi2(shape: np.ndarray, counts: np.ndarray) -> tuple[float, float]:
    # Neyman weights (variance = observed count); norm minimizes chi2 in closed form.
    denom = np.sum(shape * shape / counts)
    if not denom > 0:
        return 1.0, math.inf
    norm = float(np.sum(shape) / denom)
    resid = counts - norm * shape
    return norm, float(np.sum(resid * resid / counts))


def fit_cpoiss_shared(
    samples: Sequence[SumLogSample],
    lams: Sequence[float] | None = None,
    scale_bounds: tuple[float, float] = (0.02, 5.0),
    grid_points: int = 80,
) -> list[CPoissFit]:
    """Fit one x_scale shared by all histograms; each gets its own norm.

    ``lam`` defaults to each sample's chain length and is never fitted;
    the shift is fixed at ``n * ln(p_max)``.
    """
    lams = [s.n for s in samples] if lams is None else list(lams)
    data = [_usable(s) for s in samples]
    bases = [shift_for_pmax(CPoissModel(lam), s.n, s.p_max) for s, lam in zip(samples, lams)]

    def total(log_scale: float) -> float:
        scale = math.exp(log_scale)
        acc = 0.0
        for base, (x, c) in zip(bases, data):
            shape = cpoiss_density(x, replace(base, x_scale=scale))
            acc += _norm_and_chi2(shape, c)[1]
        return acc

    lo, hi = math.log(scale_bounds[0]), math.log(scale_bounds[1])
    grid = np.linspace(lo, hi, grid_points)
    scores = [total(g) for g in grid]
    k = int(np.argmin(scores))
    step = grid[1] - grid[0]
    best = golden_section(total, max(lo, grid[k] - step), min(hi, grid[k] + step))
    scale = math.exp(best)

    fits = []
    for base, (x, c) in zip(bases, data):
        model = replace(base, x_scale=scale)
        norm, chi2 = _norm_and_chi2(cpoiss_density(x, model), c)
        fits.append(CPoissFit(replace(model, norm=norm), chi2, len(c) - 2, len(c)))
    return fits


def fit_cpoiss(sample: SumLogSample, lam: float | None = None) -> CPoissFit:
    return fit_cpoiss_shared([sample], None if lam is None else [lam])[0]


def model_mode(model: CPoissModel) -> float:
    """Abscissa (in x = -sum ln p) where the model density peaks."""

    def neg_log_density(u: float) -> float:
        return -(u * math.log(model.lam) - u - math.lgamma(u + 1.0))

    # The peak in u solves digamma(u + 1) = ln(lam) - 1; it lies below lam.
    u_star = golden_section(neg_log_density, 0.0, max(1.0, model.lam), tol=1e-10)
    if neg_log_density(0.0) <= neg_log_density(u_star):
        u_star = 0.0
    return u_star / model.x_scale - model.x_shift


def sample_skewness(values: np.ndarray) -> float:
    d = values - values.mean()
    return float(np.mean(d**3) / np.mean(d**2) ** 1.5)


def histogram_rows(sample: SumLogSample, fit: CPoissFit | None) -> list[tuple[float, int, float]]:
    """(bin_center, count, model value in count units) per bin."""
    centers = sample.centers
    model = cpoiss_density(centers, fit.model) if fit else np.full(centers.shape, math.nan)
    return [(float(c), int(k), float(m)) for c, k, m in zip(centers, sample.counts, model)]
